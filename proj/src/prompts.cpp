#include "c2c/prompts.hpp"

#include <algorithm>
#include <cctype>
#include <regex>

#include "c2c/error.hpp"

namespace c2c {

char option_letter(int index) { return static_cast<char>('A' + index); }

std::string format_choices(const std::vector<std::string>& choices) {
  std::string out;
  for (size_t i = 0; i < choices.size(); ++i) {
    if (i) out += "\n";
    out += option_letter(static_cast<int>(i));
    out += ". " + choices[i];
  }
  return out;
}

std::optional<PromptTemplate> parse_prompt_template(const std::string& name) {
  if (name == "non_cot") return PromptTemplate::kNonCot;
  if (name == "cot") return PromptTemplate::kCot;
  if (name == "t2t_sharer") return PromptTemplate::kT2TSharer;
  if (name == "oracle_fewshot") return PromptTemplate::kOracleFewShot;
  return std::nullopt;
}

std::string to_string(PromptTemplate t) {
  switch (t) {
    case PromptTemplate::kNonCot: return "non_cot";
    case PromptTemplate::kCot: return "cot";
    case PromptTemplate::kT2TSharer: return "t2t_sharer";
    case PromptTemplate::kOracleFewShot: return "oracle_fewshot";
  }
  return "unknown";
}

namespace {

void need(bool ok, const std::string& field, PromptTemplate t) {
  require(ok, ErrorKind::kTemplateError, "template " + to_string(t) + " needs a non-empty " + field);
}

std::string question_block(const McqItem& item) {
  return "Question:\n" + item.question + "\nOptions:\n" + format_choices(item.choices) + "\nAnswer:";
}

}  // namespace

std::string render_prompt(const McqItem& item, PromptTemplate t, const std::vector<McqItem>& shots) {
  need(!item.question.empty(), "question", t);
  switch (t) {
    case PromptTemplate::kNonCot:
      need(!item.choices.empty(), "choice list", t);
      return "Accurately answer the following question:\n\n" + item.question + "\n\nChoices:\n" +
             format_choices(item.choices) +
             "\n\nInstructions:\n"
             "- Carefully read the question and all options.\n"
             "- Select the single most correct answer.\n"
             "- Respond ONLY in the following format: \"The correct answer is A/B/C/D\".\n"
             "- Do not include any explanations, additional text, or punctuation besides the answer.\n"
             "\nThe correct answer is";
    case PromptTemplate::kCot:
      need(!item.choices.empty(), "choice list", t);
      return "Accurately answer the following question:\n\n" + item.question + "\n\nChoices:\n" +
             format_choices(item.choices) +
             "\n\nInstructions:\n"
             "- Carefully read the question and all options.\n"
             "- Let's think step by step and explain your reasoning briefly.\n"
             "- Then give the final answer starting with The correct answer is.\n";
    case PromptTemplate::kT2TSharer:
      return "In one clear sentence, describe the most essential background knowledge needed to answer the "
             "question:\n" +
             item.question + "\nDo NOT directly solve or give answer to the question.\n";
    case PromptTemplate::kOracleFewShot: {
      need(!item.subject.empty(), "subject", t);
      need(!item.choices.empty(), "choice list", t);
      std::string out = "The following are single choice questions (with answers) about " + item.subject + ".\n\n";
      for (size_t i = 0; i < shots.size(); ++i) {
        const McqItem& s = shots[i];
        need(!s.question.empty() && !s.choices.empty(), "shot question and choice list", t);
        out += "Shot " + std::to_string(i + 1) + ":\n" + question_block(s) + " " + std::string(1, s.answer) + "\n\n";
      }
      return out + question_block(item);
    }
  }
  fail(ErrorKind::kTemplateError, "unknown template");
}

std::optional<char> extract_answer(const std::string& response, int num_choices) {
  const char last = option_letter(std::max(1, std::min(num_choices, 26)) - 1);
  static const std::regex primary(R"(The correct answer is:?\s*\(?([A-Z])\b)", std::regex::icase);
  for (auto it = std::sregex_iterator(response.begin(), response.end(), primary); it != std::sregex_iterator(); ++it) {
    const char c = static_cast<char>(std::toupper(static_cast<unsigned char>((*it)[1].str()[0])));
    if (c >= 'A' && c <= last) return c;
  }
  // A bare letter, optionally bracketed or followed by punctuation.
  static const std::regex lone(R"(^\s*\(?([A-Z])\)?(?:[.:,)]|\s*$))");
  std::smatch m;
  if (std::regex_search(response, m, lone)) {
    const char c = m[1].str()[0];
    if (c >= 'A' && c <= last) return c;
  }
  return std::nullopt;
}

}  // namespace c2c
