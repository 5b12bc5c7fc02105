#pragma once

#include <optional>
#include <string>
#include <vector>

namespace c2c {

struct McqItem {
  std::string id;
  std::string question;
  std::vector<std::string> choices;  // choices[0] is option A
  char answer = 'A';
  std::string subject;
};

// Option letter for index i ('A' + i).
char option_letter(int index);

// "A. text\nB. text..." without a trailing newline.
std::string format_choices(const std::vector<std::string>& choices);

enum class PromptTemplate { kNonCot, kCot, kT2TSharer, kOracleFewShot };

std::optional<PromptTemplate> parse_prompt_template(const std::string& name);
std::string to_string(PromptTemplate t);

// Plain-text evaluation prompts. kOracleFewShot takes `shots` (answered items)
// before the question and needs a subject. Throws TemplateError when a field
// the template uses is empty.
std::string render_prompt(const McqItem& item, PromptTemplate t, const std::vector<McqItem>& shots = {});

// The option letter the response commits to: "The correct answer is X"
// anywhere, else a lone option letter at the start. nullopt means no answer.
std::optional<char> extract_answer(const std::string& response, int num_choices = 4);

}  // namespace c2c
