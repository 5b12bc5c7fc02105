#include "c2c/dataset.hpp"

#include <algorithm>
#include <fstream>
#include <iterator>
#include <map>
#include <sstream>

#include "c2c/error.hpp"
#include "json.hpp"

namespace c2c {

DatasetFormat format_from_path(const std::string& path) {
  if (path.ends_with(".jsonl")) return DatasetFormat::kJsonl;
  if (path.ends_with(".csv")) return DatasetFormat::kCsv;
  fail(ErrorKind::kConfigError, "cannot infer the dataset format of " + path + " (use .jsonl or .csv)");
}

namespace {

[[noreturn]] void bad(int line, const std::string& what) {
  fail(ErrorKind::kDataError, "line " + std::to_string(line) + ": " + what);
}

// Shared checks once a record's fields are known. Returns false for a record
// flagged as having no correct answer.
bool finish_item(McqItem& item, const std::string& answer, bool no_correct, int line) {
  if (no_correct) return false;
  if (item.id.empty()) item.id = std::to_string(line);
  if (item.question.empty()) bad(line, "missing question");
  if (item.choices.size() < 2 || item.choices.size() > 26) bad(line, "expected 2 to 26 choices");
  if (answer.size() != 1) bad(line, "answer must be a single option letter");
  const char a = answer[0];
  if (a < 'A' || a >= option_letter(static_cast<int>(item.choices.size())))
    bad(line, "answer " + answer + " is not one of the declared choices");
  item.answer = a;
  return true;
}

}  // namespace

McqDataset parse_mcq_jsonl(const std::string& text) {
  McqDataset out;
  std::istringstream in(text);
  std::string raw;
  int line = 0;
  while (std::getline(in, raw)) {
    ++line;
    if (raw.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(raw);
    } catch (const nlohmann::json::exception& e) {
      bad(line, std::string("invalid JSON: ") + e.what());
    }
    if (!j.is_object()) bad(line, "record is not an object");
    McqItem item;
    std::string answer;
    bool no_correct = false;
    try {
      if (j.contains("id")) item.id = j["id"].is_string() ? j["id"].get<std::string>() : j["id"].dump();
      item.question = j.value("question", "");
      item.subject = j.value("subject", "");
      answer = j.value("answer", "");
      no_correct = j.value("no_correct_answer", false) || j.value("error_type", "") == "no_correct_answer";
      if (j.contains("choices")) {
        const auto& c = j["choices"];
        if (c.is_array()) {
          for (const auto& v : c) item.choices.push_back(v.get<std::string>());
        } else if (c.is_object()) {
          for (int i = 0; i < static_cast<int>(c.size()); ++i) {
            const std::string key(1, option_letter(i));
            if (!c.contains(key)) bad(line, "choices object lacks " + key);
            item.choices.push_back(c[key].get<std::string>());
          }
        } else {
          bad(line, "choices must be an array or an object");
        }
      }
    } catch (const nlohmann::json::exception& e) {
      bad(line, std::string("wrong field type: ") + e.what());
    }
    if (finish_item(item, answer, no_correct, line))
      out.items.push_back(std::move(item));
    else
      ++out.dropped;
  }
  return out;
}

std::vector<CsvRecord> parse_csv(const std::string& text) {
  std::vector<CsvRecord> out;
  CsvRecord rec;
  std::string field;
  bool quoted = false, field_started = false;
  int line = 1;
  rec.line = 1;
  auto end_field = [&] {
    rec.fields.push_back(field);
    field.clear();
    field_started = false;
  };
  auto end_record = [&] {
    end_field();
    if (!(rec.fields.size() == 1 && rec.fields[0].empty())) out.push_back(rec);
    rec = {};
    rec.line = line;
  };
  for (size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          field += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        if (c == '\n') ++line;
        field += c;
      }
      continue;
    }
    if (c == '"' && !field_started) {
      quoted = true;
      field_started = true;
    } else if (c == ',') {
      end_field();
    } else if (c == '\r' && i + 1 < text.size() && text[i + 1] == '\n') {
      continue;
    } else if (c == '\n') {
      ++line;
      end_record();
    } else {
      field += c;
      field_started = true;
    }
  }
  require(!quoted, ErrorKind::kDataError, "line " + std::to_string(rec.line) + ": unterminated quoted field");
  if (!field.empty() || !rec.fields.empty()) end_record();
  return out;
}

McqDataset parse_mcq_csv(const std::string& text) {
  McqDataset out;
  const auto records = parse_csv(text);
  if (records.empty()) return out;
  std::map<std::string, size_t> col;
  for (size_t i = 0; i < records[0].fields.size(); ++i) col[records[0].fields[i]] = i;
  require(col.count("question") && col.count("answer") && col.count("A"), ErrorKind::kDataError,
          "line 1: CSV header needs question, answer and choice columns A, B, ...");
  for (size_t r = 1; r < records.size(); ++r) {
    const auto& rec = records[r];
    if (rec.fields.size() != records[0].fields.size())
      bad(rec.line, "expected " + std::to_string(records[0].fields.size()) + " fields, found " +
                        std::to_string(rec.fields.size()));
    auto get = [&](const std::string& name) { return col.count(name) ? rec.fields[col[name]] : std::string(); };
    McqItem item;
    item.id = get("id");
    item.question = get("question");
    item.subject = get("subject");
    for (int i = 0; i < 26 && col.count(std::string(1, option_letter(i))); ++i) {
      const std::string v = get(std::string(1, option_letter(i)));
      if (v.empty()) break;
      item.choices.push_back(v);
    }
    const std::string flag = get("no_correct_answer");
    const bool no_correct = flag == "1" || flag == "true" || flag == "True";
    if (finish_item(item, get("answer"), no_correct, rec.line))
      out.items.push_back(std::move(item));
    else
      ++out.dropped;
  }
  return out;
}

McqDataset load_mcq_dataset(const std::string& path, DatasetFormat format) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), ErrorKind::kConfigError, "cannot open dataset " + path);
  const std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  McqDataset d = format == DatasetFormat::kJsonl ? parse_mcq_jsonl(text) : parse_mcq_csv(text);
  std::map<std::string, int> seen;
  for (const auto& item : d.items)
    require(++seen[item.id] == 1, ErrorKind::kDataError, "duplicate item id " + item.id + " in " + path);
  return d;
}

}  // namespace c2c
