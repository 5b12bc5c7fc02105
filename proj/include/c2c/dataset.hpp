#pragma once

#include <string>
#include <vector>

#include "c2c/prompts.hpp"

namespace c2c {

enum class DatasetFormat { kJsonl, kCsv };

// From the file extension (.jsonl / .csv); throws ConfigError otherwise.
DatasetFormat format_from_path(const std::string& path);

struct McqDataset {
  std::vector<McqItem> items;
  int dropped = 0;  // records flagged as having no correct answer
};

// JSONL: one object per line with question, choices (array, or object keyed
// by letter), answer, optional id and subject, and an optional flag
// "no_correct_answer": true (or "error_type": "no_correct_answer"). Blank lines
// are skipped.
// CSV: a header row naming id, question, A.., answer and optionally subject
// and no_correct_answer; RFC 4180 quoting.
// Malformed records throw DataError naming the 1-based line.
McqDataset load_mcq_dataset(const std::string& path, DatasetFormat format);
McqDataset parse_mcq_jsonl(const std::string& text);
McqDataset parse_mcq_csv(const std::string& text);

// Splits CSV text into records of fields. Each record remembers the line it
// starts on.
struct CsvRecord {
  int line = 0;
  std::vector<std::string> fields;
};
std::vector<CsvRecord> parse_csv(const std::string& text);

}  // namespace c2c
