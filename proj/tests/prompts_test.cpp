#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <iterator>

#include "c2c/dataset.hpp"
#include "c2c/error.hpp"
#include "c2c/prompts.hpp"

namespace c2c {
namespace {

std::string golden(const std::string& name) {
  std::ifstream in(std::string(C2C_GOLDEN_DIR) + "/" + name, std::ios::binary);
  EXPECT_TRUE(in.good()) << name;
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

McqItem boiling() {
  return {"q1", "What is the boiling point of water at sea level?", {"90 C", "100 C", "110 C", "120 C"}, 'B',
          "physics"};
}

std::vector<McqItem> shots() {
  return {{"s1", "Which force keeps planets in orbit?", {"Friction", "Gravity", "Magnetism", "Tension"}, 'B', "physics"},
          {"s2", "What unit measures electric current?", {"Ampere", "Volt", "Ohm", "Watt"}, 'A', "physics"}};
}

ErrorKind kind_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  ADD_FAILURE() << "no error thrown";
  return ErrorKind::kInvalidInput;
}

TEST(RenderPromptTest, AllTemplatesMatchGoldenFilesByteForByte) {
  EXPECT_EQ(render_prompt(boiling(), PromptTemplate::kNonCot), golden("non_cot.txt"));
  EXPECT_EQ(render_prompt(boiling(), PromptTemplate::kCot), golden("cot.txt"));
  EXPECT_EQ(render_prompt(boiling(), PromptTemplate::kT2TSharer), golden("t2t_sharer.txt"));
  EXPECT_EQ(render_prompt(boiling(), PromptTemplate::kOracleFewShot, shots()), golden("oracle_fewshot.txt"));
}

TEST(RenderPromptTest, TemplateMarkers) {
  const std::string non_cot = render_prompt(boiling(), PromptTemplate::kNonCot);
  const std::string last_line = non_cot.substr(non_cot.rfind('\n') + 1);
  EXPECT_EQ(last_line, "The correct answer is");
  EXPECT_NE(render_prompt(boiling(), PromptTemplate::kT2TSharer).find("Do NOT directly solve"), std::string::npos);
  EXPECT_NE(render_prompt(boiling(), PromptTemplate::kCot).find("Let's think step by step"), std::string::npos);
}

TEST(RenderPromptTest, ZeroShotOracleHasOnlyTheQuestionBlock) {
  const std::string s = render_prompt(boiling(), PromptTemplate::kOracleFewShot);
  EXPECT_EQ(s.find("Shot"), std::string::npos);
  EXPECT_TRUE(s.starts_with("The following are single choice questions (with answers) about physics.\n\nQuestion:\n"));
}

TEST(RenderPromptTest, MissingFieldsAreTemplateErrors) {
  McqItem no_q = boiling();
  no_q.question.clear();
  McqItem no_subject = boiling();
  no_subject.subject.clear();
  McqItem no_choices = boiling();
  no_choices.choices.clear();
  EXPECT_EQ(kind_of([&] { render_prompt(no_q, PromptTemplate::kT2TSharer); }), ErrorKind::kTemplateError);
  EXPECT_EQ(kind_of([&] { render_prompt(no_subject, PromptTemplate::kOracleFewShot); }), ErrorKind::kTemplateError);
  EXPECT_EQ(kind_of([&] { render_prompt(no_choices, PromptTemplate::kNonCot); }), ErrorKind::kTemplateError);
  // The sharer prompt never shows choices, so it does not need them.
  EXPECT_NO_THROW(render_prompt(no_choices, PromptTemplate::kT2TSharer));
}

TEST(RenderPromptTest, TemplateNamesRoundTrip) {
  for (auto t : {PromptTemplate::kNonCot, PromptTemplate::kCot, PromptTemplate::kT2TSharer,
                 PromptTemplate::kOracleFewShot})
    EXPECT_EQ(parse_prompt_template(to_string(t)), t);
  EXPECT_FALSE(parse_prompt_template("zero_shot").has_value());
}

TEST(ExtractAnswerTest, Examples) {
  EXPECT_EQ(extract_answer("The correct answer is B."), 'B');
  EXPECT_EQ(extract_answer("A"), 'A');
  EXPECT_EQ(extract_answer("I am not sure."), std::nullopt);
}

TEST(ExtractAnswerTest, Variants) {
  EXPECT_EQ(extract_answer("Reasoning first. The correct answer is: (C)"), 'C');
  EXPECT_EQ(extract_answer("the correct answer is d"), 'D');
  EXPECT_EQ(extract_answer(" C"), 'C');
  EXPECT_EQ(extract_answer("(B)"), 'B');
  EXPECT_EQ(extract_answer("D. because"), 'D');
  EXPECT_EQ(extract_answer("A cat sat"), std::nullopt);
  EXPECT_EQ(extract_answer("The correct answer is E"), std::nullopt);
  EXPECT_EQ(extract_answer("The correct answer is E", 5), 'E');
  EXPECT_EQ(extract_answer(""), std::nullopt);
  // The explicit statement wins over a leading letter.
  EXPECT_EQ(extract_answer("A. no wait. The correct answer is C"), 'C');
}

TEST(ExtractAnswerTest, TotalAndDeterministicOnArbitraryBytes) {
  uint64_t state = 7;
  for (int i = 0; i < 500; ++i) {
    std::string s;
    const int len = static_cast<int>(state % 40);
    for (int j = 0; j < len; ++j) {
      state = state * 6364136223846793005ULL + 1442695040888963407ULL;
      s += static_cast<char>(state >> 56);
    }
    std::optional<char> a, b;
    EXPECT_NO_THROW(a = extract_answer(s));
    b = extract_answer(s);
    EXPECT_EQ(a, b);
    if (a) EXPECT_TRUE(*a >= 'A' && *a <= 'D');
  }
}

TEST(McqDatasetTest, ThreeValidJsonlLines) {
  const std::string text =
      R"({"id":"a","question":"q1","choices":["x","y","z","w"],"answer":"A"})"
      "\n"
      R"({"id":"b","question":"q2","choices":{"A":"x","B":"y","C":"z","D":"w"},"answer":"D","subject":"s"})"
      "\n\n"
      R"({"question":"q3","choices":["x","y"],"answer":"B"})"
      "\n";
  const McqDataset d = parse_mcq_jsonl(text);
  ASSERT_EQ(d.items.size(), 3u);
  EXPECT_EQ(d.dropped, 0);
  EXPECT_EQ(d.items[1].choices[3], "w");
  EXPECT_EQ(d.items[1].answer, 'D');
  EXPECT_EQ(d.items[1].subject, "s");
  EXPECT_EQ(d.items[2].id, "4");  // line number when absent
}

TEST(McqDatasetTest, AnswerOutsideChoicesIsDataErrorWithLine) {
  const std::string text = R"({"question":"q","choices":["a","b","c","d"],"answer":"A"})"
                           "\n"
                           R"({"question":"q","choices":["a","b","c","d"],"answer":"E"})";
  try {
    parse_mcq_jsonl(text);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kDataError);
    EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos);
  }
}

TEST(McqDatasetTest, FlaggedRecordsAreDropped) {
  const std::string text = R"({"question":"q","choices":["a","b"],"answer":"A"})"
                           "\n"
                           R"({"question":"q","choices":["a","b"],"answer":"","no_correct_answer":true})"
                           "\n"
                           R"({"question":"q","choices":["a","b"],"answer":"A","error_type":"no_correct_answer"})";
  const McqDataset d = parse_mcq_jsonl(text);
  EXPECT_EQ(d.items.size(), 1u);
  EXPECT_EQ(d.dropped, 2);
}

TEST(McqDatasetTest, MalformedJsonlRecords) {
  for (const std::string bad : {std::string("{not json"), std::string("[1,2]"),
                                std::string(R"({"question":"q","choices":"ab","answer":"A"})"),
                                std::string(R"({"question":"","choices":["a","b"],"answer":"A"})"),
                                std::string(R"({"question":"q","choices":["a"],"answer":"A"})"),
                                std::string(R"({"question":"q","choices":["a","b"],"answer":"AB"})"),
                                std::string(R"({"question":"q","choices":{"A":"x","C":"y"},"answer":"A"})")})
    EXPECT_EQ(kind_of([&] { parse_mcq_jsonl(bad); }), ErrorKind::kDataError) << bad;
}

TEST(McqDatasetTest, CsvWithQuotingAndFlags) {
  const std::string text =
      "id,question,A,B,C,D,answer,no_correct_answer\r\n"
      "1,\"Which, with comma?\",x,\"y \"\"quoted\"\"\",z,w,B,0\r\n"
      "2,\"multi\nline\",x,y,z,w,C,\n"
      "3,q,x,y,z,w,A,true\n";
  const McqDataset d = parse_mcq_csv(text);
  ASSERT_EQ(d.items.size(), 2u);
  EXPECT_EQ(d.dropped, 1);
  EXPECT_EQ(d.items[0].question, "Which, with comma?");
  EXPECT_EQ(d.items[0].choices[1], "y \"quoted\"");
  EXPECT_EQ(d.items[1].question, "multi\nline");
  EXPECT_EQ(d.items[1].answer, 'C');
}

TEST(McqDatasetTest, CsvErrorsNameTheStartingLine) {
  const std::string text = "question,A,B,answer\n\"two\nlines\",x,y,A\nq,x,y,Z\n";
  try {
    parse_mcq_csv(text);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kDataError);
    EXPECT_NE(std::string(e.what()).find("line 4"), std::string::npos) << e.what();
  }
  EXPECT_EQ(kind_of([] { parse_mcq_csv("question,B,answer\nq,x,A\n"); }), ErrorKind::kDataError);
  EXPECT_EQ(kind_of([] { parse_mcq_csv("question,A,B,answer\nq,x,A\n"); }), ErrorKind::kDataError);
  EXPECT_EQ(kind_of([] { parse_csv("a,\"open\n"); }), ErrorKind::kDataError);
}

TEST(McqDatasetTest, LoadChecksFormatFileAndDuplicateIds) {
  EXPECT_EQ(format_from_path("x.jsonl"), DatasetFormat::kJsonl);
  EXPECT_EQ(format_from_path("x.csv"), DatasetFormat::kCsv);
  EXPECT_EQ(kind_of([] { format_from_path("x.txt"); }), ErrorKind::kConfigError);
  EXPECT_EQ(kind_of([] { load_mcq_dataset("/nonexistent/x.jsonl", DatasetFormat::kJsonl); }),
            ErrorKind::kConfigError);
  const auto path = std::filesystem::temp_directory_path() / "c2c_dup_ids.jsonl";
  {
    std::ofstream out(path);
    out << R"({"id":"a","question":"q","choices":["a","b"],"answer":"A"})" << "\n"
        << R"({"id":"a","question":"r","choices":["a","b"],"answer":"B"})" << "\n";
  }
  EXPECT_EQ(kind_of([&] { load_mcq_dataset(path.string(), DatasetFormat::kJsonl); }), ErrorKind::kDataError);
  std::filesystem::remove(path);
}

}  // namespace
}  // namespace c2c
