#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "c2c/pipeline.hpp"
#include "c2c/rng.hpp"
#include "c2c/tokenizer.hpp"
#include "c2c/trainer.hpp"

namespace c2c {

// Synthetic four-choice fact lookup. Each context holds one entity key among
// filler tokens and ends with an answer marker; the answer letter is a fixed
// function of the key. The receiver frame replaces the key with <redacted>,
// so only the sharer can see what the answer depends on.
struct FactTaskConfig {
  int num_keys = 16;  // multiple of 4; every letter owns num_keys / 4 keys
  int num_fillers = 16;
  int context_len = 8;
  int train_items = 2000;
  int heldout_items = 400;  // multiple of 4; balanced over letters
  uint64_t seed = 42;
};

struct FactItem {
  std::vector<int> sharer_context;
  std::vector<int> receiver_context;
  std::vector<int> response;  // answer letter then <eos>
  int key = 0;
  int answer = 0;  // 0..3 for A..D
};

class FactTask {
 public:
  explicit FactTask(const FactTaskConfig& config);

  const FactTaskConfig& config() const noexcept { return config_; }
  int vocab_size() const noexcept { return vocab_size_; }
  int bos() const noexcept { return 2; }
  int eos() const noexcept { return 3; }
  int redacted() const noexcept { return 4; }
  int letter_token(int letter) const noexcept { return 5 + letter; }
  int key_token(int key) const noexcept { return 9 + key; }
  int filler_token(int f) const noexcept { return 9 + config_.num_keys + f; }
  int question_marker() const noexcept { return 9 + config_.num_keys + config_.num_fillers; }
  int answer_marker() const noexcept { return question_marker() + 1; }
  // Letter index for a token, or -1.
  int letter_of(int token) const noexcept;
  int answer_for_key(int key) const { return key_answer_.at(key); }
  std::string token_name(int token) const;

  const std::vector<FactItem>& train_items() const noexcept { return train_; }
  const std::vector<FactItem>& heldout_items() const noexcept { return heldout_; }

  std::vector<TrainSample> train_samples() const;
  // Pretraining corpora supervised on the response only.
  std::vector<LmExample> sharer_corpus() const;
  std::vector<LmExample> receiver_corpus() const;

 private:
  FactItem make_item(int key, Rng& rng) const;

  FactTaskConfig config_;
  int vocab_size_ = 0;
  std::vector<int> key_answer_;
  std::vector<FactItem> train_, heldout_;
};

// Word list behind the toy tokenizers: the prompt-template vocabulary plus a
// small question domain.
const std::vector<std::string>& toy_words();

// Two randomly initialised toy models with distinct tokenizers over
// toy_words(). vocab_size in the configs is replaced by the tokenizer's.
struct ToyPairConfig {
  ToyModelConfig receiver{2, 4, 8, 0, 64, 1};
  ToyModelConfig sharer{3, 4, 12, 0, 96, 2};
};

struct ToyPair {
  explicit ToyPair(const ToyPairConfig& config = {});

  Tokenizer receiver_tokenizer;
  Tokenizer sharer_tokenizer;
  ToyModel<float> receiver;
  ToyModel<float> sharer;

  TextModel receiver_text() const { return {&receiver, &receiver_tokenizer}; }
  TextModel sharer_text() const { return {&sharer, &sharer_tokenizer}; }
};

// A random four-choice question over toy_words().
CommRequest random_toy_request(Rng& rng);

}  // namespace c2c
