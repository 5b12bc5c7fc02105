#include "c2c/toy_task.hpp"

#include <algorithm>

#include "c2c/error.hpp"
#include "c2c/rng.hpp"

namespace c2c {

FactTask::FactTask(const FactTaskConfig& config) : config_(config) {
  require(config_.num_keys >= 4 && config_.num_keys % 4 == 0, ErrorKind::kInvalidInput,
          "num_keys must be a positive multiple of 4");
  require(config_.num_fillers >= 1 && config_.context_len >= 4, ErrorKind::kInvalidInput,
          "fact task needs fillers and a context of at least 4 tokens");
  require(config_.heldout_items % 4 == 0 && config_.train_items >= 1, ErrorKind::kInvalidInput,
          "heldout_items must be a multiple of 4");
  vocab_size_ = answer_marker() + 1;

  Rng rng(config_.seed);
  key_answer_.resize(config_.num_keys);
  for (int k = 0; k < config_.num_keys; ++k) key_answer_[k] = k % 4;
  rng.shuffle(key_answer_);

  for (int i = 0; i < config_.train_items; ++i)
    train_.push_back(make_item(static_cast<int>(rng.below(config_.num_keys)), rng));
  // Held-out: every letter equally often, keys cycled within each letter.
  std::vector<std::vector<int>> keys_by_letter(4);
  for (int k = 0; k < config_.num_keys; ++k) keys_by_letter[key_answer_[k]].push_back(k);
  for (int i = 0; i < config_.heldout_items; ++i) {
    const auto& pool = keys_by_letter[i % 4];
    heldout_.push_back(make_item(pool[(i / 4) % pool.size()], rng));
  }
}

FactItem FactTask::make_item(int key, Rng& rng) const {
  FactItem item;
  item.key = key;
  item.answer = key_answer_[key];
  const int slots = config_.context_len - 3;
  const int key_slot = static_cast<int>(rng.below(slots));
  item.sharer_context = {bos(), question_marker()};
  for (int s = 0; s < slots; ++s)
    item.sharer_context.push_back(s == key_slot ? key_token(key)
                                                : filler_token(static_cast<int>(rng.below(config_.num_fillers))));
  item.sharer_context.push_back(answer_marker());
  item.receiver_context = item.sharer_context;
  item.receiver_context[2 + key_slot] = redacted();
  item.response = {letter_token(item.answer), eos()};
  return item;
}

int FactTask::letter_of(int token) const noexcept {
  return token >= letter_token(0) && token <= letter_token(3) ? token - letter_token(0) : -1;
}

std::string FactTask::token_name(int token) const {
  if (token == 0) return "<pad>";
  if (token == 1) return "<unk>";
  if (token == bos()) return "<bos>";
  if (token == eos()) return "<eos>";
  if (token == redacted()) return "<redacted>";
  if (letter_of(token) >= 0) return std::string(1, static_cast<char>('A' + letter_of(token)));
  if (token >= key_token(0) && token < filler_token(0)) return "key" + std::to_string(token - key_token(0));
  if (token >= filler_token(0) && token < question_marker()) return "f" + std::to_string(token - filler_token(0));
  if (token == question_marker()) return "Q:";
  if (token == answer_marker()) return "A:";
  return "<invalid>";
}

std::vector<TrainSample> FactTask::train_samples() const {
  std::vector<TrainSample> out;
  for (const auto& item : train_) out.push_back(make_sample(item.receiver_context, item.response, item.sharer_context));
  return out;
}

std::vector<LmExample> FactTask::sharer_corpus() const {
  std::vector<LmExample> out;
  for (const auto& item : train_) {
    LmExample e{item.sharer_context, config_.context_len};
    e.tokens.insert(e.tokens.end(), item.response.begin(), item.response.end());
    out.push_back(std::move(e));
  }
  return out;
}

std::vector<LmExample> FactTask::receiver_corpus() const {
  std::vector<LmExample> out;
  for (const auto& item : train_) {
    LmExample e{item.receiver_context, config_.context_len};
    e.tokens.insert(e.tokens.end(), item.response.begin(), item.response.end());
    out.push_back(std::move(e));
  }
  return out;
}

const std::vector<std::string>& toy_words() {
  static const std::vector<std::string> words = {
      "accurately", "answer", "following", "question", "choices", "instructions", "carefully", "read",
      "all", "options", "select", "single", "most", "correct", "respond", "only", "in", "format",
      "do", "not", "include", "any", "explanations", "additional", "text", "or", "punctuation",
      "besides", "is", "the", "and", "background", "one", "clear", "sentence", "describe", "essential",
      "knowledge", "needed", "to", "directly", "solve", "give", "which", "what", "of", "a", "planet",
      "water", "light", "energy", "cell", "plant", "animal", "moon", "sun", "earth", "heat", "metal",
      "gas", "rock", "river", "ocean", "cloud", "force", "speed", "mass", "sound", "color", "shadow",
      "largest", "smallest", "hottest", "coldest", "first", "best", "reason", "cause", "effect"};
  return words;
}

namespace {

ToyModelConfig with_vocab(ToyModelConfig c, int vocab) {
  c.vocab_size = vocab;
  return c;
}

}  // namespace

ToyPair::ToyPair(const ToyPairConfig& config)
    : receiver_tokenizer(toy_receiver_tokenizer_spec(toy_words())),
      sharer_tokenizer(toy_sharer_tokenizer_spec(toy_words())),
      receiver(with_vocab(config.receiver, receiver_tokenizer.vocab_size())),
      sharer(with_vocab(config.sharer, sharer_tokenizer.vocab_size())) {
  receiver.set_tokenizer_id(receiver_tokenizer.id());
  sharer.set_tokenizer_id(sharer_tokenizer.id());
}

CommRequest random_toy_request(Rng& rng) {
  const auto& w = toy_words();
  // Domain words start after the template vocabulary.
  static const size_t domain_begin = static_cast<size_t>(std::find(w.begin(), w.end(), "planet") - w.begin());
  auto word = [&] { return w[domain_begin + rng.below(w.size() - domain_begin)]; };
  CommRequest r;
  r.question = "which " + word() + " is the " + word() + " of " + word();
  const int extra = static_cast<int>(rng.below(4));
  for (int i = 0; i < extra; ++i) r.question += " and " + word();
  r.question += "?";
  for (int c = 0; c < 4; ++c) r.choices.push_back(word() + " " + word());
  return r;
}

}  // namespace c2c
