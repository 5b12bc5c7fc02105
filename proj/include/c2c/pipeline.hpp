#pragma once

#include <functional>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "c2c/alignment.hpp"
#include "c2c/fuser.hpp"
#include "c2c/model.hpp"
#include "c2c/tokenizer.hpp"

namespace c2c {

enum class Method { kReceiverOnly, kSharerOnly, kT2T, kC2C, kRouting };

std::string to_string(Method m);
std::optional<Method> parse_method(const std::string& name);

struct CommRequest {
  std::string question;
  std::vector<std::string> choices;  // empty for free-form questions
  int max_response_tokens = 64;
  int max_comm_tokens = 256;  // T2T only
  bool stop_on_eos = true;  // responses
  bool comm_stop_on_eos = true;  // T2T sharer analysis

  void validate() const;
};

struct TokenCounts {
  int prompt = 0;
  int comm = 0;
  int response = 0;
};

struct CommResult {
  Method method = Method::kReceiverOnly;
  std::string response;
  std::string intermediate;  // T2T analysis text
  double wall_seconds = 0.0;
  TokenCounts tokens;
  std::vector<int> response_tokens;
};

// A toy model together with the tokenizer that feeds it.
struct TextModel {
  const ToyModel<float>* model = nullptr;
  const Tokenizer* tokenizer = nullptr;

  void validate() const;
};

// The user message for a request: the non-CoT multiple-choice prompt when
// choices are given, the bare question otherwise.
std::string request_prompt(const CommRequest& request);

// Receiver prompt for T2T: the sharer's analysis placed before the question.
std::string t2t_receiver_prompt(const std::string& analysis, const std::string& prompt);

// Response text: tokens up to the first <eos>, specials dropped.
std::string decode_response(const Tokenizer& tokenizer, const std::vector<int>& tokens);

// Plain prefill and greedy decode with one model. `label` names the method in
// the result (receiver_only, sharer_only or routing).
CommResult run_single(const CommRequest& request, const TextModel& model, Method label = Method::kReceiverOnly);

// Token-level C2C: both models prefill their frames of `alignment`, the
// fuser merges the caches and the receiver decodes greedily from the result.
std::vector<int> c2c_decode(const ToyModel<float>& sharer, const ToyModel<float>& receiver,
                            const FuserParams<float>& fuser, const TokenAlignment& alignment, int max_new,
                            std::optional<int> stop_token = std::nullopt);

// Throws CacheMismatch when the fuser was built for other model shapes.
void check_fuser_matches(const FuserParams<float>& fuser, const ToyModel<float>& sharer,
                         const ToyModel<float>& receiver);

CommResult c2c_generate(const CommRequest& request, const TextModel& sharer, const TextModel& receiver,
                        const FuserParams<float>& fuser, TokenStrategy strategy = TokenStrategy::kMaximalCoverage);

CommResult t2t_generate(const CommRequest& request, const TextModel& sharer, const TextModel& receiver);

// Question text -> difficulty. Higher means harder.
using DifficultyScorer = std::function<double(const std::string&)>;

// Score of the ceil(n/2)-th hardest query; queries scoring at or above it go
// to the strong model.
double median_threshold(std::vector<double> scores);

CommResult route_query(const CommRequest& request, double difficulty, double threshold, const TextModel& strong,
                       const TextModel& weak);

struct RoutingPlan {
  double threshold = 0.0;
  std::vector<double> scores;
  std::vector<bool> to_strong;  // exactly ceil(n/2) true, by descending score then index
};

// Scores every request and marks the upper half for the strong model.
// Throws ConfigError without a scorer.
RoutingPlan plan_routing(const std::vector<CommRequest>& requests, const DifficultyScorer& scorer);

// Mean surprisal of the question's words under unigram counts from a
// calibration set (add-one smoothing). Rare wording scores as harder.
class FrequencyScorer {
 public:
  explicit FrequencyScorer(const std::vector<std::string>& calibration_questions);
  double operator()(const std::string& question) const;

 private:
  std::unordered_map<std::string, int> counts_;
  int64_t total_ = 0;
};

std::string to_json(const CommResult& result, const std::string& id = {});

// Runs fn(i) for i in [0, n) on `workers` threads. Results are in index order.
std::vector<CommResult> run_parallel(size_t n, int workers, const std::function<CommResult(size_t)>& fn);

}  // namespace c2c
