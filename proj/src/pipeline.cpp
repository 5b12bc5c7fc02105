#include "c2c/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <sstream>
#include <thread>

#include "c2c/error.hpp"
#include "c2c/prompts.hpp"
#include "json.hpp"

namespace c2c {

std::string to_string(Method m) {
  switch (m) {
    case Method::kReceiverOnly: return "receiver_only";
    case Method::kSharerOnly: return "sharer_only";
    case Method::kT2T: return "t2t";
    case Method::kC2C: return "c2c";
    case Method::kRouting: return "routing";
  }
  return "unknown";
}

std::optional<Method> parse_method(const std::string& name) {
  for (Method m : {Method::kReceiverOnly, Method::kSharerOnly, Method::kT2T, Method::kC2C, Method::kRouting})
    if (to_string(m) == name) return m;
  return std::nullopt;
}

void CommRequest::validate() const {
  require(!question.empty(), ErrorKind::kInvalidInput, "request has an empty question");
  require(max_response_tokens >= 1 && max_comm_tokens >= 1, ErrorKind::kInvalidInput,
          "token limits must be >= 1");
}

void TextModel::validate() const {
  require(model && tokenizer, ErrorKind::kInvalidInput, "text model needs a model and a tokenizer");
  require(model->config().vocab_size == tokenizer->vocab_size(), ErrorKind::kInvalidInput,
          "model vocabulary differs from its tokenizer (" + std::to_string(model->config().vocab_size) + " vs " +
              std::to_string(tokenizer->vocab_size()) + ")");
}

std::string request_prompt(const CommRequest& request) {
  if (request.choices.empty()) return request.question;
  McqItem item;
  item.question = request.question;
  item.choices = request.choices;
  return render_prompt(item, PromptTemplate::kNonCot);
}

std::string t2t_receiver_prompt(const std::string& analysis, const std::string& prompt) {
  return "Background:\n" + analysis + "\n\n" + prompt;
}

std::string decode_response(const Tokenizer& tokenizer, const std::vector<int>& tokens) {
  std::string out;
  for (int t : tokens) {
    if (t == tokenizer.eos_id()) break;
    if (!tokenizer.is_special(t)) out += tokenizer.token_text(t);
  }
  return out;
}

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

std::optional<int> stop_for(const TextModel& m, bool enabled) {
  return enabled ? std::optional<int>(m.tokenizer->eos_id()) : std::nullopt;
}

std::vector<int> strip_eos(std::vector<int> tokens, int eos) {
  auto it = std::find(tokens.begin(), tokens.end(), eos);
  tokens.erase(it, tokens.end());
  return tokens;
}

}  // namespace

CommResult run_single(const CommRequest& request, const TextModel& model, Method label) {
  request.validate();
  model.validate();
  const auto start = Clock::now();
  const auto prompt = model.tokenizer->encode_chat({{"user", request_prompt(request)}});
  CommResult r;
  r.method = label;
  r.response_tokens =
      model.model->generate(prompt, nullptr, request.max_response_tokens, stop_for(model, request.stop_on_eos));
  r.response = decode_response(*model.tokenizer, r.response_tokens);
  r.wall_seconds = seconds_since(start);
  r.tokens = {static_cast<int>(prompt.size()), 0, static_cast<int>(r.response_tokens.size())};
  return r;
}

void check_fuser_matches(const FuserParams<float>& fuser, const ToyModel<float>& sharer,
                         const ToyModel<float>& receiver) {
  const FuserConfig& c = fuser.config;
  require(c.layer_map.num_receiver_layers() == receiver.config().num_layers, ErrorKind::kCacheMismatch,
          "fuser layer map does not match the receiver depth");
  for (int e : c.layer_map.entries)
    require(e < sharer.config().num_layers, ErrorKind::kCacheMismatch, "fuser layer map exceeds the sharer depth");
  require(c.recv_kv_dim == receiver.config().model_dim() && c.recv_kv_heads == receiver.config().kv_heads,
          ErrorKind::kCacheMismatch, "fuser receiver width does not match the receiver model");
  require(c.shr_kv_dim == sharer.config().model_dim(), ErrorKind::kCacheMismatch,
          "fuser sharer width does not match the sharer model");
}

std::vector<int> c2c_decode(const ToyModel<float>& sharer, const ToyModel<float>& receiver,
                            const FuserParams<float>& fuser, const TokenAlignment& alignment, int max_new,
                            std::optional<int> stop_token) {
  check_fuser_matches(fuser, sharer, receiver);
  const auto recv_cache = receiver.prefill(alignment.receiver_tokens).cache;
  const auto shr_cache = sharer.prefill(alignment.sharer_tokens).cache;
  const auto fused = fuse_cache(recv_cache, shr_cache, alignment, fuser, GateState{});
  return receiver.generate(alignment.receiver_tokens, &fused, max_new, stop_token);
}

CommResult c2c_generate(const CommRequest& request, const TextModel& sharer, const TextModel& receiver,
                        const FuserParams<float>& fuser, TokenStrategy strategy) {
  request.validate();
  sharer.validate();
  receiver.validate();
  check_fuser_matches(fuser, *sharer.model, *receiver.model);
  const auto start = Clock::now();
  const auto sections = section_chat({{"user", request_prompt(request)}}, *receiver.tokenizer, *sharer.tokenizer);
  const auto alignment = align_tokens(sections, strategy);
  CommResult r;
  r.method = Method::kC2C;
  r.response_tokens = c2c_decode(*sharer.model, *receiver.model, fuser, alignment, request.max_response_tokens,
                                 stop_for(receiver, request.stop_on_eos));
  r.response = decode_response(*receiver.tokenizer, r.response_tokens);
  r.wall_seconds = seconds_since(start);
  r.tokens = {alignment.receiver_len(), 0, static_cast<int>(r.response_tokens.size())};
  return r;
}

CommResult t2t_generate(const CommRequest& request, const TextModel& sharer, const TextModel& receiver) {
  request.validate();
  sharer.validate();
  receiver.validate();
  const auto start = Clock::now();
  McqItem item;
  item.question = request.question;
  const auto shr_prompt = sharer.tokenizer->encode_chat({{"user", render_prompt(item, PromptTemplate::kT2TSharer)}});
  const auto analysis = strip_eos(
      sharer.model->generate(shr_prompt, nullptr, request.max_comm_tokens, stop_for(sharer, request.comm_stop_on_eos)),
      sharer.tokenizer->eos_id());
  CommResult r;
  r.method = Method::kT2T;
  r.intermediate = decode_response(*sharer.tokenizer, analysis);
  const auto prompt =
      receiver.tokenizer->encode_chat({{"user", t2t_receiver_prompt(r.intermediate, request_prompt(request))}});
  r.response_tokens =
      receiver.model->generate(prompt, nullptr, request.max_response_tokens, stop_for(receiver, request.stop_on_eos));
  r.response = decode_response(*receiver.tokenizer, r.response_tokens);
  r.wall_seconds = seconds_since(start);
  r.tokens = {static_cast<int>(prompt.size()), static_cast<int>(analysis.size()),
              static_cast<int>(r.response_tokens.size())};
  return r;
}

double median_threshold(std::vector<double> scores) {
  require(!scores.empty(), ErrorKind::kInvalidInput, "median threshold of no scores");
  std::sort(scores.begin(), scores.end(), std::greater<>());
  return scores[(scores.size() + 1) / 2 - 1];
}

CommResult route_query(const CommRequest& request, double difficulty, double threshold, const TextModel& strong,
                       const TextModel& weak) {
  return run_single(request, difficulty >= threshold ? strong : weak, Method::kRouting);
}

RoutingPlan plan_routing(const std::vector<CommRequest>& requests, const DifficultyScorer& scorer) {
  require(static_cast<bool>(scorer), ErrorKind::kConfigError, "routing needs a difficulty scorer");
  RoutingPlan plan;
  if (requests.empty()) return plan;
  for (const auto& r : requests) plan.scores.push_back(scorer(r.question));
  plan.threshold = median_threshold(plan.scores);
  std::vector<size_t> order(requests.size());
  std::iota(order.begin(), order.end(), size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) { return plan.scores[a] > plan.scores[b]; });
  plan.to_strong.assign(requests.size(), false);
  for (size_t i = 0; i < (requests.size() + 1) / 2; ++i) plan.to_strong[order[i]] = true;
  return plan;
}

namespace {

std::vector<std::string> words_of(const std::string& text) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : text) {
    const unsigned char c = static_cast<unsigned char>(ch);
    if (std::isalnum(c)) {
      cur += static_cast<char>(std::tolower(c));
    } else if (!cur.empty()) {
      out.push_back(cur);
      cur.clear();
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

}  // namespace

FrequencyScorer::FrequencyScorer(const std::vector<std::string>& calibration_questions) {
  for (const auto& q : calibration_questions)
    for (const auto& w : words_of(q)) {
      ++counts_[w];
      ++total_;
    }
}

double FrequencyScorer::operator()(const std::string& question) const {
  const auto words = words_of(question);
  if (words.empty()) return 0.0;
  const double denom = static_cast<double>(total_ + static_cast<int64_t>(counts_.size()) + 1);
  double sum = 0.0;
  for (const auto& w : words) {
    const auto it = counts_.find(w);
    const double c = it == counts_.end() ? 0.0 : it->second;
    sum -= std::log((c + 1.0) / denom);
  }
  return sum / static_cast<double>(words.size());
}

std::string to_json(const CommResult& r, const std::string& id) {
  nlohmann::ordered_json j;
  if (!id.empty()) j["id"] = id;
  j["method"] = to_string(r.method);
  j["response"] = r.response;
  j["intermediate"] = r.intermediate;
  j["wall_seconds"] = r.wall_seconds;
  j["tokens"] = {{"prompt", r.tokens.prompt}, {"comm", r.tokens.comm}, {"response", r.tokens.response}};
  return j.dump();
}

std::vector<CommResult> run_parallel(size_t n, int workers, const std::function<CommResult(size_t)>& fn) {
  std::vector<CommResult> out(n);
  const size_t w = std::max<size_t>(1, std::min<size_t>(static_cast<size_t>(std::max(workers, 1)), n));
  if (w <= 1) {
    for (size_t i = 0; i < n; ++i) out[i] = fn(i);
    return out;
  }
  std::vector<std::exception_ptr> errors(w);
  std::vector<std::thread> threads;
  for (size_t t = 0; t < w; ++t) {
    threads.emplace_back([&, t] {
      try {
        for (size_t i = t; i < n; i += w) out[i] = fn(i);
      } catch (...) {
        errors[t] = std::current_exception();
      }
    });
  }
  for (auto& th : threads) th.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  return out;
}

}  // namespace c2c
