#include <gtest/gtest.h>

#include <set>

#include "c2c/error.hpp"
#include "c2c/pipeline.hpp"
#include "c2c/prompts.hpp"
#include "c2c/toy_task.hpp"
#include "json.hpp"

namespace c2c {
namespace {

ErrorKind kind_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  ADD_FAILURE() << "no error thrown";
  return ErrorKind::kInvalidInput;
}

const ToyPair& pair() {
  static const ToyPair p;
  return p;
}

FuserParams<float> random_fuser(float gate_logit, uint64_t seed) {
  const auto& p = pair();
  FuserParams<float> f = init_fuser<float>(
      make_fuser_config(p.receiver.info(), p.sharer.info(), terminal_layer_map(2, 3), 16), seed);
  Rng rng(seed);
  for (auto& [name, m] : f.named())
    for (size_t i = 0; i < m->size(); ++i) m->data()[i] = static_cast<float>(rng.normal() * 0.5);
  for (auto& l : f.layers) l.gate_logit(0, 0) = gate_logit;
  return f;
}

CommRequest request(uint64_t seed, int max_response = 8) {
  Rng rng(seed);
  CommRequest r = random_toy_request(rng);
  r.max_response_tokens = max_response;
  return r;
}

TEST(CommRequestTest, Validation) {
  CommRequest r = request(1);
  EXPECT_NO_THROW(r.validate());
  r.question.clear();
  EXPECT_EQ(kind_of([&] { r.validate(); }), ErrorKind::kInvalidInput);
  r = request(1);
  r.max_response_tokens = 0;
  EXPECT_EQ(kind_of([&] { r.validate(); }), ErrorKind::kInvalidInput);
  TextModel broken{&pair().receiver, &pair().sharer_tokenizer};
  EXPECT_EQ(kind_of([&] { broken.validate(); }), ErrorKind::kInvalidInput);
}

TEST(MethodTest, NamesRoundTrip) {
  for (Method m : {Method::kReceiverOnly, Method::kSharerOnly, Method::kT2T, Method::kC2C, Method::kRouting})
    EXPECT_EQ(parse_method(to_string(m)), m);
  EXPECT_FALSE(parse_method("oracle").has_value());
}

TEST(RequestPromptTest, ChoicesSelectTheMultipleChoiceTemplate) {
  CommRequest r = request(2);
  McqItem item;
  item.question = r.question;
  item.choices = r.choices;
  EXPECT_EQ(request_prompt(r), render_prompt(item, PromptTemplate::kNonCot));
  r.choices.clear();
  EXPECT_EQ(request_prompt(r), r.question);
  EXPECT_EQ(t2t_receiver_prompt("ctx", "q"), "Background:\nctx\n\nq");
}

TEST(DecodeResponseTest, StopsAtEosAndDropsSpecials) {
  const Tokenizer& t = pair().receiver_tokenizer;
  std::vector<int> ids = t.encode("the planet");
  const std::string text = t.decode(ids);
  std::vector<int> with = {t.bos_id()};
  with.insert(with.end(), ids.begin(), ids.end());
  with.push_back(t.eos_id());
  with.push_back(ids.front());
  EXPECT_EQ(decode_response(t, with), text);
}

TEST(RunSingleTest, MatchesDirectGenerationAndIsDeterministic) {
  const auto& p = pair();
  for (uint64_t s = 0; s < 5; ++s) {
    const CommRequest r = request(s, 6);
    const CommResult a = run_single(r, p.receiver_text());
    const CommResult b = run_single(r, p.receiver_text());
    const auto prompt = p.receiver_tokenizer.encode_chat({{"user", request_prompt(r)}});
    const auto direct = p.receiver.generate(prompt, nullptr, 6, p.receiver_tokenizer.eos_id());
    EXPECT_EQ(a.response_tokens, direct);
    EXPECT_EQ(a.response, b.response);
    EXPECT_LE(static_cast<int>(a.response_tokens.size()), 6);
    EXPECT_EQ(a.tokens.prompt, static_cast<int>(prompt.size()));
    EXPECT_EQ(a.tokens.comm, 0);
    EXPECT_GT(a.wall_seconds, 0.0);
    EXPECT_TRUE(a.intermediate.empty());
  }
}

TEST(C2CGenerateTest, ClosedGatesReproduceReceiverOnly) {
  const auto& p = pair();
  const FuserParams<float> closed = random_fuser(-10.0f, 3);
  for (uint64_t s = 10; s < 20; ++s) {
    const CommRequest r = request(s);
    const CommResult c = c2c_generate(r, p.sharer_text(), p.receiver_text(), closed);
    const CommResult base = run_single(r, p.receiver_text());
    EXPECT_EQ(c.response, base.response);
    EXPECT_EQ(c.response_tokens, base.response_tokens);
    EXPECT_EQ(c.tokens.comm, 0);
    EXPECT_EQ(c.method, Method::kC2C);
  }
}

TEST(C2CGenerateTest, OpenGatesChangeTheCacheAndMatchManualPipeline) {
  const auto& p = pair();
  const FuserParams<float> open = random_fuser(10.0f, 4);
  int differs = 0;
  for (uint64_t s = 20; s < 30; ++s) {
    const CommRequest r = request(s);
    const CommResult c = c2c_generate(r, p.sharer_text(), p.receiver_text(), open);
    const auto a = align_tokens(section_chat({{"user", request_prompt(r)}}, p.receiver_tokenizer, p.sharer_tokenizer),
                                TokenStrategy::kMaximalCoverage);
    const auto recv = p.receiver.prefill(a.receiver_tokens).cache;
    const auto fused = fuse_cache(recv, p.sharer.prefill(a.sharer_tokens).cache, a, open, GateState{});
    EXPECT_EQ(c.response_tokens, p.receiver.generate(a.receiver_tokens, &fused, 8, p.receiver_tokenizer.eos_id()));
    differs += fused == recv ? 0 : 1;
  }
  EXPECT_EQ(differs, 10);
}

TEST(C2CGenerateTest, MismatchedFuserIsRejected) {
  const auto& p = pair();
  ToyModel<float> other({2, 2, 8, p.receiver_tokenizer.vocab_size(), 16, 1});
  const FuserParams<float> f = random_fuser(1.0f, 5);
  EXPECT_EQ(kind_of([&] { check_fuser_matches(f, p.sharer, other); }), ErrorKind::kCacheMismatch);
  EXPECT_EQ(kind_of([&] { c2c_generate(request(1), p.sharer_text(), {&other, &p.receiver_tokenizer}, f); }),
            ErrorKind::kCacheMismatch);
}

TEST(T2TGenerateTest, SharerAnalysisFeedsTheReceiver) {
  const auto& p = pair();
  for (uint64_t s = 30; s < 35; ++s) {
    CommRequest r = request(s);
    r.max_comm_tokens = 12;
    r.comm_stop_on_eos = false;
    const CommResult t = t2t_generate(r, p.sharer_text(), p.receiver_text());
    McqItem item;
    item.question = r.question;
    const auto shr_prompt =
        p.sharer_tokenizer.encode_chat({{"user", render_prompt(item, PromptTemplate::kT2TSharer)}});
    const auto analysis = p.sharer.generate(shr_prompt, nullptr, 12);
    EXPECT_EQ(t.tokens.comm, 12);
    EXPECT_EQ(t.intermediate, decode_response(p.sharer_tokenizer, analysis));
    const auto recv_prompt =
        p.receiver_tokenizer.encode_chat({{"user", t2t_receiver_prompt(t.intermediate, request_prompt(r))}});
    EXPECT_EQ(t.response_tokens, p.receiver.generate(recv_prompt, nullptr, 8, p.receiver_tokenizer.eos_id()));
    EXPECT_EQ(t.tokens.prompt, static_cast<int>(recv_prompt.size()));
    EXPECT_EQ(t.method, Method::kT2T);
  }
}

TEST(ResultSchemaTest, AllMethodsShareOneJsonSchema) {
  const auto& p = pair();
  const CommRequest r = request(40);
  const FuserParams<float> f = random_fuser(1.0f, 6);
  std::vector<CommResult> results = {run_single(r, p.receiver_text()),
                                     run_single(r, p.sharer_text(), Method::kSharerOnly),
                                     t2t_generate(r, p.sharer_text(), p.receiver_text()),
                                     c2c_generate(r, p.sharer_text(), p.receiver_text(), f),
                                     route_query(r, 1.0, 0.5, p.sharer_text(), p.receiver_text())};
  std::set<std::string> keys0;
  for (size_t i = 0; i < results.size(); ++i) {
    const auto j = nlohmann::json::parse(to_json(results[i], "id7"));
    std::set<std::string> keys;
    for (const auto& [k, v] : j.items()) keys.insert(k);
    if (i == 0) keys0 = keys;
    EXPECT_EQ(keys, keys0);
    EXPECT_EQ(j["id"], "id7");
  }
  EXPECT_EQ(results[4].method, Method::kRouting);
  EXPECT_EQ(results[4].response, results[1].response);  // routed to the strong model
}

TEST(RoutingTest, MedianThresholdSendsTheUpperHalf) {
  EXPECT_EQ(median_threshold({1, 5, 3, 2}), 3);
  EXPECT_EQ(median_threshold({1, 5, 3}), 3);
  EXPECT_EQ(median_threshold({4}), 4);
  EXPECT_THROW(median_threshold({}), Error);
  for (size_t n = 1; n <= 9; ++n) {
    std::vector<CommRequest> reqs(n);
    for (size_t i = 0; i < n; ++i) reqs[i].question = std::to_string(i % 3);  // ties
    const RoutingPlan plan = plan_routing(reqs, [](const std::string& q) { return std::stod(q); });
    EXPECT_EQ(static_cast<size_t>(std::count(plan.to_strong.begin(), plan.to_strong.end(), true)), (n + 1) / 2);
    for (size_t i = 0; i < n; ++i)
      if (plan.to_strong[i]) EXPECT_GE(plan.scores[i], plan.threshold);
  }
  EXPECT_EQ(kind_of([] { plan_routing({CommRequest{}}, DifficultyScorer{}); }), ErrorKind::kConfigError);
}

TEST(RoutingTest, FrequencyScorerRanksRareWordingHarder) {
  const FrequencyScorer s({"the planet is hot", "the planet is cold", "the river is long"});
  EXPECT_LT(s("the planet"), s("quasar nebula"));
  EXPECT_EQ(s("THE Planet"), s("the planet"));
  EXPECT_EQ(s("?!"), 0.0);
  // Add-one surprisal of an unseen word: -log(1 / (total + vocab + 1)).
  EXPECT_NEAR(s("zzz"), std::log(12.0 + 7.0 + 1.0), 1e-12);
}

TEST(RunParallelTest, IndexOrderAndErrors) {
  for (int workers : {1, 2, 3, 8}) {
    const auto out = run_parallel(11, workers, [](size_t i) {
      CommResult r;
      r.response = std::to_string(i);
      return r;
    });
    ASSERT_EQ(out.size(), 11u);
    for (size_t i = 0; i < 11; ++i) EXPECT_EQ(out[i].response, std::to_string(i));
  }
  EXPECT_THROW(run_parallel(5, 3,
                            [](size_t i) -> CommResult {
                              if (i == 3) throw Error(ErrorKind::kDataError, "boom");
                              return {};
                            }),
               Error);
  EXPECT_TRUE(run_parallel(0, 4, [](size_t) { return CommResult{}; }).empty());
}

TEST(RunParallelTest, ParallelEvaluationMatchesSerial) {
  const auto& p = pair();
  std::vector<CommRequest> reqs;
  for (uint64_t s = 50; s < 58; ++s) reqs.push_back(request(s));
  auto fn = [&](size_t i) { return run_single(reqs[i], p.receiver_text()); };
  const auto serial = run_parallel(reqs.size(), 1, fn);
  const auto parallel = run_parallel(reqs.size(), 4, fn);
  for (size_t i = 0; i < reqs.size(); ++i) EXPECT_EQ(serial[i].response_tokens, parallel[i].response_tokens);
}

}  // namespace
}  // namespace c2c
