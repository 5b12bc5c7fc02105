#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "c2c/checkpoint.hpp"
#include "c2c/error.hpp"
#include "c2c/rng.hpp"
#include "c2c/trainer.hpp"
#include "json.hpp"
#include "test_util.hpp"

namespace c2c {
namespace {

using testing::relative_error;

template <typename T>
struct Pair {
  ToyModel<T> receiver{ToyModelConfig{2, 2, 4, 16, 16, 11}};
  ToyModel<T> sharer{ToyModelConfig{3, 2, 6, 16, 12, 12}};
  FuserConfig fuser_config() const {
    return make_fuser_config(receiver.info(), sharer.info(), terminal_layer_map(2, 3), 6);
  }
};

std::vector<TrainSample> random_dataset(int n, uint64_t seed, int vocab = 16) {
  Rng rng(seed);
  std::vector<TrainSample> out;
  for (int i = 0; i < n; ++i) {
    const int len = 3 + static_cast<int>(rng.below(4));
    std::vector<int> ctx(len), shr(len), resp(1 + rng.below(3));
    for (auto& t : ctx) t = static_cast<int>(rng.below(vocab));
    for (auto& t : shr) t = static_cast<int>(rng.below(vocab));
    for (auto& t : resp) t = static_cast<int>(rng.below(vocab));
    out.push_back(make_sample(ctx, resp, shr));
  }
  return out;
}

template <typename T>
void randomize(FuserParams<T>& p, Rng& rng, double scale = 0.3) {
  for (auto& [name, m] : p.named())
    for (size_t i = 0; i < m->size(); ++i) m->data()[i] = static_cast<T>(rng.normal() * scale);
}

ErrorKind kind_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  ADD_FAILURE() << "no c2c::Error thrown";
  return ErrorKind::kInvalidInput;
}

TEST(ScheduleTest, WarmupPeakAndEndpoints) {
  EXPECT_EQ(learning_rate(0, 100, 1e-4, 0.1), 0.0);
  EXPECT_DOUBLE_EQ(learning_rate(5, 100, 1e-4, 0.1), 5e-5);
  EXPECT_DOUBLE_EQ(learning_rate(10, 100, 1e-4, 0.1), 1e-4);
  EXPECT_DOUBLE_EQ(learning_rate(55, 100, 1e-4, 0.1), 5e-5);
  EXPECT_EQ(learning_rate(100, 100, 1e-4, 0.1), 0.0);
  EXPECT_GT(learning_rate(99, 100, 1e-4, 0.1), 0.0);
  for (int s = 1; s <= 10; ++s) EXPECT_GT(learning_rate(s, 100, 1.0, 0.1), learning_rate(s - 1, 100, 1.0, 0.1));
  for (int s = 11; s <= 100; ++s) EXPECT_LT(learning_rate(s, 100, 1.0, 0.1), learning_rate(s - 1, 100, 1.0, 0.1));
  EXPECT_DOUBLE_EQ(learning_rate(0, 10, 2.0, 0.0), 2.0);
}

TEST(AdamWTest, FirstStepMatchesHandComputation) {
  Matrix<double> w(1, 3, std::vector<double>{1.0, -2.0, 0.5});
  Matrix<double> b(1, 2, std::vector<double>{0.1, 0.2});
  const Matrix<double> gw(1, 3, std::vector<double>{0.5, -0.25, 0.0});
  const Matrix<double> gb(1, 2, std::vector<double>{2.0, -1e-3});
  const Matrix<double> w0 = w, b0 = b;
  AdamW<double> opt;
  const double lr = 0.01, wd = 0.1;
  opt.step({&w, &b}, {&gw, &gb}, {true, false}, lr, wd);
  // After one step the bias-corrected moments are g and g^2.
  for (int j = 0; j < 3; ++j) {
    const double g = gw(0, j);
    EXPECT_NEAR(w(0, j), w0(0, j) - lr * g / (std::abs(g) + 1e-8) - lr * wd * w0(0, j), 1e-15);
  }
  for (int j = 0; j < 2; ++j) {
    const double g = gb(0, j);
    EXPECT_NEAR(b(0, j), b0(0, j) - lr * g / (std::abs(g) + 1e-8), 1e-15);
  }
  EXPECT_EQ(opt.steps(), 1);
}

TEST(AdamWTest, SecondStepMatchesHandComputation) {
  Matrix<double> w(1, 1, 1.0);
  AdamW<double> opt;
  const Matrix<double> g1(1, 1, 0.3), g2(1, 1, -0.1);
  opt.step({&w}, {&g1}, {false}, 0.1, 0.0);
  const double after1 = w(0, 0);
  opt.step({&w}, {&g2}, {false}, 0.1, 0.0);
  const double m = 0.9 * 0.1 * 0.3 + 0.1 * -0.1;
  const double v = 0.999 * 0.001 * 0.09 + 0.001 * 0.01;
  const double mhat = m / (1 - 0.81), vhat = v / (1 - 0.999 * 0.999);
  EXPECT_NEAR(w(0, 0), after1 - 0.1 * mhat / (std::sqrt(vhat) + 1e-8), 1e-14);
}

TEST(DecayTest, WeightsDecayBiasesAndGatesDoNot) {
  EXPECT_TRUE(decays("layers.0.key.proj_w"));
  EXPECT_TRUE(decays("layers.3.value.fuse_w2"));
  EXPECT_TRUE(decays("layers.0.key.head_w"));
  EXPECT_FALSE(decays("layers.0.key.proj_b"));
  EXPECT_FALSE(decays("layers.1.value.fuse_b1"));
  EXPECT_FALSE(decays("layers.0.gate_logit"));
  EXPECT_FALSE(decays("layers.0.attn_norm"));
  EXPECT_FALSE(decays("final_norm"));
  EXPECT_TRUE(decays("embed"));
}

TEST(ClipTest, ScalesToMaxNormAndReportsOriginal) {
  Matrix<double> a(1, 2, std::vector<double>{3.0, 0.0});
  Matrix<double> b(1, 1, 4.0);
  EXPECT_DOUBLE_EQ(clip_grad_norm<double>({&a, &b}, 1.0), 5.0);
  EXPECT_NEAR(a(0, 0), 0.6, 1e-15);
  EXPECT_NEAR(b(0, 0), 0.8, 1e-15);
  // Under the limit nothing changes.
  EXPECT_NEAR(clip_grad_norm<double>({&a, &b}, 2.0), 1.0, 1e-15);
  EXPECT_NEAR(a(0, 0), 0.6, 1e-15);
}

TEST(TrainConfigTest, DefaultsAndValidation) {
  const TrainConfig c;
  EXPECT_EQ(c.lr, 1e-4);
  EXPECT_EQ(c.warmup_ratio, 0.10);
  EXPECT_EQ(c.weight_decay, 0.01);
  EXPECT_EQ(c.max_grad_norm, 1.0);
  EXPECT_EQ(c.t_start, 1.0);
  EXPECT_EQ(c.t_end, 0.001);
  EXPECT_EQ(c.seed, 42u);
  EXPECT_EQ(c.split_ratio, 0.99);
  TrainConfig bad;
  bad.lr = 0.0;
  EXPECT_EQ(kind_of([&] { bad.validate(); }), ErrorKind::kConfigError);
  bad = TrainConfig{};
  bad.macro_batch = 0;
  EXPECT_EQ(kind_of([&] { bad.validate(); }), ErrorKind::kConfigError);
}

TEST(SampleTest, EmptyResponseRejected) {
  EXPECT_EQ(kind_of([] { make_sample({1, 2}, {}, {3, 4}); }), ErrorKind::kInvalidInput);
  EXPECT_EQ(kind_of([] { make_sample({}, {1}, {}); }), ErrorKind::kInvalidInput);
  EXPECT_EQ(kind_of([] { make_sample({1, 2}, {1}, {3}); }), ErrorKind::kInvalidInput);
}

TEST(SplitTest, NinetyNineToOne) {
  const auto [train, val] = split_indices(100, 0.99, 42);
  EXPECT_EQ(train.size(), 99u);
  EXPECT_EQ(val.size(), 1u);
  std::vector<int> seen(100, 0);
  for (size_t i : train) ++seen[i];
  for (size_t i : val) ++seen[i];
  for (int s : seen) EXPECT_EQ(s, 1);
  EXPECT_EQ(split_indices(100, 0.99, 42), split_indices(100, 0.99, 42));
  EXPECT_NE(split_indices(100, 0.99, 42).first, split_indices(100, 0.99, 43).first);
  EXPECT_EQ(split_indices(3, 0.99, 1).first.size(), 3u);
  EXPECT_EQ(split_indices(250, 0.99, 1).second.size(), 2u);
}

// Teacher-forced receiver loss over the response, computed by plain prefill
// and decode with a hand-written log-softmax.
double teacher_forced_loss(const ToyModel<double>& m, const TrainSample& s) {
  auto pre = m.prefill(s.context_tokens);
  std::vector<double> logits = pre.logits;
  double total = 0.0;
  for (size_t i = 0; i < s.response_tokens.size(); ++i) {
    double mx = logits[0];
    for (double z : logits) mx = std::max(mx, z);
    double z = 0.0;
    for (double l : logits) z += std::exp(l - mx);
    total += -(logits[s.response_tokens[i]] - mx - std::log(z));
    if (i + 1 < s.response_tokens.size()) logits = m.decode_step(s.response_tokens[i], pre.cache);
  }
  return total / static_cast<double>(s.response_tokens.size());
}

TEST(C2CLossTest, ZeroInitFuserEqualsTeacherForcedReceiverLoss) {
  Pair<double> pair;
  const auto params = init_fuser<double>(pair.fuser_config(), 3);
  for (const auto& s : random_dataset(20, 5)) {
    const auto prep = prepare_sample(s, pair.receiver, pair.sharer);
    const double got = evaluate_loss<double>({prep}, params, pair.receiver);
    EXPECT_NEAR(got, teacher_forced_loss(pair.receiver, s), 1e-12);
  }
}

TEST(C2CLossTest, GradientsMatchFiniteDifferences) {
  Pair<double> pair;
  auto params = init_fuser<double>(pair.fuser_config(), 3);
  Rng rng(17);
  randomize(params, rng);
  const auto data = random_dataset(2, 9);
  std::vector<PreparedSample<double>> prepared;
  for (const auto& s : data) prepared.push_back(prepare_sample(s, pair.receiver, pair.sharer));
  const GateState gate{GateMode::kSoftTrain, 0.8, 21};
  auto loss = [&](FuserParams<double>* grads) {
    ag::Tape<double> tape;
    const auto rb = pair.receiver.bind(tape);
    const auto fb = bind_fuser(tape, params, grads);
    std::vector<ag::Var> terms;
    for (const auto& p : prepared) terms.push_back(c2c_loss(tape, rb, pair.receiver, fb, params.config, p, gate, 0.5));
    const ag::Var total = ag::sum<double>(tape, terms);
    const double v = tape.value(total)(0, 0);
    if (grads) tape.backward(total);
    return v;
  };
  auto grads = FuserParams<double>::zeros_like(params.config);
  loss(&grads);
  auto named = params.named();
  auto gnamed = grads.named();
  double worst = 0.0;
  int checked = 0;
  for (size_t t = 0; t < named.size(); ++t) {
    for (size_t j = 0; j < named[t].second->size(); ++j) {
      double& x = named[t].second->data()[j];
      const double saved = x, h = 1e-5;
      x = saved + h;
      const double up = loss(nullptr);
      x = saved - h;
      const double down = loss(nullptr);
      x = saved;
      const double numeric = (up - down) / (2 * h);
      const double analytic = gnamed[t].second->data()[j];
      if (std::abs(numeric) < 1e-9 && std::abs(analytic) < 1e-9) continue;
      worst = std::max(worst, relative_error(analytic, numeric));
      ++checked;
    }
  }
  EXPECT_GT(checked, 100);
  EXPECT_LT(worst, 1e-4);
}

TEST(TrainStepTest, FrozenBackbonesGetNoGradient) {
  Pair<float> pair;
  auto params = init_fuser<float>(pair.fuser_config(), 3);
  const auto data = random_dataset(4, 2);
  std::vector<PreparedSample<float>> prepared;
  for (const auto& s : data) prepared.push_back(prepare_sample(s, pair.receiver, pair.sharer));
  std::vector<const PreparedSample<float>*> batch;
  for (const auto& p : prepared) batch.push_back(&p);
  std::vector<Matrix<float>> recv_copy, shr_copy;
  for (const auto& [n, m] : pair.receiver.weights().named()) recv_copy.push_back(*m);
  for (const auto& [n, m] : pair.sharer.weights().named()) shr_copy.push_back(*m);
  TrainState<float> state;
  TrainConfig config;
  config.macro_batch = 4;
  config.micro_batch = 2;
  for (int step = 0; step < 3; ++step) {
    const auto r = train_step(batch, params, pair.sharer, pair.receiver, state, config);
    EXPECT_EQ(r.grads.receiver_grad_norm, 0.0);
    EXPECT_EQ(r.grads.sharer_grad_norm, 0.0);
    int nonzero = 0;
    for (const auto& [n, v] : r.grads.fuser_tensor_norms) nonzero += v > 0.0;
    EXPECT_GE(nonzero, 1);
    EXPECT_GT(r.grads.fuser_grad_norm, 0.0);
  }
  size_t i = 0;
  for (const auto& [n, m] : pair.receiver.weights().named()) EXPECT_EQ(*m, recv_copy[i++]) << n;
  i = 0;
  for (const auto& [n, m] : pair.sharer.weights().named()) EXPECT_EQ(*m, shr_copy[i++]) << n;
}

TEST(TrainStepTest, UnfrozenBackboneRejected) {
  Pair<float> pair;
  pair.receiver.set_frozen(false);
  auto params = init_fuser<float>(pair.fuser_config(), 3);
  const auto data = random_dataset(1, 2);
  const auto prep = prepare_sample(data[0], pair.receiver, pair.sharer);
  TrainState<float> state;
  EXPECT_EQ(kind_of([&] { train_step<float>({&prep}, params, pair.sharer, pair.receiver, state, TrainConfig{}); }),
            ErrorKind::kInvalidInput);
}

TEST(TrainStepTest, NonFiniteLossNamesTheBatch) {
  Pair<float> pair;
  auto params = init_fuser<float>(pair.fuser_config(), 3);
  params.layers[0].key.fuse_w2(0, 0) = std::numeric_limits<float>::quiet_NaN();
  const auto data = random_dataset(1, 2);
  const auto prep = prepare_sample(data[0], pair.receiver, pair.sharer);
  TrainState<float> state;
  try {
    train_step<float>({&prep}, params, pair.sharer, pair.receiver, state, TrainConfig{}, 17);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kNumericalError);
    EXPECT_NE(std::string(e.what()).find("batch 17"), std::string::npos);
  }
}

TEST(TrainStepTest, OverfitFixedBatchLowersLoss) {
  Pair<float> pair;
  auto params = init_fuser<float>(pair.fuser_config(), 3);
  const auto data = random_dataset(4, 8);
  std::vector<PreparedSample<float>> prepared;
  for (const auto& s : data) prepared.push_back(prepare_sample(s, pair.receiver, pair.sharer));
  std::vector<const PreparedSample<float>*> batch;
  for (const auto& p : prepared) batch.push_back(&p);
  TrainConfig config;
  config.lr = 1e-2;
  config.total_steps = 200;
  config.macro_batch = 4;
  TrainState<float> state;
  double first = 0.0, last = 0.0;
  for (int s = 0; s < 200; ++s) {
    const auto r = train_step(batch, params, pair.sharer, pair.receiver, state, config);
    if (s == 0) first = r.loss;
    last = r.loss;
  }
  EXPECT_LT(last, first);
  EXPECT_LT(evaluate_loss(prepared, params, pair.receiver), first);
}

TEST(TrainTest, SameSeedSameRun) {
  Pair<float> pair;
  const auto data = random_dataset(40, 4);
  TrainConfig config;
  config.lr = 3e-3;
  config.total_steps = 30;
  config.macro_batch = 4;
  config.split_ratio = 0.9;
  const auto a = train<float>(data, pair.sharer, pair.receiver, pair.fuser_config(), config);
  const auto b = train<float>(data, pair.sharer, pair.receiver, pair.fuser_config(), config);
  ASSERT_FALSE(a.log.epochs.empty());
  EXPECT_EQ(a.log.epochs.back().val_loss, b.log.epochs.back().val_loss);
  EXPECT_EQ(a.log.to_jsonl(), b.log.to_jsonl());
  auto na = a.params.named(), nb = b.params.named();
  for (size_t i = 0; i < na.size(); ++i) EXPECT_EQ(*na[i].second, *nb[i].second) << na[i].first;
  // 36 training samples in batches of 4: 9 steps per epoch, so epochs end at
  // steps 8, 17, 26 and the final step 29.
  EXPECT_EQ(a.log.epochs.size(), 4u);
  EXPECT_EQ(a.log.steps.size(), 30u);
}

TEST(TrainTest, EmptyDatasetRejected) {
  Pair<float> pair;
  EXPECT_EQ(kind_of([&] { train<float>({}, pair.sharer, pair.receiver, pair.fuser_config(), TrainConfig{}); }),
            ErrorKind::kInvalidInput);
}

TEST(TrainTest, LogIsJsonl) {
  Pair<float> pair;
  TrainConfig config;
  config.total_steps = 5;
  config.split_ratio = 0.5;
  const auto r = train<float>(random_dataset(4, 6), pair.sharer, pair.receiver, pair.fuser_config(), config);
  std::istringstream in(r.log.to_jsonl());
  std::string line;
  int steps = 0, epochs = 0;
  while (std::getline(in, line)) {
    const auto j = nlohmann::json::parse(line);
    if (j.contains("step")) {
      EXPECT_EQ(j["step"].get<int>(), steps++);
      EXPECT_TRUE(j.contains("lr") && j.contains("temperature") && j.contains("train_loss"));
    } else {
      EXPECT_TRUE(j.contains("epoch") && j.contains("val_loss"));
      ++epochs;
    }
  }
  EXPECT_EQ(steps, 5);
  EXPECT_GE(epochs, 1);
  EXPECT_EQ(r.log.steps.back().temperature, anneal_temperature(4, 5));
}

TEST(TrainTest, PeriodicCheckpoints) {
  Pair<float> pair;
  const auto dir = std::filesystem::temp_directory_path() / "c2c_trainer_ckpt";
  std::filesystem::remove_all(dir);
  TrainConfig config;
  config.total_steps = 6;
  config.checkpoint_every = 2;
  config.checkpoint_dir = dir.string();
  const auto r = train<float>(random_dataset(8, 6), pair.sharer, pair.receiver, pair.fuser_config(), config);
  for (int s : {2, 4, 6}) EXPECT_TRUE(std::filesystem::exists(dir / ("fuser_step" + std::to_string(s) + ".c2cf")));
  EXPECT_FALSE(std::filesystem::exists(dir / "fuser_step3.c2cf"));
  FuserMetadata meta;
  const auto last = load_fuser((dir / "fuser_step6.c2cf").string(), &meta);
  EXPECT_EQ(meta.steps, 6);
  auto nl = last.named(), nr = r.params.named();
  for (size_t i = 0; i < nl.size(); ++i) EXPECT_EQ(*nl[i].second, *nr[i].second);
  std::filesystem::remove_all(dir);
}

TEST(CheckpointTest, ToyModelRoundTrip) {
  ToyModel<float> m(ToyModelConfig{2, 2, 4, 20, 16, 99});
  m.set_tokenizer_id("toy-receiver");
  const auto path = (std::filesystem::temp_directory_path() / "c2c_toy.c2ct").string();
  save_toy_model(path, m);
  const auto back = load_toy_model(path);
  EXPECT_EQ(back.config(), m.config());
  EXPECT_EQ(back.tokenizer_id(), "toy-receiver");
  auto a = m.weights().named(), b = back.weights().named();
  ASSERT_EQ(a.size(), b.size());
  for (size_t i = 0; i < a.size(); ++i) EXPECT_EQ(*a[i].second, *b[i].second);
  const std::vector<int> prompt = {1, 5, 9};
  EXPECT_EQ(m.generate(prompt, nullptr, 5), back.generate(prompt, nullptr, 5));
  std::filesystem::remove(path);
}

TEST(CheckpointTest, FuserRoundTripWithSidecar) {
  Pair<float> pair;
  auto p = init_fuser<float>(pair.fuser_config(), 5);
  Rng rng(2);
  randomize(p, rng);
  const auto path = (std::filesystem::temp_directory_path() / "c2c_fuser.c2cf").string();
  save_fuser(path, p, {42, 123, 0.25});
  FuserMetadata meta;
  const auto back = load_fuser(path, &meta);
  EXPECT_EQ(meta.seed, 42u);
  EXPECT_EQ(meta.steps, 123);
  EXPECT_EQ(meta.final_temperature, 0.25);
  EXPECT_EQ(back.config.layer_map.entries, p.config.layer_map.entries);
  EXPECT_EQ(fuser_config_json(back.config), fuser_config_json(p.config));
  auto a = p.named();
  const auto b = back.named();
  for (size_t i = 0; i < a.size(); ++i) EXPECT_EQ(*a[i].second, *b[i].second);
  std::ifstream side(path + ".json");
  const auto j = nlohmann::json::parse(side);
  EXPECT_EQ(j["format"], "C2CFUS1");
  std::filesystem::remove(path);
  std::filesystem::remove(path + ".json");
}

TEST(CheckpointTest, BadFilesRejected) {
  const auto path = (std::filesystem::temp_directory_path() / "c2c_bad.bin").string();
  {
    std::ofstream out(path, std::ios::binary);
    out << "NOTMAGIC and more";
  }
  EXPECT_EQ(kind_of([&] { load_toy_model(path); }), ErrorKind::kDataError);
  EXPECT_EQ(kind_of([&] { load_fuser(path); }), ErrorKind::kDataError);
  {
    std::ofstream out(path, std::ios::binary);
    out << "C2CTOY1";
  }
  EXPECT_EQ(kind_of([&] { load_toy_model(path); }), ErrorKind::kDataError);
  std::filesystem::remove(path);
  EXPECT_EQ(kind_of([&] { load_toy_model(path); }), ErrorKind::kConfigError);
}

TEST(PretrainTest, LowersLossAndRequiresUnfrozenModel) {
  ToyModel<float> m(ToyModelConfig{2, 2, 4, 12, 16, 3});
  std::vector<LmExample> corpus;
  for (int i = 0; i < 8; ++i) corpus.push_back({{2, 4 + i % 4, 5 + i % 3, 3}, 1});
  EXPECT_EQ(kind_of([&] { pretrain_language_model(m, corpus, LmTrainConfig{}); }), ErrorKind::kInvalidInput);
  m.set_frozen(false);
  LmTrainConfig short_run;
  short_run.steps = 1;
  ToyModel<float> copy = m;
  const double before = pretrain_language_model(copy, corpus, short_run);
  LmTrainConfig config;
  config.steps = 150;
  const double after = pretrain_language_model(m, corpus, config);
  EXPECT_LT(after, before);
  EXPECT_EQ(kind_of([&] { pretrain_language_model(m, {{{1}, 1}}, config); }), ErrorKind::kInvalidInput);
}

}  // namespace
}  // namespace c2c
