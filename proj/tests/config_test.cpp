#include <gtest/gtest.h>

#include "c2c/error.hpp"
#include "c2c/run_config.hpp"
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

TEST(RunConfigTest, DefaultsRoundTrip) {
  const RunConfig empty = parse_run_config("");
  const RunConfig explicit_defaults = parse_run_config(default_config_json());
  EXPECT_EQ(empty.config_hash, explicit_defaults.config_hash);
  EXPECT_EQ(empty.resolved_json, explicit_defaults.resolved_json);
  EXPECT_EQ(empty.seed, 42u);
  EXPECT_EQ(empty.receiver.shape.num_layers, 2);
  EXPECT_EQ(empty.sharer.shape.num_layers, 3);
  EXPECT_EQ(empty.methods, std::vector<Method>{Method::kReceiverOnly});
  EXPECT_EQ(empty.train.lr, TrainConfig{}.lr);
  EXPECT_FALSE(empty.routing_threshold.has_value());
  EXPECT_EQ(empty.config_hash.size(), 64u);
}

TEST(RunConfigTest, HashIgnoresKeyOrderAndTracksValues) {
  const RunConfig a = parse_run_config(R"({"seed": 7, "eval": {"workers": 2, "max_response_tokens": 9}})");
  const RunConfig b = parse_run_config(R"({"eval": {"max_response_tokens": 9, "workers": 2}, "seed": 7})");
  const RunConfig c = parse_run_config(R"({"eval": {"max_response_tokens": 9, "workers": 3}, "seed": 7})");
  EXPECT_EQ(a.config_hash, b.config_hash);
  EXPECT_NE(a.config_hash, c.config_hash);
  EXPECT_EQ(a.workers, 2);
  EXPECT_EQ(a.max_response_tokens, 9);
  EXPECT_EQ(a.train.seed, 7u);
  EXPECT_EQ(a.transform.seed, 7u);
}

TEST(RunConfigTest, UnknownKeysAndWrongTypesAreRejected) {
  EXPECT_EQ(kind_of([] { parse_run_config(R"({"sed": 1})"); }), ErrorKind::kConfigError);
  EXPECT_EQ(kind_of([] { parse_run_config(R"({"train": {"learning_rate": 1e-3}})"); }), ErrorKind::kConfigError);
  EXPECT_EQ(kind_of([] { parse_run_config(R"({"seed": 1.5})"); }), ErrorKind::kConfigError);
  EXPECT_EQ(kind_of([] { parse_run_config(R"({"seed": "1"})"); }), ErrorKind::kConfigError);
  EXPECT_EQ(kind_of([] { parse_run_config(R"({"eval": {"methods": "c2c"}})"); }), ErrorKind::kConfigError);
  EXPECT_EQ(kind_of([] { parse_run_config(R"({"eval": {"methods": [1]}})"); }), ErrorKind::kConfigError);
  EXPECT_EQ(kind_of([] { parse_run_config(R"({"train": 3})"); }), ErrorKind::kConfigError);
  EXPECT_EQ(kind_of([] { parse_run_config("{not json"); }), ErrorKind::kConfigError);
  EXPECT_EQ(kind_of([] { parse_run_config("[1]"); }), ErrorKind::kConfigError);
  // A float slot takes an integer literal.
  EXPECT_EQ(parse_run_config(R"({"train": {"lr": 1}})").train.lr, 1.0);
}

TEST(RunConfigTest, InvalidValuesAreRejected) {
  EXPECT_EQ(kind_of([] { parse_run_config(R"({"eval": {"methods": ["telepathy"]}})"); }), ErrorKind::kConfigError);
  EXPECT_EQ(kind_of([] { parse_run_config(R"({"fuser": {"variant": "huge"}})"); }), ErrorKind::kConfigError);
  EXPECT_EQ(kind_of([] { parse_run_config(R"({"fuser": {"layer_strategy": "middle"}})"); }), ErrorKind::kConfigError);
  EXPECT_EQ(kind_of([] { parse_run_config(R"({"oracle": {"modes": ["zero"]}})"); }), ErrorKind::kConfigError);
  EXPECT_EQ(kind_of([] { parse_run_config(R"({"oracle": {"projector": "tsne"}})"); }), ErrorKind::kConfigError);
  EXPECT_EQ(kind_of([] { parse_run_config(R"({"analysis": {"fractions": [0.5, 2]}})"); }), ErrorKind::kConfigError);
  EXPECT_EQ(kind_of([] { parse_run_config(R"({"eval": {"workers": 0}})"); }), ErrorKind::kConfigError);
  EXPECT_EQ(kind_of([] { parse_run_config(R"({"train": {"lr": -1}})"); }), ErrorKind::kConfigError);
}

TEST(RunConfigTest, EnumsAndOptionalThreshold) {
  const RunConfig c = parse_run_config(
      R"({"eval": {"methods": ["c2c", "t2t", "routing"], "routing_threshold": 2}, "fuser": {"variant": "sharer_mlp",
          "layer_strategy": "depth_normalized", "token_strategy": "first_occurrence"}, "oracle": {"projector": "raw"}})");
  EXPECT_EQ(c.methods, (std::vector<Method>{Method::kC2C, Method::kT2T, Method::kRouting}));
  EXPECT_EQ(c.routing_threshold, 2.0);
  EXPECT_EQ(c.fuser_variant, FuserVariant::kSharerMlp);
  EXPECT_EQ(c.layer_strategy, LayerStrategy::kDepthNormalized);
  EXPECT_EQ(c.token_strategy, TokenStrategy::kFirstOccurrence);
  EXPECT_EQ(c.projector, Projector::kRaw);
}

TEST(RunConfigTest, EnvironmentOverridesParseNestedKeys) {
  std::string a = "C2C__EVAL__MAX_RESPONSE_TOKENS=16", b = "PATH=/bin", c = "C2C__ORACLE__TRANSFORM__LR=0.01",
              d = "C2C__OUTPUT_DIR=/tmp/x", e = "C2C__BROKEN";
  char* env[] = {a.data(), b.data(), c.data(), d.data(), e.data(), nullptr};
  const auto ov = env_overrides(env);
  ASSERT_EQ(ov.size(), 3u);
  EXPECT_EQ(ov[0], (ConfigOverride{"eval.max_response_tokens", "16"}));
  EXPECT_EQ(ov[1], (ConfigOverride{"oracle.transform.lr", "0.01"}));
  EXPECT_EQ(ov[2], (ConfigOverride{"output_dir", "/tmp/x"}));
  const RunConfig cfg = parse_run_config(R"({"eval": {"max_response_tokens": 4}})", ov);
  EXPECT_EQ(cfg.max_response_tokens, 16);
  EXPECT_EQ(cfg.transform.lr, 0.01);
  EXPECT_EQ(cfg.output_dir, "/tmp/x");
  EXPECT_TRUE(env_overrides(nullptr).empty());
}

TEST(RunConfigTest, OverridesApplyInOrderAndAreTypeChecked) {
  const RunConfig c = parse_run_config("", {{"seed", "3"}, {"seed", "5"}, {"output_dir", "123"},
                                            {"eval.methods", R"(["t2t","c2c"])"}, {"eval.routing_threshold", "1.5"},
                                            {"train.lr", "2"}});
  EXPECT_EQ(c.seed, 5u);
  EXPECT_EQ(c.output_dir, "123");  // string slots keep the raw text
  EXPECT_EQ(c.methods, (std::vector<Method>{Method::kT2T, Method::kC2C}));
  EXPECT_EQ(c.routing_threshold, 1.5);
  EXPECT_EQ(c.train.lr, 2.0);
  EXPECT_EQ(kind_of([] { parse_run_config("", {{"eval.nope", "1"}}); }), ErrorKind::kConfigError);
  EXPECT_EQ(kind_of([] { parse_run_config("", {{"seed.deeper", "1"}}); }), ErrorKind::kConfigError);
  EXPECT_EQ(kind_of([] { parse_run_config("", {{"seed", "abc"}}); }), ErrorKind::kConfigError);
  EXPECT_EQ(kind_of([] { parse_run_config("", {{"eval.workers", "2.5"}}); }), ErrorKind::kConfigError);
  EXPECT_EQ(kind_of([] { load_run_config("/nonexistent/config.json"); }), ErrorKind::kConfigError);
}

TEST(RunConfigTest, ResolvedJsonIsTheFullSchema) {
  const RunConfig c = parse_run_config(R"({"seed": 9})");
  const auto resolved = nlohmann::json::parse(c.resolved_json);
  const auto defaults = nlohmann::json::parse(default_config_json());
  EXPECT_EQ(resolved["seed"], 9);
  for (const auto& [k, v] : defaults.items()) EXPECT_TRUE(resolved.contains(k)) << k;
  EXPECT_EQ(resolved.size(), defaults.size());
}

}  // namespace
}  // namespace c2c
