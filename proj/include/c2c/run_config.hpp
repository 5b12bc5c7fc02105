#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "c2c/alignment.hpp"
#include "c2c/analysis.hpp"
#include "c2c/fuser.hpp"
#include "c2c/model.hpp"
#include "c2c/oracle_lab.hpp"
#include "c2c/pipeline.hpp"
#include "c2c/trainer.hpp"

namespace c2c {

struct ModelSpec {
  ToyModelConfig shape;  // vocab_size comes from the toy tokenizer
  std::string checkpoint;  // C2CTOY1 file; overrides shape when set
};

// Resolved run configuration. Built from a JSON file whose keys must all be
// known (see default_config_json()), then environment overrides, then
// command-line overrides.
struct RunConfig {
  std::string command;
  uint64_t seed = 42;
  std::string output_dir = "c2c_out";

  ModelSpec receiver{{2, 4, 8, 0, 64, 1}, ""};
  ModelSpec sharer{{3, 4, 12, 0, 96, 2}, ""};

  int fuser_hidden_dim = 64;
  FuserVariant fuser_variant = FuserVariant::kStandard;
  LayerStrategy layer_strategy = LayerStrategy::kTerminal;
  TokenStrategy token_strategy = TokenStrategy::kMaximalCoverage;
  std::string fuser_checkpoint;

  TrainConfig train;

  std::string train_data;
  std::string eval_data;
  std::string exemplar_data;
  std::string calibration_data;

  std::vector<Method> methods = {Method::kReceiverOnly};
  int max_response_tokens = 64;
  int max_comm_tokens = 256;
  bool comm_stop_on_eos = true;
  std::optional<double> routing_threshold;
  int workers = 1;

  std::vector<EnrichmentMode> enrichment_modes = {EnrichmentMode::kDirect, EnrichmentMode::kFewShot,
                                                  EnrichmentMode::kOracle};
  bool layer_sweep = true;
  int shots = 3;
  TransformConfig transform;
  int transform_layer = -1;  // receiver layer; -1 means the last
  Projector projector = Projector::kPca2d;

  std::vector<double> fractions = {0.0, 0.25, 0.5, 0.75, 1.0};
  std::string records_path;  // eval records for venn analysis

  std::string resolved_json;  // canonical form of everything above
  std::string config_hash;  // SHA-256 of resolved_json
};

// Every accepted key with its default value, as pretty JSON.
std::string default_config_json();

// Dotted lowercase key path and raw value. Values are parsed as JSON when
// they parse, else taken as strings.
using ConfigOverride = std::pair<std::string, std::string>;

// Overrides from variables named C2C__SECTION__KEY (double underscore
// separates levels), e.g. C2C__EVAL__MAX_RESPONSE_TOKENS=16.
std::vector<ConfigOverride> env_overrides(char** environ_block);

// Throws ConfigError on unknown keys, wrong types and invalid values.
RunConfig parse_run_config(const std::string& json_text, const std::vector<ConfigOverride>& overrides = {});
RunConfig load_run_config(const std::string& path, const std::vector<ConfigOverride>& overrides = {});

}  // namespace c2c
