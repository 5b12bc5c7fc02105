#pragma once

#include <string>
#include <utility>
#include <vector>

#include "c2c/analysis.hpp"
#include "c2c/dataset.hpp"
#include "c2c/run_config.hpp"
#include "c2c/toy_task.hpp"

namespace c2c {

// Record of one run: what went in, what came out, and under which resolved
// configuration. Written as manifest.json next to the outputs.
struct Manifest {
  std::string command;
  std::string config_hash;
  uint64_t seed = 0;
  std::string resolved_config;  // JSON text
  std::vector<std::pair<std::string, std::string>> models;  // role, digest
  std::vector<std::pair<std::string, std::string>> inputs;  // path, sha256
  std::vector<std::pair<std::string, std::string>> outputs;  // file name in output_dir, sha256
  int dropped_items = 0;

  std::string to_json() const;
};

// Receiver and sharer built from the config: toy tokenizers, then either the
// configured shapes (random init) or checkpoints. Throws ConfigError when a
// checkpoint does not fit its tokenizer.
ToyPair load_models(const RunConfig& config);

// Chat prompt for an item, its cross-tokenizer alignment, and the receiver
// target " X" followed by <eos>.
TrainSample mcq_train_sample(const McqItem& item, const ToyPair& models, TokenStrategy strategy);
CommRequest mcq_request(const McqItem& item, const RunConfig& config);

LayerMap layer_map_for(const RunConfig& config, int recv_layers, int shr_layers);

// JSON line for an evaluation record; parse_eval_record reverses it.
std::string eval_record_json(const EvalRecord& record, const CommResult& result);
EvalRecord parse_eval_record(const std::string& line);

// Commands. Each creates output_dir, writes its files plus manifest.json and
// returns the manifest. `sub` selects the oracle experiment (enrichment,
// transform) or analysis (rank, gates, progressive, venn).
Manifest run_train(const RunConfig& config);
Manifest run_eval(const RunConfig& config);
Manifest run_oracle(const RunConfig& config, const std::string& sub);
Manifest run_analyze(const RunConfig& config, const std::string& sub);
Manifest run_command(const RunConfig& config, const std::string& command, const std::string& sub = {});

// Random four-choice questions over the toy vocabulary as JSONL, for demos
// and smoke tests. Answers are drawn uniformly.
std::string toy_mcq_jsonl(int count, uint64_t seed, const std::string& id_prefix = "q");

}  // namespace c2c
