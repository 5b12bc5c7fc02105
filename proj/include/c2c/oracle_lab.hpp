#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "c2c/alignment.hpp"
#include "c2c/model.hpp"

namespace c2c {

// -- cache enrichment ---------------------------------------------------------

enum class EnrichmentMode { kDirect, kFewShot, kOracle };

std::string to_string(EnrichmentMode m);
std::optional<EnrichmentMode> parse_enrichment_mode(const std::string& name);

struct EnrichmentSpec {
  std::vector<int> exemplar_tokens;
  std::vector<int> question_tokens;
  EnrichmentMode mode = EnrichmentMode::kDirect;
  // Layers that take the enriched cache; the rest keep the direct cache.
  // Absent means every layer. Only meaningful in oracle mode, where both
  // caches have the question's length.
  std::optional<std::vector<int>> layer_subset;

  void validate(int num_layers) const;
};

// direct: prefill(question). few_shot: prefill(exemplars + question).
// oracle: prefill(exemplars + question) restricted to the question positions,
// so its length is always |question|. The sliced keys keep the rotary phase of
// their original positions.
template <typename T>
KVCache<T> build_enriched_cache(const EnrichmentSpec& spec, const ToyModel<T>& model);

// `base` with the listed layers taken from `enriched`.
template <typename T>
KVCache<T> replace_layers(const KVCache<T>& base, const KVCache<T>& enriched, const std::vector<int>& layers);

// The prompt whose cache a mode produces: the question alone, or exemplars
// followed by the question for few-shot.
std::vector<int> enrichment_prompt(const EnrichmentSpec& spec);

struct Exemplar {
  std::string id;
  std::vector<int> tokens;  // an answered shot
};

struct EnrichmentItem {
  std::string id;
  std::vector<int> question_tokens;
  int answer_token = 0;
  std::vector<std::string> shot_ids;  // exemplars placed before the question, in order
};

struct EnrichmentDataset {
  std::vector<Exemplar> exemplars;
  std::vector<EnrichmentItem> items;

  // Throws DataError when an exemplar id is also an evaluation item id, when
  // an exemplar's tokens equal an item's question, or when a shot id is unknown.
  void validate() const;
  std::vector<int> exemplar_tokens_for(const EnrichmentItem& item) const;
};

struct EnrichmentOptions {
  std::vector<EnrichmentMode> modes = {EnrichmentMode::kDirect, EnrichmentMode::kFewShot, EnrichmentMode::kOracle};
  bool layer_sweep = false;  // per-layer oracle enrichment plus best/worst-N curves
};

struct EnrichmentReport {
  std::vector<std::pair<EnrichmentMode, double>> mode_accuracy;
  std::vector<double> layer_accuracy;  // oracle enrichment of that layer only
  std::vector<int> layer_ranking;  // layers by descending accuracy, ties to the lower index
  std::vector<double> best_n_accuracy;  // [k]: the k + 1 best layers enriched together
  std::vector<double> worst_n_accuracy;

  std::string mode_csv() const;  // mode,accuracy
  std::string layer_csv() const;  // layer,accuracy,n,best_n,worst_n
};

// An item counts as correct when the first greedy token decoded from the
// mode's cache is its answer token.
template <typename T>
EnrichmentReport run_enrichment_experiment(const EnrichmentDataset& dataset, const ToyModel<T>& model,
                                           const EnrichmentOptions& options);

// -- cache transformation -----------------------------------------------------

struct TransformDataset {
  Matrix<double> source;  // one row per pair
  Matrix<double> target;

  void validate() const;
};

// Pairs sharer and receiver (K | V) rows at aligned message-section positions
// of one receiver layer and the sharer layer the map assigns to it.
TransformDataset build_transform_dataset(const std::vector<std::vector<ChatMessage>>& prompts,
                                         const ToyModel<float>& sharer, const Tokenizer& sharer_tokenizer,
                                         const ToyModel<float>& receiver, const Tokenizer& receiver_tokenizer,
                                         const LayerMap& layer_map, int receiver_layer);

struct TransformMlp {
  Matrix<double> w1, b1, w2, b2, w3, b3;  // source -> hidden -> hidden -> target, GELU between

  int source_dim() const noexcept { return w1.cols(); }
  int target_dim() const noexcept { return w3.rows(); }
  Matrix<double> apply(const Matrix<double>& x) const;
};

struct TransformConfig {
  int steps = 2000;
  int batch = 64;
  double lr = 1e-3;
  int hidden_multiplier = 2;  // hidden width = multiplier * source dim
  uint64_t seed = 42;
};

struct TransformResult {
  TransformMlp mlp;
  std::vector<double> losses;  // per step, batch mean squared error
};

// Adam on mean squared error. Throws InvalidInput for mismatched pair counts or
// an empty dataset.
TransformResult train_transform_mlp(const TransformDataset& data, const TransformConfig& config);

// Mean over rows and columns of the squared error.
double transform_mse(const TransformMlp& mlp, const TransformDataset& data);

// -- embedding export ---------------------------------------------------------

struct LabeledVectors {
  std::string label;
  Matrix<double> vectors;  // one point per row
};

enum class Projector { kRaw, kPca2d };

std::optional<Projector> parse_projector(const std::string& name);

// CSV with a header. raw: label,v0,v1,...; pca2d: label,x,y on the top two
// principal components of all points pooled. Each component is signed so its
// largest-magnitude loading is positive (first such index on ties).
std::string export_embeddings(const std::vector<LabeledVectors>& sets, Projector projector);

}  // namespace c2c
