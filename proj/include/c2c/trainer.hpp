#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "c2c/alignment.hpp"
#include "c2c/fuser.hpp"
#include "c2c/model.hpp"

namespace c2c {

struct TrainConfig {
  double lr = 1e-4;
  double warmup_ratio = 0.10;
  double weight_decay = 0.01;
  double max_grad_norm = 1.0;
  int macro_batch = 1;  // samples per optimizer step
  int micro_batch = 1;  // samples per forward/backward pass
  int total_steps = 100;
  double t_start = 1.0;
  double t_end = 0.001;
  uint64_t seed = 42;
  double split_ratio = 0.99;
  int checkpoint_every = 0;  // 0 disables periodic checkpoints
  std::string checkpoint_dir;

  void validate() const;
};

// Adam with decoupled weight decay.
struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

template <typename T>
class AdamW {
 public:
  explicit AdamW(AdamConfig config = {}) : config_(config) {}

  // One update. `decay[i]` selects which tensors receive weight decay.
  void step(const std::vector<Matrix<T>*>& params, const std::vector<const Matrix<T>*>& grads,
            const std::vector<bool>& decay, double lr, double weight_decay);
  int steps() const noexcept { return t_; }

 private:
  AdamConfig config_;
  std::vector<std::vector<double>> m_, v_;
  int t_ = 0;
};

// Linear warmup to `peak` at warmup_ratio * total, then linear decay to 0 at
// total.
double learning_rate(int step, int total_steps, double peak, double warmup_ratio);

// Scales all gradients so their global L2 norm is at most max_norm. Returns
// the norm before clipping.
template <typename T>
double clip_grad_norm(const std::vector<Matrix<T>*>& grads, double max_norm);

// Weight matrices decay; biases and gate logits do not.
bool decays(const std::string& param_name);

struct TrainSample {
  std::vector<int> context_tokens;  // receiver frame
  std::vector<int> response_tokens;
  std::vector<int> sharer_context_tokens;  // aligned sharer frame
  TokenAlignment alignment;

  // Rejects empty context/response and inconsistent alignments.
  void validate() const;
};

// Identity-aligned sample for same-position frames.
TrainSample make_sample(std::vector<int> context, std::vector<int> response, std::vector<int> sharer_context);

// Frozen-model caches computed once per sample.
template <typename T>
struct PreparedSample {
  const TrainSample* sample = nullptr;
  KVCache<T> receiver_cache;
  KVCache<T> sharer_cache;
};

template <typename T>
PreparedSample<T> prepare_sample(const TrainSample& sample, const ToyModel<T>& receiver, const ToyModel<T>& sharer);

// Sum of receiver next-token cross-entropy over the response, decoding from
// the fused context cache, multiplied by `scale`. The first response token is
// predicted by re-querying the last context token against the fused cache.
template <typename T>
ag::Var c2c_loss(ag::Tape<T>& tape, const typename ToyModel<T>::Bound& receiver_bound,
                 const ToyModel<T>& receiver, const BoundFuser<T>& fuser, const FuserConfig& config,
                 const PreparedSample<T>& prepared, const GateState& gate, T scale);

struct GradReport {
  double receiver_grad_norm = 0.0;
  double sharer_grad_norm = 0.0;
  double fuser_grad_norm = 0.0;  // before clipping
  std::vector<std::pair<std::string, double>> fuser_tensor_norms;
};

struct StepResult {
  double loss = 0.0;  // mean over response tokens
  double lr = 0.0;
  double temperature = 0.0;
  GradReport grads;
};

template <typename T>
struct TrainState {
  AdamW<T> optimizer;
  int step = 0;
};

// One optimizer step on a macro batch. Throws NumericalError on a non-finite
// loss and InvalidInput when either backbone is not frozen.
template <typename T>
StepResult train_step(const std::vector<const PreparedSample<T>*>& batch, FuserParams<T>& params,
                      const ToyModel<T>& sharer, const ToyModel<T>& receiver, TrainState<T>& state,
                      const TrainConfig& config, int batch_id = 0);

// Mean response-token loss with hard gates and no noise.
template <typename T>
double evaluate_loss(const std::vector<PreparedSample<T>>& samples, const FuserParams<T>& params,
                     const ToyModel<T>& receiver);

struct StepRecord {
  int step = 0;
  double lr = 0.0;
  double temperature = 0.0;
  double train_loss = 0.0;
};

struct EpochRecord {
  int epoch = 0;
  double val_loss = 0.0;
};

struct TrainLog {
  std::vector<StepRecord> steps;
  std::vector<EpochRecord> epochs;

  std::string to_jsonl() const;
  void write_jsonl(const std::string& path) const;
};

template <typename T>
struct TrainResult {
  FuserParams<T> params;
  TrainLog log;
  std::vector<size_t> train_indices;
  std::vector<size_t> val_indices;
};

// Seeded split: the first ceil(ratio * n) shuffled indices train.
std::pair<std::vector<size_t>, std::vector<size_t>> split_indices(size_t n, double ratio, uint64_t seed);

// Full schedule. `on_step` (optional) sees every step result.
template <typename T>
TrainResult<T> train(const std::vector<TrainSample>& dataset, const ToyModel<T>& sharer,
                     const ToyModel<T>& receiver, const FuserConfig& fuser_config, const TrainConfig& config,
                     const std::function<void(int, const StepResult&)>& on_step = {});

// -- toy base-model pretraining ----------------------------------------------

struct LmExample {
  std::vector<int> tokens;
  int loss_from = 1;  // first position whose token is a supervised target
};

struct LmTrainConfig {
  double lr = 3e-3;
  double weight_decay = 0.0;
  double max_grad_norm = 1.0;
  int batch = 16;
  int steps = 500;
  double warmup_ratio = 0.05;
  uint64_t seed = 7;
};

// Teacher-forced next-token training of a toy model's own weights; used only to
// give the demo models something to know. Returns the final-step mean loss.
template <typename T>
double pretrain_language_model(ToyModel<T>& model, const std::vector<LmExample>& examples,
                               const LmTrainConfig& config);

}  // namespace c2c
