#include "c2c/trainer.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>

#include "c2c/checkpoint.hpp"
#include "c2c/error.hpp"
#include "c2c/rng.hpp"
#include "json.hpp"

namespace c2c {

void TrainConfig::validate() const {
  require(lr > 0.0, ErrorKind::kConfigError, "lr must be positive");
  require(warmup_ratio >= 0.0 && warmup_ratio < 1.0, ErrorKind::kConfigError, "warmup_ratio must be in [0, 1)");
  require(weight_decay >= 0.0, ErrorKind::kConfigError, "weight_decay must be >= 0");
  require(max_grad_norm > 0.0, ErrorKind::kConfigError, "max_grad_norm must be positive");
  require(macro_batch >= 1 && micro_batch >= 1, ErrorKind::kConfigError, "batch sizes must be >= 1");
  require(total_steps >= 1, ErrorKind::kConfigError, "total_steps must be >= 1");
  require(t_start > 0.0 && t_end > 0.0, ErrorKind::kConfigError, "temperatures must be positive");
  require(split_ratio > 0.0 && split_ratio <= 1.0, ErrorKind::kConfigError, "split_ratio must be in (0, 1]");
  require(checkpoint_every >= 0, ErrorKind::kConfigError, "checkpoint_every must be >= 0");
}

template <typename T>
void AdamW<T>::step(const std::vector<Matrix<T>*>& params, const std::vector<const Matrix<T>*>& grads,
                    const std::vector<bool>& decay, double lr, double weight_decay) {
  require(params.size() == grads.size() && params.size() == decay.size(), ErrorKind::kInvalidInput,
          "optimizer inputs disagree in length");
  if (m_.empty()) {
    for (const auto* p : params) {
      m_.emplace_back(p->size(), 0.0);
      v_.emplace_back(p->size(), 0.0);
    }
  }
  require(m_.size() == params.size(), ErrorKind::kInvalidInput, "optimizer parameter set changed");
  ++t_;
  const double bc1 = 1.0 - std::pow(config_.beta1, t_);
  const double bc2 = 1.0 - std::pow(config_.beta2, t_);
  for (size_t i = 0; i < params.size(); ++i) {
    Matrix<T>& p = *params[i];
    const Matrix<T>& g = *grads[i];
    require(p.same_shape(g) && p.size() == m_[i].size(), ErrorKind::kInvalidInput, "gradient shape mismatch");
    for (size_t j = 0; j < p.size(); ++j) {
      const double gj = g.data()[j];
      double& m = m_[i][j];
      double& v = v_[i][j];
      m = config_.beta1 * m + (1.0 - config_.beta1) * gj;
      v = config_.beta2 * v + (1.0 - config_.beta2) * gj * gj;
      const double old = p.data()[j];
      double next = old - lr * (m / bc1) / (std::sqrt(v / bc2) + config_.eps);
      if (decay[i]) next -= lr * weight_decay * old;
      p.data()[j] = static_cast<T>(next);
    }
  }
}

double learning_rate(int step, int total_steps, double peak, double warmup_ratio) {
  require(total_steps >= 1 && step >= 0 && step <= total_steps, ErrorKind::kInvalidInput,
          "learning-rate step outside the schedule");
  const double warm = warmup_ratio * total_steps;
  if (step < warm) return peak * step / warm;
  if (step >= total_steps) return 0.0;
  return peak * (total_steps - step) / (total_steps - warm);
}

template <typename T>
double clip_grad_norm(const std::vector<Matrix<T>*>& grads, double max_norm) {
  double sq = 0.0;
  for (const auto* g : grads)
    for (size_t i = 0; i < g->size(); ++i) sq += static_cast<double>(g->data()[i]) * g->data()[i];
  const double norm = std::sqrt(sq);
  if (norm > max_norm && norm > 0.0) {
    const double s = max_norm / norm;
    for (auto* g : grads)
      for (size_t i = 0; i < g->size(); ++i) g->data()[i] = static_cast<T>(g->data()[i] * s);
  }
  return norm;
}

bool decays(const std::string& name) {
  const auto dot = name.rfind('.');
  const std::string leaf = dot == std::string::npos ? name : name.substr(dot + 1);
  if (leaf == "gate_logit" || leaf.find("norm") != std::string::npos) return false;
  return leaf.find("_b") == std::string::npos;
}

void TrainSample::validate() const {
  require(!context_tokens.empty(), ErrorKind::kInvalidInput, "training sample has an empty context");
  require(!response_tokens.empty(), ErrorKind::kInvalidInput, "training sample has an empty response");
  require(!sharer_context_tokens.empty(), ErrorKind::kInvalidInput, "training sample has an empty sharer context");
  require(alignment.receiver_len() == static_cast<int>(context_tokens.size()), ErrorKind::kInvalidInput,
          "alignment length differs from the context length");
  require(alignment.sharer_len() == static_cast<int>(sharer_context_tokens.size()), ErrorKind::kInvalidInput,
          "alignment sharer frame differs from the sharer context");
}

TrainSample make_sample(std::vector<int> context, std::vector<int> response, std::vector<int> sharer_context) {
  TrainSample s;
  s.alignment = identity_alignment(context);
  s.alignment.sharer_tokens = sharer_context;
  require(context.size() == sharer_context.size(), ErrorKind::kInvalidInput,
          "identity-aligned frames must have equal length");
  s.context_tokens = std::move(context);
  s.response_tokens = std::move(response);
  s.sharer_context_tokens = std::move(sharer_context);
  s.validate();
  return s;
}

template <typename T>
PreparedSample<T> prepare_sample(const TrainSample& sample, const ToyModel<T>& receiver, const ToyModel<T>& sharer) {
  sample.validate();
  return {&sample, receiver.prefill(sample.context_tokens).cache, sharer.prefill(sample.sharer_context_tokens).cache};
}

template <typename T>
ag::Var c2c_loss(ag::Tape<T>& tape, const typename ToyModel<T>::Bound& receiver_bound, const ToyModel<T>& receiver,
                 const BoundFuser<T>& fuser, const FuserConfig& config, const PreparedSample<T>& prepared,
                 const GateState& gate, T scale) {
  const TrainSample& s = *prepared.sample;
  const auto recv = constant_cache(tape, prepared.receiver_cache);
  const auto fused = fuse_cache(tape, fuser, config, recv, prepared.sharer_cache, s.alignment, gate);
  const int n = static_cast<int>(s.context_tokens.size());
  const int m = static_cast<int>(s.response_tokens.size());
  std::vector<int> tokens = {s.context_tokens.back()};
  tokens.insert(tokens.end(), s.response_tokens.begin(), s.response_tokens.end() - 1);
  std::vector<int> positions(m);
  std::iota(positions.begin(), positions.end(), n - 1);
  auto out = receiver.forward(tape, receiver_bound, tokens, positions, fused, 1, ToyModel<T>::LogitRows::kAll);
  return ag::cross_entropy(tape, out.logits, s.response_tokens, scale);
}

namespace {

template <typename T>
double norm_of(const Matrix<T>& m) {
  double sq = 0.0;
  for (size_t i = 0; i < m.size(); ++i) sq += static_cast<double>(m.data()[i]) * m.data()[i];
  return std::sqrt(sq);
}

template <typename T>
double weights_norm(const ToyWeights<T>& w) {
  double sq = 0.0;
  for (const auto& [name, m] : w.named()) sq += std::pow(norm_of(*m), 2);
  return std::sqrt(sq);
}

}  // namespace

template <typename T>
StepResult train_step(const std::vector<const PreparedSample<T>*>& batch, FuserParams<T>& params,
                      const ToyModel<T>& sharer, const ToyModel<T>& receiver, TrainState<T>& state,
                      const TrainConfig& config, int batch_id) {
  require(sharer.frozen() && receiver.frozen(), ErrorKind::kInvalidInput, "backbone models must be frozen");
  require(!batch.empty(), ErrorKind::kInvalidInput, "empty training batch");
  const int step = std::min(state.step, config.total_steps);
  StepResult result;
  result.lr = learning_rate(step, config.total_steps, config.lr, config.warmup_ratio);
  result.temperature = anneal_temperature(step, config.total_steps, config.t_start, config.t_end);

  size_t tokens = 0;
  for (const auto* p : batch) tokens += p->sample->response_tokens.size();
  const T scale = static_cast<T>(1.0 / static_cast<double>(tokens));

  FuserParams<T> grads = FuserParams<T>::zeros_like(params.config);
  // Backbone gradient sinks. Frozen models are bound as constants, so nothing
  // ever flows here; the report reads them back to prove it.
  ToyWeights<T> receiver_grads = ToyWeights<T>::zeros_like(receiver.config());
  ToyWeights<T> sharer_grads = ToyWeights<T>::zeros_like(sharer.config());
  const uint64_t step_seed = mix_seed(config.seed, static_cast<uint64_t>(state.step));
  double loss = 0.0;
  for (size_t begin = 0; begin < batch.size(); begin += config.micro_batch) {
    const size_t end = std::min(batch.size(), begin + static_cast<size_t>(config.micro_batch));
    ag::Tape<T> tape;
    const auto rb = receiver.bind(tape, receiver.frozen() ? nullptr : &receiver_grads);
    const auto fb = bind_fuser(tape, params, &grads);
    std::vector<ag::Var> terms;
    for (size_t b = begin; b < end; ++b) {
      const GateState gate{GateMode::kSoftTrain, result.temperature, mix_seed(step_seed, b)};
      terms.push_back(c2c_loss(tape, rb, receiver, fb, params.config, *batch[b], gate, scale));
    }
    const ag::Var total = ag::sum<T>(tape, terms);
    const double value = tape.value(total)(0, 0);
    require(std::isfinite(value), ErrorKind::kNumericalError,
            "non-finite loss in batch " + std::to_string(batch_id));
    loss += value;
    tape.backward(total);
  }

  result.loss = loss;
  result.grads.receiver_grad_norm = weights_norm(receiver_grads);
  result.grads.sharer_grad_norm = weights_norm(sharer_grads);
  auto named = params.named();
  auto gnamed = grads.named();
  std::vector<Matrix<T>*> param_ptrs, grad_ptrs;
  std::vector<const Matrix<T>*> grad_views;
  std::vector<bool> decay;
  for (size_t i = 0; i < named.size(); ++i) {
    result.grads.fuser_tensor_norms.emplace_back(named[i].first, norm_of(*gnamed[i].second));
    param_ptrs.push_back(named[i].second);
    grad_ptrs.push_back(gnamed[i].second);
    grad_views.push_back(gnamed[i].second);
    decay.push_back(decays(named[i].first));
  }
  result.grads.fuser_grad_norm = clip_grad_norm(grad_ptrs, config.max_grad_norm);
  state.optimizer.step(param_ptrs, grad_views, decay, result.lr, config.weight_decay);
  ++state.step;
  return result;
}

template <typename T>
double evaluate_loss(const std::vector<PreparedSample<T>>& samples, const FuserParams<T>& params,
                     const ToyModel<T>& receiver) {
  double total = 0.0;
  size_t tokens = 0;
  for (const auto& p : samples) {
    ag::Tape<T> tape;
    const auto rb = receiver.bind(tape);
    const auto fb = bind_fuser(tape, params);
    total += tape.value(c2c_loss(tape, rb, receiver, fb, params.config, p, GateState{}, T(1)))(0, 0);
    tokens += p.sample->response_tokens.size();
  }
  require(tokens > 0, ErrorKind::kInvalidInput, "no samples to evaluate");
  return total / static_cast<double>(tokens);
}

std::string TrainLog::to_jsonl() const {
  std::string out;
  for (const auto& s : steps) {
    nlohmann::ordered_json j;
    j["step"] = s.step;
    j["lr"] = s.lr;
    j["temperature"] = s.temperature;
    j["train_loss"] = s.train_loss;
    out += j.dump() + "\n";
  }
  for (const auto& e : epochs) {
    nlohmann::ordered_json j;
    j["epoch"] = e.epoch;
    j["val_loss"] = e.val_loss;
    out += j.dump() + "\n";
  }
  return out;
}

void TrainLog::write_jsonl(const std::string& path) const {
  std::ofstream out(path);
  require(out.good(), ErrorKind::kConfigError, "cannot write " + path);
  out << to_jsonl();
}

std::pair<std::vector<size_t>, std::vector<size_t>> split_indices(size_t n, double ratio, uint64_t seed) {
  std::vector<size_t> idx(n);
  std::iota(idx.begin(), idx.end(), size_t{0});
  Rng rng(mix_seed(seed, 1));
  rng.shuffle(idx);
  const size_t n_train = std::min(n, static_cast<size_t>(std::ceil(ratio * static_cast<double>(n) - 1e-9)));
  std::vector<size_t> train(idx.begin(), idx.begin() + n_train);
  std::vector<size_t> val(idx.begin() + n_train, idx.end());
  return {train, val};
}

template <typename T>
TrainResult<T> train(const std::vector<TrainSample>& dataset, const ToyModel<T>& sharer, const ToyModel<T>& receiver,
                     const FuserConfig& fuser_config, const TrainConfig& config,
                     const std::function<void(int, const StepResult&)>& on_step) {
  require(!dataset.empty(), ErrorKind::kInvalidInput, "empty training dataset");
  config.validate();
  for (const auto& s : dataset) s.validate();
  TrainResult<T> result;
  std::tie(result.train_indices, result.val_indices) = split_indices(dataset.size(), config.split_ratio, config.seed);
  require(!result.train_indices.empty(), ErrorKind::kInvalidInput, "training split is empty");
  result.params = init_fuser<T>(fuser_config, config.seed);

  std::vector<PreparedSample<T>> train_set, val_set;
  for (size_t i : result.train_indices) train_set.push_back(prepare_sample(dataset[i], receiver, sharer));
  for (size_t i : result.val_indices) val_set.push_back(prepare_sample(dataset[i], receiver, sharer));

  if (config.checkpoint_every > 0) std::filesystem::create_directories(config.checkpoint_dir);
  TrainState<T> state;
  Rng order_rng(mix_seed(config.seed, 2));
  std::vector<size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), size_t{0});
  const int per_epoch = static_cast<int>((train_set.size() + config.macro_batch - 1) / config.macro_batch);
  for (int step = 0; step < config.total_steps; ++step) {
    const int in_epoch = step % per_epoch;
    if (in_epoch == 0) order_rng.shuffle(order);
    std::vector<const PreparedSample<T>*> batch;
    const size_t begin = static_cast<size_t>(in_epoch) * config.macro_batch;
    for (size_t i = begin; i < std::min(order.size(), begin + config.macro_batch); ++i)
      batch.push_back(&train_set[order[i]]);
    const StepResult r = train_step(batch, result.params, sharer, receiver, state, config, step);
    result.log.steps.push_back({step, r.lr, r.temperature, r.loss});
    if (on_step) on_step(step, r);
    if (config.checkpoint_every > 0 && (step + 1) % config.checkpoint_every == 0) {
      const std::string path = config.checkpoint_dir + "/fuser_step" + std::to_string(step + 1) + ".c2cf";
      save_fuser(path, result.params.template cast<float>(), {config.seed, step + 1, r.temperature});
    }
    const bool epoch_end = in_epoch == per_epoch - 1 || step + 1 == config.total_steps;
    if (epoch_end && !val_set.empty())
      result.log.epochs.push_back({step / per_epoch, evaluate_loss(val_set, result.params, receiver)});
  }
  return result;
}

template <typename T>
double pretrain_language_model(ToyModel<T>& model, const std::vector<LmExample>& examples,
                               const LmTrainConfig& config) {
  require(!model.frozen(), ErrorKind::kInvalidInput, "unfreeze the model before pretraining it");
  require(!examples.empty() && config.batch >= 1 && config.steps >= 1, ErrorKind::kInvalidInput,
          "pretraining needs examples, batch >= 1 and steps >= 1");
  for (const auto& e : examples)
    require(e.tokens.size() >= 2 && e.loss_from >= 1 && e.loss_from < static_cast<int>(e.tokens.size()),
            ErrorKind::kInvalidInput, "pretraining example has no supervised target");
  AdamW<T> opt;
  Rng rng(config.seed);
  double last = 0.0;
  for (int step = 0; step < config.steps; ++step) {
    ToyWeights<T> grads = ToyWeights<T>::zeros_like(model.config());
    std::vector<const LmExample*> batch;
    size_t targets = 0;
    for (int b = 0; b < config.batch; ++b) {
      batch.push_back(&examples[rng.below(examples.size())]);
      targets += batch.back()->tokens.size() - batch.back()->loss_from;
    }
    ag::Tape<T> tape;
    const auto bound = model.bind(tape, &grads);
    std::vector<ag::Var> terms;
    for (const auto* e : batch) {
      const int n = static_cast<int>(e->tokens.size());
      std::vector<int> positions(n);
      std::iota(positions.begin(), positions.end(), 0);
      const auto out = model.forward(tape, bound, e->tokens, positions, {}, 0, ToyModel<T>::LogitRows::kAll);
      std::vector<int> tgt(n, -1);
      for (int i = 0; i + 1 < n; ++i)
        if (i + 1 >= e->loss_from) tgt[i] = e->tokens[i + 1];
      terms.push_back(ag::cross_entropy(tape, out.logits, tgt, static_cast<T>(1.0 / targets)));
    }
    const ag::Var loss = ag::sum<T>(tape, terms);
    last = tape.value(loss)(0, 0);
    require(std::isfinite(last), ErrorKind::kNumericalError, "non-finite pretraining loss at step " + std::to_string(step));
    tape.backward(loss);
    std::vector<Matrix<T>*> params, gptrs;
    std::vector<const Matrix<T>*> gviews;
    std::vector<bool> decay;
    auto named = model.mutable_weights().named();
    auto gnamed = grads.named();
    for (size_t i = 0; i < named.size(); ++i) {
      params.push_back(named[i].second);
      gptrs.push_back(gnamed[i].second);
      gviews.push_back(gnamed[i].second);
      decay.push_back(decays(named[i].first));
    }
    clip_grad_norm(gptrs, config.max_grad_norm);
    opt.step(params, gviews, decay, learning_rate(step, config.steps, config.lr, config.warmup_ratio),
             config.weight_decay);
  }
  return last;
}

#define C2C_INSTANTIATE_TRAINER(T)                                                                          \
  template class AdamW<T>;                                                                                  \
  template double clip_grad_norm<T>(const std::vector<Matrix<T>*>&, double);                               \
  template PreparedSample<T> prepare_sample<T>(const TrainSample&, const ToyModel<T>&, const ToyModel<T>&); \
  template ag::Var c2c_loss<T>(ag::Tape<T>&, const typename ToyModel<T>::Bound&, const ToyModel<T>&,        \
                               const BoundFuser<T>&, const FuserConfig&, const PreparedSample<T>&,          \
                               const GateState&, T);                                                        \
  template StepResult train_step<T>(const std::vector<const PreparedSample<T>*>&, FuserParams<T>&,          \
                                    const ToyModel<T>&, const ToyModel<T>&, TrainState<T>&,                 \
                                    const TrainConfig&, int);                                               \
  template double evaluate_loss<T>(const std::vector<PreparedSample<T>>&, const FuserParams<T>&,            \
                                   const ToyModel<T>&);                                                     \
  template TrainResult<T> train<T>(const std::vector<TrainSample>&, const ToyModel<T>&, const ToyModel<T>&, \
                                   const FuserConfig&, const TrainConfig&,                                  \
                                   const std::function<void(int, const StepResult&)>&);                    \
  template double pretrain_language_model<T>(ToyModel<T>&, const std::vector<LmExample>&, const LmTrainConfig&);

C2C_INSTANTIATE_TRAINER(float)
C2C_INSTANTIATE_TRAINER(double)

}  // namespace c2c
