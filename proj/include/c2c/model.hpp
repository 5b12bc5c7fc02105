#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "c2c/autograd.hpp"
#include "c2c/kv_cache.hpp"

namespace c2c {

struct ToyModelConfig {
  int num_layers = 2;
  int kv_heads = 2;
  int head_dim = 8;
  int vocab_size = 64;
  int hidden_dim = 32;  // MLP intermediate width
  uint64_t seed = 42;

  int model_dim() const noexcept { return kv_heads * head_dim; }
  void validate() const;
  friend bool operator==(const ToyModelConfig&, const ToyModelConfig&) = default;
};

// What the rest of the library needs to know about a causal LM.
struct ModelInfo {
  int num_layers = 0;
  int kv_heads = 0;
  int head_dim = 0;
  int vocab_size = 0;
  std::string tokenizer_id;
  bool frozen = true;

  int kv_dim() const noexcept { return kv_heads * head_dim; }
};

template <typename T>
struct ToyWeights {
  struct Layer {
    Matrix<T> attn_norm;  // [1, d]
    Matrix<T> wq, wk, wv, wo;  // [d, d]
    Matrix<T> mlp_norm;  // [1, d]
    Matrix<T> w_up;  // [hidden, d]
    Matrix<T> w_down;  // [d, hidden]
  };
  Matrix<T> embed;  // [vocab, d]
  std::vector<Layer> layers;
  Matrix<T> final_norm;  // [1, d]
  Matrix<T> lm_head;  // [vocab, d]

  // Every tensor in declaration order (the checkpoint order).
  std::vector<std::pair<std::string, Matrix<T>*>> named();
  std::vector<std::pair<std::string, const Matrix<T>*>> named() const;

  static ToyWeights zeros_like(const ToyModelConfig& config);
};

template <typename T>
struct PrefillResult {
  KVCache<T> cache;
  std::vector<T> logits;  // last position
};

template <typename T>
struct TapeKV {
  ag::Var keys;
  ag::Var values;
};

// Deterministic pre-norm decoder-only transformer with rotary positions, full
// multi-head attention and a GELU MLP. Parameters are immutable after
// construction; every inference method is a pure function of (weights, inputs).
template <typename T>
class ToyModel {
 public:
  explicit ToyModel(const ToyModelConfig& config);
  ToyModel(const ToyModelConfig& config, ToyWeights<T> weights);

  const ToyModelConfig& config() const noexcept { return config_; }
  ModelInfo info() const;
  const ToyWeights<T>& weights() const noexcept { return weights_; }
  ToyWeights<T>& mutable_weights() noexcept { return weights_; }

  bool frozen() const noexcept { return frozen_; }
  void set_frozen(bool frozen) noexcept { frozen_ = frozen; }
  const std::string& tokenizer_id() const noexcept { return tokenizer_id_; }
  void set_tokenizer_id(std::string id) { tokenizer_id_ = std::move(id); }

  PrefillResult<T> prefill(std::span<const int> tokens) const;
  // Appends `token` at position cache.seq_len() and returns its logits.
  std::vector<T> decode_step(int token, KVCache<T>& cache) const;
  // Logits of the last cached position, recomputed from its token while
  // attending to `cache` as given. Used to start decoding from a substituted
  // cache; with the model's own cache it equals the prefill logits exactly.
  std::vector<T> requery_last(int token, const KVCache<T>& cache) const;
  // Greedy decoding. With `cache_override` the prompt's cache is replaced
  // before the first prediction.
  std::vector<int> generate(std::span<const int> prompt, const KVCache<T>* cache_override,
                            int max_new, std::optional<int> stop_token = std::nullopt) const;

  template <typename U>
  ToyModel<U> cast() const;

  // -- tape interface --------------------------------------------------------
  struct BoundLayer {
    ag::Var attn_norm, wq, wk, wv, wo, mlp_norm, w_up, w_down;
  };
  struct Bound {
    ag::Var embed;
    std::vector<BoundLayer> layers;
    ag::Var final_norm, lm_head;
  };
  // Leaves for every weight. With `grads` the weights are trainable and their
  // gradients accumulate there; otherwise they are constants.
  Bound bind(ag::Tape<T>& tape, ToyWeights<T>* grads = nullptr) const;

  enum class LogitRows { kNone, kLast, kAll };
  struct Output {
    ag::Var logits;  // [rows, vocab] per LogitRows
    std::vector<TapeKV<T>> appended;  // per layer, rows [requery_rows, n)
  };
  // Runs `tokens` at `positions` against `past` (one entry per layer, may be
  // empty). The first `requery_rows` rows are re-queries of positions already
  // in `past`: they attend but their own keys/values are not appended. The
  // remaining rows must sit at positions past_len, past_len + 1, ...
  Output forward(ag::Tape<T>& tape, const Bound& bound, std::span<const int> tokens,
                 std::span<const int> positions, const std::vector<TapeKV<T>>& past,
                 int requery_rows, LogitRows logit_rows) const;

 private:
  void check_tokens(std::span<const int> tokens) const;
  void check_cache(const KVCache<T>& cache) const;

  ToyModelConfig config_;
  ToyWeights<T> weights_;
  bool frozen_ = true;
  std::string tokenizer_id_ = "toy";
};

// Wraps cache matrices as tape constants; `cache` must outlive the tape.
template <typename T>
std::vector<TapeKV<T>> constant_cache(ag::Tape<T>& tape, const KVCache<T>& cache);

template <typename T>
int argmax(std::span<const T> logits);

}  // namespace c2c
