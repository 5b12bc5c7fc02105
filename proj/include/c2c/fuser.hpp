#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "c2c/alignment.hpp"
#include "c2c/autograd.hpp"
#include "c2c/kv_cache.hpp"
#include "c2c/model.hpp"

namespace c2c {

enum class FuserVariant { kStandard, kSharerMlp };

struct FuserConfig {
  LayerMap layer_map;
  int recv_kv_heads = 1;
  int recv_kv_dim = 8;
  int shr_kv_dim = 8;
  int hidden_dim = 16;
  FuserVariant variant = FuserVariant::kStandard;
  double gate_threshold = 0.5;

  void validate() const;
  int fused_layers() const noexcept { return layer_map.num_aligned(); }
  // Width of the sharer features after the optional pre-projection.
  int sharer_feature_dim() const noexcept {
    return variant == FuserVariant::kSharerMlp ? recv_kv_dim : shr_kv_dim;
  }
  // Closed-form parameter count. With r = recv_kv_dim, s = shr_kv_dim,
  // h = hidden_dim, H = recv_kv_heads and in = r + sharer_feature_dim():
  //   branch   = (in*r + r) + (r*h + h + h*r + r) + (in*H + H)
  //   sharer MLP variant adds (s*h + h) + (h*h + h) + (h*r + r) per branch
  //   total    = fused_layers * (2 * branch + 1)
  int64_t parameter_count() const;
};

// One of the two per-layer fusers (keys or values).
template <typename T>
struct FuserBranch {
  Matrix<T> proj_w, proj_b;  // [r, in], [1, r]
  Matrix<T> fuse_w1, fuse_b1;  // [h, r], [1, h]
  Matrix<T> fuse_w2, fuse_b2;  // [r, h], [1, r]; zero at init
  Matrix<T> head_w, head_b;  // [H, in], [1, H]
  // Sharer pre-projection, only for FuserVariant::kSharerMlp.
  Matrix<T> pre_w1, pre_b1, pre_w2, pre_b2, pre_w3, pre_b3;
};

template <typename T>
struct FuserLayer {
  int recv_layer = 0;
  int shr_layer = 0;
  FuserBranch<T> key, value;
  Matrix<T> gate_logit;  // [1, 1], shared by keys and values
};

template <typename T>
struct FuserParams {
  FuserConfig config;
  std::vector<FuserLayer<T>> layers;  // one per aligned receiver layer, ascending

  std::vector<std::pair<std::string, Matrix<T>*>> named();
  std::vector<std::pair<std::string, const Matrix<T>*>> named() const;
  int64_t parameter_count() const;

  static FuserParams zeros_like(const FuserConfig& config);
  template <typename U>
  FuserParams<U> cast() const;
};

FuserConfig make_fuser_config(const ModelInfo& receiver, const ModelInfo& sharer, LayerMap layer_map,
                              int hidden_dim, FuserVariant variant = FuserVariant::kStandard);

template <typename T>
FuserParams<T> init_fuser(const FuserConfig& config, uint64_t seed);

enum class GateMode { kSoftTrain, kHardEval };

struct GateState {
  GateMode mode = GateMode::kHardEval;
  double temperature = 1.0;
  uint64_t noise_seed = 0;
};

// Soft: sigmoid((logit + G) / temperature) with G a logistic sample drawn from
// noise_seed. Hard: 1 when the logit exceeds logit(threshold), else 0.
double gumbel_sigmoid(double logit, const GateState& state, double threshold = 0.5);

// Linear interpolation from t_start at step 0 to t_end at total_steps.
double anneal_temperature(int step, int total_steps, double t_start = 1.0, double t_end = 0.001);

// Gate state for one fused layer: the noise seed is derived per layer.
GateState layer_gate_state(const GateState& state, int fused_index);

template <typename T>
struct BoundBranch {
  ag::Var proj_w, proj_b, fuse_w1, fuse_b1, fuse_w2, fuse_b2, head_w, head_b;
  ag::Var pre_w1, pre_b1, pre_w2, pre_b2, pre_w3, pre_b3;
};

template <typename T>
struct BoundFuser {
  struct Layer {
    BoundBranch<T> key, value;
    ag::Var gate_logit;
  };
  std::vector<Layer> layers;
};

// Leaves for every fuser tensor; with `grads` they are trainable.
template <typename T>
BoundFuser<T> bind_fuser(ag::Tape<T>& tape, const FuserParams<T>& params, FuserParams<T>* grads = nullptr);

// Per fused layer diagnostics from a fusion pass.
struct FuseTrace {
  std::vector<double> gate;  // gate value used
  std::vector<double> key_head_weight;  // mean dynamic head weight over aligned rows
  std::vector<double> value_head_weight;
};

// Fuses one branch: recv + gate * head_weights * Fuse(Proj(concat(recv, shr))).
// `shr` holds sharer features already gathered to receiver positions; rows
// with mask false pass `recv` through.
template <typename T>
ag::Var fuse_branch(ag::Tape<T>& tape, const FuserConfig& config, const BoundBranch<T>& branch,
                    ag::Var recv, ag::Var shr, ag::Var gate, const std::vector<bool>& mask,
                    double* mean_head_weight = nullptr);

// Sharer rows gathered to receiver positions (zero rows where unaligned).
template <typename T>
Matrix<T> gather_rows(const Matrix<T>& shr, const std::vector<int>& map);

// Whole-cache fusion on a tape. Returns one (K, V) pair per receiver layer;
// unmapped layers and hard-closed gates return the receiver tensors as given.
template <typename T>
std::vector<TapeKV<T>> fuse_cache(ag::Tape<T>& tape, const BoundFuser<T>& bound, const FuserConfig& config,
                                  const std::vector<TapeKV<T>>& recv, const KVCache<T>& shr_cache,
                                  const TokenAlignment& alignment, const GateState& gate_state,
                                  FuseTrace* trace = nullptr);

// Inference entry point.
template <typename T>
KVCache<T> fuse_cache(const KVCache<T>& recv_cache, const KVCache<T>& shr_cache,
                      const TokenAlignment& alignment, const FuserParams<T>& params,
                      const GateState& gate_state, FuseTrace* trace = nullptr);

// Single-layer inference helper over explicit K/V matrices.
template <typename T>
LayerKV<T> fuse_layer(const LayerKV<T>& recv, const LayerKV<T>& shr_gathered, const std::vector<bool>& mask,
                      const FuserConfig& config, const FuserLayer<T>& layer, const GateState& gate_state);

std::string to_string(FuserVariant v);

}  // namespace c2c
