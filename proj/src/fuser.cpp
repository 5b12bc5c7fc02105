#include "c2c/fuser.hpp"

#include <algorithm>
#include <cmath>

#include "c2c/error.hpp"
#include "c2c/rng.hpp"

namespace c2c {

void FuserConfig::validate() const {
  require(recv_kv_heads >= 1 && recv_kv_dim >= 1 && shr_kv_dim >= 1 && hidden_dim >= 1,
          ErrorKind::kInvalidInput, "fuser dimensions must be >= 1");
  require(recv_kv_dim % recv_kv_heads == 0, ErrorKind::kInvalidInput,
          "recv_kv_dim must be a multiple of recv_kv_heads");
  require(gate_threshold > 0.0 && gate_threshold < 1.0, ErrorKind::kInvalidInput,
          "gate_threshold must lie in (0, 1)");
  require(!layer_map.entries.empty(), ErrorKind::kInvalidInput, "empty layer map");
  for (int e : layer_map.entries)
    require(e >= kUnaligned, ErrorKind::kInvalidInput, "invalid layer map entry");
}

int64_t FuserConfig::parameter_count() const {
  const int64_t r = recv_kv_dim, s = shr_kv_dim, h = hidden_dim, heads = recv_kv_heads;
  const int64_t in = r + sharer_feature_dim();
  int64_t branch = (in * r + r) + (r * h + h + h * r + r) + (in * heads + heads);
  if (variant == FuserVariant::kSharerMlp) branch += (s * h + h) + (h * h + h) + (h * r + r);
  return static_cast<int64_t>(fused_layers()) * (2 * branch + 1);
}

namespace {

template <typename T>
void shape_branch(FuserBranch<T>& b, const FuserConfig& c) {
  const int r = c.recv_kv_dim, h = c.hidden_dim, heads = c.recv_kv_heads;
  const int in = r + c.sharer_feature_dim();
  b.proj_w = Matrix<T>(r, in);
  b.proj_b = Matrix<T>(1, r);
  b.fuse_w1 = Matrix<T>(h, r);
  b.fuse_b1 = Matrix<T>(1, h);
  b.fuse_w2 = Matrix<T>(r, h);
  b.fuse_b2 = Matrix<T>(1, r);
  b.head_w = Matrix<T>(heads, in);
  b.head_b = Matrix<T>(1, heads);
  if (c.variant == FuserVariant::kSharerMlp) {
    b.pre_w1 = Matrix<T>(h, c.shr_kv_dim);
    b.pre_b1 = Matrix<T>(1, h);
    b.pre_w2 = Matrix<T>(h, h);
    b.pre_b2 = Matrix<T>(1, h);
    b.pre_w3 = Matrix<T>(r, h);
    b.pre_b3 = Matrix<T>(1, r);
  }
}

template <typename M, typename Branch>
void name_branch(std::vector<std::pair<std::string, M*>>& out, const std::string& p, Branch& b,
                 bool sharer_mlp) {
  if (sharer_mlp) {
    out.emplace_back(p + "pre_w1", &b.pre_w1);
    out.emplace_back(p + "pre_b1", &b.pre_b1);
    out.emplace_back(p + "pre_w2", &b.pre_w2);
    out.emplace_back(p + "pre_b2", &b.pre_b2);
    out.emplace_back(p + "pre_w3", &b.pre_w3);
    out.emplace_back(p + "pre_b3", &b.pre_b3);
  }
  out.emplace_back(p + "proj_w", &b.proj_w);
  out.emplace_back(p + "proj_b", &b.proj_b);
  out.emplace_back(p + "fuse_w1", &b.fuse_w1);
  out.emplace_back(p + "fuse_b1", &b.fuse_b1);
  out.emplace_back(p + "fuse_w2", &b.fuse_w2);
  out.emplace_back(p + "fuse_b2", &b.fuse_b2);
  out.emplace_back(p + "head_w", &b.head_w);
  out.emplace_back(p + "head_b", &b.head_b);
}

}  // namespace

template <typename T>
std::vector<std::pair<std::string, Matrix<T>*>> FuserParams<T>::named() {
  std::vector<std::pair<std::string, Matrix<T>*>> out;
  const bool mlp = config.variant == FuserVariant::kSharerMlp;
  for (auto& l : layers) {
    const std::string p = "layers." + std::to_string(l.recv_layer) + ".";
    name_branch(out, p + "key.", l.key, mlp);
    name_branch(out, p + "value.", l.value, mlp);
    out.emplace_back(p + "gate_logit", &l.gate_logit);
  }
  return out;
}

template <typename T>
std::vector<std::pair<std::string, const Matrix<T>*>> FuserParams<T>::named() const {
  std::vector<std::pair<std::string, const Matrix<T>*>> out;
  for (auto& [name, m] : const_cast<FuserParams*>(this)->named()) out.emplace_back(name, m);
  return out;
}

template <typename T>
int64_t FuserParams<T>::parameter_count() const {
  int64_t n = 0;
  for (const auto& [name, m] : named()) n += static_cast<int64_t>(m->size());
  return n;
}

template <typename T>
FuserParams<T> FuserParams<T>::zeros_like(const FuserConfig& config) {
  config.validate();
  FuserParams p;
  p.config = config;
  for (int n = 0; n < config.layer_map.num_receiver_layers(); ++n) {
    const int s = config.layer_map.entries[n];
    if (s == kUnaligned) continue;
    FuserLayer<T> l;
    l.recv_layer = n;
    l.shr_layer = s;
    shape_branch(l.key, config);
    shape_branch(l.value, config);
    l.gate_logit = Matrix<T>(1, 1);
    p.layers.push_back(std::move(l));
  }
  return p;
}

template <typename T>
template <typename U>
FuserParams<U> FuserParams<T>::cast() const {
  FuserParams<U> out = FuserParams<U>::zeros_like(config);
  auto src = named();
  auto dst = out.named();
  for (size_t i = 0; i < src.size(); ++i) *dst[i].second = src[i].second->template cast<U>();
  return out;
}

FuserConfig make_fuser_config(const ModelInfo& receiver, const ModelInfo& sharer, LayerMap layer_map,
                              int hidden_dim, FuserVariant variant) {
  require(layer_map.num_receiver_layers() == receiver.num_layers, ErrorKind::kCacheMismatch,
          "layer map does not cover the receiver's layers");
  for (int e : layer_map.entries)
    require(e < sharer.num_layers, ErrorKind::kCacheMismatch, "layer map points past the sharer's depth");
  FuserConfig c;
  c.layer_map = std::move(layer_map);
  c.recv_kv_heads = receiver.kv_heads;
  c.recv_kv_dim = receiver.kv_dim();
  c.shr_kv_dim = sharer.kv_dim();
  c.hidden_dim = hidden_dim;
  c.variant = variant;
  c.validate();
  return c;
}

namespace {

template <typename T>
void fill_normal(Matrix<T>& m, Rng& rng, double stddev) {
  for (size_t i = 0; i < m.size(); ++i) m.data()[i] = static_cast<T>(rng.normal() * stddev);
}

template <typename T>
void init_branch(FuserBranch<T>& b, Rng& rng, bool sharer_mlp) {
  auto fan_in = [](const Matrix<T>& w) { return 1.0 / std::sqrt(static_cast<double>(w.cols())); };
  if (sharer_mlp) {
    fill_normal(b.pre_w1, rng, fan_in(b.pre_w1));
    fill_normal(b.pre_w2, rng, fan_in(b.pre_w2));
    fill_normal(b.pre_w3, rng, fan_in(b.pre_w3));
  }
  fill_normal(b.proj_w, rng, fan_in(b.proj_w));
  fill_normal(b.fuse_w1, rng, fan_in(b.fuse_w1));
  // fuse_w2 / fuse_b2 stay zero: the fused cache starts equal to the receiver's.
  fill_normal(b.head_w, rng, fan_in(b.head_w));
}

}  // namespace

template <typename T>
FuserParams<T> init_fuser(const FuserConfig& config, uint64_t seed) {
  FuserParams<T> p = FuserParams<T>::zeros_like(config);
  Rng rng(seed);
  const bool mlp = config.variant == FuserVariant::kSharerMlp;
  for (auto& l : p.layers) {
    init_branch(l.key, rng, mlp);
    init_branch(l.value, rng, mlp);
    l.gate_logit(0, 0) = T(2);
  }
  return p;
}

double gumbel_sigmoid(double logit, const GateState& state, double threshold) {
  if (state.mode == GateMode::kHardEval) {
    return logit > std::log(threshold / (1.0 - threshold)) ? 1.0 : 0.0;
  }
  require(state.temperature > 0.0, ErrorKind::kInvalidInput, "gate temperature must be positive");
  Rng rng(state.noise_seed);
  const double z = (logit + rng.gumbel_difference()) / state.temperature;
  return 1.0 / (1.0 + std::exp(-z));
}

double anneal_temperature(int step, int total_steps, double t_start, double t_end) {
  require(total_steps >= 1, ErrorKind::kInvalidInput, "total_steps must be >= 1");
  require(step >= 0 && step <= total_steps, ErrorKind::kInvalidInput, "step outside the schedule");
  if (step == total_steps) return t_end;
  return t_start + (t_end - t_start) * static_cast<double>(step) / total_steps;
}

GateState layer_gate_state(const GateState& state, int fused_index) {
  GateState s = state;
  s.noise_seed = mix_seed(state.noise_seed, static_cast<uint64_t>(fused_index));
  return s;
}

template <typename T>
BoundFuser<T> bind_fuser(ag::Tape<T>& tape, const FuserParams<T>& params, FuserParams<T>* grads) {
  auto leaf = [&](const Matrix<T>& w, Matrix<T>* g) -> ag::Var {
    if (w.empty()) return {};
    return grads ? tape.param(w, g) : tape.constant(w);
  };
  auto bind_branch = [&](const FuserBranch<T>& b, FuserBranch<T>* g) {
    BoundBranch<T> o;
    o.pre_w1 = leaf(b.pre_w1, g ? &g->pre_w1 : nullptr);
    o.pre_b1 = leaf(b.pre_b1, g ? &g->pre_b1 : nullptr);
    o.pre_w2 = leaf(b.pre_w2, g ? &g->pre_w2 : nullptr);
    o.pre_b2 = leaf(b.pre_b2, g ? &g->pre_b2 : nullptr);
    o.pre_w3 = leaf(b.pre_w3, g ? &g->pre_w3 : nullptr);
    o.pre_b3 = leaf(b.pre_b3, g ? &g->pre_b3 : nullptr);
    o.proj_w = leaf(b.proj_w, g ? &g->proj_w : nullptr);
    o.proj_b = leaf(b.proj_b, g ? &g->proj_b : nullptr);
    o.fuse_w1 = leaf(b.fuse_w1, g ? &g->fuse_w1 : nullptr);
    o.fuse_b1 = leaf(b.fuse_b1, g ? &g->fuse_b1 : nullptr);
    o.fuse_w2 = leaf(b.fuse_w2, g ? &g->fuse_w2 : nullptr);
    o.fuse_b2 = leaf(b.fuse_b2, g ? &g->fuse_b2 : nullptr);
    o.head_w = leaf(b.head_w, g ? &g->head_w : nullptr);
    o.head_b = leaf(b.head_b, g ? &g->head_b : nullptr);
    return o;
  };
  if (grads) require(grads->layers.size() == params.layers.size(), ErrorKind::kInvalidInput,
                     "gradient buffers do not match the fuser");
  BoundFuser<T> out;
  for (size_t i = 0; i < params.layers.size(); ++i) {
    const auto& l = params.layers[i];
    auto* g = grads ? &grads->layers[i] : nullptr;
    out.layers.push_back({bind_branch(l.key, g ? &g->key : nullptr), bind_branch(l.value, g ? &g->value : nullptr),
                          leaf(l.gate_logit, g ? &g->gate_logit : nullptr)});
  }
  return out;
}

template <typename T>
ag::Var fuse_branch(ag::Tape<T>& tape, const FuserConfig& config, const BoundBranch<T>& b, ag::Var recv,
                    ag::Var shr, ag::Var gate, const std::vector<bool>& mask, double* mean_head_weight) {
  ag::Var features = shr;
  if (config.variant == FuserVariant::kSharerMlp) {
    features = ag::gelu(tape, ag::linear(tape, features, b.pre_w1, b.pre_b1));
    features = ag::gelu(tape, ag::linear(tape, features, b.pre_w2, b.pre_b2));
    features = ag::linear(tape, features, b.pre_w3, b.pre_b3);
  }
  ag::Var x = ag::concat_cols(tape, recv, features);
  ag::Var projected = ag::linear(tape, x, b.proj_w, b.proj_b);
  ag::Var delta = ag::linear(tape, ag::gelu(tape, ag::linear(tape, projected, b.fuse_w1, b.fuse_b1)),
                             b.fuse_w2, b.fuse_b2);
  ag::Var heads = ag::sigmoid(tape, ag::linear(tape, x, b.head_w, b.head_b));
  if (mean_head_weight) {
    const Matrix<T>& hv = tape.value(heads);
    double total = 0.0;
    int count = 0;
    for (int i = 0; i < hv.rows(); ++i) {
      if (!mask[i]) continue;
      for (int h = 0; h < hv.cols(); ++h) total += hv(i, h);
      count += hv.cols();
    }
    *mean_head_weight = count ? total / count : 0.0;
  }
  return ag::gated_residual(tape, recv, delta, heads, gate, mask, config.recv_kv_heads);
}

template <typename T>
Matrix<T> gather_rows(const Matrix<T>& shr, const std::vector<int>& map) {
  Matrix<T> out(static_cast<int>(map.size()), shr.cols());
  for (size_t p = 0; p < map.size(); ++p) {
    if (map[p] == kUnaligned) continue;
    require(map[p] >= 0 && map[p] < shr.rows(), ErrorKind::kCacheMismatch, "alignment points past the sharer cache");
    std::copy(shr.row(map[p]).begin(), shr.row(map[p]).end(), out.row(static_cast<int>(p)).begin());
  }
  return out;
}

template <typename T>
std::vector<TapeKV<T>> fuse_cache(ag::Tape<T>& tape, const BoundFuser<T>& bound, const FuserConfig& config,
                                  const std::vector<TapeKV<T>>& recv, const KVCache<T>& shr_cache,
                                  const TokenAlignment& alignment, const GateState& gate_state,
                                  FuseTrace* trace) {
  const LayerMap& lm = config.layer_map;
  require(static_cast<int>(recv.size()) == lm.num_receiver_layers(), ErrorKind::kCacheMismatch,
          "receiver cache depth does not match the fuser's layer map");
  require(static_cast<int>(bound.layers.size()) == lm.num_aligned(), ErrorKind::kCacheMismatch,
          "fuser parameters do not match the layer map");
  const int n = tape.value(recv.front().keys).rows();
  require(alignment.receiver_len() == n, ErrorKind::kCacheMismatch,
          "alignment length differs from the receiver cache length");
  require(shr_cache.seq_len() == alignment.sharer_len(), ErrorKind::kCacheMismatch,
          "sharer cache length differs from the aligned sharer frame");
  require(shr_cache.kv_dim() == config.shr_kv_dim, ErrorKind::kCacheMismatch,
          "sharer cache width does not match the fuser");
  for (const auto& kv : recv)
    require(tape.value(kv.keys).cols() == config.recv_kv_dim && tape.value(kv.keys).rows() == n &&
                tape.value(kv.values).rows() == n,
            ErrorKind::kCacheMismatch, "receiver cache shape does not match the fuser");
  std::vector<bool> mask(n);
  for (int p = 0; p < n; ++p) mask[p] = alignment.map[p] != kUnaligned;

  if (trace) *trace = {};
  std::vector<TapeKV<T>> out = recv;
  int f = 0;
  for (int layer = 0; layer < lm.num_receiver_layers(); ++layer) {
    const int s = lm.entries[layer];
    if (s == kUnaligned) continue;
    require(s < shr_cache.num_layers(), ErrorKind::kCacheMismatch, "layer map points past the sharer cache");
    const auto& bl = bound.layers[f];
    const GateState gs = layer_gate_state(gate_state, f);
    ++f;
    const double logit = tape.value(bl.gate_logit)(0, 0);
    ag::Var gate;
    double gate_value;
    if (gs.mode == GateMode::kHardEval) {
      gate_value = gumbel_sigmoid(logit, gs, config.gate_threshold);
      if (gate_value == 0.0) {
        if (trace) {
          trace->gate.push_back(0.0);
          trace->key_head_weight.push_back(0.0);
          trace->value_head_weight.push_back(0.0);
        }
        continue;
      }
      gate = tape.constant(Matrix<T>(1, 1, T(1)));
    } else {
      require(gs.temperature > 0.0, ErrorKind::kInvalidInput, "gate temperature must be positive");
      Rng noise(gs.noise_seed);
      gate = ag::noisy_sigmoid(tape, bl.gate_logit, static_cast<T>(noise.gumbel_difference()),
                               static_cast<T>(gs.temperature));
      gate_value = tape.value(gate)(0, 0);
    }
    const auto& shr_layer = shr_cache.layer(s);
    ag::Var shr_k = tape.constant(gather_rows(shr_layer.keys, alignment.map));
    ag::Var shr_v = tape.constant(gather_rows(shr_layer.values, alignment.map));
    double wk = 0.0, wv = 0.0;
    out[layer].keys = fuse_branch(tape, config, bl.key, recv[layer].keys, shr_k, gate, mask, &wk);
    out[layer].values = fuse_branch(tape, config, bl.value, recv[layer].values, shr_v, gate, mask, &wv);
    if (trace) {
      trace->gate.push_back(gate_value);
      trace->key_head_weight.push_back(wk);
      trace->value_head_weight.push_back(wv);
    }
  }
  return out;
}

template <typename T>
KVCache<T> fuse_cache(const KVCache<T>& recv_cache, const KVCache<T>& shr_cache, const TokenAlignment& alignment,
                      const FuserParams<T>& params, const GateState& gate_state, FuseTrace* trace) {
  recv_cache.validate();
  shr_cache.validate();
  require(recv_cache.kv_dim() == params.config.recv_kv_dim, ErrorKind::kCacheMismatch,
          "receiver cache width does not match the fuser");
  ag::Tape<T> tape;
  const BoundFuser<T> bound = bind_fuser(tape, params);
  const auto fused = fuse_cache(tape, bound, params.config, constant_cache(tape, recv_cache), shr_cache,
                                alignment, gate_state, trace);
  KVCache<T> out(recv_cache.num_layers(), recv_cache.kv_heads(), recv_cache.head_dim());
  for (int l = 0; l < out.num_layers(); ++l) {
    out.layer(l).keys = tape.value(fused[l].keys);
    out.layer(l).values = tape.value(fused[l].values);
  }
  return out;
}

template <typename T>
LayerKV<T> fuse_layer(const LayerKV<T>& recv, const LayerKV<T>& shr_gathered, const std::vector<bool>& mask,
                      const FuserConfig& config, const FuserLayer<T>& layer, const GateState& gate_state) {
  require(recv.keys.rows() == shr_gathered.keys.rows() && recv.values.rows() == shr_gathered.values.rows() &&
              recv.keys.rows() == static_cast<int>(mask.size()),
          ErrorKind::kCacheMismatch, "receiver and sharer inputs differ in seq_len");
  require(recv.keys.cols() == config.recv_kv_dim && shr_gathered.keys.cols() == config.shr_kv_dim,
          ErrorKind::kCacheMismatch, "layer widths do not match the fuser");
  const double logit = layer.gate_logit(0, 0);
  const double g = gumbel_sigmoid(logit, gate_state, config.gate_threshold);
  if (gate_state.mode == GateMode::kHardEval && g == 0.0) return recv;
  ag::Tape<T> tape;
  FuserParams<T> single;
  single.config = config;
  single.layers.push_back(layer);
  const BoundFuser<T> bound = bind_fuser(tape, single);
  ag::Var gate = tape.constant(Matrix<T>(1, 1, static_cast<T>(g)));
  LayerKV<T> out;
  out.keys = tape.value(fuse_branch(tape, config, bound.layers[0].key, tape.constant(recv.keys),
                                    tape.constant(shr_gathered.keys), gate, mask));
  out.values = tape.value(fuse_branch(tape, config, bound.layers[0].value, tape.constant(recv.values),
                                      tape.constant(shr_gathered.values), gate, mask));
  return out;
}

std::string to_string(FuserVariant v) { return v == FuserVariant::kStandard ? "standard" : "c2c_c"; }

#define C2C_INSTANTIATE_FUSER(T)                                                                       \
  template struct FuserParams<T>;                                                                      \
  template FuserParams<T> init_fuser<T>(const FuserConfig&, uint64_t);                                 \
  template BoundFuser<T> bind_fuser<T>(ag::Tape<T>&, const FuserParams<T>&, FuserParams<T>*);          \
  template ag::Var fuse_branch<T>(ag::Tape<T>&, const FuserConfig&, const BoundBranch<T>&, ag::Var,    \
                                  ag::Var, ag::Var, const std::vector<bool>&, double*);                \
  template Matrix<T> gather_rows<T>(const Matrix<T>&, const std::vector<int>&);                       \
  template std::vector<TapeKV<T>> fuse_cache<T>(ag::Tape<T>&, const BoundFuser<T>&, const FuserConfig&, \
                                                const std::vector<TapeKV<T>>&, const KVCache<T>&,      \
                                                const TokenAlignment&, const GateState&, FuseTrace*);  \
  template KVCache<T> fuse_cache<T>(const KVCache<T>&, const KVCache<T>&, const TokenAlignment&,       \
                                    const FuserParams<T>&, const GateState&, FuseTrace*);              \
  template LayerKV<T> fuse_layer<T>(const LayerKV<T>&, const LayerKV<T>&, const std::vector<bool>&,    \
                                    const FuserConfig&, const FuserLayer<T>&, const GateState&);

C2C_INSTANTIATE_FUSER(float)
C2C_INSTANTIATE_FUSER(double)
template FuserParams<double> FuserParams<float>::cast<double>() const;
template FuserParams<float> FuserParams<double>::cast<float>() const;
template FuserParams<float> FuserParams<float>::cast<float>() const;
template FuserParams<double> FuserParams<double>::cast<double>() const;

}  // namespace c2c
