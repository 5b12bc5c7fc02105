#include "c2c/model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "c2c/rng.hpp"

namespace c2c {

void ToyModelConfig::validate() const {
  require(num_layers >= 1 && kv_heads >= 1 && head_dim >= 1 && vocab_size >= 1 && hidden_dim >= 1,
          ErrorKind::kInvalidInput, "toy model dimensions must be >= 1");
  require(head_dim % 2 == 0, ErrorKind::kInvalidInput, "rotary embedding needs an even head_dim");
}

template <typename T>
std::vector<std::pair<std::string, Matrix<T>*>> ToyWeights<T>::named() {
  std::vector<std::pair<std::string, Matrix<T>*>> out;
  out.emplace_back("embed", &embed);
  for (size_t i = 0; i < layers.size(); ++i) {
    const std::string p = "layers." + std::to_string(i) + ".";
    Layer& l = layers[i];
    out.emplace_back(p + "attn_norm", &l.attn_norm);
    out.emplace_back(p + "wq", &l.wq);
    out.emplace_back(p + "wk", &l.wk);
    out.emplace_back(p + "wv", &l.wv);
    out.emplace_back(p + "wo", &l.wo);
    out.emplace_back(p + "mlp_norm", &l.mlp_norm);
    out.emplace_back(p + "w_up", &l.w_up);
    out.emplace_back(p + "w_down", &l.w_down);
  }
  out.emplace_back("final_norm", &final_norm);
  out.emplace_back("lm_head", &lm_head);
  return out;
}

template <typename T>
std::vector<std::pair<std::string, const Matrix<T>*>> ToyWeights<T>::named() const {
  auto mut = const_cast<ToyWeights*>(this)->named();
  std::vector<std::pair<std::string, const Matrix<T>*>> out;
  for (auto& [name, m] : mut) out.emplace_back(name, m);
  return out;
}

template <typename T>
ToyWeights<T> ToyWeights<T>::zeros_like(const ToyModelConfig& c) {
  const int d = c.model_dim();
  ToyWeights w;
  w.embed = Matrix<T>(c.vocab_size, d);
  w.layers.resize(c.num_layers);
  for (auto& l : w.layers) {
    l.attn_norm = Matrix<T>(1, d);
    l.wq = Matrix<T>(d, d);
    l.wk = Matrix<T>(d, d);
    l.wv = Matrix<T>(d, d);
    l.wo = Matrix<T>(d, d);
    l.mlp_norm = Matrix<T>(1, d);
    l.w_up = Matrix<T>(c.hidden_dim, d);
    l.w_down = Matrix<T>(d, c.hidden_dim);
  }
  w.final_norm = Matrix<T>(1, d);
  w.lm_head = Matrix<T>(c.vocab_size, d);
  return w;
}

namespace {

template <typename T>
void fill_normal(Matrix<T>& m, Rng& rng, double stddev) {
  for (size_t i = 0; i < m.size(); ++i) m.data()[i] = static_cast<T>(rng.normal() * stddev);
}

}  // namespace

template <typename T>
ToyModel<T>::ToyModel(const ToyModelConfig& config) : config_(config) {
  config_.validate();
  weights_ = ToyWeights<T>::zeros_like(config_);
  Rng rng(config_.seed);
  const double d = config_.model_dim();
  const double residual_scale = 1.0 / std::sqrt(2.0 * config_.num_layers);
  fill_normal(weights_.embed, rng, 1.0);
  for (auto& l : weights_.layers) {
    l.attn_norm.fill(T(1));
    fill_normal(l.wq, rng, 1.0 / std::sqrt(d));
    fill_normal(l.wk, rng, 1.0 / std::sqrt(d));
    fill_normal(l.wv, rng, 1.0 / std::sqrt(d));
    fill_normal(l.wo, rng, residual_scale / std::sqrt(d));
    l.mlp_norm.fill(T(1));
    fill_normal(l.w_up, rng, 1.0 / std::sqrt(d));
    fill_normal(l.w_down, rng, residual_scale / std::sqrt(static_cast<double>(config_.hidden_dim)));
  }
  weights_.final_norm.fill(T(1));
  fill_normal(weights_.lm_head, rng, 1.0 / std::sqrt(d));
}

template <typename T>
ToyModel<T>::ToyModel(const ToyModelConfig& config, ToyWeights<T> weights)
    : config_(config), weights_(std::move(weights)) {
  config_.validate();
  const ToyWeights<T> expected = ToyWeights<T>::zeros_like(config_);
  auto have = weights_.named();
  auto want = expected.named();
  require(have.size() == want.size(), ErrorKind::kInvalidInput, "weights do not match config");
  for (size_t i = 0; i < have.size(); ++i)
    require(have[i].second->same_shape(*want[i].second), ErrorKind::kInvalidInput,
            "weight " + have[i].first + " has the wrong shape");
}

template <typename T>
ModelInfo ToyModel<T>::info() const {
  return {config_.num_layers, config_.kv_heads, config_.head_dim, config_.vocab_size, tokenizer_id_, frozen_};
}

template <typename T>
void ToyModel<T>::check_tokens(std::span<const int> tokens) const {
  for (int t : tokens)
    require(t >= 0 && t < config_.vocab_size, ErrorKind::kInvalidInput,
            "token id " + std::to_string(t) + " outside vocabulary");
}

template <typename T>
void ToyModel<T>::check_cache(const KVCache<T>& cache) const {
  require(cache.num_layers() == config_.num_layers && cache.kv_heads() == config_.kv_heads &&
              cache.head_dim() == config_.head_dim,
          ErrorKind::kCacheMismatch, "cache shape does not match the model");
  cache.validate();
}

template <typename T>
typename ToyModel<T>::Bound ToyModel<T>::bind(ag::Tape<T>& tape, ToyWeights<T>* grads) const {
  auto leaf = [&](const Matrix<T>& w, Matrix<T>* g) {
    return grads ? tape.param(w, g) : tape.constant(w);
  };
  Bound b;
  b.embed = leaf(weights_.embed, grads ? &grads->embed : nullptr);
  b.layers.resize(weights_.layers.size());
  for (size_t i = 0; i < weights_.layers.size(); ++i) {
    const auto& l = weights_.layers[i];
    auto* g = grads ? &grads->layers[i] : nullptr;
    BoundLayer& bl = b.layers[i];
    bl.attn_norm = leaf(l.attn_norm, g ? &g->attn_norm : nullptr);
    bl.wq = leaf(l.wq, g ? &g->wq : nullptr);
    bl.wk = leaf(l.wk, g ? &g->wk : nullptr);
    bl.wv = leaf(l.wv, g ? &g->wv : nullptr);
    bl.wo = leaf(l.wo, g ? &g->wo : nullptr);
    bl.mlp_norm = leaf(l.mlp_norm, g ? &g->mlp_norm : nullptr);
    bl.w_up = leaf(l.w_up, g ? &g->w_up : nullptr);
    bl.w_down = leaf(l.w_down, g ? &g->w_down : nullptr);
  }
  b.final_norm = leaf(weights_.final_norm, grads ? &grads->final_norm : nullptr);
  b.lm_head = leaf(weights_.lm_head, grads ? &grads->lm_head : nullptr);
  return b;
}

template <typename T>
typename ToyModel<T>::Output ToyModel<T>::forward(ag::Tape<T>& tape, const Bound& bound,
                                                  std::span<const int> tokens,
                                                  std::span<const int> positions,
                                                  const std::vector<TapeKV<T>>& past,
                                                  int requery_rows, LogitRows logit_rows) const {
  const int n = static_cast<int>(tokens.size());
  require(n >= 1, ErrorKind::kInvalidInput, "forward needs at least one token");
  require(static_cast<int>(positions.size()) == n, ErrorKind::kInvalidInput,
          "forward needs one position per token");
  require(past.empty() || static_cast<int>(past.size()) == config_.num_layers,
          ErrorKind::kCacheMismatch, "past cache layer count does not match the model");
  check_tokens(tokens);
  const int past_len = past.empty() ? 0 : tape.value(past.front().keys).rows();
  require(requery_rows >= 0 && requery_rows <= n, ErrorKind::kInvalidInput, "bad requery_rows");
  for (int i = 0; i < requery_rows; ++i)
    require(positions[i] < past_len, ErrorKind::kCacheMismatch,
            "re-queried position is not in the cache");
  for (int i = requery_rows; i < n; ++i)
    require(positions[i] == past_len + (i - requery_rows), ErrorKind::kCacheMismatch,
            "appended positions must continue the cache");
  for (const auto& kv : past) {
    require(tape.value(kv.keys).rows() == past_len && tape.value(kv.values).rows() == past_len,
            ErrorKind::kCacheMismatch, "past cache layers disagree on seq_len");
    require(tape.value(kv.keys).cols() == config_.model_dim(), ErrorKind::kCacheMismatch,
            "past cache width does not match the model");
  }

  const int heads = config_.kv_heads;
  const int hd = config_.head_dim;
  Output out;
  ag::Var x = ag::embedding(tape, bound.embed, tokens);
  for (int l = 0; l < config_.num_layers; ++l) {
    const BoundLayer& bl = bound.layers[l];
    ag::Var h = ag::rms_norm(tape, x, bl.attn_norm);
    ag::Var q = ag::rope(tape, ag::linear(tape, h, bl.wq), positions, heads, hd);
    ag::Var k = ag::rope(tape, ag::linear(tape, h, bl.wk), positions, heads, hd);
    ag::Var v = ag::linear(tape, h, bl.wv);
    if (requery_rows > 0) {
      k = ag::slice_rows(tape, k, requery_rows, n);
      v = ag::slice_rows(tape, v, requery_rows, n);
    }
    out.appended.push_back({k, v});
    ag::Var keys = k;
    ag::Var values = v;
    if (!past.empty()) {
      keys = ag::concat_rows(tape, past[l].keys, k);
      values = ag::concat_rows(tape, past[l].values, v);
    }
    ag::Var att = ag::attention(tape, q, keys, values, positions, heads, hd);
    x = ag::add(tape, x, ag::linear(tape, att, bl.wo));
    ag::Var h2 = ag::rms_norm(tape, x, bl.mlp_norm);
    ag::Var mlp = ag::linear(tape, ag::gelu(tape, ag::linear(tape, h2, bl.w_up)), bl.w_down);
    x = ag::add(tape, x, mlp);
  }
  if (logit_rows != LogitRows::kNone) {
    ag::Var sel = logit_rows == LogitRows::kLast ? ag::slice_rows(tape, x, n - 1, n) : x;
    out.logits = ag::linear(tape, ag::rms_norm(tape, sel, bound.final_norm), bound.lm_head);
  }
  return out;
}

template <typename T>
std::vector<TapeKV<T>> constant_cache(ag::Tape<T>& tape, const KVCache<T>& cache) {
  std::vector<TapeKV<T>> out;
  for (const auto& l : cache.layers()) out.push_back({tape.constant(l.keys), tape.constant(l.values)});
  return out;
}

namespace {

template <typename T>
std::vector<T> row_vector(const Matrix<T>& m, int r) {
  return {m.row(r).begin(), m.row(r).end()};
}

}  // namespace

template <typename T>
PrefillResult<T> ToyModel<T>::prefill(std::span<const int> tokens) const {
  require(!tokens.empty(), ErrorKind::kInvalidInput, "prefill needs a non-empty token sequence");
  check_tokens(tokens);
  ag::Tape<T> tape;
  const Bound bound = bind(tape);
  std::vector<int> positions(tokens.size());
  std::iota(positions.begin(), positions.end(), 0);
  Output out = forward(tape, bound, tokens, positions, {}, 0, LogitRows::kLast);
  PrefillResult<T> result;
  result.cache = KVCache<T>(config_.num_layers, config_.kv_heads, config_.head_dim);
  for (int l = 0; l < config_.num_layers; ++l) {
    result.cache.layer(l).keys = tape.value(out.appended[l].keys);
    result.cache.layer(l).values = tape.value(out.appended[l].values);
  }
  result.logits = row_vector(tape.value(out.logits), 0);
  return result;
}

template <typename T>
std::vector<T> ToyModel<T>::decode_step(int token, KVCache<T>& cache) const {
  check_cache(cache);
  ag::Tape<T> tape;
  const Bound bound = bind(tape);
  const std::vector<TapeKV<T>> past = constant_cache(tape, cache);
  const int tok[1] = {token};
  const int pos[1] = {cache.seq_len()};
  Output out = forward(tape, bound, tok, pos, past, 0, LogitRows::kLast);
  for (int l = 0; l < config_.num_layers; ++l) {
    auto& layer = cache.layer(l);
    layer.keys = c2c::concat_rows(layer.keys, tape.value(out.appended[l].keys));
    layer.values = c2c::concat_rows(layer.values, tape.value(out.appended[l].values));
  }
  return row_vector(tape.value(out.logits), 0);
}

template <typename T>
std::vector<T> ToyModel<T>::requery_last(int token, const KVCache<T>& cache) const {
  check_cache(cache);
  require(cache.seq_len() >= 1, ErrorKind::kCacheMismatch, "re-query needs a non-empty cache");
  ag::Tape<T> tape;
  const Bound bound = bind(tape);
  const std::vector<TapeKV<T>> past = constant_cache(tape, cache);
  const int tok[1] = {token};
  const int pos[1] = {cache.seq_len() - 1};
  Output out = forward(tape, bound, tok, pos, past, 1, LogitRows::kLast);
  return row_vector(tape.value(out.logits), 0);
}

template <typename T>
std::vector<int> ToyModel<T>::generate(std::span<const int> prompt, const KVCache<T>* cache_override,
                                       int max_new, std::optional<int> stop_token) const {
  require(max_new >= 0, ErrorKind::kInvalidInput, "max_new must be >= 0");
  require(!prompt.empty(), ErrorKind::kInvalidInput, "generate needs a non-empty prompt");
  std::vector<int> out;
  if (max_new == 0) return out;
  KVCache<T> cache;
  std::vector<T> logits;
  if (cache_override) {
    check_cache(*cache_override);
    require(cache_override->seq_len() == static_cast<int>(prompt.size()), ErrorKind::kCacheMismatch,
            "override cache length differs from the prompt length");
    check_tokens(prompt);
    cache = *cache_override;
    logits = requery_last(prompt.back(), cache);
  } else {
    PrefillResult<T> pre = prefill(prompt);
    cache = std::move(pre.cache);
    logits = std::move(pre.logits);
  }
  for (;;) {
    const int next = argmax<T>(logits);
    out.push_back(next);
    if (static_cast<int>(out.size()) >= max_new) break;
    if (stop_token && next == *stop_token) break;
    logits = decode_step(next, cache);
  }
  return out;
}

template <typename T>
template <typename U>
ToyModel<U> ToyModel<T>::cast() const {
  ToyWeights<U> w = ToyWeights<U>::zeros_like(config_);
  auto src = weights_.named();
  auto dst = w.named();
  for (size_t i = 0; i < src.size(); ++i) *dst[i].second = src[i].second->template cast<U>();
  ToyModel<U> m(config_, std::move(w));
  m.set_frozen(frozen_);
  m.set_tokenizer_id(tokenizer_id_);
  return m;
}

template <typename T>
int argmax(std::span<const T> logits) {
  require(!logits.empty(), ErrorKind::kInvalidInput, "argmax of empty logits");
  return static_cast<int>(std::max_element(logits.begin(), logits.end()) - logits.begin());
}

template struct ToyWeights<float>;
template struct ToyWeights<double>;
template class ToyModel<float>;
template class ToyModel<double>;
template ToyModel<double> ToyModel<float>::cast<double>() const;
template ToyModel<float> ToyModel<double>::cast<float>() const;
template std::vector<TapeKV<float>> constant_cache(ag::Tape<float>&, const KVCache<float>&);
template std::vector<TapeKV<double>> constant_cache(ag::Tape<double>&, const KVCache<double>&);
template int argmax<float>(std::span<const float>);
template int argmax<double>(std::span<const double>);

}  // namespace c2c
