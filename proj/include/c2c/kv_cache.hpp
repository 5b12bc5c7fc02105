#pragma once

#include <vector>

#include "c2c/error.hpp"
#include "c2c/matrix.hpp"

namespace c2c {

// Keys and values of one layer, one row per cached position and
// kv_heads * head_dim columns (head-major within a row). Keys are stored after
// the rotary embedding has been applied.
template <typename T>
struct LayerKV {
  Matrix<T> keys;
  Matrix<T> values;

  friend bool operator==(const LayerKV&, const LayerKV&) = default;
};

template <typename T>
class KVCache {
 public:
  KVCache() = default;
  KVCache(int num_layers, int kv_heads, int head_dim)
      : kv_heads_(kv_heads), head_dim_(head_dim), layers_(num_layers) {
    for (auto& l : layers_) {
      l.keys = Matrix<T>(0, kv_dim());
      l.values = Matrix<T>(0, kv_dim());
    }
  }

  int num_layers() const noexcept { return static_cast<int>(layers_.size()); }
  int kv_heads() const noexcept { return kv_heads_; }
  int head_dim() const noexcept { return head_dim_; }
  int kv_dim() const noexcept { return kv_heads_ * head_dim_; }
  int seq_len() const noexcept { return layers_.empty() ? 0 : layers_.front().keys.rows(); }

  LayerKV<T>& layer(int i) { return layers_.at(i); }
  const LayerKV<T>& layer(int i) const { return layers_.at(i); }
  std::vector<LayerKV<T>>& layers() noexcept { return layers_; }
  const std::vector<LayerKV<T>>& layers() const noexcept { return layers_; }

  bool same_shape(const KVCache& other) const noexcept {
    return num_layers() == other.num_layers() && kv_heads_ == other.kv_heads_ &&
           head_dim_ == other.head_dim_ && seq_len() == other.seq_len();
  }

  // Throws CacheMismatch when layers disagree on length or width.
  void validate() const {
    for (const auto& l : layers_) {
      require(l.keys.rows() == seq_len() && l.values.rows() == seq_len(), ErrorKind::kCacheMismatch,
              "KV cache layers disagree on seq_len");
      require(l.keys.cols() == kv_dim() && l.values.cols() == kv_dim(), ErrorKind::kCacheMismatch,
              "KV cache width does not match kv_heads * head_dim");
    }
  }

  // Positions [begin, end) of every layer.
  KVCache slice(int begin, int end) const {
    require(0 <= begin && begin <= end && end <= seq_len(), ErrorKind::kInvalidInput,
            "KV cache slice out of range");
    KVCache out(num_layers(), kv_heads_, head_dim_);
    for (int i = 0; i < num_layers(); ++i) {
      out.layers_[i].keys = slice_rows(layers_[i].keys, begin, end);
      out.layers_[i].values = slice_rows(layers_[i].values, begin, end);
    }
    return out;
  }

  // [kv_heads x seq_len x head_dim] flattening used by external adapters.
  static std::vector<T> to_head_major(const Matrix<T>& m, int kv_heads, int head_dim) {
    std::vector<T> out(m.size());
    const int seq = m.rows();
    for (int h = 0; h < kv_heads; ++h)
      for (int s = 0; s < seq; ++s)
        for (int d = 0; d < head_dim; ++d)
          out[(static_cast<size_t>(h) * seq + s) * head_dim + d] = m(s, h * head_dim + d);
    return out;
  }

  static Matrix<T> from_head_major(const std::vector<T>& flat, int kv_heads, int seq, int head_dim) {
    require(flat.size() == static_cast<size_t>(kv_heads) * seq * head_dim, ErrorKind::kCacheMismatch,
            "head-major buffer has the wrong size");
    Matrix<T> m(seq, kv_heads * head_dim);
    for (int h = 0; h < kv_heads; ++h)
      for (int s = 0; s < seq; ++s)
        for (int d = 0; d < head_dim; ++d)
          m(s, h * head_dim + d) = flat[(static_cast<size_t>(h) * seq + s) * head_dim + d];
    return m;
  }

  friend bool operator==(const KVCache&, const KVCache&) = default;

 private:
  int kv_heads_ = 0;
  int head_dim_ = 0;
  std::vector<LayerKV<T>> layers_;
};

}  // namespace c2c
