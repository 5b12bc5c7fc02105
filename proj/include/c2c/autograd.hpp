#pragma once

#include <deque>
#include <functional>
#include <span>
#include <vector>

#include "c2c/matrix.hpp"

namespace c2c::ag {

struct Var {
  int id = -1;
  bool valid() const noexcept { return id >= 0; }
};

// Reverse-mode tape over dense matrices. Nodes are appended in evaluation
// order; backward() walks them in reverse. A node only records a backward
// closure when at least one input requires a gradient, so frozen or inference
// passes cost no more than the forward arithmetic.
template <typename T>
class Tape {
 public:
  // Receives the tape and the gradient flowing into the node's output.
  using Backward = std::function<void(Tape&, const Matrix<T>&)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Leaf referencing external storage; `value` must outlive the tape.
  Var constant(const Matrix<T>& value);
  Var constant(Matrix<T>&& value);
  // Trainable leaf. After backward() its gradient is added into `grad_sink`
  // (when non-null). A null sink still tracks the gradient on the tape.
  Var param(const Matrix<T>& value, Matrix<T>* grad_sink);

  const Matrix<T>& value(Var v) const { return nodes_[v.id].view(); }
  bool requires_grad(Var v) const { return nodes_[v.id].requires_grad; }
  // Gradient buffer of a node, allocated on first access.
  Matrix<T>& grad(Var v);
  bool has_grad(Var v) const { return !nodes_[v.id].grad.empty(); }

  Var push(Matrix<T>&& value, bool requires_grad, Backward backward = {});

  // Seeds d(out)/d(out) = 1 for a 1x1 output and propagates to every leaf.
  void backward(Var out);

  size_t size() const noexcept { return nodes_.size(); }

 private:
  struct Node {
    Matrix<T> owned;
    const Matrix<T>* external = nullptr;
    Matrix<T> grad;
    Matrix<T>* grad_sink = nullptr;
    bool requires_grad = false;
    Backward backward;
    const Matrix<T>& view() const { return external ? *external : owned; }
  };
  std::deque<Node> nodes_;
};

template <typename T>
bool any_requires_grad(const Tape<T>& tape, std::initializer_list<Var> vars) {
  for (Var v : vars)
    if (v.valid() && tape.requires_grad(v)) return true;
  return false;
}

// y = x * w^T (+ b). x: [n, in], w: [out, in], b: [1, out] or invalid.
template <typename T>
Var linear(Tape<T>& tape, Var x, Var w, Var b = {});

template <typename T>
Var add(Tape<T>& tape, Var a, Var b);

// Tanh-approximated GELU.
template <typename T>
Var gelu(Tape<T>& tape, Var x);

template <typename T>
Var sigmoid(Tape<T>& tape, Var x);

// Per-row RMS normalization scaled by weight [1, cols].
template <typename T>
Var rms_norm(Tape<T>& tape, Var x, Var weight, T eps = T(1e-6));

// Rotary embedding on interleaved pairs within each head; row r of x sits at
// sequence position positions[r].
template <typename T>
Var rope(Tape<T>& tape, Var x, std::span<const int> positions, int heads, int head_dim,
         double base = 10000.0);

// Multi-head causal attention. Key row j is at position j; query row i sees
// keys j <= query_positions[i].
template <typename T>
Var attention(Tape<T>& tape, Var q, Var k, Var v, std::span<const int> query_positions,
              int heads, int head_dim);

template <typename T>
Var concat_rows(Tape<T>& tape, Var head, Var tail);

template <typename T>
Var concat_cols(Tape<T>& tape, Var left, Var right);

template <typename T>
Var slice_rows(Tape<T>& tape, Var x, int begin, int end);

// Row lookup into an embedding table [vocab, dim].
template <typename T>
Var embedding(Tape<T>& tape, Var table, std::span<const int> ids);

// out = recv + gate * (head_weights expanded per head) * delta on rows where
// row_mask is true; other rows copy recv. recv/delta: [n, heads*head_dim],
// head_weights: [n, heads], gate: [1, 1].
template <typename T>
Var gated_residual(Tape<T>& tape, Var recv, Var delta, Var head_weights, Var gate,
                   const std::vector<bool>& row_mask, int heads);

// Sum over rows of -log softmax(logits)[target] times `scale`. Rows with
// target < 0 are ignored. Returns [1, 1].
template <typename T>
Var cross_entropy(Tape<T>& tape, Var logits, std::span<const int> targets, T scale);

// Mean squared error over all entries. Returns [1, 1].
template <typename T>
Var mse(Tape<T>& tape, Var pred, const Matrix<T>& target);

// sigmoid((logit + noise) / temperature) for a [1, 1] logit.
template <typename T>
Var noisy_sigmoid(Tape<T>& tape, Var logit, T noise, T temperature);

// Sum of [1, 1] scalars.
template <typename T>
Var sum(Tape<T>& tape, std::span<const Var> scalars);

}  // namespace c2c::ag
