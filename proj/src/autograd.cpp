#include "c2c/autograd.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "c2c/error.hpp"

namespace c2c::ag {

template <typename T>
Var Tape<T>::constant(const Matrix<T>& value) {
  Node& n = nodes_.emplace_back();
  n.external = &value;
  return {static_cast<int>(nodes_.size()) - 1};
}

template <typename T>
Var Tape<T>::constant(Matrix<T>&& value) {
  Node& n = nodes_.emplace_back();
  n.owned = std::move(value);
  return {static_cast<int>(nodes_.size()) - 1};
}

template <typename T>
Var Tape<T>::param(const Matrix<T>& value, Matrix<T>* grad_sink) {
  Node& n = nodes_.emplace_back();
  n.external = &value;
  n.requires_grad = true;
  n.grad_sink = grad_sink;
  return {static_cast<int>(nodes_.size()) - 1};
}

template <typename T>
Matrix<T>& Tape<T>::grad(Var v) {
  Node& n = nodes_[v.id];
  if (n.grad.empty()) {
    const Matrix<T>& val = n.view();
    n.grad = Matrix<T>(val.rows(), val.cols());
  }
  return n.grad;
}

template <typename T>
Var Tape<T>::push(Matrix<T>&& value, bool requires_grad, Backward backward) {
  Node& n = nodes_.emplace_back();
  n.owned = std::move(value);
  n.requires_grad = requires_grad;
  if (requires_grad) n.backward = std::move(backward);
  return {static_cast<int>(nodes_.size()) - 1};
}

template <typename T>
void Tape<T>::backward(Var out) {
  require(value(out).rows() == 1 && value(out).cols() == 1, ErrorKind::kInvalidInput,
          "backward() needs a scalar output");
  if (!requires_grad(out)) return;
  grad(out)(0, 0) += T(1);
  for (int id = out.id; id >= 0; --id) {
    Node& n = nodes_[id];
    if (!n.requires_grad || n.grad.empty()) continue;
    if (n.backward) n.backward(*this, n.grad);
    if (n.grad_sink) {
      Matrix<T>& sink = *n.grad_sink;
      if (sink.empty()) sink = Matrix<T>(n.grad.rows(), n.grad.cols());
      for (size_t i = 0; i < sink.size(); ++i) sink.data()[i] += n.grad.data()[i];
    }
  }
}

namespace {

template <typename T>
void axpy(T a, std::span<const T> x, std::span<T> y) {
  for (size_t i = 0; i < x.size(); ++i) y[i] += a * x[i];
}

template <typename T>
T dot(std::span<const T> a, std::span<const T> b) {
  T s{0};
  for (size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

template <typename T>
T gelu_value(T x) {
  constexpr T kC = T(0.7978845608028654);  // sqrt(2/pi)
  const T u = kC * (x + T(0.044715) * x * x * x);
  return T(0.5) * x * (T(1) + std::tanh(u));
}

template <typename T>
T gelu_derivative(T x) {
  constexpr T kC = T(0.7978845608028654);
  const T u = kC * (x + T(0.044715) * x * x * x);
  const T th = std::tanh(u);
  const T du = kC * (T(1) + T(3) * T(0.044715) * x * x);
  return T(0.5) * (T(1) + th) + T(0.5) * x * (T(1) - th * th) * du;
}

template <typename T>
T sigmoid_value(T x) {
  return T(1) / (T(1) + std::exp(-x));
}

}  // namespace

template <typename T>
Var linear(Tape<T>& tape, Var x, Var w, Var b) {
  const Matrix<T>& xv = tape.value(x);
  const Matrix<T>& wv = tape.value(w);
  require(xv.cols() == wv.cols(), ErrorKind::kInvalidInput, "linear: input width mismatch");
  const int n = xv.rows();
  const int out_dim = wv.rows();
  Matrix<T> y(n, out_dim);
  const Matrix<T>* bv = b.valid() ? &tape.value(b) : nullptr;
  for (int i = 0; i < n; ++i) {
    auto xr = xv.row(i);
    for (int o = 0; o < out_dim; ++o) {
      T s = dot(xr, wv.row(o));
      if (bv) s += (*bv)(0, o);
      y(i, o) = s;
    }
  }
  const bool rg = any_requires_grad(tape, {x, w, b});
  return tape.push(std::move(y), rg, [x, w, b](Tape<T>& t, const Matrix<T>& gy) {
    const Matrix<T>& xv = t.value(x);
    const Matrix<T>& wv = t.value(w);
    const int n = gy.rows();
    const int out_dim = gy.cols();
    if (t.requires_grad(x)) {
      Matrix<T>& gx = t.grad(x);
      for (int i = 0; i < n; ++i)
        for (int o = 0; o < out_dim; ++o) axpy(gy(i, o), wv.row(o), gx.row(i));
    }
    if (t.requires_grad(w)) {
      Matrix<T>& gw = t.grad(w);
      for (int i = 0; i < n; ++i)
        for (int o = 0; o < out_dim; ++o) axpy(gy(i, o), xv.row(i), gw.row(o));
    }
    if (b.valid() && t.requires_grad(b)) {
      Matrix<T>& gb = t.grad(b);
      for (int i = 0; i < n; ++i)
        for (int o = 0; o < out_dim; ++o) gb(0, o) += gy(i, o);
    }
  });
}

template <typename T>
Var add(Tape<T>& tape, Var a, Var b) {
  const Matrix<T>& av = tape.value(a);
  const Matrix<T>& bv = tape.value(b);
  require(av.same_shape(bv), ErrorKind::kInvalidInput, "add: shape mismatch");
  Matrix<T> y = av;
  for (size_t i = 0; i < y.size(); ++i) y.data()[i] += bv.data()[i];
  const bool rg = any_requires_grad(tape, {a, b});
  return tape.push(std::move(y), rg, [a, b](Tape<T>& t, const Matrix<T>& gy) {
    for (Var v : {a, b}) {
      if (!t.requires_grad(v)) continue;
      Matrix<T>& g = t.grad(v);
      for (size_t i = 0; i < g.size(); ++i) g.data()[i] += gy.data()[i];
    }
  });
}

template <typename T>
Var gelu(Tape<T>& tape, Var x) {
  Matrix<T> y = tape.value(x);
  for (size_t i = 0; i < y.size(); ++i) y.data()[i] = gelu_value(y.data()[i]);
  return tape.push(std::move(y), tape.requires_grad(x), [x](Tape<T>& t, const Matrix<T>& gy) {
    const Matrix<T>& xv = t.value(x);
    Matrix<T>& gx = t.grad(x);
    for (size_t i = 0; i < gx.size(); ++i) gx.data()[i] += gy.data()[i] * gelu_derivative(xv.data()[i]);
  });
}

template <typename T>
Var sigmoid(Tape<T>& tape, Var x) {
  Matrix<T> y = tape.value(x);
  for (size_t i = 0; i < y.size(); ++i) y.data()[i] = sigmoid_value(y.data()[i]);
  const int id = static_cast<int>(tape.size());
  return tape.push(std::move(y), tape.requires_grad(x), [x, id](Tape<T>& t, const Matrix<T>& gy) {
    const Matrix<T>& yv = t.value(Var{id});
    Matrix<T>& gx = t.grad(x);
    for (size_t i = 0; i < gx.size(); ++i) {
      const T s = yv.data()[i];
      gx.data()[i] += gy.data()[i] * s * (T(1) - s);
    }
  });
}

template <typename T>
Var rms_norm(Tape<T>& tape, Var x, Var weight, T eps) {
  const Matrix<T>& xv = tape.value(x);
  const Matrix<T>& wv = tape.value(weight);
  require(wv.cols() == xv.cols(), ErrorKind::kInvalidInput, "rms_norm: width mismatch");
  const int n = xv.rows();
  const int d = xv.cols();
  Matrix<T> y(n, d);
  std::vector<T> inv(n);
  for (int i = 0; i < n; ++i) {
    auto xr = xv.row(i);
    const T ms = dot(xr, xr) / T(d);
    inv[i] = T(1) / std::sqrt(ms + eps);
    for (int c = 0; c < d; ++c) y(i, c) = xr[c] * inv[i] * wv(0, c);
  }
  const bool rg = any_requires_grad(tape, {x, weight});
  return tape.push(std::move(y), rg, [x, weight, inv = std::move(inv)](Tape<T>& t, const Matrix<T>& gy) {
    const Matrix<T>& xv = t.value(x);
    const Matrix<T>& wv = t.value(weight);
    const int n = xv.rows();
    const int d = xv.cols();
    for (int i = 0; i < n; ++i) {
      auto xr = xv.row(i);
      if (t.requires_grad(weight)) {
        Matrix<T>& gw = t.grad(weight);
        for (int c = 0; c < d; ++c) gw(0, c) += gy(i, c) * xr[c] * inv[i];
      }
      if (t.requires_grad(x)) {
        T proj{0};
        for (int c = 0; c < d; ++c) proj += gy(i, c) * wv(0, c) * xr[c] * inv[i];
        proj /= T(d);
        Matrix<T>& gx = t.grad(x);
        for (int c = 0; c < d; ++c)
          gx(i, c) += inv[i] * (gy(i, c) * wv(0, c) - xr[c] * inv[i] * proj);
      }
    }
  });
}

namespace {

// cos/sin tables per (row, pair) computed in double for reproducibility.
struct RopeTable {
  std::vector<double> cos, sin;
};

RopeTable make_rope_table(std::span<const int> positions, int head_dim, double base) {
  const int pairs = head_dim / 2;
  RopeTable tab;
  tab.cos.resize(positions.size() * pairs);
  tab.sin.resize(positions.size() * pairs);
  for (size_t r = 0; r < positions.size(); ++r) {
    for (int p = 0; p < pairs; ++p) {
      const double theta = std::pow(base, -2.0 * p / head_dim);
      const double angle = positions[r] * theta;
      tab.cos[r * pairs + p] = std::cos(angle);
      tab.sin[r * pairs + p] = std::sin(angle);
    }
  }
  return tab;
}

template <typename T>
void rotate(const Matrix<T>& in, Matrix<T>& out, const RopeTable& tab, int heads, int head_dim,
            bool inverse, bool accumulate) {
  const int pairs = head_dim / 2;
  for (int r = 0; r < in.rows(); ++r) {
    for (int h = 0; h < heads; ++h) {
      for (int p = 0; p < pairs; ++p) {
        const T c = static_cast<T>(tab.cos[r * pairs + p]);
        const T s = inverse ? -static_cast<T>(tab.sin[r * pairs + p])
                            : static_cast<T>(tab.sin[r * pairs + p]);
        const int col = h * head_dim + 2 * p;
        const T a = in(r, col);
        const T b = in(r, col + 1);
        const T ra = a * c - b * s;
        const T rb = a * s + b * c;
        if (accumulate) {
          out(r, col) += ra;
          out(r, col + 1) += rb;
        } else {
          out(r, col) = ra;
          out(r, col + 1) = rb;
        }
      }
    }
  }
}

}  // namespace

template <typename T>
Var rope(Tape<T>& tape, Var x, std::span<const int> positions, int heads, int head_dim,
         double base) {
  const Matrix<T>& xv = tape.value(x);
  require(head_dim % 2 == 0, ErrorKind::kInvalidInput, "rope: head_dim must be even");
  require(xv.cols() == heads * head_dim, ErrorKind::kInvalidInput, "rope: width mismatch");
  require(static_cast<int>(positions.size()) == xv.rows(), ErrorKind::kInvalidInput,
          "rope: one position per row required");
  RopeTable tab = make_rope_table(positions, head_dim, base);
  Matrix<T> y(xv.rows(), xv.cols());
  rotate(xv, y, tab, heads, head_dim, false, false);
  return tape.push(std::move(y), tape.requires_grad(x),
                   [x, heads, head_dim, tab = std::move(tab)](Tape<T>& t, const Matrix<T>& gy) {
                     rotate(gy, t.grad(x), tab, heads, head_dim, true, true);
                   });
}

template <typename T>
Var attention(Tape<T>& tape, Var q, Var k, Var v, std::span<const int> query_positions,
              int heads, int head_dim) {
  const Matrix<T>& qv = tape.value(q);
  const Matrix<T>& kv = tape.value(k);
  const Matrix<T>& vv = tape.value(v);
  const int width = heads * head_dim;
  require(qv.cols() == width && kv.cols() == width && vv.cols() == width,
          ErrorKind::kInvalidInput, "attention: width mismatch");
  require(kv.rows() == vv.rows(), ErrorKind::kCacheMismatch, "attention: key/value length mismatch");
  require(static_cast<int>(query_positions.size()) == qv.rows(), ErrorKind::kInvalidInput,
          "attention: one position per query row required");
  const int nq = qv.rows();
  const int nk = kv.rows();
  const T scale = T(1) / std::sqrt(static_cast<T>(head_dim));
  std::vector<int> limit(nq);
  for (int i = 0; i < nq; ++i) {
    limit[i] = std::min(query_positions[i], nk - 1);
    require(limit[i] >= 0, ErrorKind::kCacheMismatch, "attention: query sees no keys");
  }
  // probs[(i * heads + h) * nk + j]
  std::vector<T> probs(static_cast<size_t>(nq) * heads * nk, T(0));
  Matrix<T> out(nq, width);
  for (int i = 0; i < nq; ++i) {
    for (int h = 0; h < heads; ++h) {
      T* p = probs.data() + (static_cast<size_t>(i) * heads + h) * nk;
      auto qh = qv.row(i).subspan(h * head_dim, head_dim);
      T mx = -std::numeric_limits<T>::infinity();
      for (int j = 0; j <= limit[i]; ++j) {
        p[j] = dot(qh, kv.row(j).subspan(h * head_dim, head_dim)) * scale;
        mx = std::max(mx, p[j]);
      }
      T denom{0};
      for (int j = 0; j <= limit[i]; ++j) {
        p[j] = std::exp(p[j] - mx);
        denom += p[j];
      }
      auto oh = out.row(i).subspan(h * head_dim, head_dim);
      for (int j = 0; j <= limit[i]; ++j) {
        p[j] /= denom;
        axpy(p[j], vv.row(j).subspan(h * head_dim, head_dim), oh);
      }
    }
  }
  const bool rg = any_requires_grad(tape, {q, k, v});
  return tape.push(
      std::move(out), rg,
      [q, k, v, heads, head_dim, scale, limit = std::move(limit), probs = std::move(probs)](
          Tape<T>& t, const Matrix<T>& gy) {
        const Matrix<T>& qv = t.value(q);
        const Matrix<T>& kv = t.value(k);
        const Matrix<T>& vv = t.value(v);
        const int nq = qv.rows();
        const int nk = kv.rows();
        Matrix<T>* gq = t.requires_grad(q) ? &t.grad(q) : nullptr;
        Matrix<T>* gk = t.requires_grad(k) ? &t.grad(k) : nullptr;
        Matrix<T>* gv = t.requires_grad(v) ? &t.grad(v) : nullptr;
        std::vector<T> dp(nk);
        for (int i = 0; i < nq; ++i) {
          for (int h = 0; h < heads; ++h) {
            const T* p = probs.data() + (static_cast<size_t>(i) * heads + h) * nk;
            auto go = gy.row(i).subspan(h * head_dim, head_dim);
            T weighted{0};
            for (int j = 0; j <= limit[i]; ++j) {
              dp[j] = dot(go, vv.row(j).subspan(h * head_dim, head_dim));
              weighted += p[j] * dp[j];
              if (gv) axpy(p[j], go, gv->row(j).subspan(h * head_dim, head_dim));
            }
            if (!gq && !gk) continue;
            auto qh = qv.row(i).subspan(h * head_dim, head_dim);
            for (int j = 0; j <= limit[i]; ++j) {
              const T ds = p[j] * (dp[j] - weighted) * scale;
              if (gq) axpy(ds, kv.row(j).subspan(h * head_dim, head_dim),
                           gq->row(i).subspan(h * head_dim, head_dim));
              if (gk) axpy(ds, qh, gk->row(j).subspan(h * head_dim, head_dim));
            }
          }
        }
      });
}

template <typename T>
Var concat_rows(Tape<T>& tape, Var head, Var tail) {
  Matrix<T> y = c2c::concat_rows(tape.value(head), tape.value(tail));
  const int head_rows = tape.value(head).rows();
  const bool rg = any_requires_grad(tape, {head, tail});
  return tape.push(std::move(y), rg, [head, tail, head_rows](Tape<T>& t, const Matrix<T>& gy) {
    const int cols = gy.cols();
    if (t.requires_grad(head)) {
      Matrix<T>& g = t.grad(head);
      for (size_t i = 0; i < g.size(); ++i) g.data()[i] += gy.data()[i];
    }
    if (t.requires_grad(tail)) {
      Matrix<T>& g = t.grad(tail);
      const T* src = gy.data() + static_cast<size_t>(head_rows) * cols;
      for (size_t i = 0; i < g.size(); ++i) g.data()[i] += src[i];
    }
  });
}

template <typename T>
Var concat_cols(Tape<T>& tape, Var left, Var right) {
  const Matrix<T>& lv = tape.value(left);
  const Matrix<T>& rv = tape.value(right);
  require(lv.rows() == rv.rows(), ErrorKind::kInvalidInput, "concat_cols: row mismatch");
  const int lc = lv.cols();
  const int rc = rv.cols();
  Matrix<T> y(lv.rows(), lc + rc);
  for (int i = 0; i < lv.rows(); ++i) {
    std::copy(lv.row(i).begin(), lv.row(i).end(), y.row(i).begin());
    std::copy(rv.row(i).begin(), rv.row(i).end(), y.row(i).begin() + lc);
  }
  const bool rg = any_requires_grad(tape, {left, right});
  return tape.push(std::move(y), rg, [left, right, lc, rc](Tape<T>& t, const Matrix<T>& gy) {
    for (int i = 0; i < gy.rows(); ++i) {
      if (t.requires_grad(left)) axpy(T(1), gy.row(i).subspan(0, lc), t.grad(left).row(i));
      if (t.requires_grad(right)) axpy(T(1), gy.row(i).subspan(lc, rc), t.grad(right).row(i));
    }
  });
}

template <typename T>
Var slice_rows(Tape<T>& tape, Var x, int begin, int end) {
  Matrix<T> y = c2c::slice_rows(tape.value(x), begin, end);
  return tape.push(std::move(y), tape.requires_grad(x), [x, begin](Tape<T>& t, const Matrix<T>& gy) {
    Matrix<T>& g = t.grad(x);
    for (int i = 0; i < gy.rows(); ++i) axpy(T(1), gy.row(i), g.row(begin + i));
  });
}

template <typename T>
Var embedding(Tape<T>& tape, Var table, std::span<const int> ids) {
  const Matrix<T>& tv = tape.value(table);
  Matrix<T> y(static_cast<int>(ids.size()), tv.cols());
  for (size_t i = 0; i < ids.size(); ++i) {
    require(ids[i] >= 0 && ids[i] < tv.rows(), ErrorKind::kInvalidInput, "embedding: id out of range");
    std::copy(tv.row(ids[i]).begin(), tv.row(ids[i]).end(), y.row(static_cast<int>(i)).begin());
  }
  std::vector<int> rows(ids.begin(), ids.end());
  return tape.push(std::move(y), tape.requires_grad(table),
                   [table, rows = std::move(rows)](Tape<T>& t, const Matrix<T>& gy) {
                     Matrix<T>& g = t.grad(table);
                     for (size_t i = 0; i < rows.size(); ++i)
                       axpy(T(1), gy.row(static_cast<int>(i)), g.row(rows[i]));
                   });
}

template <typename T>
Var gated_residual(Tape<T>& tape, Var recv, Var delta, Var head_weights, Var gate,
                   const std::vector<bool>& row_mask, int heads) {
  const Matrix<T>& rv = tape.value(recv);
  const Matrix<T>& dv = tape.value(delta);
  const Matrix<T>& hv = tape.value(head_weights);
  const T g = tape.value(gate)(0, 0);
  require(rv.same_shape(dv), ErrorKind::kCacheMismatch, "gated_residual: shape mismatch");
  require(hv.rows() == rv.rows() && hv.cols() == heads && rv.cols() % heads == 0,
          ErrorKind::kInvalidInput, "gated_residual: head weight shape mismatch");
  require(static_cast<int>(row_mask.size()) == rv.rows(), ErrorKind::kCacheMismatch,
          "gated_residual: mask length mismatch");
  const int head_dim = rv.cols() / heads;
  Matrix<T> y = rv;
  for (int i = 0; i < rv.rows(); ++i) {
    if (!row_mask[i]) continue;
    for (int c = 0; c < rv.cols(); ++c) y(i, c) += g * hv(i, c / head_dim) * dv(i, c);
  }
  const bool rg = any_requires_grad(tape, {recv, delta, head_weights, gate});
  return tape.push(std::move(y), rg,
                   [recv, delta, head_weights, gate, row_mask, head_dim](Tape<T>& t, const Matrix<T>& gy) {
                     const Matrix<T>& dv = t.value(delta);
                     const Matrix<T>& hv = t.value(head_weights);
                     const T g = t.value(gate)(0, 0);
                     if (t.requires_grad(recv)) {
                       Matrix<T>& gr = t.grad(recv);
                       for (size_t i = 0; i < gr.size(); ++i) gr.data()[i] += gy.data()[i];
                     }
                     Matrix<T>* gd = t.requires_grad(delta) ? &t.grad(delta) : nullptr;
                     Matrix<T>* gh = t.requires_grad(head_weights) ? &t.grad(head_weights) : nullptr;
                     T ggate{0};
                     for (int i = 0; i < gy.rows(); ++i) {
                       if (!row_mask[i]) continue;
                       for (int c = 0; c < gy.cols(); ++c) {
                         const int h = c / head_dim;
                         const T upstream = gy(i, c);
                         if (gd) (*gd)(i, c) += upstream * g * hv(i, h);
                         if (gh) (*gh)(i, h) += upstream * g * dv(i, c);
                         ggate += upstream * hv(i, h) * dv(i, c);
                       }
                     }
                     if (t.requires_grad(gate)) t.grad(gate)(0, 0) += ggate;
                   });
}

template <typename T>
Var cross_entropy(Tape<T>& tape, Var logits, std::span<const int> targets, T scale) {
  const Matrix<T>& lv = tape.value(logits);
  require(static_cast<int>(targets.size()) == lv.rows(), ErrorKind::kInvalidInput,
          "cross_entropy: one target per row required");
  const int n = lv.rows();
  const int vocab = lv.cols();
  Matrix<T> probs(n, vocab);
  T total{0};
  for (int i = 0; i < n; ++i) {
    if (targets[i] < 0) continue;
    require(targets[i] < vocab, ErrorKind::kInvalidInput, "cross_entropy: target out of range");
    auto row = lv.row(i);
    const T mx = *std::max_element(row.begin(), row.end());
    T denom{0};
    for (int c = 0; c < vocab; ++c) {
      probs(i, c) = std::exp(row[c] - mx);
      denom += probs(i, c);
    }
    for (int c = 0; c < vocab; ++c) probs(i, c) /= denom;
    total += (std::log(denom) + mx - row[targets[i]]) * scale;
  }
  Matrix<T> y(1, 1, total);
  std::vector<int> tgt(targets.begin(), targets.end());
  return tape.push(std::move(y), tape.requires_grad(logits),
                   [logits, scale, tgt = std::move(tgt), probs = std::move(probs)](Tape<T>& t,
                                                                                  const Matrix<T>& gy) {
                     Matrix<T>& g = t.grad(logits);
                     const T up = gy(0, 0) * scale;
                     for (int i = 0; i < g.rows(); ++i) {
                       if (tgt[i] < 0) continue;
                       for (int c = 0; c < g.cols(); ++c) g(i, c) += up * probs(i, c);
                       g(i, tgt[i]) -= up;
                     }
                   });
}

template <typename T>
Var mse(Tape<T>& tape, Var pred, const Matrix<T>& target) {
  const Matrix<T>& pv = tape.value(pred);
  require(pv.same_shape(target), ErrorKind::kInvalidInput, "mse: shape mismatch");
  T total{0};
  for (size_t i = 0; i < pv.size(); ++i) {
    const T d = pv.data()[i] - target.data()[i];
    total += d * d;
  }
  const T inv_n = T(1) / static_cast<T>(pv.size());
  Matrix<T> y(1, 1, total * inv_n);
  return tape.push(std::move(y), tape.requires_grad(pred),
                   [pred, target, inv_n](Tape<T>& t, const Matrix<T>& gy) {
                     const Matrix<T>& pv = t.value(pred);
                     Matrix<T>& g = t.grad(pred);
                     for (size_t i = 0; i < g.size(); ++i)
                       g.data()[i] += gy(0, 0) * T(2) * inv_n * (pv.data()[i] - target.data()[i]);
                   });
}

template <typename T>
Var noisy_sigmoid(Tape<T>& tape, Var logit, T noise, T temperature) {
  const T s = sigmoid_value((tape.value(logit)(0, 0) + noise) / temperature);
  return tape.push(Matrix<T>(1, 1, s), tape.requires_grad(logit),
                   [logit, s, temperature](Tape<T>& t, const Matrix<T>& gy) {
                     t.grad(logit)(0, 0) += gy(0, 0) * s * (T(1) - s) / temperature;
                   });
}

template <typename T>
Var sum(Tape<T>& tape, std::span<const Var> scalars) {
  T total{0};
  bool rg = false;
  for (Var v : scalars) {
    total += tape.value(v)(0, 0);
    rg = rg || tape.requires_grad(v);
  }
  std::vector<Var> inputs(scalars.begin(), scalars.end());
  return tape.push(Matrix<T>(1, 1, total), rg, [inputs = std::move(inputs)](Tape<T>& t, const Matrix<T>& gy) {
    for (Var v : inputs)
      if (t.requires_grad(v)) t.grad(v)(0, 0) += gy(0, 0);
  });
}

#define C2C_INSTANTIATE_AUTOGRAD(T)                                                                \
  template class Tape<T>;                                                                          \
  template Var linear<T>(Tape<T>&, Var, Var, Var);                                                 \
  template Var add<T>(Tape<T>&, Var, Var);                                                         \
  template Var gelu<T>(Tape<T>&, Var);                                                             \
  template Var sigmoid<T>(Tape<T>&, Var);                                                          \
  template Var rms_norm<T>(Tape<T>&, Var, Var, T);                                                 \
  template Var rope<T>(Tape<T>&, Var, std::span<const int>, int, int, double);                     \
  template Var attention<T>(Tape<T>&, Var, Var, Var, std::span<const int>, int, int);              \
  template Var concat_rows<T>(Tape<T>&, Var, Var);                                                 \
  template Var concat_cols<T>(Tape<T>&, Var, Var);                                                 \
  template Var slice_rows<T>(Tape<T>&, Var, int, int);                                             \
  template Var embedding<T>(Tape<T>&, Var, std::span<const int>);                                  \
  template Var gated_residual<T>(Tape<T>&, Var, Var, Var, Var, const std::vector<bool>&, int);     \
  template Var cross_entropy<T>(Tape<T>&, Var, std::span<const int>, T);                           \
  template Var mse<T>(Tape<T>&, Var, const Matrix<T>&);                                            \
  template Var noisy_sigmoid<T>(Tape<T>&, Var, T, T);                                              \
  template Var sum<T>(Tape<T>&, std::span<const Var>);

C2C_INSTANTIATE_AUTOGRAD(float)
C2C_INSTANTIATE_AUTOGRAD(double)

}  // namespace c2c::ag
