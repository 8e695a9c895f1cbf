#pragma once

#include <Eigen/Core>
#include <cmath>
#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "cppd/tensor.hpp"

namespace cppd::ag {

// ---------------------------------------------------------------------------
// gemm: the single dense-matmul choke point, backed by Eigen. Everything
// else (op semantics, gradients) is implemented here directly.
// ---------------------------------------------------------------------------

template <class T>
void gemm(bool trans_a, bool trans_b, int m, int n, int k, T alpha, const T* a, int lda,
          const T* b, int ldb, T beta, T* c, int ldc) {
  using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  using Out = Eigen::Map<Mat, 0, Eigen::OuterStride<>>;
  using In = Eigen::Map<const Mat, 0, Eigen::OuterStride<>>;
  Out C(c, m, n, Eigen::OuterStride<>(ldc));
  In A(a, trans_a ? k : m, trans_a ? m : k, Eigen::OuterStride<>(lda));
  In B(b, trans_b ? n : k, trans_b ? k : n, Eigen::OuterStride<>(ldb));
  auto run = [&](const auto& ea, const auto& eb) {
    if (beta == T(0))
      C.noalias() = alpha * (ea * eb);
    else if (beta == T(1))
      C.noalias() += alpha * (ea * eb);
    else {
      C *= beta;
      C.noalias() += alpha * (ea * eb);
    }
  };
  if (!trans_a && !trans_b)
    run(A, B);
  else if (trans_a && !trans_b)
    run(A.transpose(), B);
  else if (!trans_a && trans_b)
    run(A, B.transpose());
  else
    run(A.transpose(), B.transpose());
}

template <class T>
using ArrMap = Eigen::Map<Eigen::Array<T, Eigen::Dynamic, 1>>;
template <class T>
using ConstArrMap = Eigen::Map<const Eigen::Array<T, Eigen::Dynamic, 1>>;

// ---------------------------------------------------------------------------
// Tape
// ---------------------------------------------------------------------------

inline bool& grad_mode() {
  static bool on = true;
  return on;
}

/// RAII guard disabling tape recording (inference / finite differences).
struct NoGrad {
  bool prev;
  NoGrad() : prev(grad_mode()) { grad_mode() = false; }
  ~NoGrad() { grad_mode() = prev; }
};

template <class T>
struct Node {
  Tensor<T> val;
  Tensor<T> grad;
  std::vector<std::shared_ptr<Node<T>>> parents;
  std::function<void(Node<T>&)> backfn;
  bool requires_grad = false;

  void ensure_grad() {
    // numel check matters for rank-0: a default Tensor also has shape {}
    if (!grad.same_shape(val) || grad.numel() != val.numel()) grad = Tensor<T>(val.shape());
  }
};

template <class T>
using Var = std::shared_ptr<Node<T>>;

template <class T>
Var<T> leaf(Tensor<T> v, bool requires_grad) {
  auto n = std::make_shared<Node<T>>();
  n->val = std::move(v);
  n->requires_grad = requires_grad;
  if (requires_grad) n->ensure_grad();
  return n;
}

template <class T>
Var<T> constant(Tensor<T> v) {
  return leaf(std::move(v), false);
}

template <class T>
Var<T> make_node(Tensor<T> val, std::vector<Var<T>> parents,
                 std::function<void(Node<T>&)> backfn) {
  auto n = std::make_shared<Node<T>>();
  n->val = std::move(val);
  if (grad_mode()) {
    bool need = false;
    for (const auto& p : parents) need = need || p->requires_grad;
    if (need) {
      n->parents = std::move(parents);
      n->backfn = std::move(backfn);
      n->requires_grad = true;
    }
  }
  return n;
}

/// Reverse-mode sweep from a scalar root. Zeroes the grads of every node it
/// reaches first, so leaf parameters never accumulate across calls.
template <class T>
void backward(const Var<T>& root) {
  if (root->val.numel() != 1) throw std::invalid_argument("backward: root must be scalar");
  std::vector<Node<T>*> order;
  std::unordered_set<Node<T>*> seen;
  std::vector<std::pair<Node<T>*, size_t>> stack;
  stack.emplace_back(root.get(), 0);
  seen.insert(root.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node<T>* p = node->parents[next++].get();
      if (seen.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  for (Node<T>* n : order) {
    n->ensure_grad();
    n->grad.fill(T(0));
  }
  root->grad[0] = T(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node<T>* n = *it;
    if (n->backfn) n->backfn(*n);
  }
}

// ---------------------------------------------------------------------------
// Shape helpers
// ---------------------------------------------------------------------------

inline std::pair<int64_t, int> as_rows(const std::vector<int>& shape) {
  // collapse leading dims: (..., D) -> (rows, D)
  if (shape.empty()) throw std::invalid_argument("as_rows: scalar has no last axis");
  int d = shape.back();
  int64_t rows = 1;
  for (size_t i = 0; i + 1 < shape.size(); ++i) rows *= shape[i];
  return {rows, d};
}

// ---------------------------------------------------------------------------
// Elementwise / structural ops
// ---------------------------------------------------------------------------

template <class T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  if (!a->val.same_shape(b->val))
    throw std::invalid_argument("add: shape mismatch " + a->val.shape_str() + " vs " +
                                b->val.shape_str());
  Tensor<T> out = a->val;
  ArrMap<T>(out.data(), out.numel()) += ConstArrMap<T>(b->val.data(), b->val.numel());
  return make_node<T>(std::move(out), {a, b}, [](Node<T>& self) {
    for (int side = 0; side < 2; ++side) {
      Node<T>& p = *self.parents[static_cast<size_t>(side)];
      if (!p.requires_grad) continue;
      p.ensure_grad();
      ArrMap<T>(p.grad.data(), p.grad.numel()) +=
          ConstArrMap<T>(self.grad.data(), self.grad.numel());
    }
  });
}

/// (B,T,D) + (T,D) broadcast over the batch axis.
template <class T>
Var<T> add_rows(const Var<T>& x, const Var<T>& rows) {
  if (x->val.rank() != 3 || rows->val.rank() != 2 || x->val.dim(1) != rows->val.dim(0) ||
      x->val.dim(2) != rows->val.dim(1))
    throw std::invalid_argument("add_rows: shape mismatch");
  Tensor<T> out = x->val;
  int64_t per = static_cast<int64_t>(rows->val.numel());
  int b = x->val.dim(0);
  for (int i = 0; i < b; ++i)
    ArrMap<T>(out.data() + i * per, per) += ConstArrMap<T>(rows->val.data(), per);
  return make_node<T>(std::move(out), {x, rows}, [per, b](Node<T>& self) {
    Node<T>& px = *self.parents[0];
    Node<T>& pr = *self.parents[1];
    if (px.requires_grad) {
      px.ensure_grad();
      ArrMap<T>(px.grad.data(), px.grad.numel()) +=
          ConstArrMap<T>(self.grad.data(), self.grad.numel());
    }
    if (pr.requires_grad) {
      pr.ensure_grad();
      for (int i = 0; i < b; ++i)
        ArrMap<T>(pr.grad.data(), per) += ConstArrMap<T>(self.grad.data() + i * per, per);
    }
  });
}

template <class T>
Var<T> scale(const Var<T>& x, T c) {
  Tensor<T> out = x->val;
  for (int64_t i = 0; i < out.numel(); ++i) out[i] *= c;
  return make_node<T>(std::move(out), {x}, [c](Node<T>& self) {
    Node<T>& p = *self.parents[0];
    if (!p.requires_grad) return;
    p.ensure_grad();
    for (int64_t i = 0; i < self.grad.numel(); ++i) p.grad[i] += c * self.grad[i];
  });
}

/// (T,D) -> (B,T,D) by repetition; gradient sums over the batch axis.
template <class T>
Var<T> tile_rows(const Var<T>& rows, int batch) {
  if (rows->val.rank() != 2) throw std::invalid_argument("tile_rows: expected rank-2 input");
  int t = rows->val.dim(0), d = rows->val.dim(1);
  Tensor<T> out({batch, t, d});
  int64_t per = rows->val.numel();
  for (int i = 0; i < batch; ++i)
    std::copy(rows->val.data(), rows->val.data() + per, out.data() + i * per);
  return make_node<T>(std::move(out), {rows}, [batch, per](Node<T>& self) {
    Node<T>& p = *self.parents[0];
    if (!p.requires_grad) return;
    p.ensure_grad();
    for (int i = 0; i < batch; ++i) {
      const T* s = self.grad.data() + i * per;
      for (int64_t j = 0; j < per; ++j) p.grad[j] += s[j];
    }
  });
}

template <class T>
Var<T> reshape(const Var<T>& x, std::vector<int> shape) {
  Tensor<T> out = x->val;
  out.reshape(shape);
  return make_node<T>(std::move(out), {x}, [](Node<T>& self) {
    Node<T>& p = *self.parents[0];
    if (!p.requires_grad) return;
    p.ensure_grad();
    for (int64_t i = 0; i < self.grad.numel(); ++i) p.grad[i] += self.grad[i];
  });
}

/// Concatenate two (B,T,D) tensors along the token axis.
template <class T>
Var<T> concat_tokens(const Var<T>& a, const Var<T>& b) {
  if (a->val.rank() != 3 || b->val.rank() != 3 || a->val.dim(0) != b->val.dim(0) ||
      a->val.dim(2) != b->val.dim(2))
    throw std::invalid_argument("concat_tokens: shape mismatch");
  int bs = a->val.dim(0), ta = a->val.dim(1), tb = b->val.dim(1), d = a->val.dim(2);
  Tensor<T> out({bs, ta + tb, d});
  for (int i = 0; i < bs; ++i) {
    std::copy(a->val.data() + static_cast<int64_t>(i) * ta * d,
              a->val.data() + static_cast<int64_t>(i + 1) * ta * d,
              out.data() + static_cast<int64_t>(i) * (ta + tb) * d);
    std::copy(b->val.data() + static_cast<int64_t>(i) * tb * d,
              b->val.data() + static_cast<int64_t>(i + 1) * tb * d,
              out.data() + static_cast<int64_t>(i) * (ta + tb) * d + static_cast<int64_t>(ta) * d);
  }
  return make_node<T>(std::move(out), {a, b}, [bs, ta, tb, d](Node<T>& self) {
    Node<T>& pa = *self.parents[0];
    Node<T>& pb = *self.parents[1];
    for (int i = 0; i < bs; ++i) {
      const T* g = self.grad.data() + static_cast<int64_t>(i) * (ta + tb) * d;
      if (pa.requires_grad) {
        pa.ensure_grad();
        T* ga = pa.grad.data() + static_cast<int64_t>(i) * ta * d;
        for (int64_t j = 0; j < static_cast<int64_t>(ta) * d; ++j) ga[j] += g[j];
      }
      if (pb.requires_grad) {
        pb.ensure_grad();
        T* gb = pb.grad.data() + static_cast<int64_t>(i) * tb * d;
        for (int64_t j = 0; j < static_cast<int64_t>(tb) * d; ++j)
          gb[j] += g[static_cast<int64_t>(ta) * d + j];
      }
    }
  });
}

/// Token slice [t0, t1) of a (B,T,D) tensor.
template <class T>
Var<T> slice_tokens(const Var<T>& x, int t0, int t1) {
  if (x->val.rank() != 3 || t0 < 0 || t1 > x->val.dim(1) || t0 > t1)
    throw std::invalid_argument("slice_tokens: bad range");
  int bs = x->val.dim(0), t = x->val.dim(1), d = x->val.dim(2);
  int ts = t1 - t0;
  Tensor<T> out({bs, ts, d});
  for (int i = 0; i < bs; ++i)
    std::copy(x->val.data() + (static_cast<int64_t>(i) * t + t0) * d,
              x->val.data() + (static_cast<int64_t>(i) * t + t1) * d,
              out.data() + static_cast<int64_t>(i) * ts * d);
  return make_node<T>(std::move(out), {x}, [bs, t, d, t0, ts](Node<T>& self) {
    Node<T>& p = *self.parents[0];
    if (!p.requires_grad) return;
    p.ensure_grad();
    for (int i = 0; i < bs; ++i) {
      const T* g = self.grad.data() + static_cast<int64_t>(i) * ts * d;
      T* gp = p.grad.data() + (static_cast<int64_t>(i) * t + t0) * d;
      for (int64_t j = 0; j < static_cast<int64_t>(ts) * d; ++j) gp[j] += g[j];
    }
  });
}

/// Row gather: table (R,D), ids laid out (B,T) -> (B,T,D).
template <class T>
Var<T> embedding(const Var<T>& table, const std::vector<int>& ids, int batch, int t) {
  if (table->val.rank() != 2) throw std::invalid_argument("embedding: table must be rank 2");
  if (static_cast<int64_t>(ids.size()) != static_cast<int64_t>(batch) * t)
    throw std::invalid_argument("embedding: ids size mismatch");
  int r = table->val.dim(0), d = table->val.dim(1);
  Tensor<T> out({batch, t, d});
  for (size_t i = 0; i < ids.size(); ++i) {
    int id = ids[i];
    if (id < 0 || id >= r) throw std::invalid_argument("embedding: id out of range");
    std::copy(table->val.data() + static_cast<int64_t>(id) * d,
              table->val.data() + static_cast<int64_t>(id + 1) * d,
              out.data() + static_cast<int64_t>(i) * d);
  }
  return make_node<T>(std::move(out), {table}, [ids, d](Node<T>& self) {
    Node<T>& p = *self.parents[0];
    if (!p.requires_grad) return;
    p.ensure_grad();
    for (size_t i = 0; i < ids.size(); ++i) {
      const T* g = self.grad.data() + static_cast<int64_t>(i) * d;
      T* gp = p.grad.data() + static_cast<int64_t>(ids[i]) * d;
      for (int j = 0; j < d; ++j) gp[j] += g[j];
    }
  });
}

// ---------------------------------------------------------------------------
// Dense ops
// ---------------------------------------------------------------------------

template <class T>
Var<T> matmul(const Var<T>& a, const Var<T>& b) {
  if (a->val.rank() != 2 || b->val.rank() != 2 || a->val.dim(1) != b->val.dim(0))
    throw std::invalid_argument("matmul: shape mismatch " + a->val.shape_str() + " x " +
                                b->val.shape_str());
  int m = a->val.dim(0), k = a->val.dim(1), n = b->val.dim(1);
  Tensor<T> out({m, n});
  gemm<T>(false, false, m, n, k, T(1), a->val.data(), k, b->val.data(), n, T(0), out.data(), n);
  return make_node<T>(std::move(out), {a, b}, [m, k, n](Node<T>& self) {
    Node<T>& pa = *self.parents[0];
    Node<T>& pb = *self.parents[1];
    if (pa.requires_grad) {
      pa.ensure_grad();
      gemm<T>(false, true, m, k, n, T(1), self.grad.data(), n, pb.val.data(), n, T(1),
              pa.grad.data(), k);
    }
    if (pb.requires_grad) {
      pb.ensure_grad();
      gemm<T>(true, false, k, n, m, T(1), pa.val.data(), k, self.grad.data(), n, T(1),
              pb.grad.data(), n);
    }
  });
}

/// Affine map over the last axis: (..., Din) x (Din, Dout) + (Dout).
template <class T>
Var<T> linear(const Var<T>& x, const Var<T>& w, const Var<T>& b) {
  auto [rows64, din] = as_rows(x->val.shape());
  int rows = static_cast<int>(rows64);
  if (w->val.rank() != 2 || w->val.dim(0) != din)
    throw std::invalid_argument("linear: weight shape " + w->val.shape_str() +
                                " does not match input " + x->val.shape_str());
  int dout = w->val.dim(1);
  if (b->val.rank() != 1 || b->val.dim(0) != dout)
    throw std::invalid_argument("linear: bias shape mismatch");
  std::vector<int> out_shape = x->val.shape();
  out_shape.back() = dout;
  Tensor<T> out(out_shape);
  gemm<T>(false, false, rows, dout, din, T(1), x->val.data(), din, w->val.data(), dout, T(0),
          out.data(), dout);
  for (int i = 0; i < rows; ++i)
    ArrMap<T>(out.data() + static_cast<int64_t>(i) * dout, dout) +=
        ConstArrMap<T>(b->val.data(), dout);
  return make_node<T>(std::move(out), {x, w, b}, [rows, din, dout](Node<T>& self) {
    Node<T>& px = *self.parents[0];
    Node<T>& pw = *self.parents[1];
    Node<T>& pb = *self.parents[2];
    if (px.requires_grad) {
      px.ensure_grad();
      gemm<T>(false, true, rows, din, dout, T(1), self.grad.data(), dout, pw.val.data(), dout,
              T(1), px.grad.data(), din);
    }
    if (pw.requires_grad) {
      pw.ensure_grad();
      gemm<T>(true, false, din, dout, rows, T(1), px.val.data(), din, self.grad.data(), dout,
              T(1), pw.grad.data(), dout);
    }
    if (pb.requires_grad) {
      pb.ensure_grad();
      for (int i = 0; i < rows; ++i)
        ArrMap<T>(pb.grad.data(), dout) +=
            ConstArrMap<T>(self.grad.data() + static_cast<int64_t>(i) * dout, dout);
    }
  });
}

/// In-place row-stable softmax over contiguous rows.
template <class T>
void softmax_rows_inplace(T* data, int64_t rows, int d) {
  for (int64_t i = 0; i < rows; ++i) {
    ArrMap<T> row(data + i * d, d);
    row -= row.maxCoeff();
    row = row.exp();
    row /= row.sum();
  }
}

/// Row-stable softmax over the last axis.
template <class T>
Var<T> softmax_last(const Var<T>& x) {
  auto [rows, d] = as_rows(x->val.shape());
  Tensor<T> out = x->val;
  softmax_rows_inplace(out.data(), rows, d);
  return make_node<T>(std::move(out), {x}, [rows = rows, d = d](Node<T>& self) {
    Node<T>& p = *self.parents[0];
    if (!p.requires_grad) return;
    p.ensure_grad();
    for (int64_t i = 0; i < rows; ++i) {
      ConstArrMap<T> y(self.val.data() + i * d, d);
      ConstArrMap<T> g(self.grad.data() + i * d, d);
      T dot = (g * y).sum();
      ArrMap<T> gp(p.grad.data() + i * d, d);
      gp += y * (g - dot);
    }
  });
}

/// Per-last-axis normalization to zero mean / unit variance, then gamma/beta.
template <class T>
Var<T> layer_norm(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta, T eps = T(1e-6)) {
  auto [rows, d] = as_rows(x->val.shape());
  if (gamma->val.numel() != d || beta->val.numel() != d)
    throw std::invalid_argument("layer_norm: parameter size mismatch");
  Tensor<T> out(x->val.shape());
  auto xhat = std::make_shared<Tensor<T>>(x->val.shape());
  auto inv_std = std::make_shared<std::vector<T>>(static_cast<size_t>(rows));
  ConstArrMap<T> gm(gamma->val.data(), d), bt(beta->val.data(), d);
  for (int64_t i = 0; i < rows; ++i) {
    ConstArrMap<T> px(x->val.data() + i * d, d);
    T mu = px.mean();
    T var = (px - mu).square().sum() / static_cast<T>(d);
    T inv = T(1) / std::sqrt(var + eps);
    (*inv_std)[static_cast<size_t>(i)] = inv;
    ArrMap<T> ph(xhat->data() + i * d, d);
    ArrMap<T> po(out.data() + i * d, d);
    ph = (px - mu) * inv;
    po = gm * ph + bt;
  }
  return make_node<T>(std::move(out), {x, gamma, beta},
                      [rows = rows, d = d, xhat, inv_std](Node<T>& self) {
    Node<T>& px = *self.parents[0];
    Node<T>& pg = *self.parents[1];
    Node<T>& pb = *self.parents[2];
    if (pg.requires_grad) pg.ensure_grad();
    if (pb.requires_grad) pb.ensure_grad();
    if (px.requires_grad) px.ensure_grad();
    ConstArrMap<T> gm(pg.val.data(), d);
    for (int64_t i = 0; i < rows; ++i) {
      ConstArrMap<T> g(self.grad.data() + i * d, d);
      ConstArrMap<T> h(xhat->data() + i * d, d);
      if (pg.requires_grad) {
        ArrMap<T> gg(pg.grad.data(), d);
        gg += g * h;
      }
      if (pb.requires_grad) {
        ArrMap<T> gb(pb.grad.data(), d);
        gb += g;
      }
      if (px.requires_grad) {
        // dx = inv * (dh - mean(dh) - xhat * mean(dh .* xhat)), dh = g .* gamma
        auto dh = (g * gm).eval();
        T mean_dh = dh.mean();
        T mean_dhh = (dh * h).mean();
        T inv = (*inv_std)[static_cast<size_t>(i)];
        ArrMap<T> gp(px.grad.data() + i * d, d);
        gp += inv * (dh - mean_dh - h * mean_dhh);
      }
    }
  });
}

// The project-wide smooth nonlinearity: tanh-form GELU,
// 0.5 x (1 + tanh(sqrt(2/pi) (x + 0.044715 x^3))).
constexpr double kGeluC = 0.7978845608028653558;  // sqrt(2/pi)
constexpr double kGeluA = 0.044715;

template <class T>
Var<T> gelu(const Var<T>& x) {
  Tensor<T> out(x->val.shape());
  {
    ConstArrMap<T> v(x->val.data(), x->val.numel());
    ArrMap<T> o(out.data(), out.numel());
    o = T(0.5) * v * (T(1) + (T(kGeluC) * (v + T(kGeluA) * v.cube())).tanh());
  }
  return make_node<T>(std::move(out), {x}, [](Node<T>& self) {
    Node<T>& p = *self.parents[0];
    if (!p.requires_grad) return;
    p.ensure_grad();
    ConstArrMap<T> v(p.val.data(), p.val.numel());
    ConstArrMap<T> g(self.grad.data(), self.grad.numel());
    ArrMap<T> gp(p.grad.data(), p.grad.numel());
    auto th = ((T(kGeluC) * (v + T(kGeluA) * v.cube())).tanh()).eval();
    auto du = (T(kGeluC) * (T(1) + T(3 * kGeluA) * v.square())).eval();
    gp += g * (T(0.5) * (T(1) + th) + T(0.5) * v * (T(1) - th.square()) * du);
  });
}

template <class T>
Var<T> sigmoid(const Var<T>& x) {
  Tensor<T> out(x->val.shape());
  {
    ConstArrMap<T> v(x->val.data(), x->val.numel());
    ArrMap<T> o(out.data(), out.numel());
    o = T(0.5) * (T(1) + (T(0.5) * v).tanh());  // stable for large |x|
  }
  return make_node<T>(std::move(out), {x}, [](Node<T>& self) {
    Node<T>& p = *self.parents[0];
    if (!p.requires_grad) return;
    p.ensure_grad();
    ConstArrMap<T> y(self.val.data(), self.val.numel());
    ConstArrMap<T> g(self.grad.data(), self.grad.numel());
    ArrMap<T> gp(p.grad.data(), p.grad.numel());
    gp += g * y * (T(1) - y);
  });
}

/// Scalar <x, w> with fixed weights; the generic scalarizer for checks.
template <class T>
Var<T> weighted_sum(const Var<T>& x, Tensor<T> weights) {
  if (weights.numel() != x->val.numel())
    throw std::invalid_argument("weighted_sum: size mismatch");
  auto w = std::make_shared<Tensor<T>>(std::move(weights));
  T acc = T(0);
  for (int64_t i = 0; i < x->val.numel(); ++i) acc += x->val[i] * (*w)[i];
  return make_node<T>(Tensor<T>::scalar(acc), {x}, [w](Node<T>& self) {
    Node<T>& p = *self.parents[0];
    if (!p.requires_grad) return;
    p.ensure_grad();
    for (int64_t i = 0; i < p.grad.numel(); ++i) p.grad[i] += self.grad[0] * (*w)[i];
  });
}

// ---------------------------------------------------------------------------
// Attention
// ---------------------------------------------------------------------------

template <class T>
struct AttnRecord {
  std::string branch;
  int layer = 0;
  Tensor<T> weights;  // (B, heads, Tq, Tk); heads x Q x K per sample
};

constexpr double kMaskNegInf = -1e30;

/// Scaled dot-product attention over already-projected q/k/v, per head.
/// mask (additive, kMaskNegInf blocks) may be (Tq,Tk) or (B,Tq,Tk).
template <class T>
Var<T> attention(const Var<T>& q, const Var<T>& k, const Var<T>& v, int heads,
                 const Tensor<T>* mask, AttnRecord<T>* record) {
  if (q->val.rank() != 3 || k->val.rank() != 3 || v->val.rank() != 3)
    throw std::invalid_argument("attention: expected (B,T,D) inputs");
  int b = q->val.dim(0), tq = q->val.dim(1), d = q->val.dim(2);
  int tk = k->val.dim(1);
  if (k->val.dim(0) != b || v->val.dim(0) != b || v->val.dim(1) != tk || k->val.dim(2) != d ||
      v->val.dim(2) != d)
    throw std::invalid_argument("attention: q/k/v shape mismatch");
  if (heads <= 0 || d % heads != 0)
    throw std::invalid_argument("attention: head count must divide feature dim");
  if (mask) {
    bool ok2 = mask->rank() == 2 && mask->dim(0) == tq && mask->dim(1) == tk;
    bool ok3 = mask->rank() == 3 && mask->dim(0) == b && mask->dim(1) == tq && mask->dim(2) == tk;
    if (!ok2 && !ok3) throw std::invalid_argument("attention: mask shape mismatch");
  }
  int dh = d / heads;
  T scl = T(1) / std::sqrt(static_cast<T>(dh));

  auto probs = std::make_shared<Tensor<T>>(std::vector<int>{b, heads, tq, tk});
  Tensor<T> out({b, tq, d});
  out.fill(T(0));
  AlignedVec<T> scores(static_cast<size_t>(tq) * tk);
  for (int bi = 0; bi < b; ++bi) {
    const T* mrow = mask ? (mask->rank() == 2 ? mask->data()
                                              : mask->data() + static_cast<int64_t>(bi) * tq * tk)
                         : nullptr;
    for (int h = 0; h < heads; ++h) {
      const T* qh = q->val.data() + (static_cast<int64_t>(bi) * tq) * d + h * dh;
      const T* kh = k->val.data() + (static_cast<int64_t>(bi) * tk) * d + h * dh;
      const T* vh = v->val.data() + (static_cast<int64_t>(bi) * tk) * d + h * dh;
      gemm<T>(false, true, tq, tk, dh, scl, qh, d, kh, d, T(0), scores.data(), tk);
      T* p = probs->data() + ((static_cast<int64_t>(bi) * heads + h) * tq) * tk;
      for (int i = 0; i < tq; ++i) {
        ArrMap<T> srow(scores.data() + static_cast<int64_t>(i) * tk, tk);
        if (mrow) srow += ConstArrMap<T>(mrow + static_cast<int64_t>(i) * tk, tk);
        srow -= srow.maxCoeff();
        srow = srow.exp();
        ArrMap<T> prow(p + static_cast<int64_t>(i) * tk, tk);
        prow = srow / srow.sum();
      }
      T* oh = out.data() + (static_cast<int64_t>(bi) * tq) * d + h * dh;
      gemm<T>(false, false, tq, dh, tk, T(1), p, tk, vh, d, T(0), oh, d);
    }
  }
  if (record) record->weights = *probs;

  return make_node<T>(std::move(out), {q, k, v},
                      [b, tq, tk, d, dh, heads, scl, probs](Node<T>& self) {
    Node<T>& pq = *self.parents[0];
    Node<T>& pk = *self.parents[1];
    Node<T>& pv = *self.parents[2];
    pq.ensure_grad();
    pk.ensure_grad();
    pv.ensure_grad();
    AlignedVec<T> dp(static_cast<size_t>(tq) * tk);
    AlignedVec<T> ds(static_cast<size_t>(tq) * tk);
    for (int bi = 0; bi < b; ++bi) {
      for (int h = 0; h < heads; ++h) {
        const T* p = probs->data() + ((static_cast<int64_t>(bi) * heads + h) * tq) * tk;
        const T* go = self.grad.data() + (static_cast<int64_t>(bi) * tq) * d + h * dh;
        const T* qh = pq.val.data() + (static_cast<int64_t>(bi) * tq) * d + h * dh;
        const T* kh = pk.val.data() + (static_cast<int64_t>(bi) * tk) * d + h * dh;
        const T* vh = pv.val.data() + (static_cast<int64_t>(bi) * tk) * d + h * dh;
        // dV += P^T dO
        T* gv = pv.grad.data() + (static_cast<int64_t>(bi) * tk) * d + h * dh;
        gemm<T>(true, false, tk, dh, tq, T(1), p, tk, go, d, T(1), gv, d);
        // dP = dO V^T, then softmax backward into dS
        gemm<T>(false, true, tq, tk, dh, T(1), go, d, vh, d, T(0), dp.data(), tk);
        for (int i = 0; i < tq; ++i) {
          ConstArrMap<T> prow(p + static_cast<int64_t>(i) * tk, tk);
          ConstArrMap<T> dprow(dp.data() + static_cast<int64_t>(i) * tk, tk);
          T dot = (dprow * prow).sum();
          ArrMap<T> dsrow(ds.data() + static_cast<int64_t>(i) * tk, tk);
          dsrow = prow * (dprow - dot);
        }
        // dQ += scl * dS K ; dK += scl * dS^T Q
        T* gq = pq.grad.data() + (static_cast<int64_t>(bi) * tq) * d + h * dh;
        gemm<T>(false, false, tq, dh, tk, scl, ds.data(), tk, kh, d, T(1), gq, d);
        T* gk = pk.grad.data() + (static_cast<int64_t>(bi) * tk) * d + h * dh;
        gemm<T>(true, false, tk, dh, tq, scl, ds.data(), tk, qh, d, T(1), gk, d);
      }
    }
  });
}

}  // namespace cppd::ag
