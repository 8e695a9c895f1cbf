#pragma once

#include <string>
#include <vector>

#include "cppd/autograd.hpp"
#include "cppd/rng.hpp"
#include "cppd/tensor.hpp"

namespace cppd::nn {

using ag::AttnRecord;
using ag::Var;

/// Samples from N(mean, std^2) truncated to [mean-2std, mean+2std].
template <class T>
Tensor<T> trunc_normal_init(std::vector<int> shape, double mean, double std, Pcg32& rng) {
  if (!(std > 0.0)) throw std::invalid_argument("trunc_normal_init: std must be positive");
  Tensor<T> t(std::move(shape));
  for (int64_t i = 0; i < t.numel(); ++i) t[i] = static_cast<T>(rng.trunc_normal(mean, std));
  return t;
}

/// Named trainable tensors of one model; names are unique and registration
/// order is the canonical (deterministic) iteration order.
template <class T>
struct ParamStore {
  std::vector<std::pair<std::string, Var<T>>> items;

  Var<T> add(const std::string& name, Tensor<T> init) {
    for (const auto& [n, v] : items)
      if (n == name) throw std::invalid_argument("param: name reused: " + name);
    Var<T> v = ag::leaf(std::move(init), /*requires_grad=*/true);
    items.emplace_back(name, v);
    return v;
  }

  Var<T> find(const std::string& name) const {
    for (const auto& [n, v] : items)
      if (n == name) return v;
    throw std::invalid_argument("param: unknown name: " + name);
  }

  int64_t total_size() const {
    int64_t n = 0;
    for (const auto& [name, v] : items) n += v->val.numel();
    return n;
  }
};

// Weight init is truncated normal with std 0.02 for linear maps; the query
// and token embeddings use std 0.2.
constexpr double kWeightStd = 0.02;
constexpr double kEmbedStd = 0.2;

template <class T>
struct LinearLayer {
  Var<T> w, b;

  LinearLayer() = default;
  LinearLayer(ParamStore<T>& ps, const std::string& prefix, int din, int dout, Pcg32& rng,
              double std = kWeightStd)
      : w(ps.add(prefix + ".w", trunc_normal_init<T>({din, dout}, 0.0, std, rng))),
        b(ps.add(prefix + ".b", Tensor<T>({dout}))) {}

  Var<T> forward(const Var<T>& x) const { return ag::linear(x, w, b); }
};

template <class T>
struct LayerNormLayer {
  Var<T> gamma, beta;
  T eps = T(1e-6);

  LayerNormLayer() = default;
  LayerNormLayer(ParamStore<T>& ps, const std::string& prefix, int d)
      : gamma(ps.add(prefix + ".gamma", Tensor<T>::full({d}, T(1)))),
        beta(ps.add(prefix + ".beta", Tensor<T>({d}))) {}

  Var<T> forward(const Var<T>& x) const { return ag::layer_norm(x, gamma, beta, eps); }
};

/// Multi-head attention: q/k/v/out projections around scaled dot-product
/// attention; the per-head probabilities can be captured into an AttnRecord.
template <class T>
struct MhaLayer {
  LinearLayer<T> wq, wk, wv, wo;
  int heads = 1;

  MhaLayer() = default;
  MhaLayer(ParamStore<T>& ps, const std::string& prefix, int d, int heads_, Pcg32& rng)
      : wq(ps, prefix + ".wq", d, d, rng),
        wk(ps, prefix + ".wk", d, d, rng),
        wv(ps, prefix + ".wv", d, d, rng),
        wo(ps, prefix + ".wo", d, d, rng),
        heads(heads_) {}

  Var<T> forward(const Var<T>& q_in, const Var<T>& kv_in, const Tensor<T>* mask = nullptr,
                 AttnRecord<T>* record = nullptr) const {
    auto q = wq.forward(q_in);
    auto k = wk.forward(kv_in);
    auto v = wv.forward(kv_in);
    auto o = ag::attention(q, k, v, heads, mask, record);
    return wo.forward(o);
  }
};

template <class T>
struct MlpLayer {
  LinearLayer<T> fc1, fc2;

  MlpLayer() = default;
  MlpLayer(ParamStore<T>& ps, const std::string& prefix, int d, int hidden_ratio, Pcg32& rng)
      : fc1(ps, prefix + ".fc1", d, d * hidden_ratio, rng),
        fc2(ps, prefix + ".fc2", d * hidden_ratio, d, rng) {}

  Var<T> forward(const Var<T>& x) const { return fc2.forward(ag::gelu(fc1.forward(x))); }
};

/// Central-difference check of analytic gradients. fn rebuilds the scalar
/// loss from the given leaves; returns the max relative error with the
/// max(1, |a|, |n|) denominator.
template <class T>
double grad_check(const std::function<Var<T>(const std::vector<Var<T>>&)>& fn,
                  std::vector<Var<T>>& params, T eps = T(1e-4)) {
  for (auto& p : params) {
    p->ensure_grad();
    p->grad.fill(T(0));
  }
  Var<T> loss = fn(params);
  ag::backward(loss);
  std::vector<Tensor<T>> analytic;
  analytic.reserve(params.size());
  for (auto& p : params) analytic.push_back(p->grad);

  double max_rel = 0.0;
  ag::NoGrad guard;
  for (size_t pi = 0; pi < params.size(); ++pi) {
    Tensor<T>& val = params[pi]->val;
    for (int64_t i = 0; i < val.numel(); ++i) {
      T keep = val[i];
      val[i] = keep + eps;
      double up = static_cast<double>(fn(params)->val[0]);
      val[i] = keep - eps;
      double dn = static_cast<double>(fn(params)->val[0]);
      val[i] = keep;
      double numeric = (up - dn) / (2.0 * static_cast<double>(eps));
      double a = static_cast<double>(analytic[pi][i]);
      double rel = std::abs(a - numeric) / std::max({1.0, std::abs(a), std::abs(numeric)});
      max_rel = std::max(max_rel, rel);
    }
  }
  return max_rel;
}

}  // namespace cppd::nn
