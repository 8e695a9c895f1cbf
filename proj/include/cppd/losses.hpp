#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "cppd/autograd.hpp"

namespace cppd::losses {

using ag::Var;

/// Scalar objective with its per-term breakdown.
template <class T>
struct LossValue {
  Var<T> total;
  double cc = 0.0, co = 0.0, rec = 0.0, side = 0.0;
  double scalar() const { return static_cast<double>(total->val[0]); }
};

namespace detail {

// Probability floor inside log() so saturated f32 softmax output cannot
// produce -inf; far below any tested tolerance.
template <class T>
inline T safe_p(T p) {
  return std::max(p, T(1e-30));
}

template <class T>
void check_prob_rows(const Tensor<T>& p, const char* what) {
  auto [rows, d] = ag::as_rows(p.shape());
  for (int64_t i = 0; i < rows; ++i) {
    T sum = T(0);
    const T* row = p.data() + i * d;
    for (int j = 0; j < d; ++j) sum += row[j];
    if (std::abs(static_cast<double>(sum) - 1.0) > 1e-4)
      throw std::invalid_argument(std::string(what) + ": row " + std::to_string(i) +
                                  " is not a probability vector (sum=" +
                                  std::to_string(static_cast<double>(sum)) + ")");
  }
}

// Losses accept a single instance or a batch; leading batch dim is averaged.
inline int batch_of(const std::vector<int>& shape, int instance_rank) {
  if (static_cast<int>(shape.size()) == instance_rank) return 1;
  if (static_cast<int>(shape.size()) == instance_rank + 1) return shape[0];
  throw std::invalid_argument("loss: unexpected input rank");
}

}  // namespace detail

/// Character-counting loss: mean over symbols of the negative log
/// probability assigned to the true occurrence count.
/// probs: (S, L+1) or (B, S, L+1); counts: B*S entries in [0, L].
template <class T>
Var<T> cc_loss(const Var<T>& probs, const std::vector<int>& counts) {
  int b = detail::batch_of(probs->val.shape(), 2);
  int s = probs->val.dim(probs->val.rank() - 2);
  int nl = probs->val.dim(probs->val.rank() - 1);
  if (static_cast<int64_t>(counts.size()) != static_cast<int64_t>(b) * s)
    throw std::invalid_argument("cc_loss: counts size mismatch");
  detail::check_prob_rows(probs->val, "cc_loss");
  double acc = 0.0;
  for (int64_t i = 0; i < static_cast<int64_t>(b) * s; ++i) {
    int c = counts[static_cast<size_t>(i)];
    if (c < 0 || c >= nl) throw std::invalid_argument("cc_loss: count out of range");
    acc -= std::log(static_cast<double>(detail::safe_p(probs->val[i * nl + c])));
  }
  Tensor<T> out = Tensor<T>::scalar(static_cast<T>(acc / (static_cast<double>(b) * s)));
  return ag::make_node<T>(std::move(out), {probs}, [counts, b, s, nl](ag::Node<T>& self) {
    ag::Node<T>& p = *self.parents[0];
    if (!p.requires_grad) return;
    p.ensure_grad();
    T g = self.grad[0];
    T norm = T(1) / (static_cast<T>(b) * static_cast<T>(s));
    for (int64_t i = 0; i < static_cast<int64_t>(b) * s; ++i) {
      int c = counts[static_cast<size_t>(i)];
      p.grad[i * nl + c] -= g * norm / detail::safe_p(p.val[i * nl + c]);
    }
  });
}

/// Aggregation CE: supervises the per-class probability mass pooled over
/// slots instead of per-slot classes.
/// probs: (L, S+1) or (B, L, S+1); weights: (S+1) or (B, S+1), rows sum to 1.
template <class T>
Var<T> ace_loss(const Var<T>& probs, const Var<T>& weights) {
  int b = detail::batch_of(probs->val.shape(), 2);
  int l = probs->val.dim(probs->val.rank() - 2);
  int c1 = probs->val.dim(probs->val.rank() - 1);
  if (weights->val.numel() != static_cast<int64_t>(b) * c1)
    throw std::invalid_argument("ace_loss: weight size mismatch");
  detail::check_prob_rows(probs->val, "ace_loss");
  for (int bi = 0; bi < b; ++bi) {
    double wsum = 0.0;
    for (int c = 0; c < c1; ++c) wsum += static_cast<double>(weights->val[bi * c1 + c]);
    if (std::abs(wsum - 1.0) > 1e-9)
      throw std::invalid_argument("ace_loss: target weights must sum to 1");
  }
  // class mass m[b,c] = sum_l probs[b,l,c]
  std::vector<double> mass(static_cast<size_t>(b) * c1, 0.0);
  for (int bi = 0; bi < b; ++bi)
    for (int li = 0; li < l; ++li)
      for (int c = 0; c < c1; ++c)
        mass[static_cast<size_t>(bi) * c1 + c] +=
            static_cast<double>(probs->val[(static_cast<int64_t>(bi) * l + li) * c1 + c]);
  double acc = 0.0;
  for (int bi = 0; bi < b; ++bi)
    for (int c = 0; c < c1; ++c)
      acc -= static_cast<double>(weights->val[bi * c1 + c]) *
             std::log(std::max(mass[static_cast<size_t>(bi) * c1 + c] / l, 1e-300));
  Tensor<T> out = Tensor<T>::scalar(static_cast<T>(acc / b));
  return ag::make_node<T>(std::move(out), {probs, weights},
                          [b, l, c1, mass](ag::Node<T>& self) {
    ag::Node<T>& p = *self.parents[0];
    ag::Node<T>& w = *self.parents[1];
    if (!p.requires_grad) return;
    p.ensure_grad();
    T g = self.grad[0];
    for (int bi = 0; bi < b; ++bi)
      for (int c = 0; c < c1; ++c) {
        T d = -g * w.val[bi * c1 + c] /
              (static_cast<T>(b) * static_cast<T>(mass[static_cast<size_t>(bi) * c1 + c]));
        for (int li = 0; li < l; ++li)
          p.grad[(static_cast<int64_t>(bi) * l + li) * c1 + c] += d;
      }
  });
}

/// Character-ordering loss: binary CE over the L slot-occupancy
/// probabilities (already sigmoided), clamped to [1e-7, 1-1e-7].
/// probs: (L) or (B, L); mask: B*L entries in {0,1}.
template <class T>
Var<T> co_loss(const Var<T>& probs, const std::vector<uint8_t>& mask) {
  int b = detail::batch_of(probs->val.shape(), 1);
  int l = probs->val.dim(probs->val.rank() - 1);
  if (static_cast<int64_t>(mask.size()) != static_cast<int64_t>(b) * l)
    throw std::invalid_argument("co_loss: mask size mismatch");
  constexpr double kClamp = 1e-7;
  double acc = 0.0;
  for (int64_t i = 0; i < static_cast<int64_t>(b) * l; ++i) {
    double p = std::clamp(static_cast<double>(probs->val[i]), kClamp, 1.0 - kClamp);
    acc -= mask[static_cast<size_t>(i)] ? std::log(p) : std::log(1.0 - p);
  }
  Tensor<T> out = Tensor<T>::scalar(static_cast<T>(acc / (static_cast<double>(b) * l)));
  return ag::make_node<T>(std::move(out), {probs}, [mask, b, l](ag::Node<T>& self) {
    ag::Node<T>& p = *self.parents[0];
    if (!p.requires_grad) return;
    p.ensure_grad();
    T g = self.grad[0];
    T norm = T(1) / (static_cast<T>(b) * static_cast<T>(l));
    for (int64_t i = 0; i < static_cast<int64_t>(b) * l; ++i) {
      double v = static_cast<double>(p.val[i]);
      if (v < kClamp || v > 1.0 - kClamp) continue;  // clamped region is flat
      T d = mask[static_cast<size_t>(i)] ? T(-1.0 / v) : T(1.0 / (1.0 - v));
      p.grad[i] += g * norm * d;
    }
  });
}

/// Recognition CE: mean over all L slots (EOS and PAD slots included) of the
/// negative log probability of the labeled class.
/// probs: (L, V) or (B, L, V); slots: B*L class ids.
template <class T>
Var<T> rec_loss(const Var<T>& probs, const std::vector<int>& slots) {
  int b = detail::batch_of(probs->val.shape(), 2);
  int l = probs->val.dim(probs->val.rank() - 2);
  int v = probs->val.dim(probs->val.rank() - 1);
  if (static_cast<int64_t>(slots.size()) != static_cast<int64_t>(b) * l)
    throw std::invalid_argument("rec_loss: slots size mismatch");
  detail::check_prob_rows(probs->val, "rec_loss");
  double acc = 0.0;
  for (int64_t i = 0; i < static_cast<int64_t>(b) * l; ++i) {
    int c = slots[static_cast<size_t>(i)];
    if (c < 0 || c >= v) throw std::invalid_argument("rec_loss: class id out of range");
    acc -= std::log(static_cast<double>(detail::safe_p(probs->val[i * v + c])));
  }
  Tensor<T> out = Tensor<T>::scalar(static_cast<T>(acc / (static_cast<double>(b) * l)));
  return ag::make_node<T>(std::move(out), {probs}, [slots, b, l, v](ag::Node<T>& self) {
    ag::Node<T>& p = *self.parents[0];
    if (!p.requires_grad) return;
    p.ensure_grad();
    T g = self.grad[0];
    T norm = T(1) / (static_cast<T>(b) * static_cast<T>(l));
    for (int64_t i = 0; i < static_cast<int64_t>(b) * l; ++i) {
      int c = slots[static_cast<size_t>(i)];
      p.grad[i * v + c] -= g * norm / detail::safe_p(p.val[i * v + c]);
    }
  });
}

/// Autoregressive NLL: per sample, the mean over decoding steps 1..N+1
/// (characters plus EOS; PAD slots excluded) of -log p(y_t | prefix);
/// then averaged over the batch.
/// probs: (L, V) or (B, L, V); slots: B*L rec-label ids; pad_id marks
/// excluded steps.
template <class T>
Var<T> ar_nll(const Var<T>& probs, const std::vector<int>& slots, int pad_id) {
  int b = detail::batch_of(probs->val.shape(), 2);
  int l = probs->val.dim(probs->val.rank() - 2);
  int v = probs->val.dim(probs->val.rank() - 1);
  if (static_cast<int64_t>(slots.size()) != static_cast<int64_t>(b) * l)
    throw std::invalid_argument("ar_nll: slots size mismatch");
  detail::check_prob_rows(probs->val, "ar_nll");
  std::vector<int> steps(static_cast<size_t>(b), 0);
  double acc = 0.0;
  for (int bi = 0; bi < b; ++bi) {
    double sample = 0.0;
    int n = 0;
    for (int li = 0; li < l; ++li) {
      int c = slots[static_cast<size_t>(bi) * l + li];
      if (c == pad_id) continue;
      sample -= std::log(static_cast<double>(
          detail::safe_p(probs->val[(static_cast<int64_t>(bi) * l + li) * v + c])));
      ++n;
    }
    if (n == 0) throw std::invalid_argument("ar_nll: sample has no supervised steps");
    steps[static_cast<size_t>(bi)] = n;
    acc += sample / n;
  }
  Tensor<T> out = Tensor<T>::scalar(static_cast<T>(acc / b));
  return ag::make_node<T>(std::move(out), {probs}, [slots, steps, b, l, v, pad_id](
                                                       ag::Node<T>& self) {
    ag::Node<T>& p = *self.parents[0];
    if (!p.requires_grad) return;
    p.ensure_grad();
    T g = self.grad[0];
    for (int bi = 0; bi < b; ++bi) {
      T norm = T(1) / (static_cast<T>(b) * static_cast<T>(steps[static_cast<size_t>(bi)]));
      for (int li = 0; li < l; ++li) {
        int c = slots[static_cast<size_t>(bi) * l + li];
        if (c == pad_id) continue;
        int64_t at = (static_cast<int64_t>(bi) * l + li) * v + c;
        p.grad[at] -= g * norm / detail::safe_p(p.val[at]);
      }
    }
  });
}

/// Combined objective lambda_co*co + lambda_cc*cc + lambda_rec*rec with the
/// breakdown recorded; the weights default to 1.
template <class T>
LossValue<T> total_loss(const Var<T>& cc, const Var<T>& co, const Var<T>& rec,
                        T lambda_cc = T(1), T lambda_co = T(1), T lambda_rec = T(1)) {
  LossValue<T> lv;
  lv.cc = static_cast<double>(cc->val[0]);
  lv.co = static_cast<double>(co->val[0]);
  lv.rec = static_cast<double>(rec->val[0]);
  Tensor<T> out = Tensor<T>::scalar(lambda_cc * cc->val[0] + lambda_co * co->val[0] +
                                     lambda_rec * rec->val[0]);
  lv.total = ag::make_node<T>(std::move(out), {cc, co, rec},
                              [lambda_cc, lambda_co, lambda_rec](ag::Node<T>& self) {
    const T ws[3] = {lambda_cc, lambda_co, lambda_rec};
    for (int i = 0; i < 3; ++i) {
      ag::Node<T>& p = *self.parents[static_cast<size_t>(i)];
      if (!p.requires_grad) continue;
      p.ensure_grad();
      p.grad[0] += self.grad[0] * ws[i];
    }
  });
  return lv;
}

/// Plain weighted sum of scalar losses (PD-P main + side CE).
template <class T>
Var<T> add_scalars(const Var<T>& a, const Var<T>& b) {
  Tensor<T> out = Tensor<T>::scalar(a->val[0] + b->val[0]);
  return ag::make_node<T>(std::move(out), {a, b}, [](ag::Node<T>& self) {
    for (int i = 0; i < 2; ++i) {
      ag::Node<T>& p = *self.parents[static_cast<size_t>(i)];
      if (!p.requires_grad) continue;
      p.ensure_grad();
      p.grad[0] += self.grad[0];
    }
  });
}

}  // namespace cppd::losses
