#pragma once

/// @file losses.hpp
/// Training objectives: binary cross-entropy, soft dice, edge MSE, and
/// their deep-supervision combination. Every loss returns its value
/// together with the analytic gradient with respect to the prediction, so
/// the trainer can seed the autograd sweep and the tests can compare
/// against finite differences. Accumulation always runs in double.

#include <array>
#include <cmath>
#include <string>

#include "edgeseg/errors.hpp"
#include "edgeseg/tensor.hpp"

namespace edgeseg {

struct LossWeights {
  std::array<double, 3> w{0.5, 0.8, 1.0};  // w[0] weights the coarsest edge level
  double eps_log = 1e-7;
  double eps_dice = 1e-5;

  void validate() const {
    for (double v : w)
      if (v < 0.0) throw ContractViolation("LossWeights: weights must be >= 0");
    if (!(eps_log > 0.0) || !(eps_dice > 0.0)) throw ContractViolation("LossWeights: eps values must be > 0");
  }
};

template <typename T>
struct LossResult {
  T value{};
  Tensor<T> grad;  // d value / d pred, same shape as pred
};

namespace detail {

template <typename T>
void require_binary(const Tensor<T>& target, const char* what) {
  for (std::int64_t i = 0; i < target.numel(); ++i)
    if (target[i] != T{0} && target[i] != T{1})
      throw ContractViolation(std::string(what) + ": target must be binary");
}

}  // namespace detail

/// Mean over all elements of -[y log(p) + (1-y) log(1-p)], with p clamped
/// to [eps_log, 1 - eps_log]. The gradient is zero where the clamp is
/// active.
template <typename T>
LossResult<T> cross_entropy(const Tensor<T>& pred, const Tensor<T>& target, double eps_log = 1e-7) {
  require_same_shape(pred.shape(), target.shape(), "cross_entropy");
  detail::require_binary(target, "cross_entropy");
  const std::int64_t m = pred.numel();
  const double lo = eps_log, hi = 1.0 - eps_log;

  LossResult<T> r;
  r.grad = Tensor<T>(pred.shape());
  double acc = 0.0;
  for (std::int64_t i = 0; i < m; ++i) {
    const double y = double(target[i]);
    const double p_raw = double(pred[i]);
    const double p = std::min(hi, std::max(lo, p_raw));
    acc -= y * std::log(p) + (1.0 - y) * std::log(1.0 - p);
    const bool clamped = p_raw < lo || p_raw > hi;
    r.grad[i] = clamped ? T{0} : T((p - y) / (p * (1.0 - p)) / double(m));
  }
  r.value = T(acc / double(m));
  return r;
}

/// Soft dice loss, computed per batch item over all of its voxels and then
/// averaged across the batch:
///   1 - (2 sum(y p) + eps) / (sum(y^2) + sum(p^2) + eps).
template <typename T>
LossResult<T> dice_loss(const Tensor<T>& pred, const Tensor<T>& target, double eps_dice = 1e-5) {
  require_same_shape(pred.shape(), target.shape(), "dice_loss");
  const TensorShape s = pred.shape();
  const std::int64_t per_item = s.c * s.voxels();

  LossResult<T> r;
  r.grad = Tensor<T>(s);
  double acc = 0.0;
  for (std::int64_t n = 0; n < s.n; ++n) {
    const T* p = pred.data() + n * per_item;
    const T* y = target.data() + n * per_item;
    double inter = 0.0, denom = 0.0;
    for (std::int64_t i = 0; i < per_item; ++i) {
      inter += double(y[i]) * double(p[i]);
      denom += double(y[i]) * double(y[i]) + double(p[i]) * double(p[i]);
    }
    const double num = 2.0 * inter + eps_dice;
    const double den = denom + eps_dice;
    acc += 1.0 - num / den;
    // d/dp_i of (1 - num/den) = -(2 y_i den - num 2 p_i) / den^2, then the
    // 1/batch factor from the mean.
    T* g = r.grad.data() + n * per_item;
    const double scale = 1.0 / double(s.n);
    for (std::int64_t i = 0; i < per_item; ++i)
      g[i] = T(scale * (2.0 * double(p[i]) * num - 2.0 * double(y[i]) * den) / (den * den));
  }
  r.value = T(acc / double(s.n));
  return r;
}

/// Mean squared difference between a predicted and a reference edge map.
template <typename T>
LossResult<T> edge_loss(const Tensor<T>& pred, const Tensor<T>& target) {
  require_same_shape(pred.shape(), target.shape(), "edge_loss");
  const std::int64_t m = pred.numel();
  LossResult<T> r;
  r.grad = Tensor<T>(pred.shape());
  double acc = 0.0;
  for (std::int64_t i = 0; i < m; ++i) {
    const double d = double(pred[i]) - double(target[i]);
    acc += d * d;
    r.grad[i] = T(2.0 * d / double(m));
  }
  r.value = T(acc / double(m));
  return r;
}

template <typename T>
struct TotalLossResult {
  T total{};
  T dice{};
  std::array<T, 3> edge{};
  Tensor<T> grad_prob;
  std::array<Tensor<T>, 3> grad_edge;
};

/// Deep-supervision objective: dice on the segmentation probabilities plus
/// the weighted edge MSE at each decoder scale (index 0 = coarsest).
template <typename T>
TotalLossResult<T> total_loss(const Tensor<T>& prob, const Tensor<T>& target,
                              const std::array<Tensor<T>, 3>& edge_preds,
                              const std::array<Tensor<T>, 3>& edge_targets, const LossWeights& weights) {
  weights.validate();
  TotalLossResult<T> r;
  LossResult<T> d = dice_loss(prob, target, weights.eps_dice);
  r.dice = d.value;
  r.total = d.value;
  r.grad_prob = std::move(d.grad);
  for (int i = 0; i < 3; ++i) {
    LossResult<T> e = edge_loss(edge_preds[std::size_t(i)], edge_targets[std::size_t(i)]);
    r.edge[std::size_t(i)] = e.value;
    r.total += T(weights.w[std::size_t(i)]) * e.value;
    Tensor<T>& g = e.grad;
    const T w = T(weights.w[std::size_t(i)]);
    for (std::int64_t j = 0; j < g.numel(); ++j) g[j] *= w;
    r.grad_edge[std::size_t(i)] = std::move(g);
  }
  return r;
}

}  // namespace edgeseg
