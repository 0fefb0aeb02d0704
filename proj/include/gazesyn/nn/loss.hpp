#pragma once

#include <algorithm>
#include <cmath>
#include <span>

#include "gazesyn/nn/tensor.hpp"

namespace gazesyn::nn {

struct LossResult {
  double value = 0.0;
  Tensor grad;  // dL/dprediction, same shape as the prediction
};

/// Probabilities are clamped to this band before taking logs.
inline constexpr double kProbabilityClamp = 1e-7;

/// Binary cross-entropy averaged over all entries of `pred`.
/// The gradient is evaluated at the clamped probability.
inline LossResult bce_loss(const Tensor& pred, std::span<const double> labels) {
  require(pred.size() == labels.size() && pred.size() > 0, "shape_mismatch",
          "bce_loss: prediction and label counts differ");
  LossResult r{0.0, Tensor(pred.shape())};
  const double n = static_cast<double>(pred.size());
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double p = std::clamp(pred[i], kProbabilityClamp, 1.0 - kProbabilityClamp);
    const double y = labels[i];
    r.value -= y * std::log(p) + (1.0 - y) * std::log(1.0 - p);
    r.grad[i] = (-y / p + (1.0 - y) / (1.0 - p)) / n;
  }
  r.value /= n;
  return r;
}

inline LossResult bce_loss(const Tensor& pred, double label) {
  std::vector<double> labels(pred.size(), label);
  return bce_loss(pred, labels);
}

/// Mean squared error between prediction and target.
inline LossResult mse_loss(const Tensor& pred, const Tensor& target) {
  require(pred.shape() == target.shape(), "shape_mismatch", "mse_loss: shapes differ");
  LossResult r{0.0, Tensor(pred.shape())};
  const double n = static_cast<double>(pred.size());
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double d = pred[i] - target[i];
    r.value += d * d;
    r.grad[i] = 2.0 * d / n;
  }
  r.value /= n;
  return r;
}

/// Mean absolute error; subgradient 0 at equality.
inline LossResult mae_loss(const Tensor& pred, const Tensor& target) {
  require(pred.shape() == target.shape(), "shape_mismatch", "mae_loss: shapes differ");
  LossResult r{0.0, Tensor(pred.shape())};
  const double n = static_cast<double>(pred.size());
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double d = pred[i] - target[i];
    r.value += std::abs(d);
    r.grad[i] = (d > 0 ? 1.0 : (d < 0 ? -1.0 : 0.0)) / n;
  }
  r.value /= n;
  return r;
}

}  // namespace gazesyn::nn
