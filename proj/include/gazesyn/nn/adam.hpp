#pragma once

#include <cmath>
#include <span>
#include <vector>

#include "gazesyn/nn/network.hpp"

namespace gazesyn::nn {

struct AdamOptions {
  double learning_rate = 2e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Adam with bias correction. Moments are allocated lazily on the first
/// step to match the parameter list handed in.
class Adam {
 public:
  explicit Adam(AdamOptions options = {}) : options_(options) {}

  const AdamOptions& options() const { return options_; }
  long step_count() const { return step_; }
  const std::vector<Tensor>& first_moments() const { return m_; }
  const std::vector<Tensor>& second_moments() const { return v_; }

  void step(std::span<Tensor* const> params, std::span<const Tensor> grads) {
    require(params.size() == grads.size(), "shape_mismatch", "adam: parameter/gradient count mismatch");
    for (std::size_t i = 0; i < params.size(); ++i) {
      require(params[i]->shape() == grads[i].shape(), "shape_mismatch",
              "adam: gradient " + std::to_string(i) + " has shape " + shape_string(grads[i].shape()) +
                  ", parameter has " + shape_string(params[i]->shape()));
      if (!grads[i].all_finite())
        throw Error("non_finite_gradient", "adam: gradient " + std::to_string(i) + " is not finite");
    }
    if (m_.empty()) {
      for (auto* p : params) {
        m_.emplace_back(p->shape());
        v_.emplace_back(p->shape());
      }
    }
    require(m_.size() == params.size(), "shape_mismatch", "adam: parameter list changed between steps");
    ++step_;
    const auto& o = options_;
    const double bc1 = 1.0 - std::pow(o.beta1, static_cast<double>(step_));
    const double bc2 = 1.0 - std::pow(o.beta2, static_cast<double>(step_));
    for (std::size_t i = 0; i < params.size(); ++i) {
      auto& p = *params[i];
      const auto& g = grads[i];
      auto& m = m_[i];
      auto& v = v_[i];
      for (std::size_t k = 0; k < p.size(); ++k) {
        m[k] = o.beta1 * m[k] + (1.0 - o.beta1) * g[k];
        v[k] = o.beta2 * v[k] + (1.0 - o.beta2) * g[k] * g[k];
        const double mhat = m[k] / bc1;
        const double vhat = v[k] / bc2;
        p[k] -= o.learning_rate * mhat / (std::sqrt(vhat) + o.epsilon);
      }
    }
  }

  void step(Network& net, const Gradients& grads) {
    auto params = net.parameters();
    step(params, grads.tensors);
  }

 private:
  AdamOptions options_;
  long step_ = 0;
  std::vector<Tensor> m_;
  std::vector<Tensor> v_;
};

}  // namespace gazesyn::nn
