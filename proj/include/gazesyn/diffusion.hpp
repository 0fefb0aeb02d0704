#pragma once

#include <cmath>
#include <functional>
#include <numbers>
#include <vector>

#include "gazesyn/conditioning.hpp"
#include "gazesyn/nn/loss.hpp"
#include "gazesyn/nn/tensor.hpp"
#include "gazesyn/signal.hpp"

namespace gazesyn::diffusion {

using nn::Tensor;

/// Linear variance schedule and the quantities derived from it.
/// Vectors are stored 0-based; the accessors take the 1-based step t.
struct NoiseSchedule {
  int steps = 0;
  std::vector<double> beta;
  std::vector<double> alpha;
  std::vector<double> alpha_bar;
  std::vector<double> posterior_var;

  double beta_at(int t) const { return beta.at(index(t)); }
  double alpha_at(int t) const { return alpha.at(index(t)); }
  double alpha_bar_at(int t) const { return alpha_bar.at(index(t)); }
  /// Cumulative product with alpha_bar_0 = 1.
  double alpha_bar_prev(int t) const { return t == 1 ? 1.0 : alpha_bar_at(t - 1); }
  double posterior_var_at(int t) const { return posterior_var.at(index(t)); }

  std::size_t index(int t) const {
    require(t >= 1 && t <= steps, "step_out_of_range",
            "diffusion step " + std::to_string(t) + " outside [1, " + std::to_string(steps) + "]");
    return static_cast<std::size_t>(t - 1);
  }
};

inline NoiseSchedule make_schedule(int steps = 50, double beta_start = 1e-4, double beta_end = 0.05) {
  require(steps >= 1, "invalid_schedule", "schedule needs at least one step");
  require(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0, "invalid_schedule",
          "need 0 < beta_start <= beta_end < 1");
  NoiseSchedule s;
  s.steps = steps;
  const auto n = static_cast<std::size_t>(steps);
  s.beta.resize(n);
  s.alpha.resize(n);
  s.alpha_bar.resize(n);
  s.posterior_var.resize(n);
  double cumulative = 1.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double f = steps == 1 ? 0.0 : static_cast<double>(i) / static_cast<double>(steps - 1);
    s.beta[i] = i + 1 == n && steps > 1 ? beta_end : beta_start + (beta_end - beta_start) * f;
    s.alpha[i] = 1.0 - s.beta[i];
    const double prev = cumulative;
    cumulative *= s.alpha[i];
    s.alpha_bar[i] = cumulative;
    // sigma_t^2 = (1 - abar_{t-1}) / (1 - abar_t) * (1 - alpha_t)
    s.posterior_var[i] = (1.0 - prev) / (1.0 - cumulative) * s.beta[i];
  }
  return s;
}

struct NoisedSample {
  Tensor x_t;
  Tensor eps;
};

/// x_t = sqrt(abar_t) v0 + sqrt(1 - abar_t) eps for a given eps.
inline Tensor forward_noise_with(const Tensor& v0, const Tensor& eps, int t, const NoiseSchedule& schedule) {
  require(v0.shape() == eps.shape(), "shape_mismatch", "forward_noise: v0 and eps shapes differ");
  const double ab = schedule.alpha_bar_at(t);
  const double a = std::sqrt(ab), s = std::sqrt(1.0 - ab);
  Tensor x(v0.shape());
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = a * v0[i] + s * eps[i];
  return x;
}

inline NoisedSample forward_noise(const Tensor& v0, int t, const NoiseSchedule& schedule, Rng& rng) {
  schedule.index(t);
  Tensor eps = Tensor::random_normal(v0.shape(), rng);
  Tensor x = forward_noise_with(v0, eps, t, schedule);
  return {std::move(x), std::move(eps)};
}

/// v_hat = (x_t - sqrt(1 - abar_t) eps_hat) / sqrt(abar_t)
inline Tensor velocity_convert(const Tensor& x_t, const Tensor& eps_hat, int t, const NoiseSchedule& schedule) {
  require(x_t.shape() == eps_hat.shape(), "shape_mismatch", "velocity_convert: x_t and eps_hat shapes differ");
  const double ab = schedule.alpha_bar_at(t);
  const double a = std::sqrt(ab), s = std::sqrt(1.0 - ab);
  Tensor v(x_t.shape());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = (x_t[i] - s * eps_hat[i]) / a;
  return v;
}

/// Bundle handed to a noise predictor: eps_hat = eps_theta(x_t, t, (v0, z)).
struct DenoiserInput {
  Tensor x_t;               // (2, L)
  int t = 1;
  Tensor cond_signal;       // identity-removed normalized velocity v0, (2, L)
  UserEmbedding cond_embedding;
};

using Denoiser = std::function<Tensor(const DenoiserInput&)>;

struct DiffusionCondition {
  Tensor signal;            // (2, L)
  UserEmbedding embedding;
};

/// mu_theta = (x_t - (1 - alpha_t) / sqrt(1 - abar_t) eps_hat) / sqrt(alpha_t)
inline Tensor posterior_mean(const Tensor& x_t, const Tensor& eps_hat, int t, const NoiseSchedule& schedule) {
  require(x_t.shape() == eps_hat.shape(), "shape_mismatch", "denoiser output shape " +
                                                                 nn::shape_string(eps_hat.shape()) +
                                                                 " does not match x_t " +
                                                                 nn::shape_string(x_t.shape()));
  const double alpha = schedule.alpha_at(t);
  const double coef = (1.0 - alpha) / std::sqrt(1.0 - schedule.alpha_bar_at(t));
  const double inv = 1.0 / std::sqrt(alpha);
  Tensor mu(x_t.shape());
  for (std::size_t i = 0; i < mu.size(); ++i) mu[i] = inv * (x_t[i] - coef * eps_hat[i]);
  return mu;
}

/// One reverse transition x_t -> x_{t-1} = mu_theta + sigma_t eta.
/// The final step (t = 1) adds no noise.
inline Tensor reverse_step(const Tensor& x_t, int t, const Denoiser& denoiser, const DiffusionCondition& cond,
                           const NoiseSchedule& schedule, Rng& rng) {
  schedule.index(t);
  const Tensor eps_hat = denoiser(DenoiserInput{x_t, t, cond.signal, cond.embedding});
  Tensor x = posterior_mean(x_t, eps_hat, t, schedule);
  if (t > 1) {
    const double sigma = std::sqrt(schedule.posterior_var_at(t));
    for (auto& v : x.values()) v += sigma * rng.normal();
  }
  return x;
}

/// Full ancestral sampling from x_T ~ N(0, I).
inline Tensor sample(const Denoiser& denoiser, const DiffusionCondition& cond, const NoiseSchedule& schedule,
                     Rng& rng) {
  Tensor x = Tensor::random_normal(cond.signal.shape(), rng);
  for (int t = schedule.steps; t >= 1; --t) x = reverse_step(x, t, denoiser, cond, schedule, rng);
  return x;
}

enum class NoiseLossNorm { MSE, MAE };

struct LossComponents {
  double total = 0.0;
  double noise = 0.0;
  double id = 0.0;
};

/// L = L_noise + lambda * L_id with L_noise = mean ||eps - eps_hat||^2 (or
/// mean absolute error) and L_id = 1 - cos(phi(v_hat), phi(v)).
inline LossComponents loss_total(const Tensor& eps, const Tensor& eps_hat, const VelocitySequence& v_hat_denorm,
                                 const VelocitySequence& v_real, const Encoder& encoder, double lambda_id,
                                 NoiseLossNorm norm = NoiseLossNorm::MSE) {
  require(eps.shape() == eps_hat.shape(), "shape_mismatch", "loss_total: eps shapes differ");
  require(v_hat_denorm.size() == v_real.size(), "shape_mismatch", "loss_total: velocity lengths differ");
  LossComponents c;
  c.noise = norm == NoiseLossNorm::MSE ? nn::mse_loss(eps_hat, eps).value : nn::mae_loss(eps_hat, eps).value;
  c.id = 1.0 - cosine_similarity(encoder.encode(v_hat_denorm), encoder.encode(v_real));
  c.total = c.noise + lambda_id * c.id;
  return c;
}

// ---------------------------------------------------------------------------
// Conversions between velocity sequences and (2, L) tensors

inline Tensor to_tensor(const NormalizedVelocitySequence& v) {
  Tensor t({2, v.size()});
  std::copy(v.vx.begin(), v.vx.end(), t.data());
  std::copy(v.vy.begin(), v.vy.end(), t.data() + v.size());
  return t;
}

inline NormalizedVelocitySequence to_normalized(const Tensor& t, double rate_hz) {
  require(t.rank() == 2 && t.dim(0) == 2, "shape_mismatch", "expected a (2, L) tensor");
  const std::size_t n = t.dim(1);
  NormalizedVelocitySequence v;
  v.sample_rate_hz = rate_hz;
  v.vx.assign(t.data(), t.data() + n);
  v.vy.assign(t.data() + n, t.data() + 2 * n);
  return v;
}

/// Largest |value| passed to arcsin when denormalizing model outputs; model
/// predictions may leave [-1, 1], so they are clamped here and receive zero
/// gradient outside the band.
inline constexpr double kDenormClamp = 1.0 - 1e-3;

inline double denormalize_clamped(double n) {
  const double c = std::clamp(n, -kDenormClamp, kDenormClamp);
  return std::asin(c) * (180.0 / std::numbers::pi) / kRescale;
}

inline double denormalize_clamped_derivative(double n) {
  if (n <= -kDenormClamp || n >= kDenormClamp) return 0.0;
  return (180.0 / std::numbers::pi) / kRescale / std::sqrt(1.0 - n * n);
}

inline VelocitySequence denormalize_tensor(const Tensor& t, double rate_hz) {
  auto nv = to_normalized(t, rate_hz);
  VelocitySequence v{rate_hz, nv.vx, nv.vy};
  for (auto& s : v.vx) s = denormalize_clamped(s);
  for (auto& s : v.vy) s = denormalize_clamped(s);
  return v;
}

}  // namespace gazesyn::diffusion
