#pragma once

#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <numeric>
#include <ostream>
#include <string>
#include <vector>

#include "gazesyn/conditioning.hpp"
#include "gazesyn/diffusion.hpp"
#include "gazesyn/nn.hpp"

namespace gazesyn::diffusion {

using nn::LayerSpec;
using nn::Network;
using nn::Tape;

/// Which signal plays the role of the clean sample being noised.
/// Raw: the normalized velocity v (the model learns to add identity detail
/// on top of the identity-removed condition v0). IdentityRemoved: v0 itself.
enum class DiffusionTarget { Raw, IdentityRemoved };

inline const char* target_name(DiffusionTarget t) { return t == DiffusionTarget::Raw ? "raw" : "identity_removed"; }

inline DiffusionTarget parse_target(const std::string& s) {
  if (s == "raw") return DiffusionTarget::Raw;
  if (s == "identity_removed") return DiffusionTarget::IdentityRemoved;
  throw Error("invalid_config", "unknown diffusion target '" + s + "'");
}

inline NoiseLossNorm parse_loss_norm(const std::string& s) {
  if (s == "mse") return NoiseLossNorm::MSE;
  if (s == "mae") return NoiseLossNorm::MAE;
  throw Error("invalid_config", "unknown noise loss '" + s + "' (expected mse or mae)");
}

inline const char* loss_norm_name(NoiseLossNorm n) { return n == NoiseLossNorm::MSE ? "mse" : "mae"; }

struct DiffusionTrainConfig {
  int steps = 50;
  double beta_start = 1e-4;
  double beta_end = 0.05;
  double learning_rate = 2e-4;
  std::size_t batch_size = 32;
  std::size_t epochs = 40;
  double lambda_id = 0.1;
  std::size_t channels = 32;
  std::size_t window = 500;        // samples at the model rate
  double model_rate_hz = 100.0;
  std::uint64_t seed = 1;
  DiffusionTarget target = DiffusionTarget::Raw;
  NoiseLossNorm loss_norm = NoiseLossNorm::MSE;

  void validate() const {
    require(steps >= 1 && learning_rate > 0.0 && batch_size >= 1 && epochs >= 1 && channels >= 1 && window >= 8 &&
                model_rate_hz > 0.0,
            "invalid_config", "diffusion config values must be positive");
    require(std::isfinite(lambda_id) && lambda_id >= 0.0, "invalid_config", "lambda_id must be finite and >= 0");
  }
};

/// One training window: the clean velocity v, the identity-removed condition
/// v0 (both normalized, model rate) and the subject embedding z = phi(v).
struct DiffusionExample {
  Tensor v;   // (2, L)
  Tensor v0;  // (2, L)
  UserEmbedding z;
  std::string subject_id;
};

/// Conditioned residual denoiser.
///
/// The network predicts a residual r on top of the condition, v_hat = v0 + r,
/// and reports it as a noise estimate eps_hat = (x_t - sqrt(abar)(v0 + r)) /
/// sqrt(1 - abar). Inside:
///   u  = (x_t - sqrt(abar) v0) / sqrt(abar)     noisy residual
///   c  = mlp([z, time features])  -> FiLM scale/shift and a per-axis gain
///   h1 = lrelu(conv_in([c_in u, v0 * kCondScale]))
///   f  = h1 * (1 + gamma) + beta
///   h2 = f + lrelu(conv_mid(f))
///   r  = sigma_data * conv_out(h2) + sigmoid(g - log rho_t) * u
/// where rho_t = (1 - abar) / abar. The gain term is the Wiener shrinkage for a
/// white residual of variance exp(g), so the untrained model is already a
/// sensible denoiser and the conv path learns the structured part.
class ConditionedDenoiser {
 public:
  static constexpr std::size_t kTimeFeatures = 16;
  static constexpr double kSigmaData = 0.05;
  static constexpr double kCondScale = 5.0;
  static constexpr std::size_t kHidden = 64;

  ConditionedDenoiser() = default;

  ConditionedDenoiser(std::size_t channels, NoiseSchedule schedule, Rng& rng)
      : channels_(channels), schedule_(std::move(schedule)) {
    const std::size_t c = channels;
    const std::vector<LayerSpec> mlp{LayerSpec::dense(kEmbeddingDim + kTimeFeatures + 1, kHidden),
                                     LayerSpec::leaky_relu(), LayerSpec::dense(kHidden, 2 * c + 2)};
    const std::vector<LayerSpec> in{LayerSpec::conv1d(4, c, 5, 1, 2), LayerSpec::leaky_relu()};
    const std::vector<LayerSpec> mid{LayerSpec::conv1d(c, c, 5, 1, 2), LayerSpec::leaky_relu()};
    const std::vector<LayerSpec> out{LayerSpec::conv1d(c, 2, 5, 1, 2)};
    mlp_ = Network(mlp, rng);
    conv_in_ = Network(in, rng);
    conv_mid_ = Network(mid, rng);
    conv_out_ = Network(out, rng);
    // Start from pure shrinkage: the conv path contributes nothing until trained.
    for (auto* p : conv_out_.parameters()) p->fill(0.0);
    // Gain logit starts at the log variance of a kSigmaData residual.
    auto& last_bias = *mlp_.parameters().back();
    for (std::size_t a = 0; a < 2; ++a) last_bias[2 * c + a] = 2.0 * std::log(kSigmaData);
  }

  std::size_t channels() const { return channels_; }
  const NoiseSchedule& schedule() const { return schedule_; }

  std::vector<Network*> networks() { return {&mlp_, &conv_in_, &conv_mid_, &conv_out_}; }
  std::vector<const Network*> networks() const { return {&mlp_, &conv_in_, &conv_mid_, &conv_out_}; }

  /// Everything backward needs from one batched forward pass.
  struct Pass {
    std::size_t n = 0, len = 0;
    std::vector<int> t;
    Tensor u;        // (N, 2, L)
    Tensor h1;       // (N, C, L)
    Tensor cond;     // (N, 2C+2)
    Tensor gain;     // (N, 2) sigmoid outputs
    Tensor r;        // (N, 2, L)
    Tensor eps_hat;  // (N, 2, L)
    Tape mlp, in, mid, out;
  };

  std::vector<double> time_features(int t) const {
    std::vector<double> f(kTimeFeatures + 1);
    const double tau = static_cast<double>(t) / static_cast<double>(schedule_.steps);
    for (std::size_t k = 0; k < kTimeFeatures / 2; ++k) {
      const double w = std::numbers::pi * static_cast<double>(k + 1) * tau;
      f[2 * k] = std::sin(w);
      f[2 * k + 1] = std::cos(w);
    }
    f[kTimeFeatures] = std::log(rho(t)) / 10.0;
    return f;
  }

  double rho(int t) const {
    const double ab = schedule_.alpha_bar_at(t);
    return (1.0 - ab) / ab;
  }

  /// Batched forward. x_t and v0 are (N, 2, L), z holds N embeddings.
  Pass forward(const Tensor& x_t, const Tensor& v0, std::span<const UserEmbedding> z, std::span<const int> t,
               bool record) const {
    require(x_t.rank() == 3 && x_t.dim(1) == 2, "shape_mismatch",
            "denoiser expects (N, 2, L) input, got " + nn::shape_string(x_t.shape()));
    require(v0.shape() == x_t.shape(), "shape_mismatch", "condition signal shape differs from x_t");
    const std::size_t n = x_t.dim(0), len = x_t.dim(2), c = channels_;
    require(z.size() == n && t.size() == n, "shape_mismatch", "one embedding and one step per sample required");
    Pass p;
    p.n = n;
    p.len = len;
    p.t.assign(t.begin(), t.end());

    Tensor mlp_in({n, kEmbeddingDim + kTimeFeatures + 1});
    for (std::size_t i = 0; i < n; ++i) {
      require(z[i].values.size() == kEmbeddingDim, "invalid_embedding", "condition embedding must be 128-d");
      double* row = mlp_in.data() + i * mlp_in.dim(1);
      std::copy(z[i].values.begin(), z[i].values.end(), row);
      const auto tf = time_features(t[i]);
      std::copy(tf.begin(), tf.end(), row + kEmbeddingDim);
    }
    p.cond = mlp_.forward(mlp_in, nn::Mode::Train, record ? &p.mlp : nullptr);

    p.u = Tensor({n, 2, len});
    Tensor trunk_in({n, 4, len});
    for (std::size_t i = 0; i < n; ++i) {
      const double a = std::sqrt(schedule_.alpha_bar_at(t[i]));
      const double c_in = 1.0 / std::sqrt(kSigmaData * kSigmaData + rho(t[i]));
      for (std::size_t k = 0; k < 2 * len; ++k) {
        const std::size_t idx = i * 2 * len + k;
        p.u[idx] = (x_t[idx] - a * v0[idx]) / a;
        trunk_in[i * 4 * len + k] = c_in * p.u[idx];
        trunk_in[i * 4 * len + 2 * len + k] = kCondScale * v0[idx];
      }
    }
    p.h1 = conv_in_.forward(trunk_in, nn::Mode::Train, record ? &p.in : nullptr);
    Tensor f = p.h1;
    for (std::size_t i = 0; i < n; ++i) {
      const double* cr = p.cond.data() + i * (2 * c + 2);
      for (std::size_t ch = 0; ch < c; ++ch) {
        double* fr = f.data() + (i * c + ch) * len;
        const double scale = 1.0 + cr[ch], shift = cr[c + ch];
        for (std::size_t l = 0; l < len; ++l) fr[l] = fr[l] * scale + shift;
      }
    }
    Tensor h2 = conv_mid_.forward(f, nn::Mode::Train, record ? &p.mid : nullptr);
    h2 += f;
    const Tensor o = conv_out_.forward(h2, nn::Mode::Train, record ? &p.out : nullptr);

    p.gain = Tensor({n, 2});
    p.r = Tensor({n, 2, len});
    p.eps_hat = Tensor({n, 2, len});
    for (std::size_t i = 0; i < n; ++i) {
      const double ab = schedule_.alpha_bar_at(t[i]);
      const double a = std::sqrt(ab), s = std::sqrt(1.0 - ab);
      for (std::size_t axis = 0; axis < 2; ++axis) {
        const double g = nn::sigmoid(p.cond[i * (2 * c + 2) + 2 * c + axis] - std::log(rho(t[i])));
        p.gain[i * 2 + axis] = g;
        for (std::size_t l = 0; l < len; ++l) {
          const std::size_t idx = (i * 2 + axis) * len + l;
          p.r[idx] = kSigmaData * o[idx] + g * p.u[idx];
          p.eps_hat[idx] = a * (p.u[idx] - p.r[idx]) / s;
        }
      }
    }
    return p;
  }

  /// Gradients for the four networks, aligned with networks().
  struct Grads {
    std::vector<nn::Gradients> nets;
  };

  Grads zero_gradients() const {
    Grads g;
    for (const auto* net : networks()) g.nets.push_back(net->zero_gradients());
    return g;
  }

  /// Accumulates parameter gradients given dL/dr (N, 2, L).
  void backward(const Pass& p, const Tensor& d_r, Grads& grads) const {
    const std::size_t n = p.n, len = p.len, c = channels_;
    Tensor d_cond({n, 2 * c + 2});
    Tensor d_o({n, 2, len});
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t axis = 0; axis < 2; ++axis) {
        const double g = p.gain[i * 2 + axis];
        double acc = 0.0;
        for (std::size_t l = 0; l < len; ++l) {
          const std::size_t idx = (i * 2 + axis) * len + l;
          d_o[idx] = kSigmaData * d_r[idx];
          acc += d_r[idx] * p.u[idx];
        }
        d_cond[i * (2 * c + 2) + 2 * c + axis] = acc * g * (1.0 - g);
      }
    }
    Tensor d_f = conv_out_.backward(p.out, d_o, grads.nets[3]);
    d_f += conv_mid_.backward(p.mid, d_f, grads.nets[2]);
    Tensor d_h1({n, c, len});
    for (std::size_t i = 0; i < n; ++i) {
      double* dc = d_cond.data() + i * (2 * c + 2);
      const double* cr = p.cond.data() + i * (2 * c + 2);
      for (std::size_t ch = 0; ch < c; ++ch) {
        const std::size_t base = (i * c + ch) * len;
        double dg = 0.0, db = 0.0;
        for (std::size_t l = 0; l < len; ++l) {
          dg += d_f[base + l] * p.h1[base + l];
          db += d_f[base + l];
          d_h1[base + l] = d_f[base + l] * (1.0 + cr[ch]);
        }
        dc[ch] = dg;
        dc[c + ch] = db;
      }
    }
    conv_in_.backward(p.in, d_h1, grads.nets[1]);
    mlp_.backward(p.mlp, d_cond, grads.nets[0]);
  }

  /// Single-window noise prediction, matching the Denoiser contract.
  Tensor predict(const DenoiserInput& in) const {
    require(in.x_t.rank() == 2 && in.x_t.dim(0) == 2, "shape_mismatch", "expected (2, L) x_t");
    const std::size_t len = in.x_t.dim(1);
    const int t = in.t;
    auto p = forward(in.x_t.reshaped({1, 2, len}), in.cond_signal.reshaped({1, 2, len}),
                     std::span<const UserEmbedding>(&in.cond_embedding, 1), std::span<const int>(&t, 1), false);
    return p.eps_hat.reshaped({2, len});
  }

  Denoiser as_denoiser() const {
    return [this](const DenoiserInput& in) { return predict(in); };
  }

 private:
  std::size_t channels_ = 0;
  NoiseSchedule schedule_;
  Network mlp_, conv_in_, conv_mid_, conv_out_;
};

struct EpochLoss {
  std::size_t epoch = 0;
  double total = 0.0;
  double noise = 0.0;
  double id = 0.0;
};

struct DiffusionModel {
  DiffusionTrainConfig config;
  ConditionedDenoiser denoiser;
  std::vector<EpochLoss> trace;
};

/// dL_id/dv_hat (normalized units) for one window, and the L_id value.
inline double identity_loss_gradient(const Tensor& v_hat, std::size_t sample, std::size_t len, double rate,
                                     const UserEmbedding& z, const Encoder& encoder, double scale, Tensor& d_v) {
  Tensor one({2, len});
  std::copy(v_hat.data() + sample * 2 * len, v_hat.data() + (sample + 1) * 2 * len, one.data());
  const auto denorm = denormalize_tensor(one, rate);
  const auto e = encoder.encode(denorm);
  const double cos = cosine_similarity(e, z);
  if (scale != 0.0) {
    auto dcos = cosine_gradient(e.values, z.values);
    for (auto& g : dcos) g *= -scale;
    const auto dv = encoder.input_gradient(denorm, dcos);
    for (std::size_t l = 0; l < len; ++l) {
      d_v[sample * 2 * len + l] += dv.vx[l] * denormalize_clamped_derivative(one[l]);
      d_v[sample * 2 * len + len + l] += dv.vy[l] * denormalize_clamped_derivative(one[len + l]);
    }
  }
  return 1.0 - cos;
}

/// Loss components of one batch and (optionally) their parameter gradients.
inline LossComponents diffusion_batch_loss(const ConditionedDenoiser& model, const std::vector<const DiffusionExample*>& batch,
                                           const std::vector<int>& t, const Tensor& eps, const Encoder& encoder,
                                           const DiffusionTrainConfig& config,
                                           ConditionedDenoiser::Grads* grads) {
  const std::size_t n = batch.size(), len = batch.front()->v.dim(1);
  const auto& sched = model.schedule();
  Tensor x0({n, 2, len}), v0({n, 2, len});
  std::vector<UserEmbedding> z(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& ex = *batch[i];
    require(ex.v.shape() == nn::Shape({2, len}) && ex.v0.shape() == nn::Shape({2, len}), "shape_mismatch",
            "all training windows must have the same length");
    const Tensor& clean = config.target == DiffusionTarget::Raw ? ex.v : ex.v0;
    std::copy(clean.data(), clean.data() + 2 * len, x0.data() + i * 2 * len);
    std::copy(ex.v0.data(), ex.v0.data() + 2 * len, v0.data() + i * 2 * len);
    z[i] = ex.z;
  }
  Tensor x_t({n, 2, len});
  for (std::size_t i = 0; i < n; ++i) {
    const double ab = sched.alpha_bar_at(t[i]);
    const double a = std::sqrt(ab), s = std::sqrt(1.0 - ab);
    for (std::size_t k = 0; k < 2 * len; ++k) {
      const std::size_t idx = i * 2 * len + k;
      x_t[idx] = a * x0[idx] + s * eps[idx];
    }
  }
  const auto pass = model.forward(x_t, v0, z, t, grads != nullptr);
  const auto noise = config.loss_norm == NoiseLossNorm::MSE ? nn::mse_loss(pass.eps_hat, eps)
                                                             : nn::mae_loss(pass.eps_hat, eps);
  LossComponents c;
  c.noise = noise.value;

  Tensor v_hat = v0;  // velocity_convert of the prediction equals v0 + r
  v_hat += pass.r;
  Tensor d_r({n, 2, len});
  const double id_scale = grads ? config.lambda_id / static_cast<double>(n) : 0.0;
  double id_sum = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    id_sum += identity_loss_gradient(v_hat, i, len, config.model_rate_hz, z[i], encoder, id_scale, d_r);
  c.id = id_sum / static_cast<double>(n);
  c.total = c.noise + config.lambda_id * c.id;
  if (!std::isfinite(c.total)) throw Error("non_finite_loss", "diffusion loss is not finite");

  if (grads) {
    for (std::size_t i = 0; i < n; ++i) {
      const double ab = sched.alpha_bar_at(t[i]);
      const double k = -std::sqrt(ab) / std::sqrt(1.0 - ab);
      for (std::size_t q = 0; q < 2 * len; ++q) d_r[i * 2 * len + q] += k * noise.grad[i * 2 * len + q];
    }
    model.backward(pass, d_r, *grads);
  }
  return c;
}

/// Minibatch Adam training. Each step draws t uniformly from [1, T] per
/// window, noises the clean target, and descends L_noise + lambda * L_id.
inline DiffusionModel train_diffusion(const std::vector<DiffusionExample>& dataset, const Encoder& encoder,
                                      const DiffusionTrainConfig& config,
                                      const std::function<void(const EpochLoss&)>& on_epoch = {}) {
  config.validate();
  require(!dataset.empty(), "empty_dataset", "diffusion training needs at least one window");
  const std::size_t len = dataset.front().v.dim(1);
  for (const auto& ex : dataset)
    require(ex.v.shape() == nn::Shape({2, len}) && ex.v0.shape() == ex.v.shape(), "shape_mismatch",
            "all training windows must have shape (2, " + std::to_string(len) + ")");

  Rng rng(config.seed);
  Rng init_rng = rng.split();
  DiffusionModel model{config, ConditionedDenoiser(config.channels,
                                                   make_schedule(config.steps, config.beta_start, config.beta_end),
                                                   init_rng),
                       {}};
  std::vector<nn::Adam> optimizers(4, nn::Adam(nn::AdamOptions{.learning_rate = config.learning_rate}));
  std::vector<std::size_t> order(dataset.size());

  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), rng.engine());
    EpochLoss e{epoch, 0.0, 0.0, 0.0};
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t stop = std::min(order.size(), start + config.batch_size);
      std::vector<const DiffusionExample*> batch;
      std::vector<int> t;
      for (std::size_t k = start; k < stop; ++k) {
        batch.push_back(&dataset[order[k]]);
        t.push_back(static_cast<int>(rng.integer(1, config.steps)));
      }
      const Tensor eps = Tensor::random_normal({batch.size(), 2, len}, rng);
      auto grads = model.denoiser.zero_gradients();
      const auto c = diffusion_batch_loss(model.denoiser, batch, t, eps, encoder, config, &grads);
      auto nets = model.denoiser.networks();
      for (std::size_t k = 0; k < nets.size(); ++k) optimizers[k].step(*nets[k], grads.nets[k]);
      e.total += c.total;
      e.noise += c.noise;
      e.id += c.id;
      ++batches;
    }
    const double nb = static_cast<double>(batches);
    e.total /= nb;
    e.noise /= nb;
    e.id /= nb;
    model.trace.push_back(e);
    if (on_epoch) on_epoch(e);
  }
  return model;
}

inline void write_loss_trace(std::ostream& out, const std::vector<EpochLoss>& trace) {
  out << "epoch,L,L_noise,L_id\n";
  for (const auto& e : trace)
    out << e.epoch << ',' << csv::format_double(e.total) << ',' << csv::format_double(e.noise) << ','
        << csv::format_double(e.id) << '\n';
}

/// Draws one synthetic window for condition (v0, z); returns normalized v_hat.
inline Tensor synthesize_window(const ConditionedDenoiser& model, const Tensor& v0, const UserEmbedding& z, Rng& rng) {
  return sample(model.as_denoiser(), DiffusionCondition{v0, z}, model.schedule(), rng);
}

// ---------------------------------------------------------------------------
// Persistence: <dir>/manifest.txt (key=value) and <dir>/denoiser.gfw

inline void save_diffusion_model(const std::filesystem::path& dir, const DiffusionModel& model) {
  std::filesystem::create_directories(dir);
  const auto& c = model.config;
  std::ofstream m(dir / "manifest.txt");
  require(static_cast<bool>(m), "io_error", "cannot write " + (dir / "manifest.txt").string());
  m << "kind=diffusion\n"
    << "steps=" << c.steps << "\n"
    << "beta_start=" << csv::format_double(c.beta_start) << "\n"
    << "beta_end=" << csv::format_double(c.beta_end) << "\n"
    << "channels=" << c.channels << "\n"
    << "window=" << c.window << "\n"
    << "model_rate_hz=" << csv::format_double(c.model_rate_hz) << "\n"
    << "lambda_id=" << csv::format_double(c.lambda_id) << "\n"
    << "target=" << target_name(c.target) << "\n"
    << "loss=" << loss_norm_name(c.loss_norm) << "\n"
    << "seed=" << c.seed << "\n";
  const auto nets = model.denoiser.networks();
  nn::save_weights((dir / "denoiser.gfw").string(), nets);
  std::ofstream trace(dir / "loss_trace.csv");
  write_loss_trace(trace, model.trace);
}

inline std::map<std::string, std::string> read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), "io_error", "cannot open " + path.string());
  std::map<std::string, std::string> kv;
  std::string line;
  while (std::getline(in, line)) {
    const auto s = csv::trim(line);
    if (s.empty() || s.front() == '#') continue;
    const auto eq = s.find('=');
    require(eq != std::string_view::npos, "parse_error", "manifest line without '=': " + std::string(s));
    kv[std::string(csv::trim(s.substr(0, eq)))] = std::string(csv::trim(s.substr(eq + 1)));
  }
  return kv;
}

inline const std::string& manifest_value(const std::map<std::string, std::string>& kv, const std::string& key) {
  const auto it = kv.find(key);
  require(it != kv.end(), "missing_key", "model manifest lacks '" + key + "'");
  return it->second;
}

inline DiffusionModel load_diffusion_model(const std::filesystem::path& dir) {
  const auto kv = read_manifest(dir / "manifest.txt");
  require(manifest_value(kv, "kind") == "diffusion", "wrong_model", dir.string() + " is not a diffusion model");
  DiffusionTrainConfig c;
  c.steps = std::stoi(manifest_value(kv, "steps"));
  c.beta_start = std::stod(manifest_value(kv, "beta_start"));
  c.beta_end = std::stod(manifest_value(kv, "beta_end"));
  c.channels = std::stoul(manifest_value(kv, "channels"));
  c.window = std::stoul(manifest_value(kv, "window"));
  c.model_rate_hz = std::stod(manifest_value(kv, "model_rate_hz"));
  c.lambda_id = std::stod(manifest_value(kv, "lambda_id"));
  c.target = parse_target(manifest_value(kv, "target"));
  c.loss_norm = parse_loss_norm(manifest_value(kv, "loss"));
  c.seed = std::stoull(manifest_value(kv, "seed"));
  Rng rng(0);
  DiffusionModel model{c, ConditionedDenoiser(c.channels, make_schedule(c.steps, c.beta_start, c.beta_end), rng), {}};
  auto nets = model.denoiser.networks();
  nn::load_weights((dir / "denoiser.gfw").string(), nets);
  return model;
}

}  // namespace gazesyn::diffusion
