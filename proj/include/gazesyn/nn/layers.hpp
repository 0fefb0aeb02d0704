#pragma once

#include <cmath>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "gazesyn/nn/gemm.hpp"
#include "gazesyn/nn/tensor.hpp"

namespace gazesyn::nn {

/// Numeric ids double as the kind tag in the weight file; do not renumber.
enum class LayerKind : std::uint32_t {
  Dense = 1,
  Conv1d = 2,
  ConvTranspose1d = 3,
  BatchNorm = 4,
  LeakyReLU = 5,
  Sigmoid = 6,
  Reshape = 7,
  Flatten = 8,
};

inline const char* layer_kind_name(LayerKind kind) {
  switch (kind) {
    case LayerKind::Dense: return "Dense";
    case LayerKind::Conv1d: return "Conv1d";
    case LayerKind::ConvTranspose1d: return "ConvTranspose1d";
    case LayerKind::BatchNorm: return "BatchNorm";
    case LayerKind::LeakyReLU: return "LeakyReLU";
    case LayerKind::Sigmoid: return "Sigmoid";
    case LayerKind::Reshape: return "Reshape";
    case LayerKind::Flatten: return "Flatten";
  }
  return "Unknown";
}

enum class Mode { Train, Eval };

/// Hyperparameters of one layer. Fields not used by a kind are ignored:
/// Dense uses in/out; Conv1d and ConvTranspose1d use in/out as channel counts
/// plus kernel/stride/padding; BatchNorm uses in as the feature/channel count;
/// Reshape uses target as the per-sample shape.
struct LayerSpec {
  LayerKind kind = LayerKind::Dense;
  std::size_t in = 0;
  std::size_t out = 0;
  std::size_t kernel = 1;
  std::size_t stride = 1;
  std::size_t padding = 0;
  double negative_slope = 0.2;
  double epsilon = 1e-5;
  double momentum = 0.1;
  bool bypass = false;  // BatchNorm only: behave as identity
  Shape target;

  static LayerSpec dense(std::size_t in, std::size_t out) {
    LayerSpec s;
    s.in = in;
    s.out = out;
    return s;
  }
  static LayerSpec conv1d(std::size_t in, std::size_t out, std::size_t kernel,
                          std::size_t stride = 1, std::size_t padding = 0) {
    LayerSpec s = dense(in, out);
    s.kind = LayerKind::Conv1d;
    s.kernel = kernel;
    s.stride = stride;
    s.padding = padding;
    return s;
  }
  static LayerSpec conv_transpose1d(std::size_t in, std::size_t out, std::size_t kernel,
                                    std::size_t stride = 1, std::size_t padding = 0) {
    LayerSpec s = conv1d(in, out, kernel, stride, padding);
    s.kind = LayerKind::ConvTranspose1d;
    return s;
  }
  static LayerSpec batch_norm(std::size_t features, bool bypass = false) {
    LayerSpec s;
    s.kind = LayerKind::BatchNorm;
    s.in = features;
    s.bypass = bypass;
    return s;
  }
  static LayerSpec leaky_relu(double slope = 0.2) {
    LayerSpec s;
    s.kind = LayerKind::LeakyReLU;
    s.negative_slope = slope;
    return s;
  }
  static LayerSpec sigmoid() {
    LayerSpec s;
    s.kind = LayerKind::Sigmoid;
    return s;
  }
  static LayerSpec reshape(Shape target) {
    LayerSpec s;
    s.kind = LayerKind::Reshape;
    s.target = std::move(target);
    return s;
  }
  static LayerSpec flatten() {
    LayerSpec s;
    s.kind = LayerKind::Flatten;
    return s;
  }
};

/// Per-layer activations recorded by a forward pass for use by backward.
struct LayerCache {
  bool filled = false;
  Tensor input;
  Tensor aux;                  // BatchNorm: normalized input
  std::vector<double> mean;    // BatchNorm: batch statistics
  std::vector<double> var;
  std::vector<double> inv_std;
  bool aux_train = false;      // BatchNorm: statistics came from the batch
};

class Layer {
 public:
  explicit Layer(LayerSpec spec) : spec_(std::move(spec)) {}
  virtual ~Layer() = default;

  LayerKind kind() const { return spec_.kind; }
  const LayerSpec& spec() const { return spec_; }

  virtual Tensor forward(const Tensor& x, Mode mode, LayerCache* cache) const = 0;

  /// Returns dL/dinput and accumulates dL/dparam into `param_grads`
  /// (aligned with params()).
  virtual Tensor backward(const Tensor& grad_out, const LayerCache& cache,
                          std::span<Tensor> param_grads) const = 0;

  /// Fold batch statistics from a training-mode forward into running state.
  virtual void commit(const LayerCache&) {}

  virtual std::unique_ptr<Layer> clone() const = 0;

  std::vector<Tensor>& params() { return params_; }
  const std::vector<Tensor>& params() const { return params_; }
  /// Non-trainable persisted state (BatchNorm running statistics).
  std::vector<Tensor>& buffers() { return buffers_; }
  const std::vector<Tensor>& buffers() const { return buffers_; }

 protected:
  [[noreturn]] void fail(const std::string& what) const {
    throw Error("shape_mismatch", std::string(layer_kind_name(kind())) + ": " + what);
  }

  LayerSpec spec_;
  std::vector<Tensor> params_;
  std::vector<Tensor> buffers_;
};

inline double glorot_limit(std::size_t fan_in, std::size_t fan_out) {
  return std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
}

class Dense final : public Layer {
 public:
  Dense(LayerSpec spec, Rng& rng) : Layer(std::move(spec)) {
    const auto in = spec_.in, out = spec_.out;
    if (in == 0 || out == 0) fail("units must be positive");
    params_.push_back(Tensor::random_uniform({out, in}, rng, glorot_limit(in, out)));
    params_.push_back(Tensor({out}));
  }

  Tensor forward(const Tensor& x, Mode, LayerCache* cache) const override {
    if (x.rank() != 2 || x.dim(1) != spec_.in)
      fail("expected input (N," + std::to_string(spec_.in) + "), got " + shape_string(x.shape()));
    const std::size_t n = x.dim(0), in = spec_.in, out = spec_.out;
    const auto& w = params_[0];
    const auto& b = params_[1];
    Tensor y({n, out});
    for (std::size_t i = 0; i < n; ++i) {
      const double* xi = x.data() + i * in;
      for (std::size_t o = 0; o < out; ++o) {
        const double* wo = w.data() + o * in;
        double acc = b[o];
        for (std::size_t k = 0; k < in; ++k) acc += wo[k] * xi[k];
        y.at(i, o) = acc;
      }
    }
    if (cache) {
      cache->input = x;
      cache->filled = true;
    }
    return y;
  }

  Tensor backward(const Tensor& g, const LayerCache& cache, std::span<Tensor> grads) const override {
    const auto& x = cache.input;
    const std::size_t n = x.dim(0), in = spec_.in, out = spec_.out;
    const auto& w = params_[0];
    Tensor dx({n, in});
    auto& dw = grads[0];
    auto& db = grads[1];
    for (std::size_t i = 0; i < n; ++i) {
      const double* xi = x.data() + i * in;
      double* dxi = dx.data() + i * in;
      for (std::size_t o = 0; o < out; ++o) {
        const double go = g.at(i, o);
        if (go == 0.0) continue;
        db[o] += go;
        double* dwo = dw.data() + o * in;
        const double* wo = w.data() + o * in;
        for (std::size_t k = 0; k < in; ++k) {
          dwo[k] += go * xi[k];
          dxi[k] += go * wo[k];
        }
      }
    }
    return dx;
  }

  std::unique_ptr<Layer> clone() const override { return std::make_unique<Dense>(*this); }
};

/// y[n,o,l] = b[o] + sum_{c,k} W[o,c,k] * x[n,c,l*stride + k - padding]
class Conv1d final : public Layer {
 public:
  Conv1d(LayerSpec spec, Rng& rng) : Layer(std::move(spec)) {
    const auto ci = spec_.in, co = spec_.out, k = spec_.kernel;
    if (ci == 0 || co == 0 || k == 0 || spec_.stride == 0) fail("hyperparameters must be positive");
    params_.push_back(Tensor::random_uniform({co, ci, k}, rng, glorot_limit(ci * k, co * k)));
    params_.push_back(Tensor({co}));
  }

  std::size_t output_length(std::size_t len) const {
    const std::size_t padded = len + 2 * spec_.padding;
    if (padded < spec_.kernel) return 0;
    return (padded - spec_.kernel) / spec_.stride + 1;
  }

  Tensor forward(const Tensor& x, Mode, LayerCache* cache) const override {
    if (x.rank() != 3 || x.dim(1) != spec_.in)
      fail("expected input (N," + std::to_string(spec_.in) + ",L), got " + shape_string(x.shape()));
    const std::size_t n = x.dim(0), ci = spec_.in, co = spec_.out, len = x.dim(2), k = spec_.kernel;
    const std::size_t out_len = output_length(len);
    if (out_len == 0) fail("input length " + std::to_string(len) + " shorter than kernel");
    const auto& w = params_[0];
    const auto& b = params_[1];
    Tensor y({n, co, out_len});
    std::vector<double> col(ci * k * out_len);
    for (std::size_t i = 0; i < n; ++i) {
      double* yi = y.data() + i * co * out_len;
      for (std::size_t o = 0; o < co; ++o) std::fill_n(yi + o * out_len, out_len, b[o]);
      gemm::im2col(x.data() + i * ci * len, ci, len, k, spec_.stride, spec_.padding, out_len, col.data());
      gemm::nn(co, out_len, ci * k, w.data(), col.data(), yi);
    }
    if (cache) {
      cache->input = x;
      cache->filled = true;
    }
    return y;
  }

  Tensor backward(const Tensor& g, const LayerCache& cache, std::span<Tensor> grads) const override {
    const auto& x = cache.input;
    const std::size_t n = x.dim(0), ci = spec_.in, co = spec_.out, len = x.dim(2), k = spec_.kernel;
    const std::size_t out_len = g.dim(2);
    const auto& w = params_[0];
    auto& dw = grads[0];
    auto& db = grads[1];
    Tensor dx({n, ci, len});
    std::vector<double> col(ci * k * out_len), dcol(ci * k * out_len), scratch;
    for (std::size_t i = 0; i < n; ++i) {
      const double* gi = g.data() + i * co * out_len;
      for (std::size_t o = 0; o < co; ++o)
        for (std::size_t l = 0; l < out_len; ++l) db[o] += gi[o * out_len + l];
      gemm::im2col(x.data() + i * ci * len, ci, len, k, spec_.stride, spec_.padding, out_len, col.data());
      gemm::nt(co, ci * k, out_len, gi, col.data(), dw.data(), scratch);
      std::fill(dcol.begin(), dcol.end(), 0.0);
      gemm::tn(ci * k, out_len, co, w.data(), gi, dcol.data(), scratch);
      gemm::col2im(dcol.data(), ci, len, k, spec_.stride, spec_.padding, out_len, dx.data() + i * ci * len);
    }
    return dx;
  }

  std::unique_ptr<Layer> clone() const override { return std::make_unique<Conv1d>(*this); }
};

/// Adjoint of Conv1d: x[n,c,i] scatters W[c,o,k] into y[n,o,i*stride + k - padding].
/// Output length is (L - 1) * stride + kernel - 2 * padding.
class ConvTranspose1d final : public Layer {
 public:
  ConvTranspose1d(LayerSpec spec, Rng& rng) : Layer(std::move(spec)) {
    const auto ci = spec_.in, co = spec_.out, k = spec_.kernel;
    if (ci == 0 || co == 0 || k == 0 || spec_.stride == 0) fail("hyperparameters must be positive");
    params_.push_back(Tensor::random_uniform({ci, co, k}, rng, glorot_limit(ci * k, co * k)));
    params_.push_back(Tensor({co}));
  }

  std::size_t output_length(std::size_t len) const {
    const std::size_t full = (len - 1) * spec_.stride + spec_.kernel;
    return full > 2 * spec_.padding ? full - 2 * spec_.padding : 0;
  }

  Tensor forward(const Tensor& x, Mode, LayerCache* cache) const override {
    if (x.rank() != 3 || x.dim(1) != spec_.in || x.dim(2) == 0)
      fail("expected input (N," + std::to_string(spec_.in) + ",L), got " + shape_string(x.shape()));
    const std::size_t n = x.dim(0), ci = spec_.in, co = spec_.out, len = x.dim(2), k = spec_.kernel;
    const std::size_t out_len = output_length(len);
    if (out_len == 0) fail("padding consumes the whole output");
    const auto& w = params_[0];
    const auto& b = params_[1];
    Tensor y({n, co, out_len});
    std::vector<double> col(co * k * len), scratch;
    for (std::size_t i = 0; i < n; ++i) {
      double* yi = y.data() + i * co * out_len;
      for (std::size_t o = 0; o < co; ++o) std::fill_n(yi + o * out_len, out_len, b[o]);
      std::fill(col.begin(), col.end(), 0.0);
      gemm::tn(co * k, len, ci, w.data(), x.data() + i * ci * len, col.data(), scratch);
      gemm::col2im(col.data(), co, out_len, k, spec_.stride, spec_.padding, len, yi);
    }
    if (cache) {
      cache->input = x;
      cache->filled = true;
    }
    return y;
  }

  Tensor backward(const Tensor& g, const LayerCache& cache, std::span<Tensor> grads) const override {
    const auto& x = cache.input;
    const std::size_t n = x.dim(0), ci = spec_.in, co = spec_.out, len = x.dim(2), k = spec_.kernel;
    const std::size_t out_len = g.dim(2);
    const auto& w = params_[0];
    auto& dw = grads[0];
    auto& db = grads[1];
    Tensor dx({n, ci, len});
    std::vector<double> gcol(co * k * len), scratch;
    for (std::size_t i = 0; i < n; ++i) {
      const double* gi = g.data() + i * co * out_len;
      for (std::size_t o = 0; o < co; ++o)
        for (std::size_t j = 0; j < out_len; ++j) db[o] += gi[o * out_len + j];
      gemm::im2col(gi, co, out_len, k, spec_.stride, spec_.padding, len, gcol.data());
      gemm::nn(ci, len, co * k, w.data(), gcol.data(), dx.data() + i * ci * len);
      gemm::nt(ci, co * k, len, x.data() + i * ci * len, gcol.data(), dw.data(), scratch);
    }
    return dx;
  }

  std::unique_ptr<Layer> clone() const override { return std::make_unique<ConvTranspose1d>(*this); }
};

/// Normalizes axis 1 of an (N,F) or (N,C,L) input. Training mode uses batch
/// statistics; evaluation uses running estimates. With `bypass` set the layer
/// is the identity (small batches make batch statistics degenerate).
class BatchNorm final : public Layer {
 public:
  explicit BatchNorm(LayerSpec spec) : Layer(std::move(spec)) {
    if (spec_.in == 0) fail("feature count must be positive");
    params_.push_back(Tensor({spec_.in}, 1.0));
    params_.push_back(Tensor({spec_.in}, 0.0));
    buffers_.push_back(Tensor({spec_.in}, 0.0));
    buffers_.push_back(Tensor({spec_.in}, 1.0));
  }

  Tensor forward(const Tensor& x, Mode mode, LayerCache* cache) const override {
    if ((x.rank() != 2 && x.rank() != 3) || x.dim(1) != spec_.in)
      fail("expected input (N," + std::to_string(spec_.in) + "[,L]), got " + shape_string(x.shape()));
    if (cache) {
      cache->input = x;
      cache->filled = true;
    }
    if (spec_.bypass) return x;
    const std::size_t n = x.dim(0), f = spec_.in, len = x.rank() == 3 ? x.dim(2) : 1;
    const auto& gamma = params_[0];
    const auto& beta = params_[1];
    std::vector<double> mean(f), var(f);
    if (mode == Mode::Train) {
      const double m = static_cast<double>(n * len);
      if (n * len < 2) fail("training-mode batch statistics need at least 2 values per feature");
      for (std::size_t c = 0; c < f; ++c) {
        double s = 0.0;
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t l = 0; l < len; ++l) s += x[(i * f + c) * len + l];
        mean[c] = s / m;
        double ss = 0.0;
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t l = 0; l < len; ++l) {
            const double d = x[(i * f + c) * len + l] - mean[c];
            ss += d * d;
          }
        var[c] = ss / m;
      }
    } else {
      mean = buffers_[0].storage();
      var = buffers_[1].storage();
    }
    std::vector<double> inv_std(f);
    for (std::size_t c = 0; c < f; ++c) inv_std[c] = 1.0 / std::sqrt(var[c] + spec_.epsilon);
    Tensor xhat(x.shape());
    Tensor y(x.shape());
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t c = 0; c < f; ++c)
        for (std::size_t l = 0; l < len; ++l) {
          const std::size_t idx = (i * f + c) * len + l;
          xhat[idx] = (x[idx] - mean[c]) * inv_std[c];
          y[idx] = gamma[c] * xhat[idx] + beta[c];
        }
    if (cache) {
      cache->aux = std::move(xhat);
      cache->mean = std::move(mean);
      cache->var = std::move(var);
      cache->inv_std = std::move(inv_std);
      cache->aux_train = mode == Mode::Train;
    }
    return y;
  }

  Tensor backward(const Tensor& g, const LayerCache& cache, std::span<Tensor> grads) const override {
    if (spec_.bypass) return g;
    const auto& x = cache.input;
    const std::size_t n = x.dim(0), f = spec_.in, len = x.rank() == 3 ? x.dim(2) : 1;
    const auto& gamma = params_[0];
    const auto& xhat = cache.aux;
    auto& dgamma = grads[0];
    auto& dbeta = grads[1];
    Tensor dx(x.shape());
    const double m = static_cast<double>(n * len);
    for (std::size_t c = 0; c < f; ++c) {
      double sum_g = 0.0, sum_gx = 0.0;
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t l = 0; l < len; ++l) {
          const std::size_t idx = (i * f + c) * len + l;
          sum_g += g[idx];
          sum_gx += g[idx] * xhat[idx];
        }
      dgamma[c] += sum_gx;
      dbeta[c] += sum_g;
      const double scale = gamma[c] * cache.inv_std[c];
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t l = 0; l < len; ++l) {
          const std::size_t idx = (i * f + c) * len + l;
          if (cache.aux_train)
            dx[idx] = scale * (g[idx] - sum_g / m - xhat[idx] * sum_gx / m);
          else
            dx[idx] = scale * g[idx];
        }
    }
    return dx;
  }

  void commit(const LayerCache& cache) override {
    if (spec_.bypass || !cache.aux_train) return;
    const double mom = spec_.momentum;
    const auto& x = cache.input;
    const double m = static_cast<double>(x.size() / spec_.in);
    const double unbias = m > 1 ? m / (m - 1) : 1.0;
    for (std::size_t c = 0; c < spec_.in; ++c) {
      buffers_[0][c] = (1 - mom) * buffers_[0][c] + mom * cache.mean[c];
      buffers_[1][c] = (1 - mom) * buffers_[1][c] + mom * cache.var[c] * unbias;
    }
  }

  std::unique_ptr<Layer> clone() const override { return std::make_unique<BatchNorm>(*this); }
};

class LeakyReLU final : public Layer {
 public:
  explicit LeakyReLU(LayerSpec spec) : Layer(std::move(spec)) {
    if (!(spec_.negative_slope > 0.0 && spec_.negative_slope < 1.0))
      fail("negative slope must lie in (0,1)");
  }

  Tensor forward(const Tensor& x, Mode, LayerCache* cache) const override {
    Tensor y = x;
    for (auto& v : y.values()) v = v > 0.0 ? v : spec_.negative_slope * v;
    if (cache) {
      cache->input = x;
      cache->filled = true;
    }
    return y;
  }

  Tensor backward(const Tensor& g, const LayerCache& cache, std::span<Tensor>) const override {
    Tensor dx = g;
    for (std::size_t i = 0; i < dx.size(); ++i)
      if (cache.input[i] <= 0.0) dx[i] *= spec_.negative_slope;
    return dx;
  }

  std::unique_ptr<Layer> clone() const override { return std::make_unique<LeakyReLU>(*this); }
};

inline double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

class Sigmoid final : public Layer {
 public:
  explicit Sigmoid(LayerSpec spec) : Layer(std::move(spec)) {}

  Tensor forward(const Tensor& x, Mode, LayerCache* cache) const override {
    Tensor y = x;
    for (auto& v : y.values()) v = sigmoid(v);
    if (cache) {
      cache->input = x;
      cache->filled = true;
    }
    return y;
  }

  Tensor backward(const Tensor& g, const LayerCache& cache, std::span<Tensor>) const override {
    Tensor dx = g;
    for (std::size_t i = 0; i < dx.size(); ++i) {
      const double s = sigmoid(cache.input[i]);
      dx[i] *= s * (1.0 - s);
    }
    return dx;
  }

  std::unique_ptr<Layer> clone() const override { return std::make_unique<Sigmoid>(*this); }
};

/// (N, ...) -> (N, target...)
class Reshape final : public Layer {
 public:
  explicit Reshape(LayerSpec spec) : Layer(std::move(spec)) {
    if (spec_.target.empty() || shape_size(spec_.target) == 0) fail("target shape must be non-empty");
  }

  Tensor forward(const Tensor& x, Mode, LayerCache* cache) const override {
    if (x.rank() < 1 || x.size() != x.dim(0) * shape_size(spec_.target))
      fail("cannot reshape " + shape_string(x.shape()) + " to (N," + shape_string(spec_.target).substr(1));
    Shape shape{x.dim(0)};
    shape.insert(shape.end(), spec_.target.begin(), spec_.target.end());
    if (cache) {
      cache->input = Tensor(x.shape());
      cache->filled = true;
    }
    return x.reshaped(std::move(shape));
  }

  Tensor backward(const Tensor& g, const LayerCache& cache, std::span<Tensor>) const override {
    return g.reshaped(cache.input.shape());
  }

  std::unique_ptr<Layer> clone() const override { return std::make_unique<Reshape>(*this); }
};

class Flatten final : public Layer {
 public:
  explicit Flatten(LayerSpec spec) : Layer(std::move(spec)) {}

  Tensor forward(const Tensor& x, Mode, LayerCache* cache) const override {
    if (x.rank() < 2) fail("expected rank >= 2, got " + shape_string(x.shape()));
    if (cache) {
      cache->input = Tensor(x.shape());
      cache->filled = true;
    }
    return x.reshaped({x.dim(0), x.size() / x.dim(0)});
  }

  Tensor backward(const Tensor& g, const LayerCache& cache, std::span<Tensor>) const override {
    return g.reshaped(cache.input.shape());
  }

  std::unique_ptr<Layer> clone() const override { return std::make_unique<Flatten>(*this); }
};

inline std::unique_ptr<Layer> make_layer(const LayerSpec& spec, Rng& rng) {
  switch (spec.kind) {
    case LayerKind::Dense: return std::make_unique<Dense>(spec, rng);
    case LayerKind::Conv1d: return std::make_unique<Conv1d>(spec, rng);
    case LayerKind::ConvTranspose1d: return std::make_unique<ConvTranspose1d>(spec, rng);
    case LayerKind::BatchNorm: return std::make_unique<BatchNorm>(spec);
    case LayerKind::LeakyReLU: return std::make_unique<LeakyReLU>(spec);
    case LayerKind::Sigmoid: return std::make_unique<Sigmoid>(spec);
    case LayerKind::Reshape: return std::make_unique<Reshape>(spec);
    case LayerKind::Flatten: return std::make_unique<Flatten>(spec);
  }
  throw Error("invalid_layer", "unknown layer kind");
}

}  // namespace gazesyn::nn
