#pragma once

#include <array>
#include <cmath>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <mutex>
#include <numbers>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "gazesyn/csv.hpp"
#include "gazesyn/random.hpp"
#include "gazesyn/signal.hpp"

namespace gazesyn {

inline constexpr std::size_t kEmbeddingDim = 128;

enum class EmbeddingSource { Reference, External };

/// 128-d identity vector z = phi(v).
struct UserEmbedding {
  std::vector<double> values;
  EmbeddingSource source = EmbeddingSource::Reference;

  double norm() const {
    double s = 0.0;
    for (double v : values) s += v * v;
    return std::sqrt(s);
  }

  void validate() const {
    require(values.size() == kEmbeddingDim, "invalid_embedding",
            "embedding has " + std::to_string(values.size()) + " values, expected 128");
    for (double v : values) require(std::isfinite(v), "invalid_embedding", "embedding is not finite");
    require(norm() > 0.0, "zero_norm", "embedding has zero norm");
  }
};

/// dot(a,b) / (|a||b|)
inline double cosine_similarity(std::span<const double> a, std::span<const double> b) {
  require(a.size() == b.size(), "shape_mismatch", "cosine_similarity: length mismatch");
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  require(na > 0.0 && nb > 0.0, "zero_norm", "cosine_similarity: zero-norm vector");
  return std::clamp(dot / std::sqrt(na * nb), -1.0, 1.0);
}

inline double cosine_similarity(const UserEmbedding& a, const UserEmbedding& b) {
  return cosine_similarity(a.values, b.values);
}

/// d cos(a,b) / da
inline std::vector<double> cosine_gradient(std::span<const double> a, std::span<const double> b) {
  double dot = 0.0, na2 = 0.0, nb2 = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na2 += a[i] * a[i];
    nb2 += b[i] * b[i];
  }
  require(na2 > 0.0 && nb2 > 0.0, "zero_norm", "cosine_gradient: zero-norm vector");
  const double na = std::sqrt(na2), nb = std::sqrt(nb2);
  std::vector<double> g(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) g[i] = b[i] / (na * nb) - dot * a[i] / (na2 * na * nb);
  return g;
}

/// Identity encoder contract: velocity (deg/s) -> 128-d embedding, with the
/// input gradient needed to backpropagate an identity loss.
class Encoder {
 public:
  virtual ~Encoder() = default;
  virtual UserEmbedding encode(const VelocitySequence& v) const = 0;
  /// dL/dv given dL/dembedding.
  virtual VelocitySequence input_gradient(const VelocitySequence& v, std::span<const double> upstream) const = 0;
  virtual std::size_t min_length() const = 0;
};

struct ReferenceEncoderOptions {
  std::size_t bands = 29;
  std::size_t probes_per_band = 4;
  double low_hz = 0.5;
  std::uint64_t projection_seed = 0x454B5954;  // "EKYT"
  std::size_t min_length = 256;
};

/// Deterministic differentiable stand-in for a pretrained identity encoder.
///
/// Per axis: mean/10, log standard deviation, log RMS, and 29 log band
/// energies (Hann-tapered DTFT probes on log-spaced bands from 0.5 Hz to
/// Nyquist) -> 64 features. A fixed seeded Gaussian 64->128 projection
/// follows, then Euclidean normalization. An optional per-feature
/// standardization can be fitted to a reference set with calibrated().
class ReferenceEncoder final : public Encoder {
 public:
  static constexpr std::size_t kFeatures = 64;

  explicit ReferenceEncoder(ReferenceEncoderOptions options = {}) : options_(options) {
    require(3 + options_.bands == kFeatures / 2, "invalid_encoder", "band count must give 64 features");
    Rng rng(options_.projection_seed);
    projection_.resize(kEmbeddingDim * kFeatures);
    const double scale = 1.0 / std::sqrt(static_cast<double>(kFeatures));
    for (auto& w : projection_) w = rng.normal(0.0, scale);
    center_.assign(kFeatures, 0.0);
    scale_.assign(kFeatures, 1.0);
  }

  const ReferenceEncoderOptions& options() const { return options_; }
  std::size_t min_length() const override { return options_.min_length; }
  const std::vector<double>& feature_center() const { return center_; }
  const std::vector<double>& feature_scale() const { return scale_; }

  /// Copy with features standardized by the mean/std over `reference`.
  ReferenceEncoder calibrated(std::span<const VelocitySequence> reference) const {
    require(reference.size() >= 2, "invalid_argument", "calibration needs at least two sequences");
    ReferenceEncoder out(options_);
    std::vector<double> sum(kFeatures, 0.0), sum2(kFeatures, 0.0);
    for (const auto& v : reference) {
      const auto f = out.raw_features(v).values;
      for (std::size_t i = 0; i < kFeatures; ++i) {
        sum[i] += f[i];
        sum2[i] += f[i] * f[i];
      }
    }
    const double n = static_cast<double>(reference.size());
    for (std::size_t i = 0; i < kFeatures; ++i) {
      out.center_[i] = sum[i] / n;
      out.scale_[i] = std::sqrt(std::max(sum2[i] / n - out.center_[i] * out.center_[i], 0.0)) + 1e-3;
    }
    return out;
  }

  void set_standardization(std::vector<double> center, std::vector<double> scale) {
    require(center.size() == kFeatures && scale.size() == kFeatures, "invalid_encoder",
            "standardization vectors must have 64 entries");
    center_ = std::move(center);
    scale_ = std::move(scale);
  }

  /// The 64 standardized features.
  std::vector<double> features(const VelocitySequence& v) const {
    auto f = raw_features(v).values;
    for (std::size_t i = 0; i < kFeatures; ++i) f[i] = (f[i] - center_[i]) / scale_[i];
    return f;
  }

  UserEmbedding encode(const VelocitySequence& v) const override {
    const auto f = features(v);
    auto y = project(f);
    const double n = norm(y);
    require(n > 0.0, "zero_norm", "reference encoder produced a zero vector");
    for (auto& e : y) e /= n;
    return UserEmbedding{std::move(y), EmbeddingSource::Reference};
  }

  VelocitySequence input_gradient(const VelocitySequence& v, std::span<const double> upstream) const override {
    require(upstream.size() == kEmbeddingDim, "shape_mismatch", "encoder upstream gradient must be 128-d");
    const auto raw = raw_features(v);
    std::vector<double> f(kFeatures);
    for (std::size_t i = 0; i < kFeatures; ++i) f[i] = (raw.values[i] - center_[i]) / scale_[i];
    const auto y = project(f);
    const double ny = norm(y);
    double eg = 0.0;
    for (std::size_t i = 0; i < kEmbeddingDim; ++i) eg += y[i] / ny * upstream[i];
    std::vector<double> dy(kEmbeddingDim);
    for (std::size_t i = 0; i < kEmbeddingDim; ++i) dy[i] = (upstream[i] - y[i] / ny * eg) / ny;
    std::vector<double> df(kFeatures, 0.0);
    for (std::size_t o = 0; o < kEmbeddingDim; ++o)
      for (std::size_t i = 0; i < kFeatures; ++i) df[i] += projection_[o * kFeatures + i] * dy[o];
    for (std::size_t i = 0; i < kFeatures; ++i) df[i] /= scale_[i];

    VelocitySequence grad{v.sample_rate_hz, std::vector<double>(v.size()), std::vector<double>(v.size())};
    axis_backward(v.vx, v.sample_rate_hz, raw.axes[0], std::span<const double>(df).subspan(0, kFeatures / 2), grad.vx);
    axis_backward(v.vy, v.sample_rate_hz, raw.axes[1], std::span<const double>(df).subspan(kFeatures / 2), grad.vy);
    return grad;
  }

 private:
  static constexpr double kStatEps = 1e-6;
  static constexpr double kBandEps = 1e-3;
  static constexpr double kMeanScale = 10.0;

  struct AxisStats {
    double mean = 0.0, std = 0.0, rms = 0.0;
    std::vector<double> probe_re, probe_im, band_energy;
  };
  struct RawFeatures {
    std::vector<double> values;
    std::array<AxisStats, 2> axes;
  };

  std::vector<double> probe_frequencies(double rate) const {
    const double nyquist = rate / 2.0;
    require(nyquist > options_.low_hz, "invalid_rate", "sample rate too low for the encoder filter bank");
    const double ratio = std::pow(nyquist / options_.low_hz, 1.0 / static_cast<double>(options_.bands));
    std::vector<double> freqs;
    for (std::size_t b = 0; b < options_.bands; ++b) {
      const double lo = options_.low_hz * std::pow(ratio, static_cast<double>(b));
      for (std::size_t j = 0; j < options_.probes_per_band; ++j)
        freqs.push_back(lo * std::pow(ratio, (static_cast<double>(j) + 0.5) / static_cast<double>(options_.probes_per_band)));
    }
    return freqs;
  }

  /// Hann taper and per-probe cos/sin rows for one (length, rate) pair.
  struct ProbeTables {
    std::vector<double> window;
    double window_energy = 0.0;
    std::vector<double> cos, sin;  // (probes, n) row-major
  };

  std::shared_ptr<const ProbeTables> tables(std::size_t n, double rate) const {
    const std::lock_guard lock(*cache_mutex_);
    const auto key = std::make_pair(n, rate);
    if (auto it = cache_->find(key); it != cache_->end()) return it->second;
    auto t = std::make_shared<ProbeTables>();
    t->window.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      t->window[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(n - 1));
      t->window_energy += t->window[i] * t->window[i];
    }
    const auto freqs = probe_frequencies(rate);
    t->cos.resize(freqs.size() * n);
    t->sin.resize(freqs.size() * n);
    for (std::size_t p = 0; p < freqs.size(); ++p) {
      const double theta = 2.0 * std::numbers::pi * freqs[p] / rate;
      for (std::size_t i = 0; i < n; ++i) {
        t->cos[p * n + i] = std::cos(theta * static_cast<double>(i));
        t->sin[p * n + i] = std::sin(theta * static_cast<double>(i));
      }
    }
    if (cache_->size() > 16) cache_->clear();
    cache_->emplace(key, t);
    return t;
  }

  AxisStats axis_forward(const std::vector<double>& x, double rate, std::span<double> out) const {
    const std::size_t n = x.size();
    AxisStats st;
    double sum = 0.0, sum2 = 0.0;
    for (double v : x) {
      sum += v;
      sum2 += v * v;
    }
    st.mean = sum / static_cast<double>(n);
    double var = 0.0;
    for (double v : x) var += (v - st.mean) * (v - st.mean);
    var /= static_cast<double>(n);
    st.std = std::sqrt(var + kStatEps);
    st.rms = std::sqrt(sum2 / static_cast<double>(n) + kStatEps);
    out[0] = st.mean / kMeanScale;
    out[1] = std::log(st.std);
    out[2] = std::log(st.rms);

    const auto tab = tables(n, rate);
    const auto& w = tab->window;
    const double wsum = tab->window_energy;
    const std::size_t probes = options_.bands * options_.probes_per_band;
    std::vector<double> cw(n);
    for (std::size_t i = 0; i < n; ++i) cw[i] = (x[i] - st.mean) * w[i];
    st.probe_re.resize(probes);
    st.probe_im.resize(probes);
    st.band_energy.assign(options_.bands, 0.0);
    for (std::size_t p = 0; p < probes; ++p) {
      const double* c = tab->cos.data() + p * n;
      const double* s = tab->sin.data() + p * n;
      double re = 0.0, im = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        re += cw[i] * c[i];
        im -= cw[i] * s[i];
      }
      st.probe_re[p] = re;
      st.probe_im[p] = im;
      st.band_energy[p / options_.probes_per_band] +=
          (re * re + im * im) / wsum / static_cast<double>(options_.probes_per_band);
    }
    for (std::size_t b = 0; b < options_.bands; ++b) out[3 + b] = std::log(st.band_energy[b] + kBandEps);
    return st;
  }

  void axis_backward(const std::vector<double>& x, double rate, const AxisStats& st, std::span<const double> df,
                     std::vector<double>& dx) const {
    const std::size_t n = x.size();
    const double nn = static_cast<double>(n);
    const auto tab = tables(n, rate);
    const auto& w = tab->window;
    const double wsum = tab->window_energy;
    const std::size_t probes = options_.bands * options_.probes_per_band;
    // d/d(centered * window)
    std::vector<double> dcw(n, 0.0);
    for (std::size_t p = 0; p < probes; ++p) {
      const std::size_t b = p / options_.probes_per_band;
      const double dE = df[3 + b] / (st.band_energy[b] + kBandEps);
      const double dP = dE / static_cast<double>(options_.probes_per_band) / wsum;
      const double dre = 2.0 * st.probe_re[p] * dP;
      const double dim = 2.0 * st.probe_im[p] * dP;
      if (dre == 0.0 && dim == 0.0) continue;
      const double* c = tab->cos.data() + p * n;
      const double* s = tab->sin.data() + p * n;
      for (std::size_t i = 0; i < n; ++i) dcw[i] += dre * c[i] - dim * s[i];
    }
    double dc_mean = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      dcw[i] *= w[i];
      dc_mean += dcw[i];
    }
    dc_mean /= nn;
    const double dstd = df[1] / st.std;
    const double drms = df[2] / st.rms;
    const double dmean = df[0] / kMeanScale;
    for (std::size_t i = 0; i < n; ++i) {
      const double centered = x[i] - st.mean;
      dx[i] = (dcw[i] - dc_mean) + dmean / nn + dstd * centered / (st.std * nn) + drms * x[i] / (st.rms * nn);
    }
  }

  RawFeatures raw_features(const VelocitySequence& v) const {
    require(v.vx.size() == v.vy.size(), "shape_mismatch", "velocity channels differ in length");
    require(v.size() >= options_.min_length, "sequence_too_short",
            "encoder needs at least " + std::to_string(options_.min_length) + " samples, got " +
                std::to_string(v.size()));
    for (std::size_t i = 0; i < v.size(); ++i)
      require(std::isfinite(v.vx[i]) && std::isfinite(v.vy[i]), "non_finite", "encoder input is not finite");
    RawFeatures r;
    r.values.assign(kFeatures, 0.0);
    r.axes[0] = axis_forward(v.vx, v.sample_rate_hz, std::span<double>(r.values).subspan(0, kFeatures / 2));
    r.axes[1] = axis_forward(v.vy, v.sample_rate_hz, std::span<double>(r.values).subspan(kFeatures / 2));
    return r;
  }

  std::vector<double> project(const std::vector<double>& f) const {
    std::vector<double> y(kEmbeddingDim, 0.0);
    for (std::size_t o = 0; o < kEmbeddingDim; ++o)
      for (std::size_t i = 0; i < kFeatures; ++i) y[o] += projection_[o * kFeatures + i] * f[i];
    return y;
  }

  static double norm(const std::vector<double>& y) {
    double s = 0.0;
    for (double v : y) s += v * v;
    return std::sqrt(s);
  }

  ReferenceEncoderOptions options_;
  std::vector<double> projection_;  // row-major (128, 64)
  std::vector<double> center_;
  std::vector<double> scale_;
  std::shared_ptr<std::mutex> cache_mutex_ = std::make_shared<std::mutex>();
  std::shared_ptr<std::map<std::pair<std::size_t, double>, std::shared_ptr<const ProbeTables>>> cache_ =
      std::make_shared<std::map<std::pair<std::size_t, double>, std::shared_ptr<const ProbeTables>>>();
};

// ---------------------------------------------------------------------------
// Subject-specific condition generator

using DdqfeFeatures = std::array<double, 4>;

/// Displacement profile d[k] = sum_{i<=k} v[i] / rate per axis, summarized as
/// [std(d_x), std(d_y), rms(d_x), rms(d_y)] (population statistics).
inline DdqfeFeatures ddqfe(const VelocitySequence& v) {
  require(v.size() > 0 && v.vx.size() == v.vy.size(), "invalid_argument", "ddqfe needs a non-empty sequence");
  const double n = static_cast<double>(v.size());
  DdqfeFeatures out{};
  const std::vector<double>* axes[] = {&v.vx, &v.vy};
  for (std::size_t a = 0; a < 2; ++a) {
    double d = 0.0, sum = 0.0, sum2 = 0.0;
    for (double s : *axes[a]) {
      d += (std::isfinite(s) ? s : 0.0) / v.sample_rate_hz;
      sum += d;
      sum2 += d * d;
    }
    const double mean = sum / n;
    out[a] = std::sqrt(std::max(sum2 / n - mean * mean, 0.0));
    out[2 + a] = std::sqrt(sum2 / n);
  }
  return out;
}

inline std::vector<double> one_hot(std::size_t subject_index, std::size_t n_subjects) {
  require(subject_index < n_subjects, "out_of_range",
          "subject index " + std::to_string(subject_index) + " out of range for " + std::to_string(n_subjects) +
              " subjects");
  std::vector<double> v(n_subjects, 0.0);
  v[subject_index] = 1.0;
  return v;
}

/// GAN conditioning vector: DDQFE features followed by the one-hot code.
struct SCGCondition {
  DdqfeFeatures ddqfe{};
  std::vector<double> one_hot;

  std::size_t size() const { return 4 + one_hot.size(); }

  std::vector<double> flattened() const {
    std::vector<double> out(ddqfe.begin(), ddqfe.end());
    out.insert(out.end(), one_hot.begin(), one_hot.end());
    return out;
  }
};

inline SCGCondition scg_concat(const DdqfeFeatures& features, std::vector<double> one_hot_vec) {
  require(!one_hot_vec.empty(), "invalid_argument", "one-hot vector must not be empty");
  double sum = 0.0;
  for (double v : one_hot_vec) {
    require(v == 0.0 || v == 1.0, "invalid_argument", "one-hot entries must be 0 or 1");
    sum += v;
  }
  require(sum == 1.0, "invalid_argument", "one-hot vector must contain exactly one 1");
  for (double f : features) require(f >= 0.0, "invalid_argument", "DDQFE features must be non-negative");
  return SCGCondition{features, std::move(one_hot_vec)};
}

// ---------------------------------------------------------------------------
// External embedding file: CSV with header subject_id,e0,...,e127

inline void write_embeddings_csv(const std::string& path, const std::map<std::string, UserEmbedding>& embeddings) {
  std::ofstream out(path);
  if (!out) throw Error("io_error", "cannot open " + path + " for writing");
  out << "subject_id";
  for (std::size_t i = 0; i < kEmbeddingDim; ++i) out << ",e" << i;
  out << '\n';
  for (const auto& [subject, e] : embeddings) {
    e.validate();
    out << subject;
    for (double v : e.values) out << ',' << csv::format_double(v);
    out << '\n';
  }
}

inline std::map<std::string, UserEmbedding> load_external_embeddings(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("io_error", "cannot open embedding file " + path);
  std::map<std::string, UserEmbedding> out;
  std::string line;
  if (!std::getline(in, line) || csv::trim(line).empty()) {
    std::clog << "warning: embedding file " << path << " is empty\n";
    return out;
  }
  const auto header = csv::split(line);
  require(!header.empty() && csv::trim(header[0]) == "subject_id", "invalid_schema",
          "embedding file header must start with subject_id");
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (csv::trim(line).empty()) continue;
    const auto fields = csv::split(line);
    if (fields.size() != kEmbeddingDim + 1)
      throw Error("invalid_embedding", "row " + std::to_string(row) + ": expected 128 embedding values, got " +
                                           std::to_string(fields.size() - 1));
    UserEmbedding e;
    e.source = EmbeddingSource::External;
    for (std::size_t i = 1; i < fields.size(); ++i) e.values.push_back(csv::parse_double(fields[i], row));
    try {
      e.validate();
    } catch (const Error& err) {
      throw Error(err.code(), "row " + std::to_string(row) + ": " + err.what());
    }
    out[std::string(csv::trim(fields[0]))] = std::move(e);
  }
  if (out.empty()) std::clog << "warning: embedding file " << path << " has no rows\n";
  return out;
}

// ---------------------------------------------------------------------------
// Reference-encoder standardization: CSV feature,center,scale (64 rows)

inline void write_encoder_calibration(const std::string& path, const ReferenceEncoder& enc) {
  std::ofstream out(path);
  if (!out) throw Error("io_error", "cannot open " + path + " for writing");
  out << "feature,center,scale\n";
  for (std::size_t i = 0; i < ReferenceEncoder::kFeatures; ++i)
    out << i << ',' << csv::format_double(enc.feature_center()[i]) << ',' << csv::format_double(enc.feature_scale()[i])
        << '\n';
}

inline ReferenceEncoder load_encoder_calibration(const std::string& path, ReferenceEncoderOptions options = {}) {
  std::ifstream in(path);
  if (!in) throw Error("io_error", "cannot open encoder calibration " + path);
  std::string line;
  std::getline(in, line);
  require(csv::trim(line) == "feature,center,scale", "invalid_schema", path + ": unexpected header");
  std::vector<double> center, scale;
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (csv::trim(line).empty()) continue;
    const auto f = csv::split(line);
    require(f.size() == 3, "invalid_schema", path + ": row " + std::to_string(row) + " needs 3 fields");
    center.push_back(csv::parse_double(f[1], row));
    scale.push_back(csv::parse_double(f[2], row));
    require(scale.back() > 0.0, "invalid_schema", path + ": row " + std::to_string(row) + " has a non-positive scale");
  }
  ReferenceEncoder enc(options);
  enc.set_standardization(std::move(center), std::move(scale));
  return enc;
}

}  // namespace gazesyn
