#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <string>
#include <vector>

#include "gazesyn/error.hpp"

namespace gazesyn {

inline constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

/// Timestamped 2-D gaze positions in degrees of visual angle, optionally with
/// the stimulus target. Empty target vectors mean "no target signal".
struct GazeRecording {
  std::string subject_id;
  std::string task_label;
  double sample_rate_hz = 1000.0;
  std::vector<double> t_ms;
  std::vector<double> x_deg;
  std::vector<double> y_deg;
  std::vector<double> target_x_deg;
  std::vector<double> target_y_deg;
  std::vector<std::uint8_t> valid;

  std::size_t size() const { return x_deg.size(); }
  bool has_target() const { return !target_x_deg.empty(); }

  /// Builds a recording with uniform timestamps and all samples valid.
  static GazeRecording from_positions(std::vector<double> x, std::vector<double> y, double rate_hz = 1000.0,
                                      std::string subject = {}, std::string task = {}) {
    GazeRecording r;
    r.subject_id = std::move(subject);
    r.task_label = std::move(task);
    r.sample_rate_hz = rate_hz;
    r.x_deg = std::move(x);
    r.y_deg = std::move(y);
    r.t_ms.resize(r.x_deg.size());
    for (std::size_t i = 0; i < r.t_ms.size(); ++i) r.t_ms[i] = static_cast<double>(i) * 1000.0 / rate_hz;
    r.valid.assign(r.x_deg.size(), 1);
    return r;
  }

  /// Throws on violated structural invariants.
  void validate() const {
    const std::size_t n = size();
    require(n >= 1, "invalid_recording", "recording has no samples");
    require(sample_rate_hz > 0.0, "invalid_recording", "sample rate must be positive");
    require(y_deg.size() == n && t_ms.size() == n && valid.size() == n, "invalid_recording",
            "coordinate, timestamp and validity sequences differ in length");
    require(target_x_deg.size() == target_y_deg.size() && (target_x_deg.empty() || target_x_deg.size() == n),
            "invalid_recording", "target sequences must be absent or match the recording length");
    const double step = 1000.0 / sample_rate_hz;
    for (std::size_t i = 1; i < n; ++i) {
      require(t_ms[i] > t_ms[i - 1], "non_monotone_time",
              "timestamps not strictly increasing at sample " + std::to_string(i));
      require(std::abs((t_ms[i] - t_ms[i - 1]) - step) <= 1e-6, "irregular_time",
              "timestamp spacing at sample " + std::to_string(i) + " differs from 1000/rate");
    }
  }
};

/// Two-channel velocity in deg/s.
struct VelocitySequence {
  double sample_rate_hz = 1000.0;
  std::vector<double> vx;
  std::vector<double> vy;

  std::size_t size() const { return vx.size(); }
};

/// Two-channel velocity mapped into [-1, 1] by sanitize_and_normalize.
struct NormalizedVelocitySequence {
  double sample_rate_hz = 1000.0;
  std::vector<double> vx;
  std::vector<double> vy;

  std::size_t size() const { return vx.size(); }
};

// ---------------------------------------------------------------------------
// Savitzky-Golay differentiation

/// Least-squares convolution weights for the `deriv`-th derivative at the
/// window centre, per unit sample step: y[i] = sum_j c[j] * x[i + j - window/2].
inline std::vector<double> savgol_coefficients(int window, int polyorder, int deriv) {
  require(window > 0 && window % 2 == 1, "invalid_window", "Savitzky-Golay window must be odd and positive");
  require(polyorder >= 0 && polyorder < window, "invalid_window", "polyorder must be < window");
  require(deriv >= 0 && deriv <= polyorder, "invalid_window", "derivative order must be <= polyorder");
  const int half = window / 2;
  const int np = polyorder + 1;
  // Normal matrix (A^T A)[p][q] = sum_j j^(p+q); solve for row `deriv` of its inverse.
  std::vector<std::vector<double>> m(np, std::vector<double>(np + 1, 0.0));
  for (int p = 0; p < np; ++p) {
    for (int q = 0; q < np; ++q) {
      double s = 0.0;
      for (int j = -half; j <= half; ++j) s += std::pow(static_cast<double>(j), p + q);
      m[p][q] = s;
    }
    m[p][np] = p == deriv ? 1.0 : 0.0;
  }
  for (int c = 0; c < np; ++c) {
    int pivot = c;
    for (int r = c + 1; r < np; ++r)
      if (std::abs(m[r][c]) > std::abs(m[pivot][c])) pivot = r;
    std::swap(m[c], m[pivot]);
    for (int r = 0; r < np; ++r) {
      if (r == c) continue;
      const double f = m[r][c] / m[c][c];
      for (int k = c; k <= np; ++k) m[r][k] -= f * m[c][k];
    }
  }
  std::vector<double> q(np);
  for (int p = 0; p < np; ++p) q[p] = m[p][np] / m[p][p];
  double factorial = 1.0;
  for (int k = 2; k <= deriv; ++k) factorial *= k;
  std::vector<double> coeffs(window);
  for (int j = -half; j <= half; ++j) {
    double s = 0.0;
    for (int p = 0; p < np; ++p) s += q[p] * std::pow(static_cast<double>(j), p);
    coeffs[j + half] = factorial * s;
  }
  return coeffs;
}

namespace detail {

/// Mirror index into [0, n) without repeating the edge sample.
inline std::size_t mirror_index(std::ptrdiff_t i, std::size_t n) {
  const auto last = static_cast<std::ptrdiff_t>(n) - 1;
  if (last <= 0) return 0;
  const std::ptrdiff_t period = 2 * last;
  i %= period;
  if (i < 0) i += period;
  return static_cast<std::size_t>(i <= last ? i : period - i);
}

inline std::vector<double> apply_savgol(const std::vector<double>& x, const std::vector<double>& coeffs,
                                        double scale) {
  const std::size_t n = x.size();
  const auto half = static_cast<std::ptrdiff_t>(coeffs.size() / 2);
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    double acc = 0.0;
    for (std::ptrdiff_t j = -half; j <= half; ++j)
      acc += coeffs[static_cast<std::size_t>(j + half)] * x[mirror_index(static_cast<std::ptrdiff_t>(i) + j, n)];
    out[i] = acc * scale;
  }
  return out;
}

inline std::vector<double> masked(const std::vector<double>& v, const std::vector<std::uint8_t>& valid) {
  std::vector<double> out = v;
  for (std::size_t i = 0; i < out.size(); ++i)
    if (i < valid.size() && !valid[i]) out[i] = kNaN;
  return out;
}

}  // namespace detail

/// First derivative of gaze position in deg/s. Edges are mirror-padded so the
/// output keeps the input length; invalid samples become NaN gaps.
inline VelocitySequence sgdf_differentiate(const GazeRecording& p, int window = 7, int polyorder = 2) {
  require(window > 0 && window % 2 == 1, "invalid_window", "Savitzky-Golay window must be odd");
  require(p.size() >= static_cast<std::size_t>(window), "sequence_too_short",
          "sequence too short: " + std::to_string(p.size()) + " samples for window " + std::to_string(window));
  const auto coeffs = savgol_coefficients(window, polyorder, 1);
  VelocitySequence v;
  v.sample_rate_hz = p.sample_rate_hz;
  v.vx = detail::apply_savgol(detail::masked(p.x_deg, p.valid), coeffs, p.sample_rate_hz);
  v.vy = detail::apply_savgol(detail::masked(p.y_deg, p.valid), coeffs, p.sample_rate_hz);
  return v;
}

// ---------------------------------------------------------------------------
// Identity removal by down/up resampling

enum class InterpolationKernel { Linear, Cubic };

struct ResampleOptions {
  /// Upsampling kernel. Cubic is a natural cubic spline through the
  /// decimated samples.
  InterpolationKernel kernel = InterpolationKernel::Cubic;
  /// Anti-alias filter half-width, in intermediate-rate periods. The
  /// Blackman-windowed sinc has a transition band of about
  /// 2.75 * intermediate_hz / half_width_periods.
  double half_width_periods = 10.0;
};

namespace detail {

/// Blackman-windowed sinc low-pass with cutoff `fc` in cycles/sample, unit DC gain.
inline std::vector<double> windowed_sinc(double fc, std::size_t half) {
  std::vector<double> h(2 * half + 1);
  const double pi = std::numbers::pi;
  const double len = static_cast<double>(2 * half);
  double sum = 0.0;
  for (std::size_t k = 0; k < h.size(); ++k) {
    const double m = static_cast<double>(k) - static_cast<double>(half);
    const double sinc = m == 0.0 ? 2.0 * fc : std::sin(2.0 * pi * fc * m) / (pi * m);
    const double w = 0.42 - 0.5 * std::cos(2.0 * pi * static_cast<double>(k) / len) +
                     0.08 * std::cos(4.0 * pi * static_cast<double>(k) / len);
    h[k] = sinc * w;
    sum += h[k];
  }
  for (auto& v : h) v /= sum;
  return h;
}

/// Linearly fills NaN gaps from neighbouring finite samples (edges held).
inline std::vector<double> fill_gaps(const std::vector<double>& x) {
  std::vector<double> out = x;
  const std::size_t n = x.size();
  std::ptrdiff_t prev = -1;
  for (std::size_t i = 0; i <= n; ++i) {
    if (i < n && !std::isfinite(out[i])) continue;
    const auto gap_start = static_cast<std::size_t>(prev + 1);
    if (i > gap_start) {
      for (std::size_t k = gap_start; k < i; ++k) {
        if (prev < 0 && i == n) out[k] = 0.0;
        else if (prev < 0) out[k] = out[i];
        else if (i == n) out[k] = out[static_cast<std::size_t>(prev)];
        else {
          const double f = static_cast<double>(k - static_cast<std::size_t>(prev)) /
                           static_cast<double>(i - static_cast<std::size_t>(prev));
          out[k] = out[static_cast<std::size_t>(prev)] + f * (out[i] - out[static_cast<std::size_t>(prev)]);
        }
      }
    }
    prev = static_cast<std::ptrdiff_t>(i);
  }
  return out;
}

/// Natural cubic spline through (xs, ys); evaluation extends the end segments.
class NaturalSpline {
 public:
  NaturalSpline(std::vector<double> xs, std::vector<double> ys) : xs_(std::move(xs)), ys_(std::move(ys)) {
    const std::size_t n = xs_.size();
    m_.assign(n, 0.0);
    if (n < 3) return;
    // Tridiagonal system for second derivatives, natural ends (m0 = mn = 0).
    std::vector<double> c(n, 0.0), d(n, 0.0);
    for (std::size_t i = 1; i + 1 < n; ++i) {
      const double h0 = xs_[i] - xs_[i - 1], h1 = xs_[i + 1] - xs_[i];
      const double a = h0, b = 2.0 * (h0 + h1), cc = h1;
      const double rhs = 6.0 * ((ys_[i + 1] - ys_[i]) / h1 - (ys_[i] - ys_[i - 1]) / h0);
      const double denom = b - a * c[i - 1];
      c[i] = cc / denom;
      d[i] = (rhs - a * d[i - 1]) / denom;
    }
    for (std::size_t i = n - 2; i >= 1; --i) {
      m_[i] = d[i] - c[i] * m_[i + 1];
      if (i == 1) break;
    }
  }

  double operator()(double x) const {
    const std::size_t n = xs_.size();
    if (n == 1) return ys_[0];
    std::size_t i = static_cast<std::size_t>(std::upper_bound(xs_.begin(), xs_.end(), x) - xs_.begin());
    i = std::clamp<std::size_t>(i, 1, n - 1) - 1;
    const double h = xs_[i + 1] - xs_[i];
    const double a = (xs_[i + 1] - x) / h, b = (x - xs_[i]) / h;
    return a * ys_[i] + b * ys_[i + 1] + ((a * a * a - a) * m_[i] + (b * b * b - b) * m_[i + 1]) * h * h / 6.0;
  }

 private:
  std::vector<double> xs_, ys_, m_;
};

inline double linear_interp(const std::vector<double>& xs, const std::vector<double>& ys, double x) {
  const std::size_t n = xs.size();
  if (n == 1) return ys[0];
  std::size_t i = static_cast<std::size_t>(std::upper_bound(xs.begin(), xs.end(), x) - xs.begin());
  i = std::clamp<std::size_t>(i, 1, n - 1) - 1;
  const double f = (x - xs[i]) / (xs[i + 1] - xs[i]);
  return ys[i] + f * (ys[i + 1] - ys[i]);
}

inline std::vector<double> resample_axis(const std::vector<double>& raw, double ratio, const ResampleOptions& opt) {
  const std::size_t n = raw.size();
  const std::vector<double> x = fill_gaps(raw);
  const auto half = static_cast<std::size_t>(std::ceil(opt.half_width_periods * ratio));
  const auto h = windowed_sinc(0.5 / ratio, half);
  auto filtered_at = [&](std::size_t pos) {
    double acc = 0.0;
    for (std::size_t k = 0; k < h.size(); ++k)
      acc += h[k] * x[mirror_index(static_cast<std::ptrdiff_t>(pos + k) - static_cast<std::ptrdiff_t>(half), n)];
    return acc;
  };
  std::vector<double> knots_t, knots_v;
  for (std::size_t j = 0;; ++j) {
    const double tau = static_cast<double>(j) * ratio;
    if (tau > static_cast<double>(n - 1) + 1e-9) break;
    const auto lo = static_cast<std::size_t>(std::floor(tau + 1e-9));
    const double frac = tau - static_cast<double>(lo);
    double value = filtered_at(lo);
    if (frac > 1e-9 && lo + 1 < n) value += frac * (filtered_at(lo + 1) - value);
    knots_t.push_back(tau);
    knots_v.push_back(value);
  }
  std::vector<double> out(n);
  if (opt.kernel == InterpolationKernel::Cubic && knots_t.size() >= 3) {
    NaturalSpline spline(knots_t, knots_v);
    for (std::size_t i = 0; i < n; ++i) out[i] = spline(static_cast<double>(i));
  } else {
    for (std::size_t i = 0; i < n; ++i) out[i] = linear_interp(knots_t, knots_v, static_cast<double>(i));
  }
  for (std::size_t i = 0; i < n; ++i)
    if (!std::isfinite(raw[i])) out[i] = kNaN;
  return out;
}

}  // namespace detail

/// Suppresses subject-specific high-frequency content: anti-alias filter,
/// decimate to `intermediate_hz`, interpolate back at the original
/// timestamps. Length, timestamps, validity and metadata are preserved;
/// invalid samples stay NaN.
inline GazeRecording remove_identity(const GazeRecording& p, double intermediate_hz = 25.0,
                                     const ResampleOptions& options = {}) {
  require(intermediate_hz > 0.0 && intermediate_hz < p.sample_rate_hz, "invalid_rate",
          "intermediate rate must be positive and below the sample rate");
  const double ratio = p.sample_rate_hz / intermediate_hz;
  GazeRecording out = p;
  if (p.size() == 0) return out;
  out.x_deg = detail::resample_axis(detail::masked(p.x_deg, p.valid), ratio, options);
  out.y_deg = detail::resample_axis(detail::masked(p.y_deg, p.valid), ratio, options);
  return out;
}

// ---------------------------------------------------------------------------
// Sanitization and sine normalization

inline constexpr double kVelocityLimit = 1000.0;          // deg/s
inline constexpr double kNormalizedRangeDeg = 90.0;
inline constexpr double kRescale = kNormalizedRangeDeg / kVelocityLimit;  // 0.09

inline double normalize_velocity(double v) {
  if (!std::isfinite(v)) v = 0.0;
  v = std::clamp(v, -kVelocityLimit, kVelocityLimit);
  return std::sin(v * kRescale * std::numbers::pi / 180.0);
}

inline double denormalize_velocity(double n) {
  require(std::abs(n) <= 1.0 + 1e-9, "out_of_range",
          "normalized velocity " + std::to_string(n) + " outside [-1, 1]");
  n = std::clamp(n, -1.0, 1.0);
  return std::asin(n) * (180.0 / std::numbers::pi) / kRescale;
}

/// Non-finite samples become 0, values are clamped to +-1000 deg/s, rescaled
/// to +-90 and mapped through sin(deg).
inline NormalizedVelocitySequence sanitize_and_normalize(const VelocitySequence& v) {
  NormalizedVelocitySequence out{v.sample_rate_hz, v.vx, v.vy};
  for (auto& s : out.vx) s = normalize_velocity(s);
  for (auto& s : out.vy) s = normalize_velocity(s);
  return out;
}

inline VelocitySequence denormalize(const NormalizedVelocitySequence& nv) {
  VelocitySequence out{nv.sample_rate_hz, nv.vx, nv.vy};
  for (auto& s : out.vx) s = denormalize_velocity(s);
  for (auto& s : out.vy) s = denormalize_velocity(s);
  return out;
}

/// Averages consecutive blocks of `factor` samples (trailing partial block
/// dropped). Used to bring 1000 Hz velocity to the desk-scale model rate.
inline VelocitySequence block_average(const VelocitySequence& v, std::size_t factor) {
  require(factor >= 1, "invalid_rate", "block factor must be >= 1");
  VelocitySequence out;
  out.sample_rate_hz = v.sample_rate_hz / static_cast<double>(factor);
  const std::size_t blocks = v.size() / factor;
  out.vx.resize(blocks);
  out.vy.resize(blocks);
  for (std::size_t b = 0; b < blocks; ++b) {
    double sx = 0.0, sy = 0.0;
    for (std::size_t k = 0; k < factor; ++k) {
      sx += v.vx[b * factor + k];
      sy += v.vy[b * factor + k];
    }
    out.vx[b] = sx / static_cast<double>(factor);
    out.vy[b] = sy / static_cast<double>(factor);
  }
  return out;
}

}  // namespace gazesyn
