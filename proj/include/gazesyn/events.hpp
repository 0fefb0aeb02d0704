#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "gazesyn/signal.hpp"

namespace gazesyn {

enum class EventKind { Fixation, Saccade };

inline const char* event_kind_name(EventKind k) { return k == EventKind::Fixation ? "fixation" : "saccade"; }

using Point2 = std::array<double, 2>;

/// A fixation or saccade slice [start_index, end_index) of a recording.
struct EventSegment {
  EventKind kind = EventKind::Fixation;
  std::size_t start_index = 0;
  std::size_t end_index = 0;
  VelocitySequence velocity;  // SGDF velocity of the slice (empty if the recording is too short)
  Point2 start_position{};
  Point2 end_position{};
  std::string subject_id;

  std::size_t length() const { return end_index - start_index; }
};

struct IdtOptions {
  double dispersion_threshold_deg = 1.0;
  double min_fixation_duration_ms = 100.0;
  // Windows that touch with no saccade sample between them are one fixation.
  // The greedy window can close early when it starts on the last samples of a ramp.
  bool merge_adjacent = true;
};

namespace detail {

/// Running min/max of both axes; NaN samples poison the window.
struct Extent {
  double min_x = std::numeric_limits<double>::infinity(), max_x = -min_x;
  double min_y = min_x, max_y = -min_x;
  bool poisoned = false;

  void add(double x, double y) {
    if (!std::isfinite(x) || !std::isfinite(y)) {
      poisoned = true;
      return;
    }
    min_x = std::min(min_x, x);
    max_x = std::max(max_x, x);
    min_y = std::min(min_y, y);
    max_y = std::max(max_y, y);
  }
  /// (max x - min x) + (max y - min y)
  double dispersion() const {
    return poisoned ? std::numeric_limits<double>::infinity() : (max_x - min_x) + (max_y - min_y);
  }
};

inline std::size_t samples_for_ms(double ms, double rate_hz) {
  return static_cast<std::size_t>(std::ceil(ms * rate_hz / 1000.0 - 1e-9));
}

}  // namespace detail

/// Dispersion-threshold identification. Returned segments are ordered,
/// disjoint and tile [0, S): fixations are maximal windows whose dispersion
/// stays within the threshold for at least the minimum duration, everything
/// in between is labelled saccade.
inline std::vector<EventSegment> idt_segment(const GazeRecording& p, double dispersion_threshold_deg,
                                             double min_fix_duration_ms, bool merge_adjacent = true) {
  require(dispersion_threshold_deg > 0.0 && min_fix_duration_ms > 0.0, "invalid_threshold",
          "I-DT thresholds must be positive");
  const std::size_t n = p.size();
  std::vector<EventSegment> out;
  if (n == 0) return out;
  const auto xs = detail::masked(p.x_deg, p.valid);
  const auto ys = detail::masked(p.y_deg, p.valid);
  const std::size_t min_len = std::max<std::size_t>(1, detail::samples_for_ms(min_fix_duration_ms, p.sample_rate_hz));

  std::vector<std::pair<std::size_t, std::size_t>> fixations;
  std::size_t i = 0;
  while (i + min_len <= n) {
    detail::Extent ext;
    for (std::size_t k = i; k < i + min_len; ++k) ext.add(xs[k], ys[k]);
    if (ext.dispersion() <= dispersion_threshold_deg) {
      std::size_t j = i + min_len;
      while (j < n) {
        detail::Extent grown = ext;
        grown.add(xs[j], ys[j]);
        if (grown.dispersion() > dispersion_threshold_deg) break;
        ext = grown;
        ++j;
      }
      if (merge_adjacent && !fixations.empty() && fixations.back().second == i)
        fixations.back().second = j;
      else
        fixations.emplace_back(i, j);
      i = j;
    } else {
      ++i;
    }
  }

  VelocitySequence velocity;
  const bool has_velocity = n >= 7;
  if (has_velocity) velocity = sgdf_differentiate(p);

  auto emit = [&](EventKind kind, std::size_t a, std::size_t b) {
    EventSegment s;
    s.kind = kind;
    s.start_index = a;
    s.end_index = b;
    s.subject_id = p.subject_id;
    s.start_position = {p.x_deg[a], p.y_deg[a]};
    s.end_position = {p.x_deg[b - 1], p.y_deg[b - 1]};
    s.velocity.sample_rate_hz = p.sample_rate_hz;
    if (has_velocity) {
      s.velocity.vx.assign(velocity.vx.begin() + static_cast<std::ptrdiff_t>(a),
                           velocity.vx.begin() + static_cast<std::ptrdiff_t>(b));
      s.velocity.vy.assign(velocity.vy.begin() + static_cast<std::ptrdiff_t>(a),
                           velocity.vy.begin() + static_cast<std::ptrdiff_t>(b));
    }
    out.push_back(std::move(s));
  };

  std::size_t cursor = 0;
  for (const auto& [a, b] : fixations) {
    if (a > cursor) emit(EventKind::Saccade, cursor, a);
    emit(EventKind::Fixation, a, b);
    cursor = b;
  }
  if (cursor < n) emit(EventKind::Saccade, cursor, n);
  return out;
}

inline std::vector<EventSegment> idt_segment(const GazeRecording& p, const IdtOptions& options = {}) {
  return idt_segment(p, options.dispersion_threshold_deg, options.min_fixation_duration_ms, options.merge_adjacent);
}

/// An 80 ms (by default) window lying entirely inside one fixation.
struct StableBin {
  std::size_t fixation_index = 0;  // index into the segment list handed to extract_stable_bins
  std::size_t start_index = 0;     // sample index into the recording
  std::size_t length_samples = 0;
  std::vector<double> x_deg, y_deg;
  std::vector<double> target_x_deg, target_y_deg;  // empty when the recording has no target

  bool has_target() const { return !target_x_deg.empty(); }
};

/// Left-aligned, non-overlapping bins of `bin_ms` inside each fixation.
/// Non-fixation segments are skipped.
inline std::vector<StableBin> extract_stable_bins(const std::vector<EventSegment>& segments, const GazeRecording& rec,
                                                  double bin_ms = 80.0) {
  require(bin_ms > 0.0, "invalid_threshold", "bin duration must be positive");
  const auto bin_len = static_cast<std::size_t>(std::llround(bin_ms * rec.sample_rate_hz / 1000.0));
  require(bin_len >= 1, "invalid_threshold", "bin shorter than one sample");
  std::vector<StableBin> bins;
  for (std::size_t s = 0; s < segments.size(); ++s) {
    const auto& seg = segments[s];
    if (seg.kind != EventKind::Fixation) continue;
    require(seg.end_index <= rec.size(), "invalid_segment", "segment extends past the recording");
    for (std::size_t start = seg.start_index; start + bin_len <= seg.end_index; start += bin_len) {
      StableBin b;
      b.fixation_index = s;
      b.start_index = start;
      b.length_samples = bin_len;
      const auto first = static_cast<std::ptrdiff_t>(start), last = static_cast<std::ptrdiff_t>(start + bin_len);
      b.x_deg.assign(rec.x_deg.begin() + first, rec.x_deg.begin() + last);
      b.y_deg.assign(rec.y_deg.begin() + first, rec.y_deg.begin() + last);
      if (rec.has_target()) {
        b.target_x_deg.assign(rec.target_x_deg.begin() + first, rec.target_x_deg.begin() + last);
        b.target_y_deg.assign(rec.target_y_deg.begin() + first, rec.target_y_deg.begin() + last);
      }
      bins.push_back(std::move(b));
    }
  }
  return bins;
}

/// Concatenates fixation/saccade velocities in alternating order (F S F ... F)
/// and integrates positions with a left Riemann sum:
/// pos[k+1] = pos[k] + v[k] / rate.
inline GazeRecording assemble_scanpath(const std::vector<VelocitySequence>& fixations,
                                       const std::vector<VelocitySequence>& saccades, std::size_t n_fixations,
                                       Point2 start_pos = {0.0, 0.0}) {
  require(n_fixations >= 1, "invalid_argument", "need at least one fixation");
  require(fixations.size() >= n_fixations && saccades.size() + 1 >= n_fixations, "insufficient_segments",
          "need " + std::to_string(n_fixations) + " fixations and " + std::to_string(n_fixations - 1) +
              " saccades, got " + std::to_string(fixations.size()) + " and " + std::to_string(saccades.size()));
  const double rate = fixations[0].sample_rate_hz;
  std::vector<double> vx, vy;
  auto append = [&](const VelocitySequence& v) {
    require(std::abs(v.sample_rate_hz - rate) < 1e-9, "rate_mismatch", "segments have different sample rates");
    require(v.vx.size() == v.vy.size() && v.size() > 0, "invalid_segment", "empty or ragged segment");
    vx.insert(vx.end(), v.vx.begin(), v.vx.end());
    vy.insert(vy.end(), v.vy.begin(), v.vy.end());
  };
  for (std::size_t k = 0; k < n_fixations; ++k) {
    append(fixations[k]);
    if (k + 1 < n_fixations) append(saccades[k]);
  }
  std::vector<double> x(vx.size()), y(vy.size());
  x[0] = start_pos[0];
  y[0] = start_pos[1];
  for (std::size_t k = 0; k + 1 < x.size(); ++k) {
    x[k + 1] = x[k] + vx[k] / rate;
    y[k + 1] = y[k] + vy[k] / rate;
  }
  return GazeRecording::from_positions(std::move(x), std::move(y), rate);
}

}  // namespace gazesyn
