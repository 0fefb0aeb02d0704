#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "gazesyn/conditioning.hpp"
#include "gazesyn/csv.hpp"
#include "gazesyn/events.hpp"
#include "gazesyn/signal.hpp"

namespace gazesyn::quality {

namespace detail {

inline double mean(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

}  // namespace detail

/// Planar distance between the bin's mean gaze point and mean target point.
inline double spatial_accuracy(const StableBin& bin) {
  require(bin.has_target(), "no_target", "task has no target signal");
  require(!bin.x_deg.empty(), "invalid_bin", "empty bin");
  const double gx = detail::mean(bin.x_deg), gy = detail::mean(bin.y_deg);
  const double tx = detail::mean(bin.target_x_deg), ty = detail::mean(bin.target_y_deg);
  return std::hypot(gx - tx, gy - ty);
}

enum class PrecisionMethod { SampleToSample, Centroid };

inline const char* precision_method_name(PrecisionMethod m) {
  return m == PrecisionMethod::SampleToSample ? "s2s" : "centroid";
}

inline PrecisionMethod parse_precision_method(const std::string& s) {
  if (s == "s2s") return PrecisionMethod::SampleToSample;
  if (s == "centroid") return PrecisionMethod::Centroid;
  throw Error("invalid_config", "unknown precision method '" + s + "' (expected s2s or centroid)");
}

/// RMS of successive 2-D displacements, or RMS distance to the bin centroid.
inline double spatial_precision(const StableBin& bin, PrecisionMethod method = PrecisionMethod::SampleToSample) {
  const std::size_t n = bin.x_deg.size();
  require(n >= 2, "invalid_bin", "precision needs at least 2 samples");
  double acc = 0.0;
  if (method == PrecisionMethod::SampleToSample) {
    for (std::size_t i = 1; i < n; ++i) {
      const double dx = bin.x_deg[i] - bin.x_deg[i - 1], dy = bin.y_deg[i] - bin.y_deg[i - 1];
      acc += dx * dx + dy * dy;
    }
    return std::sqrt(acc / static_cast<double>(n - 1));
  }
  const double cx = detail::mean(bin.x_deg), cy = detail::mean(bin.y_deg);
  for (std::size_t i = 0; i < n; ++i) {
    const double dx = bin.x_deg[i] - cx, dy = bin.y_deg[i] - cy;
    acc += dx * dx + dy * dy;
  }
  return std::sqrt(acc / static_cast<double>(n));
}

/// p-th percentile (0..100) with linear interpolation between the closest
/// order statistics: rank = p/100 * (n - 1).
inline double percentile(std::vector<double> values, double p) {
  require(!values.empty(), "empty_input", "percentile of an empty set");
  require(p >= 0.0 && p <= 100.0, "invalid_percentile", "percentile must lie in [0, 100]");
  std::sort(values.begin(), values.end());
  const double rank = p / 100.0 * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(rank));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  const double f = rank - static_cast<double>(lo);
  return values[lo] + f * (values[hi] - values[lo]);
}

/// Per subject the E-th percentile of its errors, then the U-th percentile
/// across subjects.
inline double ue_percentile(const std::map<std::string, std::vector<double>>& errors, double u, double e) {
  require(!errors.empty(), "empty_input", "no subjects given");
  std::vector<double> per_subject;
  per_subject.reserve(errors.size());
  for (const auto& [subject, values] : errors) {
    require(!values.empty(), "empty_input", "subject '" + subject + "' has no error values");
    per_subject.push_back(percentile(values, e));
  }
  return percentile(std::move(per_subject), u);
}

struct BinError {
  std::string subject_id;
  std::string task_label;
  std::size_t recording = 0;   // index into the recordings handed to build_report
  std::size_t start_index = 0;
  std::optional<double> accuracy_dva;  // absent for recordings without a target
  double precision_rms_dva = 0.0;
};

struct UECell {
  double u = 50.0;
  double e = 50.0;
  double value = 0.0;
};

struct TaskQuality {
  std::string task;
  std::size_t subjects = 0;
  std::size_t bins = 0;
  std::vector<UECell> accuracy;   // empty when the task has no target signal
  std::vector<UECell> precision;
  std::optional<double> similarity;
};

struct QualityReport {
  std::string label;
  std::vector<TaskQuality> tasks;
};

struct MetricsConfig {
  double bin_ms = 80.0;
  PrecisionMethod precision = PrecisionMethod::SampleToSample;
  std::vector<std::pair<double, double>> ue_cells{{50.0, 50.0}, {95.0, 95.0}};
};

inline std::vector<BinError> bin_errors(const std::vector<GazeRecording>& recordings, const IdtOptions& events,
                                        const MetricsConfig& metrics) {
  std::vector<BinError> out;
  for (std::size_t r = 0; r < recordings.size(); ++r) {
    const auto& rec = recordings[r];
    const auto segs = idt_segment(rec, events);
    for (const auto& bin : extract_stable_bins(segs, rec, metrics.bin_ms)) {
      BinError b;
      b.subject_id = rec.subject_id;
      b.task_label = rec.task_label;
      b.recording = r;
      b.start_index = bin.start_index;
      if (bin.has_target()) b.accuracy_dva = spatial_accuracy(bin);
      b.precision_rms_dva = spatial_precision(bin, metrics.precision);
      out.push_back(std::move(b));
    }
  }
  return out;
}

/// Stable-bin metrics aggregated into U|E tables per task.
inline QualityReport build_report(const std::vector<GazeRecording>& recordings, const IdtOptions& events = {},
                                  const MetricsConfig& metrics = {}, std::string label = "real") {
  QualityReport report;
  report.label = std::move(label);
  const auto errors = bin_errors(recordings, events, metrics);
  std::map<std::string, std::map<std::string, std::vector<double>>> acc, prec;
  std::map<std::string, std::size_t> bins;
  std::map<std::string, bool> has_target;
  for (const auto& rec : recordings) has_target.emplace(rec.task_label, true);
  for (const auto& rec : recordings) has_target[rec.task_label] = has_target[rec.task_label] && rec.has_target();
  for (const auto& b : errors) {
    prec[b.task_label][b.subject_id].push_back(b.precision_rms_dva);
    if (b.accuracy_dva) acc[b.task_label][b.subject_id].push_back(*b.accuracy_dva);
    ++bins[b.task_label];
  }
  for (const auto& [task, targeted] : has_target) {
    TaskQuality tq;
    tq.task = task;
    tq.bins = bins[task];
    tq.subjects = prec[task].size();
    for (const auto& [u, e] : metrics.ue_cells) {
      if (!prec[task].empty()) tq.precision.push_back({u, e, ue_percentile(prec[task], u, e)});
      if (targeted && !acc[task].empty()) tq.accuracy.push_back({u, e, ue_percentile(acc[task], u, e)});
    }
    report.tasks.push_back(std::move(tq));
  }
  return report;
}

/// Cell-wise synth - real for tasks present in both reports.
inline QualityReport delta_report(const QualityReport& real, const QualityReport& synth) {
  QualityReport d;
  d.label = "delta";
  for (const auto& s : synth.tasks) {
    const auto it = std::find_if(real.tasks.begin(), real.tasks.end(), [&](const auto& t) { return t.task == s.task; });
    if (it == real.tasks.end()) continue;
    TaskQuality tq;
    tq.task = s.task;
    tq.subjects = s.subjects;
    tq.bins = s.bins;
    auto diff = [](const std::vector<UECell>& a, const std::vector<UECell>& b) {
      std::vector<UECell> out;
      for (std::size_t i = 0; i < std::min(a.size(), b.size()); ++i) out.push_back({a[i].u, a[i].e, a[i].value - b[i].value});
      return out;
    };
    tq.accuracy = diff(s.accuracy, it->accuracy);
    tq.precision = diff(s.precision, it->precision);
    d.tasks.push_back(std::move(tq));
  }
  return d;
}

struct SimilarityOptions {
  double analysis_rate_hz = 100.0;
};

/// Velocity the encoder sees: SGDF, invalid samples zeroed, block-averaged
/// down to the analysis rate.
inline VelocitySequence analysis_velocity(const GazeRecording& rec, const SimilarityOptions& options = {}) {
  auto v = sgdf_differentiate(rec);
  for (auto* axis : {&v.vx, &v.vy})
    for (auto& s : *axis)
      if (!std::isfinite(s)) s = 0.0;
  const double ratio = rec.sample_rate_hz / options.analysis_rate_hz;
  const auto factor = static_cast<std::size_t>(std::llround(ratio));
  require(factor >= 1 && std::abs(ratio - static_cast<double>(factor)) < 1e-9, "invalid_rate",
          "analysis rate must divide the recording rate");
  return factor == 1 ? v : block_average(v, factor);
}

struct SimilarityPair {
  std::string subject_id;
  std::string task_label;
  double cosine = 0.0;
};

struct SimilarityResult {
  std::vector<SimilarityPair> pairs;
  std::map<std::string, double> per_task;  // mean cosine
};

/// Pairs real and synthetic recordings by (subject, task) in order of
/// appearance and averages cos(phi(v_real), phi(v_synth)) per task.
inline SimilarityResult similarity_report(const std::vector<GazeRecording>& real, const std::vector<GazeRecording>& synth,
                                          const Encoder& encoder, const SimilarityOptions& options = {}) {
  using Key = std::pair<std::string, std::string>;
  std::map<Key, std::vector<std::size_t>> r_idx, s_idx;
  for (std::size_t i = 0; i < real.size(); ++i) r_idx[{real[i].subject_id, real[i].task_label}].push_back(i);
  for (std::size_t i = 0; i < synth.size(); ++i) s_idx[{synth[i].subject_id, synth[i].task_label}].push_back(i);
  std::string unpaired;
  auto note = [&](const Key& k, std::size_t extra, const char* side) {
    unpaired += (unpaired.empty() ? "" : "; ") + std::string(side) + " " + k.first + "/" + k.second + " x" +
                std::to_string(extra);
  };
  for (const auto& [k, v] : r_idx) {
    const auto it = s_idx.find(k);
    const std::size_t m = it == s_idx.end() ? 0 : it->second.size();
    if (v.size() > m) note(k, v.size() - m, "real");
  }
  for (const auto& [k, v] : s_idx) {
    const auto it = r_idx.find(k);
    const std::size_t m = it == r_idx.end() ? 0 : it->second.size();
    if (v.size() > m) note(k, v.size() - m, "synthetic");
  }
  require(unpaired.empty(), "unpaired_recording", "unpaired recordings: " + unpaired);

  SimilarityResult out;
  std::map<std::string, std::pair<double, std::size_t>> sums;
  for (const auto& [k, ri] : r_idx) {
    const auto& si = s_idx.at(k);
    for (std::size_t j = 0; j < ri.size(); ++j) {
      const auto er = encoder.encode(analysis_velocity(real[ri[j]], options));
      const auto es = encoder.encode(analysis_velocity(synth[si[j]], options));
      const double c = cosine_similarity(er, es);
      out.pairs.push_back({k.first, k.second, c});
      auto& s = sums[k.second];
      s.first += c;
      ++s.second;
    }
  }
  for (const auto& [task, s] : sums) out.per_task[task] = s.first / static_cast<double>(s.second);
  return out;
}

inline void attach_similarity(QualityReport& report, const SimilarityResult& sim) {
  for (auto& t : report.tasks) {
    const auto it = sim.per_task.find(t.task);
    if (it != sim.per_task.end()) t.similarity = it->second;
  }
}

// ---------------------------------------------------------------------------
// Emitters

inline std::string ue_label(const UECell& c) {
  return "U" + csv::format_double(c.u) + "|E" + csv::format_double(c.e);
}

/// Long-format CSV: report,task,metric,cell,value.
inline void write_report_csv(std::ostream& out, const std::vector<QualityReport>& reports) {
  out << "report,task,metric,cell,value\n";
  for (const auto& r : reports)
    for (const auto& t : r.tasks) {
      for (const auto& c : t.accuracy)
        out << r.label << ',' << t.task << ",accuracy_dva," << ue_label(c) << ',' << csv::format_double(c.value) << '\n';
      for (const auto& c : t.precision)
        out << r.label << ',' << t.task << ",precision_rms_dva," << ue_label(c) << ',' << csv::format_double(c.value)
            << '\n';
      if (t.similarity)
        out << r.label << ',' << t.task << ",similarity_cosine,mean," << csv::format_double(*t.similarity) << '\n';
    }
}

}  // namespace gazesyn::quality
