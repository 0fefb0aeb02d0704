#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "gazesyn/config.hpp"
#include "gazesyn/conditioning.hpp"
#include "gazesyn/denoiser.hpp"
#include "gazesyn/events.hpp"
#include "gazesyn/gan.hpp"
#include "gazesyn/pipeline.hpp"
#include "gazesyn/quality.hpp"
#include "gazesyn/recording_io.hpp"
#include "gazesyn/simulator.hpp"

// Multi-step operations shared by the command-line tool and the tests.
namespace gazesyn::workflow {

struct NamedRecording {
  std::string name;  // file stem
  GazeRecording recording;
};

/// Seed of the k-th run of a task. It does not depend on the subject, so all
/// subjects see the same RAN target sequence for a given k.
inline std::uint64_t run_seed(std::uint64_t seed, Task task, std::size_t k) {
  return seed * 7919ULL + static_cast<std::uint64_t>(task) * 104729ULL + k;
}

inline std::string recording_name(const std::string& subject, Task task, std::size_t k) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%02zu", k);
  return subject + "_" + task_name(task) + "_" + buf;
}

inline std::vector<NamedRecording> simulate_dataset(const RunConfig& cfg) {
  cfg.validate();
  std::vector<NamedRecording> out;
  for (const auto& p : default_profiles(cfg.subjects, cfg.seed))
    for (Task task : cfg.tasks)
      for (std::size_t k = 0; k < cfg.recordings_per_task; ++k) {
        SimulationRun run = cfg.run;
        run.task = task;
        run.seed = run_seed(cfg.seed, task, k);
        out.push_back({recording_name(p.subject_id, task, k), simulate_recording(p, run)});
      }
  return out;
}

inline void write_dataset(const std::filesystem::path& dir, const std::vector<NamedRecording>& recs) {
  std::filesystem::create_directories(dir);
  for (const auto& r : recs) write_recording_csv((dir / (r.name + ".csv")).string(), r.recording);
}

inline std::vector<NamedRecording> read_dataset(const std::filesystem::path& dir, const RecordingSchema& schema = {}) {
  std::vector<NamedRecording> out;
  for (const auto& p : list_csv_files(dir.string()))
    out.push_back({std::filesystem::path(p).stem().string(), load_recording_csv(p, schema)});
  require(!out.empty(), "io_error", "no recording CSVs in " + dir.string());
  return out;
}

inline std::vector<GazeRecording> recordings_of(const std::vector<NamedRecording>& recs) {
  std::vector<GazeRecording> out;
  for (const auto& r : recs) out.push_back(r.recording);
  return out;
}

// ---------------------------------------------------------------------------
// Preprocessed velocities: <stem>.v.csv (SGDF velocity) and <stem>.v0.csv
// (identity removed), both in deg/s at the model rate.

inline void write_preprocessed(const std::filesystem::path& dir, const std::string& stem, const PreprocessedRecording& p) {
  std::filesystem::create_directories(dir);
  const Metadata meta{{"subject", p.subject_id}, {"task", p.task_label}};
  write_velocity_csv((dir / (stem + ".v.csv")).string(), p.velocity, meta);
  write_velocity_csv((dir / (stem + ".v0.csv")).string(), p.identity_removed, meta);
}

inline std::vector<PreprocessedRecording> read_preprocessed(const std::filesystem::path& dir) {
  std::vector<PreprocessedRecording> out;
  for (const auto& path : list_csv_files(dir.string())) {
    const std::string p = path;
    if (p.size() < 6 || p.compare(p.size() - 6, 6, ".v.csv") != 0) continue;
    const std::string p0 = p.substr(0, p.size() - 6) + ".v0.csv";
    require(std::filesystem::exists(p0), "missing_file", "no identity-removed companion for " + p);
    PreprocessedRecording r;
    const auto meta = read_metadata(meta_path(p));
    r.subject_id = meta.count("subject") ? meta.at("subject") : "";
    r.task_label = meta.count("task") ? meta.at("task") : "";
    r.velocity = load_velocity_csv(p);
    r.identity_removed = load_velocity_csv(p0);
    require(r.velocity.size() == r.identity_removed.size(), "shape_mismatch", p + " and " + p0 + " differ in length");
    r.normalized = sanitize_and_normalize(r.velocity);
    r.normalized_id_removed = sanitize_and_normalize(r.identity_removed);
    out.push_back(std::move(r));
  }
  require(!out.empty(), "io_error", "no preprocessed velocity files in " + dir.string());
  return out;
}

// ---------------------------------------------------------------------------
// Event segments: long CSV segment,subject,task,kind,sample,vx_dps,vy_dps

struct TaskSegment {
  std::string task_label;
  EventSegment segment;
};

inline std::vector<TaskSegment> segment_recordings(const std::vector<GazeRecording>& recs, const IdtOptions& idt) {
  std::vector<TaskSegment> out;
  for (const auto& r : recs)
    for (auto& s : idt_segment(r, idt)) out.push_back({r.task_label, std::move(s)});
  return out;
}

inline void write_segments_csv(const std::string& path, const std::vector<TaskSegment>& segs, EventKind kind) {
  std::ofstream out(path);
  require(static_cast<bool>(out), "io_error", "cannot write " + path);
  out << "segment,subject,task,kind,sample,vx_dps,vy_dps\n";
  std::size_t id = 0;
  double rate = 0.0;
  for (const auto& ts : segs) {
    const auto& s = ts.segment;
    if (s.kind != kind || s.velocity.size() == 0) continue;
    rate = s.velocity.sample_rate_hz;
    for (std::size_t i = 0; i < s.velocity.size(); ++i)
      out << id << ',' << s.subject_id << ',' << ts.task_label << ',' << event_kind_name(kind) << ',' << i << ','
          << csv::format_double(s.velocity.vx[i]) << ',' << csv::format_double(s.velocity.vy[i]) << '\n';
    ++id;
  }
  write_metadata(meta_path(path), {{"rate_hz", csv::format_double(rate)}, {"segments", std::to_string(id)}});
}

inline std::vector<TaskSegment> read_segments_csv(const std::string& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), "io_error", "cannot open " + path);
  const auto header = detail::read_header(in, path);
  std::vector<std::size_t> col;
  for (const char* name : {"segment", "subject", "task", "kind", "sample", "vx_dps", "vy_dps"})
    col.push_back(detail::require_column(header, name, path));
  const auto meta = read_metadata(meta_path(path));
  require(meta.count("rate_hz") > 0, "missing_key", meta_path(path) + ": rate_hz missing");
  const double rate = csv::parse_double(meta.at("rate_hz"), 0);
  std::vector<TaskSegment> out;
  std::string line, current;
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (csv::trim(line).empty()) continue;
    const auto f = csv::split(line);
    require(f.size() == header.size(), "parse_error", path + ": row " + std::to_string(row) + " has wrong field count");
    if (out.empty() || f[col[0]] != current) {
      current = f[col[0]];
      TaskSegment ts;
      ts.task_label = f[col[2]];
      ts.segment.subject_id = f[col[1]];
      require(f[col[3]] == "fixation" || f[col[3]] == "saccade", "parse_error",
              path + ": row " + std::to_string(row) + ": unknown kind '" + f[col[3]] + "'");
      ts.segment.kind = f[col[3]] == "fixation" ? EventKind::Fixation : EventKind::Saccade;
      ts.segment.velocity.sample_rate_hz = rate;
      out.push_back(std::move(ts));
    }
    auto& v = out.back().segment.velocity;
    v.vx.push_back(csv::parse_double(f[col[5]], row));
    v.vy.push_back(csv::parse_double(f[col[6]], row));
    out.back().segment.end_index = v.size();
  }
  return out;
}

inline std::vector<EventSegment> events_of(const std::vector<TaskSegment>& segs) {
  std::vector<EventSegment> out;
  for (const auto& s : segs) out.push_back(s.segment);
  return out;
}

inline std::vector<std::string> subjects_of(const std::vector<EventSegment>& events) {
  std::set<std::string> s;
  for (const auto& e : events) s.insert(e.subject_id);
  return {s.begin(), s.end()};
}

// ---------------------------------------------------------------------------
// Diffusion

struct DiffusionBundle {
  diffusion::DiffusionModel model;
  ReferenceEncoder encoder;
};

/// Calibrates the reference encoder on the training velocities, builds the
/// (v, v0, z) windows and trains the denoiser.
inline DiffusionBundle train_diffusion_on(const std::vector<PreprocessedRecording>& recs,
                                          const diffusion::DiffusionTrainConfig& config,
                                          const std::function<void(const diffusion::EpochLoss&)>& on_epoch = {}) {
  std::vector<VelocitySequence> reference;
  for (const auto& r : recs) reference.push_back(r.velocity);
  const auto encoder = ReferenceEncoder{}.calibrated(reference);
  const auto examples = make_diffusion_examples(recs, encoder, config.window);
  require(!examples.empty(), "sequence_too_short", "no recording is long enough for one diffusion window");
  return {diffusion::train_diffusion(examples, encoder, config, on_epoch), encoder};
}

inline void save_diffusion_bundle(const std::filesystem::path& dir, const DiffusionBundle& b) {
  diffusion::save_diffusion_model(dir, b.model);
  write_encoder_calibration((dir / "encoder.csv").string(), b.encoder);
}

inline DiffusionBundle load_diffusion_bundle(const std::filesystem::path& dir) {
  return {diffusion::load_diffusion_model(dir), load_encoder_calibration((dir / "encoder.csv").string())};
}

/// Velocity sequence held constant over each block of `factor` samples.
inline VelocitySequence hold_upsample(const VelocitySequence& v, std::size_t factor) {
  VelocitySequence out{v.sample_rate_hz * static_cast<double>(factor), {}, {}};
  for (std::size_t i = 0; i < v.size(); ++i)
    for (std::size_t k = 0; k < factor; ++k) {
      out.vx.push_back(v.vx[i]);
      out.vy.push_back(v.vy[i]);
    }
  return out;
}

inline Point2 first_valid_position(const GazeRecording& r) {
  for (std::size_t i = 0; i < r.size(); ++i)
    if (r.valid[i] && std::isfinite(r.x_deg[i]) && std::isfinite(r.y_deg[i])) return {r.x_deg[i], r.y_deg[i]};
  return {0.0, 0.0};
}

/// Synthetic counterpart of a real recording: each full window is generated
/// from the recording's own identity-removed velocity v0 and embedding z
/// (or `z_override`), then integrated back to positions at the recording
/// rate. The target channels of the real recording are carried over.
inline GazeRecording synthesize_diffusion_like(const DiffusionBundle& b, const GazeRecording& real,
                                               const PreprocessOptions& options, Rng& rng,
                                               const UserEmbedding* z_override = nullptr) {
  const auto pre = preprocess_recording(real, options);
  const auto windows = make_diffusion_examples({pre}, b.encoder, b.model.config.window);
  require(!windows.empty(), "sequence_too_short", "recording shorter than one diffusion window");
  VelocitySequence v{b.model.config.model_rate_hz, {}, {}};
  for (const auto& w : windows) {
    const auto vh = diffusion::denormalize_tensor(
        diffusion::synthesize_window(b.model.denoiser, w.v0, z_override ? *z_override : w.z, rng),
        b.model.config.model_rate_hz);
    v.vx.insert(v.vx.end(), vh.vx.begin(), vh.vx.end());
    v.vy.insert(v.vy.end(), vh.vy.begin(), vh.vy.end());
  }
  auto rec = assemble_scanpath({hold_upsample(v, options.decimation)}, {}, 1, first_valid_position(real));
  rec.subject_id = real.subject_id;
  rec.task_label = real.task_label;
  if (real.has_target()) {
    const std::size_t n = std::min(rec.size(), real.size());
    rec.target_x_deg.assign(real.target_x_deg.begin(), real.target_x_deg.begin() + static_cast<std::ptrdiff_t>(n));
    rec.target_y_deg.assign(real.target_y_deg.begin(), real.target_y_deg.begin() + static_cast<std::ptrdiff_t>(n));
    rec.target_x_deg.resize(rec.size(), real.target_x_deg.back());
    rec.target_y_deg.resize(rec.size(), real.target_y_deg.back());
  }
  return rec;
}

// ---------------------------------------------------------------------------
// GAN

inline std::pair<gan::GanModel, gan::GanModel> train_gan_pair(const std::vector<EventSegment>& events,
                                                              const gan::GanConfig& fix_config,
                                                              const gan::GanConfig& sac_config,
                                                              const std::function<void(const char*, const gan::EpochLoss&)>& on_epoch = {}) {
  const auto subjects = subjects_of(events);
  require(!subjects.empty(), "empty_dataset", "no segments to train on");
  auto fc = fix_config;
  auto sc = sac_config;
  fc.n_subjects = sc.n_subjects = subjects.size();
  const auto fds = gan::build_segment_dataset(events, subjects, EventKind::Fixation, fc.segment_length());
  const auto sds = gan::build_segment_dataset(events, subjects, EventKind::Saccade, sc.segment_length());
  require(fds.size() > 0 && sds.size() > 0, "empty_dataset", "need at least one fixation and one saccade segment");
  auto fix = gan::train_gan(fds, fc, [&](const gan::EpochLoss& e) {
    if (on_epoch) on_epoch("fixation", e);
  });
  auto sac = gan::train_gan(sds, sc, [&](const gan::EpochLoss& e) {
    if (on_epoch) on_epoch("saccade", e);
  });
  return {std::move(fix), std::move(sac)};
}

/// GAN scanpath for the subject of `real`, labelled with its task and cut
/// to its length when longer. No target is attached.
inline GazeRecording synthesize_gan_like(const gan::GanModel& fix, const gan::GanModel& sac, const GazeRecording& real,
                                         std::size_t n_fixations, Rng& rng) {
  const auto it = std::find(fix.subjects.begin(), fix.subjects.end(), real.subject_id);
  require(it != fix.subjects.end(), "unknown_subject", "subject '" + real.subject_id + "' is not in the GAN bundle");
  auto rec = gan::synthesize_scanpath(fix, sac, static_cast<std::size_t>(it - fix.subjects.begin()), n_fixations, rng,
                                      first_valid_position(real));
  if (rec.size() > real.size()) {
    const auto n = static_cast<std::ptrdiff_t>(real.size());
    for (auto* v : {&rec.t_ms, &rec.x_deg, &rec.y_deg}) v->erase(v->begin() + n, v->end());
    rec.valid.erase(rec.valid.begin() + n, rec.valid.end());
  }
  rec.task_label = real.task_label;
  return rec;
}

// ---------------------------------------------------------------------------
// Evaluation

/// Real, synthetic and (synthetic - real) reports; similarity is attached to
/// the synthetic and delta reports.
inline std::vector<quality::QualityReport> evaluate(const std::vector<GazeRecording>& real,
                                                    const std::vector<GazeRecording>& synth, const Encoder& encoder,
                                                    const IdtOptions& idt, const quality::MetricsConfig& metrics) {
  auto r = quality::build_report(real, idt, metrics, "real");
  auto s = quality::build_report(synth, idt, metrics, "synth");
  const auto sim = quality::similarity_report(real, synth, encoder);
  quality::attach_similarity(s, sim);
  auto d = quality::delta_report(r, s);
  d.label = "delta";
  quality::attach_similarity(d, sim);
  return {r, s, d};
}

/// Encoder standardized on the analysis velocities of `recs`.
inline ReferenceEncoder encoder_calibrated_on(const std::vector<GazeRecording>& recs) {
  std::vector<VelocitySequence> ref;
  for (const auto& r : recs) ref.push_back(quality::analysis_velocity(r));
  if (ref.size() < 2) return ReferenceEncoder{};
  return ReferenceEncoder{}.calibrated(ref);
}

}  // namespace gazesyn::workflow
