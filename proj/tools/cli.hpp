#pragma once

#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "gazesyn/workflow.hpp"

namespace gazesyn::cli {

namespace fs = std::filesystem;

struct Options {
  std::optional<std::uint64_t> seed;
  std::string config_path;
  bool verbose = false;
  std::string schema;

  // simulate
  std::optional<std::size_t> subjects, recordings;
  std::vector<std::string> tasks;
  std::optional<double> duration_s;
  // shared paths
  std::string in, out, real, synth, model_dir, json_path, encoder_path, embeddings;
  // training overrides
  std::optional<std::size_t> epochs;
  std::optional<double> learning_rate, lambda_id;
  std::optional<std::size_t> window;
  // synthesize
  std::string model = "diffusion";
  std::string subject = "all";
  std::string task;
  std::optional<std::size_t> fixations;
};

class Logger {
 public:
  explicit Logger(bool on) : on_(on) {}
  template <class... A>
  void operator()(const A&... parts) const {
    if (!on_) return;
    std::ostringstream s;
    (s << ... << parts);
    std::clog << "info: " << s.str() << '\n';
  }

 private:
  bool on_;
};

/// Config file first, then explicit flags on top.
inline RunConfig effective_config(const Options& o) {
  RunConfig cfg = o.config_path.empty() ? RunConfig{} : load_config(o.config_path);
  if (o.seed) cfg.seed = *o.seed;
  if (o.subjects) cfg.subjects = *o.subjects;
  if (o.recordings) cfg.recordings_per_task = *o.recordings;
  if (!o.tasks.empty()) {
    cfg.tasks.clear();
    for (const auto& t : o.tasks)
      for (const auto& part : csv::split(t)) cfg.tasks.push_back(parse_task(part));
  }
  if (o.duration_s) cfg.run.duration_s = *o.duration_s;
  if (o.window) cfg.diffusion.window = *o.window;
  if (o.lambda_id) cfg.diffusion.lambda_id = *o.lambda_id;
  cfg.diffusion.seed = cfg.seed;
  cfg.gan_fixation.seed = cfg.seed;
  cfg.gan_saccade.seed = cfg.seed + 1;
  cfg.validate();
  return cfg;
}

inline void require_path(const std::string& value, const char* flag) {
  require(!value.empty(), "missing_argument", std::string(flag) + " is required");
}

inline int run_simulate(const Options& o, const Logger& log) {
  require_path(o.out, "--out");
  const auto cfg = effective_config(o);
  const auto recs = workflow::simulate_dataset(cfg);
  workflow::write_dataset(o.out, recs);
  log("wrote ", recs.size(), " recordings to ", o.out);
  return 0;
}

inline int run_preprocess(const Options& o, const Logger& log) {
  require_path(o.in, "--in");
  require_path(o.out, "--out");
  const auto cfg = effective_config(o);
  const auto recs = workflow::read_dataset(o.in, RecordingSchema::parse(o.schema));
  for (const auto& r : recs) workflow::write_preprocessed(o.out, r.name, preprocess_recording(r.recording, cfg.preprocess));
  log("preprocessed ", recs.size(), " recordings into ", o.out);
  return 0;
}

inline int run_segment(const Options& o, const Logger& log) {
  require_path(o.in, "--in");
  require_path(o.out, "--out");
  const auto cfg = effective_config(o);
  const auto recs = workflow::read_dataset(o.in, RecordingSchema::parse(o.schema));
  const auto segs = workflow::segment_recordings(workflow::recordings_of(recs), cfg.events);
  fs::create_directories(o.out);
  workflow::write_segments_csv((fs::path(o.out) / "fixations.csv").string(), segs, EventKind::Fixation);
  workflow::write_segments_csv((fs::path(o.out) / "saccades.csv").string(), segs, EventKind::Saccade);
  log("segmented ", recs.size(), " recordings into ", segs.size(), " events");
  return 0;
}

inline int run_train_diffusion(const Options& o, const Logger& log) {
  require_path(o.in, "--in");
  require_path(o.out, "--out");
  auto cfg = effective_config(o);
  if (o.epochs) cfg.diffusion.epochs = *o.epochs;
  if (o.learning_rate) cfg.diffusion.learning_rate = *o.learning_rate;
  const auto recs = workflow::read_preprocessed(o.in);
  const auto bundle = workflow::train_diffusion_on(recs, cfg.diffusion, [&](const diffusion::EpochLoss& e) {
    log("diffusion epoch ", e.epoch, " L=", e.total, " L_noise=", e.noise, " L_id=", e.id);
  });
  workflow::save_diffusion_bundle(o.out, bundle);
  log("saved diffusion model to ", o.out);
  return 0;
}

inline int run_train_gan(const Options& o, const Logger& log) {
  require_path(o.in, "--in");
  require_path(o.out, "--out");
  auto cfg = effective_config(o);
  for (auto* g : {&cfg.gan_fixation, &cfg.gan_saccade}) {
    if (o.epochs) g->epochs = *o.epochs;
    if (o.learning_rate) g->learning_rate = *o.learning_rate;
  }
  auto events = workflow::events_of(workflow::read_segments_csv((fs::path(o.in) / "fixations.csv").string()));
  const auto sac = workflow::events_of(workflow::read_segments_csv((fs::path(o.in) / "saccades.csv").string()));
  events.insert(events.end(), sac.begin(), sac.end());
  const auto [fix_model, sac_model] =
      workflow::train_gan_pair(events, cfg.gan_fixation, cfg.gan_saccade, [&](const char* kind, const gan::EpochLoss& e) {
        log(kind, " gan epoch ", e.epoch, " L_D=", e.disc, " L_G=", e.gen);
      });
  gan::save_gan_bundle(o.out, fix_model, sac_model);
  log("saved GAN bundle to ", o.out);
  return 0;
}

inline int run_synthesize(const Options& o, const Logger& log) {
  require_path(o.in, "--in");
  require_path(o.out, "--out");
  require_path(o.model_dir, "--model-dir");
  require(o.model == "diffusion" || o.model == "gan", "invalid_argument", "--model must be diffusion or gan");
  const auto cfg = effective_config(o);
  const auto real = workflow::read_dataset(o.in, RecordingSchema::parse(o.schema));
  std::vector<workflow::NamedRecording> chosen;
  for (const auto& r : real)
    if ((o.subject == "all" || r.recording.subject_id == o.subject) && (o.task.empty() || r.recording.task_label == o.task))
      chosen.push_back(r);
  require(!chosen.empty(), "unknown_subject", "no recordings in " + o.in + " match subject '" + o.subject + "'");

  Rng rng(cfg.seed);
  std::vector<workflow::NamedRecording> out;
  if (o.model == "diffusion") {
    const auto bundle = workflow::load_diffusion_bundle(o.model_dir);
    std::map<std::string, UserEmbedding> external;
    if (!o.embeddings.empty()) external = load_external_embeddings(o.embeddings);
    for (const auto& r : chosen) {
      Rng local = rng.split();
      const auto it = external.find(r.recording.subject_id);
      const UserEmbedding* z = it == external.end() ? nullptr : &it->second;
      out.push_back({r.name, workflow::synthesize_diffusion_like(bundle, r.recording, cfg.preprocess, local, z)});
    }
  } else {
    const auto [fix, sac] = gan::load_gan_bundle(o.model_dir);
    const std::size_t n_fix = o.fixations ? *o.fixations : cfg.synth_fixations;
    for (const auto& r : chosen) {
      Rng local = rng.split();
      out.push_back({r.name, workflow::synthesize_gan_like(fix, sac, r.recording, n_fix, local)});
    }
  }
  workflow::write_dataset(o.out, out);
  log("synthesized ", out.size(), " recordings with the ", o.model, " model into ", o.out);
  return 0;
}

inline nlohmann::json report_json(const std::vector<quality::QualityReport>& reports) {
  nlohmann::json j = nlohmann::json::array();
  for (const auto& r : reports) {
    nlohmann::json jr{{"label", r.label}, {"tasks", nlohmann::json::array()}};
    for (const auto& t : r.tasks) {
      nlohmann::json jt{{"task", t.task}, {"subjects", t.subjects}, {"bins", t.bins}};
      auto cells = [](const std::vector<quality::UECell>& cs) {
        nlohmann::json a = nlohmann::json::array();
        for (const auto& c : cs) a.push_back({{"U", c.u}, {"E", c.e}, {"value", c.value}});
        return a;
      };
      jt["accuracy_dva"] = cells(t.accuracy);
      jt["precision_rms_dva"] = cells(t.precision);
      jt["similarity_cosine"] = t.similarity ? nlohmann::json(*t.similarity) : nlohmann::json(nullptr);
      jr["tasks"].push_back(jt);
    }
    j.push_back(jr);
  }
  return j;
}

inline int run_evaluate(const Options& o, const Logger& log) {
  require_path(o.real, "--real");
  require_path(o.synth, "--synth");
  const auto cfg = effective_config(o);
  const auto schema = RecordingSchema::parse(o.schema);
  const auto real = workflow::recordings_of(workflow::read_dataset(o.real, schema));
  const auto synth = workflow::recordings_of(workflow::read_dataset(o.synth, schema));
  const auto encoder =
      o.encoder_path.empty() ? workflow::encoder_calibrated_on(real) : load_encoder_calibration(o.encoder_path);
  const auto reports = workflow::evaluate(real, synth, encoder, cfg.events, cfg.metrics);
  if (o.out.empty()) {
    quality::write_report_csv(std::cout, reports);
  } else {
    std::ofstream f(o.out);
    require(static_cast<bool>(f), "io_error", "cannot write " + o.out);
    quality::write_report_csv(f, reports);
  }
  if (!o.json_path.empty()) {
    std::ofstream f(o.json_path);
    require(static_cast<bool>(f), "io_error", "cannot write " + o.json_path);
    f << report_json(reports).dump(2) << '\n';
  }
  log("evaluated ", real.size(), " real against ", synth.size(), " synthetic recordings");
  return 0;
}

// ---------------------------------------------------------------------------
// report: markdown tables and an SVG bar chart from an evaluate CSV

struct ReportRow {
  std::string report, task, metric, cell;
  double value = 0.0;
};

inline std::vector<ReportRow> read_report_csv(const std::string& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), "io_error", "cannot open " + path);
  std::string line;
  std::getline(in, line);
  require(csv::trim(line) == "report,task,metric,cell,value", "invalid_schema", path + ": not a quality report CSV");
  std::vector<ReportRow> rows;
  std::size_t n = 1;
  while (std::getline(in, line)) {
    ++n;
    if (csv::trim(line).empty()) continue;
    const auto f = csv::split(line);
    require(f.size() == 5, "invalid_schema", path + ": row " + std::to_string(n) + " needs 5 fields");
    rows.push_back({f[0], f[1], f[2], f[3], csv::parse_double(f[4], n)});
  }
  return rows;
}

inline std::string render_markdown(const std::vector<ReportRow>& rows) {
  std::ostringstream md;
  md << "# Quality report\n";
  std::vector<std::string> reports;
  for (const auto& r : rows)
    if (std::find(reports.begin(), reports.end(), r.report) == reports.end()) reports.push_back(r.report);
  for (const auto& rep : reports) {
    md << "\n## " << rep << "\n\n| task | metric | cell | value |\n|---|---|---|---|\n";
    for (const auto& r : rows)
      if (r.report == rep)
        md << "| " << r.task << " | " << r.metric << " | " << r.cell << " | " << csv::format_double(r.value) << " |\n";
  }
  return md.str();
}

/// Grouped bars of one metric per (task, cell), one colour per report.
inline std::string render_svg(const std::vector<ReportRow>& rows, const std::string& metric) {
  std::vector<std::string> groups, reports;
  std::map<std::pair<std::string, std::string>, double> value;
  for (const auto& r : rows) {
    if (r.metric != metric || r.report == "delta") continue;
    const auto g = r.task + " " + r.cell;
    if (std::find(groups.begin(), groups.end(), g) == groups.end()) groups.push_back(g);
    if (std::find(reports.begin(), reports.end(), r.report) == reports.end()) reports.push_back(r.report);
    value[{g, r.report}] = r.value;
  }
  double vmax = 0.0;
  for (const auto& [k, v] : value) vmax = std::max(vmax, std::abs(v));
  if (vmax <= 0.0) vmax = 1.0;
  const double bar = 18.0, gap = 14.0, height = 200.0, left = 50.0, top = 30.0;
  const double group_w = bar * static_cast<double>(std::max<std::size_t>(reports.size(), 1)) + gap;
  const double width = left + group_w * static_cast<double>(groups.size()) + 20.0;
  const char* colours[] = {"#4477aa", "#ee6677", "#228833", "#ccbb44"};
  std::ostringstream s;
  s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height + top + 60
    << "\" font-family=\"sans-serif\" font-size=\"10\">\n";
  s << "<text x=\"" << left << "\" y=\"16\" font-size=\"12\">" << metric << "</text>\n";
  s << "<line x1=\"" << left << "\" y1=\"" << top + height << "\" x2=\"" << width - 10 << "\" y2=\"" << top + height
    << "\" stroke=\"black\"/>\n";
  for (std::size_t gi = 0; gi < groups.size(); ++gi) {
    const double gx = left + group_w * static_cast<double>(gi);
    for (std::size_t ri = 0; ri < reports.size(); ++ri) {
      const auto it = value.find({groups[gi], reports[ri]});
      if (it == value.end()) continue;
      const double h = height * std::abs(it->second) / vmax;
      s << "<rect x=\"" << gx + bar * static_cast<double>(ri) << "\" y=\"" << top + height - h << "\" width=\"" << bar - 2
        << "\" height=\"" << h << "\" fill=\"" << colours[ri % 4] << "\"><title>" << reports[ri] << ' ' << groups[gi]
        << ": " << csv::format_double(it->second) << "</title></rect>\n";
    }
    s << "<text x=\"" << gx << "\" y=\"" << top + height + 14 << "\">" << groups[gi] << "</text>\n";
  }
  for (std::size_t ri = 0; ri < reports.size(); ++ri)
    s << "<text x=\"" << left + 80.0 * static_cast<double>(ri) << "\" y=\"" << top + height + 40 << "\" fill=\""
      << colours[ri % 4] << "\">" << reports[ri] << "</text>\n";
  s << "</svg>\n";
  return s.str();
}

inline int run_report(const Options& o, const Logger& log) {
  require_path(o.in, "--in");
  require_path(o.out, "--out");
  const auto rows = read_report_csv(o.in);
  fs::create_directories(o.out);
  auto write = [&](const std::string& name, const std::string& text) {
    std::ofstream f(fs::path(o.out) / name);
    require(static_cast<bool>(f), "io_error", "cannot write " + (fs::path(o.out) / name).string());
    f << text;
  };
  write("report.md", render_markdown(rows));
  write("accuracy.svg", render_svg(rows, "accuracy_dva"));
  write("precision.svg", render_svg(rows, "precision_rms_dva"));
  log("rendered ", rows.size(), " rows into ", o.out);
  return 0;
}

inline std::string one_line(std::string s) {
  std::replace(s.begin(), s.end(), '\n', ' ');
  return s;
}

inline int cli_main(int argc, char** argv) {
  CLI::App app{"Eye-movement synthesis toolkit: simulate, preprocess, train, synthesize, evaluate"};
  app.require_subcommand(1);
  app.fallthrough();  // global flags may follow the subcommand
  Options o;
  app.add_option("--seed", o.seed, "master seed");
  app.add_option("--config", o.config_path, "key = value config file")->check(CLI::ExistingFile);
  app.add_flag("--verbose,-v", o.verbose, "progress on stderr");

  auto* sim = app.add_subcommand("simulate", "emit a simulated dataset");
  sim->add_option("--subjects", o.subjects, "number of subjects");
  sim->add_option("--task", o.tasks, "tasks (HSS, RAN, FIX); repeat or comma-separate")->delimiter(',');
  sim->add_option("--recordings", o.recordings, "recordings per subject and task");
  sim->add_option("--duration", o.duration_s, "seconds per recording");
  sim->add_option("--out", o.out, "output directory")->required();

  auto* pre = app.add_subcommand("preprocess", "SGDF + identity removal; emits velocity CSVs");
  pre->add_option("--in", o.in, "recording directory")->required();
  pre->add_option("--out", o.out, "output directory")->required();
  pre->add_option("--schema", o.schema, "column map, e.g. x=gaze_x,y=gaze_y");

  auto* seg = app.add_subcommand("segment", "I-DT fixation/saccade datasets");
  seg->add_option("--in", o.in, "recording directory")->required();
  seg->add_option("--out", o.out, "output directory")->required();
  seg->add_option("--schema", o.schema, "column map");

  auto* td = app.add_subcommand("train-diffusion", "train the conditioned diffusion model");
  td->add_option("--in", o.in, "preprocess output directory")->required();
  td->add_option("--out", o.out, "model directory")->required();
  td->add_option("--epochs", o.epochs, "training epochs");
  td->add_option("--lr", o.learning_rate, "learning rate");
  td->add_option("--lambda", o.lambda_id, "identity loss weight");
  td->add_option("--window", o.window, "window length in model-rate samples");

  auto* tg = app.add_subcommand("train-gan", "train the fixation and saccade GANs");
  tg->add_option("--in", o.in, "segment output directory")->required();
  tg->add_option("--out", o.out, "model directory")->required();
  tg->add_option("--epochs", o.epochs, "training epochs for both GANs");
  tg->add_option("--lr", o.learning_rate, "learning rate for both GANs");

  auto* sy = app.add_subcommand("synthesize", "synthesize counterparts of real recordings");
  sy->add_option("--model", o.model, "diffusion or gan")->check(CLI::IsMember({"diffusion", "gan"}));
  sy->add_option("--model-dir", o.model_dir, "trained model directory")->required();
  sy->add_option("--subject", o.subject, "subject id or 'all'");
  sy->add_option("--task", o.task, "only recordings of this task");
  sy->add_option("--in", o.in, "real recording directory")->required();
  sy->add_option("--out", o.out, "output directory")->required();
  sy->add_option("--fixations", o.fixations, "GAN: fixations per scanpath");
  sy->add_option("--embeddings", o.embeddings, "diffusion: external subject embeddings CSV");

  auto* ev = app.add_subcommand("evaluate", "quality report of synthetic against real recordings");
  ev->add_option("--real", o.real, "real recording directory")->required();
  ev->add_option("--synth", o.synth, "synthetic recording directory")->required();
  ev->add_option("--out", o.out, "report CSV (default stdout)");
  ev->add_option("--json", o.json_path, "also write the report as JSON");
  ev->add_option("--encoder", o.encoder_path, "encoder calibration CSV (default: calibrate on --real)");
  ev->add_option("--schema", o.schema, "column map");

  auto* rp = app.add_subcommand("report", "render a report CSV as markdown tables and SVG charts");
  rp->add_option("--in", o.in, "report CSV")->required();
  rp->add_option("--out", o.out, "output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    std::cout << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    std::cout << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    std::cout << app.help();
    std::cerr << "error: usage: " << e.what() << '\n';
    return 2;
  }

  const Logger log(o.verbose);
  try {
    if (sim->parsed()) return run_simulate(o, log);
    if (pre->parsed()) return run_preprocess(o, log);
    if (seg->parsed()) return run_segment(o, log);
    if (td->parsed()) return run_train_diffusion(o, log);
    if (tg->parsed()) return run_train_gan(o, log);
    if (sy->parsed()) return run_synthesize(o, log);
    if (ev->parsed()) return run_evaluate(o, log);
    if (rp->parsed()) return run_report(o, log);
  } catch (const Error& e) {
    std::cerr << "error: " << e.code() << ": " << one_line(e.what()) << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: internal: " << one_line(e.what()) << '\n';
    return 1;
  }
  return 1;
}

}  // namespace gazesyn::cli
