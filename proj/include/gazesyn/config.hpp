#pragma once

#include <charconv>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "gazesyn/csv.hpp"
#include "gazesyn/denoiser.hpp"
#include "gazesyn/error.hpp"
#include "gazesyn/events.hpp"
#include "gazesyn/gan.hpp"
#include "gazesyn/pipeline.hpp"
#include "gazesyn/quality.hpp"
#include "gazesyn/simulator.hpp"

namespace gazesyn {

/// Everything a CLI run can be configured with. The plain-text form is one
/// `key = value` per line, `#` starts a comment; see RunConfig::keys() for
/// the accepted names.
struct RunConfig {
  std::uint64_t seed = 1;

  // simulation
  std::size_t subjects = 2;
  std::size_t recordings_per_task = 1;
  std::vector<Task> tasks{Task::HSS, Task::RAN};
  SimulationRun run{};

  // preprocessing and segmentation
  PreprocessOptions preprocess{};
  IdtOptions events{};

  diffusion::DiffusionTrainConfig diffusion{};
  gan::GanConfig gan_fixation = gan::GanConfig::fixation(2);
  gan::GanConfig gan_saccade = gan::GanConfig::saccade(2);

  quality::MetricsConfig metrics{};

  // synthesis
  std::size_t synth_fixations = 40;  // GAN fixations per synthesized scanpath

  struct Key {
    std::string name;
    std::string help;
    std::function<void(const std::string&)> set;
    std::function<std::string()> get;
  };

  std::vector<Key> keys();

  void set(const std::string& key, const std::string& value) {
    for (auto& k : keys())
      if (k.name == key) {
        try {
          k.set(value);
        } catch (const Error&) {
          throw;
        } catch (const std::exception&) {
          throw Error("invalid_config", "bad value '" + value + "' for " + key);
        }
        return;
      }
    throw Error("unknown_config_key", "unknown config key '" + key + "'");
  }

  void validate() const {
    require(subjects >= 1 && recordings_per_task >= 1 && !tasks.empty(), "invalid_config",
            "subjects, recordings_per_task and tasks must be non-empty");
    run.samples();
    diffusion.validate();
    gan_fixation.validate();
    gan_saccade.validate();
    require(synth_fixations >= 1, "invalid_config", "synthesize.fixations must be positive");
  }

  std::string to_text() {
    std::ostringstream out;
    for (auto& k : keys()) out << "# " << k.help << '\n' << k.name << " = " << k.get() << '\n';
    return out.str();
  }
};

namespace detail {

inline std::string fmt(double v) { return csv::format_double(v); }
inline std::string fmt(std::size_t v) { return std::to_string(v); }

inline double to_double(const std::string& s) {
  double v = 0.0;
  if (!csv::try_parse_double(s, v) || !std::isfinite(v)) throw Error("invalid_config", "not a number: '" + s + "'");
  return v;
}

inline std::uint64_t to_uint(const std::string& s) {
  const auto t = csv::trim(s);
  std::uint64_t v = 0;
  const auto res = std::from_chars(t.data(), t.data() + t.size(), v);
  if (t.empty() || res.ec != std::errc() || res.ptr != t.data() + t.size())
    throw Error("invalid_config", "not a non-negative integer: '" + s + "'");
  return v;
}

}  // namespace detail

inline std::vector<RunConfig::Key> RunConfig::keys() {
  using detail::fmt;
  using detail::to_double;
  using detail::to_uint;
  std::vector<Key> k;
  auto real = [&k](std::string name, std::string help, double& ref) {
    k.push_back({std::move(name), std::move(help), [&ref](const std::string& s) { ref = to_double(s); },
                 [&ref] { return fmt(ref); }});
  };
  auto count = [&k](std::string name, std::string help, std::size_t& ref) {
    k.push_back({std::move(name), std::move(help), [&ref](const std::string& s) { ref = to_uint(s); },
                 [&ref] { return fmt(ref); }});
  };
  k.push_back({"seed", "master seed for every random stream", [this](const std::string& s) { seed = to_uint(s); },
               [this] { return std::to_string(seed); }});

  count("simulate.subjects", "number of simulated subjects", subjects);
  count("simulate.recordings_per_task", "recordings per subject and task", recordings_per_task);
  k.push_back({"simulate.tasks", "comma-separated tasks out of HSS, RAN, FIX",
               [this](const std::string& s) {
                 tasks.clear();
                 for (const auto& t : csv::split(s)) tasks.push_back(parse_task(t));
               },
               [this] {
                 std::string out;
                 for (std::size_t i = 0; i < tasks.size(); ++i) out += (i ? "," : "") + std::string(task_name(tasks[i]));
                 return out;
               }});
  real("simulate.duration_s", "recording length in seconds", run.duration_s);
  real("simulate.rate_hz", "recording sample rate", run.rate_hz);
  real("simulate.amplitude_deg", "HSS target amplitude / RAN box half-width", run.amplitude_deg);
  real("simulate.target_period_ms", "time between target steps", run.target_period_ms);
  real("simulate.latency_ms", "saccadic reaction latency", run.latency_ms);
  real("simulate.microsaccade_amplitude_deg", "microsaccade amplitude", run.microsaccade_amplitude_deg);

  k.push_back({"preprocess.savgol_window", "Savitzky-Golay window (odd)",
               [this](const std::string& s) { preprocess.savgol_window = static_cast<int>(to_uint(s)); },
               [this] { return std::to_string(preprocess.savgol_window); }});
  k.push_back({"preprocess.savgol_order", "Savitzky-Golay polynomial order",
               [this](const std::string& s) { preprocess.savgol_order = static_cast<int>(to_uint(s)); },
               [this] { return std::to_string(preprocess.savgol_order); }});
  real("preprocess.intermediate_hz", "identity-removal intermediate rate", preprocess.intermediate_hz);
  count("preprocess.decimation", "block-average factor from recording rate to model rate", preprocess.decimation);

  real("events.dispersion_deg", "I-DT dispersion threshold", events.dispersion_threshold_deg);
  real("events.min_fixation_ms", "I-DT minimum fixation duration", events.min_fixation_duration_ms);

  k.push_back({"diffusion.steps", "diffusion steps T", [this](const std::string& s) {
                 diffusion.steps = static_cast<int>(to_uint(s));
               },
               [this] { return std::to_string(diffusion.steps); }});
  real("diffusion.beta_start", "first beta of the linear schedule", diffusion.beta_start);
  real("diffusion.beta_end", "last beta of the linear schedule", diffusion.beta_end);
  real("diffusion.learning_rate", "Adam learning rate", diffusion.learning_rate);
  count("diffusion.batch_size", "windows per step", diffusion.batch_size);
  count("diffusion.epochs", "training epochs", diffusion.epochs);
  real("diffusion.lambda_id", "identity loss weight", diffusion.lambda_id);
  count("diffusion.channels", "denoiser width", diffusion.channels);
  count("diffusion.window", "window length in model-rate samples", diffusion.window);
  k.push_back({"diffusion.target", "raw or identity_removed",
               [this](const std::string& s) { diffusion.target = diffusion::parse_target(s); },
               [this] { return std::string(diffusion::target_name(diffusion.target)); }});
  k.push_back({"diffusion.loss", "noise loss norm: mse or mae",
               [this](const std::string& s) { diffusion.loss_norm = diffusion::parse_loss_norm(s); },
               [this] { return std::string(diffusion::loss_norm_name(diffusion.loss_norm)); }});

  for (auto* g : {&gan_fixation, &gan_saccade}) {
    const std::string p = g == &gan_fixation ? "gan.fixation." : "gan.saccade.";
    real(p + "segment_ms", "segment length in ms", g->segment_ms);
    count(p + "latent_dim", "latent noise size", g->latent_dim);
    real(p + "learning_rate", "Adam learning rate", g->learning_rate);
    real(p + "beta1", "Adam beta1", g->beta1);
    count(p + "batch_size", "segments per step", g->batch_size);
    count(p + "epochs", "training epochs", g->epochs);
    real(p + "velocity_scale_dps", "velocity units per network unit", g->velocity_scale_dps);
  }

  real("metrics.bin_ms", "stable-bin length", metrics.bin_ms);
  k.push_back({"metrics.precision", "s2s (RMS sample-to-sample) or centroid",
               [this](const std::string& s) { metrics.precision = quality::parse_precision_method(s); },
               [this] { return std::string(quality::precision_method_name(metrics.precision)); }});

  count("synthesize.fixations", "fixations per GAN scanpath", synth_fixations);
  return k;
}

/// Reads a key-value config file on top of `base`.
inline RunConfig load_config(const std::string& path, RunConfig base = {}) {
  std::ifstream in(path);
  require(static_cast<bool>(in), "io_error", "cannot open config " + path);
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const auto t = csv::trim(line);
    if (t.empty()) continue;
    const auto eq = t.find('=');
    require(eq != std::string_view::npos, "parse_error",
            path + ":" + std::to_string(n) + ": expected key = value");
    base.set(std::string(csv::trim(t.substr(0, eq))), std::string(csv::trim(t.substr(eq + 1))));
  }
  base.validate();
  return base;
}

}  // namespace gazesyn
