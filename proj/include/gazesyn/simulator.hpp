#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <cstdint>
#include <string>
#include <vector>

#include "gazesyn/random.hpp"
#include "gazesyn/signal.hpp"

namespace gazesyn {

enum class Task { HSS, RAN, FIX };

inline const char* task_name(Task t) {
  switch (t) {
    case Task::HSS: return "HSS";
    case Task::RAN: return "RAN";
    case Task::FIX: return "FIX";
  }
  return "?";
}

inline Task parse_task(const std::string& s) {
  if (s == "HSS") return Task::HSS;
  if (s == "RAN") return Task::RAN;
  if (s == "FIX") return Task::FIX;
  throw Error("invalid_task", "unknown task '" + s + "' (expected HSS, RAN or FIX)");
}

/// Oculomotor parameters of one synthetic subject.
struct SimulatorProfile {
  std::string subject_id = "S0";
  double fixation_noise_std = 0.02;      // dva, per-sample jitter
  double drift_rate = 0.5;               // dva/s
  double saccade_peak_velocity_scale = 1.0;
  double microsaccade_rate = 1.0;        // per second
  std::uint64_t seed = 0;

  void validate() const {
    require(fixation_noise_std >= 0.0 && drift_rate >= 0.0 && saccade_peak_velocity_scale > 0.0 &&
                microsaccade_rate >= 0.0,
            "invalid_profile", "simulator profile values must be non-negative (velocity scale positive)");
  }
};

struct SimulationRun {
  Task task = Task::HSS;
  double duration_s = 5.0;
  double rate_hz = 1000.0;
  double amplitude_deg = 15.0;      // HSS: +-amplitude; RAN: half-width of the target box
  double target_period_ms = 1000.0;
  double latency_ms = 200.0;
  double microsaccade_amplitude_deg = 0.3;
  std::uint64_t seed = 0;           // drives the RAN target sequence

  std::size_t samples() const {
    const double n = duration_s * rate_hz;
    require(duration_s > 0.0 && rate_hz > 0.0 && std::abs(n - std::round(n)) < 1e-9, "invalid_config",
            "duration * rate must be a positive integer");
    return static_cast<std::size_t>(std::llround(n));
  }
};

/// Main-sequence duration of a saccade, divided by the velocity multiplier.
inline double saccade_duration_ms(double amplitude_deg, double velocity_scale) {
  return (2.2 * amplitude_deg + 21.0) / velocity_scale;
}

/// Minimum-jerk position fraction at normalized time tau in [0, 1].
inline double minimum_jerk(double tau) {
  tau = std::clamp(tau, 0.0, 1.0);
  const double t3 = tau * tau * tau;
  return t3 * (10.0 - 15.0 * tau + 6.0 * tau * tau);
}

/// Target position over time for a task; steps happen every period.
inline std::vector<std::array<double, 2>> target_schedule(const SimulationRun& run) {
  const std::size_t n = run.samples();
  Rng rng(run.seed ^ 0x52414E00ULL);
  std::vector<std::array<double, 2>> out(n);
  const auto period = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(run.target_period_ms * run.rate_hz / 1000.0)));
  std::array<double, 2> current{0.0, 0.0};
  for (std::size_t i = 0; i < n; ++i) {
    if (i % period == 0) {
      const std::size_t k = i / period;
      switch (run.task) {
        case Task::HSS: current = {k % 2 == 0 ? -run.amplitude_deg : run.amplitude_deg, 0.0}; break;
        case Task::RAN:
          current = {rng.uniform(-run.amplitude_deg, run.amplitude_deg), rng.uniform(-run.amplitude_deg, run.amplitude_deg)};
          break;
        case Task::FIX: current = {0.0, 0.0}; break;
      }
    }
    out[i] = current;
  }
  return out;
}

/// Gaze follows the target with a reaction latency via minimum-jerk saccades;
/// fixations carry linear drift, Poisson microsaccades and white jitter.
/// With zero noise, drift and microsaccade rate the FIX task yields gaze
/// identical to the target.
inline GazeRecording simulate_recording(const SimulatorProfile& profile, const SimulationRun& run) {
  profile.validate();
  const std::size_t n = run.samples();
  const auto target = target_schedule(run);
  Rng rng(profile.seed * 0x9E3779B97F4A7C15ULL + run.seed + static_cast<std::uint64_t>(run.task));
  const double dt_ms = 1000.0 / run.rate_hz;
  const auto latency = static_cast<std::size_t>(std::llround(run.latency_ms / dt_ms));

  std::vector<double> x(n), y(n);
  std::array<double, 2> eye = target[0];   // current fixation centre
  std::array<double, 2> from = eye, to = eye;
  double move_start = -1.0, move_dur = 0.0;  // in samples; move_start < 0 means no saccade in flight
  std::array<double, 2> drift_dir{0.0, 0.0};
  auto new_drift = [&] {
    const double a = rng.uniform(0.0, 2.0 * std::numbers::pi);
    drift_dir = {std::cos(a), std::sin(a)};
  };
  new_drift();
  const double micro_p = profile.microsaccade_rate * dt_ms / 1000.0;

  for (std::size_t i = 0; i < n; ++i) {
    // Reactive saccade: target changed `latency` samples ago.
    if (i >= latency && i - latency > 0 && target[i - latency] != target[i - latency - 1]) {
      const auto& dest = target[i - latency];
      from = eye;
      to = dest;
      const double amp = std::hypot(to[0] - from[0], to[1] - from[1]);
      move_start = static_cast<double>(i);
      move_dur = saccade_duration_ms(amp, profile.saccade_peak_velocity_scale) / dt_ms;
      new_drift();
    } else if (move_start < 0.0 && micro_p > 0.0 && rng.uniform() < micro_p) {
      const double a = rng.uniform(0.0, 2.0 * std::numbers::pi);
      from = eye;
      // Microsaccades pull back towards the target so drift cannot wander off.
      const auto& tg = target[i];
      const double back_x = tg[0] - eye[0], back_y = tg[1] - eye[1];
      const double amp = run.microsaccade_amplitude_deg;
      to = {eye[0] + amp * std::cos(a) + 0.5 * back_x, eye[1] + amp * std::sin(a) + 0.5 * back_y};
      move_start = static_cast<double>(i);
      move_dur = saccade_duration_ms(std::hypot(to[0] - from[0], to[1] - from[1]), profile.saccade_peak_velocity_scale) /
                 dt_ms;
    }

    if (move_start >= 0.0) {
      const double tau = (static_cast<double>(i) - move_start) / move_dur;
      const double s = minimum_jerk(tau);
      eye = {from[0] + (to[0] - from[0]) * s, from[1] + (to[1] - from[1]) * s};
      if (tau >= 1.0) {
        eye = to;
        move_start = -1.0;
      }
    } else {
      eye[0] += drift_dir[0] * profile.drift_rate * dt_ms / 1000.0;
      eye[1] += drift_dir[1] * profile.drift_rate * dt_ms / 1000.0;
    }
    x[i] = eye[0] + (profile.fixation_noise_std > 0.0 ? rng.normal(0.0, profile.fixation_noise_std) : 0.0);
    y[i] = eye[1] + (profile.fixation_noise_std > 0.0 ? rng.normal(0.0, profile.fixation_noise_std) : 0.0);
  }

  auto rec = GazeRecording::from_positions(std::move(x), std::move(y), run.rate_hz, profile.subject_id,
                                           task_name(run.task));
  rec.target_x_deg.resize(n);
  rec.target_y_deg.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    rec.target_x_deg[i] = target[i][0];
    rec.target_y_deg[i] = target[i][1];
  }
  return rec;
}

/// Deterministic, well-separated profiles for `count` synthetic subjects.
/// Subjects range from a quiet, fast profile to a noisy, slow one,
/// with seeded perturbations on top.
inline std::vector<SimulatorProfile> default_profiles(std::size_t count, std::uint64_t seed) {
  std::vector<SimulatorProfile> out;
  Rng rng(seed ^ 0x50524F46ULL);
  for (std::size_t k = 0; k < count; ++k) {
    SimulatorProfile p;
    p.subject_id = "S" + std::to_string(k + 1);
    const double level = count == 1 ? 0.0 : static_cast<double>(k) / static_cast<double>(count - 1);
    const double jitter = rng.uniform(0.9, 1.1);
    p.fixation_noise_std = (0.01 + 0.05 * level) * jitter;
    p.drift_rate = (0.3 + 1.2 * level) * rng.uniform(0.9, 1.1);
    p.saccade_peak_velocity_scale = (1.25 - 0.45 * level) * rng.uniform(0.95, 1.05);
    p.microsaccade_rate = (0.5 + 1.5 * level) * rng.uniform(0.9, 1.1);
    p.seed = seed * 1000003ULL + k + 1;
    out.push_back(p);
  }
  return out;
}

}  // namespace gazesyn
