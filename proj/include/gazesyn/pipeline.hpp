#pragma once

#include <map>
#include <string>
#include <vector>

#include "gazesyn/conditioning.hpp"
#include "gazesyn/denoiser.hpp"
#include "gazesyn/signal.hpp"

namespace gazesyn {

struct PreprocessOptions {
  int savgol_window = 7;
  int savgol_order = 2;
  double intermediate_hz = 25.0;
  ResampleOptions resample{};
  std::size_t decimation = 10;  // recording rate -> model rate
};

/// Velocity views of one recording at the model rate.
struct PreprocessedRecording {
  std::string subject_id;
  std::string task_label;
  VelocitySequence velocity;                  // SGDF velocity, deg/s, model rate
  VelocitySequence identity_removed;          // SGDF of the identity-removed positions, deg/s, model rate
  NormalizedVelocitySequence normalized;      // v
  NormalizedVelocitySequence normalized_id_removed;  // v0
};

/// Invalid samples carry NaN velocity; block averaging would smear that over
/// a whole block, so they are zeroed first (the same value normalization uses).
inline VelocitySequence zero_invalid(VelocitySequence v) {
  for (auto& s : v.vx)
    if (!std::isfinite(s)) s = 0.0;
  for (auto& s : v.vy)
    if (!std::isfinite(s)) s = 0.0;
  return v;
}

inline PreprocessedRecording preprocess_recording(const GazeRecording& rec, const PreprocessOptions& o = {}) {
  PreprocessedRecording out;
  out.subject_id = rec.subject_id;
  out.task_label = rec.task_label;
  const auto v = zero_invalid(sgdf_differentiate(rec, o.savgol_window, o.savgol_order));
  const auto v0 =
      zero_invalid(sgdf_differentiate(remove_identity(rec, o.intermediate_hz, o.resample), o.savgol_window, o.savgol_order));
  out.velocity = block_average(v, o.decimation);
  out.identity_removed = block_average(v0, o.decimation);
  out.normalized = sanitize_and_normalize(out.velocity);
  out.normalized_id_removed = sanitize_and_normalize(out.identity_removed);
  return out;
}

/// Cuts preprocessed recordings into non-overlapping windows of `window`
/// samples and attaches z = phi(v) from the encoder.
inline std::vector<diffusion::DiffusionExample> make_diffusion_examples(const std::vector<PreprocessedRecording>& recs,
                                                                        const Encoder& encoder, std::size_t window) {
  std::vector<diffusion::DiffusionExample> out;
  for (const auto& r : recs) {
    const std::size_t n = r.normalized.size();
    for (std::size_t start = 0; start + window <= n; start += window) {
      NormalizedVelocitySequence v{r.normalized.sample_rate_hz, {}, {}}, v0 = v;
      const auto a = static_cast<std::ptrdiff_t>(start), b = static_cast<std::ptrdiff_t>(start + window);
      v.vx.assign(r.normalized.vx.begin() + a, r.normalized.vx.begin() + b);
      v.vy.assign(r.normalized.vy.begin() + a, r.normalized.vy.begin() + b);
      v0.vx.assign(r.normalized_id_removed.vx.begin() + a, r.normalized_id_removed.vx.begin() + b);
      v0.vy.assign(r.normalized_id_removed.vy.begin() + a, r.normalized_id_removed.vy.begin() + b);
      diffusion::DiffusionExample ex;
      ex.v = diffusion::to_tensor(v);
      ex.v0 = diffusion::to_tensor(v0);
      ex.z = encoder.encode(denormalize(v));
      ex.subject_id = r.subject_id;
      out.push_back(std::move(ex));
    }
  }
  return out;
}

}  // namespace gazesyn
