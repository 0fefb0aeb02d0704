#pragma once

#include <array>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "gazesyn/conditioning.hpp"
#include "gazesyn/denoiser.hpp"
#include "gazesyn/events.hpp"
#include "gazesyn/nn.hpp"

namespace gazesyn::gan {

using nn::LayerSpec;
using nn::Network;
using nn::Tensor;

struct GanConfig {
  EventKind kind = EventKind::Fixation;
  double segment_ms = 100.0;
  double rate_hz = 1000.0;
  std::size_t n_subjects = 2;
  std::size_t latent_dim = 32;
  std::size_t gen_base_channels = 32;                 // channels after the generator's reshape
  std::array<std::size_t, 3> gen_filters{64, 32, 2};
  std::array<std::size_t, 3> gen_kernels{5, 5, 5};
  std::size_t disc_base_channels = 4;                 // channels after the discriminator's reshape
  std::array<std::size_t, 3> disc_filters{32, 64, 64};
  std::size_t disc_kernel = 5;
  std::size_t disc_stride = 2;
  double learning_rate = 1e-4;
  double beta1 = 0.5;
  std::size_t batch_size = 16;
  std::size_t epochs = 100;
  double velocity_scale_dps = 10.0;   // network units = velocity / scale
  bool zero_init_disc_output = false;
  std::uint64_t seed = 1;

  static GanConfig fixation(std::size_t n_subjects) {
    GanConfig c;
    c.n_subjects = n_subjects;
    return c;
  }
  static GanConfig saccade(std::size_t n_subjects) {
    GanConfig c;
    c.kind = EventKind::Saccade;
    c.segment_ms = 30.0;
    c.n_subjects = n_subjects;
    c.velocity_scale_dps = 300.0;
    return c;
  }

  std::size_t segment_length() const {
    return static_cast<std::size_t>(std::llround(segment_ms * rate_hz / 1000.0));
  }
  std::size_t cond_dim() const { return 4 + n_subjects; }
  /// Length before the three stride-1 transposed convolutions.
  std::size_t base_length() const {
    std::size_t grow = 0;
    for (auto k : gen_kernels) grow += k - 1;
    require(segment_length() > grow, "invalid_config", "segment too short for the generator kernels");
    return segment_length() - grow;
  }
  /// Batch normalization degenerates below four samples per batch.
  bool bypass_batch_norm() const { return batch_size < 4; }

  void validate() const {
    require(segment_ms > 0.0 && rate_hz > 0.0 && n_subjects >= 1 && latent_dim >= 1 && batch_size >= 1 &&
                epochs >= 1 && learning_rate > 0.0 && beta1 >= 0.0 && beta1 < 1.0 && velocity_scale_dps > 0.0,
            "invalid_config", "GAN config values must be positive");
    require(gen_filters[2] == 2, "invalid_config", "generator must end with 2 channels");
    base_length();
  }
};

/// Real segments of one kind, fitted to the configured length, with their
/// conditions and subject indices.
struct LabeledSegmentDataset {
  EventKind kind = EventKind::Fixation;
  std::vector<std::string> subjects;  // index -> subject id
  std::vector<VelocitySequence> segments;
  std::vector<SCGCondition> conditions;
  std::vector<std::size_t> subject_index;

  std::size_t size() const { return segments.size(); }
};

/// Center-crop or symmetrically zero-pad to exactly `len` samples.
inline VelocitySequence fit_segment(const VelocitySequence& v, std::size_t len) {
  VelocitySequence out{v.sample_rate_hz, std::vector<double>(len, 0.0), std::vector<double>(len, 0.0)};
  const std::size_t n = v.size();
  if (n >= len) {
    const std::size_t off = (n - len) / 2;
    for (std::size_t i = 0; i < len; ++i) {
      out.vx[i] = v.vx[off + i];
      out.vy[i] = v.vy[off + i];
    }
  } else {
    const std::size_t off = (len - n) / 2;
    for (std::size_t i = 0; i < n; ++i) {
      out.vx[off + i] = v.vx[i];
      out.vy[off + i] = v.vy[i];
    }
  }
  for (auto& s : out.vx)
    if (!std::isfinite(s)) s = 0.0;
  for (auto& s : out.vy)
    if (!std::isfinite(s)) s = 0.0;
  return out;
}

/// Builds a dataset from event segments of `kind`; subjects are indexed in
/// the order given by `subjects`.
inline LabeledSegmentDataset build_segment_dataset(const std::vector<EventSegment>& events,
                                                   const std::vector<std::string>& subjects, EventKind kind,
                                                   std::size_t length) {
  LabeledSegmentDataset ds;
  ds.kind = kind;
  ds.subjects = subjects;
  std::map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < subjects.size(); ++i) index[subjects[i]] = i;
  for (const auto& e : events) {
    if (e.kind != kind || e.velocity.size() == 0) continue;
    const auto it = index.find(e.subject_id);
    require(it != index.end(), "unknown_subject", "segment from unlisted subject '" + e.subject_id + "'");
    auto seg = fit_segment(e.velocity, length);
    ds.conditions.push_back(scg_concat(ddqfe(seg), one_hot(it->second, subjects.size())));
    ds.segments.push_back(std::move(seg));
    ds.subject_index.push_back(it->second);
  }
  return ds;
}

struct EpochLoss {
  std::size_t epoch = 0;
  double disc = 0.0;
  double gen = 0.0;
};

/// One conditional generator/discriminator pair (FixGAN or SacGAN).
///
/// Generator: [latent, cond] -> dense -> BN -> lrelu -> reshape -> three
/// transposed-conv blocks (the last one linear). Discriminator: [flattened
/// segment, cond] -> dense -> BN -> lrelu -> reshape -> three conv blocks ->
/// flatten -> dense -> sigmoid. The DDQFE part of the condition is divided by
/// a per-feature dataset reference before entering either network.
class ConditionalGan {
 public:
  ConditionalGan() = default;

  ConditionalGan(GanConfig config, Rng& rng) : config_(std::move(config)) {
    config_.validate();
    const auto& c = config_;
    const bool bypass = c.bypass_batch_norm();
    const std::size_t len = c.segment_length(), l0 = c.base_length(), g0 = c.gen_base_channels;
    std::vector<LayerSpec> g{LayerSpec::dense(c.latent_dim + c.cond_dim(), g0 * l0),
                             LayerSpec::batch_norm(g0 * l0, bypass), LayerSpec::leaky_relu(),
                             LayerSpec::reshape({g0, l0})};
    std::size_t ch = g0;
    for (std::size_t b = 0; b < 3; ++b) {
      g.push_back(LayerSpec::conv_transpose1d(ch, c.gen_filters[b], c.gen_kernels[b]));
      ch = c.gen_filters[b];
      if (b < 2) {
        g.push_back(LayerSpec::batch_norm(ch, bypass));
        g.push_back(LayerSpec::leaky_relu());
      }
    }
    generator_ = Network(g, rng);

    const std::size_t d0 = c.disc_base_channels;
    std::vector<LayerSpec> d{LayerSpec::dense(2 * len + c.cond_dim(), d0 * len), LayerSpec::batch_norm(d0 * len, bypass),
                             LayerSpec::leaky_relu(), LayerSpec::reshape({d0, len})};
    ch = d0;
    std::size_t l = len;
    for (std::size_t b = 0; b < 3; ++b) {
      const std::size_t pad = c.disc_kernel / 2;
      d.push_back(LayerSpec::conv1d(ch, c.disc_filters[b], c.disc_kernel, c.disc_stride, pad));
      d.push_back(LayerSpec::leaky_relu());
      ch = c.disc_filters[b];
      require(l + 2 * pad >= c.disc_kernel, "invalid_config", "segment too short for the discriminator");
      l = (l + 2 * pad - c.disc_kernel) / c.disc_stride + 1;
    }
    d.push_back(LayerSpec::flatten());
    d.push_back(LayerSpec::dense(ch * l, 1));
    d.push_back(LayerSpec::sigmoid());
    discriminator_ = Network(d, rng);
    if (c.zero_init_disc_output) {
      auto params = discriminator_.parameters();
      params[params.size() - 2]->fill(0.0);
      params.back()->fill(0.0);
    }
    ddqfe_reference_.fill(1.0);
  }

  const GanConfig& config() const { return config_; }
  Network& generator() { return generator_; }
  const Network& generator() const { return generator_; }
  Network& discriminator() { return discriminator_; }
  const Network& discriminator() const { return discriminator_; }

  const std::array<double, 4>& ddqfe_reference() const { return ddqfe_reference_; }
  void set_ddqfe_reference(const std::array<double, 4>& r) {
    for (double v : r) require(v > 0.0 && std::isfinite(v), "invalid_config", "DDQFE reference must be positive");
    ddqfe_reference_ = r;
  }

  /// Conditions as network input rows (N, 4 + subjects).
  Tensor condition_tensor(std::span<const SCGCondition> conds) const {
    Tensor t({conds.size(), config_.cond_dim()});
    for (std::size_t i = 0; i < conds.size(); ++i) {
      require(conds[i].size() == config_.cond_dim(), "shape_mismatch",
              "condition has " + std::to_string(conds[i].size()) + " entries, expected " +
                  std::to_string(config_.cond_dim()));
      double* row = t.data() + i * config_.cond_dim();
      for (std::size_t k = 0; k < 4; ++k) row[k] = conds[i].ddqfe[k] / ddqfe_reference_[k];
      std::copy(conds[i].one_hot.begin(), conds[i].one_hot.end(), row + 4);
    }
    return t;
  }

  /// Segments (deg/s) to network units, (N, 2, L).
  Tensor segment_tensor(std::span<const VelocitySequence> segs) const {
    const std::size_t len = config_.segment_length();
    Tensor t({segs.size(), 2, len});
    for (std::size_t i = 0; i < segs.size(); ++i) {
      require(segs[i].size() == len, "shape_mismatch",
              "segment has " + std::to_string(segs[i].size()) + " samples, expected " + std::to_string(len));
      for (std::size_t k = 0; k < len; ++k) {
        t[(i * 2) * len + k] = segs[i].vx[k] / config_.velocity_scale_dps;
        t[(i * 2 + 1) * len + k] = segs[i].vy[k] / config_.velocity_scale_dps;
      }
    }
    return t;
  }

  VelocitySequence to_velocity(const Tensor& batch, std::size_t i) const {
    const std::size_t len = config_.segment_length();
    VelocitySequence v{config_.rate_hz, std::vector<double>(len), std::vector<double>(len)};
    for (std::size_t k = 0; k < len; ++k) {
      v.vx[k] = batch[(i * 2) * len + k] * config_.velocity_scale_dps;
      v.vy[k] = batch[(i * 2 + 1) * len + k] * config_.velocity_scale_dps;
    }
    return v;
  }

  /// Generator in network units: noise (N, latent), cond (N, c) -> (N, 2, L).
  Tensor generate_batch(const Tensor& noise, const Tensor& cond, nn::Mode mode = nn::Mode::Eval,
                        nn::Tape* tape = nullptr) const {
    require(noise.rank() == 2 && noise.dim(1) == config_.latent_dim, "shape_mismatch",
            "latent noise must be (N, " + std::to_string(config_.latent_dim) + ")");
    return generator_.forward(nn::concat_features(noise, cond), mode, tape);
  }

  /// Discriminator probabilities (N, 1) for segments in network units.
  Tensor discriminate_batch(const Tensor& segs, const Tensor& cond, nn::Mode mode = nn::Mode::Eval,
                            nn::Tape* tape = nullptr) const {
    const std::size_t len = config_.segment_length();
    require(segs.rank() == 3 && segs.dim(1) == 2 && segs.dim(2) == len, "shape_mismatch",
            "discriminator expects (N, 2, " + std::to_string(len) + "), got " + nn::shape_string(segs.shape()));
    return discriminator_.forward(nn::concat_features(segs.reshaped({segs.dim(0), 2 * len}), cond), mode, tape);
  }

  /// Single-segment generation in deg/s.
  VelocitySequence generate(std::span<const double> noise, const SCGCondition& cond) const {
    Tensor z({1, noise.size()}, std::vector<double>(noise.begin(), noise.end()));
    return to_velocity(generate_batch(z, condition_tensor(std::span<const SCGCondition>(&cond, 1))), 0);
  }

  double discriminate(const VelocitySequence& segment, const SCGCondition& cond) const {
    const auto p = discriminate_batch(segment_tensor(std::span<const VelocitySequence>(&segment, 1)),
                                      condition_tensor(std::span<const SCGCondition>(&cond, 1)));
    return p[0];
  }

 private:
  GanConfig config_;
  Network generator_;
  Network discriminator_;
  std::array<double, 4> ddqfe_reference_{};
};

/// A trained pair plus what synthesis needs: per-subject mean DDQFE.
struct GanModel {
  ConditionalGan gan;
  std::vector<std::string> subjects;
  std::vector<DdqfeFeatures> mean_ddqfe;
  std::vector<EpochLoss> trace;

  SCGCondition subject_condition(std::size_t subject) const {
    require(subject < subjects.size(), "out_of_range", "subject index " + std::to_string(subject) + " out of range");
    return scg_concat(mean_ddqfe[subject], one_hot(subject, subjects.size()));
  }
};

/// Summed BCE over the real and fake halves: L_D = -log D(x|c) - log(1 - D(G(z|c)|c)).
/// Equals 2 ln 2 when the discriminator outputs 0.5 everywhere.
inline double discriminator_loss(const Tensor& p_real, const Tensor& p_fake) {
  return nn::bce_loss(p_real, 1.0).value + nn::bce_loss(p_fake, 0.0).value;
}

/// Non-saturating generator loss -log D(G(z|c)|c).
inline double generator_loss(const Tensor& p_fake) { return nn::bce_loss(p_fake, 1.0).value; }

namespace detail {

inline void batch_of(const LabeledSegmentDataset& ds, std::span<const std::size_t> idx,
                     std::vector<VelocitySequence>& segs, std::vector<SCGCondition>& conds) {
  segs.clear();
  conds.clear();
  for (auto i : idx) {
    segs.push_back(ds.segments[i]);
    conds.push_back(ds.conditions[i]);
  }
}

}  // namespace detail

namespace detail {

/// Real and fake halves stacked into one batch with duplicated conditions, so
/// the discriminator's batch statistics always cover both kinds of input.
inline std::pair<Tensor, Tensor> mixed_batch(const Tensor& real, const Tensor& fake, const Tensor& cond) {
  const std::size_t b = real.dim(0);
  Tensor both({2 * b, real.dim(1), real.dim(2)});
  std::copy(real.data(), real.data() + real.size(), both.data());
  std::copy(fake.data(), fake.data() + fake.size(), both.data() + real.size());
  Tensor cond2({2 * b, cond.dim(1)});
  std::copy(cond.data(), cond.data() + cond.size(), cond2.data());
  std::copy(cond.data(), cond.data() + cond.size(), cond2.data() + cond.size());
  return {std::move(both), std::move(cond2)};
}

}  // namespace detail

/// One discriminator update on a real batch and generated fakes with the
/// same conditions. Returns L_D; the generator is not modified.
inline double discriminator_step(ConditionalGan& gan, nn::Adam& opt, const Tensor& real, const Tensor& cond,
                                 const Tensor& fake) {
  const std::size_t b = real.dim(0);
  const auto [both, cond2] = detail::mixed_batch(real, fake, cond);
  std::vector<double> labels(2 * b, 0.0);
  std::fill(labels.begin(), labels.begin() + static_cast<std::ptrdiff_t>(b), 1.0);

  nn::Tape tape;
  const Tensor p = gan.discriminate_batch(both, cond2, nn::Mode::Train, &tape);
  const auto bce = nn::bce_loss(p, labels);
  // bce is the mean over 2b; L_D is the sum of the two half-means.
  Tensor grad = bce.grad;
  grad *= 2.0;
  auto grads = gan.discriminator().zero_gradients();
  gan.discriminator().backward(tape, grad, grads);
  opt.step(gan.discriminator(), grads);
  gan.discriminator().commit_statistics(tape);
  return 2.0 * bce.value;
}

/// One generator update against the current discriminator. The fakes are
/// judged inside a mixed batch with `real`, exactly as in the discriminator
/// step; only the fake half contributes to L_G. Returns L_G.
inline double generator_step(ConditionalGan& gan, nn::Adam& opt, const Tensor& real, const Tensor& noise,
                             const Tensor& cond) {
  nn::Tape gtape, dtape;
  const Tensor fake = gan.generate_batch(noise, cond, nn::Mode::Train, &gtape);
  const std::size_t b = fake.dim(0), flat = fake.size() / b;
  const auto [both, cond2] = detail::mixed_batch(real, fake, cond);
  const Tensor p = gan.discriminate_batch(both, cond2, nn::Mode::Train, &dtape);
  Tensor p_fake({b, 1}, std::vector<double>(p.data() + b, p.data() + 2 * b));
  const auto loss = nn::bce_loss(p_fake, 1.0);
  Tensor upstream({2 * b, 1});
  std::copy(loss.grad.data(), loss.grad.data() + b, upstream.data() + b);
  auto dgrads = gan.discriminator().zero_gradients();
  const Tensor d_in = gan.discriminator().backward(dtape, upstream, dgrads);
  const std::size_t cols = d_in.dim(1);
  Tensor d_fake(fake.shape());
  for (std::size_t i = 0; i < b; ++i) std::copy_n(d_in.data() + (b + i) * cols, flat, d_fake.data() + i * flat);
  auto ggrads = gan.generator().zero_gradients();
  gan.generator().backward(gtape, d_fake, ggrads);
  opt.step(gan.generator(), ggrads);
  gan.generator().commit_statistics(gtape);
  return loss.value;
}

inline std::array<double, 4> ddqfe_reference_of(const LabeledSegmentDataset& ds) {
  std::array<double, 4> ref{};
  for (const auto& c : ds.conditions)
    for (std::size_t k = 0; k < 4; ++k) ref[k] += c.ddqfe[k];
  for (auto& r : ref) r = std::max(r / static_cast<double>(std::max<std::size_t>(ds.size(), 1)), 1e-6);
  return ref;
}

inline std::vector<DdqfeFeatures> mean_ddqfe_of(const LabeledSegmentDataset& ds) {
  std::vector<DdqfeFeatures> mean(ds.subjects.size(), DdqfeFeatures{});
  std::vector<double> count(ds.subjects.size(), 0.0);
  for (std::size_t i = 0; i < ds.size(); ++i) {
    for (std::size_t k = 0; k < 4; ++k) mean[ds.subject_index[i]][k] += ds.conditions[i].ddqfe[k];
    count[ds.subject_index[i]] += 1.0;
  }
  for (std::size_t s = 0; s < mean.size(); ++s)
    for (auto& v : mean[s]) v = count[s] > 0.0 ? v / count[s] : 0.0;
  return mean;
}

/// Fresh, untrained model for a dataset: DDQFE reference and per-subject means
/// are taken from the data.
inline GanModel make_gan_model(const LabeledSegmentDataset& ds, GanConfig config, Rng& rng) {
  require(ds.size() > 0, "empty_dataset", "GAN training needs at least one segment");
  config.n_subjects = ds.subjects.size();
  config.kind = ds.kind;
  GanModel m{ConditionalGan(config, rng), ds.subjects, mean_ddqfe_of(ds), {}};
  m.gan.set_ddqfe_reference(ddqfe_reference_of(ds));
  return m;
}

/// Alternating conditional adversarial training.
inline GanModel train_gan(const LabeledSegmentDataset& ds, const GanConfig& config,
                          const std::function<void(const EpochLoss&)>& on_epoch = {}) {
  Rng rng(config.seed);
  Rng init_rng = rng.split();
  GanModel model = make_gan_model(ds, config, init_rng);
  auto& gan = model.gan;
  const auto& c = gan.config();
  for (const auto& s : ds.segments)
    require(s.size() == c.segment_length(), "shape_mismatch", "dataset segments do not match the configured length");
  nn::Adam d_opt(nn::AdamOptions{.learning_rate = c.learning_rate, .beta1 = c.beta1});
  nn::Adam g_opt(nn::AdamOptions{.learning_rate = c.learning_rate, .beta1 = c.beta1});
  std::vector<std::size_t> order(ds.size());
  std::vector<VelocitySequence> segs;
  std::vector<SCGCondition> conds;
  for (std::size_t epoch = 1; epoch <= c.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), rng.engine());
    EpochLoss e{epoch, 0.0, 0.0};
    std::size_t steps = 0;
    for (std::size_t start = 0; start < order.size(); start += c.batch_size) {
      const std::size_t stop = std::min(order.size(), start + c.batch_size);
      if (stop - start < 2 && !c.bypass_batch_norm() && steps > 0) break;  // BN needs 2+ samples
      detail::batch_of(ds, std::span<const std::size_t>(order).subspan(start, stop - start), segs, conds);
      const Tensor real = gan.segment_tensor(segs);
      const Tensor cond = gan.condition_tensor(conds);
      const Tensor noise = Tensor::random_normal({segs.size(), c.latent_dim}, rng);
      // Fakes for the discriminator use batch statistics, as in the generator step.
      const Tensor fake = gan.generate_batch(noise, cond, nn::Mode::Train);
      e.disc += discriminator_step(gan, d_opt, real, cond, fake);
      const Tensor noise2 = Tensor::random_normal({segs.size(), c.latent_dim}, rng);
      e.gen += generator_step(gan, g_opt, real, noise2, cond);
      ++steps;
    }
    e.disc /= static_cast<double>(steps);
    e.gen /= static_cast<double>(steps);
    if (!std::isfinite(e.disc) || !std::isfinite(e.gen))
      throw Error("non_finite_loss", "GAN loss is not finite at epoch " + std::to_string(epoch));
    model.trace.push_back(e);
    if (on_epoch) on_epoch(e);
  }
  return model;
}

/// Real/fake classification accuracy of the discriminator (threshold 0.5).
inline double discriminator_accuracy(const ConditionalGan& gan, const Tensor& real, const Tensor& fake,
                                     const Tensor& cond) {
  const Tensor pr = gan.discriminate_batch(real, cond);
  const Tensor pf = gan.discriminate_batch(fake, cond);
  double correct = 0.0;
  for (std::size_t i = 0; i < pr.size(); ++i) correct += pr[i] > 0.5 ? 1.0 : 0.0;
  for (std::size_t i = 0; i < pf.size(); ++i) correct += pf[i] < 0.5 ? 1.0 : 0.0;
  return correct / static_cast<double>(pr.size() + pf.size());
}

/// Generates `count` segments for one subject from its mean DDQFE condition.
inline std::vector<VelocitySequence> generate_segments(const GanModel& model, std::size_t subject, std::size_t count,
                                                       Rng& rng) {
  const auto cond = model.subject_condition(subject);
  const std::vector<SCGCondition> conds(count, cond);
  const Tensor noise = Tensor::random_normal({count, model.gan.config().latent_dim}, rng);
  const Tensor out = model.gan.generate_batch(noise, model.gan.condition_tensor(conds));
  std::vector<VelocitySequence> segs;
  for (std::size_t i = 0; i < count; ++i) segs.push_back(model.gan.to_velocity(out, i));
  return segs;
}

/// n generated fixations interleaved with n - 1 generated saccades,
/// integrated into positions starting at `start`.
inline GazeRecording synthesize_scanpath(const GanModel& fix, const GanModel& sac, std::size_t subject,
                                         std::size_t n_fixations, Rng& rng, Point2 start = {0.0, 0.0}) {
  require(n_fixations >= 1, "invalid_argument", "need at least one fixation");
  require(std::abs(fix.gan.config().rate_hz - sac.gan.config().rate_hz) < 1e-9, "rate_mismatch",
          "fixation and saccade models use different rates");
  const auto fixations = generate_segments(fix, subject, n_fixations, rng);
  const auto saccades = n_fixations > 1 ? generate_segments(sac, subject, n_fixations - 1, rng)
                                        : std::vector<VelocitySequence>{};
  auto rec = assemble_scanpath(fixations, saccades, n_fixations, start);
  rec.subject_id = fix.subjects.at(subject);
  return rec;
}

// ---------------------------------------------------------------------------
// Bundle: manifest.txt plus generator/discriminator weights per model.

namespace detail {

inline std::string join(std::span<const double> v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + csv::format_double(v[i]);
  return s;
}

inline std::vector<double> parse_list(const std::string& s) {
  std::vector<double> out;
  for (const auto& f : csv::split(s)) out.push_back(csv::parse_double(f, 0));
  return out;
}

inline void write_config(std::ostream& m, const std::string& p, const GanModel& model) {
  const auto& c = model.gan.config();
  m << p << "segment_ms=" << csv::format_double(c.segment_ms) << "\n"
    << p << "rate_hz=" << csv::format_double(c.rate_hz) << "\n"
    << p << "latent_dim=" << c.latent_dim << "\n"
    << p << "gen_base_channels=" << c.gen_base_channels << "\n"
    << p << "gen_filters=" << c.gen_filters[0] << "," << c.gen_filters[1] << "," << c.gen_filters[2] << "\n"
    << p << "gen_kernels=" << c.gen_kernels[0] << "," << c.gen_kernels[1] << "," << c.gen_kernels[2] << "\n"
    << p << "disc_base_channels=" << c.disc_base_channels << "\n"
    << p << "disc_filters=" << c.disc_filters[0] << "," << c.disc_filters[1] << "," << c.disc_filters[2] << "\n"
    << p << "disc_kernel=" << c.disc_kernel << "\n"
    << p << "disc_stride=" << c.disc_stride << "\n"
    << p << "batch_size=" << c.batch_size << "\n"
    << p << "velocity_scale_dps=" << csv::format_double(c.velocity_scale_dps) << "\n"
    << p << "ddqfe_reference=" << join(model.gan.ddqfe_reference()) << "\n";
  for (std::size_t s = 0; s < model.subjects.size(); ++s)
    m << p << "mean_ddqfe." << model.subjects[s] << "=" << join(model.mean_ddqfe[s]) << "\n";
}

inline std::array<std::size_t, 3> triple(const std::string& s) {
  const auto v = parse_list(s);
  require(v.size() == 3, "parse_error", "expected three values, got '" + s + "'");
  return {static_cast<std::size_t>(v[0]), static_cast<std::size_t>(v[1]), static_cast<std::size_t>(v[2])};
}

inline GanModel read_model(const std::map<std::string, std::string>& kv, const std::string& p, EventKind kind,
                           const std::vector<std::string>& subjects) {
  using diffusion::manifest_value;
  GanConfig c;
  c.kind = kind;
  c.n_subjects = subjects.size();
  c.segment_ms = std::stod(manifest_value(kv, p + "segment_ms"));
  c.rate_hz = std::stod(manifest_value(kv, p + "rate_hz"));
  c.latent_dim = std::stoul(manifest_value(kv, p + "latent_dim"));
  c.gen_base_channels = std::stoul(manifest_value(kv, p + "gen_base_channels"));
  c.gen_filters = triple(manifest_value(kv, p + "gen_filters"));
  c.gen_kernels = triple(manifest_value(kv, p + "gen_kernels"));
  c.disc_base_channels = std::stoul(manifest_value(kv, p + "disc_base_channels"));
  c.disc_filters = triple(manifest_value(kv, p + "disc_filters"));
  c.disc_kernel = std::stoul(manifest_value(kv, p + "disc_kernel"));
  c.disc_stride = std::stoul(manifest_value(kv, p + "disc_stride"));
  c.batch_size = std::stoul(manifest_value(kv, p + "batch_size"));
  c.velocity_scale_dps = std::stod(manifest_value(kv, p + "velocity_scale_dps"));
  Rng rng(0);
  GanModel m{ConditionalGan(c, rng), subjects, {}, {}};
  const auto ref = parse_list(manifest_value(kv, p + "ddqfe_reference"));
  require(ref.size() == 4, "parse_error", "ddqfe_reference needs 4 values");
  m.gan.set_ddqfe_reference({ref[0], ref[1], ref[2], ref[3]});
  for (const auto& s : subjects) {
    const auto v = parse_list(manifest_value(kv, p + "mean_ddqfe." + s));
    require(v.size() == 4, "parse_error", "mean_ddqfe needs 4 values");
    m.mean_ddqfe.push_back({v[0], v[1], v[2], v[3]});
  }
  return m;
}

}  // namespace detail

inline void save_gan_bundle(const std::filesystem::path& dir, const GanModel& fix, const GanModel& sac) {
  require(fix.subjects == sac.subjects, "invalid_argument", "fixation and saccade models have different subjects");
  std::filesystem::create_directories(dir);
  std::ofstream m(dir / "manifest.txt");
  require(static_cast<bool>(m), "io_error", "cannot write " + (dir / "manifest.txt").string());
  m << "kind=gan\n";
  std::string subjects;
  for (std::size_t i = 0; i < fix.subjects.size(); ++i) subjects += (i ? "," : "") + fix.subjects[i];
  m << "subjects=" << subjects << "\n";
  detail::write_config(m, "fix.", fix);
  detail::write_config(m, "sac.", sac);
  nn::save_weights((dir / "fix_generator.gfw").string(), fix.gan.generator());
  nn::save_weights((dir / "fix_discriminator.gfw").string(), fix.gan.discriminator());
  nn::save_weights((dir / "sac_generator.gfw").string(), sac.gan.generator());
  nn::save_weights((dir / "sac_discriminator.gfw").string(), sac.gan.discriminator());
  std::ofstream trace(dir / "loss_trace.csv");
  trace << "model,epoch,L_D,L_G\n";
  for (const auto* mdl : {&fix, &sac})
    for (const auto& e : mdl->trace)
      trace << (mdl == &fix ? "fix" : "sac") << ',' << e.epoch << ',' << csv::format_double(e.disc) << ','
            << csv::format_double(e.gen) << '\n';
}

inline std::pair<GanModel, GanModel> load_gan_bundle(const std::filesystem::path& dir) {
  const auto kv = diffusion::read_manifest(dir / "manifest.txt");
  require(diffusion::manifest_value(kv, "kind") == "gan", "wrong_model", dir.string() + " is not a GAN bundle");
  const auto subjects = csv::split(diffusion::manifest_value(kv, "subjects"));
  auto fix = detail::read_model(kv, "fix.", EventKind::Fixation, subjects);
  auto sac = detail::read_model(kv, "sac.", EventKind::Saccade, subjects);
  nn::load_weights((dir / "fix_generator.gfw").string(), fix.gan.generator());
  nn::load_weights((dir / "fix_discriminator.gfw").string(), fix.gan.discriminator());
  nn::load_weights((dir / "sac_generator.gfw").string(), sac.gan.generator());
  nn::load_weights((dir / "sac_discriminator.gfw").string(), sac.gan.discriminator());
  return {std::move(fix), std::move(sac)};
}

}  // namespace gazesyn::gan
