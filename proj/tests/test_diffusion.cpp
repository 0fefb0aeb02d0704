#include <gtest/gtest.h>

#include <cmath>

#include "gazesyn/denoiser.hpp"
#include "gazesyn/pipeline.hpp"
#include "gazesyn/simulator.hpp"
#include "oracles.hpp"

using namespace gazesyn;
using namespace gazesyn::diffusion;

namespace {

// Points every sequence at one of two orthogonal directions by the sign of its mean x velocity.
class SignEncoder final : public Encoder {
 public:
  UserEmbedding encode(const VelocitySequence& v) const override {
    double m = 0.0;
    for (double x : v.vx) m += x;
    UserEmbedding e;
    e.values.assign(kEmbeddingDim, 0.0);
    e.values[m >= 0.0 ? 0 : 1] = 1.0;
    return e;
  }
  VelocitySequence input_gradient(const VelocitySequence& v, std::span<const double>) const override {
    return VelocitySequence{v.sample_rate_hz, std::vector<double>(v.size()), std::vector<double>(v.size())};
  }
  std::size_t min_length() const override { return 1; }
};

std::vector<DiffusionExample> small_dataset(const Encoder& enc, std::size_t window, std::size_t per_subject) {
  std::vector<PreprocessedRecording> recs;
  for (const auto& p : default_profiles(2, 3)) {
    for (std::size_t k = 0; k < per_subject; ++k) {
      SimulationRun run;
      run.task = k % 2 ? Task::RAN : Task::HSS;
      run.duration_s = static_cast<double>(window) / 100.0;
      run.seed = 50 + k;
      recs.push_back(preprocess_recording(simulate_recording(p, run)));
    }
  }
  return make_diffusion_examples(recs, enc, window);
}

DiffusionTrainConfig quick_config() {
  DiffusionTrainConfig c;
  c.epochs = 3;
  c.batch_size = 4;
  c.channels = 8;
  c.window = 256;
  c.learning_rate = 1e-3;
  return c;
}

}  // namespace

TEST(Schedule, EndpointsAndFirstProduct) {
  const auto s = make_schedule();
  EXPECT_EQ(s.steps, 50);
  EXPECT_DOUBLE_EQ(s.beta_at(1), 1e-4);
  EXPECT_DOUBLE_EQ(s.beta_at(50), 0.05);
  EXPECT_NEAR(s.alpha_bar_at(1), 0.9999, 1e-15);
  EXPECT_EQ(s.alpha_bar_prev(1), 1.0);
}

TEST(Schedule, MatchesProductOracle) {
  const auto s = make_schedule();
  for (int t = 1; t <= 50; ++t) EXPECT_NEAR(s.alpha_bar_at(t), oracle::alpha_bar(t), 1e-12) << t;
  // The product over this linear schedule ends near 0.2797.
  EXPECT_NEAR(s.alpha_bar_at(50), 0.27967, 1e-4);
}

TEST(Schedule, MonotoneAndPosteriorVarianceBounded) {
  const auto s = make_schedule(50, 1e-4, 0.05);
  for (int t = 1; t <= 50; ++t) {
    EXPECT_GT(s.alpha_bar_at(t), 0.0);
    EXPECT_LT(s.alpha_bar_at(t), 1.0);
    if (t > 1) {
      EXPECT_LT(s.alpha_bar_at(t), s.alpha_bar_at(t - 1));
    }
    EXPECT_GE(s.posterior_var_at(t), 0.0);
    EXPECT_LE(s.posterior_var_at(t), s.beta_at(t) + 1e-15);
  }
  EXPECT_EQ(s.posterior_var_at(1), 0.0);
}

TEST(Schedule, InvalidInputsAreRejected) {
  EXPECT_THROW(make_schedule(0), Error);
  EXPECT_THROW(make_schedule(10, 0.1, 0.01), Error);
  EXPECT_THROW(make_schedule().alpha_at(51), Error);
  EXPECT_THROW(make_schedule().alpha_at(0), Error);
}

TEST(ForwardNoise, MomentsMatchClosedForm) {
  const auto s = make_schedule();
  Rng rng(1);
  const std::size_t n = 100000;
  for (int t : {1, 10, 25, 50}) {
    const Tensor v0({n}, 0.5);
    const auto noised = forward_noise(v0, t, s, rng);
    double m = 0.0, v = 0.0;
    for (std::size_t i = 0; i < n; ++i) m += noised.x_t[i];
    m /= static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) v += (noised.x_t[i] - m) * (noised.x_t[i] - m);
    v /= static_cast<double>(n - 1);
    const double ab = oracle::alpha_bar(t);
    EXPECT_NEAR(m, std::sqrt(ab) * 0.5, 0.01 * std::sqrt(ab) * 0.5) << t;
    EXPECT_NEAR(v, 1.0 - ab, 0.01 * (1.0 - ab) + 1e-6) << t;
  }
}

TEST(ForwardNoise, VelocityConvertInvertsForwardNoise) {
  const auto s = make_schedule();
  Rng rng(2);
  for (int trial = 0; trial < 200; ++trial) {
    const int t = static_cast<int>(rng.integer(1, 50));
    const Tensor v0 = Tensor::random_uniform({2, 40}, rng, 1.0);
    const Tensor eps = Tensor::random_normal({2, 40}, rng);
    const Tensor x = forward_noise_with(v0, eps, t, s);
    const Tensor back = velocity_convert(x, eps, t, s);
    for (std::size_t i = 0; i < v0.size(); ++i) ASSERT_NEAR(back[i], v0[i], 1e-12);
  }
}

TEST(ForwardNoise, ZeroNoiseScalesTheSignal) {
  const auto s = make_schedule();
  const Tensor v0({2, 3}, {1, 2, 3, -1, -2, -3});
  const Tensor x = forward_noise_with(v0, Tensor({2, 3}), 50, s);
  for (std::size_t i = 0; i < 6; ++i) EXPECT_NEAR(x[i], std::sqrt(oracle::alpha_bar(50)) * v0[i], 1e-14);
}

TEST(Reverse, PosteriorMeanWithTrueNoiseMatchesClosedForm) {
  const auto s = make_schedule();
  Rng rng(3);
  for (int t = 2; t <= 50; ++t) {
    const Tensor x0 = Tensor::random_uniform({2, 16}, rng, 1.0);
    const Tensor eps = Tensor::random_normal({2, 16}, rng);
    const Tensor xt = forward_noise_with(x0, eps, t, s);
    const Tensor mu = posterior_mean(xt, eps, t, s);
    const double ab = oracle::alpha_bar(t), abp = oracle::alpha_bar(t - 1);
    const double beta = 1.0 - ab / abp, alpha = 1.0 - beta;
    for (std::size_t i = 0; i < mu.size(); ++i) {
      const double expect = std::sqrt(abp) * beta / (1.0 - ab) * x0[i] + std::sqrt(alpha) * (1.0 - abp) / (1.0 - ab) * xt[i];
      ASSERT_NEAR(mu[i], expect, 1e-10) << t;
    }
  }
}

TEST(Reverse, SamplingMatchesHandWrittenLoop) {
  const auto s = make_schedule();
  Rng crng(4);
  DiffusionCondition cond{Tensor::random_uniform({2, 20}, crng, 0.5), {}};
  Denoiser toy = [](const DenoiserInput& in) {
    Tensor e(in.x_t.shape());
    for (std::size_t i = 0; i < e.size(); ++i) e[i] = 0.3 * in.x_t[i] - 0.2 * in.cond_signal[i] + 0.01 * in.t;
    return e;
  };
  Rng a(77);
  const Tensor got = sample(toy, cond, s, a);

  // Same random stream, written out longhand.
  Rng b(77);
  std::vector<double> x(40);
  for (auto& v : x) v = b.normal();
  for (int t = 50; t >= 1; --t) {
    const double ab = oracle::alpha_bar(t), abp = t > 1 ? oracle::alpha_bar(t - 1) : 1.0;
    const double alpha = ab / abp, beta = 1.0 - alpha;
    std::vector<double> next(40);
    for (std::size_t i = 0; i < 40; ++i) {
      const double e = 0.3 * x[i] - 0.2 * cond.signal[i] + 0.01 * t;
      next[i] = (x[i] - beta / std::sqrt(1.0 - ab) * e) / std::sqrt(alpha);
    }
    if (t > 1) {
      const double sigma = std::sqrt((1.0 - abp) / (1.0 - ab) * beta);
      for (auto& v : next) v += sigma * b.normal();
    }
    x = next;
  }
  for (std::size_t i = 0; i < 40; ++i) EXPECT_NEAR(got[i], x[i], 1e-6);
}

TEST(Loss, TotalExamples) {
  SignEncoder enc;
  const Tensor eps({2, 4}, {1, 2, 3, 4, 5, 6, 7, 8});
  const VelocitySequence pos{100.0, {1, 1, 1, 1}, {0, 0, 0, 0}};
  const VelocitySequence neg{100.0, {-1, -1, -1, -1}, {0, 0, 0, 0}};
  auto c = loss_total(eps, eps, pos, pos, enc, 0.1);
  EXPECT_EQ(c.total, 0.0);
  Tensor off = eps;
  for (auto& v : off.values()) v += 1.0;
  c = loss_total(eps, off, pos, pos, enc, 0.1);
  EXPECT_NEAR(c.noise, 1.0, 1e-15);
  EXPECT_NEAR(c.total, 1.0, 1e-15);
  c = loss_total(eps, eps, pos, neg, enc, 0.1);
  EXPECT_NEAR(c.id, 1.0, 1e-15);
  EXPECT_NEAR(c.total, 0.1, 1e-15);
  c = loss_total(eps, off, pos, neg, enc, 0.0);
  EXPECT_EQ(c.total, c.noise);
  EXPECT_NEAR(loss_total(eps, off, pos, pos, enc, 0.0, NoiseLossNorm::MAE).noise, 1.0, 1e-15);
}

TEST(Tensors, ConversionsRoundTrip) {
  NormalizedVelocitySequence v{100.0, {0.1, -0.2, 0.3}, {0.5, 0.0, -0.9}};
  const Tensor t = to_tensor(v);
  EXPECT_EQ(t.shape(), nn::Shape({2, 3}));
  EXPECT_EQ(t.at(1, 2), -0.9);
  const auto back = to_normalized(t, 100.0);
  EXPECT_EQ(back.vx, v.vx);
  EXPECT_EQ(back.vy, v.vy);
  const auto d = denormalize_tensor(t, 100.0);
  EXPECT_NEAR(d.vx[0], denormalize_velocity(0.1), 1e-12);
  // values past the clamp are pulled in instead of throwing
  const auto clamped = denormalize_tensor(Tensor({2, 1}, {1.5, -1.5}), 100.0);
  EXPECT_TRUE(std::isfinite(clamped.vx[0]));
  EXPECT_LT(clamped.vx[0], 1000.0);
}

TEST(Denoiser, GradientsMatchFiniteDifferences) {
  ReferenceEncoder enc;
  auto data = small_dataset(enc, 256, 2);
  ASSERT_GE(data.size(), 4u);
  Rng rng(5);
  ConditionedDenoiser model(4, make_schedule(), rng);
  // move every parameter off its initial value so the zero-initialised output layer carries gradient
  for (auto* net : model.networks())
    for (auto* p : net->parameters())
      for (auto& v : p->values()) v += rng.normal(0.0, 0.05);
  auto cfg = quick_config();
  cfg.lambda_id = 0.5;
  std::vector<const DiffusionExample*> batch{&data[0], &data[3]};
  const std::vector<int> t{7, 33};
  const Tensor eps = Tensor::random_normal({2, 2, 256}, rng);
  auto grads = model.zero_gradients();
  diffusion_batch_loss(model, batch, t, eps, enc, cfg, &grads);

  const double h = 1e-6;
  double worst = 0.0, scale = 0.0;
  auto nets = model.networks();
  for (std::size_t k = 0; k < nets.size(); ++k) {
    auto params = nets[k]->parameters();
    for (std::size_t p = 0; p < params.size(); ++p) {
      Tensor& w = *params[p];
      for (int probe = 0; probe < 6; ++probe) {
        const auto i = static_cast<std::size_t>(rng.integer(0, static_cast<std::int64_t>(w.size()) - 1));
        const double keep = w[i];
        w[i] = keep + h;
        const double up = diffusion_batch_loss(model, batch, t, eps, enc, cfg, nullptr).total;
        w[i] = keep - h;
        const double down = diffusion_batch_loss(model, batch, t, eps, enc, cfg, nullptr).total;
        w[i] = keep;
        const double num = (up - down) / (2 * h), ana = grads.nets[k].tensors[p][i];
        worst = std::max(worst, std::abs(num - ana));
        scale = std::max({scale, std::abs(num), std::abs(ana)});
      }
    }
  }
  EXPECT_LT(worst / scale, 1e-4) << "worst " << worst << " scale " << scale;
}

TEST(Denoiser, UntrainedModelShrinksTowardsCondition) {
  Rng rng(6);
  ConditionedDenoiser model(4, make_schedule(), rng);
  const Tensor v0 = Tensor::random_uniform({2, 64}, rng, 0.2);
  UserEmbedding z;
  z.values.assign(kEmbeddingDim, 1.0);
  const Tensor out = synthesize_window(model, v0, z, rng);
  ASSERT_EQ(out.shape(), v0.shape());
  EXPECT_TRUE(out.all_finite());
}

TEST(Training, LossDecreasesAndLambdaZeroMeansNoiseOnly) {
  ReferenceEncoder enc;
  const auto data = small_dataset(enc, 256, 6);
  auto cfg = quick_config();
  cfg.epochs = 12;
  const auto model = train_diffusion(data, enc, cfg);
  ASSERT_EQ(model.trace.size(), 12u);
  const double early = (model.trace[0].total + model.trace[1].total + model.trace[2].total) / 3.0;
  const double late = (model.trace[9].total + model.trace[10].total + model.trace[11].total) / 3.0;
  EXPECT_LT(late, early);

  cfg.lambda_id = 0.0;
  cfg.epochs = 2;
  const auto plain = train_diffusion(data, enc, cfg);
  for (const auto& e : plain.trace) EXPECT_EQ(e.total, e.noise);
}

TEST(Training, SameSeedSameModel) {
  ReferenceEncoder enc;
  const auto data = small_dataset(enc, 256, 2);
  const auto cfg = quick_config();
  const auto a = train_diffusion(data, enc, cfg);
  const auto b = train_diffusion(data, enc, cfg);
  ASSERT_EQ(a.trace.size(), b.trace.size());
  for (std::size_t i = 0; i < a.trace.size(); ++i) EXPECT_EQ(a.trace[i].total, b.trace[i].total);
  const auto pa = a.denoiser.networks(), pb = b.denoiser.networks();
  for (std::size_t k = 0; k < pa.size(); ++k) {
    const auto wa = pa[k]->parameters(), wb = pb[k]->parameters();
    for (std::size_t p = 0; p < wa.size(); ++p) EXPECT_EQ(*wa[p], *wb[p]);
  }
}

TEST(Training, TwoStepsChangeEveryNetwork) {
  // The output conv starts at zero, so the inner convs only receive gradient from the second step on.
  ReferenceEncoder enc;
  const auto data = small_dataset(enc, 256, 1);
  auto cfg = quick_config();
  cfg.epochs = 2;
  cfg.batch_size = data.size();
  Rng init(cfg.seed);
  Rng init_rng = init.split();
  const ConditionedDenoiser fresh(cfg.channels, make_schedule(), init_rng);
  const auto trained = train_diffusion(data, enc, cfg);
  const auto before = fresh.networks(), after = trained.denoiser.networks();
  for (std::size_t k = 0; k < before.size(); ++k) {
    bool changed = false;
    const auto wa = before[k]->parameters(), wb = after[k]->parameters();
    for (std::size_t p = 0; p < wa.size(); ++p) changed = changed || !(*wa[p] == *wb[p]);
    EXPECT_TRUE(changed) << "network " << k;
  }
}

TEST(Training, SaveLoadReproducesPredictions) {
  ReferenceEncoder enc;
  const auto data = small_dataset(enc, 256, 1);
  const auto model = train_diffusion(data, enc, quick_config());
  oracle::TempDir dir("diff");
  save_diffusion_model(dir.path(), model);
  const auto loaded = load_diffusion_model(dir.path());
  EXPECT_EQ(loaded.config.channels, model.config.channels);
  EXPECT_EQ(loaded.config.lambda_id, model.config.lambda_id);
  Rng r1(9), r2(9);
  EXPECT_EQ(synthesize_window(model.denoiser, data[0].v0, data[0].z, r1),
            synthesize_window(loaded.denoiser, data[0].v0, data[0].z, r2));
}

TEST(Training, RejectsBadConfigAndEmptyData) {
  ReferenceEncoder enc;
  auto cfg = quick_config();
  EXPECT_THROW(train_diffusion({}, enc, cfg), Error);
  const auto data = small_dataset(enc, 256, 1);
  cfg.lambda_id = -1.0;
  EXPECT_THROW(train_diffusion(data, enc, cfg), Error);
}
