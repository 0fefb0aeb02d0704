#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "gazesyn/events.hpp"
#include "gazesyn/gan.hpp"
#include "gazesyn/simulator.hpp"
#include "oracles.hpp"

using namespace gazesyn;
using gan::ConditionalGan;
using gan::GanConfig;
using nn::Network;
using nn::Tensor;

namespace {

// Two simulated subjects, segmented with default I-DT thresholds.
std::vector<EventSegment> toy_events(std::size_t recordings = 12) {
  std::vector<EventSegment> events;
  for (const auto& p : default_profiles(2, 5)) {
    for (std::size_t k = 0; k < recordings; ++k) {
      SimulationRun run;
      run.task = k % 2 ? Task::RAN : Task::HSS;
      run.seed = 100 + k;
      auto rec = simulate_recording(p, run);
      rec.subject_id = p.subject_id;
      for (auto& e : idt_segment(rec)) events.push_back(std::move(e));
    }
  }
  return events;
}

const gan::LabeledSegmentDataset& fixation_set() {
  static const auto ds = gan::build_segment_dataset(toy_events(), {"S1", "S2"}, EventKind::Fixation, 100);
  return ds;
}

const gan::LabeledSegmentDataset& saccade_set() {
  static const auto ds = gan::build_segment_dataset(toy_events(), {"S1", "S2"}, EventKind::Saccade, 30);
  return ds;
}

SCGCondition some_condition(std::size_t subject, std::size_t n = 2) {
  return scg_concat(DdqfeFeatures{0.5, 0.2, 0.1, 0.3}, one_hot(subject, n));
}

std::vector<double> latent(Rng& rng, std::size_t n = 32) {
  std::vector<double> z(n);
  for (auto& v : z) v = rng.normal();
  return z;
}

std::vector<Tensor> snapshot(const Network& net) {
  std::vector<Tensor> out;
  for (const auto* p : net.parameters()) out.push_back(*p);
  return out;
}

bool same_parameters(const std::vector<Tensor>& a, const Network& net) {
  const auto b = net.parameters();
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t k = 0; k < a[i].size(); ++k)
      if (a[i][k] != (*b[i])[k]) return false;
  return true;
}

double max_abs_diff(const VelocitySequence& a, const VelocitySequence& b) {
  double d = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i)
    d = std::max({d, std::abs(a.vx[i] - b.vx[i]), std::abs(a.vy[i] - b.vy[i])});
  return d;
}

GanConfig quick(GanConfig c, std::size_t epochs) {
  c.epochs = epochs;
  c.seed = 3;
  return c;
}

}  // namespace

TEST(GanConfig, SegmentLengthsAtThousandHertz) {
  EXPECT_EQ(GanConfig::fixation(2).segment_length(), 100u);
  EXPECT_EQ(GanConfig::saccade(2).segment_length(), 30u);
  EXPECT_EQ(GanConfig::fixation(3).cond_dim(), 7u);
}

TEST(GanConfig, RejectsBadValues) {
  auto c = GanConfig::fixation(2);
  c.learning_rate = 0.0;
  EXPECT_THROW(c.validate(), Error);
  c = GanConfig::fixation(2);
  c.gen_filters[2] = 3;
  EXPECT_THROW(c.validate(), Error);
  c = GanConfig::saccade(2);
  c.segment_ms = 10.0;  // shorter than the generator kernels can grow
  EXPECT_THROW(c.validate(), Error);
}

TEST(Generate, FixationShape) {
  Rng rng(1);
  const ConditionalGan g(GanConfig::fixation(2), rng);
  const auto v = g.generate(latent(rng), some_condition(0));
  EXPECT_EQ(v.vx.size(), 100u);
  EXPECT_EQ(v.vy.size(), 100u);
  EXPECT_EQ(v.sample_rate_hz, 1000.0);
}

TEST(Generate, SaccadeShape) {
  Rng rng(2);
  const ConditionalGan g(GanConfig::saccade(2), rng);
  const auto v = g.generate(latent(rng), some_condition(1));
  EXPECT_EQ(v.vx.size(), 30u);
  EXPECT_EQ(v.vy.size(), 30u);
}

TEST(Generate, ShapeHoldsForRandomInputsAndBatches) {
  Rng rng(3);
  const ConditionalGan g(GanConfig::fixation(4), rng);
  for (std::size_t n : {1u, 3u, 7u}) {
    const Tensor z = Tensor::random_normal({n, 32}, rng);
    std::vector<SCGCondition> conds;
    for (std::size_t i = 0; i < n; ++i) conds.push_back(some_condition(i % 4, 4));
    const Tensor out = g.generate_batch(z, g.condition_tensor(conds));
    ASSERT_EQ(out.rank(), 3u);
    EXPECT_EQ(out.dim(0), n);
    EXPECT_EQ(out.dim(1), 2u);
    EXPECT_EQ(out.dim(2), 100u);
    for (std::size_t i = 0; i < out.size(); ++i) ASSERT_TRUE(std::isfinite(out[i]));
  }
}

TEST(Generate, Deterministic) {
  Rng rng(4);
  const ConditionalGan g(GanConfig::fixation(2), rng);
  const auto z = latent(rng);
  const auto a = g.generate(z, some_condition(0));
  const auto b = g.generate(z, some_condition(0));
  EXPECT_EQ(a.vx, b.vx);
  EXPECT_EQ(a.vy, b.vy);

  Rng r1(9), r2(9);
  const ConditionalGan g1(GanConfig::fixation(2), r1), g2(GanConfig::fixation(2), r2);
  EXPECT_EQ(g1.generate(z, some_condition(1)).vx, g2.generate(z, some_condition(1)).vx);
}

TEST(Generate, DimensionMismatchThrows) {
  Rng rng(5);
  const ConditionalGan g(GanConfig::fixation(2), rng);
  try {
    g.generate(latent(rng, 31), some_condition(0));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), "shape_mismatch");
  }
  try {
    g.generate(latent(rng), some_condition(0, 3));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), "shape_mismatch");
  }
}

TEST(Discriminate, OutputsProbabilities) {
  Rng rng(6);
  const ConditionalGan g(GanConfig::fixation(2), rng);
  for (int trial = 0; trial < 20; ++trial) {
    VelocitySequence v{1000.0, std::vector<double>(100), std::vector<double>(100)};
    for (std::size_t i = 0; i < 100; ++i) {
      v.vx[i] = rng.normal(0.0, 20.0);
      v.vy[i] = rng.normal(0.0, 20.0);
    }
    const double p = g.discriminate(v, some_condition(trial % 2));
    EXPECT_GT(p, 0.0);
    EXPECT_LT(p, 1.0);
  }
}

TEST(Discriminate, ZeroInitialisedOutputGivesOneHalf) {
  Rng rng(7);
  auto c = GanConfig::fixation(2);
  c.zero_init_disc_output = true;
  const ConditionalGan g(c, rng);
  VelocitySequence v{1000.0, std::vector<double>(100, 3.0), std::vector<double>(100, -1.0)};
  EXPECT_EQ(g.discriminate(v, some_condition(0)), 0.5);
}

TEST(Discriminate, LengthMismatchThrows) {
  Rng rng(8);
  const ConditionalGan g(GanConfig::fixation(2), rng);
  VelocitySequence v{1000.0, std::vector<double>(99), std::vector<double>(99)};
  try {
    g.discriminate(v, some_condition(0));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), "shape_mismatch");
  }
}

TEST(Discriminate, UntrainedIsNearChance) {
  const auto& ds = fixation_set();
  ASSERT_GE(ds.size(), 100u);
  Rng rng(10);
  auto model = gan::make_gan_model(ds, GanConfig::fixation(2), rng);
  std::vector<VelocitySequence> segs(ds.segments.begin(), ds.segments.begin() + 100);
  std::vector<SCGCondition> conds(ds.conditions.begin(), ds.conditions.begin() + 100);
  const Tensor cond = model.gan.condition_tensor(conds);
  const Tensor fake = model.gan.generate_batch(Tensor::random_normal({100, 32}, rng), cond);
  const double acc = gan::discriminator_accuracy(model.gan, model.gan.segment_tensor(segs), fake, cond);
  EXPECT_GE(acc, 0.3);
  EXPECT_LE(acc, 0.7);
}

TEST(Losses, UninformativeDiscriminatorGivesTwoLnTwo) {
  const Tensor half({8, 1}, std::vector<double>(8, 0.5));
  EXPECT_NEAR(gan::discriminator_loss(half, half), 2.0 * std::numbers::ln2, 1e-12);
  EXPECT_NEAR(gan::generator_loss(half), std::numbers::ln2, 1e-12);
}

TEST(Losses, NonNegative) {
  Rng rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    Tensor a({4, 1}), b({4, 1});
    for (std::size_t i = 0; i < 4; ++i) {
      a[i] = rng.uniform(0.0, 1.0);
      b[i] = rng.uniform(0.0, 1.0);
    }
    EXPECT_GE(gan::discriminator_loss(a, b), 0.0);
    EXPECT_GE(gan::generator_loss(b), 0.0);
  }
}

TEST(Training, DiscriminatorStepAtZeroInitReportsTwoLnTwo) {
  const auto& ds = fixation_set();
  auto c = GanConfig::fixation(2);
  c.zero_init_disc_output = true;
  Rng rng(12);
  auto model = gan::make_gan_model(ds, c, rng);
  std::vector<VelocitySequence> segs(ds.segments.begin(), ds.segments.begin() + 16);
  std::vector<SCGCondition> conds(ds.conditions.begin(), ds.conditions.begin() + 16);
  const Tensor real = model.gan.segment_tensor(segs);
  const Tensor cond = model.gan.condition_tensor(conds);
  const Tensor fake = model.gan.generate_batch(Tensor::random_normal({16, 32}, rng), cond);
  nn::Adam opt;
  EXPECT_NEAR(gan::discriminator_step(model.gan, opt, real, cond, fake), 2.0 * std::numbers::ln2, 1e-12);
}

TEST(Training, StepsOnlyTouchTheirOwnNetwork) {
  const auto& ds = fixation_set();
  Rng rng(13);
  auto model = gan::make_gan_model(ds, GanConfig::fixation(2), rng);
  auto& g = model.gan;
  std::vector<VelocitySequence> segs(ds.segments.begin(), ds.segments.begin() + 16);
  std::vector<SCGCondition> conds(ds.conditions.begin(), ds.conditions.begin() + 16);
  const Tensor real = g.segment_tensor(segs);
  const Tensor cond = g.condition_tensor(conds);
  nn::Adam d_opt(nn::AdamOptions{.learning_rate = 1e-4, .beta1 = 0.5});
  nn::Adam g_opt(nn::AdamOptions{.learning_rate = 1e-4, .beta1 = 0.5});

  auto gen_before = snapshot(g.generator());
  auto disc_before = snapshot(g.discriminator());
  const Tensor fake = g.generate_batch(Tensor::random_normal({16, 32}, rng), cond, nn::Mode::Train);
  const double ld = gan::discriminator_step(g, d_opt, real, cond, fake);
  EXPECT_TRUE(std::isfinite(ld));
  EXPECT_GE(ld, 0.0);
  EXPECT_TRUE(same_parameters(gen_before, g.generator()));
  EXPECT_FALSE(same_parameters(disc_before, g.discriminator()));

  gen_before = snapshot(g.generator());
  disc_before = snapshot(g.discriminator());
  const double lg = gan::generator_step(g, g_opt, real, Tensor::random_normal({16, 32}, rng), cond);
  EXPECT_TRUE(std::isfinite(lg));
  EXPECT_GE(lg, 0.0);
  EXPECT_TRUE(same_parameters(disc_before, g.discriminator()));
  EXPECT_FALSE(same_parameters(gen_before, g.generator()));
}

TEST(Training, DiscriminatorAloneLearnsToSeparate) {
  const auto& ds = fixation_set();
  Rng rng(14);
  auto model = gan::make_gan_model(ds, GanConfig::fixation(2), rng);
  auto& g = model.gan;
  nn::Adam opt(nn::AdamOptions{.learning_rate = 1e-4, .beta1 = 0.5});
  std::vector<VelocitySequence> segs;
  std::vector<SCGCondition> conds;
  for (int step = 0; step < 200; ++step) {
    segs.clear();
    conds.clear();
    for (int k = 0; k < 16; ++k) {
      const auto i = static_cast<std::size_t>(rng.integer(0, static_cast<std::int64_t>(ds.size()) - 1));
      segs.push_back(ds.segments[i]);
      conds.push_back(ds.conditions[i]);
    }
    const Tensor cond = g.condition_tensor(conds);
    // The generator stays frozen at its random initialisation.
    const Tensor fake = g.generate_batch(Tensor::random_normal({16, 32}, rng), cond);
    gan::discriminator_step(g, opt, g.segment_tensor(segs), cond, fake);
  }
  const std::size_t n = std::min<std::size_t>(100, ds.size());
  segs.assign(ds.segments.begin(), ds.segments.begin() + static_cast<std::ptrdiff_t>(n));
  conds.assign(ds.conditions.begin(), ds.conditions.begin() + static_cast<std::ptrdiff_t>(n));
  const Tensor cond = g.condition_tensor(conds);
  const Tensor fake = g.generate_batch(Tensor::random_normal({n, 32}, rng), cond);
  EXPECT_GT(gan::discriminator_accuracy(g, g.segment_tensor(segs), fake, cond), 0.9);
}

TEST(Training, DeterministicPerSeedWithFiniteTraces) {
  const auto& ds = saccade_set();
  ASSERT_GT(ds.size(), 4u);
  const auto c = quick(GanConfig::saccade(2), 3);
  std::size_t calls = 0;
  const auto a = gan::train_gan(ds, c, [&](const gan::EpochLoss&) { ++calls; });
  const auto b = gan::train_gan(ds, c);
  EXPECT_EQ(calls, 3u);
  ASSERT_EQ(a.trace.size(), 3u);
  for (std::size_t e = 0; e < 3; ++e) {
    EXPECT_EQ(a.trace[e].epoch, e + 1);
    EXPECT_EQ(a.trace[e].disc, b.trace[e].disc);
    EXPECT_EQ(a.trace[e].gen, b.trace[e].gen);
    EXPECT_GE(a.trace[e].disc, 0.0);
    EXPECT_GE(a.trace[e].gen, 0.0);
  }
  Rng r1(1), r2(1);
  EXPECT_EQ(gan::generate_segments(a, 0, 2, r1)[1].vx, gan::generate_segments(b, 0, 2, r2)[1].vx);
}

TEST(Training, EmptyDatasetIsRejected) {
  gan::LabeledSegmentDataset ds;
  ds.subjects = {"S1"};
  EXPECT_THROW(gan::train_gan(ds, GanConfig::fixation(1)), Error);
}

TEST(Training, ConditioningPathIsLive) {
  const auto model = gan::train_gan(fixation_set(), quick(GanConfig::fixation(2), 2));
  Rng rng(15);
  const auto z = latent(rng);
  const auto a = model.gan.generate(z, model.subject_condition(0));
  auto swapped = model.subject_condition(0);
  swapped.one_hot = one_hot(1, 2);
  const auto b = model.gan.generate(z, swapped);
  EXPECT_GT(max_abs_diff(a, b), 0.0);
}

TEST(Dataset, FitSegmentCropsAndPadsAroundTheCentre) {
  VelocitySequence v{1000.0, {1, 2, 3, 4, 5}, {5, 4, 3, 2, 1}};
  const auto crop = gan::fit_segment(v, 3);
  EXPECT_EQ(crop.vx, (std::vector<double>{2, 3, 4}));
  const auto pad = gan::fit_segment(v, 8);
  EXPECT_EQ(pad.vx, (std::vector<double>{0, 1, 2, 3, 4, 5, 0, 0}));
  v.vx[2] = std::nan("");
  EXPECT_EQ(gan::fit_segment(v, 5).vx[2], 0.0);
}

TEST(Dataset, BuildsOneKindWithConditions) {
  const auto& ds = fixation_set();
  ASSERT_GT(ds.size(), 0u);
  EXPECT_EQ(ds.conditions.size(), ds.size());
  bool saw[2] = {false, false};
  for (std::size_t i = 0; i < ds.size(); ++i) {
    EXPECT_EQ(ds.segments[i].size(), 100u);
    EXPECT_EQ(ds.conditions[i].size(), 6u);
    EXPECT_EQ(ds.conditions[i].one_hot[ds.subject_index[i]], 1.0);
    saw[ds.subject_index[i]] = true;
  }
  EXPECT_TRUE(saw[0] && saw[1]);
}

TEST(Dataset, UnknownSubjectIsAnError) {
  try {
    gan::build_segment_dataset(toy_events(1), {"S1"}, EventKind::Fixation, 100);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), "unknown_subject");
  }
}

namespace {

struct Pair {
  gan::GanModel fix, sac;
};

const Pair& tiny_pair() {
  static const Pair p{gan::train_gan(fixation_set(), quick(GanConfig::fixation(2), 1)),
                      gan::train_gan(saccade_set(), quick(GanConfig::saccade(2), 1))};
  return p;
}

}  // namespace

TEST(Scanpath, SingleFixationLastsOneSegment) {
  Rng rng(16);
  const auto rec = gan::synthesize_scanpath(tiny_pair().fix, tiny_pair().sac, 0, 1, rng);
  EXPECT_EQ(rec.size(), 100u);
  EXPECT_EQ(rec.subject_id, "S1");
}

TEST(Scanpath, ThreeFixationsGiveThreeHundredSixtySamples) {
  Rng rng(17);
  const auto rec = gan::synthesize_scanpath(tiny_pair().fix, tiny_pair().sac, 1, 3, rng, {2.0, -1.0});
  EXPECT_EQ(rec.size(), 360u);
  EXPECT_EQ(rec.subject_id, "S2");
  EXPECT_NO_THROW(rec.validate());
}

TEST(Scanpath, RejectsZeroFixationsAndBadSubject) {
  Rng rng(18);
  EXPECT_THROW(gan::synthesize_scanpath(tiny_pair().fix, tiny_pair().sac, 0, 0, rng), Error);
  EXPECT_THROW(gan::synthesize_scanpath(tiny_pair().fix, tiny_pair().sac, 2, 1, rng), Error);
}

TEST(Bundle, RoundTripReproducesGeneration) {
  oracle::TempDir dir("gan_bundle");
  const auto& p = tiny_pair();
  gan::save_gan_bundle(dir.path(), p.fix, p.sac);
  const auto [fix, sac] = gan::load_gan_bundle(dir.path());
  EXPECT_EQ(fix.subjects, p.fix.subjects);
  EXPECT_EQ(fix.gan.config().segment_length(), 100u);
  EXPECT_EQ(sac.gan.config().segment_length(), 30u);
  Rng r1(19), r2(19);
  const auto a = gan::synthesize_scanpath(p.fix, p.sac, 1, 3, r1);
  const auto b = gan::synthesize_scanpath(fix, sac, 1, 3, r2);
  EXPECT_EQ(a.x_deg, b.x_deg);
  EXPECT_EQ(a.y_deg, b.y_deg);
  VelocitySequence v = p.fix.gan.generate(latent(r1), p.fix.subject_condition(0));
  EXPECT_EQ(p.fix.gan.discriminate(v, p.fix.subject_condition(0)), fix.gan.discriminate(v, fix.subject_condition(0)));
}

TEST(Bundle, WrongKindIsRejected) {
  oracle::TempDir dir("gan_wrong");
  {
    std::ofstream m(dir.path() / "manifest.txt");
    m << "kind=diffusion\n";
  }
  try {
    gan::load_gan_bundle(dir.path());
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), "wrong_model");
  }
}
