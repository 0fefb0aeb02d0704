#include <gtest/gtest.h>

#include <cmath>
#include <fstream>

#include "gazesyn/config.hpp"
#include "gazesyn/quality.hpp"
#include "gazesyn/recording_io.hpp"
#include "gazesyn/simulator.hpp"
#include "gazesyn/workflow.hpp"
#include "oracles.hpp"

using namespace gazesyn;

namespace {

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  out << text;
}

void expect_same(const GazeRecording& a, const GazeRecording& b) {
  EXPECT_EQ(a.subject_id, b.subject_id);
  EXPECT_EQ(a.task_label, b.task_label);
  EXPECT_EQ(a.sample_rate_hz, b.sample_rate_hz);
  EXPECT_EQ(a.t_ms, b.t_ms);
  EXPECT_EQ(a.valid, b.valid);
  EXPECT_EQ(a.target_x_deg, b.target_x_deg);
  EXPECT_EQ(a.target_y_deg, b.target_y_deg);
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (std::isnan(a.x_deg[i])) {
      EXPECT_TRUE(std::isnan(b.x_deg[i]));
      EXPECT_TRUE(std::isnan(b.y_deg[i]));
      continue;
    }
    ASSERT_EQ(a.x_deg[i], b.x_deg[i]) << i;
    ASSERT_EQ(a.y_deg[i], b.y_deg[i]) << i;
  }
}

double mean_precision(const GazeRecording& rec, const IdtOptions& idt, std::size_t& bins_seen) {
  const auto bins = extract_stable_bins(idt_segment(rec, idt), rec);
  double s = 0.0;
  for (const auto& b : bins) s += quality::spatial_precision(b);
  bins_seen += bins.size();
  return s / static_cast<double>(bins.size());
}

}  // namespace

TEST(Simulator, DeterministicPerSeed) {
  const auto p = default_profiles(2, 3)[1];
  SimulationRun run;
  run.task = Task::RAN;
  run.seed = 42;
  const auto a = simulate_recording(p, run), b = simulate_recording(p, run);
  EXPECT_EQ(a.x_deg, b.x_deg);
  EXPECT_EQ(a.y_deg, b.y_deg);
  EXPECT_EQ(a.target_x_deg, b.target_x_deg);
  run.seed = 43;
  EXPECT_NE(simulate_recording(p, run).x_deg, a.x_deg);
}

TEST(Simulator, FiveSecondsAtThousandHertz) {
  const auto rec = simulate_recording(SimulatorProfile{}, SimulationRun{});
  EXPECT_EQ(rec.size(), 5000u);
  EXPECT_EQ(rec.sample_rate_hz, 1000.0);
  EXPECT_TRUE(rec.has_target());
  EXPECT_EQ(rec.task_label, "HSS");
  EXPECT_NO_THROW(rec.validate());
}

TEST(Simulator, NoiseFreeFixationTaskSitsOnTarget) {
  SimulatorProfile p;
  p.fixation_noise_std = 0.0;
  p.drift_rate = 0.0;
  p.microsaccade_rate = 0.0;
  SimulationRun run;
  run.task = Task::FIX;
  const auto rec = simulate_recording(p, run);
  for (std::size_t i = 0; i < rec.size(); ++i) {
    ASSERT_EQ(rec.x_deg[i], rec.target_x_deg[i]);
    ASSERT_EQ(rec.y_deg[i], rec.target_y_deg[i]);
  }
  const auto bins = extract_stable_bins(idt_segment(rec), rec);
  ASSERT_FALSE(bins.empty());
  for (const auto& b : bins) EXPECT_EQ(quality::spatial_accuracy(b), 0.0);
}

TEST(Simulator, HorizontalScheduleAlternatesAtThePeriod) {
  SimulationRun run;
  run.amplitude_deg = 12.0;
  run.target_period_ms = 500.0;
  const auto t = target_schedule(run);
  ASSERT_EQ(t.size(), 5000u);
  for (std::size_t i = 0; i < t.size(); ++i) {
    const std::size_t k = i / 500;
    ASSERT_EQ(t[i][0], k % 2 == 0 ? -12.0 : 12.0) << i;
    ASSERT_EQ(t[i][1], 0.0);
  }
}

TEST(Simulator, RandomScheduleStaysInTheBox) {
  SimulationRun run;
  run.task = Task::RAN;
  run.seed = 5;
  const auto t = target_schedule(run);
  for (std::size_t i = 0; i < t.size(); ++i) {
    ASSERT_LE(std::abs(t[i][0]), 15.0);
    ASSERT_LE(std::abs(t[i][1]), 15.0);
    if (i % 1000 != 0) {
      ASSERT_EQ(t[i], t[i - 1]);
    }
  }
  EXPECT_NE(t[0], t[1000]);
}

TEST(Simulator, TenTimesTheNoiseGivesTenTimesThePrecision) {
  SimulatorProfile quiet;
  quiet.fixation_noise_std = 0.02;
  quiet.seed = 11;
  auto loud = quiet;
  loud.fixation_noise_std = 0.2;
  // A 0.2 dva jitter spreads well past the default 1 dva dispersion, so the
  // detector threshold is widened to still find whole fixations.
  IdtOptions idt;
  idt.dispersion_threshold_deg = 3.0;
  std::size_t bins_quiet = 0, bins_loud = 0;
  double pq = 0.0, pl = 0.0;
  for (std::uint64_t seed = 1; seed <= 2; ++seed) {
    SimulationRun run;
    run.task = Task::FIX;
    run.seed = seed;
    pq += mean_precision(simulate_recording(quiet, run), idt, bins_quiet);
    pl += mean_precision(simulate_recording(loud, run), idt, bins_loud);
  }
  EXPECT_GE(bins_quiet, 50u);
  EXPECT_GE(bins_loud, 50u);
  EXPECT_NEAR(pl / pq, 10.0, 3.0);
}

TEST(Simulator, DefaultProfilesAreDistinct) {
  const auto ps = default_profiles(4, 1);
  ASSERT_EQ(ps.size(), 4u);
  EXPECT_EQ(ps[0].subject_id, "S1");
  EXPECT_EQ(ps[3].subject_id, "S4");
  for (std::size_t i = 1; i < ps.size(); ++i) {
    EXPECT_GT(ps[i].fixation_noise_std, ps[i - 1].fixation_noise_std);
    EXPECT_NE(ps[i].seed, ps[i - 1].seed);
  }
}

TEST(Simulator, RejectsNegativeProfileAndFractionalSampleCount) {
  SimulatorProfile p;
  p.drift_rate = -1.0;
  EXPECT_THROW(simulate_recording(p, SimulationRun{}), Error);
  SimulationRun run;
  run.duration_s = 0.0015;
  EXPECT_THROW(simulate_recording(SimulatorProfile{}, run), Error);
  EXPECT_THROW(parse_task("TEX"), Error);
}

TEST(RecordingCsv, RoundTripIsExact) {
  oracle::TempDir dir("csv_round");
  auto rec = simulate_recording(default_profiles(1, 2)[0], SimulationRun{});
  rec.valid[17] = 0;
  rec.x_deg[17] = rec.y_deg[17] = std::nan("");
  const auto path = dir.str("r.csv");
  write_recording_csv(path, rec);
  const auto back = load_recording_csv(path);
  expect_same(rec, back);

  write_recording_csv(path, back);
  expect_same(back, load_recording_csv(path));
}

TEST(RecordingCsv, RoundTripWithoutTarget) {
  oracle::TempDir dir("csv_notarget");
  auto rec = GazeRecording::from_positions({0.1, 0.2, 0.3}, {1.0, -1.0, 1e-17}, 500.0, "S3", "TEX");
  write_recording_csv(dir.str("r.csv"), rec);
  const auto back = load_recording_csv(dir.str("r.csv"));
  EXPECT_FALSE(back.has_target());
  expect_same(rec, back);
}

TEST(RecordingCsv, FiveSecondsWritesFiveThousandRows) {
  oracle::TempDir dir("csv_rows");
  write_recording_csv(dir.str("r.csv"), simulate_recording(SimulatorProfile{}, SimulationRun{}));
  std::ifstream in(dir.str("r.csv"));
  std::string line;
  std::size_t rows = 0;
  std::getline(in, line);
  EXPECT_EQ(line, "n_ms,x_deg,y_deg,xT_deg,yT_deg,valid");
  while (std::getline(in, line)) ++rows;
  EXPECT_EQ(rows, 5000u);
}

TEST(RecordingCsv, EmptyXMarksTheSampleInvalid) {
  oracle::TempDir dir("csv_empty");
  write_text(dir.str("r.csv"), "n_ms,x_deg,y_deg\n0,1,2\n1,,3\n2,4,5\n");
  const auto r = load_recording_csv(dir.str("r.csv"), {}, "S1", "HSS");
  ASSERT_EQ(r.size(), 3u);
  EXPECT_EQ(r.valid, (std::vector<std::uint8_t>{1, 0, 1}));
  EXPECT_TRUE(std::isnan(r.x_deg[1]));
  EXPECT_TRUE(std::isnan(r.y_deg[1]));
  EXPECT_EQ(r.sample_rate_hz, 1000.0);
  EXPECT_EQ(r.subject_id, "S1");
  EXPECT_EQ(r.task_label, "HSS");
}

TEST(RecordingCsv, MissingColumnIsNamed) {
  oracle::TempDir dir("csv_missing");
  write_text(dir.str("r.csv"), "n_ms,x_deg\n0,1\n1,2\n");
  try {
    load_recording_csv(dir.str("r.csv"));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), "missing_column");
    EXPECT_NE(std::string(e.what()).find("y_deg"), std::string::npos);
  }
  write_text(dir.str("t.csv"), "n_ms,x_deg,y_deg,xT_deg\n0,1,1,0\n1,2,2,0\n");
  try {
    load_recording_csv(dir.str("t.csv"));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), "missing_column");
    EXPECT_NE(std::string(e.what()).find("yT_deg"), std::string::npos);
  }
}

TEST(RecordingCsv, NonMonotoneTimestampsAreRejected) {
  oracle::TempDir dir("csv_time");
  write_text(dir.str("r.csv"), "n_ms,x_deg,y_deg\n0,1,2\n2,1,2\n1,1,2\n");
  try {
    load_recording_csv(dir.str("r.csv"));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), "non_monotone_time");
  }
}

TEST(RecordingCsv, MalformedRowsAreRejected) {
  oracle::TempDir dir("csv_bad");
  write_text(dir.str("a.csv"), "n_ms,x_deg,y_deg\n0,1\n");
  EXPECT_THROW(load_recording_csv(dir.str("a.csv")), Error);
  write_text(dir.str("b.csv"), "n_ms,x_deg,y_deg\n0,abc,1\n1,1,1\n");
  EXPECT_THROW(load_recording_csv(dir.str("b.csv")), Error);
  write_text(dir.str("c.csv"), "n_ms,x_deg,y_deg,valid\n0,1,1,2\n1,1,1,1\n");
  EXPECT_THROW(load_recording_csv(dir.str("c.csv")), Error);
  write_text(dir.str("d.csv"), "n_ms,x_deg,y_deg\n");
  EXPECT_THROW(load_recording_csv(dir.str("d.csv")), Error);
}

TEST(RecordingCsv, SchemaMapRenamesColumns) {
  oracle::TempDir dir("csv_schema");
  write_text(dir.str("r.csv"), "t,gx,gy,ok\n0,1,2,1\n4,3,4,0\n8,5,6,1\n");
  const auto schema = RecordingSchema::parse("time=t, x=gx, y=gy, valid=ok");
  const auto r = load_recording_csv(dir.str("r.csv"), schema);
  EXPECT_EQ(r.sample_rate_hz, 250.0);
  EXPECT_EQ(r.x_deg[2], 5.0);
  EXPECT_EQ(r.valid, (std::vector<std::uint8_t>{1, 0, 1}));
  EXPECT_THROW(RecordingSchema::parse("colour=x"), Error);
  EXPECT_THROW(RecordingSchema::parse("x"), Error);
  EXPECT_EQ(RecordingSchema::parse("").x, "x_deg");
}

TEST(RecordingCsv, SidecarSuppliesSubjectTaskAndRate) {
  oracle::TempDir dir("csv_meta");
  write_text(dir.str("r.csv"), "n_ms,x_deg,y_deg\n0,1,2\n1,1,2\n");
  write_text(dir.str("r.csv.meta"), "# comment\nsubject = S7\ntask=RAN\nrate_hz=1000\n");
  const auto r = load_recording_csv(dir.str("r.csv"));
  EXPECT_EQ(r.subject_id, "S7");
  EXPECT_EQ(r.task_label, "RAN");
  EXPECT_EQ(load_recording_csv(dir.str("r.csv"), {}, "S8").subject_id, "S8");
}

TEST(VelocityCsv, RoundTrip) {
  oracle::TempDir dir("vel");
  VelocitySequence v{100.0, {1.5, -2.25, 0.1}, {0.0, 3.0, 1e-9}};
  write_velocity_csv(dir.str("v.csv"), v, {{"subject", "S1"}});
  const auto back = load_velocity_csv(dir.str("v.csv"));
  EXPECT_EQ(back.sample_rate_hz, 100.0);
  EXPECT_EQ(back.vx, v.vx);
  EXPECT_EQ(back.vy, v.vy);
  EXPECT_EQ(read_metadata(meta_path(dir.str("v.csv"))).at("subject"), "S1");
}

TEST(Dataset, SimulatedDatasetNamesAndCount) {
  RunConfig cfg;
  cfg.subjects = 3;
  cfg.recordings_per_task = 2;
  cfg.tasks = {Task::HSS, Task::FIX};
  cfg.run.duration_s = 1.0;
  const auto recs = workflow::simulate_dataset(cfg);
  ASSERT_EQ(recs.size(), 12u);
  EXPECT_EQ(recs[0].name, "S1_HSS_00");
  EXPECT_EQ(recs[3].name, "S1_FIX_01");
  EXPECT_EQ(recs[11].recording.subject_id, "S3");
  oracle::TempDir dir("dataset");
  workflow::write_dataset(dir.path(), recs);
  const auto back = workflow::read_dataset(dir.path());
  ASSERT_EQ(back.size(), 12u);
  EXPECT_EQ(back[0].name, "S1_FIX_00");  // directory order is sorted by name
}

TEST(Config, ParsesKeyValueFile) {
  oracle::TempDir dir("cfg");
  write_text(dir.str("run.cfg"),
             "# toy run\n"
             "seed = 9\n"
             "simulate.subjects = 4   # four people\n"
             "simulate.tasks = RAN,FIX\n"
             "diffusion.lambda_id = 0.25\n"
             "gan.saccade.epochs = 3\n"
             "metrics.precision = centroid\n"
             "\n");
  const auto cfg = load_config(dir.str("run.cfg"));
  EXPECT_EQ(cfg.seed, 9u);
  EXPECT_EQ(cfg.subjects, 4u);
  EXPECT_EQ(cfg.tasks, (std::vector<Task>{Task::RAN, Task::FIX}));
  EXPECT_EQ(cfg.diffusion.lambda_id, 0.25);
  EXPECT_EQ(cfg.gan_saccade.epochs, 3u);
  EXPECT_EQ(cfg.gan_fixation.epochs, 100u);
  EXPECT_EQ(cfg.metrics.precision, quality::PrecisionMethod::Centroid);
}

TEST(Config, UnknownKeyAndBadValueAreErrors) {
  oracle::TempDir dir("cfg_bad");
  write_text(dir.str("a.cfg"), "simulate.colour = red\n");
  try {
    load_config(dir.str("a.cfg"));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), "unknown_config_key");
  }
  write_text(dir.str("b.cfg"), "seed = -3\n");
  EXPECT_THROW(load_config(dir.str("b.cfg")), Error);
  write_text(dir.str("c.cfg"), "seed\n");
  EXPECT_THROW(load_config(dir.str("c.cfg")), Error);
  write_text(dir.str("d.cfg"), "simulate.duration_s = 0\n");
  EXPECT_THROW(load_config(dir.str("d.cfg")), Error);
}

TEST(Config, TextFormRoundTrips) {
  RunConfig a;
  a.seed = 77;
  a.run.latency_ms = 150.0;
  a.diffusion.lambda_id = 0.0;
  a.gan_fixation.learning_rate = 3e-4;
  oracle::TempDir dir("cfg_text");
  write_text(dir.str("a.cfg"), a.to_text());
  auto b = load_config(dir.str("a.cfg"));
  EXPECT_EQ(b.to_text(), a.to_text());
}
