#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <sstream>

#include "gazesyn/csv.hpp"
#include "oracles.hpp"

namespace fs = std::filesystem;

namespace {

struct Run {
  int code = -1;
  std::string out, err;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

Run cli(const std::string& args, const oracle::TempDir& scratch) {
  const auto out = scratch.path() / "stdout.txt", err = scratch.path() / "stderr.txt";
  const std::string cmd =
      std::string("\"") + GAZESYN_CLI + "\" " + args + " >\"" + out.string() + "\" 2>\"" + err.string() + "\"";
  const int status = std::system(cmd.c_str());
  Run r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.out = slurp(out);
  r.err = slurp(err);
  return r;
}

std::size_t count_csv(const fs::path& dir) {
  std::size_t n = 0;
  for (const auto& e : fs::directory_iterator(dir)) n += e.path().extension() == ".csv";
  return n;
}

std::size_t lines(const std::string& s) { return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n')); }

struct Row {
  std::string report, task, metric, cell;
  double value;
};

std::vector<Row> rows_of(const std::string& csv_text) {
  std::istringstream in(csv_text);
  std::string line;
  std::getline(in, line);
  std::vector<Row> rows;
  while (std::getline(in, line)) {
    const auto f = gazesyn::csv::split(line);
    if (f.size() == 5) rows.push_back({f[0], f[1], f[2], f[3], gazesyn::csv::parse_double(f[4], 0)});
  }
  return rows;
}

}  // namespace

TEST(Cli, SimulateWritesOneCsvPerSubject) {
  oracle::TempDir dir("cli_sim");
  const auto r = cli("simulate --subjects 2 --task HSS --out " + dir.str("d"), dir);
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(count_csv(dir.path() / "d"), 2u);
  EXPECT_TRUE(fs::exists(dir.path() / "d" / "S1_HSS_00.csv"));
  EXPECT_TRUE(fs::exists(dir.path() / "d" / "S2_HSS_00.csv.meta"));
}

TEST(Cli, UnknownSubcommandFailsWithUsage) {
  oracle::TempDir dir("cli_unknown");
  const auto r = cli("dance", dir);
  EXPECT_NE(r.code, 0);
  EXPECT_EQ(lines(r.err), 1u) << r.err;
  EXPECT_EQ(r.err.rfind("error:", 0), 0u) << r.err;
  EXPECT_NE(r.out.find("simulate"), std::string::npos);
}

TEST(Cli, UnknownFlagFails) {
  oracle::TempDir dir("cli_flag");
  const auto r = cli("simulate --colour blue --out " + dir.str("d"), dir);
  EXPECT_NE(r.code, 0);
  EXPECT_EQ(r.err.rfind("error:", 0), 0u) << r.err;
}

TEST(Cli, FailuresAreOneMachineReadableLine) {
  oracle::TempDir dir("cli_fail");
  const auto r = cli("preprocess --in " + dir.str("missing") + " --out " + dir.str("o"), dir);
  EXPECT_EQ(r.code, 1);
  EXPECT_EQ(lines(r.err), 1u) << r.err;
  EXPECT_EQ(r.err.rfind("error: io_error: ", 0), 0u) << r.err;

  const auto bad = cli("simulate --task XYZ --out " + dir.str("d"), dir);
  EXPECT_EQ(bad.code, 1);
  EXPECT_EQ(bad.err.rfind("error: invalid_task: ", 0), 0u) << bad.err;
}

TEST(Cli, SameSeedIsByteIdenticalAndOtherSeedDiffers) {
  oracle::TempDir dir("cli_seed");
  ASSERT_EQ(cli("simulate --seed 5 --subjects 1 --task RAN --out " + dir.str("a"), dir).code, 0);
  ASSERT_EQ(cli("simulate --seed 5 --subjects 1 --task RAN --out " + dir.str("b"), dir).code, 0);
  ASSERT_EQ(cli("simulate --seed 6 --subjects 1 --task RAN --out " + dir.str("c"), dir).code, 0);
  const auto a = slurp(dir.path() / "a" / "S1_RAN_00.csv");
  EXPECT_FALSE(a.empty());
  EXPECT_EQ(a, slurp(dir.path() / "b" / "S1_RAN_00.csv"));
  EXPECT_NE(a, slurp(dir.path() / "c" / "S1_RAN_00.csv"));
}

TEST(Cli, ConfigFileAppliesAndFlagsOverride) {
  oracle::TempDir dir("cli_cfg");
  {
    std::ofstream c(dir.str("run.cfg"));
    c << "simulate.subjects = 3\nsimulate.tasks = FIX\nsimulate.duration_s = 1\n";
  }
  ASSERT_EQ(cli("simulate --config " + dir.str("run.cfg") + " --out " + dir.str("a"), dir).code, 0);
  EXPECT_EQ(count_csv(dir.path() / "a"), 3u);
  ASSERT_EQ(cli("simulate --config " + dir.str("run.cfg") + " --subjects 1 --out " + dir.str("b"), dir).code, 0);
  EXPECT_EQ(count_csv(dir.path() / "b"), 1u);
  EXPECT_EQ(lines(slurp(dir.path() / "b" / "S1_FIX_00.csv")), 1001u);
}

TEST(Cli, EvaluateOnIdenticalDirectories) {
  oracle::TempDir dir("cli_eval");
  ASSERT_EQ(cli("simulate --subjects 2 --task HSS,RAN --out " + dir.str("d"), dir).code, 0);
  const auto r = cli("evaluate --real " + dir.str("d") + " --synth " + dir.str("d") + " --json " + dir.str("r.json"),
                     dir);
  ASSERT_EQ(r.code, 0) << r.err;
  const auto rows = rows_of(r.out);
  std::size_t delta_acc = 0, sims = 0;
  for (const auto& row : rows) {
    if (row.report == "delta" && row.metric == "accuracy_dva") {
      EXPECT_EQ(row.value, 0.0) << row.task << " " << row.cell;
      ++delta_acc;
    }
    if (row.report == "delta" && row.metric == "precision_rms_dva") {
      EXPECT_EQ(row.value, 0.0);
    }
    if (row.metric == "similarity_cosine") {
      EXPECT_NEAR(row.value, 1.0, 1e-12);
      ++sims;
    }
  }
  EXPECT_EQ(delta_acc, 4u);  // two tasks, two cells
  EXPECT_EQ(sims, 4u);       // synth and delta, per task

  const auto j = nlohmann::json::parse(slurp(dir.path() / "r.json"));
  ASSERT_EQ(j.size(), 3u);
  EXPECT_EQ(j[0]["label"], "real");
  EXPECT_EQ(j[2]["label"], "delta");
  for (const auto& t : j[2]["tasks"])
    for (const auto& c : t["accuracy_dva"]) EXPECT_EQ(c["value"].get<double>(), 0.0);
}

TEST(Cli, ReportRendersTablesAndCharts) {
  oracle::TempDir dir("cli_report");
  ASSERT_EQ(cli("simulate --subjects 2 --task HSS --out " + dir.str("d"), dir).code, 0);
  ASSERT_EQ(cli("evaluate --real " + dir.str("d") + " --synth " + dir.str("d") + " --out " + dir.str("r.csv"), dir).code,
            0);
  const auto r = cli("report --in " + dir.str("r.csv") + " --out " + dir.str("rep"), dir);
  ASSERT_EQ(r.code, 0) << r.err;
  const auto md = slurp(dir.path() / "rep" / "report.md");
  EXPECT_NE(md.find("| HSS | accuracy_dva | U50|E50 |"), std::string::npos);
  EXPECT_EQ(slurp(dir.path() / "rep" / "accuracy.svg").rfind("<svg", 0), 0u);
  EXPECT_TRUE(fs::exists(dir.path() / "rep" / "precision.svg"));
}

TEST(Cli, GanPipelineRunsEndToEnd) {
  oracle::TempDir dir("cli_gan");
  ASSERT_EQ(cli("simulate --seed 3 --subjects 2 --task HSS --recordings 2 --out " + dir.str("raw"), dir).code, 0);
  auto r = cli("segment --in " + dir.str("raw") + " --out " + dir.str("seg"), dir);
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_TRUE(fs::exists(dir.path() / "seg" / "fixations.csv"));
  r = cli("train-gan --seed 3 --epochs 1 --in " + dir.str("seg") + " --out " + dir.str("gan"), dir);
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_TRUE(fs::exists(dir.path() / "gan" / "manifest.txt"));
  r = cli("synthesize --seed 3 --model gan --model-dir " + dir.str("gan") + " --subject S2 --in " + dir.str("raw") +
              " --out " + dir.str("syn"),
          dir);
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(count_csv(dir.path() / "syn"), 2u);
  r = cli("synthesize --model gan --model-dir " + dir.str("gan") + " --subject S9 --in " + dir.str("raw") + " --out " +
              dir.str("none"),
          dir);
  EXPECT_EQ(r.code, 1);
  EXPECT_EQ(r.err.rfind("error: unknown_subject: ", 0), 0u) << r.err;
}
