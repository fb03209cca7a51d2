#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "gptight/csv.hpp"
#include "gptight/errors.hpp"
#include "gptight/experiment.hpp"

namespace gptight {
namespace {

namespace fs = std::filesystem;

const fs::path kConfigDir = fs::path(GPTIGHT_SOURCE_DIR) / "configs";

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

std::string small_config(const std::string& noise = "kind = \"uniform\"\nlower = [-0.14, -0.14]\nupper = [0.14, 0.14]",
                         const std::string& top = "deltas = [0.1]") {
  return R"(name = "small"
methods = ["learned", "chebyshev", "gaussian", "scenario"]
)" + top + R"(
seeds = [3, 4]
profile = "tiny"

[plant]
a = [[1.0, 0.0075], [-0.143, 0.996]]
b = [[4.798], [0.115]]

[plant.noise]
)" + noise + R"(

[plant.constraint]
h_x = [[1.0, 0.0]]

[ocp]
horizon = 10
q = [[1.0, 0.0], [0.0, 10.0]]
r = [[1.0]]
input_lower = [-0.2]
input_upper = [0.2]

[gamma_space]
lower = -1.0
upper = 0.2
resolution = 241

[tightener]
c_rand = 3
step_log_stride = 10

[evaluation]
burn_in = 50

[baselines]
scenario_samples = 200

[profiles.tiny]
t_wait = 20
t_col = 100
t_final = 4
eval_horizon = 300
)";
}

fs::path fresh_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("gptight-test-" + name);
  fs::remove_all(p);
  return p;
}

TEST(LoadConfig, BundledConverterSetup) {
  const ExperimentConfig cfg = load_config(kConfigDir / "dcdc.toml");
  DenseMatrix a(2, 2);
  a << 1.0, 0.0075, -0.143, 0.996;
  EXPECT_EQ(cfg.plant.a, a);
  EXPECT_EQ(cfg.plant.b, (DenseMatrix(2, 1) << 4.798, 0.115).finished());
  EXPECT_EQ(cfg.ocp.q, (DenseMatrix(2, 2) << 1, 0, 0, 10).finished());
  EXPECT_EQ(cfg.ocp.r, DenseMatrix::Ones(1, 1));
  EXPECT_EQ(cfg.ocp.input_lower(0), -0.2);
  EXPECT_EQ(cfg.ocp.input_upper(0), 0.2);
  EXPECT_EQ(cfg.ocp.horizon, 10);
  EXPECT_EQ(cfg.deltas, std::vector<double>{0.1});
  const Schedule& desk = cfg.profiles.at("desk");
  EXPECT_EQ(desk.t_wait, 200);
  EXPECT_EQ(desk.t_col, 1000);
  EXPECT_EQ(desk.t_final, 100);
  const Schedule& paper = cfg.profiles.at("paper");
  EXPECT_EQ(paper.t_wait, 500);
  EXPECT_EQ(paper.t_col, 5000);
  EXPECT_EQ(paper.t_final, 150);
  EXPECT_EQ(cfg.space->resolution()[0], 241);
}

TEST(LoadConfig, AllBundledConfigsValidate) {
  for (const auto& entry : fs::directory_iterator(kConfigDir)) {
    if (entry.path().extension() == ".toml") EXPECT_NO_THROW(load_config(entry.path())) << entry.path();
  }
}

TEST(LoadConfig, SatisfactionTargetsBecomeOneMinusDelta) {
  const ExperimentConfig cfg = load_config(kConfigDir / "dcdc_comparison.toml");
  ASSERT_EQ(cfg.deltas.size(), 6u);
  EXPECT_NEAR(cfg.deltas[0], 0.4, 1e-15);
  EXPECT_NEAR(cfg.deltas[5], 0.01, 1e-15);
  const ExperimentConfig literal = load_config(kConfigDir / "dcdc_comparison_literal.toml");
  EXPECT_EQ(literal.deltas[0], 0.6);
}

TEST(LoadConfig, MissingDeltaNamesField) {
  std::string text = small_config();
  text.replace(text.find("deltas = [0.1]"), 14, "");
  try {
    parse_config(text);
    FAIL() << "expected ValidationError";
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("deltas"), std::string::npos);
  }
}

TEST(LoadConfig, DeltaOutOfRange) {
  EXPECT_THROW(parse_config(small_config(
                   "kind = \"uniform\"\nlower = [-0.14, -0.14]\nupper = [0.14, 0.14]", "deltas = [1.5]")),
               ValidationError);
}

TEST(LoadConfig, UnknownKeyReportsLocation) {
  std::string text = small_config();
  text.replace(text.find("[ocp]\n"), 6, "[ocp]\nhorizn = 3\n");
  try {
    parse_config(text);
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 20);
    EXPECT_EQ(e.column(), 1);
    EXPECT_NE(std::string(e.what()).find("ocp.horizn"), std::string::npos);
  }
}

TEST(LoadConfig, SyntaxErrorReportsLocation) {
  try {
    parse_config("name = \"x\"\nmethods = [\"learned\"\n");
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_GE(e.line(), 2);
  }
}

TEST(LoadConfig, WrongTypeNamesField) {
  std::string text = small_config();
  text.replace(text.find("horizon = 10"), 12, "horizon = \"ten\"");
  try {
    parse_config(text);
    FAIL() << "expected ValidationError";
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("ocp.horizon"), std::string::npos);
  }
}

TEST(LoadConfig, SlackWeightAndTerminalVariants) {
  std::string text = small_config();
  text.replace(text.find("input_upper = [0.2]"), 19,
               "input_upper = [0.2]\nslack_weight = 1e16\nterminal = \"lyapunov_transposed\"");
  const ExperimentConfig cfg = parse_config(text);
  EXPECT_EQ(cfg.ocp.slack_weight, 1e16);
  const DenseMatrix& p = cfg.ocp.p;
  const DenseMatrix resid = p - cfg.ocp.a.transpose() * p * cfg.ocp.a - cfg.ocp.q;
  EXPECT_LE(resid.cwiseAbs().maxCoeff(), 1e-7);
}

TEST(RunExperiment, SummaryRowsAndReplay) {
  const ExperimentConfig cfg = parse_config(small_config());
  RunOptions opts;
  opts.output_dir = fresh_dir("summary");
  opts.verbose = false;
  ASSERT_EQ(run_experiment(cfg, opts), 0);
  const CsvTable summary = read_csv_file(*opts.output_dir / "summary.csv");
  EXPECT_EQ(summary.header, (std::vector<std::string>{"method", "delta", "seed", "gamma_tilde_final", "empirical_H",
                                                      "avg_cost", "runtime_s"}));
  EXPECT_EQ(summary.rows.size(), cfg.methods.size() * cfg.deltas.size() * cfg.seeds.size());
  for (const auto& row : summary.rows) {
    const fs::path cell = *opts.output_dir / cell_name(parse_method(row[0]), parse_double(row[1]), std::stoull(row[2]));
    const ReplaySummary replayed = replay(cell);
    EXPECT_EQ(replayed.steps, 300);
    EXPECT_NEAR(replayed.avg_cost, parse_double(row[5]), 1e-9);
    EXPECT_EQ(replayed.empirical_h, parse_double(row[4]));
    EXPECT_TRUE(fs::exists(cell / "gamma.csv"));
    if (row[0] == "learned") {
      const CsvTable updates = read_csv_file(cell / "updates.csv");
      EXPECT_EQ(updates.rows.size(), 4u);
      EXPECT_EQ(updates.header[0], "i");
      EXPECT_TRUE(fs::exists(cell / "model.snapshot"));
      EXPECT_TRUE(fs::exists(cell / "train_steps.csv"));
    }
  }
  const CsvTable steps = read_csv_file(*opts.output_dir / cell_name(Method::kGaussian, 0.1, 3) / "steps.csv");
  EXPECT_EQ(steps.header, (std::vector<std::string>{"t", "x1", "x2", "u", "label", "stage_cost"}));
}

TEST(RunExperiment, ByteIdenticalAcrossRunsAndJobCounts) {
  const ExperimentConfig cfg = parse_config(small_config());
  RunOptions a;
  a.output_dir = fresh_dir("det-a");
  a.verbose = false;
  RunOptions b = a;
  b.output_dir = fresh_dir("det-b");
  b.jobs = 3;
  ASSERT_EQ(run_experiment(cfg, a), 0);
  ASSERT_EQ(run_experiment(cfg, b), 0);
  for (Method m : cfg.methods) {
    for (std::uint64_t seed : cfg.seeds) {
      const std::string cell = cell_name(m, 0.1, seed);
      EXPECT_EQ(read_file(*a.output_dir / cell / "steps.csv"), read_file(*b.output_dir / cell / "steps.csv"));
      if (m == Method::kLearned) {
        EXPECT_EQ(read_file(*a.output_dir / cell / "updates.csv"), read_file(*b.output_dir / cell / "updates.csv"));
      }
    }
  }
}

TEST(RunExperiment, SeedOffsetShiftsSeeds) {
  ExperimentConfig cfg = parse_config(small_config());
  cfg.methods = {Method::kGaussian};
  RunOptions opts;
  opts.output_dir = fresh_dir("offset");
  opts.seed_offset = 100;
  opts.verbose = false;
  ASSERT_EQ(run_experiment(cfg, opts), 0);
  EXPECT_TRUE(fs::exists(*opts.output_dir / cell_name(Method::kGaussian, 0.1, 103)));
}

TEST(RunExperiment, ZeroNoiseFromOriginIsAlwaysSatisfied) {
  const ExperimentConfig cfg =
      parse_config(small_config("kind = \"uniform\"\nlower = [0.0, 0.0]\nupper = [0.0, 0.0]"));
  for (Method m : cfg.methods) {
    const CellResult r = run_cell(cfg, m, 0.1, 3, std::nullopt);
    EXPECT_EQ(r.empirical_h, 1.0) << to_string(m);
    EXPECT_EQ(r.avg_cost, 0.0) << to_string(m);
  }
}

TEST(RunExperiment, ZeroNoiseMatchesDeterministicRollout) {
  ExperimentConfig cfg = parse_config(small_config("kind = \"uniform\"\nlower = [0.0, 0.0]\nupper = [0.0, 0.0]"));
  cfg.x0 = Vector{{-0.3, 0.4}};
  cfg.burn_in = 0;
  for (Method m : cfg.methods) {
    const CellResult r = run_cell(cfg, m, 0.1, 3, std::nullopt);
    // Oracle: plain noiseless rollout under the same tightening.
    const MpcController c(cfg.ocp);
    Vector x = cfg.x0;
    double cost = 0.0;
    long sat = 0;
    const long horizon = cfg.schedule().eval_horizon;
    for (long t = 0; t < horizon; ++t) {
      const Vector u = c.solve(x, r.gamma).u0;
      cost += x.dot(cfg.ocp.q * x) + u.dot(cfg.ocp.r * u);
      sat += x(0) <= 0.0;
      x = cfg.plant.a * x + cfg.plant.b * u;
    }
    EXPECT_EQ(r.empirical_h, static_cast<double>(sat) / static_cast<double>(horizon)) << to_string(m);
    EXPECT_NEAR(r.avg_cost, cost / static_cast<double>(horizon), 1e-9) << to_string(m);
  }
}

TEST(ResolveOutputDir, Precedence) {
  ExperimentConfig cfg;
  RunOptions opts;
  ::setenv(kOutputDirEnv, "/tmp/from-env", 1);
  EXPECT_EQ(resolve_output_dir(cfg, opts), fs::path("/tmp/from-env"));
  cfg.output_dir = "/tmp/from-config";
  EXPECT_EQ(resolve_output_dir(cfg, opts), fs::path("/tmp/from-config"));
  opts.output_dir = "/tmp/from-flag";
  EXPECT_EQ(resolve_output_dir(cfg, opts), fs::path("/tmp/from-flag"));
  ::unsetenv(kOutputDirEnv);
}

}  // namespace
}  // namespace gptight
