#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "gptight/plant.hpp"
#include "gptight/smpc.hpp"
#include "gptight/tightener.hpp"

namespace gptight {

enum class Method { kLearned, kChebyshev, kGaussian, kScenario };

std::string to_string(Method m);
Method parse_method(const std::string& name);

/// Learning and evaluation lengths for one scale of experiment.
struct Schedule {
  long t_wait = 0;
  long t_col = 0;
  long t_final = 0;
  long eval_horizon = 0;
};

/// Built-in "desk" (200/1000/100, eval 10^4) and "paper" (500/5000/150, eval 2*10^4).
std::map<std::string, Schedule> default_profiles();

struct ExperimentConfig {
  std::string name;
  LinearPlant plant;
  Vector x0;
  OcpSpec ocp;
  std::optional<GammaSpace> space;
  TightenerConfig tightener;  // schedule fields are filled from the profile
  std::optional<TwaitFromBound> t_wait_bound;
  std::map<std::string, Schedule> profiles = default_profiles();
  std::string profile = "desk";
  std::vector<Method> methods;
  std::vector<double> deltas;
  std::vector<std::uint64_t> seeds;
  long burn_in = 500;
  long scenario_samples = 10000;
  std::filesystem::path output_dir;  // empty: environment or built-in default

  const Schedule& schedule() const;
  TightenerConfig tightener_for(double delta) const;
  void validate() const;
};

/// Parses a TOML experiment file. Throws ParseError for syntax errors and
/// unknown keys, ValidationError naming the field for bad values.
ExperimentConfig load_config(const std::filesystem::path& path);
ExperimentConfig parse_config(const std::string& text, const std::string& source_name = "<string>");

inline constexpr const char* kOutputDirEnv = "GPTIGHT_OUTPUT_DIR";

struct RunOptions {
  std::optional<std::filesystem::path> output_dir;
  std::optional<std::string> profile;
  std::uint64_t seed_offset = 0;
  int jobs = 1;
  bool verbose = true;
};

struct CellResult {
  Method method = Method::kLearned;
  double delta = 0.0;
  std::uint64_t seed = 0;
  std::string gamma_label;  // final gamma~ or, for baselines, the mean of g
  TighteningVector gamma;
  double empirical_h = 0.0;
  double avg_cost = 0.0;
  double runtime_s = 0.0;
  bool final_infeasible = false;
  std::optional<RunTrace> trace;
};

/// One (method, delta, seed) cell: produce the tightening, evaluate it and,
/// if cell_dir is set, write the per-cell files.
CellResult run_cell(const ExperimentConfig& cfg, Method method, double delta, std::uint64_t seed,
                    const std::optional<std::filesystem::path>& cell_dir);

std::filesystem::path resolve_output_dir(const ExperimentConfig& cfg, const RunOptions& opts);
std::string cell_name(Method method, double delta, std::uint64_t seed);

/// Runs every cell and writes summary.csv. Returns 0, or 1 if any cell failed
/// (completed cells are still written).
int run_experiment(const ExperimentConfig& cfg, const RunOptions& opts = {});

struct ReplaySummary {
  long steps = 0;
  double empirical_h = 0.0;
  double avg_cost = 0.0;
};

/// Recomputes the evaluation metrics from a cell directory's steps.csv.
ReplaySummary replay(const std::filesystem::path& cell_dir);

}  // namespace gptight
