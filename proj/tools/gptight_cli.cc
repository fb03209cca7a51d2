// Command-line front end: run, validate and replay experiments.
#include <CLI11.hpp>

#include <iostream>

#include "gptight/csv.hpp"
#include "gptight/errors.hpp"
#include "gptight/experiment.hpp"

namespace {

constexpr int kRunFailure = 1;
constexpr int kConfigError = 2;

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Online constraint-tightening experiments for stochastic MPC"};
  app.require_subcommand(1);

  std::string config_path;
  gptight::RunOptions opts;
  std::string out_dir;
  std::string profile;

  CLI::App* run = app.add_subcommand("run", "Run every (method, delta, seed) cell of a config");
  run->add_option("config", config_path, "Experiment config (TOML)")->required();
  run->add_option("--out", out_dir, std::string("Output directory (default: config, then $") +
                                        gptight::kOutputDirEnv + ")");
  run->add_option("--profile", profile, "Schedule profile")->check(CLI::IsMember({"desk", "paper"}));
  run->add_option("--seed-offset", opts.seed_offset, "Added to every seed");
  run->add_option("--jobs", opts.jobs, "Worker threads")->check(CLI::PositiveNumber);
  bool quiet = false;
  run->add_flag("--quiet", quiet, "No per-cell progress on stderr");

  std::string validate_path;
  CLI::App* validate = app.add_subcommand("validate", "Parse and validate a config");
  validate->add_option("config", validate_path, "Experiment config (TOML)")->required();

  std::string trace_path;
  CLI::App* replay = app.add_subcommand("replay", "Recompute summary metrics from a stored cell");
  replay->add_option("trace", trace_path, "Cell directory or its steps.csv")->required()->check(CLI::ExistingPath);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kConfigError;
  }

  try {
    if (*run) {
      if (!out_dir.empty()) opts.output_dir = out_dir;
      if (!profile.empty()) opts.profile = profile;
      opts.verbose = !quiet;
      gptight::ExperimentConfig cfg;
      try {
        cfg = gptight::load_config(config_path);
      } catch (const gptight::ParseError& e) {
        std::cerr << config_path << ":" << e.what() << "\n";
        return kConfigError;
      } catch (const gptight::ValidationError& e) {
        std::cerr << config_path << ": " << e.what() << "\n";
        return kConfigError;
      }
      return gptight::run_experiment(cfg, opts);
    }
    if (*validate) {
      try {
        const gptight::ExperimentConfig cfg = gptight::load_config(validate_path);
        std::cout << validate_path << ": ok (" << cfg.methods.size() * cfg.deltas.size() * cfg.seeds.size()
                  << " cells, profile " << cfg.profile << ")\n";
        return 0;
      } catch (const gptight::ParseError& e) {
        std::cerr << validate_path << ":" << e.what() << "\n";
      } catch (const gptight::ValidationError& e) {
        std::cerr << validate_path << ": " << e.what() << "\n";
      }
      return kConfigError;
    }
    if (*replay) {
      const gptight::ReplaySummary s = gptight::replay(trace_path);
      std::cout << "steps,empirical_H,avg_cost\n"
                << s.steps << "," << gptight::format_double(s.empirical_h) << ","
                << gptight::format_double(s.avg_cost) << "\n";
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kRunFailure;
  }
  return 0;
}
