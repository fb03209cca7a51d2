// Acceptance gate. Prints one PASS/FAIL line per criterion and exits nonzero
// if any criterion fails. `--long` adds the full-schedule learning run.
#include <algorithm>
#include <boost/multiprecision/cpp_dec_float.hpp>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include "gptight/bounds.hpp"
#include "gptight/experiment.hpp"
#include "gptight/gp_classify.hpp"
#include "gptight/qp.hpp"
#include "gptight/rng.hpp"
#include "gptight/smpc.hpp"
#include "support.hpp"

namespace gptight {
namespace {

namespace fs = std::filesystem;
using testing::dcdc_spec;

const fs::path kConfigDir = fs::path(GPTIGHT_SOURCE_DIR) / "configs";

struct Outcome {
  bool pass = true;
  std::string detail;
};

int failures = 0;

void report(const std::string& name, const std::function<Outcome()>& check) {
  const auto start = std::chrono::steady_clock::now();
  Outcome o;
  try {
    o = check();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  if (!o.pass) ++failures;
  std::printf("%s %s (%.1fs): %s\n", o.pass ? "PASS" : "FAIL", name.c_str(), secs, o.detail.c_str());
  std::fflush(stdout);
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

ExperimentConfig config_for(const std::string& file, std::vector<Method> methods, const std::string& profile) {
  ExperimentConfig cfg = load_config(kConfigDir / file);
  cfg.methods = std::move(methods);
  cfg.deltas = {0.1};
  cfg.profile = profile;
  cfg.validate();
  return cfg;
}

// Last `count` non-random updates stay monotone up to `hysteresis` reversals.
bool settles_monotonically(const RunTrace& trace, size_t count, double hysteresis, std::string& why) {
  std::vector<double> g;
  for (const UpdateRecord& u : trace.updates) {
    if (!u.random) g.push_back(u.gamma_tilde(0));
  }
  if (g.size() < count) {
    why = "too few optimised updates";
    return false;
  }
  g.erase(g.begin(), g.end() - static_cast<long>(count));
  bool up = true;
  bool down = true;
  for (size_t i = 1; i < g.size(); ++i) {
    up = up && g[i] - g[i - 1] >= -hysteresis;
    down = down && g[i] - g[i - 1] <= hysteresis;
  }
  why = fmt("tail range [%.4f, %.4f]", *std::min_element(g.begin(), g.end()), *std::max_element(g.begin(), g.end()));
  return up || down;
}

Outcome full_schedule() {
  const ExperimentConfig cfg = config_for("dcdc.toml", {Method::kLearned}, "paper");
  Outcome o;
  for (std::uint64_t seed : {1, 2, 3}) {
    const CellResult r = run_cell(cfg, Method::kLearned, 0.1, seed, std::nullopt);
    // estimate_H over 10^4 steps, as in the criterion, not the profile's horizon.
    const double h = estimate_H(cfg.plant, cfg.ocp, r.gamma, 10000, cfg.burn_in,
                                RngStream(seed).split("evaluation"), cfg.x0);
    const bool ok = h >= 0.88 && h <= 0.93;
    o.pass = o.pass && ok;
    o.detail += fmt("seed %llu g=%.3f H=%.4f%s; ", static_cast<unsigned long long>(seed), r.trace->final_gamma(0), h,
                    ok ? "" : " out of [0.88,0.93]");
  }
  return o;
}

Outcome desk_convergence() {
  const ExperimentConfig cfg = config_for("dcdc.toml", {Method::kLearned}, "desk");
  const CellResult r = run_cell(cfg, Method::kLearned, 0.1, 1, std::nullopt);
  const RunTrace& t = *r.trace;
  const bool h_ok = r.empirical_h >= 0.85 && r.empirical_h <= 0.95;
  const bool early = !t.updates.empty() && (!t.updates.front().feasible || t.updates.front().random);
  std::string why;
  const bool settled = settles_monotonically(t, 20, 0.01, why);
  return {h_ok && early && settled && !t.final_infeasible,
          fmt("H=%.4f in [0.85,0.95]: %s; initial infeasible/random: %s; settling: %s (%s)", r.empirical_h,
              h_ok ? "yes" : "no", early ? "yes" : "no", settled ? "yes" : "no", why.c_str())};
}

Outcome baseline_tightness() {
  Outcome o;
  const ExperimentConfig uni = config_for(
      "dcdc_comparison.toml", {Method::kLearned, Method::kChebyshev, Method::kGaussian}, "desk");
  const CellResult learned = run_cell(uni, Method::kLearned, 0.1, 1, std::nullopt);
  o.detail = fmt("uniform: learned H=%.4f cost=%.2f", learned.empirical_h, learned.avg_cost);
  for (Method m : {Method::kChebyshev, Method::kGaussian}) {
    const CellResult b = run_cell(uni, m, 0.1, 1, std::nullopt);
    const bool h_ok = b.empirical_h >= learned.empirical_h + 0.03;
    const bool cost_ok = learned.avg_cost < b.avg_cost;
    o.pass = o.pass && h_ok && cost_ok;
    o.detail += fmt("; %s H=%.4f%s cost=%.2f%s", to_string(m).c_str(), b.empirical_h,
                    h_ok ? "" : " (not >= learned+0.03)", b.avg_cost, cost_ok ? "" : " (not > learned)");
  }
  const ExperimentConfig gauss = config_for("dcdc_gaussian.toml", {Method::kGaussian}, "desk");
  const CellResult g = run_cell(gauss, Method::kGaussian, 0.1, 1, std::nullopt);
  const bool near = std::abs(g.empirical_h - 0.9) <= 0.03;
  o.pass = o.pass && near;
  o.detail += fmt("; gaussian noise: gaussian H=%.4f%s", g.empirical_h, near ? "" : " (not within 0.03 of 0.9)");
  return o;
}

ClassificationDataset random_dataset(RngStream& r) {
  ClassificationDataset d;
  const int m = 1 + static_cast<int>(r.uniform() * 8);
  for (int j = 0; j < m; ++j) {
    const long n = 1 + static_cast<long>(r.uniform() * 500);
    d.add(Vector::Constant(1, -1.0 + 0.15 * j + 0.05 * r.uniform()), n,
          static_cast<long>(r.uniform() * static_cast<double>(n + 1)) % (n + 1));
  }
  return d;
}

Outcome gp_correctness() {
  RngStream r(4);
  // (a) analytic derivatives vs central differences.
  double worst_fd = 0.0;
  const double h = 1e-5;
  for (int trial = 0; trial < 50; ++trial) {
    const ClassificationDataset d = random_dataset(r);
    const SeKernel k{std::exp(r.uniform(-2.0, 1.0)), std::exp(r.uniform(-0.5, 1.5))};
    const DenseMatrix k_inv = gram(k, d.inputs).inverse();
    Vector f(static_cast<Eigen::Index>(d.size()));
    for (Eigen::Index j = 0; j < f.size(); ++j) f(j) = r.uniform(-2.5, 2.5);
    const Vector g = log_posterior_gradient(d, k_inv, f);
    const DenseMatrix hess = log_posterior_hessian(d, k_inv, f);
    Vector fd_g(f.size());
    DenseMatrix fd_h(f.size(), f.size());
    for (Eigen::Index j = 0; j < f.size(); ++j) {
      Vector up = f;
      Vector down = f;
      up(j) += h;
      down(j) -= h;
      fd_g(j) = (log_posterior(d, k_inv, up) - log_posterior(d, k_inv, down)) / (2 * h);
      fd_h.col(j) = (log_posterior_gradient(d, k_inv, up) - log_posterior_gradient(d, k_inv, down)) / (2 * h);
    }
    worst_fd = std::max({worst_fd, (g - fd_g).norm() / std::max(1.0, g.norm()),
                         (hess - fd_h).norm() / std::max(1.0, hess.norm())});
  }
  // (b) closed-form predictive vs sampling.
  double worst_mc = 0.0;
  RngStream pairs = r.split("pairs");
  for (int trial = 0; trial < 20; ++trial) {
    const double mean = pairs.uniform(-2.5, 2.5);
    const double var = pairs.uniform(0.0, 4.0);
    RngStream draws = pairs.split(static_cast<std::uint64_t>(trial));
    const long n = 10000000;
    double sum = 0.0;
    for (long i = 0; i < n; ++i) sum += sigmoid(mean + std::sqrt(var) * draws.normal());
    worst_mc = std::max(worst_mc, std::abs(sum / static_cast<double>(n) - sigmoid(mean / std::sqrt(1.0 + 2.0 * var))));
  }
  // (c) on-grid error against a known curve as data grows.
  auto truth = [](double x) { return 0.5 + 0.45 * std::tanh(2.5 * x); };
  std::vector<double> mae;
  for (long trials : {10L, 100L, 1000L, 10000L}) {
    double total = 0.0;
    const int reps = 5;
    for (int rep = 0; rep < reps; ++rep) {
      RngStream labels = RngStream(99).split(static_cast<std::uint64_t>(trials * 16 + rep));
      ClassificationDataset d;
      for (int j = 0; j < 10; ++j) {
        const double x = -1.0 + 2.0 * j / 9.0;
        long k = 0;
        for (long t = 0; t < trials; ++t) k += labels.uniform() < truth(x);
        d.add(Vector::Constant(1, x), trials, k);
      }
      const LaplaceFit fit = laplace_fit(d, map_hyperparameters(d, HyperPrior{}));
      for (const Vector& x : d.inputs) total += std::abs(predict(fit, x).probability - truth(x(0)));
    }
    mae.push_back(total / (10.0 * reps));
  }
  bool decreasing = true;
  for (size_t i = 1; i < mae.size(); ++i) decreasing = decreasing && mae[i] < mae[i - 1];
  return {worst_fd <= 1e-5 && worst_mc <= 1e-3 && decreasing,
          fmt("(a) worst FD rel err %.2e <= 1e-5; (b) worst MC gap %.2e <= 1e-3; (c) MAE %.4f > %.4f > %.4f > %.4f",
              worst_fd, worst_mc, mae[0], mae[1], mae[2], mae[3])};
}

Outcome qp_and_backup() {
  const OcpSpec s = dcdc_spec();
  const MpcController c(s);
  RngStream r(5);
  auto random_gamma = [&](double lo, double hi) {
    TighteningVector g{Vector(s.tightening_dim())};
    for (Eigen::Index k = 0; k < g.g.size(); ++k) g.g(k) = r.uniform(lo, hi);
    return g;
  };
  double worst_kkt = 0.0;
  long optimal = 0;
  for (int i = 0; i < 10000; ++i) {
    const Vector x{{r.uniform(-1.0, 1.0), r.uniform(-6.0, 6.0)}};
    const TighteningVector g = random_gamma(-1.0, 0.6);
    const int b = static_cast<int>(r.uniform() * (s.horizon + 1));
    const QpProblem p = c.build_qp(x, g, b);
    const QpSolution sol = solve_qp(p);
    if (sol.status != QpStatus::kOptimal) continue;
    ++optimal;
    worst_kkt = std::max(worst_kkt, kkt_residual(p, sol.primal, sol.dual_ineq, sol.dual_eq));
  }
  long mismatches = 0;
  long increases = 0;
  for (int i = 0; i < 200; ++i) {
    const Vector x{{r.uniform(-1.0, 1.0), r.uniform(-6.0, 6.0)}};
    const TighteningVector g = random_gamma(-0.5, 0.6);
    int scan = -1;
    double previous = std::numeric_limits<double>::infinity();
    for (int b = 0; b <= s.horizon; ++b) {
      const QpSolution sol = c.solve_at(x, g, b);
      if (sol.status != QpStatus::kOptimal) continue;
      if (scan < 0) scan = b;
      if (sol.objective > previous + 1e-9 * (1.0 + std::abs(previous))) ++increases;
      previous = sol.objective;
    }
    if (min_backup_horizon(s, x, g) != scan) ++mismatches;
  }
  return {worst_kkt <= 1e-6 && mismatches == 0 && increases == 0,
          fmt("worst KKT %.2e over %ld optimal solves; backup mismatches %ld/200; objective increases in B %ld",
              worst_kkt, optimal, mismatches, increases)};
}

Outcome formula_utilities() {
  using Decimal = boost::multiprecision::cpp_dec_float_50;
  RngStream r(6);
  long wrong = 0;
  for (int i = 0; i < 100; ++i) {
    const double vartheta = std::exp(r.uniform(-3.0, 5.0));
    const double varphi = r.uniform(0.01, 0.999);
    const double v = 1.0 + std::exp(r.uniform(-5.0, 10.0));
    const long t_final = static_cast<long>(r.uniform() * 300);
    const Decimal w = (log(Decimal(vartheta) * Decimal(v)) + Decimal(t_final) * log(Decimal(2))) / -log(Decimal(varphi));
    if (twait_bound(vartheta, varphi, v, t_final) != std::max(0L, static_cast<long>(ceil(w)))) ++wrong;
    const double c_col = std::exp(r.uniform(-4.0, 5.0));
    if (tcol_bound(c_col, t_final) != static_cast<long>(ceil(Decimal(c_col) * Decimal(t_final)))) ++wrong;
  }
  const DriftBounds hand = verify_drift_certificate(
      {DenseMatrix::Identity(2, 2), 0.5 * DenseMatrix::Identity(2, 2), 0.5 * DenseMatrix::Identity(2, 2),
       DenseMatrix::Zero(2, 2)});
  const bool hand_ok =
      std::abs(hand.mu - 0.75) < 1e-12 && std::abs(hand.level - 2.0) < 1e-12 && std::abs(hand.k - 1.5) < 1e-12;

  DriftCertificate c;
  c.p = DenseMatrix::Identity(2, 2);
  c.p(1, 1) = 2.0;
  c.a_tilde = DenseMatrix(2, 2);
  c.a_tilde << 0.5, 0.3, -0.2, 0.6;
  c.m = 0.3 * c.p;
  c.sigma_w = 0.3 * DenseMatrix::Identity(2, 2);
  const DriftBounds b = verify_drift_certificate(c);
  long drift_violations = 0;
  for (int i = 0; i < 100; ++i) {
    const double angle = r.uniform(0.0, 2.0 * std::numbers::pi);
    Vector dir{{std::cos(angle), std::sin(angle)}};
    dir /= std::sqrt(dir.dot(c.p * dir));
    // Just outside the small set, where the drift inequality must hold.
    const Vector x = dir * std::sqrt(b.level * r.uniform(1.0001, 4.0));
    double sum = 0.0;
    double sq = 0.0;
    const int n = 10000;
    for (int j = 0; j < n; ++j) {
      const Vector w{{r.normal(), r.normal()}};
      const double v = lyapunov_value(c.p, c.a_tilde * x + c.sigma_w * w);
      sum += v;
      sq += v * v;
    }
    const double mean = sum / n;
    const double se = std::sqrt(std::max(0.0, sq / n - mean * mean) / n);
    if (mean > b.mu * lyapunov_value(c.p, x) + 3.0 * se) ++drift_violations;
  }
  return {wrong == 0 && hand_ok && drift_violations == 0,
          fmt("bound mismatches %ld/200; hand example mu=%.4f level=%.4f K=%.4f; Monte Carlo drift violations %ld/100",
              wrong, hand.mu, hand.level, hand.k, drift_violations)};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

Outcome determinism() {
  ExperimentConfig cfg = config_for("dcdc.toml", {Method::kLearned}, "desk");
  cfg.profiles["desk"] = Schedule{50, 200, 15, 2000};
  const fs::path root = fs::temp_directory_path() / fs::path("gptight-accept-" + std::to_string(std::chrono::steady_clock::now().time_since_epoch().count()));
  fs::remove_all(root);
  run_cell(cfg, Method::kLearned, 0.1, 7, root / "a");
  run_cell(cfg, Method::kLearned, 0.1, 7, root / "b");
  Outcome o;
  for (const char* f : {"steps.csv", "updates.csv"}) {
    const std::string a = slurp(root / "a" / f);
    const bool same = !a.empty() && a == slurp(root / "b" / f);
    o.pass = o.pass && same;
    o.detail += fmt("%s %s (%zu bytes); ", f, same ? "identical" : "DIFFERENT", a.size());
  }
  fs::remove_all(root);
  return o;
}

}  // namespace
}  // namespace gptight

int main(int argc, char** argv) {
  using namespace gptight;
  const bool long_run = argc > 1 && std::string(argv[1]) == "--long";
  if (long_run) {
    report("criterion 1 full-schedule learned satisfaction", full_schedule);
  } else {
    report("criterion 2 desk-scale convergence", desk_convergence);
    report("criterion 3 tightness vs baselines", baseline_tightness);
    report("criterion 4 GP correctness", gp_correctness);
    report("criterion 5 QP and backup horizon", qp_and_backup);
    report("criterion 6 formula utilities", formula_utilities);
    report("criterion 7 determinism", determinism);
  }
  std::printf("%d criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
