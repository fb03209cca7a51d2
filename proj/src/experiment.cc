#include "gptight/experiment.hpp"

#include <atomic>
#include <chrono>
#include <cmath>
#include <algorithm>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <iostream>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include <toml.hpp>

#include "gptight/baselines.hpp"
#include "gptight/csv.hpp"
#include "gptight/errors.hpp"
#include "gptight/gp_classify.hpp"
#include "gptight/numerics.hpp"

namespace gptight {

std::string to_string(Method m) {
  switch (m) {
    case Method::kLearned:
      return "learned";
    case Method::kChebyshev:
      return "chebyshev";
    case Method::kGaussian:
      return "gaussian";
    case Method::kScenario:
      return "scenario";
  }
  return "unknown";
}

Method parse_method(const std::string& name) {
  if (name == "learned") return Method::kLearned;
  if (name == "chebyshev") return Method::kChebyshev;
  if (name == "gaussian") return Method::kGaussian;
  if (name == "scenario") return Method::kScenario;
  throw ValidationError("methods: unknown method '" + name + "'");
}

std::map<std::string, Schedule> default_profiles() {
  return {{"desk", {200, 1000, 100, 10000}}, {"paper", {500, 5000, 150, 20000}}};
}

const Schedule& ExperimentConfig::schedule() const {
  const auto it = profiles.find(profile);
  if (it == profiles.end()) throw ValidationError("profile: unknown profile '" + profile + "'");
  return it->second;
}

TightenerConfig ExperimentConfig::tightener_for(double delta) const {
  TightenerConfig t = tightener;
  const Schedule& s = schedule();
  t.delta = delta;
  if (t_wait_bound) {
    t.t_wait = *t_wait_bound;
  } else {
    t.t_wait = s.t_wait;
  }
  t.t_col = s.t_col;
  t.t_final = s.t_final;
  return t;
}

void ExperimentConfig::validate() const {
  plant.validate();
  ocp.validate();
  if (x0.size() != plant.state_dim()) throw ValidationError("plant.x0: length must equal the state dimension");
  if (ocp.a.rows() != plant.a.rows() || ocp.b.cols() != plant.b.cols()) {
    throw ValidationError("ocp: model dimensions must match the plant");
  }
  if (methods.empty()) throw ValidationError("methods: at least one method is required");
  if (deltas.empty()) throw ValidationError("deltas: at least one risk level is required");
  for (double d : deltas) {
    if (!(d > 0.0 && d < 1.0)) throw ValidationError("deltas: every value must lie in (0, 1)");
  }
  if (seeds.empty()) throw ValidationError("seeds: at least one seed is required");
  if (burn_in < 0) throw ValidationError("evaluation.burn_in: must be >= 0");
  const Schedule& s = schedule();
  if (s.eval_horizon < 1) throw ValidationError("profiles." + profile + ".eval_horizon: must be >= 1");
  for (Method m : methods) {
    if (m == Method::kLearned) {
      if (!space) throw ValidationError("gamma_space: required for the learned method");
      if (space->full_dim() != ocp.tightening_dim()) {
        throw ValidationError("gamma_space.embedding: rows must equal horizon * constraint rows");
      }
      if (s.t_final < 1 || s.t_col < 1 || s.t_wait < 0) {
        throw ValidationError("profiles." + profile + ": t_final and t_col must be >= 1, t_wait >= 0");
      }
      for (double d : deltas) tightener_for(d).validate(*space);
    }
    if (m == Method::kScenario) {
      for (double d : deltas) {
        if (scenario_samples < static_cast<long>(std::ceil(10.0 / d - 1e-12))) {
          throw ValidationError("baselines.scenario_samples: must be >= ceil(10 / delta)");
        }
      }
    }
  }
}

namespace {

[[noreturn]] void unknown_key(const toml::key& key, const std::string& path) {
  const auto& pos = key.source().begin;
  throw ParseError("unknown key '" + path + std::string(key.str()) + "'", static_cast<int>(pos.line),
                   static_cast<int>(pos.column));
}

// Typed view of one TOML table that remembers which keys were read, so
// leftovers can be reported as unknown.
class Section {
 public:
  Section(const toml::table& table, std::string path) : table_(table), path_(std::move(path)) {}

  bool has(const std::string& key) const { return table_.contains(key); }

  std::string field(const std::string& key) const { return path_ + key; }

  const toml::node* get(const std::string& key) {
    used_.insert(key);
    return table_.get(key);
  }

  const toml::node& require(const std::string& key) {
    const toml::node* n = get(key);
    if (!n) throw ValidationError(field(key) + ": missing");
    return *n;
  }

  double number(const std::string& key) { return to_number(require(key), field(key)); }
  double number(const std::string& key, double fallback) {
    const toml::node* n = get(key);
    return n ? to_number(*n, field(key)) : fallback;
  }

  long integer(const std::string& key) { return to_integer(require(key), field(key)); }
  long integer(const std::string& key, long fallback) {
    const toml::node* n = get(key);
    return n ? to_integer(*n, field(key)) : fallback;
  }

  std::string text(const std::string& key, const std::string& fallback) {
    const toml::node* n = get(key);
    if (!n) return fallback;
    if (!n->is_string()) throw ValidationError(field(key) + ": expected a string");
    return std::string(*n->value<std::string_view>());
  }

  // Accepts a scalar as a vector of length one.
  Vector vector(const std::string& key) { return to_vector(require(key), field(key)); }

  DenseMatrix matrix(const std::string& key) { return to_matrix(require(key), field(key)); }

  std::vector<std::string> strings(const std::string& key) {
    const toml::node& n = require(key);
    const toml::array* arr = n.as_array();
    if (!arr) throw ValidationError(field(key) + ": expected an array of strings");
    std::vector<std::string> out;
    for (const toml::node& e : *arr) {
      if (!e.is_string()) throw ValidationError(field(key) + ": expected an array of strings");
      out.emplace_back(*e.value<std::string_view>());
    }
    return out;
  }

  std::optional<Section> table(const std::string& key) {
    const toml::node* n = get(key);
    if (!n) return std::nullopt;
    const toml::table* t = n->as_table();
    if (!t) throw ValidationError(field(key) + ": expected a table");
    return Section(*t, field(key) + ".");
  }

  Section required_table(const std::string& key) {
    auto t = table(key);
    if (!t) throw ValidationError(field(key) + ": missing section");
    return *t;
  }

  void finish() const {
    for (const auto& [key, node] : table_) {
      if (!used_.contains(std::string(key.str()))) unknown_key(key, path_);
    }
  }

  const toml::table& raw() const { return table_; }

  static double to_number(const toml::node& n, const std::string& field) {
    if (auto v = n.value<double>(); v && (n.is_floating_point() || n.is_integer())) return *v;
    throw ValidationError(field + ": expected a number");
  }

  static long to_integer(const toml::node& n, const std::string& field) {
    if (auto v = n.value<int64_t>(); v && n.is_integer()) return static_cast<long>(*v);
    throw ValidationError(field + ": expected an integer");
  }

  static Vector to_vector(const toml::node& n, const std::string& field) {
    if (n.is_number()) return Vector::Constant(1, to_number(n, field));
    const toml::array* arr = n.as_array();
    if (!arr) throw ValidationError(field + ": expected a number or an array of numbers");
    Vector v(static_cast<Eigen::Index>(arr->size()));
    for (size_t i = 0; i < arr->size(); ++i) v(static_cast<Eigen::Index>(i)) = to_number(*arr->get(i), field);
    return v;
  }

  static DenseMatrix to_matrix(const toml::node& n, const std::string& field) {
    const toml::array* rows = n.as_array();
    if (!rows || rows->empty()) throw ValidationError(field + ": expected a non-empty array of rows");
    DenseMatrix m;
    for (size_t r = 0; r < rows->size(); ++r) {
      const toml::array* row = rows->get(r)->as_array();
      if (!row) throw ValidationError(field + ": expected an array of rows");
      if (r == 0) m.resize(static_cast<Eigen::Index>(rows->size()), static_cast<Eigen::Index>(row->size()));
      if (static_cast<Eigen::Index>(row->size()) != m.cols()) throw ValidationError(field + ": ragged rows");
      for (size_t c = 0; c < row->size(); ++c) {
        m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = to_number(*row->get(c), field);
      }
    }
    return m;
  }

 private:
  const toml::table& table_;
  std::string path_;
  std::set<std::string> used_;
};

NoiseModel read_noise(Section s) {
  const std::string kind = s.text("kind", "");
  NoiseModel model;
  if (kind == "uniform") {
    model = UniformBoxNoise{s.vector("lower"), s.vector("upper")};
  } else if (kind == "gaussian") {
    const Vector sd = s.vector("stddev");
    const Vector mean = s.has("mean") ? s.vector("mean") : Vector::Zero(sd.size());
    model = GaussianDiagNoise{mean, sd};
  } else {
    throw ValidationError(s.field("kind") + ": expected \"uniform\" or \"gaussian\"");
  }
  s.finish();
  return model;
}

void read_plant(Section s, ExperimentConfig& cfg) {
  cfg.plant.a = s.matrix("a");
  cfg.plant.b = s.matrix("b");
  cfg.x0 = s.has("x0") ? s.vector("x0") : Vector::Zero(cfg.plant.a.rows());
  cfg.plant.noise = read_noise(s.required_table("noise"));
  Section c = s.required_table("constraint");
  cfg.plant.constraint.h_x = c.matrix("h_x");
  cfg.plant.constraint.offset =
      c.has("offset") ? c.vector("offset") : Vector::Zero(cfg.plant.constraint.h_x.rows());
  c.finish();
  s.finish();
  try {
    validate(cfg.plant.noise);
  } catch (const ValidationError& e) {
    throw ValidationError(std::string("plant.noise: ") + e.what());
  }
  if (noise_dim(cfg.plant.noise) != cfg.plant.a.rows()) {
    throw ValidationError("plant.noise: dimension must equal the state dimension");
  }
}

void read_ocp(Section s, ExperimentConfig& cfg) {
  OcpSpec& o = cfg.ocp;
  o.horizon = static_cast<int>(s.integer("horizon"));
  o.a = s.has("a") ? s.matrix("a") : cfg.plant.a;
  o.b = s.has("b") ? s.matrix("b") : cfg.plant.b;
  o.q = s.matrix("q");
  o.r = s.matrix("r");
  o.input_lower = s.vector("input_lower");
  o.input_upper = s.vector("input_upper");
  o.slack_weight = s.number("slack_weight", 1e8);
  o.constraint = cfg.plant.constraint;
  const std::string terminal = s.text("terminal", "lyapunov");
  if (terminal == "matrix") {
    o.p = s.matrix("p");
  } else if (terminal == "lyapunov" || terminal == "lyapunov_transposed") {
    if (o.a.rows() != o.a.cols() || o.q.rows() != o.a.rows() || o.q.cols() != o.a.cols()) {
      throw ValidationError("ocp.q: must be square with the state dimension");
    }
    const auto form = terminal == "lyapunov" ? LyapunovForm::kAPAt : LyapunovForm::kAtPA;
    try {
      o.p = solve_discrete_lyapunov(o.a, o.q, form);
    } catch (const DivergenceError& e) {
      throw ValidationError(std::string("ocp.terminal: ") + e.what());
    }
  } else {
    throw ValidationError("ocp.terminal: expected \"lyapunov\", \"lyapunov_transposed\" or \"matrix\"");
  }
  s.finish();
}

void read_gamma_space(Section s, ExperimentConfig& cfg) {
  const Vector lo = s.vector("lower");
  const Vector hi = s.vector("upper");
  const Vector res_raw = s.vector("resolution");
  std::vector<int> res;
  for (Eigen::Index i = 0; i < res_raw.size(); ++i) {
    if (res_raw(i) != std::floor(res_raw(i)) || res_raw(i) < 1) {
      throw ValidationError("gamma_space.resolution: expected positive integers");
    }
    res.push_back(static_cast<int>(res_raw(i)));
  }
  DenseMatrix embedding =
      s.has("embedding") ? s.matrix("embedding") : DenseMatrix::Ones(cfg.ocp.tightening_dim(), lo.size());
  s.finish();
  cfg.space.emplace(std::move(embedding), lo, hi, std::move(res));
}

void read_tightener(Section s, ExperimentConfig& cfg) {
  TightenerConfig& t = cfg.tightener;
  t.c_rand = s.integer("c_rand", 100);
  t.refit_every = static_cast<int>(s.integer("refit_every", 1));
  t.step_log_stride = s.integer("step_log_stride", 0);
  if (s.has("weights")) t.weights = s.vector("weights");
  t.gamma0 = s.has("gamma0") ? s.vector("gamma0") : Vector::Zero(cfg.space ? cfg.space->reduced_dim() : 1);
  const std::string rule = s.text("t_wait_rule", "fixed");
  if (rule == "bound") {
    Section b = s.required_table("t_wait_bound");
    TwaitFromBound bound;
    bound.vartheta = b.number("vartheta");
    bound.varphi = b.number("varphi");
    bound.p = b.has("p") ? b.matrix("p") : cfg.ocp.p;
    b.finish();
    cfg.t_wait_bound = bound;
  } else if (rule != "fixed") {
    throw ValidationError("tightener.t_wait_rule: expected \"fixed\" or \"bound\"");
  }
  if (auto p = s.table("prior")) {
    t.prior.log_psi_mean = p->number("log_psi_mean", t.prior.log_psi_mean);
    t.prior.log_psi_std = p->number("log_psi_std", t.prior.log_psi_std);
    t.prior.log_lambda_mean = p->number("log_lambda_mean", t.prior.log_lambda_mean);
    t.prior.log_lambda_std = p->number("log_lambda_std", t.prior.log_lambda_std);
    p->finish();
  }
  if (auto g = s.table("hyper_grid")) {
    t.hyper_grid.points_per_axis = static_cast<int>(g->integer("points_per_axis", t.hyper_grid.points_per_axis));
    t.hyper_grid.half_width = g->number("half_width", t.hyper_grid.half_width);
    g->finish();
  }
  s.finish();
}

void read_profiles(Section s, ExperimentConfig& cfg) {
  for (const auto& [key, node] : s.raw()) {
    const std::string name(key.str());
    Section p = *s.table(name);
    Schedule base = cfg.profiles.contains(name) ? cfg.profiles[name] : Schedule{};
    base.t_wait = p.integer("t_wait", base.t_wait);
    base.t_col = p.integer("t_col", base.t_col);
    base.t_final = p.integer("t_final", base.t_final);
    base.eval_horizon = p.integer("eval_horizon", base.eval_horizon);
    p.finish();
    cfg.profiles[name] = base;
  }
}

ExperimentConfig from_table(const toml::table& root) {
  ExperimentConfig cfg;
  Section top(root, "");
  cfg.name = top.text("name", "experiment");
  for (const std::string& m : top.strings("methods")) cfg.methods.push_back(parse_method(m));

  const bool has_deltas = top.has("deltas");
  const bool has_targets = top.has("satisfaction_targets");
  if (has_deltas && has_targets) {
    throw ValidationError("deltas: give either deltas or satisfaction_targets, not both");
  }
  if (!has_deltas && !has_targets) throw ValidationError("deltas: missing");
  if (has_deltas) {
    const Vector d = top.vector("deltas");
    cfg.deltas.assign(d.data(), d.data() + d.size());
  } else {
    const Vector targets = top.vector("satisfaction_targets");
    for (Eigen::Index i = 0; i < targets.size(); ++i) {
      if (!(targets(i) > 0.0 && targets(i) < 1.0)) {
        throw ValidationError("satisfaction_targets: every value must lie in (0, 1)");
      }
      cfg.deltas.push_back(1.0 - targets(i));
    }
  }

  const toml::node& seeds = top.require("seeds");
  const toml::array* arr = seeds.as_array();
  if (!arr) throw ValidationError("seeds: expected an array of non-negative integers");
  for (const toml::node& s : *arr) {
    const long v = Section::to_integer(s, "seeds");
    if (v < 0) throw ValidationError("seeds: expected non-negative integers");
    cfg.seeds.push_back(static_cast<std::uint64_t>(v));
  }
  cfg.profile = top.text("profile", cfg.profile);
  cfg.output_dir = top.text("output_dir", "");

  read_plant(top.required_table("plant"), cfg);
  read_ocp(top.required_table("ocp"), cfg);
  if (auto g = top.table("gamma_space")) read_gamma_space(*g, cfg);
  if (auto t = top.table("tightener")) {
    read_tightener(*t, cfg);
  } else {
    cfg.tightener.gamma0 = Vector::Zero(cfg.space ? cfg.space->reduced_dim() : 1);
  }
  if (auto e = top.table("evaluation")) {
    cfg.burn_in = e->integer("burn_in", cfg.burn_in);
    e->finish();
  }
  if (auto b = top.table("baselines")) {
    cfg.scenario_samples = b->integer("scenario_samples", cfg.scenario_samples);
    b->finish();
  }
  if (auto p = top.table("profiles")) read_profiles(*p, cfg);
  top.finish();
  cfg.validate();
  return cfg;
}

}  // namespace

ExperimentConfig parse_config(const std::string& text, const std::string& source_name) {
  toml::table root;
  try {
    root = toml::parse(text, source_name);
  } catch (const toml::parse_error& e) {
    throw ParseError(std::string(e.description()), static_cast<int>(e.source().begin.line),
                     static_cast<int>(e.source().begin.column));
  }
  return from_table(root);
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("config: cannot open '" + path.string() + "'");
  std::ostringstream text;
  text << in.rdbuf();
  return parse_config(text.str(), path.string());
}

std::filesystem::path resolve_output_dir(const ExperimentConfig& cfg, const RunOptions& opts) {
  if (opts.output_dir) return *opts.output_dir;
  if (!cfg.output_dir.empty()) return cfg.output_dir;
  if (const char* env = std::getenv(kOutputDirEnv); env && *env) return env;
  return "gptight-out";
}

std::string cell_name(Method method, double delta, std::uint64_t seed) {
  return to_string(method) + "_delta" + format_double(delta) + "_seed" + std::to_string(seed);
}

namespace {

std::string join_vector(const Vector& v) {
  std::string out;
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (i) out += ';';
    out += format_double(v(i));
  }
  return out;
}

void step_header(std::vector<std::string>& h, Eigen::Index nx, Eigen::Index nu) {
  h.push_back("t");
  for (Eigen::Index i = 0; i < nx; ++i) h.push_back("x" + std::to_string(i + 1));
  if (nu == 1) {
    h.push_back("u");
  } else {
    for (Eigen::Index i = 0; i < nu; ++i) h.push_back("u" + std::to_string(i + 1));
  }
  h.push_back("label");
  h.push_back("stage_cost");
}

std::string steps_csv(const std::vector<StepRecord>& steps, Eigen::Index nx, Eigen::Index nu) {
  std::ostringstream out;
  CsvWriter w(out);
  std::vector<std::string> header;
  step_header(header, nx, nu);
  w.row(header);
  for (const StepRecord& s : steps) {
    std::vector<std::string> row{std::to_string(s.time)};
    for (Eigen::Index i = 0; i < s.state.size(); ++i) row.push_back(format_double(s.state(i)));
    for (Eigen::Index i = 0; i < s.input.size(); ++i) row.push_back(format_double(s.input(i)));
    row.push_back(std::to_string(s.label));
    row.push_back(format_double(s.stage_cost));
    w.row(row);
  }
  return out.str();
}

std::string updates_csv(const RunTrace& trace) {
  std::ostringstream out;
  CsvWriter w(out);
  w.row({"i", "t_i", "gamma_tilde", "feasible", "random", "psi", "lambda", "dataset_size", "t_wait",
         "labels_collected"});
  for (const UpdateRecord& u : trace.updates) {
    w.row({std::to_string(u.index), std::to_string(u.time), join_vector(u.gamma_tilde), u.feasible ? "1" : "0",
           u.random ? "1" : "0", format_double(u.psi), format_double(u.lambda), std::to_string(u.dataset_size),
           std::to_string(u.t_wait), std::to_string(u.labels_collected)});
  }
  return out.str();
}

std::string gamma_csv(const TighteningVector& gamma, Eigen::Index dc) {
  std::ostringstream out;
  CsvWriter w(out);
  w.row({"tau", "row", "g"});
  for (Eigen::Index k = 0; k < gamma.g.size(); ++k) {
    w.row({std::to_string(k / dc), std::to_string(k % dc), format_double(gamma.g(k))});
  }
  return out.str();
}

std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm utc{};
  gmtime_r(&now, &utc);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &utc);
  return buf;
}

}  // namespace

CellResult run_cell(const ExperimentConfig& cfg, Method method, double delta, std::uint64_t seed,
                    const std::optional<std::filesystem::path>& cell_dir) {
  const auto start = std::chrono::steady_clock::now();
  CellResult res;
  res.method = method;
  res.delta = delta;
  res.seed = seed;
  const RngStream root(seed);
  const DenseMatrix sigma_w = noise_covariance(cfg.plant.noise);
  const Eigen::Index dc = cfg.ocp.constraint_dim();

  switch (method) {
    case Method::kLearned: {
      const TightenerConfig t = cfg.tightener_for(delta);
      RunTrace trace = run(cfg.plant, cfg.ocp, *cfg.space, t, root.split("learning"), cfg.x0);
      res.gamma = cfg.space->embed(trace.final_gamma);
      res.gamma_label = join_vector(trace.final_gamma);
      res.final_infeasible = trace.final_infeasible;
      res.trace = std::move(trace);
      break;
    }
    case Method::kChebyshev:
      res.gamma = chebyshev_tightening(cfg.ocp.a, sigma_w, cfg.ocp.constraint, delta, cfg.ocp.horizon);
      break;
    case Method::kGaussian:
      res.gamma = gaussian_tightening(cfg.ocp.a, sigma_w, cfg.ocp.constraint, delta, cfg.ocp.horizon);
      break;
    case Method::kScenario:
      res.gamma = scenario_tightening(cfg.ocp.a, cfg.plant.noise, cfg.ocp.constraint, delta, cfg.ocp.horizon,
                                      cfg.scenario_samples, root.split("scenario"));
      break;
  }
  if (method != Method::kLearned) res.gamma_label = format_double(res.gamma.g.mean());

  // Every method sees the same evaluation noise for a given seed.
  const MpcController controller(cfg.ocp);
  const ClosedLoopResult eval = evaluate_closed_loop(cfg.plant, controller, res.gamma, cfg.schedule().eval_horizon,
                                                     cfg.burn_in, root.split("evaluation"), cfg.x0,
                                                     cell_dir.has_value());
  res.empirical_h = eval.satisfaction_rate;
  res.avg_cost = eval.average_cost;

  if (cell_dir) {
    std::filesystem::create_directories(*cell_dir);
    const Eigen::Index nx = cfg.plant.state_dim();
    const Eigen::Index nu = cfg.plant.input_dim();
    write_file_atomic(*cell_dir / "steps.csv", steps_csv(eval.steps, nx, nu));
    write_file_atomic(*cell_dir / "gamma.csv", gamma_csv(res.gamma, dc));
    if (res.trace) {
      write_file_atomic(*cell_dir / "updates.csv", updates_csv(*res.trace));
      if (!res.trace->steps.empty()) {
        write_file_atomic(*cell_dir / "train_steps.csv", steps_csv(res.trace->steps, nx, nu));
      }
      std::ostringstream final_row;
      CsvWriter w(final_row);
      w.row({"gamma_tilde", "predicted_probability", "final_infeasible", "total_steps"});
      w.row({res.gamma_label, format_double(res.trace->final_probability), res.final_infeasible ? "1" : "0",
             std::to_string(res.trace->total_steps)});
      write_file_atomic(*cell_dir / "final.csv", final_row.str());
      if (res.trace->final_model) {
        std::ostringstream snap;
        write_snapshot(snap, *res.trace->final_model);
        write_file_atomic(*cell_dir / "model.snapshot", snap.str());
      }
    }
  }
  res.runtime_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return res;
}

int run_experiment(const ExperimentConfig& base, const RunOptions& opts) {
  ExperimentConfig cfg = base;
  if (opts.profile) {
    cfg.profile = *opts.profile;
    cfg.validate();
  }
  const std::filesystem::path out = resolve_output_dir(cfg, opts);
  std::filesystem::create_directories(out);
  const std::string started_at = utc_timestamp();

  struct Cell {
    Method method;
    double delta;
    std::uint64_t seed;
  };
  std::vector<Cell> cells;
  for (Method m : cfg.methods) {
    for (double d : cfg.deltas) {
      for (std::uint64_t s : cfg.seeds) cells.push_back({m, d, s + opts.seed_offset});
    }
  }

  std::vector<std::optional<CellResult>> results(cells.size());
  std::vector<std::string> failures(cells.size());
  std::atomic<size_t> next{0};
  std::mutex log_mutex;
  auto worker = [&] {
    for (size_t k = next++; k < cells.size(); k = next++) {
      const Cell& c = cells[k];
      const std::string name = cell_name(c.method, c.delta, c.seed);
      try {
        results[k] = run_cell(cfg, c.method, c.delta, c.seed, out / name);
        if (opts.verbose) {
          std::lock_guard lock(log_mutex);
          std::cerr << name << ": H=" << results[k]->empirical_h << " cost=" << results[k]->avg_cost << " ("
                    << results[k]->runtime_s << " s)\n";
        }
      } catch (const std::exception& e) {
        failures[k] = e.what();
        std::lock_guard lock(log_mutex);
        std::cerr << name << ": failed: " << e.what() << "\n";
      }
    }
  };
  const int jobs = std::max(1, std::min<int>(opts.jobs, static_cast<int>(cells.size())));
  std::vector<std::thread> pool;
  for (int j = 1; j < jobs; ++j) pool.emplace_back(worker);
  worker();
  for (std::thread& t : pool) t.join();

  std::ostringstream summary;
  CsvWriter w(summary);
  w.row({"method", "delta", "seed", "gamma_tilde_final", "empirical_H", "avg_cost", "runtime_s"});
  bool failed = false;
  for (size_t k = 0; k < cells.size(); ++k) {
    if (!results[k]) {
      failed = true;
      continue;
    }
    const CellResult& r = *results[k];
    w.row({to_string(r.method), format_double(r.delta), std::to_string(r.seed), r.gamma_label,
           format_double(r.empirical_h), format_double(r.avg_cost), format_double(r.runtime_s)});
  }
  write_file_atomic(out / "summary.csv", summary.str());

  // Wall-clock data lives here so the other CSVs stay reproducible.
  std::ostringstream meta;
  CsvWriter m(meta);
  m.row({"key", "value"});
  m.row({"name", cfg.name});
  m.row({"profile", cfg.profile});
  m.row({"started_at", started_at});
  m.row({"finished_at", utc_timestamp()});
  m.row({"jobs", std::to_string(jobs)});
  m.row({"failed_cells", std::to_string(std::count_if(results.begin(), results.end(),
                                                      [](const auto& r) { return !r.has_value(); }))});
  write_file_atomic(out / "metadata.csv", meta.str());
  return failed ? 1 : 0;
}

ReplaySummary replay(const std::filesystem::path& cell_dir) {
  const std::filesystem::path file =
      std::filesystem::is_directory(cell_dir) ? cell_dir / "steps.csv" : cell_dir;
  const CsvTable table = read_csv_file(file);
  const size_t label = table.column("label");
  const size_t cost = table.column("stage_cost");
  ReplaySummary s;
  long satisfied = 0;
  double total = 0.0;
  for (const auto& row : table.rows) {
    satisfied += row.at(label) == "1" ? 1 : 0;
    total += parse_double(row.at(cost));
    ++s.steps;
  }
  if (s.steps == 0) throw ValidationError("replay: steps.csv has no rows");
  s.empirical_h = static_cast<double>(satisfied) / static_cast<double>(s.steps);
  s.avg_cost = total / static_cast<double>(s.steps);
  return s;
}

}  // namespace gptight
