#include "gptight/tightener.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "gptight/bounds.hpp"
#include "gptight/errors.hpp"

namespace gptight {

namespace {

bool lexicographic_less(const Vector& a, const Vector& b) {
  return std::lexicographical_compare(a.data(), a.data() + a.size(), b.data(), b.data() + b.size());
}

}  // namespace

GammaSpace::GammaSpace(DenseMatrix embedding, Vector lower, Vector upper, std::vector<int> resolution)
    : embedding_(std::move(embedding)),
      lower_(std::move(lower)),
      upper_(std::move(upper)),
      resolution_(std::move(resolution)) {
  const Eigen::Index d = lower_.size();
  if (d < 1 || upper_.size() != d || static_cast<Eigen::Index>(resolution_.size()) != d ||
      embedding_.cols() != d) {
    throw ValidationError("gamma_space: embedding, bounds and resolution must agree in dimension");
  }
  for (Eigen::Index i = 0; i < d; ++i) {
    if (lower_(i) > upper_(i)) throw ValidationError("gamma_space: lower bound exceeds upper bound");
    if (resolution_[static_cast<size_t>(i)] < 2 && lower_(i) < upper_(i)) {
      throw ValidationError("gamma_space: resolution must be >= 2");
    }
  }
}

GammaSpace GammaSpace::scalar(Eigen::Index full_dim, double lo, double hi, int resolution) {
  return GammaSpace(DenseMatrix::Ones(full_dim, 1), Vector::Constant(1, lo), Vector::Constant(1, hi),
                    {resolution});
}

double GammaSpace::coordinate(Eigen::Index dim, int index) const {
  const int res = resolution_[static_cast<size_t>(dim)];
  if (res < 2 || lower_(dim) == upper_(dim)) return lower_(dim);
  if (index == res - 1) return upper_(dim);
  return lower_(dim) + (upper_(dim) - lower_(dim)) * static_cast<double>(index) / static_cast<double>(res - 1);
}

Vector GammaSpace::snap(const Vector& reduced) const {
  Vector out(reduced.size());
  for (Eigen::Index i = 0; i < reduced.size(); ++i) {
    const int res = resolution_[static_cast<size_t>(i)];
    if (res < 2 || lower_(i) == upper_(i)) {
      out(i) = lower_(i);
      continue;
    }
    const double unit = (reduced(i) - lower_(i)) / (upper_(i) - lower_(i));
    const long index = std::lround(std::clamp(unit, 0.0, 1.0) * (res - 1));
    out(i) = coordinate(i, static_cast<int>(index));
  }
  return out;
}

std::vector<Vector> GammaSpace::ordered_grid(const Vector& weights) const {
  const Eigen::Index d = reduced_dim();
  std::vector<Vector> points;
  std::vector<int> index(static_cast<size_t>(d), 0);
  while (true) {
    Vector p(d);
    for (Eigen::Index i = 0; i < d; ++i) p(i) = coordinate(i, index[static_cast<size_t>(i)]);
    points.push_back(p);
    Eigen::Index k = d - 1;
    while (k >= 0) {
      const int res = std::max(1, resolution_[static_cast<size_t>(k)]);
      if (++index[static_cast<size_t>(k)] < res) break;
      index[static_cast<size_t>(k)] = 0;
      --k;
    }
    if (k < 0) break;
  }
  const Vector cost_row = embedding_.transpose() * weights;
  std::stable_sort(points.begin(), points.end(), [&](const Vector& a, const Vector& b) {
    const double ca = cost_row.dot(a);
    const double cb = cost_row.dot(b);
    if (ca != cb) return ca < cb;
    return lexicographic_less(a, b);
  });
  return points;
}

void TightenerConfig::validate(const GammaSpace& space) const {
  if (!(delta > 0.0 && delta < 1.0)) throw ValidationError("tightener.delta: must lie in (0, 1)");
  if (weights.size() != 0) {
    if (weights.size() != space.full_dim()) throw ValidationError("tightener.weights: length must equal d_gamma");
    if (!(weights.array() > 0.0).all()) throw ValidationError("tightener.weights: must be strictly positive");
  }
  if (const long* fixed = std::get_if<long>(&t_wait); fixed && *fixed < 0) {
    throw ValidationError("tightener.t_wait: must be >= 0");
  }
  if (t_col < 1) throw ValidationError("tightener.t_col: must be >= 1");
  if (t_final < 1) throw ValidationError("tightener.t_final: must be >= 1");
  if (c_rand < 1) throw ValidationError("tightener.c_rand: must be >= 1");
  if (refit_every < 1) throw ValidationError("tightener.refit_every: must be >= 1");
  if (gamma0.size() != space.reduced_dim()) throw ValidationError("tightener.gamma0: wrong dimension");
  if (step_log_stride < 0) throw ValidationError("tightener.step_log_stride: must be >= 0");
}

Vector TightenerConfig::effective_weights(const GammaSpace& space) const {
  return weights.size() != 0 ? weights : Vector::Ones(space.full_dim());
}

std::optional<Vector> select_gamma(const LaplaceFit& model, const GammaSpace& space, const TightenerConfig& cfg) {
  const double threshold = 1.0 - cfg.delta;
  for (const Vector& candidate : space.ordered_grid(cfg.effective_weights(space))) {
    if (predict(model, candidate).probability >= threshold) return candidate;
  }
  return std::nullopt;
}

Vector random_gamma(const GammaSpace& space, RngStream& rng) {
  Vector draw(space.reduced_dim());
  for (Eigen::Index i = 0; i < draw.size(); ++i) draw(i) = rng.uniform(space.lower()(i), space.upper()(i));
  return space.snap(draw);
}

ClosedLoopResult evaluate_closed_loop(const LinearPlant& plant, const MpcController& controller,
                                      const TighteningVector& gamma, long horizon, long burn_in, RngStream rng,
                                      const Vector& x0, bool keep_steps) {
  if (horizon < 1) throw ValidationError("evaluate_closed_loop: horizon must be >= 1");
  if (burn_in < 0) throw ValidationError("evaluate_closed_loop: burn_in must be >= 0");
  RngStream noise = rng.split("plant-noise");
  ClosedLoopResult result;
  if (keep_steps) result.steps.reserve(static_cast<size_t>(horizon));
  Vector x = x0;
  long satisfied = 0;
  double cost_sum = 0.0;
  for (long t = 0; t < burn_in + horizon; ++t) {
    const Vector u = controller.solve(x, gamma).u0;
    if (t >= burn_in) {
      const int label = constraint_label(plant.constraint, x);
      const double cost = stage_cost(controller.spec(), x, u);
      satisfied += label;
      cost_sum += cost;
      if (keep_steps) result.steps.push_back({t, x, u, label, cost});
    }
    x = step(plant, x, u, noise);
  }
  result.satisfaction_rate = static_cast<double>(satisfied) / static_cast<double>(horizon);
  result.average_cost = cost_sum / static_cast<double>(horizon);
  return result;
}

double estimate_H(const LinearPlant& plant, const OcpSpec& spec, const TighteningVector& gamma, long horizon,
                  long burn_in, RngStream rng, const Vector& x0) {
  return evaluate_closed_loop(plant, MpcController(spec), gamma, horizon, burn_in, rng, x0).satisfaction_rate;
}

RunTrace run(const LinearPlant& plant, const OcpSpec& spec, const GammaSpace& space, const TightenerConfig& cfg,
             RngStream rng, const Vector& x0) {
  plant.validate();
  cfg.validate(space);
  if (space.full_dim() != spec.tightening_dim()) {
    throw ValidationError("gamma_space: embedding rows must equal N * d_c");
  }
  if (x0.size() != plant.state_dim()) throw DimensionError("run: initial state has wrong length");

  const MpcController controller(spec);
  RngStream noise = rng.split("plant-noise");
  RngStream explore = rng.split("exploration");
  const Vector weights = cfg.effective_weights(space);
  const Vector cost_row = space.embedding().transpose() * weights;
  const double threshold = 1.0 - cfg.delta;

  auto waiting_time = [&](const Vector& x) -> long {
    long w = 0;
    if (const long* fixed = std::get_if<long>(&cfg.t_wait)) {
      w = *fixed;
    } else {
      const auto& bound = std::get<TwaitFromBound>(cfg.t_wait);
      w = twait_bound(bound.vartheta, bound.varphi, lyapunov_value(bound.p, x), cfg.t_final);
    }
    // The state at t_i was produced under the previous gamma, so collection
    // can start one step later at the earliest.
    return std::max(1L, w);
  };
  auto remember = [](std::vector<Vector>& visited, const Vector& g) {
    for (const Vector& v : visited) {
      if (v == g) return;
    }
    visited.push_back(g);
  };

  RunTrace trace;
  Vector gamma = space.snap(cfg.gamma0);
  trace.gamma0 = gamma;
  remember(trace.visited, gamma);

  ClassificationDataset data;
  std::optional<SeKernel> kernel;
  std::optional<LaplaceFit> model;

  Vector x = x0;
  long t = 0;
  long t_i = 0;
  long wait = waiting_time(x);
  trace.initial_t_wait = wait;
  long block_labels = 0;
  long block_successes = 0;
  long i = 0;
  while (i < cfg.t_final) {
    const Vector u = controller.solve(x, space.embed(gamma)).u0;
    if (cfg.step_log_stride > 0 && t % cfg.step_log_stride == 0) {
      trace.steps.push_back({t, x, u, constraint_label(plant.constraint, x), stage_cost(spec, x, u)});
    }
    x = step(plant, x, u, noise);
    ++t;

    if (t_i + wait <= t && t < t_i + wait + cfg.t_col) {
      block_successes += constraint_label(plant.constraint, x);
      ++block_labels;
    } else if (t == t_i + wait + cfg.t_col) {
      data.add(gamma, block_labels, block_successes);
      ++i;
      t_i = t;

      UpdateRecord rec;
      rec.index = i;
      rec.time = t;
      rec.state = x;
      rec.labels_collected = block_labels;
      block_labels = 0;
      block_successes = 0;

      if (!kernel || (i - 1) % cfg.refit_every == 0) {
        kernel = map_hyperparameters(data, cfg.prior, cfg.hyper_grid);
      }
      model = laplace_fit(data, *kernel);

      const std::optional<Vector> selected = select_gamma(*model, space, cfg);
      rec.feasible = selected.has_value();
      rec.random = (i % cfg.c_rand == 0) || !selected;
      gamma = rec.random ? random_gamma(space, explore) : *selected;
      remember(trace.visited, gamma);

      rec.gamma_tilde = gamma;
      rec.psi = kernel->psi;
      rec.lambda = kernel->lambda;
      rec.dataset_size = data.size();
      wait = waiting_time(x);
      rec.t_wait = wait;
      trace.updates.push_back(std::move(rec));
    }
  }
  trace.total_steps = t;

  // Final choice among every gamma that was applied or selected.
  double best_cost = 0.0;
  bool found = false;
  double best_fallback = -1.0;
  Vector fallback;
  for (const Vector& g : trace.visited) {
    const double p = predict(*model, g).probability;
    if (p > best_fallback) {
      best_fallback = p;
      fallback = g;
    }
    if (p < threshold) continue;
    const double c = cost_row.dot(g);
    if (!found || c < best_cost || (c == best_cost && lexicographic_less(g, trace.final_gamma))) {
      best_cost = c;
      trace.final_gamma = g;
      trace.final_probability = p;
      found = true;
    }
  }
  if (!found) {
    trace.final_infeasible = true;
    trace.final_gamma = fallback;
    trace.final_probability = best_fallback;
  }
  trace.final_model = std::move(model);
  return trace;
}

}  // namespace gptight
