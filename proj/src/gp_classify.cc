#include "gptight/gp_classify.hpp"

#include <cmath>
#include <istream>
#include <limits>
#include <numbers>
#include <ostream>
#include <sstream>
#include <string>

#include "gptight/csv.hpp"
#include "gptight/errors.hpp"

namespace gptight {

namespace {

constexpr double kTailSwitch = 25.0;

// 1 - 1/(2x^2) + 3/(4x^4) - 15/(8x^6): asymptotic series of sqrt(pi) x erfcx(x).
double erfcx_series(double x) {
  const double inv2 = 1.0 / (x * x);
  return 1.0 + inv2 * (-0.5 + inv2 * (0.75 - inv2 * 1.875));
}

DenseMatrix squared_distances(std::span<const Vector> inputs) {
  const Eigen::Index m = static_cast<Eigen::Index>(inputs.size());
  DenseMatrix d2 = DenseMatrix::Zero(m, m);
  for (Eigen::Index i = 0; i < m; ++i) {
    for (Eigen::Index j = 0; j < i; ++j) {
      const double v = (inputs[static_cast<size_t>(i)] - inputs[static_cast<size_t>(j)]).squaredNorm();
      d2(i, j) = v;
      d2(j, i) = v;
    }
  }
  return d2;
}

DenseMatrix gram_from_distances(const SeKernel& kernel, const DenseMatrix& d2) {
  const double scale = -0.5 * kernel.lambda * kernel.lambda;
  return ((scale * d2.array()).exp() / kernel.psi).matrix();
}

LaplaceFit fit_with_gram(const ClassificationDataset& data, const SeKernel& kernel, const DenseMatrix& k,
                         const LaplaceOptions& options) {
  const Eigen::Index m = static_cast<Eigen::Index>(data.size());
  Vector f = Vector::Zero(m);
  Vector a = Vector::Zero(m);
  Vector g(m), w(m), sw(m);
  DenseMatrix bmat(m, m), lower;

  auto evaluate = [&](const Vector& ff, Vector* grad, Vector* curv) {
    double total = 0.0;
    for (Eigen::Index i = 0; i < m; ++i) {
      const auto t = binomial_log_likelihood(data.trials[static_cast<size_t>(i)],
                                             data.successes[static_cast<size_t>(i)], ff(i));
      total += t.value;
      if (grad) (*grad)(i) = t.d1;
      if (curv) (*curv)(i) = std::max(0.0, -t.d2);
    }
    return total;
  };
  auto factor = [&]() {
    sw = w.cwiseSqrt();
    bmat = (sw * sw.transpose()).cwiseProduct(k);
    bmat.diagonal().array() += 1.0;
    lower = cholesky(bmat);
  };

  double objective = evaluate(f, &g, &w);  // a = f = 0, so the prior term vanishes
  int step = 0;
  double grad_norm = (g - a).cwiseAbs().maxCoeff();
  // With thousands of trials per input the gradient is a difference of O(n)
  // terms, so an absolute tolerance can sit below round-off.
  auto converged = [&] {
    const double scale = 1.0 + g.cwiseAbs().maxCoeff() + a.cwiseAbs().maxCoeff();
    return grad_norm <= options.gradient_tolerance || grad_norm <= 1e-10 * scale;
  };
  int stalled = 0;
  while (!converged()) {
    if (step >= options.max_newton_steps) {
      throw NonConvergenceError("laplace_fit: Newton did not converge (gradient " + format_double(grad_norm) + ")");
    }
    ++step;
    factor();
    const Vector b = w.cwiseProduct(f) + g;
    Vector v = lower.triangularView<Eigen::Lower>().solve(sw.cwiseProduct(k * b));
    const Vector a_new = b - sw.cwiseProduct(lower.transpose().triangularView<Eigen::Upper>().solve(v));
    const Vector f_new = k * a_new;

    double alpha = 1.0;
    bool accepted = false;
    Vector a_try, f_try;
    double obj_try = 0.0;
    for (int halving = 0; halving < 40; ++halving) {
      a_try = a + alpha * (a_new - a);
      f_try = f + alpha * (f_new - f);
      obj_try = evaluate(f_try, nullptr, nullptr) - 0.5 * a_try.dot(f_try);
      if (std::isfinite(obj_try) && obj_try >= objective - 1e-13 * std::abs(objective)) {
        accepted = true;
        break;
      }
      alpha *= 0.5;
    }
    const double scale = 1.0 + g.cwiseAbs().maxCoeff() + a.cwiseAbs().maxCoeff();
    if (!accepted) {
      // No ascent direction left at working precision.
      if (grad_norm <= 1e-6 * scale) break;
      throw NonConvergenceError("laplace_fit: line search failed");
    }
    const double improvement = obj_try - objective;
    a = a_try;
    f = f_try;
    objective = obj_try;
    evaluate(f, &g, &w);
    grad_norm = (g - a).cwiseAbs().maxCoeff();
    // Stagnation: an ill-conditioned K limits how well a = K^-1 f is resolved.
    stalled = improvement <= 1e-14 * (1.0 + std::abs(objective)) ? stalled + 1 : 0;
    if (stalled >= 2 && grad_norm <= 1e-6 * scale) break;
  }
  factor();

  LaplaceFit fit;
  fit.inputs = data.inputs;
  fit.trials = data.trials;
  fit.successes = data.successes;
  fit.kernel = kernel;
  fit.mode = f;
  fit.w = w;
  fit.likelihood_grad = g;
  fit.b_factor = lower;
  fit.gradient_norm = grad_norm;
  fit.newton_steps = step;
  fit.log_marginal_likelihood =
      -0.5 * a.dot(f) + evaluate(f, nullptr, nullptr) - lower.diagonal().array().log().sum();
  return fit;
}

}  // namespace

double SeKernel::operator()(const Vector& a, const Vector& b) const {
  return std::exp(-0.5 * lambda * lambda * (a - b).squaredNorm()) / psi;
}

void SeKernel::validate() const {
  if (!(psi > 0.0) || !std::isfinite(psi)) throw ValidationError("kernel: psi must be positive and finite");
  if (!(lambda > 0.0) || !std::isfinite(lambda)) {
    throw ValidationError("kernel: lambda must be positive and finite");
  }
}

double HyperPrior::log_density(double log_psi, double log_lambda) const {
  auto term = [](double x, double mean, double std) {
    if (std::isinf(std)) return 0.0;
    const double z = (x - mean) / std;
    return -0.5 * z * z - std::log(std) - 0.5 * std::log(2.0 * std::numbers::pi);
  };
  return term(log_psi, log_psi_mean, log_psi_std) + term(log_lambda, log_lambda_mean, log_lambda_std);
}

long ClassificationDataset::total_trials() const {
  long total = 0;
  for (long n : trials) total += n;
  return total;
}

void ClassificationDataset::add(const Vector& input, long n, long k) {
  for (size_t i = 0; i < inputs.size(); ++i) {
    if (inputs[i].size() == input.size() && inputs[i] == input) {
      trials[i] += n;
      successes[i] += k;
      return;
    }
  }
  inputs.push_back(input);
  trials.push_back(n);
  successes.push_back(k);
}

void ClassificationDataset::validate() const {
  if (trials.size() != inputs.size() || successes.size() != inputs.size()) {
    throw ValidationError("dataset: column lengths differ");
  }
  for (size_t i = 0; i < inputs.size(); ++i) {
    if (trials[i] < 1) throw ValidationError("dataset: every input needs at least one trial");
    if (successes[i] < 0 || successes[i] > trials[i]) throw ValidationError("dataset: successes outside [0, trials]");
    for (size_t j = 0; j < i; ++j) {
      if (inputs[i].size() == inputs[j].size() && inputs[i] == inputs[j]) {
        throw ValidationError("dataset: inputs must be pairwise distinct");
      }
    }
  }
}

ClassificationDataset aggregate(std::span<const LabeledSample> raw) {
  ClassificationDataset data;
  for (const LabeledSample& s : raw) data.add(s.input, 1, s.label != 0 ? 1 : 0);
  return data;
}

double sigmoid(double z) { return 0.5 * std::erfc(-z); }

double log_sigmoid(double z) {
  if (z > 0.0) return std::log1p(-0.5 * std::erfc(z));
  const double x = -z;
  if (x <= kTailSwitch) return std::log(0.5 * std::erfc(x));
  return std::log(0.5) - x * x - std::log(x) - 0.5 * std::log(std::numbers::pi) + std::log(erfcx_series(x));
}

double dlog_sigmoid(double z) {
  if (z >= -kTailSwitch) {
    return 2.0 / std::sqrt(std::numbers::pi) * std::exp(-z * z) / std::erfc(-z);
  }
  const double x = -z;
  return 2.0 * x / erfcx_series(x);
}

BinomialTerms binomial_log_likelihood(long n, long k, double f) {
  BinomialTerms t{0.0, 0.0, 0.0};
  const double kk = static_cast<double>(k);
  const double fails = static_cast<double>(n - k);
  if (k > 0) {
    const double r = dlog_sigmoid(f);
    t.value += kk * log_sigmoid(f);
    t.d1 += kk * r;
    t.d2 -= kk * r * (2.0 * f + r);
  }
  if (n - k > 0) {
    const double r = dlog_sigmoid(-f);
    t.value += fails * log_sigmoid(-f);
    t.d1 -= fails * r;
    t.d2 -= fails * r * (-2.0 * f + r);
  }
  return t;
}

DenseMatrix gram(const SeKernel& kernel, std::span<const Vector> inputs) {
  return gram_from_distances(kernel, squared_distances(inputs));
}

double log_posterior(const ClassificationDataset& data, const DenseMatrix& k_inverse, const Vector& f) {
  double total = 0.0;
  for (size_t i = 0; i < data.size(); ++i) {
    total += binomial_log_likelihood(data.trials[i], data.successes[i], f(static_cast<Eigen::Index>(i))).value;
  }
  return total - 0.5 * f.dot(k_inverse * f);
}

Vector log_posterior_gradient(const ClassificationDataset& data, const DenseMatrix& k_inverse, const Vector& f) {
  Vector g = -(k_inverse * f);
  for (size_t i = 0; i < data.size(); ++i) {
    const auto idx = static_cast<Eigen::Index>(i);
    g(idx) += binomial_log_likelihood(data.trials[i], data.successes[i], f(idx)).d1;
  }
  return g;
}

DenseMatrix log_posterior_hessian(const ClassificationDataset& data, const DenseMatrix& k_inverse,
                                  const Vector& f) {
  DenseMatrix h = -k_inverse;
  for (size_t i = 0; i < data.size(); ++i) {
    const auto idx = static_cast<Eigen::Index>(i);
    h(idx, idx) += binomial_log_likelihood(data.trials[i], data.successes[i], f(idx)).d2;
  }
  return h;
}

LaplaceFit laplace_fit(const ClassificationDataset& data, const SeKernel& kernel, const LaplaceOptions& options) {
  if (data.empty()) throw ValidationError("laplace_fit: dataset is empty");
  data.validate();
  kernel.validate();
  return fit_with_gram(data, kernel, gram(kernel, data.inputs), options);
}

Prediction predict(const LaplaceFit& fit, const Vector& input) {
  const Eigen::Index m = fit.mode.size();
  Vector k_star(m);
  for (Eigen::Index i = 0; i < m; ++i) k_star(i) = fit.kernel(input, fit.inputs[static_cast<size_t>(i)]);
  const double mean = k_star.dot(fit.likelihood_grad);
  const Vector v = fit.b_factor.triangularView<Eigen::Lower>().solve(fit.w.cwiseSqrt().cwiseProduct(k_star));
  const double var = std::max(0.0, 1.0 / fit.kernel.psi - v.squaredNorm());
  return {mean, var, sigmoid(mean / std::sqrt(1.0 + 2.0 * var))};
}

SeKernel map_hyperparameters(const ClassificationDataset& data, const HyperPrior& prior, const HyperGrid& grid) {
  if (data.empty()) throw ValidationError("map_hyperparameters: dataset is empty");
  data.validate();
  const DenseMatrix d2 = squared_distances(data.inputs);
  const int points = grid.points_per_axis;
  const double step = points > 1 ? 2.0 * grid.half_width / (points - 1) : 0.0;

  bool found = false;
  SeKernel best;
  double best_value = -std::numeric_limits<double>::infinity();
  for (int li = 0; li < points; ++li) {
    const double log_lambda = prior.log_lambda_mean - grid.half_width + step * li;
    const DenseMatrix unit = gram_from_distances({1.0, std::exp(log_lambda)}, d2);
    for (int pi = 0; pi < points; ++pi) {
      const double log_psi = prior.log_psi_mean - grid.half_width + step * pi;
      const SeKernel kernel{std::exp(log_psi), std::exp(log_lambda)};
      double value;
      try {
        value = fit_with_gram(data, kernel, unit / kernel.psi, {}).log_marginal_likelihood +
                prior.log_density(log_psi, log_lambda);
      } catch (const NonConvergenceError&) {
        continue;
      } catch (const SingularError&) {
        continue;
      }
      if (!std::isfinite(value)) continue;
      // Iteration runs in ascending lambda then psi, so >= implements the tie-break.
      if (!found || value >= best_value) {
        best = kernel;
        best_value = value;
        found = true;
      }
    }
  }
  if (!found) throw AllRejectedError("map_hyperparameters: every grid candidate failed to fit");
  return best;
}

void write_snapshot(std::ostream& out, const LaplaceFit& fit) {
  const size_t m = fit.inputs.size();
  const Eigen::Index dim = m > 0 ? fit.inputs.front().size() : 0;
  out << "gptight-gp-snapshot 1\n";
  out << "psi " << format_double(fit.kernel.psi) << '\n';
  out << "lambda " << format_double(fit.kernel.lambda) << '\n';
  out << "entries " << m << ' ' << dim << '\n';
  for (size_t i = 0; i < m; ++i) {
    for (Eigen::Index d = 0; d < dim; ++d) out << format_double(fit.inputs[i](d)) << ' ';
    out << fit.trials[i] << ' ' << fit.successes[i] << '\n';
  }
  out << "mode";
  for (Eigen::Index i = 0; i < fit.mode.size(); ++i) out << ' ' << format_double(fit.mode(i));
  out << '\n';
}

LaplaceFit read_snapshot(std::istream& in) {
  auto fail = [](const std::string& what) -> void { throw ValidationError("snapshot: " + what); };
  std::string tag;
  int version = 0;
  if (!(in >> tag >> version) || tag != "gptight-gp-snapshot") fail("missing header");
  if (version != 1) fail("unsupported version " + std::to_string(version));
  std::string word, value;
  SeKernel kernel;
  if (!(in >> word >> value) || word != "psi") fail("expected psi");
  kernel.psi = parse_double(value);
  if (!(in >> word >> value) || word != "lambda") fail("expected lambda");
  kernel.lambda = parse_double(value);
  size_t m = 0;
  Eigen::Index dim = 0;
  if (!(in >> word >> m >> dim) || word != "entries") fail("expected entries");
  ClassificationDataset data;
  for (size_t i = 0; i < m; ++i) {
    Vector x(dim);
    for (Eigen::Index d = 0; d < dim; ++d) {
      if (!(in >> value)) fail("truncated entry");
      x(d) = parse_double(value);
    }
    long n = 0, k = 0;
    if (!(in >> n >> k)) fail("truncated entry");
    data.inputs.push_back(x);
    data.trials.push_back(n);
    data.successes.push_back(k);
  }
  if (!(in >> word) || word != "mode") fail("expected mode");
  for (size_t i = 0; i < m; ++i) {
    if (!(in >> value)) fail("truncated mode");
    parse_double(value);
  }
  return laplace_fit(data, kernel);
}

}  // namespace gptight
