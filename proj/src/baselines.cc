#include "gptight/baselines.hpp"

#include <algorithm>
#include <cmath>

#include "gptight/errors.hpp"

namespace gptight {

namespace {

void check_delta(double delta) {
  if (!(delta > 0.0 && delta < 1.0)) throw ValidationError("delta: must lie in (0, 1)");
}

void check_horizon(int horizon) {
  if (horizon < 1) throw ValidationError("horizon: must be >= 1");
}

double standard_normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

}  // namespace

ErrorCovarianceLadder ErrorCovarianceLadder::build(const DenseMatrix& a, const DenseMatrix& sigma_w, int horizon) {
  check_horizon(horizon);
  if (a.rows() != a.cols() || sigma_w.rows() != a.rows() || sigma_w.cols() != a.cols()) {
    throw DimensionError("covariance ladder: A and Sigma_w must be square of equal size");
  }
  ErrorCovarianceLadder ladder;
  ladder.sigma.reserve(static_cast<size_t>(horizon));
  DenseMatrix s = DenseMatrix::Zero(a.rows(), a.cols());
  for (int tau = 0; tau < horizon; ++tau) {
    ladder.sigma.push_back(s);
    s = a * s * a.transpose() + sigma_w;
    s = 0.5 * (s + s.transpose()).eval();
  }
  return ladder;
}

Vector ErrorCovarianceLadder::row_stddev(const AffineConstraint& constraint) const {
  const Eigen::Index dc = constraint.rows();
  Vector out(static_cast<Eigen::Index>(sigma.size()) * dc);
  for (size_t tau = 0; tau < sigma.size(); ++tau) {
    for (Eigen::Index r = 0; r < dc; ++r) {
      const auto row = constraint.h_x.row(r);
      const double var = (row * sigma[tau] * row.transpose())(0, 0);
      out(static_cast<Eigen::Index>(tau) * dc + r) = std::sqrt(std::max(0.0, var));
    }
  }
  return out;
}

double normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) throw DomainError("normal_quantile: p must lie in (0, 1)");
  double lo = -40.0;
  double hi = 40.0;
  while (hi - lo > 1e-10) {
    const double mid = 0.5 * (lo + hi);
    if (standard_normal_cdf(mid) < p) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return 0.5 * (lo + hi);
}

TighteningVector chebyshev_tightening(const DenseMatrix& a, const DenseMatrix& sigma_w,
                                      const AffineConstraint& constraint, double delta, int horizon) {
  check_delta(delta);
  const Vector sd = ErrorCovarianceLadder::build(a, sigma_w, horizon).row_stddev(constraint);
  return {std::sqrt((1.0 - delta) / delta) * sd};
}

TighteningVector gaussian_tightening(const DenseMatrix& a, const DenseMatrix& sigma_w,
                                     const AffineConstraint& constraint, double delta, int horizon) {
  check_delta(delta);
  const Vector sd = ErrorCovarianceLadder::build(a, sigma_w, horizon).row_stddev(constraint);
  // Exactly zero at the median rather than a bisection residue.
  const double z = delta == 0.5 ? 0.0 : normal_quantile(1.0 - delta);
  return {z * sd};
}

TighteningVector scenario_tightening(const DenseMatrix& a, const NoiseModel& noise, const AffineConstraint& constraint,
                                     double delta, int horizon, long samples, RngStream rng) {
  check_delta(delta);
  check_horizon(horizon);
  validate(noise);
  if (noise_dim(noise) != a.rows()) throw DimensionError("scenario_tightening: noise dimension must match A");
  const long required = static_cast<long>(std::ceil(10.0 / delta - 1e-12));
  if (samples < required) throw ValidationError("scenario_tightening: sample count below ceil(10 / delta)");

  const Eigen::Index dc = constraint.rows();
  const Eigen::Index rows = horizon * dc;
  DenseMatrix values(rows, samples);
  for (long j = 0; j < samples; ++j) {
    Vector e = Vector::Zero(a.rows());
    for (int tau = 0; tau < horizon; ++tau) {
      values.col(j).segment(tau * dc, dc) = constraint.h_x * e;
      e = a * e + sample_noise(noise, rng);
    }
  }
  const long rank = static_cast<long>(std::ceil((1.0 - delta) * static_cast<double>(samples) - 1e-9));
  const long k = std::clamp(rank, 1L, samples) - 1;
  Vector g(rows);
  std::vector<double> buffer(static_cast<size_t>(samples));
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (long j = 0; j < samples; ++j) buffer[static_cast<size_t>(j)] = values(r, j);
    std::nth_element(buffer.begin(), buffer.begin() + k, buffer.end());
    g(r) = buffer[static_cast<size_t>(k)];
  }
  return {g};
}

}  // namespace gptight
