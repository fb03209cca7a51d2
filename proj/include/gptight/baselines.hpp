#pragma once

#include <vector>

#include "gptight/numerics.hpp"
#include "gptight/plant.hpp"
#include "gptight/rng.hpp"
#include "gptight/smpc.hpp"

namespace gptight {

/// Open-loop prediction-error covariances Sigma_0..Sigma_{N-1}, no feedback gain.
struct ErrorCovarianceLadder {
  std::vector<DenseMatrix> sigma;

  static ErrorCovarianceLadder build(const DenseMatrix& a, const DenseMatrix& sigma_w, int horizon);
  /// Standard deviation of H_x,r e_tau, stacked like a TighteningVector.
  Vector row_stddev(const AffineConstraint& constraint) const;
};

/// Upper standard-normal quantile z with Phi(z) = p, by bisection to 1e-10.
double normal_quantile(double p);

TighteningVector chebyshev_tightening(const DenseMatrix& a, const DenseMatrix& sigma_w,
                                      const AffineConstraint& constraint, double delta, int horizon);

TighteningVector gaussian_tightening(const DenseMatrix& a, const DenseMatrix& sigma_w,
                                     const AffineConstraint& constraint, double delta, int horizon);

/// Requires samples >= ceil(10 / delta).
TighteningVector scenario_tightening(const DenseMatrix& a, const NoiseModel& noise, const AffineConstraint& constraint,
                                     double delta, int horizon, long samples, RngStream rng);

}  // namespace gptight
