#pragma once

#include <variant>

#include "gptight/numerics.hpp"
#include "gptight/rng.hpp"

namespace gptight {

/// Independent per-component uniform noise on [lower, upper].
struct UniformBoxNoise {
  Vector lower;
  Vector upper;
};

/// Independent per-component Gaussian noise.
struct GaussianDiagNoise {
  Vector mean;
  Vector stddev;
};

using NoiseModel = std::variant<UniformBoxNoise, GaussianDiagNoise>;

Eigen::Index noise_dim(const NoiseModel& model);
/// Throws ValidationError if lower > upper or a standard deviation is not positive.
void validate(const NoiseModel& model);
/// Diagonal covariance of the noise (exact for both kinds).
DenseMatrix noise_covariance(const NoiseModel& model);
Vector sample_noise(const NoiseModel& model, RngStream& rng);

/// h(x) = H_x x - offset; satisfied iff h(x) <= 0 componentwise.
struct AffineConstraint {
  DenseMatrix h_x;
  Vector offset;

  Eigen::Index rows() const { return h_x.rows(); }
  Vector evaluate(const Vector& x) const { return h_x * x - offset; }
};

/// 1 iff every row of h(x) is <= 0 (the boundary counts as satisfied).
int constraint_label(const AffineConstraint& c, const Vector& x);

/// x+ = A x + B u + w.
struct LinearPlant {
  DenseMatrix a;
  DenseMatrix b;
  NoiseModel noise;
  AffineConstraint constraint;

  Eigen::Index state_dim() const { return a.rows(); }
  Eigen::Index input_dim() const { return b.cols(); }

  void validate() const;
};

Vector step(const LinearPlant& plant, const Vector& x, const Vector& u, RngStream& rng);
/// Noise-free transition, used where the disturbance is supplied externally.
Vector step_nominal(const LinearPlant& plant, const Vector& x, const Vector& u);

}  // namespace gptight
