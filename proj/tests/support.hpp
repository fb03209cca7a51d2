#pragma once

#include <random>

#include "gptight/numerics.hpp"
#include "gptight/plant.hpp"
#include "gptight/smpc.hpp"

namespace gptight::testing {

// DC-DC converter model used throughout the experiments.
inline DenseMatrix dcdc_a() {
  DenseMatrix a(2, 2);
  a << 1.0, 0.0075, -0.143, 0.996;
  return a;
}

inline DenseMatrix dcdc_b() {
  DenseMatrix b(2, 1);
  b << 4.798, 0.115;
  return b;
}

inline AffineConstraint first_state_nonpositive() {
  AffineConstraint c;
  c.h_x = DenseMatrix(1, 2);
  c.h_x << 1.0, 0.0;
  c.offset = Vector::Zero(1);
  return c;
}

inline NoiseModel uniform_noise(double half_width = 0.14) {
  return UniformBoxNoise{Vector::Constant(2, -half_width), Vector::Constant(2, half_width)};
}

inline NoiseModel gaussian_noise(double sd = 0.08) { return GaussianDiagNoise{Vector::Zero(2), Vector::Constant(2, sd)}; }

inline LinearPlant dcdc_plant(NoiseModel noise = uniform_noise()) {
  return {dcdc_a(), dcdc_b(), std::move(noise), first_state_nonpositive()};
}

inline OcpSpec dcdc_spec(int horizon = 10) {
  OcpSpec s;
  s.horizon = horizon;
  s.a = dcdc_a();
  s.b = dcdc_b();
  s.q = DenseMatrix::Zero(2, 2);
  s.q(0, 0) = 1.0;
  s.q(1, 1) = 10.0;
  s.r = DenseMatrix::Ones(1, 1);
  s.p = solve_discrete_lyapunov(s.a, s.q);
  s.input_lower = Vector::Constant(1, -0.2);
  s.input_upper = Vector::Constant(1, 0.2);
  s.constraint = first_state_nonpositive();
  return s;
}

inline DenseMatrix random_matrix(std::mt19937_64& gen, Eigen::Index rows, Eigen::Index cols, double scale = 1.0) {
  std::normal_distribution<double> n(0.0, scale);
  DenseMatrix m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = n(gen);
  }
  return m;
}

inline Vector random_vector(std::mt19937_64& gen, Eigen::Index n, double scale = 1.0) {
  return random_matrix(gen, n, 1, scale);
}

}  // namespace gptight::testing
