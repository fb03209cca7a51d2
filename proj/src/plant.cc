#include "gptight/plant.hpp"

#include "gptight/errors.hpp"

namespace gptight {

namespace {
template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;
}  // namespace

Eigen::Index noise_dim(const NoiseModel& model) {
  return std::visit(Overloaded{[](const UniformBoxNoise& n) { return n.lower.size(); },
                               [](const GaussianDiagNoise& n) { return n.mean.size(); }},
                    model);
}

void validate(const NoiseModel& model) {
  std::visit(Overloaded{[](const UniformBoxNoise& n) {
                          if (n.lower.size() != n.upper.size()) {
                            throw ValidationError("noise: lower and upper differ in length");
                          }
                          if ((n.lower.array() > n.upper.array()).any()) {
                            throw ValidationError("noise: lower bound exceeds upper bound");
                          }
                        },
                        [](const GaussianDiagNoise& n) {
                          if (n.mean.size() != n.stddev.size()) {
                            throw ValidationError("noise: mean and stddev differ in length");
                          }
                          if (!(n.stddev.array() > 0.0).all()) {
                            throw ValidationError("noise: standard deviations must be positive");
                          }
                        }},
             model);
}

DenseMatrix noise_covariance(const NoiseModel& model) {
  return std::visit(Overloaded{[](const UniformBoxNoise& n) -> DenseMatrix {
                                 const Vector width = n.upper - n.lower;
                                 return (width.array().square() / 12.0).matrix().asDiagonal();
                               },
                               [](const GaussianDiagNoise& n) -> DenseMatrix {
                                 return n.stddev.array().square().matrix().asDiagonal();
                               }},
                    model);
}

Vector sample_noise(const NoiseModel& model, RngStream& rng) {
  return std::visit(Overloaded{[&](const UniformBoxNoise& n) {
                                 Vector w(n.lower.size());
                                 for (Eigen::Index i = 0; i < w.size(); ++i) {
                                   w(i) = n.lower(i) == n.upper(i) ? n.lower(i)
                                                                   : rng.uniform(n.lower(i), n.upper(i));
                                 }
                                 return w;
                               },
                               [&](const GaussianDiagNoise& n) {
                                 Vector w(n.mean.size());
                                 for (Eigen::Index i = 0; i < w.size(); ++i) {
                                   w(i) = n.mean(i) + n.stddev(i) * rng.normal();
                                 }
                                 return w;
                               }},
                    model);
}

int constraint_label(const AffineConstraint& c, const Vector& x) {
  if (c.h_x.cols() != x.size()) throw DimensionError("constraint_label: state has wrong length");
  return (c.evaluate(x).array() <= 0.0).all() ? 1 : 0;
}

void LinearPlant::validate() const {
  const Eigen::Index n = a.rows();
  if (a.cols() != n) throw ValidationError("plant: A must be square");
  if (b.rows() != n) throw ValidationError("plant: B must have as many rows as A");
  if (!a.allFinite() || !b.allFinite()) throw ValidationError("plant: A and B must be finite");
  gptight::validate(noise);
  if (noise_dim(noise) != n) throw ValidationError("plant: noise dimension must equal state dimension");
  if (constraint.rows() < 1) throw ValidationError("plant: constraint needs at least one row");
  if (constraint.h_x.cols() != n || constraint.offset.size() != constraint.rows()) {
    throw ValidationError("plant: constraint has inconsistent dimensions");
  }
}

Vector step_nominal(const LinearPlant& plant, const Vector& x, const Vector& u) {
  if (x.size() != plant.state_dim() || u.size() != plant.input_dim()) {
    throw DimensionError("step: state or input has wrong length");
  }
  return plant.a * x + plant.b * u;
}

Vector step(const LinearPlant& plant, const Vector& x, const Vector& u, RngStream& rng) {
  Vector next = step_nominal(plant, x, u);
  next += sample_noise(plant.noise, rng);
  return next;
}

}  // namespace gptight
