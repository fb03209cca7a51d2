#pragma once

#include <vector>

#include "gptight/numerics.hpp"
#include "gptight/plant.hpp"
#include "gptight/qp.hpp"

namespace gptight {

/// Deterministic finite-horizon OCP with tightened affine state constraints.
///
/// Stage cost x^T Q x + u^T R u for tau = 0..N-1, terminal cost x^T P x,
/// box-constrained inputs, and constraints h(x_tau) <= -g_tau + s_tau for
/// tau = 0..N-1. Slacks are penalised by slack_weight * sum ||s_tau||^2.
struct OcpSpec {
  int horizon = 1;
  DenseMatrix a;
  DenseMatrix b;
  DenseMatrix q;
  DenseMatrix r;
  DenseMatrix p;
  Vector input_lower;
  Vector input_upper;
  AffineConstraint constraint;  // may have zero rows
  double slack_weight = 1e8;

  Eigen::Index state_dim() const { return a.rows(); }
  Eigen::Index input_dim() const { return b.cols(); }
  Eigen::Index constraint_dim() const { return constraint.rows(); }
  Eigen::Index tightening_dim() const { return horizon * constraint_dim(); }

  /// Throws ValidationError naming the offending field.
  void validate() const;
};

/// Stacked tightening offsets g = (g_0, ..., g_{N-1}), each block of length d_c.
struct TighteningVector {
  Vector g;

  static TighteningVector zeros(const OcpSpec& spec) { return {Vector::Zero(spec.tightening_dim())}; }
  static TighteningVector constant(const OcpSpec& spec, double value) {
    return {Vector::Constant(spec.tightening_dim(), value)};
  }

  auto block(Eigen::Index tau, Eigen::Index dc) const { return g.segment(tau * dc, dc); }
};

struct MpcResult {
  Vector u0;
  int backup_horizon = 0;     // number of leading steps with slack, 0 = none
  bool full_relaxation = false;  // every step needed slack
  std::vector<Vector> inputs;  // N entries
  std::vector<Vector> slacks;  // N entries, zero for tau >= backup_horizon
  double cost = 0.0;           // full OCP objective including constant terms
  QpSolution qp;
};

/// Precomputed condensed form of an OcpSpec: x_tau = A^tau x + sum A^(tau-1-j) B u_j.
class MpcController {
 public:
  explicit MpcController(OcpSpec spec);

  const OcpSpec& spec() const { return spec_; }

  /// Decision vector (u_0..u_{N-1}, s_0..s_{B-1}). Throws DimensionError.
  QpProblem build_qp(const Vector& x, const TighteningVector& gamma, int backup) const;

  /// Smallest B in {0..N} whose QP is feasible, with its solution.
  /// Throws InfeasibleError if even B = N is infeasible.
  MpcResult solve(const Vector& x, const TighteningVector& gamma) const;

  /// Solves at a given backup horizon; status may be Infeasible.
  QpSolution solve_at(const Vector& x, const TighteningVector& gamma, int backup) const;

  /// Predicted states x_0..x_N for an input sequence (length N * d_u).
  std::vector<Vector> predict(const Vector& x, const Vector& inputs) const;

  /// Constant part x^T M x of the objective dropped by the QP.
  double constant_cost(const Vector& x) const;

 private:
  void check(const Vector& x, const TighteningVector& gamma, int backup) const;

  OcpSpec spec_;
  DenseMatrix state_free_;     // (N+1) d_x x d_x, rows tau*d_x: A^tau
  DenseMatrix state_forced_;   // (N+1) d_x x N d_u
  DenseMatrix input_hessian_;  // 2 (Gamma^T Qbar Gamma + Rbar)
  DenseMatrix cost_cross_;     // 2 Gamma^T Qbar Phi
  DenseMatrix cost_const_;     // Phi^T Qbar Phi
  DenseMatrix constraint_u_;   // N d_c x N d_u
  DenseMatrix constraint_x_;   // N d_c x d_x
};

QpProblem build_qp(const OcpSpec& spec, const Vector& x, const TighteningVector& gamma, int backup);
int min_backup_horizon(const OcpSpec& spec, const Vector& x, const TighteningVector& gamma);
MpcResult mpc_control(const OcpSpec& spec, const Vector& x, const TighteningVector& gamma);

/// x^T Q x + u^T R u.
double stage_cost(const OcpSpec& spec, const Vector& x, const Vector& u);

}  // namespace gptight
