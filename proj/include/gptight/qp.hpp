#pragma once

#include <optional>

#include "gptight/numerics.hpp"

namespace gptight {

/// min 0.5 z^T H z + c^T z  s.t.  G z <= h,  E z = e.
struct QpProblem {
  DenseMatrix hessian;
  Vector linear_cost;
  DenseMatrix ineq_matrix;
  Vector ineq_upper;
  std::optional<DenseMatrix> eq_matrix;
  std::optional<Vector> eq_rhs;

  Eigen::Index num_vars() const { return hessian.rows(); }
  Eigen::Index num_ineq() const { return ineq_matrix.rows(); }
  Eigen::Index num_eq() const { return eq_matrix ? eq_matrix->rows() : 0; }

  /// Throws DimensionError on inconsistent shapes or an asymmetric Hessian.
  void validate() const;
};

enum class QpStatus { kOptimal, kInfeasible, kMaxIter };

const char* to_string(QpStatus status);

struct QpSolution {
  QpStatus status = QpStatus::kMaxIter;
  Vector primal;
  Vector dual_ineq;  // >= 0 at optimality, one per row of G
  Vector dual_eq;
  double objective = 0.0;
  double kkt_residual = 0.0;
  // Lower bound on min t s.t. G z - t <= h, E z = e, from a Farkas
  // combination of the constraints. Only set when status is kInfeasible.
  double infeasibility_margin = 0.0;
  int iterations = 0;
};

struct QpOptions {
  int max_iterations = 500;
  // Constraint rows with violation below this (scaled by 1 + |h_i|) count as satisfied.
  double feasibility_tolerance = 1e-11;
  double kkt_tolerance = 1e-6;
};

/// Dense dual active-set solver for strictly convex QPs.
///
/// Starts from the unconstrained minimizer and adds violated constraints one
/// at a time, so no feasible starting point is needed. An inconsistent
/// constraint set is detected exactly when a violated row lies in the cone of
/// the active rows; the resulting multipliers are returned as a certificate.
/// The Hessian must be positive definite (SingularError otherwise).
QpSolution solve_qp(const QpProblem& problem, const QpOptions& options = {});

/// Max over stationarity, primal feasibility, dual feasibility and
/// complementarity violations. Computed directly from the problem data.
double kkt_residual(const QpProblem& problem, const Vector& primal, const Vector& dual_ineq,
                    const Vector& dual_eq);

}  // namespace gptight
