#pragma once

#include <Eigen/Dense>

namespace gptight {

using DenseMatrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Lower-triangular Cholesky factor of a symmetric matrix.
///
/// If a pivot is non-positive, the factorization is retried once with
/// 1e-10 * trace(M) / n added to the diagonal. A second failure throws
/// SingularError. Only the lower triangle of `m` is read.
DenseMatrix cholesky(const DenseMatrix& m);

/// Solves (L L^T) x = b given the lower factor L.
Vector cholesky_solve(const DenseMatrix& lower, const Vector& b);
DenseMatrix cholesky_solve(const DenseMatrix& lower, const DenseMatrix& b);

enum class LyapunovForm {
  kAPAt,  // P = A P A^T + Q
  kAtPA,  // P = A^T P A + Q
};

/// Solves the discrete Lyapunov equation by fixed-point iteration.
///
/// The default form is P = A P A^T + Q. Throws DivergenceError if the
/// iteration has not converged after 1e5 sweeps, and DimensionError on
/// mismatched shapes.
DenseMatrix solve_discrete_lyapunov(const DenseMatrix& a, const DenseMatrix& q,
                                    LyapunovForm form = LyapunovForm::kAPAt);

/// Largest |eigenvalue| of a square matrix.
double spectral_radius(const DenseMatrix& a);

bool all_finite(const DenseMatrix& m);

}  // namespace gptight
