#include "gptight/numerics.hpp"

#include <cmath>
#include <string>

#include "gptight/errors.hpp"

namespace gptight {

namespace {

// Returns false if a pivot is not strictly positive.
bool try_cholesky(const DenseMatrix& m, double jitter, DenseMatrix* lower) {
  const Eigen::Index n = m.rows();
  DenseMatrix& l = *lower;
  l.setZero(n, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    double diag = m(j, j) + jitter;
    for (Eigen::Index k = 0; k < j; ++k) diag -= l(j, k) * l(j, k);
    if (!(diag > 0.0) || !std::isfinite(diag)) return false;
    const double ljj = std::sqrt(diag);
    l(j, j) = ljj;
    for (Eigen::Index i = j + 1; i < n; ++i) {
      double s = m(i, j);
      for (Eigen::Index k = 0; k < j; ++k) s -= l(i, k) * l(j, k);
      l(i, j) = s / ljj;
    }
  }
  return true;
}

}  // namespace

DenseMatrix cholesky(const DenseMatrix& m) {
  if (m.rows() != m.cols()) {
    throw DimensionError("cholesky: matrix is " + std::to_string(m.rows()) + "x" +
                         std::to_string(m.cols()));
  }
  DenseMatrix lower;
  if (m.rows() == 0) return lower;
  if (try_cholesky(m, 0.0, &lower)) return lower;
  const double jitter = 1e-10 * m.trace() / static_cast<double>(m.rows());
  if (jitter > 0.0 && try_cholesky(m, jitter, &lower)) return lower;
  throw SingularError("cholesky: matrix is not positive definite");
}

Vector cholesky_solve(const DenseMatrix& lower, const Vector& b) {
  const auto l = lower.triangularView<Eigen::Lower>();
  Vector y = l.solve(b);
  return l.transpose().solve(y);
}

DenseMatrix cholesky_solve(const DenseMatrix& lower, const DenseMatrix& b) {
  const auto l = lower.triangularView<Eigen::Lower>();
  DenseMatrix y = l.solve(b);
  return l.transpose().solve(y);
}

DenseMatrix solve_discrete_lyapunov(const DenseMatrix& a, const DenseMatrix& q,
                                    LyapunovForm form) {
  if (a.rows() != a.cols() || q.rows() != q.cols() || a.rows() != q.rows()) {
    throw DimensionError("solve_discrete_lyapunov: A and Q must be square and equal size");
  }
  constexpr int kMaxSweeps = 100000;
  const double q_norm = q.cwiseAbs().rowwise().sum().maxCoeff();
  const double tol = 1e-8 * std::max(q_norm, 1e-300);
  DenseMatrix p = q;
  DenseMatrix next(q.rows(), q.cols());
  for (int sweep = 0; sweep < kMaxSweeps; ++sweep) {
    if (form == LyapunovForm::kAPAt) {
      next.noalias() = a * p * a.transpose();
    } else {
      next.noalias() = a.transpose() * p * a;
    }
    next += q;
    next = 0.5 * (next + next.transpose()).eval();
    if (!all_finite(next)) break;
    // Residual of the fixed point equation, evaluated at the new iterate.
    const double step = (next - p).cwiseAbs().rowwise().sum().maxCoeff();
    p.swap(next);
    if (step <= 1e-3 * tol) return p;
  }
  throw DivergenceError("solve_discrete_lyapunov: fixed-point iteration did not converge");
}

double spectral_radius(const DenseMatrix& a) {
  if (a.size() == 0) return 0.0;
  Eigen::EigenSolver<DenseMatrix> es(a, false);
  return es.eigenvalues().cwiseAbs().maxCoeff();
}

bool all_finite(const DenseMatrix& m) { return m.allFinite(); }

}  // namespace gptight
