#include "gptight/bounds.hpp"

#include <cmath>

#include "gptight/errors.hpp"

namespace gptight {

namespace {

// ceil() that treats values within a few ulps of an integer as that integer,
// so formulas that are exact in real arithmetic land on the right side.
long stable_ceil(double v) {
  const double nearest = std::round(v);
  if (std::abs(v - nearest) <= 1e-9 * std::max(1.0, std::abs(v))) return static_cast<long>(nearest);
  return static_cast<long>(std::ceil(v));
}

double symmetric_extreme_eig(const DenseMatrix& m, bool largest) {
  Eigen::SelfAdjointEigenSolver<DenseMatrix> es(0.5 * (m + m.transpose()), Eigen::EigenvaluesOnly);
  return largest ? es.eigenvalues().maxCoeff() : es.eigenvalues().minCoeff();
}

}  // namespace

long twait_bound(double vartheta, double varphi, double v_at_x, long t_final) {
  if (!(varphi > 0.0 && varphi < 1.0)) throw DomainError("twait_bound: varphi must lie in (0, 1)");
  if (!(vartheta > 0.0)) throw DomainError("twait_bound: vartheta must be positive");
  if (!(v_at_x >= 1.0)) throw DomainError("twait_bound: V(x) must be >= 1");
  if (t_final < 0) throw DomainError("twait_bound: t_final must be >= 0");
  const double rhs = (std::log(vartheta * v_at_x) + static_cast<double>(t_final) * std::log(2.0)) / -std::log(varphi);
  return std::max(0L, stable_ceil(rhs));
}

long tcol_bound(double c_col, long t_final) {
  if (!(c_col > 0.0)) throw DomainError("tcol_bound: c_col must be positive");
  return stable_ceil(c_col * static_cast<double>(t_final));
}

double lyapunov_value(const DenseMatrix& p, const Vector& x) { return 1.0 + 0.5 * x.dot(p * x); }

DriftBounds verify_drift_certificate(const DriftCertificate& c) {
  const Eigen::Index n = c.p.rows();
  if (c.p.cols() != n || c.m.rows() != n || c.m.cols() != n || c.a_tilde.rows() != n || c.a_tilde.cols() != n ||
      c.sigma_w.rows() != n || c.sigma_w.cols() != n) {
    throw DimensionError("verify_drift_certificate: all matrices must be n x n");
  }
  constexpr double kMargin = 1e-10;
  if (symmetric_extreme_eig(c.p, false) <= kMargin) throw CertificateError("P is not positive definite");
  const DenseMatrix decrease = c.a_tilde.transpose() * c.p * c.a_tilde - c.p + c.m;
  if (symmetric_extreme_eig(decrease, true) >= -kMargin) {
    throw CertificateError("A~^T P A~ - P + M is not negative definite");
  }
  const DenseMatrix gap = c.p - c.m;
  if (symmetric_extreme_eig(gap, false) <= kMargin) throw CertificateError("P - M is not positive definite");

  Eigen::SelfAdjointEigenSolver<DenseMatrix> es(0.5 * (c.p + c.p.transpose()));
  const DenseMatrix p_inv_sqrt = es.operatorInverseSqrt();
  const double eig_max = symmetric_extreme_eig(p_inv_sqrt * gap * p_inv_sqrt, true);
  const double mu = 0.5 * (1.0 + eig_max);
  if (!(mu < 1.0)) throw CertificateError("contraction factor mu is not below 1");
  const double noise_trace = (c.sigma_w.transpose() * c.p * c.sigma_w).trace();
  const double ratio = noise_trace / (1.0 - mu);
  return {mu, 1.0 + 0.5 * (ratio + 1.0), ratio + 2.0};
}

}  // namespace gptight
