#pragma once

#include "gptight/numerics.hpp"

namespace gptight {

/// Smallest admissible waiting time:
/// ceil((log(vartheta * V) + t_final * log 2) / -log(varphi)), floored at 0.
///
/// Throws DomainError unless varphi is in (0, 1), vartheta > 0 and V >= 1.
long twait_bound(double vartheta, double varphi, double v_at_x, long t_final);

/// ceil(c_col * t_final). Throws DomainError unless c_col > 0.
long tcol_bound(double c_col, long t_final);

/// V(x) = 1 + x^T P x / 2.
double lyapunov_value(const DenseMatrix& p, const Vector& x);

/// Quadratic drift certificate for x+ = f(x) + w with f^T P f <= x^T A~^T P A~ x
/// and w ~ N(0, Sigma Sigma^T).
struct DriftCertificate {
  DenseMatrix p;
  DenseMatrix m;
  DenseMatrix a_tilde;
  DenseMatrix sigma_w;
};

struct DriftBounds {
  double mu;     // contraction factor outside the small set, < 1
  double k;      // bound on E[V(x+)] inside the small set
  double level;  // small set is {x : x^T P x <= level}
};

/// Checks A~^T P A~ - P + M < 0 and P - M > 0 (eigenvalue margin 1e-10), then
/// returns mu = (1 + eig_max(P^-1/2 (P - M) P^-1/2)) / 2,
/// level = tr(S^T P S) / (1 - mu) + 2 and K = 1 + (tr(S^T P S) / (1 - mu) + 1) / 2.
/// Throws CertificateError naming the violated condition.
DriftBounds verify_drift_certificate(const DriftCertificate& c);

}  // namespace gptight
