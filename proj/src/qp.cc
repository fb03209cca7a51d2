#include "gptight/qp.hpp"

#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "gptight/errors.hpp"

namespace gptight {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Orthogonal factorization state: J J^T = H^{-1} and R = J^T N for the
// active constraint normals N (first q columns).
class ActiveSetFactor {
 public:
  explicit ActiveSetFactor(const DenseMatrix& lower)
      : n_(lower.rows()), j_(n_, n_), r_(DenseMatrix::Zero(n_, n_)) {
    j_ = lower.transpose().triangularView<Eigen::Upper>().solve(DenseMatrix::Identity(n_, n_));
  }

  Eigen::Index size() const { return q_; }
  const DenseMatrix& j() const { return j_; }

  // d = J^T n, z = J2 J2^T n, r = R^{-1} J1^T n.
  void directions(const Vector& normal, Vector* d, Vector* z, Vector* r) const {
    d->noalias() = j_.transpose() * normal;
    if (q_ < n_) {
      z->noalias() = j_.rightCols(n_ - q_) * d->tail(n_ - q_);
    } else {
      z->setZero(n_);
    }
    *r = d->head(q_);
    if (q_ > 0) {
      r_.topLeftCorner(q_, q_).triangularView<Eigen::Upper>().solveInPlace(*r);
    }
  }

  // Appends a normal whose d = J^T n has been computed. Returns false if the
  // normal is (numerically) dependent on the active ones.
  bool add(Vector d) {
    for (Eigen::Index k = n_ - 1; k > q_; --k) {
      const double a = d(k - 1);
      const double b = d(k);
      if (b == 0.0) continue;
      const double h = std::hypot(a, b);
      const double c = a / h;
      const double s = b / h;
      d(k - 1) = h;
      d(k) = 0.0;
      rotate_columns(k - 1, k, c, s);
    }
    const double scale = d.head(q_ + 1).cwiseAbs().maxCoeff();
    if (std::abs(d(q_)) <= 1e-14 * std::max(scale, 1.0)) return false;
    r_.col(q_).head(q_ + 1) = d.head(q_ + 1);
    ++q_;
    return true;
  }

  void remove(Eigen::Index l) {
    for (Eigen::Index col = l; col + 1 < q_; ++col) {
      r_.col(col) = r_.col(col + 1);
    }
    r_.col(q_ - 1).setZero();
    --q_;
    // Column k now carries a subdiagonal entry at row k + 1.
    for (Eigen::Index k = l; k < q_; ++k) {
      const double a = r_(k, k);
      const double b = r_(k + 1, k);
      if (b == 0.0) continue;
      const double h = std::hypot(a, b);
      const double c = a / h;
      const double s = b / h;
      for (Eigen::Index col = k; col < q_; ++col) {
        const double x = r_(k, col);
        const double y = r_(k + 1, col);
        r_(k, col) = c * x + s * y;
        r_(k + 1, col) = -s * x + c * y;
      }
      r_(k + 1, k) = 0.0;
      rotate_columns(k, k + 1, c, s);
    }
  }

 private:
  void rotate_columns(Eigen::Index a, Eigen::Index b, double c, double s) {
    for (Eigen::Index row = 0; row < n_; ++row) {
      const double x = j_(row, a);
      const double y = j_(row, b);
      j_(row, a) = c * x + s * y;
      j_(row, b) = -s * x + c * y;
    }
  }

  Eigen::Index n_;
  Eigen::Index q_ = 0;
  DenseMatrix j_;
  DenseMatrix r_;
};

struct ActiveEntry {
  Eigen::Index row;  // constraint index
  bool equality;
  double multiplier;  // in the >= convention used internally
};

}  // namespace

const char* to_string(QpStatus status) {
  switch (status) {
    case QpStatus::kOptimal:
      return "Optimal";
    case QpStatus::kInfeasible:
      return "Infeasible";
    case QpStatus::kMaxIter:
      return "MaxIter";
  }
  return "?";
}

void QpProblem::validate() const {
  const Eigen::Index n = hessian.rows();
  if (hessian.cols() != n) throw DimensionError("QpProblem: Hessian is not square");
  if (linear_cost.size() != n) throw DimensionError("QpProblem: linear cost has wrong length");
  if (ineq_matrix.rows() != ineq_upper.size() || (ineq_matrix.rows() > 0 && ineq_matrix.cols() != n)) {
    throw DimensionError("QpProblem: inequality block has inconsistent dimensions");
  }
  if (eq_matrix.has_value() != eq_rhs.has_value()) {
    throw DimensionError("QpProblem: equality matrix and rhs must be given together");
  }
  if (eq_matrix && (eq_matrix->rows() != eq_rhs->size() || (eq_matrix->rows() > 0 && eq_matrix->cols() != n))) {
    throw DimensionError("QpProblem: equality block has inconsistent dimensions");
  }
  const double scale = std::max(1.0, hessian.cwiseAbs().maxCoeff());
  if ((hessian - hessian.transpose()).cwiseAbs().maxCoeff() > 1e-10 * scale) {
    throw DimensionError("QpProblem: Hessian is not symmetric");
  }
}

double kkt_residual(const QpProblem& p, const Vector& z, const Vector& lambda, const Vector& nu) {
  Vector grad = p.hessian * z + p.linear_cost;
  double primal = 0.0;
  double dual = 0.0;
  double comp = 0.0;
  if (p.num_ineq() > 0) {
    grad.noalias() += p.ineq_matrix.transpose() * lambda;
    const Vector slack = p.ineq_matrix * z - p.ineq_upper;
    for (Eigen::Index i = 0; i < slack.size(); ++i) {
      primal = std::max(primal, slack(i));
      dual = std::max(dual, -lambda(i));
      comp = std::max(comp, std::abs(lambda(i) * slack(i)));
    }
  }
  if (p.num_eq() > 0) {
    grad.noalias() += p.eq_matrix->transpose() * nu;
    primal = std::max(primal, (*p.eq_matrix * z - *p.eq_rhs).cwiseAbs().maxCoeff());
  }
  const double stationarity = grad.size() > 0 ? grad.cwiseAbs().maxCoeff() : 0.0;
  return std::max({stationarity, primal, dual, comp});
}

QpSolution solve_qp(const QpProblem& p, const QpOptions& options) {
  p.validate();
  const Eigen::Index n = p.num_vars();
  const Eigen::Index m = p.num_ineq();
  const Eigen::Index meq = p.num_eq();

  QpSolution sol;
  sol.dual_ineq = Vector::Zero(m);
  sol.dual_eq = Vector::Zero(meq);

  const DenseMatrix lower = cholesky(p.hessian);
  ActiveSetFactor factor(lower);
  Vector x = -cholesky_solve(lower, p.linear_cost);

  std::vector<ActiveEntry> active;
  std::vector<bool> is_active(static_cast<size_t>(m), false);
  Vector d(n), z(n), r;

  // Internally every constraint is a >= row: value(x) = normal^T x + offset.
  auto ineq_normal = [&](Eigen::Index i) -> Vector { return -p.ineq_matrix.row(i).transpose(); };
  auto ineq_value = [&](Eigen::Index i) { return p.ineq_upper(i) - p.ineq_matrix.row(i).dot(x); };

  auto finish_infeasible = [&](double violation, const Vector& rr) {
    // Farkas weights: 1 on the violated row, -r on active inequality rows.
    double weight = 1.0;
    for (size_t k = 0; k < active.size(); ++k) {
      if (!active[k].equality) weight += std::max(0.0, -rr(static_cast<Eigen::Index>(k)));
    }
    sol.status = QpStatus::kInfeasible;
    sol.infeasibility_margin = -violation / weight;
    sol.primal = x;
    return sol;
  };

  int iter = 0;

  // Equality constraints enter first and are never dropped.
  for (Eigen::Index k = 0; k < meq; ++k) {
    const Vector normal = p.eq_matrix->row(k).transpose();
    const double value = normal.dot(x) - (*p.eq_rhs)(k);
    factor.directions(normal, &d, &z, &r);
    const double curvature = z.dot(normal);
    if (z.norm() <= 1e-14 * std::max(1.0, normal.norm()) || curvature <= 0.0) {
      if (std::abs(value) <= options.feasibility_tolerance * (1.0 + std::abs((*p.eq_rhs)(k)))) continue;
      sol.status = QpStatus::kInfeasible;
      sol.infeasibility_margin = std::abs(value) / (1.0 + r.cwiseAbs().sum());
      sol.primal = x;
      return sol;
    }
    const double t = -value / curvature;
    x += t * z;
    for (size_t a = 0; a < active.size(); ++a) active[a].multiplier -= t * r(static_cast<Eigen::Index>(a));
    factor.add(d);
    active.push_back({k, true, t});
    ++iter;
  }

  while (true) {
    if (iter >= options.max_iterations) {
      sol.status = QpStatus::kMaxIter;
      sol.primal = x;
      sol.iterations = iter;
      return sol;
    }
    // Pick the most violated inactive inequality.
    Eigen::Index worst = -1;
    double worst_value = 0.0;
    for (Eigen::Index i = 0; i < m; ++i) {
      if (is_active[static_cast<size_t>(i)]) continue;
      const double value = ineq_value(i);
      const double tol = options.feasibility_tolerance * (1.0 + std::abs(p.ineq_upper(i)));
      if (value < -tol && value < worst_value) {
        worst = i;
        worst_value = value;
      }
    }
    if (worst < 0) break;

    const Vector normal = ineq_normal(worst);
    double new_multiplier = 0.0;
    while (true) {
      ++iter;
      if (iter > options.max_iterations) {
        sol.status = QpStatus::kMaxIter;
        sol.primal = x;
        sol.iterations = iter;
        return sol;
      }
      factor.directions(normal, &d, &z, &r);
      const double value = ineq_value(worst);

      // Largest dual step keeping active inequality multipliers nonnegative.
      double t1 = kInf;
      Eigen::Index block = -1;
      for (size_t a = 0; a < active.size(); ++a) {
        if (active[a].equality) continue;
        const double ra = r(static_cast<Eigen::Index>(a));
        if (ra > 0.0) {
          const double ratio = active[a].multiplier / ra;
          if (ratio < t1) {
            t1 = ratio;
            block = static_cast<Eigen::Index>(a);
          }
        }
      }
      const double curvature = z.dot(normal);
      const bool zero_step = z.cwiseAbs().maxCoeff() <= 1e-14 * std::max(1.0, normal.cwiseAbs().maxCoeff()) ||
                             curvature <= 0.0;
      const double t2 = zero_step ? kInf : -value / curvature;
      const double t = std::min(t1, t2);

      if (t == kInf) {
        sol.iterations = iter;
        return finish_infeasible(value, r);
      }
      for (size_t a = 0; a < active.size(); ++a) active[a].multiplier -= t * r(static_cast<Eigen::Index>(a));
      new_multiplier += t;
      if (!zero_step) x += t * z;

      if (t2 <= t1) {
        if (!factor.add(d)) {
          // Numerically dependent row: treat as the infeasible case.
          sol.iterations = iter;
          return finish_infeasible(value, r);
        }
        active.push_back({worst, false, new_multiplier});
        is_active[static_cast<size_t>(worst)] = true;
        break;
      }
      // Partial step: drop the blocking constraint and retry.
      is_active[static_cast<size_t>(active[static_cast<size_t>(block)].row)] = false;
      active.erase(active.begin() + block);
      factor.remove(block);
    }
  }

  sol.status = QpStatus::kOptimal;
  sol.primal = x;
  sol.iterations = iter;
  for (const ActiveEntry& a : active) {
    if (a.equality) {
      sol.dual_eq(a.row) = -a.multiplier;
    } else {
      sol.dual_ineq(a.row) = std::max(0.0, a.multiplier);
    }
  }
  sol.objective = 0.5 * x.dot(p.hessian * x) + p.linear_cost.dot(x);
  sol.kkt_residual = kkt_residual(p, x, sol.dual_ineq, sol.dual_eq);
  return sol;
}

}  // namespace gptight
