#include "gptight/smpc.hpp"

#include <string>

#include "gptight/errors.hpp"

namespace gptight {

namespace {

bool is_psd(const DenseMatrix& m, double tol) {
  if (m.rows() == 0) return true;
  Eigen::SelfAdjointEigenSolver<DenseMatrix> es(0.5 * (m + m.transpose()));
  return es.eigenvalues().minCoeff() >= -tol * std::max(1.0, m.cwiseAbs().maxCoeff());
}

}  // namespace

void OcpSpec::validate() const {
  const Eigen::Index n = a.rows();
  const Eigen::Index nu = b.cols();
  if (horizon < 1) throw ValidationError("ocp.horizon: must be >= 1");
  if (a.cols() != n || b.rows() != n) throw ValidationError("ocp: A and B have inconsistent dimensions");
  if (q.rows() != n || q.cols() != n) throw ValidationError("ocp.q: must be d_x x d_x");
  if (p.rows() != n || p.cols() != n) throw ValidationError("ocp.p: must be d_x x d_x");
  if (r.rows() != nu || r.cols() != nu) throw ValidationError("ocp.r: must be d_u x d_u");
  if (!is_psd(q, 1e-12)) throw ValidationError("ocp.q: must be positive semidefinite");
  if (!is_psd(p, 1e-12)) throw ValidationError("ocp.p: must be positive semidefinite");
  {
    Eigen::SelfAdjointEigenSolver<DenseMatrix> es(0.5 * (r + r.transpose()));
    if (!(es.eigenvalues().minCoeff() > 0.0)) throw ValidationError("ocp.r: must be positive definite");
  }
  if (input_lower.size() != nu || input_upper.size() != nu) {
    throw ValidationError("ocp.input_lower: bounds must have length d_u");
  }
  if ((input_lower.array() > input_upper.array()).any()) {
    throw ValidationError("ocp.input_lower: lower bound exceeds input_upper");
  }
  if (constraint.h_x.cols() != n && constraint.rows() > 0) {
    throw ValidationError("ocp.constraint: H_x must have d_x columns");
  }
  if (constraint.offset.size() != constraint.rows()) {
    throw ValidationError("ocp.constraint: offset length must equal number of rows");
  }
  if (!(slack_weight > 0.0)) throw ValidationError("ocp.slack_weight: must be > 0");
}

MpcController::MpcController(OcpSpec spec) : spec_(std::move(spec)) {
  spec_.validate();
  const Eigen::Index n = spec_.state_dim();
  const Eigen::Index nu = spec_.input_dim();
  const Eigen::Index nc = spec_.constraint_dim();
  const Eigen::Index horizon = spec_.horizon;

  state_free_.setZero((horizon + 1) * n, n);
  state_forced_.setZero((horizon + 1) * n, horizon * nu);
  state_free_.topRows(n).setIdentity();
  for (Eigen::Index tau = 1; tau <= horizon; ++tau) {
    state_free_.middleRows(tau * n, n) = spec_.a * state_free_.middleRows((tau - 1) * n, n);
    state_forced_.middleRows(tau * n, n) = spec_.a * state_forced_.middleRows((tau - 1) * n, n);
    state_forced_.block(tau * n, (tau - 1) * nu, n, nu) = spec_.b;
  }

  DenseMatrix qbar = DenseMatrix::Zero((horizon + 1) * n, (horizon + 1) * n);
  for (Eigen::Index tau = 0; tau < horizon; ++tau) qbar.block(tau * n, tau * n, n, n) = spec_.q;
  qbar.block(horizon * n, horizon * n, n, n) = spec_.p;
  DenseMatrix rbar = DenseMatrix::Zero(horizon * nu, horizon * nu);
  for (Eigen::Index tau = 0; tau < horizon; ++tau) rbar.block(tau * nu, tau * nu, nu, nu) = spec_.r;

  input_hessian_ = 2.0 * (state_forced_.transpose() * qbar * state_forced_ + rbar);
  input_hessian_ = 0.5 * (input_hessian_ + input_hessian_.transpose()).eval();
  cost_cross_ = 2.0 * state_forced_.transpose() * qbar * state_free_;
  cost_const_ = state_free_.transpose() * qbar * state_free_;

  constraint_u_.setZero(horizon * nc, horizon * nu);
  constraint_x_.setZero(horizon * nc, n);
  if (nc > 0) {
    for (Eigen::Index tau = 0; tau < horizon; ++tau) {
      constraint_u_.middleRows(tau * nc, nc) = spec_.constraint.h_x * state_forced_.middleRows(tau * n, n);
      constraint_x_.middleRows(tau * nc, nc) = spec_.constraint.h_x * state_free_.middleRows(tau * n, n);
    }
  }
}

void MpcController::check(const Vector& x, const TighteningVector& gamma, int backup) const {
  if (x.size() != spec_.state_dim()) throw DimensionError("mpc: state has wrong length");
  if (gamma.g.size() != spec_.tightening_dim()) {
    throw DimensionError("mpc: tightening vector has length " + std::to_string(gamma.g.size()) +
                         ", expected " + std::to_string(spec_.tightening_dim()));
  }
  if (backup < 0 || backup > spec_.horizon) throw DimensionError("mpc: backup horizon outside [0, N]");
}

QpProblem MpcController::build_qp(const Vector& x, const TighteningVector& gamma, int backup) const {
  check(x, gamma, backup);
  const Eigen::Index nu = spec_.input_dim();
  const Eigen::Index nc = spec_.constraint_dim();
  const Eigen::Index horizon = spec_.horizon;
  const Eigen::Index n_u = horizon * nu;
  const Eigen::Index n_s = backup * nc;
  const Eigen::Index n_var = n_u + n_s;
  const Eigen::Index n_state_rows = horizon * nc;

  QpProblem qp;
  qp.hessian.setZero(n_var, n_var);
  qp.hessian.topLeftCorner(n_u, n_u) = input_hessian_;
  qp.hessian.bottomRightCorner(n_s, n_s).diagonal().setConstant(2.0 * spec_.slack_weight);
  qp.linear_cost.setZero(n_var);
  qp.linear_cost.head(n_u) = cost_cross_ * x;

  const Eigen::Index n_rows = n_state_rows + 2 * n_u + n_s;
  qp.ineq_matrix.setZero(n_rows, n_var);
  qp.ineq_upper.setZero(n_rows);

  // Tightened state constraints: Hx Gamma_tau U - s_tau <= offset - g_tau - Hx A^tau x.
  if (nc > 0) {
    qp.ineq_matrix.topLeftCorner(n_state_rows, n_u) = constraint_u_;
    qp.ineq_matrix.block(0, n_u, n_s, n_s).diagonal().setConstant(-1.0);
    for (Eigen::Index tau = 0; tau < horizon; ++tau) {
      qp.ineq_upper.segment(tau * nc, nc) = spec_.constraint.offset - gamma.block(tau, nc);
    }
    qp.ineq_upper.head(n_state_rows) -= constraint_x_ * x;
  }
  // Input box.
  Eigen::Index row = n_state_rows;
  qp.ineq_matrix.block(row, 0, n_u, n_u).setIdentity();
  qp.ineq_upper.segment(row, n_u) = spec_.input_upper.replicate(horizon, 1);
  row += n_u;
  qp.ineq_matrix.block(row, 0, n_u, n_u).diagonal().setConstant(-1.0);
  qp.ineq_upper.segment(row, n_u) = -spec_.input_lower.replicate(horizon, 1);
  row += n_u;
  // Slack nonnegativity.
  qp.ineq_matrix.block(row, n_u, n_s, n_s).diagonal().setConstant(-1.0);
  return qp;
}

QpSolution MpcController::solve_at(const Vector& x, const TighteningVector& gamma, int backup) const {
  return solve_qp(build_qp(x, gamma, backup));
}

MpcResult MpcController::solve(const Vector& x, const TighteningVector& gamma) const {
  check(x, gamma, 0);
  const Eigen::Index nu = spec_.input_dim();
  const Eigen::Index nc = spec_.constraint_dim();
  for (int backup = 0; backup <= spec_.horizon; ++backup) {
    QpSolution sol = solve_at(x, gamma, backup);
    if (sol.status == QpStatus::kInfeasible) continue;
    if (sol.status == QpStatus::kMaxIter) {
      throw NonConvergenceError("mpc: QP hit the iteration cap at backup horizon " + std::to_string(backup));
    }
    MpcResult result;
    result.backup_horizon = backup;
    result.full_relaxation = backup == spec_.horizon;
    result.inputs.reserve(static_cast<size_t>(spec_.horizon));
    result.slacks.reserve(static_cast<size_t>(spec_.horizon));
    for (Eigen::Index tau = 0; tau < spec_.horizon; ++tau) {
      result.inputs.emplace_back(sol.primal.segment(tau * nu, nu));
      if (tau < backup) {
        result.slacks.emplace_back(sol.primal.segment(spec_.horizon * nu + tau * nc, nc));
      } else {
        result.slacks.emplace_back(Vector::Zero(nc));
      }
    }
    // Clamp the O(1e-11) active-set round-off back into the box.
    result.u0 = result.inputs.front().cwiseMax(spec_.input_lower).cwiseMin(spec_.input_upper);
    result.cost = sol.objective + constant_cost(x);
    result.qp = std::move(sol);
    return result;
  }
  throw InfeasibleError("mpc: OCP infeasible even with every state constraint relaxed");
}

std::vector<Vector> MpcController::predict(const Vector& x, const Vector& inputs) const {
  const Eigen::Index n = spec_.state_dim();
  const Vector stacked = state_free_ * x + state_forced_ * inputs.head(spec_.horizon * spec_.input_dim());
  std::vector<Vector> states;
  for (Eigen::Index tau = 0; tau <= spec_.horizon; ++tau) states.emplace_back(stacked.segment(tau * n, n));
  return states;
}

double MpcController::constant_cost(const Vector& x) const { return x.dot(cost_const_ * x); }

QpProblem build_qp(const OcpSpec& spec, const Vector& x, const TighteningVector& gamma, int backup) {
  return MpcController(spec).build_qp(x, gamma, backup);
}

int min_backup_horizon(const OcpSpec& spec, const Vector& x, const TighteningVector& gamma) {
  return MpcController(spec).solve(x, gamma).backup_horizon;
}

MpcResult mpc_control(const OcpSpec& spec, const Vector& x, const TighteningVector& gamma) {
  return MpcController(spec).solve(x, gamma);
}

double stage_cost(const OcpSpec& spec, const Vector& x, const Vector& u) {
  return x.dot(spec.q * x) + u.dot(spec.r * u);
}

}  // namespace gptight
