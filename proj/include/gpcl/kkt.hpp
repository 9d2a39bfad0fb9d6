#pragma once

// Stationarity residual assembly. The residual is affine in the multipliers
// for a fixed trajectory; the coefficient columns built here are shared by
// the certificate check and by every mining subproblem.

#include "gpcl/system.hpp"

#include <sstream>

namespace gpcl {

enum class BlockKind { State, Control };

/// Gradient columns of every known constraint, evaluated on one demo.
/// Equality ordering: dynamics rows (t, then component), start pin, goal pin,
/// then task extras.
struct ResidualSystem {
  TrajectoryLayout layout;
  Vec xi;
  int n_c = 0;

  Vec grad_cost;                        // dim
  Mat ineq_grads;                       // dim x N_ineq
  Vec ineq_vals;                        // N_ineq
  std::vector<std::string> ineq_names;
  Mat eq_grads;                         // dim x N_eq
  Vec eq_vals;                          // N_eq
  std::vector<std::string> eq_names;

  std::vector<Mat> phi_jac;  // per timestep, n_c x n_x
  std::vector<Vec> kappa;    // per timestep

  int num_ineq() const { return static_cast<int>(ineq_grads.cols()); }
  int num_eq() const { return static_cast<int>(eq_grads.cols()); }

  /// State-space gradient column contributed by a unit unknown multiplier at
  /// timestep t with constraint-space gradient gamma.
  Vec unknown_column(int t, const Vec& gamma) const {
    Vec col = Vec::Zero(layout.dim());
    col.segment(layout.x_offset(t), layout.n_x) =
        phi_jac[t].transpose() * gamma;
    return col;
  }
};

inline ResidualSystem build_residual_system(const Demonstration& demo) {
  const TaskSpec& task = *demo.task;
  const SystemModel& sys = *task.system;
  ResidualSystem rs;
  rs.layout = demo.layout();
  rs.xi = demo.packed();
  rs.n_c = task.constraint_map.constraint_dim;
  const auto& l = rs.layout;
  const int dim = l.dim();

  rs.grad_cost = task.cost_gradient(rs.xi);
  if (rs.grad_cost.size() != dim)
    throw std::invalid_argument("cost gradient has wrong length");

  const int n_ineq = static_cast<int>(task.known_ineq.size());
  rs.ineq_grads = Mat::Zero(dim, n_ineq);
  rs.ineq_vals = Vec::Zero(n_ineq);
  for (int i = 0; i < n_ineq; ++i) {
    rs.ineq_grads.col(i) = task.known_ineq[i].gradient(rs.xi);
    rs.ineq_vals(i) = task.known_ineq[i].value(rs.xi);
    rs.ineq_names.push_back(task.known_ineq[i].name);
  }

  const int n_dyn = (l.T - 1) * l.n_x;
  const int n_eq = n_dyn + 2 * l.n_x + static_cast<int>(task.known_eq.size());
  rs.eq_grads = Mat::Zero(dim, n_eq);
  rs.eq_vals = Vec::Zero(n_eq);

  // dynamics rows: h_{t,i} = f(x_t, u_t, t)_i - x_{t+1, i}
  int col = 0;
  for (int t = 0; t + 1 < l.T; ++t) {
    const Vec x = demo.states.row(t).transpose();
    const Vec u = demo.controls.row(t).transpose();
    const Vec fx = sys.step(x, u, t);
    const Mat A = sys.step_jac_x(x, u, t);
    const Mat B = sys.step_jac_u(x, u, t);
    for (int i = 0; i < l.n_x; ++i, ++col) {
      rs.eq_grads.block(l.x_offset(t), col, l.n_x, 1) = A.row(i).transpose();
      rs.eq_grads.block(l.u_offset(t), col, l.n_u, 1) = B.row(i).transpose();
      rs.eq_grads(l.x_offset(t + 1) + i, col) = -1.0;
      rs.eq_vals(col) = fx(i) - demo.states(t + 1, i);
      rs.eq_names.push_back("dyn[" + std::to_string(t) + "][" +
                            std::to_string(i) + "]");
    }
  }
  // start / goal pins
  for (int i = 0; i < l.n_x; ++i, ++col) {
    rs.eq_grads(l.x_offset(0) + i, col) = 1.0;
    rs.eq_vals(col) = demo.states(0, i) - task.start(i);
    rs.eq_names.push_back("start[" + std::to_string(i) + "]");
  }
  for (int i = 0; i < l.n_x; ++i, ++col) {
    rs.eq_grads(l.x_offset(l.T - 1) + i, col) = 1.0;
    rs.eq_vals(col) = demo.states(l.T - 1, i) - task.goal(i);
    rs.eq_names.push_back("goal[" + std::to_string(i) + "]");
  }
  for (const auto& h : task.known_eq) {
    rs.eq_grads.col(col) = h.gradient(rs.xi);
    rs.eq_vals(col) = h.value(rs.xi);
    rs.eq_names.push_back(h.name);
    ++col;
  }

  rs.phi_jac.reserve(l.T);
  rs.kappa.reserve(l.T);
  for (int t = 0; t < l.T; ++t) {
    const Vec x = demo.states.row(t).transpose();
    rs.phi_jac.push_back(task.constraint_map.phi_jacobian(x));
    rs.kappa.push_back(task.constraint_map.phi_sep(x));
  }
  return rs;
}

inline Vec assemble_residual(const ResidualSystem& rs,
                             const MultiplierAssignment& m) {
  const auto fail = [](const std::string& what) {
    throw std::invalid_argument("assemble_residual: " + what);
  };
  if (m.lambda_k.size() != rs.num_ineq()) {
    std::ostringstream os;
    os << "lambda_k block has size " << m.lambda_k.size() << ", expected "
       << rs.num_ineq();
    fail(os.str());
  }
  if (m.nu_k.size() != rs.num_eq()) {
    std::ostringstream os;
    os << "nu_k block has size " << m.nu_k.size() << ", expected "
       << rs.num_eq();
    fail(os.str());
  }
  if (m.lambda_unk.size() != rs.layout.T) {
    std::ostringstream os;
    os << "lambda_unk block has size " << m.lambda_unk.size() << ", expected "
       << rs.layout.T;
    fail(os.str());
  }

  Vec s = rs.grad_cost;
  if (rs.num_ineq() > 0) s += rs.ineq_grads * m.lambda_k;
  if (rs.num_eq() > 0) s += rs.eq_grads * m.nu_k;
  for (const auto& [t, gamma] : m.unk_gradients) {
    if (t < 0 || t >= rs.layout.T)
      fail("unk_gradients timestep " + std::to_string(t) + " out of range");
    if (gamma.size() != rs.n_c) {
      std::ostringstream os;
      os << "unk_gradients[" << t << "] has size " << gamma.size()
         << ", expected n_c = " << rs.n_c;
      fail(os.str());
    }
    s.segment(rs.layout.x_offset(t), rs.layout.n_x) +=
        m.lambda_unk(t) * (rs.phi_jac[t].transpose() * gamma);
  }
  return s;
}

inline Vec assemble_residual(const Demonstration& demo,
                             const MultiplierAssignment& m) {
  return assemble_residual(build_residual_system(demo), m);
}

inline Vec residual_block(const Vec& s, const TrajectoryLayout& layout, int t,
                          BlockKind kind) {
  if (s.size() != layout.dim())
    throw std::invalid_argument("residual_block: residual length " +
                                std::to_string(s.size()) + " != layout dim " +
                                std::to_string(layout.dim()));
  if (kind == BlockKind::State) {
    if (t < 0 || t >= layout.T)
      throw std::out_of_range("residual_block: state timestep " +
                              std::to_string(t) + " outside [0, " +
                              std::to_string(layout.T) + ")");
    return s.segment(layout.x_offset(t), layout.n_x);
  }
  if (t < 0 || t >= layout.T - 1)
    throw std::out_of_range("residual_block: control timestep " +
                            std::to_string(t) + " outside [0, " +
                            std::to_string(layout.T - 1) + ")");
  return s.segment(layout.u_offset(t), layout.n_u);
}

struct KktReport {
  double eq_violation = 0.0;        // max |h|
  double ineq_violation = 0.0;      // max g (positive part)
  double multiplier_negativity = 0.0;
  double comp_slackness = 0.0;      // max |lambda_i * g_i| over known ineqs
  double stationarity = 0.0;        // ||s||_inf
  bool passed = false;
  std::vector<std::string> violations;
};

/// Certifies a demonstration against its KKT conditions with the supplied
/// multipliers. Unknown-constraint primal feasibility is not checkable here
/// (the constraint is unknown); synthesizers verify it against their oracle.
inline KktReport kkt_certificate_check(const Demonstration& demo,
                                       const MultiplierAssignment& m,
                                       double tol) {
  const ResidualSystem rs = build_residual_system(demo);
  KktReport rep;
  if (rs.num_eq() > 0) rep.eq_violation = rs.eq_vals.cwiseAbs().maxCoeff();
  if (rs.num_ineq() > 0) rep.ineq_violation = std::max(0.0, rs.ineq_vals.maxCoeff());
  double neg = 0.0;
  if (m.lambda_k.size() > 0) neg = std::max(neg, -m.lambda_k.minCoeff());
  if (m.lambda_unk.size() > 0) neg = std::max(neg, -m.lambda_unk.minCoeff());
  rep.multiplier_negativity = std::max(0.0, neg);
  for (int i = 0; i < rs.num_ineq(); ++i)
    rep.comp_slackness = std::max(
        rep.comp_slackness, std::abs(m.lambda_k(i) * rs.ineq_vals(i)));
  rep.stationarity =
      assemble_residual(rs, m).cwiseAbs().maxCoeff();

  if (rep.eq_violation > tol) rep.violations.push_back("primal equality");
  if (rep.ineq_violation > tol) rep.violations.push_back("primal inequality");
  if (rep.multiplier_negativity > tol)
    rep.violations.push_back("multiplier nonnegativity");
  if (rep.comp_slackness > tol)
    rep.violations.push_back("complementary slackness");
  if (rep.stationarity > tol) rep.violations.push_back("stationarity");
  rep.passed = rep.violations.empty();
  return rep;
}

}  // namespace gpcl
