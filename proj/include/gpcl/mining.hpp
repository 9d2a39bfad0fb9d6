#pragma once

// KKT evidence mining: tightness checks, gradient identification, and the
// orthogonal/anti-parallel uniqueness certificates, composed into the
// constraint dataset builder.
//
// All subproblems share one reconstruction detail: minimizing or zeroing a
// single state block of the stationarity residual is only informative if the
// control blocks of the residual are simultaneously constrained to zero. The
// unknown constraint is state-dependent, so its multiplier never enters a
// control block, and the true multipliers zero those blocks on any
// locally-optimal demonstration; without them the dynamics multipliers could
// zero any single state block unconditionally.

#include "gpcl/dataset.hpp"
#include "gpcl/kkt.hpp"
#include "gpcl/linprog.hpp"

#include <algorithm>
#include <map>
#include <string>

namespace gpcl {

struct MiningOptions {
  double eps_pos = 1e-6;             // optimal-value positivity threshold
  double comp_slack_tol = 1e-6;      // pre-zero lambda_k where g < -tol
  double control_block_slack = 0.0;  // |s_u| <= slack (0 = exact)
  double gmax_scale = 10.0;  // gradient box ||grad||_inf <= scale * ||g~||
  SimplexOptions simplex;
};

struct TightnessEntry {
  int t = 0;
  double p2 = 0.0;
  bool is_tight = false;
};

struct TightnessReport {
  std::vector<std::vector<TightnessEntry>> per_demo;

  std::vector<int> tight_set(int j) const {
    std::vector<int> ts;
    for (const auto& e : per_demo[j])
      if (e.is_tight) ts.push_back(e.t);
    return ts;
  }
};

struct GradientEvidence {
  int demo = 0;
  int t = 0;
  Vec kappa;
  Vec gradient;  // KKT-consistent gradient from the identification LP
  double p2 = 0.0;
  double p4 = 0.0;
  double p5 = 0.0;
  bool robust = false;
};

namespace detail {

// Multiplier variable layout for the mining LPs: [lambda_k | nu | gammas].
struct MiningVars {
  int n_lambda = 0;
  int n_nu = 0;
  std::vector<int> tight;  // timesteps carrying gradient variables
  int n_c = 0;

  static MiningVars from(const ResidualSystem& rs, std::vector<int> ts = {}) {
    MiningVars v;
    v.n_lambda = rs.num_ineq();
    v.n_nu = rs.num_eq();
    v.n_c = rs.n_c;
    v.tight = std::move(ts);
    return v;
  }

  int total() const {
    return n_lambda + n_nu + static_cast<int>(tight.size()) * n_c;
  }
  int lambda_col(int i) const { return i; }
  int nu_col(int e) const { return n_lambda + e; }
  int gamma_col(int which_tight, int d) const {
    return n_lambda + n_nu + which_tight * n_c + d;
  }
};

// Rows of the residual map restricted to `rows`, as an affine expression of
// the mining variables.
inline AffineExpr residual_rows(const ResidualSystem& rs,
                                const MiningVars& vars,
                                const std::vector<int>& rows) {
  AffineExpr ex;
  const int m = static_cast<int>(rows.size());
  ex.M = Mat::Zero(m, vars.total());
  ex.d = Vec::Zero(m);
  for (int r = 0; r < m; ++r) {
    const int row = rows[r];
    ex.d(r) = rs.grad_cost(row);
    for (int i = 0; i < vars.n_lambda; ++i)
      ex.M(r, vars.lambda_col(i)) = rs.ineq_grads(row, i);
    for (int e = 0; e < vars.n_nu; ++e)
      ex.M(r, vars.nu_col(e)) = rs.eq_grads(row, e);
  }
  for (size_t k = 0; k < vars.tight.size(); ++k) {
    const int t = vars.tight[k];
    const int x0 = rs.layout.x_offset(t);
    // unit unknown multiplier: contribution phi_jac' * gamma to the x_t block
    for (int r = 0; r < m; ++r) {
      const int row = rows[r];
      if (row < x0 || row >= x0 + rs.layout.n_x) continue;
      const int i = row - x0;
      for (int d = 0; d < vars.n_c; ++d)
        ex.M(r, vars.gamma_col(static_cast<int>(k), d)) = rs.phi_jac[t](d, i);
    }
  }
  return ex;
}

inline std::vector<int> state_block_rows(const TrajectoryLayout& l, int t) {
  std::vector<int> rows(l.n_x);
  for (int i = 0; i < l.n_x; ++i) rows[i] = l.x_offset(t) + i;
  return rows;
}

inline std::vector<int> all_control_rows(const TrajectoryLayout& l) {
  std::vector<int> rows;
  rows.reserve((l.T - 1) * l.n_u);
  for (int t = 0; t + 1 < l.T; ++t)
    for (int i = 0; i < l.n_u; ++i) rows.push_back(l.u_offset(t) + i);
  return rows;
}

inline std::vector<int> all_rows(const TrajectoryLayout& l) {
  std::vector<int> rows(l.dim());
  for (int i = 0; i < l.dim(); ++i) rows[i] = i;
  return rows;
}

// Multiplier bounds shared by every subproblem: lambda_k >= 0, slack
// constraints pre-zeroed (complementary slackness), nu free.
inline void apply_multiplier_bounds(LinearProgram& lp, const ResidualSystem& rs,
                                    const MiningVars& vars,
                                    const MiningOptions& opts) {
  for (int i = 0; i < vars.n_lambda; ++i) {
    lp.lo(vars.lambda_col(i)) = 0.0;
    if (rs.ineq_vals(i) < -opts.comp_slack_tol)
      lp.hi(vars.lambda_col(i)) = 0.0;
  }
}

// Residual rows pinned to zero (or to the +-slack band) as LP constraints.
inline void append_zero_rows(LinearProgram& lp, const AffineExpr& ex,
                             double slack) {
  if (ex.rows() == 0) return;
  if (slack <= 0.0) {
    const int m0 = static_cast<int>(lp.eq_A.rows());
    lp.eq_A.conservativeResize(m0 + ex.rows(), lp.num_vars());
    lp.eq_b.conservativeResize(m0 + ex.rows());
    lp.eq_A.bottomRows(ex.rows()) = ex.M;
    lp.eq_b.tail(ex.rows()) = -ex.d;
  } else {
    const int m0 = static_cast<int>(lp.ineq_A.rows());
    lp.ineq_A.conservativeResize(m0 + 2 * ex.rows(), lp.num_vars());
    lp.ineq_b.conservativeResize(m0 + 2 * ex.rows());
    lp.ineq_A.middleRows(m0, ex.rows()) = ex.M;
    lp.ineq_b.segment(m0, ex.rows()) =
        -ex.d + Vec::Constant(ex.rows(), slack);
    lp.ineq_A.bottomRows(ex.rows()) = -ex.M;
    lp.ineq_b.tail(ex.rows()) = ex.d + Vec::Constant(ex.rows(), slack);
  }
}

/// Deterministic orthonormal basis of the complement of g (n_c x (n_c-1)),
/// Gram-Schmidt seeded with the coordinate axes in order.
inline Mat orthogonal_complement(const Vec& g) {
  const int n = static_cast<int>(g.size());
  Mat B(n, n - 1);
  std::vector<Vec> basis;
  basis.push_back(g.normalized());
  for (int axis = 0; axis < n && static_cast<int>(basis.size()) < n; ++axis) {
    Vec v = Vec::Zero(n);
    v(axis) = 1.0;
    for (const auto& b : basis) v -= b.dot(v) * b;
    if (v.norm() > 1e-10) basis.push_back(v.normalized());
  }
  for (int k = 1; k < n; ++k) B.col(k - 1) = basis[k];
  return B;
}

}  // namespace detail

/// Per-demo context for tightness scanning: the control-block system is built
/// and feasibility-checked once; each timestep then solves a small LP over
/// the variables actually coupled to its state block.
class TightnessContext {
 public:
  TightnessContext(const ResidualSystem& rs, const MiningOptions& opts)
      : rs_(rs), opts_(opts), vars_(detail::MiningVars::from(rs)) {
    u_rows_ = detail::all_control_rows(rs.layout);
    u_expr_ = detail::residual_rows(rs, vars_, u_rows_);

    // global feasibility of the control blocks under lambda >= 0
    LinearProgram lp(vars_.total());
    detail::apply_multiplier_bounds(lp, rs_, vars_, opts_);
    detail::append_zero_rows(lp, u_expr_, opts_.control_block_slack);
    const LPSolution s = solve_lp(lp, opts_.simplex);
    u_feasible_ = s.optimal();
    if (!u_feasible_ && s.status != LPStatus::Infeasible)
      throw std::runtime_error("tightness context LP failed: " + s.diagnostic);
  }

  const ResidualSystem& residual_system() const { return rs_; }

  /// Smallest attainable ||s_{x_t}||_1 with the unknown multiplier erased.
  /// +inf when even the control blocks cannot be zeroed.
  double check(int t) const {
    if (!u_feasible_) return kInf;
    const AffineExpr obj = detail::residual_rows(
        rs_, vars_, detail::state_block_rows(rs_.layout, t));

    // transitive closure of variables reachable from the objective through
    // shared control rows; rows outside the closure are globally feasible
    // and variable-disjoint, so dropping them preserves the optimum
    std::vector<char> var_in(vars_.total(), 0), row_in(u_rows_.size(), 0);
    for (int j = 0; j < vars_.total(); ++j)
      if (obj.M.col(j).cwiseAbs().maxCoeff() > 0.0) var_in[j] = 1;
    bool grew = true;
    while (grew) {
      grew = false;
      for (size_t r = 0; r < u_rows_.size(); ++r) {
        if (row_in[r]) continue;
        for (int j = 0; j < vars_.total(); ++j) {
          if (var_in[j] && u_expr_.M(static_cast<int>(r), j) != 0.0) {
            row_in[r] = 1;
            grew = true;
            break;
          }
        }
        if (!row_in[r]) continue;
        for (int j = 0; j < vars_.total(); ++j)
          if (!var_in[j] && u_expr_.M(static_cast<int>(r), j) != 0.0)
            var_in[j] = 1;
      }
    }

    std::vector<int> kept_vars, kept_rows;
    for (int j = 0; j < vars_.total(); ++j)
      if (var_in[j]) kept_vars.push_back(j);
    for (size_t r = 0; r < u_rows_.size(); ++r)
      if (row_in[r]) kept_rows.push_back(static_cast<int>(r));

    LinearProgram lp(static_cast<int>(kept_vars.size()));
    AffineExpr small_u;
    small_u.M = Mat::Zero(static_cast<int>(kept_rows.size()), lp.num_vars());
    small_u.d = Vec::Zero(static_cast<int>(kept_rows.size()));
    AffineExpr small_obj;
    small_obj.M = Mat::Zero(obj.rows(), lp.num_vars());
    small_obj.d = obj.d;
    for (size_t k = 0; k < kept_vars.size(); ++k) {
      const int j = kept_vars[k];
      if (j < vars_.n_lambda) {
        lp.lo(static_cast<int>(k)) = 0.0;
        if (rs_.ineq_vals(j) < -opts_.comp_slack_tol)
          lp.hi(static_cast<int>(k)) = 0.0;
      }
      for (size_t r = 0; r < kept_rows.size(); ++r)
        small_u.M(static_cast<int>(r), static_cast<int>(k)) =
            u_expr_.M(kept_rows[r], j);
      small_obj.M.col(static_cast<int>(k)) = obj.M.col(j);
    }
    for (size_t r = 0; r < kept_rows.size(); ++r)
      small_u.d(static_cast<int>(r)) = u_expr_.d(kept_rows[r]);
    detail::append_zero_rows(lp, small_u, opts_.control_block_slack);

    const LPSolution s = solve_l1_min(small_obj, lp, opts_.simplex);
    if (s.status == LPStatus::Infeasible) return kInf;
    if (!s.optimal())
      throw std::runtime_error("tightness_check LP failed: " + s.diagnostic);
    return s.objective_value;
  }

 private:
  ResidualSystem rs_;
  MiningOptions opts_;
  detail::MiningVars vars_;
  std::vector<int> u_rows_;
  AffineExpr u_expr_;
  bool u_feasible_ = false;
};

inline double tightness_check(const ResidualSystem& rs, int t,
                              const MiningOptions& opts = {}) {
  return TightnessContext(rs, opts).check(t);
}

inline double tightness_check(const Demonstration& demo, int t,
                              const MiningOptions& opts = {}) {
  return tightness_check(build_residual_system(demo), t, opts);
}

inline TightnessReport scan_tightness(const std::vector<Demonstration>& demos,
                                      const MiningOptions& opts = {}) {
  TightnessReport rep;
  rep.per_demo.resize(demos.size());
  for (size_t j = 0; j < demos.size(); ++j) {
    const ResidualSystem rs = build_residual_system(demos[j]);
    const TightnessContext ctx(rs, opts);
    for (int t = 0; t < rs.layout.T; ++t) {
      TightnessEntry e;
      e.t = t;
      e.p2 = ctx.check(t);
      e.is_tight = e.p2 > opts.eps_pos;
      rep.per_demo[j].push_back(e);
    }
  }
  return rep;
}

struct GradientIdentification {
  bool feasible = false;
  std::map<int, Vec> gradients;  // t -> gamma in constraint space
  std::string diagnostic;
};

/// Gradient identification: unit multipliers on the tight set, the full
/// stationarity residual pinned to zero, gradients as decision variables.
/// Deterministic through phase-1 pivoting (Bland); `opts.simplex` variable
/// orderings give independent re-solves for the uniqueness property.
inline GradientIdentification identify_gradients(
    const ResidualSystem& rs, const std::vector<int>& t_tight,
    const MiningOptions& opts = {}) {
  const auto vars = detail::MiningVars::from(rs, t_tight);
  LinearProgram lp(vars.total());
  detail::apply_multiplier_bounds(lp, rs, vars, opts);
  detail::append_zero_rows(
      lp, detail::residual_rows(rs, vars, detail::all_rows(rs.layout)),
      opts.control_block_slack);
  const LPSolution s = solve_lp(lp, opts.simplex);

  GradientIdentification out;
  if (s.status == LPStatus::Infeasible) {
    out.diagnostic =
        "identification LP infeasible (demonstration not locally optimal "
        "under the model, or a misclassified tight set)";
    return out;
  }
  if (!s.optimal())
    throw std::runtime_error("identify_gradients LP failed: " + s.diagnostic);
  out.feasible = true;
  for (size_t k = 0; k < t_tight.size(); ++k) {
    Vec g(rs.n_c);
    for (int d = 0; d < rs.n_c; ++d)
      g(d) = s.x(vars.gamma_col(static_cast<int>(k), d));
    out.gradients[t_tight[k]] = g;
  }
  return out;
}

inline GradientIdentification identify_gradients(
    const Demonstration& demo, const std::vector<int>& t_tight,
    const MiningOptions& opts = {}) {
  return identify_gradients(build_residual_system(demo), t_tight, opts);
}

namespace detail {

inline LinearProgram uniqueness_constraints(const ResidualSystem& rs,
                                            const MiningVars& vars,
                                            const MiningOptions& opts,
                                            int which_tight, double g_norm) {
  LinearProgram lp(vars.total());
  apply_multiplier_bounds(lp, rs, vars, opts);
  append_zero_rows(lp, residual_rows(rs, vars, all_rows(rs.layout)),
                   opts.control_block_slack);
  const double box = opts.gmax_scale * g_norm;
  for (int d = 0; d < vars.n_c; ++d) {
    lp.lo(vars.gamma_col(which_tight, d)) = -box;
    lp.hi(vars.gamma_col(which_tight, d)) = box;
  }
  return lp;
}

inline int tight_index(const std::vector<int>& t_tight, int t,
                       const char* who) {
  const auto it = std::find(t_tight.begin(), t_tight.end(), t);
  if (it == t_tight.end())
    throw std::invalid_argument(std::string(who) + ": t not in tight set");
  return static_cast<int>(it - t_tight.begin());
}

}  // namespace detail

/// Orthogonal check: the largest orthogonal-complement component of any
/// KKT-consistent gradient at t. Zero means the direction is pinned.
/// By convention 0 when n_c == 1 (empty complement).
inline double orthogonal_check(const ResidualSystem& rs,
                               const std::vector<int>& t_tight, int t,
                               const Vec& g_tilde,
                               const MiningOptions& opts = {}) {
  if (rs.n_c == 1) return 0.0;
  const auto vars = detail::MiningVars::from(rs, t_tight);
  const int which = detail::tight_index(t_tight, t, "orthogonal_check");
  const LinearProgram lp =
      detail::uniqueness_constraints(rs, vars, opts, which, g_tilde.norm());
  const Mat B = detail::orthogonal_complement(g_tilde);
  AffineExpr ex;
  ex.M = Mat::Zero(rs.n_c - 1, vars.total());
  ex.d = Vec::Zero(rs.n_c - 1);
  for (int r = 0; r + 1 < rs.n_c; ++r)
    for (int d = 0; d < rs.n_c; ++d)
      ex.M(r, vars.gamma_col(which, d)) = B(d, r);

  const LPSolution s = solve_l1_max_milp(ex, lp, rs.n_c - 1, opts.simplex);
  if (!s.optimal())
    throw std::runtime_error("orthogonal_check MILP failed: " + s.diagnostic);
  return s.objective_value;
}

/// Anti-parallel check: minimum dot product of any KKT-consistent gradient
/// at t against g_tilde over the same feasible set.
inline double antiparallel_check(const ResidualSystem& rs,
                                 const std::vector<int>& t_tight, int t,
                                 const Vec& g_tilde,
                                 const MiningOptions& opts = {}) {
  const auto vars = detail::MiningVars::from(rs, t_tight);
  const int which = detail::tight_index(t_tight, t, "antiparallel_check");
  LinearProgram lp =
      detail::uniqueness_constraints(rs, vars, opts, which, g_tilde.norm());
  for (int d = 0; d < rs.n_c; ++d)
    lp.objective(vars.gamma_col(which, d)) = g_tilde(d);
  const LPSolution s = solve_lp(lp, opts.simplex);
  if (!s.optimal())
    throw std::runtime_error("antiparallel_check LP failed: " + s.diagnostic);
  return s.objective_value;
}

struct MiningResult {
  TightnessReport tightness;
  std::vector<GradientEvidence> evidence;  // one entry per tight (j, t)
  ConstraintDataset dataset;
};

/// Full pipeline: scan -> identify -> certify -> collect. Keeps evidence
/// whose gradient is unique up to positive scale, unit-normalizes it, and
/// gathers every demonstrated constraint state for the feasibility hinge.
/// A pure function of (demos, options); reruns are bit-identical.
inline MiningResult build_dataset(const std::vector<Demonstration>& demos,
                                  const MiningOptions& opts = {}) {
  if (demos.empty())
    throw std::invalid_argument("build_dataset: no demonstrations");

  MiningResult out;
  out.tightness.per_demo.resize(demos.size());

  std::vector<Vec> feas;
  for (size_t j = 0; j < demos.size(); ++j) {
    const ResidualSystem rs = build_residual_system(demos[j]);
    const TightnessContext ctx(rs, opts);
    for (int t = 0; t < rs.layout.T; ++t) {
      TightnessEntry e;
      e.t = t;
      e.p2 = ctx.check(t);
      e.is_tight = e.p2 > opts.eps_pos;
      out.tightness.per_demo[j].push_back(e);
      feas.push_back(rs.kappa[t]);
    }
    const std::vector<int> tight =
        out.tightness.tight_set(static_cast<int>(j));
    if (tight.empty()) continue;
    const auto ident = identify_gradients(rs, tight, opts);
    if (!ident.feasible) continue;  // soundness over coverage
    for (int t : tight) {
      GradientEvidence ev;
      ev.demo = static_cast<int>(j);
      ev.t = t;
      ev.kappa = rs.kappa[t];
      ev.gradient = ident.gradients.at(t);
      ev.p2 = out.tightness.per_demo[j][t].p2;
      ev.p4 = orthogonal_check(rs, tight, t, ev.gradient, opts);
      ev.p5 = antiparallel_check(rs, tight, t, ev.gradient, opts);
      ev.robust = ev.p4 <= opts.eps_pos && ev.p5 > opts.eps_pos;
      out.evidence.push_back(ev);
    }
  }

  int n_robust = 0;
  for (const auto& ev : out.evidence)
    if (ev.robust) ++n_robust;
  if (n_robust == 0)
    throw std::runtime_error(
        "build_dataset: no robustly-identified constraint evidence; provide "
        "more demonstrations");

  const int n_c = static_cast<int>(feas.front().size());
  out.dataset.kappa = Mat::Zero(n_robust, n_c);
  out.dataset.values = Vec::Zero(n_robust);
  out.dataset.gradients = Mat::Zero(n_robust, n_c);
  int r = 0;
  for (const auto& ev : out.evidence) {
    if (!ev.robust) continue;
    out.dataset.kappa.row(r) = ev.kappa.transpose();
    out.dataset.gradients.row(r) = ev.gradient.normalized().transpose();
    ++r;
  }
  out.dataset.feas_states = Mat::Zero(static_cast<int>(feas.size()), n_c);
  for (size_t i = 0; i < feas.size(); ++i)
    out.dataset.feas_states.row(i) = feas[i].transpose();
  return out;
}

}  // namespace gpcl
