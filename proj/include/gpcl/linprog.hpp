#pragma once

// Dense linear programming kernel: two-phase tableau simplex with Bland's
// rule, plus the L1 epigraph wrappers used by the KKT mining subproblems.
// Problems here are tiny (tens to a few hundred variables), so determinism
// and exact vertex answers matter more than speed.

#include <Eigen/Dense>

#include <cmath>
#include <limits>
#include <string>
#include <vector>

namespace gpcl {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

inline constexpr double kInf = std::numeric_limits<double>::infinity();

enum class LPStatus { Optimal, Infeasible, Unbounded, NumericalFailure };

inline const char* to_string(LPStatus s) {
  switch (s) {
    case LPStatus::Optimal: return "optimal";
    case LPStatus::Infeasible: return "infeasible";
    case LPStatus::Unbounded: return "unbounded";
    case LPStatus::NumericalFailure: return "numerical_failure";
  }
  return "unknown";
}

/// minimize objective'x  s.t.  ineq_A x <= ineq_b,  eq_A x = eq_b,  lo <= x <= hi
struct LinearProgram {
  Vec objective;
  Mat ineq_A;
  Vec ineq_b;
  Mat eq_A;
  Vec eq_b;
  Vec lo;
  Vec hi;

  explicit LinearProgram(int n_vars = 0) { resize(n_vars); }

  void resize(int n_vars) {
    objective = Vec::Zero(n_vars);
    ineq_A.resize(0, n_vars);
    ineq_b.resize(0);
    eq_A.resize(0, n_vars);
    eq_b.resize(0);
    lo = Vec::Constant(n_vars, -kInf);
    hi = Vec::Constant(n_vars, kInf);
  }

  int num_vars() const { return static_cast<int>(objective.size()); }

  void add_ineq(const Vec& row, double rhs) {
    ineq_A.conservativeResize(ineq_A.rows() + 1, num_vars());
    ineq_A.row(ineq_A.rows() - 1) = row.transpose();
    ineq_b.conservativeResize(ineq_b.size() + 1);
    ineq_b(ineq_b.size() - 1) = rhs;
  }

  void add_eq(const Vec& row, double rhs) {
    eq_A.conservativeResize(eq_A.rows() + 1, num_vars());
    eq_A.row(eq_A.rows() - 1) = row.transpose();
    eq_b.conservativeResize(eq_b.size() + 1);
    eq_b(eq_b.size() - 1) = rhs;
  }

  bool well_formed() const {
    return objective.allFinite() &&
           (ineq_A.size() == 0 || ineq_A.allFinite()) &&
           (ineq_b.size() == 0 || ineq_b.allFinite()) &&
           (eq_A.size() == 0 || eq_A.allFinite()) &&
           (eq_b.size() == 0 || eq_b.allFinite()) &&
           ineq_A.rows() == ineq_b.size() && eq_A.rows() == eq_b.size() &&
           ineq_A.cols() == num_vars() && eq_A.cols() == num_vars() &&
           lo.size() == num_vars() && hi.size() == num_vars();
  }
};

struct LPSolution {
  LPStatus status = LPStatus::NumericalFailure;
  Vec x;
  double objective_value = std::numeric_limits<double>::quiet_NaN();
  std::string diagnostic;

  bool optimal() const { return status == LPStatus::Optimal; }
};

struct SimplexOptions {
  double tol = 1e-9;
  long max_pivots = 200000;
  // Optional permutation of the original variables; used to re-solve
  // degenerate feasibility problems from distinct deterministic "seeds".
  std::vector<int> variable_order;
};

namespace detail {

// Standard-form problem: min c'y  s.t.  A y = b, y >= 0.
struct StandardForm {
  Mat A;
  Vec b;
  Vec c;
  // map back: x_j = shift_j + sign_j * y_{col_j} (- y_{neg_col_j} for free vars)
  struct VarMap {
    int col = -1;
    int neg_col = -1;  // second column for free variables
    double shift = 0.0;
    double sign = 1.0;
  };
  std::vector<VarMap> var_map;
  int n_cols = 0;
};

inline StandardForm to_standard_form(const LinearProgram& lp) {
  const int n = lp.num_vars();
  StandardForm sf;
  sf.var_map.resize(n);

  int cols = 0;
  std::vector<std::pair<int, double>> extra_upper;  // (var, hi-lo) rows to add
  for (int j = 0; j < n; ++j) {
    const double lo = lp.lo(j), hi = lp.hi(j);
    auto& vm = sf.var_map[j];
    if (std::isinf(lo) && std::isinf(hi)) {
      vm.col = cols++;
      vm.neg_col = cols++;
      vm.shift = 0.0;
      vm.sign = 1.0;
    } else if (!std::isinf(lo)) {
      vm.col = cols++;
      vm.shift = lo;
      vm.sign = 1.0;
      if (!std::isinf(hi)) extra_upper.emplace_back(j, hi - lo);
    } else {
      vm.col = cols++;
      vm.shift = hi;
      vm.sign = -1.0;
    }
  }
  sf.n_cols = cols;

  const int m_ineq = static_cast<int>(lp.ineq_A.rows());
  const int m_eq = static_cast<int>(lp.eq_A.rows());
  const int m_ub = static_cast<int>(extra_upper.size());
  const int m = m_ineq + m_ub + m_eq;
  const int n_slack = m_ineq + m_ub;

  sf.A = Mat::Zero(m, cols + n_slack);
  sf.b = Vec::Zero(m);
  sf.c = Vec::Zero(cols + n_slack);

  auto emit_row = [&](const Vec& row_x, double rhs, int r) {
    for (int j = 0; j < n; ++j) {
      const double a = row_x(j);
      if (a == 0.0) continue;
      const auto& vm = sf.var_map[j];
      sf.A(r, vm.col) += a * vm.sign;
      if (vm.neg_col >= 0) sf.A(r, vm.neg_col) -= a;
      rhs -= a * vm.shift;
    }
    sf.b(r) = rhs;
  };

  int r = 0;
  for (int i = 0; i < m_ineq; ++i, ++r) {
    emit_row(lp.ineq_A.row(i).transpose(), lp.ineq_b(i), r);
    sf.A(r, cols + r) = 1.0;  // slack
  }
  for (const auto& [j, ub] : extra_upper) {
    // y_j <= hi - lo expressed directly on the standard-form column
    sf.A(r, sf.var_map[j].col) = 1.0;
    sf.b(r) = ub;
    sf.A(r, cols + r) = 1.0;
    ++r;
  }
  for (int i = 0; i < m_eq; ++i, ++r) emit_row(lp.eq_A.row(i).transpose(), lp.eq_b(i), r);

  // normalize to b >= 0 so the phase-1 artificial basis is valid as-is
  for (int i = 0; i < m; ++i) {
    if (sf.b(i) < 0) {
      sf.A.row(i) = -sf.A.row(i);
      sf.b(i) = -sf.b(i);
    }
  }

  for (int j = 0; j < n; ++j) {
    const double cj = lp.objective(j);
    if (cj == 0.0) continue;
    const auto& vm = sf.var_map[j];
    sf.c(vm.col) += cj * vm.sign;
    if (vm.neg_col >= 0) sf.c(vm.neg_col) -= cj;
  }
  return sf;
}

// Tableau simplex, Bland's rule throughout. Returns false on pivot-limit.
class Tableau {
 public:
  Tableau(const Mat& A, const Vec& b, double tol, long max_pivots)
      : tol_(tol), max_pivots_(max_pivots) {
    m_ = static_cast<int>(A.rows());
    n_ = static_cast<int>(A.cols());
    T_ = Mat::Zero(m_, n_ + 1);
    T_.leftCols(n_) = A;
    T_.col(n_) = b;
    basis_.assign(m_, -1);
  }

  int rows() const { return m_; }
  int cols() const { return n_; }
  const std::vector<int>& basis() const { return basis_; }
  double rhs(int i) const { return T_(i, n_); }
  double at(int i, int j) const { return T_(i, j); }

  void set_basic(int row, int col) { basis_[row] = col; }

  void pivot(int row, int col) {
    T_.row(row) /= T_(row, col);
    for (int i = 0; i < m_; ++i) {
      if (i == row) continue;
      const double f = T_(i, col);
      if (f != 0.0) T_.row(i) -= f * T_.row(row);
    }
    basis_[row] = col;
  }

  // Minimize c'y over current basis; `allowed` masks columns that may enter.
  // Returns Optimal or Unbounded; NumericalFailure on pivot limit.
  LPStatus run(const Vec& c, const std::vector<bool>& allowed, double* value) {
    Vec cost = c;
    double offset = 0.0;
    // price out the basic variables
    for (int i = 0; i < m_; ++i) {
      const int bi = basis_[i];
      if (bi >= 0 && cost(bi) != 0.0) {
        const double f = cost(bi);
        cost -= f * T_.row(i).head(n_).transpose();
        offset += f * T_(i, n_);
        cost(bi) = 0.0;  // exact
      }
    }
    long pivots = 0;
    while (true) {
      int enter = -1;
      for (int j = 0; j < n_; ++j) {
        if (!allowed[j]) continue;
        if (cost(j) < -tol_) { enter = j; break; }  // Bland: lowest index
      }
      if (enter < 0) break;
      int leave = -1;
      double best_ratio = kInf;
      for (int i = 0; i < m_; ++i) {
        const double a = T_(i, enter);
        if (a > tol_) {
          const double ratio = T_(i, n_) / a;
          if (ratio < best_ratio - tol_ ||
              (ratio < best_ratio + tol_ &&
               (leave < 0 || basis_[i] < basis_[leave]))) {
            best_ratio = ratio;
            leave = i;
          }
        }
      }
      if (leave < 0) return LPStatus::Unbounded;
      const double f = cost(enter);
      pivot(leave, enter);
      if (f != 0.0) {
        offset += f * T_(leave, n_);
        cost -= f * T_.row(leave).head(n_).transpose();
        cost(enter) = 0.0;
      }
      if (++pivots > max_pivots_) return LPStatus::NumericalFailure;
    }
    if (value) *value = offset;
    return LPStatus::Optimal;
  }

 private:
  int m_ = 0, n_ = 0;
  double tol_;
  long max_pivots_;
  Mat T_;
  std::vector<int> basis_;
};

}  // namespace detail

/// Two-phase simplex with Bland's rule. Deterministic for a fixed
/// options.variable_order; anti-cycling by construction.
inline LPSolution solve_lp(const LinearProgram& lp_in,
                           const SimplexOptions& opts = {}) {
  LPSolution sol;
  if (!lp_in.well_formed()) {
    sol.diagnostic = "malformed LP (dimension mismatch or non-finite data)";
    return sol;
  }

  // Optional deterministic re-ordering of the original variables.
  const LinearProgram* lp = &lp_in;
  LinearProgram permuted;
  std::vector<int> order;
  if (!opts.variable_order.empty()) {
    order = opts.variable_order;
    if (static_cast<int>(order.size()) != lp_in.num_vars()) {
      sol.diagnostic = "variable_order size mismatch";
      return sol;
    }
    permuted.resize(lp_in.num_vars());
    permuted.ineq_A.resize(lp_in.ineq_A.rows(), lp_in.num_vars());
    permuted.eq_A.resize(lp_in.eq_A.rows(), lp_in.num_vars());
    permuted.ineq_b = lp_in.ineq_b;
    permuted.eq_b = lp_in.eq_b;
    for (int k = 0; k < lp_in.num_vars(); ++k) {
      const int j = order[k];
      permuted.objective(k) = lp_in.objective(j);
      permuted.lo(k) = lp_in.lo(j);
      permuted.hi(k) = lp_in.hi(j);
      if (lp_in.ineq_A.rows() > 0) permuted.ineq_A.col(k) = lp_in.ineq_A.col(j);
      if (lp_in.eq_A.rows() > 0) permuted.eq_A.col(k) = lp_in.eq_A.col(j);
    }
    lp = &permuted;
  }

  // Quick infeasibility from crossed bounds.
  for (int j = 0; j < lp->num_vars(); ++j) {
    if (lp->lo(j) > lp->hi(j)) {
      sol.status = LPStatus::Infeasible;
      sol.diagnostic = "crossed bounds on variable " + std::to_string(j);
      return sol;
    }
  }

  auto sf = detail::to_standard_form(*lp);
  const int m = static_cast<int>(sf.A.rows());
  const int n_real = static_cast<int>(sf.A.cols());

  // Phase 1: artificials on every row (b already normalized to >= 0).
  Mat A1(m, n_real + m);
  A1.leftCols(n_real) = sf.A;
  A1.rightCols(m) = Mat::Identity(m, m);
  detail::Tableau tab(A1, sf.b, opts.tol, opts.max_pivots);
  for (int i = 0; i < m; ++i) tab.set_basic(i, n_real + i);

  Vec c1 = Vec::Zero(n_real + m);
  c1.tail(m).setOnes();
  std::vector<bool> allow_all(n_real + m, true);
  double p1 = 0.0;
  LPStatus st = tab.run(c1, allow_all, &p1);
  if (st == LPStatus::NumericalFailure) {
    sol.diagnostic = "phase-1 pivot limit exceeded";
    return sol;
  }
  if (p1 > 1e-7) {
    sol.status = LPStatus::Infeasible;
    sol.objective_value = p1;
    sol.diagnostic = "phase-1 optimum " + std::to_string(p1);
    return sol;
  }

  // Drive any residual artificials out of the basis.
  std::vector<bool> allow_real(n_real + m, false);
  for (int j = 0; j < n_real; ++j) allow_real[j] = true;
  for (int i = 0; i < m; ++i) {
    if (tab.basis()[i] >= n_real) {
      int enter = -1;
      for (int j = 0; j < n_real; ++j) {
        if (std::abs(tab.at(i, j)) > opts.tol) { enter = j; break; }
      }
      if (enter >= 0) tab.pivot(i, enter);
      // else: redundant row; artificial stays basic at value 0, harmless.
    }
  }

  Vec c2 = Vec::Zero(n_real + m);
  c2.head(n_real) = sf.c;
  double p2 = 0.0;
  st = tab.run(c2, allow_real, &p2);
  if (st == LPStatus::Unbounded) {
    sol.status = LPStatus::Unbounded;
    sol.diagnostic = "objective unbounded below";
    return sol;
  }
  if (st == LPStatus::NumericalFailure) {
    sol.diagnostic = "phase-2 pivot limit exceeded";
    return sol;
  }

  // Recover standard-form values, then original variables.
  Vec y = Vec::Zero(n_real);
  for (int i = 0; i < m; ++i) {
    if (tab.basis()[i] >= 0 && tab.basis()[i] < n_real) y(tab.basis()[i]) = tab.rhs(i);
  }
  Vec x(lp->num_vars());
  for (int j = 0; j < lp->num_vars(); ++j) {
    const auto& vm = sf.var_map[j];
    double v = vm.shift + vm.sign * y(vm.col);
    if (vm.neg_col >= 0) v -= y(vm.neg_col);
    x(j) = v;
  }

  if (!order.empty()) {
    Vec x_orig(lp_in.num_vars());
    for (int k = 0; k < lp_in.num_vars(); ++k) x_orig(order[k]) = x(k);
    x.swap(x_orig);
  }

  sol.status = LPStatus::Optimal;
  sol.x = x;
  sol.objective_value = lp_in.objective.dot(x);

  // primal feasibility audit (spec: residual <= 1e-7 when optimal)
  double viol = 0.0;
  if (lp_in.ineq_A.rows() > 0)
    viol = std::max(viol, (lp_in.ineq_A * x - lp_in.ineq_b).maxCoeff());
  if (lp_in.eq_A.rows() > 0)
    viol = std::max(viol, (lp_in.eq_A * x - lp_in.eq_b).cwiseAbs().maxCoeff());
  for (int j = 0; j < lp_in.num_vars(); ++j) {
    if (std::isfinite(lp_in.lo(j))) viol = std::max(viol, lp_in.lo(j) - x(j));
    if (std::isfinite(lp_in.hi(j))) viol = std::max(viol, x(j) - lp_in.hi(j));
  }
  if (viol > 1e-7) {
    sol.status = LPStatus::NumericalFailure;
    sol.diagnostic = "primal feasibility residual " + std::to_string(viol);
  }
  return sol;
}

/// Affine expression r(z) = M z + d.
struct AffineExpr {
  Mat M;
  Vec d;

  int rows() const { return static_cast<int>(M.rows()); }
  int cols() const { return static_cast<int>(M.cols()); }
  Vec eval(const Vec& z) const { return M * z + d; }
};

/// minimize ||M z + d||_1 subject to the constraints of `base` (whose
/// objective is ignored). Epigraph split r = p - q with p, q >= 0; the
/// epigraph variables are ordered before z so Bland's rule resolves value
/// ties toward small |r| components first.
/// Solution x holds z; objective_value is the attained L1 norm.
inline LPSolution solve_l1_min(const AffineExpr& r, const LinearProgram& base,
                               const SimplexOptions& opts = {}) {
  const int nz = r.cols();
  const int mr = r.rows();
  if (base.num_vars() != nz) {
    LPSolution s;
    s.diagnostic = "constraint variable count does not match expression";
    return s;
  }
  // layout: [p (mr), q (mr), z (nz)]
  LinearProgram lp(2 * mr + nz);
  lp.objective.head(2 * mr).setOnes();
  lp.lo.head(2 * mr).setZero();
  lp.lo.tail(nz) = base.lo;
  lp.hi.tail(nz) = base.hi;

  // -p + q + M z = -d
  lp.eq_A = Mat::Zero(mr + base.eq_A.rows(), 2 * mr + nz);
  lp.eq_b = Vec::Zero(mr + base.eq_A.rows());
  lp.eq_A.topLeftCorner(mr, mr) = -Mat::Identity(mr, mr);
  lp.eq_A.block(0, mr, mr, mr) = Mat::Identity(mr, mr);
  lp.eq_A.topRightCorner(mr, nz) = r.M;
  lp.eq_b.head(mr) = -r.d;
  if (base.eq_A.rows() > 0) {
    lp.eq_A.bottomRightCorner(base.eq_A.rows(), nz) = base.eq_A;
    lp.eq_b.tail(base.eq_b.size()) = base.eq_b;
  }
  if (base.ineq_A.rows() > 0) {
    lp.ineq_A = Mat::Zero(base.ineq_A.rows(), 2 * mr + nz);
    lp.ineq_A.rightCols(nz) = base.ineq_A;
    lp.ineq_b = base.ineq_b;
  }

  LPSolution s = solve_lp(lp, opts);
  if (s.optimal()) {
    const Vec z = s.x.tail(nz);
    s.objective_value = r.eval(z).lpNorm<1>();
    s.x = z;
  }
  return s;
}

/// maximize ||M z + d||_1 over the constraints of `base` by enumerating the
/// 2^n_bin sign patterns of r's components (one LP per pattern). The caller
/// must supply normalization constraints that bound every pattern's LP.
inline LPSolution solve_l1_max_milp(const AffineExpr& r,
                                    const LinearProgram& base, int n_bin,
                                    const SimplexOptions& opts = {}) {
  LPSolution best;
  if (n_bin != r.rows()) {
    best.diagnostic = "n_bin must equal the number of expression components";
    return best;
  }
  if (n_bin > 20) {
    best.diagnostic = "sign enumeration bound exceeded (n_bin > 20)";
    return best;
  }
  if (base.num_vars() != r.cols()) {
    best.diagnostic = "constraint variable count does not match expression";
    return best;
  }
  if (n_bin == 0) {
    // empty expression: norm is zero at any feasible point
    LinearProgram lp = base;
    lp.objective.setZero();
    best = solve_lp(lp, opts);
    if (best.optimal()) best.objective_value = 0.0;
    return best;
  }

  bool any_optimal = false;
  for (unsigned pattern = 0; pattern < (1u << n_bin); ++pattern) {
    Vec sigma(n_bin);
    for (int i = 0; i < n_bin; ++i)
      sigma(i) = (pattern >> i) & 1u ? 1.0 : -1.0;
    LinearProgram lp = base;
    lp.objective = -(r.M.transpose() * sigma);  // maximize sigma'(Mz+d)
    LPSolution s = solve_lp(lp, opts);
    if (s.status == LPStatus::Unbounded) {
      s.diagnostic = "sign-pattern sub-LP unbounded; add normalization";
      return s;
    }
    if (!s.optimal()) continue;
    const double val = sigma.dot(r.eval(s.x));
    if (!any_optimal || val > best.objective_value) {
      any_optimal = true;
      best = s;
      best.objective_value = val;
    }
  }
  if (!any_optimal && best.diagnostic.empty()) {
    best.status = LPStatus::Infeasible;
    best.diagnostic = "all sign-pattern sub-LPs infeasible";
  }
  return best;
}

}  // namespace gpcl
