#pragma once

// Systems, tasks, demonstrations. Everything is immutable after construction;
// trajectory packing follows [x_0 .. x_{T-1}, u_0 .. u_{T-2}].

#include <Eigen/Dense>

#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace gpcl {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

/// Deterministic discrete-time system x_{t+1} = step(x_t, u_t, t).
struct SystemModel {
  int state_dim = 0;
  int control_dim = 0;
  std::function<Vec(const Vec&, const Vec&, int)> step;
  std::function<Mat(const Vec&, const Vec&, int)> step_jac_x;  // n_x x n_x
  std::function<Mat(const Vec&, const Vec&, int)> step_jac_u;  // n_x x n_u
};

inline SystemModel make_single_integrator(int n) {
  SystemModel s;
  s.state_dim = n;
  s.control_dim = n;
  s.step = [](const Vec& x, const Vec& u, int) -> Vec { return x + u; };
  s.step_jac_x = [n](const Vec&, const Vec&, int) -> Mat {
    return Mat::Identity(n, n);
  };
  s.step_jac_u = [n](const Vec&, const Vec&, int) -> Mat {
    return Mat::Identity(n, n);
  };
  return s;
}

/// Time-separable map from states to constraint space.
struct ConstraintMap {
  int constraint_dim = 0;
  std::function<Vec(const Vec&)> phi_sep;       // x -> kappa
  std::function<Mat(const Vec&)> phi_jacobian;  // n_c x n_x

  static ConstraintMap identity(int n) {
    ConstraintMap m;
    m.constraint_dim = n;
    m.phi_sep = [](const Vec& x) -> Vec { return x; };
    m.phi_jacobian = [n](const Vec&) -> Mat { return Mat::Identity(n, n); };
    return m;
  }

  /// Selects a contiguous slice of the state (e.g. position components).
  static ConstraintMap select(int n_x, int offset, int count) {
    ConstraintMap m;
    m.constraint_dim = count;
    m.phi_sep = [offset, count](const Vec& x) -> Vec {
      return x.segment(offset, count);
    };
    m.phi_jacobian = [n_x, offset, count](const Vec&) -> Mat {
      Mat J = Mat::Zero(count, n_x);
      J.block(0, offset, count, count) = Mat::Identity(count, count);
      return J;
    };
    return m;
  }
};

/// Scalar constraint over a packed trajectory, with analytic gradient.
struct ScalarConstraint {
  std::string name;
  std::function<double(const Vec&)> value;
  std::function<Vec(const Vec&)> gradient;
};

struct TrajectoryLayout {
  int T = 0;
  int n_x = 0;
  int n_u = 0;

  int dim() const { return T * n_x + (T - 1) * n_u; }
  int x_offset(int t) const { return t * n_x; }
  int u_offset(int t) const { return T * n_x + t * n_u; }
};

struct TaskSpec {
  std::shared_ptr<const SystemModel> system;
  ConstraintMap constraint_map;
  std::function<double(const Vec&)> cost_value;  // optional (null allowed)
  std::function<Vec(const Vec&)> cost_gradient;
  std::vector<ScalarConstraint> known_ineq;
  std::vector<ScalarConstraint> known_eq;  // beyond auto-generated ones
  Vec start;
  Vec goal;
  double control_bound = 0.0;  // ||u||_2 <= control_bound when > 0
  Vec metric_weights;          // state metric; empty means all-ones
};

struct Demonstration {
  Mat states;    // T x n_x, row t = x_t
  Mat controls;  // (T-1) x n_u
  std::shared_ptr<const TaskSpec> task;

  int horizon() const { return static_cast<int>(states.rows()); }

  TrajectoryLayout layout() const {
    return TrajectoryLayout{horizon(), static_cast<int>(states.cols()),
                            static_cast<int>(controls.cols())};
  }

  Vec packed() const {
    const auto l = layout();
    Vec xi(l.dim());
    for (int t = 0; t < l.T; ++t)
      xi.segment(l.x_offset(t), l.n_x) = states.row(t).transpose();
    for (int t = 0; t + 1 < l.T; ++t)
      xi.segment(l.u_offset(t), l.n_u) = controls.row(t).transpose();
    return xi;
  }
};

/// Multipliers entering the stationarity residual. `unk_gradients` live in
/// constraint space and are mapped into state coordinates by the phi
/// jacobian during assembly.
struct MultiplierAssignment {
  Vec lambda_k;                                // N_ineq, >= 0
  Vec nu_k;                                    // N_eq
  Vec lambda_unk;                              // T, >= 0
  std::vector<std::pair<int, Vec>> unk_gradients;  // (t, grad in R^{n_c})
};

/// Quadratic control-effort constraint ||u_t||^2 <= bound^2, one per step.
inline std::vector<ScalarConstraint> make_control_norm_constraints(
    const TrajectoryLayout& layout, double bound) {
  std::vector<ScalarConstraint> cs;
  cs.reserve(layout.T - 1);
  for (int t = 0; t + 1 < layout.T; ++t) {
    ScalarConstraint c;
    c.name = "ctrl[" + std::to_string(t) + "]";
    const int off = layout.u_offset(t);
    const int n_u = layout.n_u;
    c.value = [off, n_u, bound](const Vec& xi) {
      return xi.segment(off, n_u).squaredNorm() - bound * bound;
    };
    c.gradient = [off, n_u](const Vec& xi) {
      Vec g = Vec::Zero(xi.size());
      g.segment(off, n_u) = 2.0 * xi.segment(off, n_u);
      return g;
    };
    cs.push_back(std::move(c));
  }
  return cs;
}

}  // namespace gpcl
