#pragma once

// Desk-scale scenarios: ground-truth constraint oracles, task factories, and
// the two demonstration synthesizers (closed-form geodesic constructions with
// exact multiplier certificates, and a penalty-method transcription for the
// arm). The oracle is available here only; the learner never sees it.

#include "gpcl/kkt.hpp"
#include "gpcl/system.hpp"

#include <cmath>
#include <random>

namespace gpcl {

struct Disc {
  Vec center;
  double radius = 0.0;
};

struct GridSpec {
  Vec lo;
  Vec hi;
  int nx = 200;
  int ny = 200;
};

struct Scenario {
  std::string name;  // "cup" | "discs" | "arm"

  // cup (annulus wall between the radii is unsafe)
  Vec center;
  double inner_radius = 0.0;
  double outer_radius = 0.0;

  // discs (disc interiors are unsafe)
  std::vector<Disc> obstacles;

  // arm (2-link planar arm, workspace disc obstacle; constraint in C-space)
  double link1 = 0.0;
  double link2 = 0.0;
  Disc workspace_obstacle;

  double control_bound = 0.0;
  int demo_horizon = 40;
  GridSpec grid;

  bool is_cup() const { return name == "cup"; }
  bool is_discs() const { return name == "discs"; }
  bool is_arm() const { return name == "arm"; }

  // -- ground-truth constraint oracle ------------------------------------

  double g_star(const Vec& kappa) const {
    if (is_cup()) {
      const double rho = (kappa - center).norm();
      const double mid = 0.5 * (inner_radius + outer_radius);
      const double half_w = 0.5 * (outer_radius - inner_radius);
      return half_w - std::abs(rho - mid);
    }
    if (is_discs()) {
      double g = -kInf;
      for (const auto& d : obstacles)
        g = std::max(g, d.radius - (kappa - d.center).norm());
      return g;
    }
    return workspace_obstacle.radius - arm_clearance(kappa, nullptr);
  }

  Vec g_star_grad(const Vec& kappa) const {
    if (is_cup()) {
      const Vec r = kappa - center;
      const double rho = r.norm();
      const double mid = 0.5 * (inner_radius + outer_radius);
      return (rho < mid ? 1.0 : -1.0) * r / rho;
    }
    if (is_discs()) {
      int best = 0;
      double g = -kInf;
      for (size_t i = 0; i < obstacles.size(); ++i) {
        const double gi = obstacles[i].radius - (kappa - obstacles[i].center).norm();
        if (gi > g) {
          g = gi;
          best = static_cast<int>(i);
        }
      }
      const Vec r = kappa - obstacles[best].center;
      return -r / r.norm();
    }
    Vec grad(2);
    arm_clearance(kappa, &grad);
    return -grad;  // g* = radius - clearance
  }

  // Min distance from the workspace obstacle center to the arm's links, with
  // an optional gradient w.r.t. joint angles (envelope theorem at the closest
  // point, so ties and clamped endpoints are handled consistently).
  double arm_clearance(const Vec& q, Vec* grad) const {
    const Vec c = workspace_obstacle.center;
    const double q1 = q(0), q12 = q(0) + q(1);
    Vec base = Vec::Zero(2);
    Vec elbow(2), tip(2);
    elbow << link1 * std::cos(q1), link1 * std::sin(q1);
    tip = elbow;
    tip(0) += link2 * std::cos(q12);
    tip(1) += link2 * std::sin(q12);
    Mat J_elbow(2, 2), J_tip(2, 2);
    J_elbow << -link1 * std::sin(q1), 0.0, link1 * std::cos(q1), 0.0;
    J_tip = J_elbow;
    J_tip(0, 0) += -link2 * std::sin(q12);
    J_tip(0, 1) = -link2 * std::sin(q12);
    J_tip(1, 0) += link2 * std::cos(q12);
    J_tip(1, 1) = link2 * std::cos(q12);
    const Mat J_base = Mat::Zero(2, 2);

    double best = kInf;
    Vec best_grad = Vec::Zero(2);
    auto consider = [&](const Vec& a, const Vec& b, const Mat& Ja,
                        const Mat& Jb) {
      const Vec ab = b - a;
      const double len2 = ab.squaredNorm();
      double s = len2 > 0 ? (c - a).dot(ab) / len2 : 0.0;
      s = std::clamp(s, 0.0, 1.0);
      const Vec p = a + s * ab;
      const double d = (p - c).norm();
      if (d < best) {
        best = d;
        if (d > 0)
          best_grad = ((1.0 - s) * Ja + s * Jb).transpose() * ((p - c) / d);
      }
    };
    consider(base, elbow, J_base, J_elbow);
    consider(elbow, tip, J_elbow, J_tip);
    if (grad) *grad = best_grad;
    return best;
  }

  std::shared_ptr<const SystemModel> system() const {
    return std::make_shared<SystemModel>(make_single_integrator(2));
  }

  /// Task with this scenario's cost family and per-step control constraint.
  std::shared_ptr<TaskSpec> make_task(const Vec& start, const Vec& goal,
                                      int T) const {
    auto task = std::make_shared<TaskSpec>();
    task->system = system();
    task->constraint_map = ConstraintMap::identity(2);
    task->start = start;
    task->goal = goal;
    task->control_bound = control_bound;
    const TrajectoryLayout l{T, 2, 2};
    task->known_ineq = make_control_norm_constraints(l, control_bound);
    if (is_cup()) {
      const Vec c = center;
      const double mid = 0.5 * (inner_radius + outer_radius);
      task->cost_value = [l, c, mid](const Vec& xi) {
        double v = 0.0;
        for (int t = 0; t < l.T; ++t) {
          const double rho = (xi.segment(l.x_offset(t), 2) - c).norm();
          v += (rho - mid) * (rho - mid);
        }
        return v;
      };
      task->cost_gradient = [l, c, mid](const Vec& xi) {
        Vec g = Vec::Zero(xi.size());
        for (int t = 0; t < l.T; ++t) {
          const Vec r = xi.segment(l.x_offset(t), 2) - c;
          const double rho = r.norm();
          if (rho > 0) g.segment(l.x_offset(t), 2) = 2.0 * (rho - mid) * r / rho;
        }
        return g;
      };
    } else {
      task->cost_value = [l](const Vec& xi) {
        double v = 0.0;
        for (int t = 0; t + 1 < l.T; ++t)
          v += xi.segment(l.u_offset(t), 2).squaredNorm();
        return v;
      };
      task->cost_gradient = [l](const Vec& xi) {
        Vec g = Vec::Zero(xi.size());
        for (int t = 0; t + 1 < l.T; ++t)
          g.segment(l.u_offset(t), 2) = 2.0 * xi.segment(l.u_offset(t), 2);
        return g;
      };
    }
    return task;
  }
};

inline Scenario make_cup_scenario() {
  Scenario s;
  s.name = "cup";
  s.center = Vec::Zero(2);
  s.inner_radius = 0.8;
  s.outer_radius = 1.2;
  s.control_bound = 0.6;
  s.demo_horizon = 40;
  s.grid.lo = Vec::Constant(2, -2.0);
  s.grid.hi = Vec::Constant(2, 2.0);
  return s;
}

inline Scenario make_discs_scenario() {
  Scenario s;
  s.name = "discs";
  Disc d;
  d.center = Vec::Zero(2);
  d.radius = 1.0;
  s.obstacles = {d};
  s.control_bound = 0.8;
  s.demo_horizon = 40;
  s.grid.lo = Vec::Constant(2, -3.0);
  s.grid.hi = Vec::Constant(2, 3.0);
  return s;
}

inline Scenario make_arm_scenario() {
  Scenario s;
  s.name = "arm";
  s.link1 = 1.0;
  s.link2 = 0.8;
  s.workspace_obstacle.center = Vec(2);
  s.workspace_obstacle.center << 1.1, 1.1;
  s.workspace_obstacle.radius = 0.35;
  s.control_bound = 0.35;
  s.demo_horizon = 30;
  s.grid.lo = Vec::Constant(2, -M_PI);
  s.grid.hi = Vec::Constant(2, M_PI);
  return s;
}

struct CertifiedDemo {
  Demonstration demo;
  MultiplierAssignment certificate;
};

namespace detail {

inline Vec unit_angle(double th) {
  Vec e(2);
  e << std::cos(th), std::sin(th);
  return e;
}

inline Vec tangent_dir(double th) {
  Vec d(2);
  d << -std::sin(th), std::cos(th);
  return d;
}

inline Demonstration finish_demo(const Scenario& sc, const Mat& states) {
  const int T = static_cast<int>(states.rows());
  Demonstration demo;
  demo.states = states;
  demo.controls.resize(T - 1, 2);
  for (int t = 0; t + 1 < T; ++t)
    demo.controls.row(t) = states.row(t + 1) - states.row(t);
  demo.task = sc.make_task(states.row(0).transpose(),
                           states.row(T - 1).transpose(), T);
  return demo;
}

inline MultiplierAssignment empty_multipliers(const Demonstration& demo) {
  const auto l = demo.layout();
  MultiplierAssignment m;
  m.lambda_k = Vec::Zero(static_cast<int>(demo.task->known_ineq.size()));
  m.nu_k = Vec::Zero((l.T - 1) * l.n_x + 2 * l.n_x);
  m.lambda_unk = Vec::Zero(l.T);
  return m;
}

}  // namespace detail

/// Wall-riding cup demo on the given radius; the radial cost presses the path
/// into the wall so every state is tight with multiplier = wall width.
inline CertifiedDemo make_cup_wipe(const Scenario& sc, bool inner,
                                   double theta0, double theta1, int T) {
  const double R = inner ? sc.inner_radius : sc.outer_radius;
  Mat states(T, 2);
  for (int t = 0; t < T; ++t) {
    const double th = theta0 + (theta1 - theta0) * t / (T - 1);
    states.row(t) = (sc.center + R * detail::unit_angle(th)).transpose();
  }
  CertifiedDemo cd;
  cd.demo = detail::finish_demo(sc, states);
  cd.certificate = detail::empty_multipliers(cd.demo);
  const double w = sc.outer_radius - sc.inner_radius;
  cd.certificate.lambda_unk.setConstant(w);
  for (int t = 0; t < T; ++t) {
    const Vec rad = (states.row(t).transpose() - sc.center).normalized();
    cd.certificate.unk_gradients.emplace_back(t, Vec(inner ? rad : Vec(-rad)));
  }
  return cd;
}

/// Shortest-path demo around a disc: straight tangent run, boundary arc,
/// straight tangent run. Exact stationarity requires straight spacing
/// r*sin(dtheta) against arc chords; junction multipliers are half the
/// interior arc value. n_in or n_out may be zero (endpoints pinned on the
/// arc absorb their force into the pin multipliers).
inline CertifiedDemo make_disc_geodesic(const Scenario& sc, int disc_index,
                                        double theta_in, double arc_span,
                                        int n_arc, int n_in, int n_out) {
  const Disc& disc = sc.obstacles.at(disc_index);
  const double r = disc.radius;
  const double dth = arc_span / n_arc;
  const double step = r * std::sin(dth);
  const int T = n_in + n_arc + 1 + n_out;
  Mat states(T, 2);
  int row = 0;
  const Vec p_in = disc.center + r * detail::unit_angle(theta_in);
  const Vec d_in = detail::tangent_dir(theta_in);
  for (int k = n_in; k >= 1; --k)
    states.row(row++) = (p_in - k * step * d_in).transpose();
  for (int k = 0; k <= n_arc; ++k)
    states.row(row++) =
        (disc.center + r * detail::unit_angle(theta_in + k * dth)).transpose();
  const double theta_out = theta_in + arc_span;
  const Vec p_out = disc.center + r * detail::unit_angle(theta_out);
  const Vec d_out = detail::tangent_dir(theta_out);
  for (int k = 1; k <= n_out; ++k)
    states.row(row++) = (p_out + k * step * d_out).transpose();

  CertifiedDemo cd;
  cd.demo = detail::finish_demo(sc, states);
  cd.certificate = detail::empty_multipliers(cd.demo);
  auto& m = cd.certificate;
  const auto l = cd.demo.layout();
  // control blocks pin the dynamics multipliers
  for (int t = 0; t + 1 < T; ++t)
    m.nu_k.segment(t * 2, 2) = -2.0 * cd.demo.controls.row(t).transpose();
  // start/goal pins
  m.nu_k.segment((T - 1) * 2, 2) = 2.0 * cd.demo.controls.row(0).transpose();
  m.nu_k.segment((T - 1) * 2 + 2, 2) =
      -2.0 * cd.demo.controls.row(T - 2).transpose();

  const double lam_interior = 4.0 * r * (1.0 - std::cos(dth));
  const double lam_junction = 2.0 * r * (1.0 - std::cos(dth));
  for (int k = 0; k <= n_arc; ++k) {
    const int t = n_in + k;
    if (t == 0 || t == T - 1) continue;  // pinned endpoints carry no force
    const bool junction = (k == 0 && n_in > 0) || (k == n_arc && n_out > 0);
    m.lambda_unk(t) = junction ? lam_junction : lam_interior;
    const Vec gamma = -detail::unit_angle(theta_in + k * dth);
    m.unk_gradients.emplace_back(t, gamma);
  }
  return cd;
}

/// Analytic demonstrations with exact KKT certificates. Cup scenarios get
/// alternating inner/outer wall wipes covering complementary sectors; disc
/// scenarios get tangent-arc-tangent shortest paths at staggered angles.
inline std::vector<CertifiedDemo> synth_geodesic_demos(const Scenario& sc,
                                                       int n_demos) {
  if (!(sc.is_cup() || sc.is_discs()))
    throw std::invalid_argument(
        "synth_geodesic_demos: requires a point-robot scenario with "
        "disc/annulus obstacles");
  std::vector<CertifiedDemo> demos;
  const int T = sc.demo_horizon;
  if (sc.is_cup()) {
    const double span = 200.0 * M_PI / 180.0;
    for (int i = 0; i < n_demos; ++i) {
      const bool inner = i % 2 == 0;
      const double theta0 = i * 2.0 * M_PI / n_demos;
      demos.push_back(make_cup_wipe(sc, inner, theta0, theta0 + span, T));
    }
  } else {
    for (int i = 0; i < n_demos; ++i) {
      const int disc_index = i % static_cast<int>(sc.obstacles.size());
      const double theta_in = 0.3 + i * 2.0 * M_PI / n_demos;
      const double span = 0.9 + 0.15 * (i % 3);
      const int n_arc = std::max(6, T / 3);
      const int n_side = std::max(2, (T - n_arc - 1) / 2);
      demos.push_back(make_disc_geodesic(sc, disc_index, theta_in, span, n_arc,
                                         n_side, n_side));
    }
  }
  for (auto& cd : demos) {
    const auto& task = *cd.demo.task;
    if (sc.g_star(task.start) > 1e-9 || sc.g_star(task.goal) > 1e-9)
      throw std::runtime_error(
          "synth_geodesic_demos: endpoint inside the unsafe set");
    const auto rep = kkt_certificate_check(cd.demo, cd.certificate, 1e-6);
    if (!rep.passed)
      throw std::runtime_error(
          "synth_geodesic_demos: certificate failed (" + rep.violations[0] +
          ")");
  }
  return demos;
}

struct NumericSynthOptions {
  std::vector<double> penalty_weights = {10.0, 100.0, 1e3, 1e4, 1e5};
  int newton_iters = 60;
  double certificate_tol = 1e-4;  // ||s||_inf gate with estimated multipliers
  double oracle_tol = 1e-6;       // g* <= tol everywhere after projection
  unsigned seed = 1;
};

namespace detail {

// One penalty stage: damped Newton on
//   sum_t ||x_{t+1}-x_t||^2 + w * sum_t max(g*(x_t),0)^2
// over the interior states (endpoints fixed).
inline void penalty_newton(const Scenario& sc, Mat& states, double w,
                           int iters) {
  const int T = static_cast<int>(states.rows());
  const int n = (T - 2) * 2;
  if (n <= 0) return;
  auto objective = [&](const Mat& st) {
    double v = 0.0;
    for (int t = 0; t + 1 < T; ++t)
      v += (st.row(t + 1) - st.row(t)).squaredNorm();
    for (int t = 0; t < T; ++t) {
      const double g = sc.g_star(st.row(t).transpose());
      if (g > 0) v += w * g * g;
    }
    return v;
  };
  double mu = 1e-8;  // Levenberg damping
  for (int it = 0; it < iters; ++it) {
    Vec grad = Vec::Zero(n);
    Mat H = Mat::Zero(n, n);
    // quadratic chain term
    for (int t = 1; t + 1 < T; ++t) {
      const int i = (t - 1) * 2;
      const Vec x = states.row(t).transpose();
      const Vec xm = states.row(t - 1).transpose();
      const Vec xp = states.row(t + 1).transpose();
      grad.segment(i, 2) += 2.0 * (2.0 * x - xm - xp);
      H.block(i, i, 2, 2) += 4.0 * Mat::Identity(2, 2);
      if (t - 1 >= 1) H.block(i, i - 2, 2, 2) += -2.0 * Mat::Identity(2, 2);
      if (t + 1 <= T - 2) H.block(i, i + 2, 2, 2) += -2.0 * Mat::Identity(2, 2);
    }
    // penalty term (Gauss-Newton curvature)
    for (int t = 1; t + 1 < T; ++t) {
      const int i = (t - 1) * 2;
      const Vec x = states.row(t).transpose();
      const double g = sc.g_star(x);
      if (g > 0) {
        const Vec dg = sc.g_star_grad(x);
        grad.segment(i, 2) += 2.0 * w * g * dg;
        H.block(i, i, 2, 2) += 2.0 * w * dg * dg.transpose();
      }
    }
    const double f0 = objective(states);
    bool stepped = false;
    for (int attempt = 0; attempt < 12 && !stepped; ++attempt) {
      Mat Hd = H + mu * Mat::Identity(n, n);
      Vec delta = Hd.ldlt().solve(-grad);
      Mat trial = states;
      for (int t = 1; t + 1 < T; ++t)
        trial.row(t) += delta.segment((t - 1) * 2, 2).transpose();
      if (objective(trial) <= f0) {
        states = trial;
        mu = std::max(mu * 0.3, 1e-10);
        stepped = true;
      } else {
        mu *= 10.0;
      }
    }
    if (!stepped || grad.cwiseAbs().maxCoeff() < 1e-12) break;
  }
}

inline void project_to_boundary(const Scenario& sc, Mat& states) {
  const int T = static_cast<int>(states.rows());
  for (int t = 1; t + 1 < T; ++t) {
    Vec x = states.row(t).transpose();
    if (sc.g_star(x) > -1e-6) {
      for (int it = 0; it < 8; ++it) {
        const double g = sc.g_star(x);
        if (std::abs(g) < 1e-12) break;
        const Vec dg = sc.g_star_grad(x);
        x -= g * dg / dg.squaredNorm();
      }
      states.row(t) = x.transpose();
    }
  }
}

}  // namespace detail

/// Penalty-method transcription synthesizer (the oracle is visible here
/// only). Demos whose estimated-multiplier stationarity exceeds the
/// certificate tolerance, or that violate the oracle after projection, are
/// discarded.
inline std::vector<Demonstration> synth_numeric_demos(
    const Scenario& sc, int n_demos, const NumericSynthOptions& opts = {}) {
  std::mt19937_64 rng(opts.seed);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  const int T = sc.demo_horizon;
  std::vector<Demonstration> out;

  auto sample_safe_state = [&]() -> Vec {
    for (int tries = 0; tries < 1000; ++tries) {
      Vec x(2);
      x(0) = sc.grid.lo(0) + (sc.grid.hi(0) - sc.grid.lo(0)) * uni(rng);
      x(1) = sc.grid.lo(1) + (sc.grid.hi(1) - sc.grid.lo(1)) * uni(rng);
      if (sc.g_star(x) < -0.15) return x;
    }
    throw std::runtime_error("synth_numeric_demos: no safe sample found");
  };

  int attempts = 0;
  while (static_cast<int>(out.size()) < n_demos && attempts < 10 * n_demos) {
    ++attempts;
    const Vec a = sample_safe_state();
    const Vec b = sample_safe_state();
    Mat states(T, 2);
    for (int t = 0; t < T; ++t)
      states.row(t) = (a + (b - a) * (double(t) / (T - 1))).transpose();
    for (double w : opts.penalty_weights)
      detail::penalty_newton(sc, states, w, opts.newton_iters);
    detail::project_to_boundary(sc, states);

    Demonstration demo = detail::finish_demo(sc, states);

    // oracle feasibility
    bool ok = true;
    for (int t = 0; t < T && ok; ++t)
      ok = sc.g_star(states.row(t).transpose()) <= opts.oracle_tol;
    if (!ok) continue;
    // control bound must stay inactive for the multiplier estimate below
    for (int t = 0; t + 1 < T && ok; ++t)
      ok = demo.controls.row(t).norm() < sc.control_bound - 1e-6;
    if (!ok) continue;

    // estimate multipliers: control blocks pin nu, boundary states get the
    // radial component of the curvature force
    MultiplierAssignment m = detail::empty_multipliers(demo);
    for (int t = 0; t + 1 < T; ++t)
      m.nu_k.segment(t * 2, 2) = -2.0 * demo.controls.row(t).transpose();
    m.nu_k.segment((T - 1) * 2, 2) = 2.0 * demo.controls.row(0).transpose();
    m.nu_k.segment((T - 1) * 2 + 2, 2) =
        -2.0 * demo.controls.row(T - 2).transpose();
    for (int t = 1; t + 1 < T; ++t) {
      const Vec x = states.row(t).transpose();
      if (std::abs(sc.g_star(x)) < 1e-7) {
        const Vec force = 2.0 * (demo.controls.row(t) - demo.controls.row(t - 1))
                              .transpose();
        const Vec dg = sc.g_star_grad(x);
        const double lam = force.dot(dg) / dg.squaredNorm();
        if (lam > 0) {
          m.lambda_unk(t) = lam;
          m.unk_gradients.emplace_back(t, dg);
        }
      }
    }
    const auto rep = kkt_certificate_check(demo, m, opts.certificate_tol);
    if (!rep.passed) continue;  // non-convergent attempt, discarded
    out.push_back(std::move(demo));
  }
  return out;
}

}  // namespace gpcl
