#include <catch2/catch_amalgamated.hpp>

#include "gpcl/finite_diff.hpp"
#include "gpcl/kkt.hpp"
#include "support/builders.hpp"

#include <random>

using namespace gpcl;

TEST_CASE("straight-line demo with adjoint multipliers has zero residual") {
  Vec a(2), b(2);
  a << -1.0, 0.5;
  b << 2.0, -1.0;
  auto demo = testsup::make_straight_line_demo(a, b, 8);
  auto m = testsup::straight_line_multipliers(demo);
  const Vec s = assemble_residual(demo, m);
  CHECK(s.norm() <= 1e-9);
}

TEST_CASE("zero multipliers on a constant demo with zero cost gradient") {
  auto sys = std::make_shared<SystemModel>(make_single_integrator(2));
  auto task = std::make_shared<TaskSpec>();
  task->system = sys;
  task->constraint_map = ConstraintMap::identity(2);
  task->start = Vec::Zero(2);
  task->goal = Vec::Zero(2);
  task->cost_gradient = [](const Vec& xi) { return Vec::Zero(xi.size()); };

  Demonstration demo;
  demo.states = Mat::Zero(5, 2);
  demo.controls = Mat::Zero(4, 2);
  demo.task = task;

  MultiplierAssignment m;
  m.lambda_k = Vec::Zero(0);
  m.nu_k = Vec::Zero(4 * 2 + 4);
  m.lambda_unk = Vec::Zero(5);
  const Vec s = assemble_residual(demo, m);
  CHECK(s.cwiseAbs().maxCoeff() == 0.0);

  auto report = kkt_certificate_check(demo, m, 1e-9);
  CHECK(report.passed);
}

TEST_CASE("residual is affine in the multipliers") {
  Vec a(2), b(2);
  a << 0.0, 0.0;
  b << 1.0, 2.0;
  auto demo = testsup::make_straight_line_demo(a, b, 6);
  auto rs = build_residual_system(demo);

  std::mt19937_64 rng(42);
  std::normal_distribution<double> gauss(0.0, 1.0);
  auto random_assignment = [&](bool zero) {
    MultiplierAssignment m;
    m.lambda_k = Vec::Zero(rs.num_ineq());
    m.nu_k = Vec::Zero(rs.num_eq());
    m.lambda_unk = Vec::Zero(rs.layout.T);
    for (int t = 0; t < rs.layout.T; ++t) {
      Vec g(2);
      g << gauss(rng), gauss(rng);
      m.unk_gradients.emplace_back(t, zero ? Vec(Vec::Zero(2)) : g);
    }
    if (!zero) {
      for (int i = 0; i < m.nu_k.size(); ++i) m.nu_k(i) = gauss(rng);
      for (int t = 0; t < rs.layout.T; ++t)
        m.lambda_unk(t) = std::abs(gauss(rng));
    }
    return m;
  };

  for (int trial = 0; trial < 10; ++trial) {
    auto m1 = random_assignment(false);
    auto m2 = random_assignment(false);
    auto zero = random_assignment(true);
    zero.lambda_unk.setZero();
    // sum assignment: multipliers add; gradient entries add as lambda*gamma
    MultiplierAssignment sum;
    sum.lambda_k = m1.lambda_k + m2.lambda_k;
    sum.nu_k = m1.nu_k + m2.nu_k;
    sum.lambda_unk = Vec::Ones(rs.layout.T);
    for (int t = 0; t < rs.layout.T; ++t) {
      const Vec g = m1.lambda_unk(t) * m1.unk_gradients[t].second +
                    m2.lambda_unk(t) * m2.unk_gradients[t].second;
      sum.unk_gradients.emplace_back(t, g);
    }
    const Vec lhs = assemble_residual(rs, sum);
    const Vec rhs = assemble_residual(rs, m1) + assemble_residual(rs, m2) -
                    assemble_residual(rs, zero);
    CHECK((lhs - rhs).cwiseAbs().maxCoeff() <= 1e-10);
  }
}

TEST_CASE("residual_block partitions the residual") {
  Vec a(2), b(2);
  a << 0.0, 0.0;
  b << 3.0, 1.0;
  auto demo = testsup::make_straight_line_demo(a, b, 5);
  const auto l = demo.layout();
  auto m = testsup::straight_line_multipliers(demo);
  m.nu_k(0) += 0.7;  // make the residual nontrivial
  const Vec s = assemble_residual(demo, m);

  SECTION("first state block is the head") {
    CHECK((residual_block(s, l, 0, BlockKind::State) - s.head(l.n_x)).norm() ==
          0.0);
  }
  SECTION("control block at T-1 is out of range") {
    CHECK_THROWS_AS(residual_block(s, l, l.T - 1, BlockKind::Control),
                    std::out_of_range);
    CHECK_THROWS_AS(residual_block(s, l, -1, BlockKind::State),
                    std::out_of_range);
    CHECK_THROWS_AS(residual_block(s, l, l.T, BlockKind::State),
                    std::out_of_range);
  }
  SECTION("concatenating all blocks reproduces the residual") {
    Vec rebuilt(l.dim());
    for (int t = 0; t < l.T; ++t)
      rebuilt.segment(l.x_offset(t), l.n_x) =
          residual_block(s, l, t, BlockKind::State);
    for (int t = 0; t + 1 < l.T; ++t)
      rebuilt.segment(l.u_offset(t), l.n_u) =
          residual_block(s, l, t, BlockKind::Control);
    CHECK((rebuilt - s).norm() == 0.0);
  }
}

TEST_CASE("dimension mismatches are reported by block name") {
  Vec a(2), b(2);
  a << 0.0, 0.0;
  b << 1.0, 1.0;
  auto demo = testsup::make_straight_line_demo(a, b, 4);
  auto m = testsup::straight_line_multipliers(demo);
  m.lambda_k = Vec::Zero(3);
  CHECK_THROWS_WITH(assemble_residual(demo, m),
                    Catch::Matchers::ContainsSubstring("lambda_k"));
  m = testsup::straight_line_multipliers(demo);
  m.nu_k = Vec::Zero(1);
  CHECK_THROWS_WITH(assemble_residual(demo, m),
                    Catch::Matchers::ContainsSubstring("nu_k"));
  m = testsup::straight_line_multipliers(demo);
  m.lambda_unk = Vec::Zero(99);
  CHECK_THROWS_WITH(assemble_residual(demo, m),
                    Catch::Matchers::ContainsSubstring("lambda_unk"));
}

TEST_CASE("auto-generated dynamics equalities vanish on rolled-out demos") {
  std::mt19937_64 rng(7);
  std::normal_distribution<double> gauss(0.0, 1.0);
  Vec a(2), b(2);
  a << 0.0, 0.0;
  b << 1.0, 1.0;
  auto demo = testsup::make_straight_line_demo(a, b, 6);
  // roll random controls through step; equalities must still vanish
  for (int t = 0; t + 1 < 6; ++t)
    for (int j = 0; j < 2; ++j) demo.controls(t, j) = gauss(rng);
  for (int t = 0; t + 1 < 6; ++t)
    demo.states.row(t + 1) =
        demo.task->system
            ->step(demo.states.row(t).transpose(),
                   demo.controls.row(t).transpose(), t)
            .transpose();
  auto rs = build_residual_system(demo);
  CHECK(rs.eq_vals.head((6 - 1) * 2).cwiseAbs().maxCoeff() <= 1e-8);
}

TEST_CASE("analytic gradients and jacobians agree with finite differences") {
  std::mt19937_64 rng(12345);
  std::normal_distribution<double> gauss(0.0, 1.0);

  Vec a(2), b(2);
  a << 0.2, -0.4;
  b << 1.5, 0.8;
  auto demo = testsup::make_straight_line_demo(a, b, 5);
  const auto l = demo.layout();
  const auto& task = *demo.task;
  const auto& sys = *task.system;

  for (int trial = 0; trial < 20; ++trial) {
    Vec xi(l.dim());
    for (int i = 0; i < xi.size(); ++i) xi(i) = gauss(rng);

    // cost gradient
    CHECK(fd::max_rel_error(task.cost_gradient(xi),
                            fd::gradient(task.cost_value, xi)) <= 1e-5);

    // step jacobians at a random state/control
    Vec x(2), u(2);
    x << gauss(rng), gauss(rng);
    u << gauss(rng), gauss(rng);
    const Mat Jx = sys.step_jac_x(x, u, trial);
    const Mat Ju = sys.step_jac_u(x, u, trial);
    const Mat Jx_fd = fd::jacobian(
        [&](const Vec& xx) { return sys.step(xx, u, trial); }, x);
    const Mat Ju_fd = fd::jacobian(
        [&](const Vec& uu) { return sys.step(x, uu, trial); }, u);
    CHECK(fd::max_rel_error(Jx, Jx_fd) <= 1e-5);
    CHECK(fd::max_rel_error(Ju, Ju_fd) <= 1e-5);

    // constraint map jacobian
    const Mat Jphi = task.constraint_map.phi_jacobian(x);
    const Mat Jphi_fd = fd::jacobian(task.constraint_map.phi_sep, x);
    CHECK(fd::max_rel_error(Jphi, Jphi_fd) <= 1e-5);
  }

  // control-norm constraint gradients
  auto cons = make_control_norm_constraints(l, 1.5);
  Vec xi(l.dim());
  for (int i = 0; i < xi.size(); ++i) xi(i) = gauss(rng);
  for (const auto& c : cons) {
    CHECK(fd::max_rel_error(c.gradient(xi), fd::gradient(c.value, xi)) <= 1e-5);
  }
}

TEST_CASE("certificate check flags a broken stationarity") {
  Vec a(2), b(2);
  a << -1.0, 0.0;
  b << 1.0, 0.0;
  auto demo = testsup::make_straight_line_demo(a, b, 7);
  auto m = testsup::straight_line_multipliers(demo);
  auto good = kkt_certificate_check(demo, m, 1e-6);
  CHECK(good.passed);

  m.nu_k(2) += 0.1;
  auto bad = kkt_certificate_check(demo, m, 1e-6);
  CHECK_FALSE(bad.passed);
  REQUIRE(bad.violations.size() == 1);
  CHECK(bad.violations[0] == "stationarity");
}
