#include <catch2/catch_amalgamated.hpp>

#include "gpcl/linprog.hpp"

#include <functional>
#include <random>

using namespace gpcl;

namespace {

// Oracle: enumerate all basic solutions of {ineq rows active / at-bound vars}
// for a small LP with finite box bounds and inequality rows only. Brute force
// over every choice of n active constraints from the pool {rows, lo_j, hi_j}.
double brute_force_lp(const LinearProgram& lp) {
  const int n = lp.num_vars();
  std::vector<Vec> normals;
  std::vector<double> offsets;  // normal'x = offset when active
  for (int i = 0; i < lp.ineq_A.rows(); ++i) {
    normals.push_back(lp.ineq_A.row(i).transpose());
    offsets.push_back(lp.ineq_b(i));
  }
  for (int j = 0; j < n; ++j) {
    Vec e = Vec::Zero(n);
    e(j) = 1.0;
    if (std::isfinite(lp.lo(j))) {
      normals.push_back(e);
      offsets.push_back(lp.lo(j));
    }
    if (std::isfinite(lp.hi(j))) {
      normals.push_back(e);
      offsets.push_back(lp.hi(j));
    }
  }
  const int total = static_cast<int>(normals.size());
  double best = kInf;
  std::vector<int> idx(n);
  // iterate combinations of n indices out of total
  std::function<void(int, int)> rec = [&](int start, int k) {
    if (k == n) {
      Mat A(n, n);
      Vec b(n);
      for (int r = 0; r < n; ++r) {
        A.row(r) = normals[idx[r]].transpose();
        b(r) = offsets[idx[r]];
      }
      Eigen::FullPivLU<Mat> lu(A);
      if (!lu.isInvertible()) return;
      Vec x = lu.solve(b);
      // feasibility
      if (lp.ineq_A.rows() > 0 &&
          ((lp.ineq_A * x - lp.ineq_b).array() > 1e-8).any())
        return;
      for (int j = 0; j < n; ++j) {
        if (x(j) < lp.lo(j) - 1e-8 || x(j) > lp.hi(j) + 1e-8) return;
      }
      best = std::min(best, lp.objective.dot(x));
      return;
    }
    for (int i = start; i < total; ++i) {
      idx[k] = i;
      rec(i + 1, k + 1);
    }
  };
  rec(0, 0);
  return best;
}

}  // namespace

TEST_CASE("solve_lp one-variable basics") {
  SECTION("min x s.t. x >= 3") {
    LinearProgram lp(1);
    lp.objective << 1.0;
    lp.lo << 3.0;
    auto s = solve_lp(lp);
    REQUIRE(s.optimal());
    CHECK(s.x(0) == Catch::Approx(3.0));
    CHECK(s.objective_value == Catch::Approx(3.0));
  }
  SECTION("min -x s.t. x <= 0 and x >= 1 is infeasible") {
    LinearProgram lp(1);
    lp.objective << -1.0;
    lp.lo << 1.0;
    lp.hi << 0.0;
    auto s = solve_lp(lp);
    CHECK(s.status == LPStatus::Infeasible);
  }
  SECTION("infeasible via rows") {
    LinearProgram lp(1);
    lp.objective << -1.0;
    Vec row(1);
    row << 1.0;
    lp.add_ineq(row, 0.0);   // x <= 0
    lp.add_ineq(-row, -1.0); // -x <= -1  =>  x >= 1
    auto s = solve_lp(lp);
    CHECK(s.status == LPStatus::Infeasible);
  }
  SECTION("unbounded") {
    LinearProgram lp(1);
    lp.objective << -1.0;
    lp.lo << 0.0;
    auto s = solve_lp(lp);
    CHECK(s.status == LPStatus::Unbounded);
  }
}

TEST_CASE("solve_lp equality and free variables") {
  // min x + y  s.t. x + y = 2, x - y = 0  ->  x = y = 1
  LinearProgram lp(2);
  lp.objective << 1.0, 1.0;
  Vec r1(2), r2(2);
  r1 << 1.0, 1.0;
  r2 << 1.0, -1.0;
  lp.add_eq(r1, 2.0);
  lp.add_eq(r2, 0.0);
  auto s = solve_lp(lp);
  REQUIRE(s.optimal());
  CHECK(s.x(0) == Catch::Approx(1.0));
  CHECK(s.x(1) == Catch::Approx(1.0));
}

TEST_CASE("solve_lp matches brute-force vertex enumeration on random LPs") {
  std::mt19937_64 rng(20240817);
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (int trial = 0; trial < 25; ++trial) {
    const int n = 3 + static_cast<int>(rng() % 3);  // 3..5 vars keeps oracle cheap
    const int m = 2 * n;
    LinearProgram lp(n);
    for (int j = 0; j < n; ++j) {
      lp.objective(j) = gauss(rng);
      lp.lo(j) = -2.0;
      lp.hi(j) = 2.0;
    }
    for (int i = 0; i < m; ++i) {
      Vec row(n);
      for (int j = 0; j < n; ++j) row(j) = gauss(rng);
      // pass through a random interior point so the LP is feasible
      lp.add_ineq(row, row.dot(Vec::Zero(n)) + 0.5 + 0.5 * std::abs(gauss(rng)));
    }
    auto s = solve_lp(lp);
    REQUIRE(s.optimal());
    const double oracle = brute_force_lp(lp);
    CHECK(s.objective_value == Catch::Approx(oracle).margin(1e-7));
  }
}

TEST_CASE("solve_lp 10-var random bounded LP vs enumeration") {
  // single larger instance; oracle over rows+bounds still tractable
  std::mt19937_64 rng(7);
  std::normal_distribution<double> gauss(0.0, 1.0);
  const int n = 10;
  LinearProgram lp(n);
  for (int j = 0; j < n; ++j) {
    lp.objective(j) = gauss(rng);
    lp.lo(j) = -1.0;
    lp.hi(j) = 1.0;
  }
  for (int i = 0; i < 4; ++i) {
    Vec row(n);
    for (int j = 0; j < n; ++j) row(j) = gauss(rng);
    lp.add_ineq(row, 1.0 + std::abs(gauss(rng)));
  }
  auto s = solve_lp(lp);
  REQUIRE(s.optimal());
  CHECK(s.objective_value == Catch::Approx(brute_force_lp(lp)).margin(1e-7));
}

TEST_CASE("duality gap on random feasible instances") {
  // primal: min c'x s.t. A x <= b (box folded into A). dual: max -b'y
  // s.t. A'y = -c, y >= 0. weak duality makes the pair a certificate.
  std::mt19937_64 rng(99);
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (int trial = 0; trial < 15; ++trial) {
    const int n = 4;
    const int m_rand = 6;
    LinearProgram primal(n);
    for (int j = 0; j < n; ++j) primal.objective(j) = gauss(rng);
    Mat A(m_rand + 2 * n, n);
    Vec b(m_rand + 2 * n);
    for (int i = 0; i < m_rand; ++i) {
      for (int j = 0; j < n; ++j) A(i, j) = gauss(rng);
      b(i) = 1.0 + std::abs(gauss(rng));
    }
    A.middleRows(m_rand, n) = Mat::Identity(n, n);
    A.bottomRows(n) = -Mat::Identity(n, n);
    b.segment(m_rand, n).setConstant(3.0);
    b.tail(n).setConstant(3.0);
    primal.ineq_A = A;
    primal.ineq_b = b;

    auto ps = solve_lp(primal);
    REQUIRE(ps.optimal());

    LinearProgram dual(static_cast<int>(A.rows()));
    dual.objective = b;  // min b'y  ==  max -b'y
    dual.lo.setZero();
    dual.eq_A = A.transpose();
    dual.eq_b = -primal.objective;
    auto ds = solve_lp(dual);
    REQUIRE(ds.optimal());

    // both feasible by construction-check, gap must close
    CHECK((A * ps.x - b).maxCoeff() <= 1e-7);
    CHECK((A.transpose() * ds.x + primal.objective).cwiseAbs().maxCoeff() <=
          1e-7);
    CHECK(ds.x.minCoeff() >= -1e-9);
    CHECK(std::abs(ps.objective_value - (-b.dot(ds.x))) <= 1e-7);
  }
}

TEST_CASE("solve_l1_min") {
  SECTION("minimize |z - 2| over free z") {
    AffineExpr r{Mat::Identity(1, 1), Vec::Constant(1, -2.0)};
    LinearProgram base(1);
    auto s = solve_l1_min(r, base);
    REQUIRE(s.optimal());
    CHECK(s.objective_value == Catch::Approx(0.0).margin(1e-9));
    CHECK(s.x(0) == Catch::Approx(2.0));
  }
  SECTION("minimize ||[z, z-1]||_1: value 1 on z in [0,1], tie-break picks 0") {
    Mat M(2, 1);
    M << 1.0, 1.0;
    Vec d(2);
    d << 0.0, -1.0;
    LinearProgram base(1);
    auto s = solve_l1_min({M, d}, base);
    REQUIRE(s.optimal());
    CHECK(s.objective_value == Catch::Approx(1.0));
    CHECK(s.x(0) == Catch::Approx(0.0).margin(1e-9));
  }
  SECTION("d = 0, no constraints: zero at z = 0") {
    Mat M(3, 2);
    M << 1, 2, 0, 1, -1, 3;
    auto s = solve_l1_min({M, Vec::Zero(3)}, LinearProgram(2));
    REQUIRE(s.optimal());
    CHECK(s.objective_value == Catch::Approx(0.0).margin(1e-9));
    CHECK(s.x.cwiseAbs().maxCoeff() <= 1e-9);
  }
  SECTION("row permutation invariance of the optimal value") {
    std::mt19937_64 rng(3);
    std::normal_distribution<double> gauss(0.0, 1.0);
    Mat M(4, 2);
    Vec d(4);
    for (int i = 0; i < 4; ++i) {
      d(i) = gauss(rng);
      for (int j = 0; j < 2; ++j) M(i, j) = gauss(rng);
    }
    LinearProgram base(2);
    base.lo.setConstant(-1.0);
    base.hi.setConstant(1.0);
    auto s1 = solve_l1_min({M, d}, base);
    Mat Mp(4, 2);
    Vec dp(4);
    const int perm[4] = {2, 0, 3, 1};
    for (int i = 0; i < 4; ++i) {
      Mp.row(i) = M.row(perm[i]);
      dp(i) = d(perm[i]);
    }
    auto s2 = solve_l1_min({Mp, dp}, base);
    REQUIRE(s1.optimal());
    REQUIRE(s2.optimal());
    CHECK(s1.objective_value == Catch::Approx(s2.objective_value).margin(1e-9));
  }
}

TEST_CASE("solve_l1_max_milp") {
  SECTION("maximize |z| on [-1, 1]") {
    AffineExpr r{Mat::Identity(1, 1), Vec::Zero(1)};
    LinearProgram base(1);
    base.lo << -1.0;
    base.hi << 1.0;
    auto s = solve_l1_max_milp(r, base, 1);
    REQUIRE(s.optimal());
    CHECK(s.objective_value == Catch::Approx(1.0));
  }
  SECTION("maximize |z1| + |z2| on the unit linf box") {
    AffineExpr r{Mat::Identity(2, 2), Vec::Zero(2)};
    LinearProgram base(2);
    base.lo.setConstant(-1.0);
    base.hi.setConstant(1.0);
    auto s = solve_l1_max_milp(r, base, 2);
    REQUIRE(s.optimal());
    CHECK(s.objective_value == Catch::Approx(2.0));
  }
  SECTION("unbounded sub-LP is flagged") {
    AffineExpr r{Mat::Identity(1, 1), Vec::Zero(1)};
    LinearProgram base(1);  // z free, no normalization
    auto s = solve_l1_max_milp(r, base, 1);
    CHECK(s.status == LPStatus::Unbounded);
    CHECK_FALSE(s.diagnostic.empty());
  }
  SECTION("random 2D polytope vs grid oracle") {
    std::mt19937_64 rng(11);
    std::normal_distribution<double> gauss(0.0, 1.0);
    for (int trial = 0; trial < 5; ++trial) {
      Mat M(2, 2);
      Vec d(2);
      for (int i = 0; i < 2; ++i) {
        d(i) = gauss(rng);
        for (int j = 0; j < 2; ++j) M(i, j) = gauss(rng);
      }
      LinearProgram base(2);
      base.lo.setConstant(-1.5);
      base.hi.setConstant(1.5);
      Vec row(2);
      row << gauss(rng), gauss(rng);
      base.add_ineq(row, 1.0);
      auto s = solve_l1_max_milp({M, d}, base, 2);
      REQUIRE(s.optimal());
      double oracle = -kInf;
      const int G = 400;
      for (int a = 0; a <= G; ++a) {
        for (int b2 = 0; b2 <= G; ++b2) {
          Vec z(2);
          z << -1.5 + 3.0 * a / G, -1.5 + 3.0 * b2 / G;
          if (row.dot(z) > 1.0) continue;
          oracle = std::max(oracle, (M * z + d).lpNorm<1>());
        }
      }
      CHECK(s.objective_value >= oracle - 1e-9);
      CHECK(s.objective_value <= oracle + 2e-2);  // grid resolution slack
    }
  }
}

TEST_CASE("variable_order permutation returns identical optimum") {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> gauss(0.0, 1.0);
  LinearProgram lp(5);
  for (int j = 0; j < 5; ++j) {
    lp.objective(j) = gauss(rng);
    lp.lo(j) = -1.0;
    lp.hi(j) = 1.0;
  }
  Vec row(5);
  for (int j = 0; j < 5; ++j) row(j) = gauss(rng);
  lp.add_ineq(row, 0.3);
  auto s0 = solve_lp(lp);
  REQUIRE(s0.optimal());
  SimplexOptions opts;
  opts.variable_order = {4, 2, 0, 3, 1};
  auto s1 = solve_lp(lp, opts);
  REQUIRE(s1.optimal());
  CHECK(s1.objective_value == Catch::Approx(s0.objective_value).margin(1e-9));
  CHECK((lp.ineq_A * s1.x - lp.ineq_b).maxCoeff() <= 1e-8);
}
