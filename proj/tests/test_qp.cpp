#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <random>

#include "mixed/qp.hpp"
#include "oracles.hpp"

using namespace mixed;

namespace {

QpProblem half_line() {
  // min x^2  s.t. x >= 1   (H = 2 so that the objective is exactly x^2)
  QpProblem p = QpProblem::unconstrained(Eigen::MatrixXd::Constant(1, 1, 2.0), Eigen::VectorXd::Zero(1));
  p.Ain = Eigen::MatrixXd::Ones(1, 1);
  p.lb = Eigen::VectorXd::Constant(1, 1.0);
  p.ub = Eigen::VectorXd::Constant(1, kInf);
  return p;
}

QpProblem equality_with_cap() {
  QpProblem p = QpProblem::unconstrained(Eigen::MatrixXd::Identity(2, 2), Eigen::VectorXd::Zero(2));
  p.Aeq = Eigen::RowVector2d(1.0, 1.0);
  p.beq = Eigen::VectorXd::Constant(1, 1.0);
  p.Ain = Eigen::RowVector2d(1.0, 0.0);
  p.lb = Eigen::VectorXd::Constant(1, -kInf);
  p.ub = Eigen::VectorXd::Constant(1, 0.2);
  return p;
}

}  // namespace

TEST_CASE("half-line projection activates the lower bound") {
  const auto p = half_line();
  const auto sol = solve_qp(p);
  REQUIRE(sol.status == QpStatus::Optimal);
  CHECK(sol.x[0] == doctest::Approx(1.0).epsilon(1e-14));
  REQUIRE(sol.active_set.size() == 1);
  CHECK(sol.active_set[0] == ActiveConstraint{0, BoundSide::Lower});
  const auto r = kkt_residuals(p, sol);
  CHECK(r.stationarity <= 1e-10);
  CHECK(r.primal <= 1e-10);
  CHECK(r.complementarity <= 1e-10);
}

TEST_CASE("unconstrained stationarity") {
  // ||x - (3,-2)||^2 = x'x - 2(3,-2)'x + const
  Eigen::VectorXd g(2);
  g << -6.0, 4.0;
  const auto p = QpProblem::unconstrained(2.0 * Eigen::MatrixXd::Identity(2, 2), g);
  const auto sol = solve_qp(p);
  REQUIRE(sol.status == QpStatus::Optimal);
  CHECK(sol.x[0] == doctest::Approx(3.0));
  CHECK(sol.x[1] == doctest::Approx(-2.0));
  CHECK(sol.active_set.empty());
}

TEST_CASE("equality plus cap matches the enumeration oracle") {
  const auto p = equality_with_cap();
  const auto ref = oracle::enumerate_active_sets(p);
  REQUIRE(ref);
  const auto sol = solve_qp(p);
  REQUIRE(sol.status == QpStatus::Optimal);
  CHECK((sol.x - ref->x).cwiseAbs().maxCoeff() <= 1e-12);
  CHECK(sol.x[0] == doctest::Approx(0.2));
  CHECK(sol.x[1] == doctest::Approx(0.8));
  CHECK(kkt_residuals(p, sol).max() <= 1e-8);
}

TEST_CASE("kkt residuals flag violation and non-stationarity") {
  const auto p = half_line();
  const auto r = kkt_residuals(p, Eigen::VectorXd::Zero(1), Eigen::VectorXd(0), Eigen::VectorXd::Zero(1));
  CHECK(r.primal == doctest::Approx(1.0));

  // Box-constrained random QP, feasible point by clamping a random point into the box.
  std::mt19937 rng(7);
  std::normal_distribution<double> N(0.0, 1.0);
  auto q = oracle::random_qp(rng, 4, 0, 0);
  q.Ain = Eigen::MatrixXd::Identity(4, 4);
  q.lb = Eigen::VectorXd::Constant(4, -0.5);
  q.ub = Eigen::VectorXd::Constant(4, 0.5);
  Eigen::VectorXd x(4);
  for (int i = 0; i < 4; ++i) x[i] = std::clamp(N(rng), -0.5, 0.5);
  const auto rr = kkt_residuals(q, x, Eigen::VectorXd(0), Eigen::VectorXd::Zero(4));
  CHECK(rr.primal <= 1e-10);
  CHECK(rr.stationarity > 0.0);
}

TEST_CASE("random small QPs agree with active-set enumeration") {
  std::mt19937 rng(2024);
  int optimal = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const int n = 1 + trial % 4;
    const int m = 1 + (trial / 4) % 4;
    const int meq = (trial % 5 == 0 && n > 1) ? 1 : 0;
    const auto p = oracle::random_qp(rng, n, meq, m);
    const auto ref = oracle::enumerate_active_sets(p);
    const auto sol = solve_qp(p);
    if (!ref) {
      CHECK(sol.status == QpStatus::Infeasible);
      continue;
    }
    ++optimal;
    REQUIRE(sol.status == QpStatus::Optimal);
    CHECK((sol.x - ref->x).cwiseAbs().maxCoeff() <= 1e-6);
    CHECK(kkt_residuals(p, sol).max() <= 1e-8);
  }
  CHECK(optimal >= 100);
}

TEST_CASE("warm start from the previous optimum terminates immediately") {
  std::mt19937 rng(99);
  for (int trial = 0; trial < 50; ++trial) {
    const auto p = oracle::random_qp(rng, 4, 0, 4);
    QpSolver solver;
    const auto cold = solver.solve(p);
    if (cold.status != QpStatus::Optimal) continue;
    const auto warm = WarmStart::from(cold);
    const auto hot = solver.solve(p, &warm);
    REQUIRE(hot.status == QpStatus::Optimal);
    CHECK(hot.iterations <= 2);
    CHECK((hot.x - cold.x).cwiseAbs().maxCoeff() <= 1e-10);
  }
}

TEST_CASE("warm start with a stale working set still reaches the optimum") {
  std::mt19937 rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    const auto p = oracle::random_qp(rng, 3, 0, 4);
    const auto ref = oracle::enumerate_active_sets(p);
    if (!ref) continue;
    WarmStart warm;
    for (int r = 0; r < 4; ++r) warm.active_set.push_back({r, r % 2 ? BoundSide::Upper : BoundSide::Lower});
    const auto sol = solve_qp(p, &warm);
    REQUIRE(sol.status == QpStatus::Optimal);
    CHECK((sol.x - ref->x).cwiseAbs().maxCoeff() <= 1e-6);
  }
}

TEST_CASE("objective offsets and joint scaling leave the argmin unchanged") {
  std::mt19937 rng(11);
  for (int trial = 0; trial < 30; ++trial) {
    auto p = oracle::random_qp(rng, 3, 1, 3);
    const auto base = solve_qp(p);
    if (base.status != QpStatus::Optimal) continue;

    auto shifted = p;
    shifted.constant = 1e3;
    CHECK((solve_qp(shifted).x - base.x).cwiseAbs().maxCoeff() == 0.0);

    auto scaled = p;
    const double s = 7.5;
    scaled.H *= s;
    scaled.g *= s;
    scaled.Aeq *= s;
    scaled.beq *= s;
    const auto ss = solve_qp(scaled);
    REQUIRE(ss.status == QpStatus::Optimal);
    CHECK((ss.x - base.x).cwiseAbs().maxCoeff() <= 1e-8);
  }
}

TEST_CASE("infeasible and malformed problems") {
  auto p = QpProblem::unconstrained(Eigen::MatrixXd::Identity(1, 1), Eigen::VectorXd::Zero(1));
  p.Ain = Eigen::MatrixXd::Ones(2, 1);
  p.lb = Eigen::Vector2d(1.0, -kInf);
  p.ub = Eigen::Vector2d(kInf, 0.0);
  CHECK(solve_qp(p).status == QpStatus::Infeasible);

  auto bad = p;
  bad.lb[0] = 2.0;
  bad.ub[0] = 1.0;
  CHECK_THROWS_AS(solve_qp(bad), QpInputError);

  auto dims = p;
  dims.g = Eigen::VectorXd::Zero(3);
  CHECK_THROWS_AS(solve_qp(dims), QpInputError);

  auto indefinite = QpProblem::unconstrained(Eigen::Vector2d(1.0, -1.0).asDiagonal(), Eigen::VectorXd::Zero(2));
  CHECK_THROWS_AS(solve_qp(indefinite), QpModelError);

  CHECK_THROWS_AS(QpSolver(0), QpInputError);
}

TEST_CASE("iteration cap reports max_iterations") {
  std::mt19937 rng(3);
  QpProblem p;
  do {
    p = oracle::random_qp(rng, 4, 0, 4);
  } while (solve_qp(p).iterations < 3);
  const auto capped = solve_qp(p, nullptr, 1);
  CHECK(capped.status == QpStatus::MaxIterations);
  CHECK(capped.x.size() == 4);
}

TEST_CASE("dump round-trips") {
  const auto p = equality_with_cap();
  const auto path = (std::filesystem::temp_directory_path() / "mixed_qp_dump.txt").string();
  write_qp_dump(p, path);
  const auto q = read_qp_dump(path);
  CHECK(q.H == p.H);
  CHECK(q.Aeq == p.Aeq);
  CHECK(q.lb[0] == -kInf);
  CHECK(q.ub[0] == 0.2);
  CHECK((solve_qp(q).x - solve_qp(p).x).norm() == 0.0);
  std::remove(path.c_str());
}
