#pragma once

// Test-only reference computations. Nothing here calls into the code paths it checks.

#include <Eigen/Dense>

#include <cmath>
#include <limits>
#include <optional>
#include <random>

#include "mixed/qp.hpp"

namespace oracle {

struct EnumeratedOptimum {
  Eigen::VectorXd x;
  double objective = std::numeric_limits<double>::infinity();
};

/// Brute force over every activity pattern (inactive / lower / upper per inequality row):
/// solve the equality-constrained KKT system for each pattern, keep the best primal
/// feasible point.
inline std::optional<EnumeratedOptimum> enumerate_active_sets(const mixed::QpProblem& p) {
  const int n = p.num_variables();
  const int meq = p.num_equalities();
  const int m = p.num_inequalities();
  long patterns = 1;
  for (int i = 0; i < m; ++i) patterns *= 3;

  std::optional<EnumeratedOptimum> best;
  for (long code = 0; code < patterns; ++code) {
    std::vector<int> state(static_cast<std::size_t>(m));
    long c = code;
    bool skip = false;
    int k = meq;
    for (int i = 0; i < m; ++i) {
      state[static_cast<std::size_t>(i)] = static_cast<int>(c % 3);
      c /= 3;
      const int s = state[static_cast<std::size_t>(i)];
      if (s == 1 && !std::isfinite(p.lb[i])) skip = true;
      if (s == 2 && !std::isfinite(p.ub[i])) skip = true;
      if (s != 0) ++k;
    }
    if (skip) continue;
    Eigen::MatrixXd C(k, n);
    Eigen::VectorXd d(k);
    int r = 0;
    for (int i = 0; i < meq; ++i, ++r) {
      C.row(r) = p.Aeq.row(i);
      d[r] = p.beq[i];
    }
    for (int i = 0; i < m; ++i) {
      const int s = state[static_cast<std::size_t>(i)];
      if (s == 0) continue;
      C.row(r) = p.Ain.row(i);
      d[r] = s == 1 ? p.lb[i] : p.ub[i];
      ++r;
    }
    Eigen::MatrixXd K = Eigen::MatrixXd::Zero(n + k, n + k);
    K.topLeftCorner(n, n) = p.H;
    K.topRightCorner(n, k) = C.transpose();
    K.bottomLeftCorner(k, n) = C;
    Eigen::VectorXd rhs(n + k);
    rhs << -p.g, d;
    Eigen::FullPivLU<Eigen::MatrixXd> lu(K);
    if (lu.rank() < n + k) continue;
    const Eigen::VectorXd sol = lu.solve(rhs);
    const Eigen::VectorXd x = sol.head(n);
    bool feasible = meq == 0 || (p.Aeq * x - p.beq).cwiseAbs().maxCoeff() < 1e-9;
    if (m > 0) {
      const Eigen::VectorXd ax = p.Ain * x;
      for (int i = 0; i < m && feasible; ++i)
        feasible = ax[i] >= p.lb[i] - 1e-9 && ax[i] <= p.ub[i] + 1e-9;
    }
    if (!feasible) continue;
    const double f = p.objective(x);
    if (!best || f < best->objective - 1e-14) best = EnumeratedOptimum{x, f};
  }
  return best;
}

/// Random strictly convex QP with n variables, optional single equality and m inequalities.
inline mixed::QpProblem random_qp(std::mt19937& rng, int n, int meq, int m) {
  std::normal_distribution<double> N(0.0, 1.0);
  std::uniform_real_distribution<double> U(0.0, 1.0);
  Eigen::MatrixXd A(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) A(i, j) = N(rng);
  mixed::QpProblem p;
  p.H = A * A.transpose() + 0.5 * Eigen::MatrixXd::Identity(n, n);
  p.H = 0.5 * (p.H + p.H.transpose()).eval();
  p.g.resize(n);
  for (int i = 0; i < n; ++i) p.g[i] = 3.0 * N(rng);
  p.Aeq.resize(meq, n);
  p.beq.resize(meq);
  for (int i = 0; i < meq; ++i) {
    for (int j = 0; j < n; ++j) p.Aeq(i, j) = N(rng);
    p.beq[i] = N(rng);
  }
  p.Ain.resize(m, n);
  p.lb.resize(m);
  p.ub.resize(m);
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < n; ++j) p.Ain(i, j) = N(rng);
    const double centre = 0.5 * N(rng);
    const double width = 0.2 + 2.0 * U(rng);
    p.lb[i] = U(rng) < 0.2 ? -mixed::kInf : centre - width;
    p.ub[i] = U(rng) < 0.2 ? mixed::kInf : centre + width;
  }
  return p;
}

}  // namespace oracle
