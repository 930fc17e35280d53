#include "mixed/qp.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

namespace mixed {

namespace {

constexpr double kFeasTol = 1e-10;
constexpr double kDependenceTol = 1e-12;

void require(bool cond, const std::string& what) {
  if (!cond) throw QpInputError("QP: " + what);
}

bool all_finite(const Eigen::MatrixXd& m) { return m.allFinite(); }

}  // namespace

QpProblem QpProblem::unconstrained(const Eigen::MatrixXd& H, const Eigen::VectorXd& g) {
  QpProblem p;
  p.H = H;
  p.g = g;
  const auto n = H.rows();
  p.Aeq.resize(0, n);
  p.beq.resize(0);
  p.Ain.resize(0, n);
  p.lb.resize(0);
  p.ub.resize(0);
  return p;
}

void QpProblem::validate() const {
  const auto n = H.rows();
  require(n > 0, "empty problem");
  require(H.cols() == n, "H must be square");
  require(g.size() == n, "g has wrong length");
  require(Aeq.cols() == n || Aeq.rows() == 0, "Aeq column count");
  require(beq.size() == Aeq.rows(), "beq length does not match Aeq rows");
  require(Ain.cols() == n || Ain.rows() == 0, "Ain column count");
  require(lb.size() == Ain.rows() && ub.size() == Ain.rows(), "bound length does not match Ain rows");
  require(all_finite(H) && all_finite(g) && all_finite(Aeq) && all_finite(beq) && all_finite(Ain),
          "non-finite problem data");
  const double scale = std::max(1.0, H.cwiseAbs().maxCoeff());
  require((H - H.transpose()).cwiseAbs().maxCoeff() <= 1e-12 * scale, "H is not symmetric");
  for (Eigen::Index i = 0; i < lb.size(); ++i) {
    require(!std::isnan(lb[i]) && !std::isnan(ub[i]), "NaN bound");
    require(lb[i] < kInf && ub[i] > -kInf, "bound on the wrong side of infinity");
    require(lb[i] <= ub[i], "lb > ub at row " + std::to_string(i));
  }
}

double QpProblem::objective(const Eigen::VectorXd& x) const {
  return 0.5 * x.dot(H * x) + g.dot(x) + constant;
}

const char* to_string(QpStatus status) {
  switch (status) {
    case QpStatus::Optimal: return "optimal";
    case QpStatus::Infeasible: return "infeasible";
    case QpStatus::MaxIterations: return "max_iterations";
  }
  return "?";
}

double KktResiduals::max() const { return std::max({stationarity, primal, complementarity}); }

KktResiduals kkt_residuals(const QpProblem& p, const Eigen::VectorXd& x, const Eigen::VectorXd& y_eq,
                           const Eigen::VectorXd& z_in) {
  require(x.size() == p.num_variables(), "x has wrong length");
  require(y_eq.size() == p.num_equalities(), "equality multipliers have wrong length");
  require(z_in.size() == p.num_inequalities(), "inequality multipliers have wrong length");

  KktResiduals r;
  Eigen::VectorXd grad = p.H * x + p.g;
  if (p.num_equalities() > 0) grad -= p.Aeq.transpose() * y_eq;
  if (p.num_inequalities() > 0) grad -= p.Ain.transpose() * z_in;
  r.stationarity = grad.size() ? grad.cwiseAbs().maxCoeff() : 0.0;

  if (p.num_equalities() > 0) r.primal = (p.Aeq * x - p.beq).cwiseAbs().maxCoeff();
  if (p.num_inequalities() > 0) {
    const Eigen::VectorXd ax = p.Ain * x;
    for (Eigen::Index i = 0; i < ax.size(); ++i) {
      r.primal = std::max({r.primal, p.lb[i] - ax[i], ax[i] - p.ub[i]});
      const double z = z_in[i];
      if (z > 0.0) {
        r.complementarity = std::max(
            r.complementarity, std::isfinite(p.lb[i]) ? std::abs(z * (ax[i] - p.lb[i])) : z);
      } else if (z < 0.0) {
        r.complementarity = std::max(
            r.complementarity, std::isfinite(p.ub[i]) ? std::abs(z * (p.ub[i] - ax[i])) : -z);
      }
    }
  }
  return r;
}

QpSolver::QpSolver(int max_iterations) : max_iterations_(max_iterations) {
  if (max_iterations <= 0) throw QpInputError("QP: max_iterations must be positive");
}

void QpSolver::factor_hessian(const QpProblem& problem) {
  hessian_llt_.compute(problem.H);
  if (hessian_llt_.info() != Eigen::Success ||
      hessian_llt_.matrixLLT().diagonal().minCoeff() <= 0.0) {
    throw QpModelError("QP: Hessian is not positive definite (Cholesky failed)");
  }
}

Eigen::VectorXd QpSolver::constraint_normal(const QpProblem& p, const Normal& c) const {
  if (c.eq_row >= 0) return p.Aeq.row(c.eq_row).transpose();
  Eigen::VectorXd a = p.Ain.row(c.row).transpose();
  return c.side == BoundSide::Lower ? a : Eigen::VectorXd(-a);
}

double QpSolver::constraint_rhs(const QpProblem& p, const Normal& c) const {
  if (c.eq_row >= 0) return p.beq[c.eq_row];
  return c.side == BoundSide::Lower ? p.lb[c.row] : -p.ub[c.row];
}

void QpSolver::build_active_matrix(const QpProblem& p, const std::vector<Normal>& active) {
  const auto n = p.num_variables();
  active_normals_.resize(n, static_cast<Eigen::Index>(active.size()));
  for (std::size_t j = 0; j < active.size(); ++j)
    active_normals_.col(static_cast<Eigen::Index>(j)) = constraint_normal(p, active[j]);
  hinv_normals_ = hessian_llt_.solve(active_normals_);
  gram_ldlt_.compute(active_normals_.transpose() * hinv_normals_);
}

// Minimizer over the affine set {N'x = b} and its multipliers (Hx + g = N u).
bool QpSolver::solve_subproblem(const QpProblem& p, const std::vector<Normal>& active,
                                Eigen::VectorXd& x, Eigen::VectorXd& u) const {
  const Eigen::VectorXd hinv_g = hessian_llt_.solve(p.g);
  const auto k = static_cast<Eigen::Index>(active.size());
  if (k == 0) {
    x = -hinv_g;
    u.resize(0);
    return true;
  }
  Eigen::VectorXd b(k);
  for (Eigen::Index j = 0; j < k; ++j) b[j] = constraint_rhs(p, active[static_cast<std::size_t>(j)]);
  if (gram_ldlt_.info() != Eigen::Success) return false;
  u = gram_ldlt_.solve(b + active_normals_.transpose() * hinv_g);
  x = -hinv_g + hinv_normals_ * u;
  return u.allFinite() && x.allFinite();
}

QpSolution QpSolver::solve(const QpProblem& p, const WarmStart* warm) {
  p.validate();
  factor_hessian(p);

  const int n = p.num_variables();
  const int meq = p.num_equalities();
  const int min = p.num_inequalities();

  QpSolution sol;
  sol.y_eq = Eigen::VectorXd::Zero(meq);
  sol.z_in = Eigen::VectorXd::Zero(min);

  std::vector<Normal> active;
  std::vector<char> is_active_lower(static_cast<std::size_t>(min), 0);
  std::vector<char> is_active_upper(static_cast<std::size_t>(min), 0);

  // Schur complement of a candidate normal against the current working set; a value near
  // zero means the normal is a combination of the active ones.
  auto schur = [&](const Eigen::VectorXd& normal) {
    const Eigen::VectorXd hn = hessian_llt_.solve(normal);
    const double self = normal.dot(hn);
    if (active.empty()) return std::pair{self, self};
    const Eigen::VectorXd proj = active_normals_.transpose() * hn;
    const double sc = self - proj.dot(gram_ldlt_.solve(proj));
    return std::pair{sc, self};
  };

  auto try_push = [&](const Normal& c) {
    const auto [sc, self] = schur(constraint_normal(p, c));
    if (self <= 0.0 || sc <= kDependenceTol * self) return false;
    active.push_back(c);
    build_active_matrix(p, active);
    return true;
  };

  // Equalities go in together when their Gram matrix is safely nonsingular; otherwise one
  // at a time so dependent rows are skipped.
  for (int i = 0; i < meq; ++i) {
    Normal c;
    c.eq_row = i;
    active.push_back(c);
  }
  build_active_matrix(p, active);
  if (meq > 0) {
    const Eigen::VectorXd pivots = gram_ldlt_.vectorD();
    const Eigen::VectorXd self = active_normals_.cwiseProduct(hinv_normals_).colwise().sum().transpose();
    if (gram_ldlt_.info() != Eigen::Success || !(pivots.minCoeff() > kDependenceTol * self.maxCoeff())) {
      active.clear();
      build_active_matrix(p, active);
      for (int i = 0; i < meq; ++i) {
        Normal c;
        c.eq_row = i;
        try_push(c);
      }
      build_active_matrix(p, active);
    }
  }

  if (warm != nullptr) {
    for (const auto& w : warm->active_set) {
      if (w.row < 0 || w.row >= min) continue;
      const double bound = w.side == BoundSide::Lower ? p.lb[w.row] : p.ub[w.row];
      if (!std::isfinite(bound)) continue;
      auto& flag = w.side == BoundSide::Lower ? is_active_lower : is_active_upper;
      if (flag[static_cast<std::size_t>(w.row)]) continue;
      Normal c;
      c.row = w.row;
      c.side = w.side;
      if (try_push(c)) flag[static_cast<std::size_t>(w.row)] = 1;
    }
  }

  Eigen::VectorXd x;
  Eigen::VectorXd u;
  int iterations = 1;

  auto remove_active = [&](std::size_t j) {
    const Normal c = active[j];
    (c.side == BoundSide::Lower ? is_active_lower : is_active_upper)[static_cast<std::size_t>(c.row)] = 0;
    active.erase(active.begin() + static_cast<std::ptrdiff_t>(j));
    Eigen::VectorXd reduced(u.size() - 1);
    for (Eigen::Index i = 0, o = 0; i < u.size(); ++i)
      if (i != static_cast<Eigen::Index>(j)) reduced[o++] = u[i];
    u = reduced;
    build_active_matrix(p, active);
  };

  if (!solve_subproblem(p, active, x, u)) {
    sol.x = Eigen::VectorXd::Zero(n);
    sol.status = QpStatus::Infeasible;
    sol.iterations = iterations;
    return sol;
  }

  // Warm working sets may carry constraints whose multipliers turned negative; shed them
  // until the pair is dual feasible, which is the entry condition of the dual iteration.
  for (;;) {
    std::size_t worst = active.size();
    double worst_u = -kFeasTol;
    for (std::size_t j = 0; j < active.size(); ++j) {
      if (active[j].eq_row >= 0) continue;
      if (u[static_cast<Eigen::Index>(j)] < worst_u) {
        worst_u = u[static_cast<Eigen::Index>(j)];
        worst = j;
      }
    }
    if (worst == active.size()) break;
    remove_active(worst);
    solve_subproblem(p, active, x, u);
    ++iterations;
  }

  // Inconsistent equalities (dependent rows with conflicting right-hand sides).
  if (meq > 0 && (p.Aeq * x - p.beq).cwiseAbs().maxCoeff() > 1e-8 * (1.0 + p.beq.cwiseAbs().maxCoeff())) {
    sol.x = x;
    sol.status = QpStatus::Infeasible;
    sol.iterations = iterations;
    return sol;
  }

  auto violation = [&](int row, BoundSide side) {
    const double ax = p.Ain.row(row).dot(x);
    return side == BoundSide::Lower ? ax - p.lb[row] : p.ub[row] - ax;
  };

  QpStatus status = QpStatus::Optimal;
  for (;;) {
    // Most violated inactive constraint; strict comparison keeps the lowest index on ties.
    int add_row = -1;
    BoundSide add_side = BoundSide::Lower;
    double most = 0.0;
    for (int r = 0; r < min; ++r) {
      for (BoundSide side : {BoundSide::Lower, BoundSide::Upper}) {
        const bool lower = side == BoundSide::Lower;
        const double bound = lower ? p.lb[r] : p.ub[r];
        if (!std::isfinite(bound)) continue;
        if ((lower ? is_active_lower : is_active_upper)[static_cast<std::size_t>(r)]) continue;
        const double s = violation(r, side);
        const double tol = kFeasTol * (1.0 + std::abs(bound));
        if (s < -tol && s < most) {
          most = s;
          add_row = r;
          add_side = side;
        }
      }
    }
    if (add_row < 0) break;

    Normal cand;
    cand.row = add_row;
    cand.side = add_side;
    const Eigen::VectorXd np = constraint_normal(p, cand);
    const Eigen::VectorXd hinv_np = hessian_llt_.solve(np);
    double lambda_p = 0.0;
    bool added = false;

    while (!added) {
      if (++iterations > max_iterations_) {
        status = QpStatus::MaxIterations;
        break;
      }
      const auto k = static_cast<Eigen::Index>(active.size());
      Eigen::VectorXd r = Eigen::VectorXd::Zero(k);
      Eigen::VectorXd z = hinv_np;
      if (k > 0) {
        r = gram_ldlt_.solve(active_normals_.transpose() * hinv_np);
        z -= hinv_normals_ * r;
      }

      double t1 = kInf;
      std::size_t block = active.size();
      for (std::size_t j = 0; j < active.size(); ++j) {
        if (active[j].eq_row >= 0) continue;
        const double rj = r[static_cast<Eigen::Index>(j)];
        if (rj > 1e-14) {
          const double t = std::max(0.0, u[static_cast<Eigen::Index>(j)]) / rj;
          if (t < t1) {
            t1 = t;
            block = j;
          }
        }
      }

      const double zn = z.dot(np);
      const double s = violation(add_row, add_side);
      double t2 = kInf;
      if (zn > kDependenceTol * np.dot(hinv_np)) t2 = -s / zn;

      const double t = std::min(t1, t2);
      if (!std::isfinite(t)) {
        status = QpStatus::Infeasible;
        break;
      }
      if (std::isfinite(t2)) x += t * z;
      if (k > 0) u -= t * r;
      lambda_p += t;

      if (t2 <= t1) {
        active.push_back(cand);
        (add_side == BoundSide::Lower ? is_active_lower : is_active_upper)[static_cast<std::size_t>(add_row)] = 1;
        u.conservativeResize(u.size() + 1);
        u[u.size() - 1] = lambda_p;
        build_active_matrix(p, active);
        added = true;
      } else {
        remove_active(block);
      }
    }
    if (status != QpStatus::Optimal) break;
  }

  if (status == QpStatus::Optimal) {
    // Re-solve on the final working set to remove drift accumulated by the updates.
    Eigen::VectorXd xs, us;
    if (solve_subproblem(p, active, xs, us)) {
      x = xs;
      u = us;
    }
  }

  sol.x = x;
  sol.status = status;
  sol.iterations = iterations;
  for (std::size_t j = 0; j < active.size(); ++j) {
    const auto& c = active[j];
    const double uj = u.size() > static_cast<Eigen::Index>(j) ? u[static_cast<Eigen::Index>(j)] : 0.0;
    if (c.eq_row >= 0) {
      sol.y_eq[c.eq_row] = uj;
    } else {
      sol.z_in[c.row] += c.side == BoundSide::Lower ? uj : -uj;
      sol.active_set.push_back({c.row, c.side});
    }
  }
  std::sort(sol.active_set.begin(), sol.active_set.end(), [](const auto& a, const auto& b) {
    return a.row != b.row ? a.row < b.row : a.side < b.side;
  });
  return sol;
}

QpSolution solve_qp(const QpProblem& problem, const WarmStart* warm, int max_iterations) {
  QpSolver solver(max_iterations);
  return solver.solve(problem, warm);
}

namespace {

void write_block(std::ostream& os, const char* name, const Eigen::MatrixXd& m) {
  os << name << ' ' << m.rows() << ' ' << m.cols() << '\n';
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      const double v = m(i, j);
      if (std::isinf(v))
        os << (v > 0 ? "inf" : "-inf");
      else
        os << v;
      os << (j + 1 < m.cols() ? ' ' : '\n');
    }
  }
}

double parse_value(const std::string& tok) {
  if (tok == "inf") return kInf;
  if (tok == "-inf") return -kInf;
  return std::stod(tok);
}

Eigen::MatrixXd read_block(std::istream& is, const std::string& expected) {
  std::string name;
  Eigen::Index rows = 0, cols = 0;
  if (!(is >> name >> rows >> cols) || name != expected)
    throw QpInputError("QP dump: expected block " + expected);
  Eigen::MatrixXd m(rows, cols);
  std::string tok;
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) {
      if (!(is >> tok)) throw QpInputError("QP dump: truncated block " + expected);
      m(i, j) = parse_value(tok);
    }
  return m;
}

}  // namespace

void write_qp_dump(const QpProblem& p, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open " + path);
  os << std::setprecision(17);
  os << "# mixed-qp v1\n";
  os << "n " << p.num_variables() << " meq " << p.num_equalities() << " min " << p.num_inequalities() << '\n';
  write_block(os, "H", p.H);
  write_block(os, "g", p.g.transpose());
  write_block(os, "Aeq", p.Aeq);
  write_block(os, "beq", p.beq.transpose());
  write_block(os, "Ain", p.Ain);
  write_block(os, "lb", p.lb.transpose());
  write_block(os, "ub", p.ub.transpose());
  os << "constant " << p.constant << '\n';
}

QpProblem read_qp_dump(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open " + path);
  std::string line;
  std::getline(is, line);
  if (line != "# mixed-qp v1") throw QpInputError("QP dump: bad header");
  std::string tag;
  int n = 0, meq = 0, min = 0;
  is >> tag >> n >> tag >> meq >> tag >> min;
  QpProblem p;
  p.H = read_block(is, "H");
  p.g = read_block(is, "g").transpose();
  p.Aeq = read_block(is, "Aeq");
  p.beq = read_block(is, "beq").transpose();
  p.Ain = read_block(is, "Ain");
  p.lb = read_block(is, "lb").transpose();
  p.ub = read_block(is, "ub").transpose();
  if (p.Aeq.rows() == 0) p.Aeq.resize(0, n);
  if (p.Ain.rows() == 0) p.Ain.resize(0, n);
  std::string cname;
  is >> cname >> p.constant;
  if (p.num_variables() != n || p.num_equalities() != meq || p.num_inequalities() != min)
    throw QpInputError("QP dump: header dimensions disagree with blocks");
  return p;
}

}  // namespace mixed
