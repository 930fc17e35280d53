#pragma once

#include <Eigen/Dense>

#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

namespace mixed {

/// Sentinel for an absent bound. Rows whose side is infinite never enter the active set.
inline constexpr double kInf = std::numeric_limits<double>::infinity();

struct QpInputError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

/// Raised when the Hessian is not positive definite.
struct QpModelError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/**
 * Dense convex QP
 *
 *   min  1/2 x'Hx + g'x + constant
 *   s.t. Aeq x = beq
 *        lb <= Ain x <= ub
 *
 * H must be symmetric positive definite. `constant` never enters the iteration.
 */
struct QpProblem {
  Eigen::MatrixXd H;
  Eigen::VectorXd g;
  Eigen::MatrixXd Aeq;
  Eigen::VectorXd beq;
  Eigen::MatrixXd Ain;
  Eigen::VectorXd lb;
  Eigen::VectorXd ub;
  double constant = 0.0;

  int num_variables() const { return static_cast<int>(H.rows()); }
  int num_equalities() const { return static_cast<int>(Aeq.rows()); }
  int num_inequalities() const { return static_cast<int>(Ain.rows()); }

  /// Allocates empty constraint blocks for n variables.
  static QpProblem unconstrained(const Eigen::MatrixXd& H, const Eigen::VectorXd& g);

  /// Throws QpInputError on dimension mismatch, asymmetric H or lb > ub.
  void validate() const;

  double objective(const Eigen::VectorXd& x) const;
};

enum class QpStatus { Optimal, Infeasible, MaxIterations };

const char* to_string(QpStatus status);

enum class BoundSide { Lower, Upper };

struct ActiveConstraint {
  int row = 0;
  BoundSide side = BoundSide::Lower;
  bool operator==(const ActiveConstraint&) const = default;
};

struct QpSolution {
  Eigen::VectorXd x;
  QpStatus status = QpStatus::Infeasible;
  std::vector<ActiveConstraint> active_set;
  int iterations = 0;
  /// Multipliers of Hx + g - Aeq'y - Ain'z = 0. z > 0 marks an active lower bound,
  /// z < 0 an active upper bound.
  Eigen::VectorXd y_eq;
  Eigen::VectorXd z_in;
};

struct WarmStart {
  std::vector<ActiveConstraint> active_set;
  Eigen::VectorXd x;

  bool empty() const { return active_set.empty() && x.size() == 0; }
  static WarmStart from(const QpSolution& sol) { return {sol.active_set, sol.x}; }
};

struct KktResiduals {
  double stationarity = 0.0;
  double primal = 0.0;
  double complementarity = 0.0;
  double max() const;
};

/// Infinity-norm residuals of the three KKT blocks at (x, y_eq, z_in).
KktResiduals kkt_residuals(const QpProblem& problem, const Eigen::VectorXd& x,
                           const Eigen::VectorXd& y_eq, const Eigen::VectorXd& z_in);

inline KktResiduals kkt_residuals(const QpProblem& problem, const QpSolution& sol) {
  return kkt_residuals(problem, sol.x, sol.y_eq, sol.z_in);
}

/**
 * Active-set solver for strictly convex dense QPs.
 *
 * Dual active-set iteration (Goldfarb-Idnani) on top of a Cholesky factor of H: the
 * iterate starts at the equality-constrained minimizer (or at the minimizer over a
 * warm-start working set) and adds the most violated constraint until none remains.
 * Ties between equally violated constraints go to the lowest row, lower side first.
 *
 * An instance owns scratch storage and must not be shared by concurrent callers.
 */
class QpSolver {
 public:
  static constexpr int kDefaultMaxIterations = 200;

  explicit QpSolver(int max_iterations = kDefaultMaxIterations);

  QpSolution solve(const QpProblem& problem, const WarmStart* warm = nullptr);

  int max_iterations() const { return max_iterations_; }

 private:
  struct Normal {
    int row = -1;  // -1 for equalities
    BoundSide side = BoundSide::Lower;
    int eq_row = -1;
  };

  void factor_hessian(const QpProblem& problem);
  Eigen::VectorXd constraint_normal(const QpProblem& p, const Normal& c) const;
  double constraint_rhs(const QpProblem& p, const Normal& c) const;
  bool solve_subproblem(const QpProblem& p, const std::vector<Normal>& active,
                        Eigen::VectorXd& x, Eigen::VectorXd& u) const;
  void build_active_matrix(const QpProblem& p, const std::vector<Normal>& active);

  int max_iterations_;
  Eigen::LLT<Eigen::MatrixXd> hessian_llt_;
  Eigen::MatrixXd active_normals_;  // n x k
  Eigen::MatrixXd hinv_normals_;    // H^-1 N
  Eigen::LDLT<Eigen::MatrixXd> gram_ldlt_;  // of N' H^-1 N
};

/// One-shot convenience wrapper.
QpSolution solve_qp(const QpProblem& problem, const WarmStart* warm = nullptr,
                    int max_iterations = QpSolver::kDefaultMaxIterations);

/**
 * Debug dump for offline reproduction. Format (whitespace separated, row-major):
 *
 *   # mixed-qp v1
 *   n <n> meq <meq> min <min>
 *   H, g, Aeq, beq, Ain, lb, ub, constant   (each preceded by its name)
 *
 * Infinite bounds are written as `inf` / `-inf`.
 */
void write_qp_dump(const QpProblem& problem, const std::string& path);
QpProblem read_qp_dump(const std::string& path);

}  // namespace mixed
