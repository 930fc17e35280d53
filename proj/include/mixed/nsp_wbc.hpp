#pragma once

#include <Eigen/Dense>

#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "mixed/rigid_body.hpp"

namespace mixed {

struct WbcError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Rank floor on the smallest/largest eigenvalue of J M^-1 J'.
inline constexpr double kRankTolerance = 1e-10;

/**
 * Operational-space quantities of a task Jacobian under the metric M:
 *   Lambda = (J M^-1 J')^-1,  Jbar_T = Lambda J M^-1,  N = I - M^-1 J' Lambda J.
 * Lambda J M^-1 N' = 0 and N N = N hold by construction.
 */
struct OpSpaceData {
  Eigen::MatrixXd Lambda;
  Eigen::MatrixXd Jbar_T;
  Eigen::MatrixXd N;
};

/// Throws SingularityError naming `task` when J M^-1 J' is rank deficient.
OpSpaceData op_space_data(const Eigen::MatrixXd& J, const Eigen::MatrixXd& M, const std::string& task = "task");
OpSpaceData op_space_data_from_inverse(const Eigen::MatrixXd& J, const Eigen::MatrixXd& Minv,
                                       const std::string& task = "task");

struct PrioritizedJacobian {
  Eigen::MatrixXd J_star;
  int rank = 0;
};

/// J_k times the accumulated null projector of all higher priorities.
PrioritizedJacobian prioritized_jacobian(const Eigen::MatrixXd& J_k, const Eigen::MatrixXd& accumulated_null);

/// Numerical rank from the singular values, relative to the largest.
int numerical_rank(const Eigen::MatrixXd& A, double rel_tol = 1e-9);

enum class TaskKind { Critical, Normal };

/**
 * One priority level. A task either selects rows of a frame Jacobian (`frame` + `rows`) or
 * selects joint coordinates (`joints`, by the name of the body each joint moves).
 */
struct TaskSpec {
  std::string name;
  int priority = 1;
  TaskKind kind = TaskKind::Normal;
  std::string frame;
  std::vector<int> rows;
  std::vector<std::string> joints;

  int dimension() const { return static_cast<int>(frame.empty() ? joints.size() : rows.size()); }
};

/**
 * Support task first, then tasks in strictly increasing priority number. The support task
 * coordinate is the reaction-side displacement of the stacked contact rows, so its achieved
 * acceleration is -(J_f qdd + Jd_f qd) and U_foot > 0 pushes the feet into the ground.
 */
struct TaskHierarchy {
  ContactSet foot;
  TaskKind foot_kind = TaskKind::Critical;
  std::vector<TaskSpec> tasks;

  int foot_dimension() const;
  /// Throws WbcError on unknown frames or joints, bad rows or duplicate priorities.
  void validate(const RobotModel& model) const;
  /// Copy without the tasks for which `drop` returns true.
  template <class Pred>
  TaskHierarchy without(Pred drop) const {
    TaskHierarchy h = *this;
    h.tasks.clear();
    for (const auto& t : tasks)
      if (!drop(t)) h.tasks.push_back(t);
    return h;
  }
};

/// Jacobian and drift of one task (joint tasks have zero drift).
struct TaskKinematics {
  Eigen::MatrixXd J;
  Eigen::VectorXd Jdqd;
};

TaskKinematics task_kinematics(const RobotModel& model, const KinematicsCache& kin, const TaskSpec& task);

/**
 * Dynamics evaluated once per control cycle and shared by every consumer of the cycle.
 */
struct DynamicsSnapshot {
  RobotState state;
  KinematicsCache kin;
  Eigen::MatrixXd M;
  Eigen::MatrixXd Minv;
  Eigen::VectorXd V;
  SupportKinematics foot;
  OpSpaceData foot_os;
  std::vector<TaskKinematics> tasks;  // aligned with hierarchy.tasks
};

DynamicsSnapshot make_snapshot(const RobotModel& model, const RobotState& state, const TaskHierarchy& hierarchy);

/// Rigid-contact support wrench F_bar and the commanded wrench F = F_bar - Lambda_f U_foot.
struct FootWrench {
  Eigen::VectorXd F_ideal;
  Eigen::VectorXd F;
  Eigen::MatrixXd Lambda;
};

FootWrench foot_wrench(const DynamicsSnapshot& snap, const Eigen::VectorXd& U_foot);
FootWrench foot_wrench(const RobotModel& model, const RobotState& state, const ContactSet& foot,
                       const Eigen::VectorXd& U_foot);

/**
 * Net external force the support has to supply for a generalized force gamma: the base rows of
 * gamma expressed in world axes. In static equilibrium its vertical component is the weight.
 * Requires a planar or floating root.
 */
Eigen::Vector3d support_resultant(const RobotModel& model, const KinematicsCache& kin, const Eigen::VectorXd& gamma);

struct TaskResult {
  std::string name;
  Eigen::VectorXd commanded;
  Eigen::VectorXd force;   // F_{k|k-1}
  Eigen::VectorXd torque;  // J*' F, length nv
  Eigen::VectorXd achieved;
  int rank = 0;
  bool singular = false;
};

struct WbcOutput {
  Eigen::VectorXd tau;    // actuated torques
  Eigen::VectorXd gamma;  // J_f' F_foot + N_f' tau_0, length nv
  Eigen::VectorXd F_foot_ideal;
  Eigen::VectorXd F_foot;
  Eigen::MatrixXd Lambda_foot;
  Eigen::VectorXd foot_achieved;
  std::vector<TaskResult> tasks;
  std::vector<std::string> diagnostics;
};

struct WbcOptions {
  /// Include the J_k M^-1 J_f' Lambda_f U_foot compensation in every lower task.
  bool foot_compensation = true;
  /// When set, directions no task commands get qdd = -d qd through N_acc' M (-qdd_tasks - d qd),
  /// which leaves the support and every task acceleration unchanged.
  std::optional<double> null_space_damping;
};

/**
 * Prioritized recursion below the support task. For task k with accumulated projector
 * N_{k-1} (starting at N_f):
 *
 *   J*_k = J_k N_{k-1},  Lambda*_k = (J*_k M^-1 J*_k')^-1
 *   F_k  = Lambda*_k ( xdd_k - Jd_k qd + J_k M^-1 N_f' (V - sum_{j<k} tau_j)
 *                      + J_k M^-1 J_f' Lambda_f (Jd_f qd + U_foot) )
 *   tau_k = J*_k' F_k,  N_k = N_{k-1} - M^-1 J*_k' Lambda*_k J*_k
 *
 * and gamma = J_f' F_foot + N_f' sum_k tau_k. A rank-deficient task gets zero force, a
 * diagnostic, and leaves the projector unchanged. Achieved accelerations are evaluated by
 * forward dynamics M^-1 (gamma - V).
 */
WbcOutput solve_hierarchy(const RobotModel& model, const DynamicsSnapshot& snap, const TaskHierarchy& hierarchy,
                          const Eigen::VectorXd& U_foot, const std::vector<Eigen::VectorXd>& task_accels,
                          const WbcOptions& options = {});
WbcOutput solve_hierarchy(const RobotModel& model, const RobotState& state, const TaskHierarchy& hierarchy,
                          const Eigen::VectorXd& U_foot, const std::vector<Eigen::VectorXd>& task_accels,
                          const WbcOptions& options = {});

}  // namespace mixed
