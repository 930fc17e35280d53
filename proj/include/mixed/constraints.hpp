#pragma once

#include <Eigen/Dense>

#include <stdexcept>
#include <string>
#include <vector>

#include "mixed/rigid_body.hpp"

namespace mixed {

struct ConstraintError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Vertical support force vanished: the contact is no longer active.
struct ContactLossError : ConstraintError {
  using ConstraintError::ConstraintError;
};

/// Wrench component order used throughout: forces then torques, world axes.
/// X points from the robot's right to its left, Y up, Z forward.
enum WrenchAxis : int { kFx = 0, kFy = 1, kFz = 2, kTx = 3, kTy = 4, kTz = 5 };

struct FootGeometry {
  double d_x = 0.05;  // half width
  double d_z = 0.08;  // half length
  double mu = 0.6;
  double mu_prime = 0.4;

  /// Throws ConstraintError unless every field is positive.
  void validate() const;
};

/**
 * Box on one foot wrench, derived from the support force of servo step `stamp`:
 *   |Fx|, |Fz| <= mu Fy,  Fy >= 0,  |tx| <= d_z Fy,  |ty| <= mu' Fy,  |tz| <= d_x Fy.
 */
struct GrfBounds {
  Vector6d lb = Vector6d::Zero();
  Vector6d ub = Vector6d::Zero();
  long stamp = -1;
};

/// Throws ContactLossError when F_bar_prev[kFy] <= 0.
GrfBounds zmp_friction_bounds(const Vector6d& F_bar_prev, const FootGeometry& geom, long stamp = -1);

/// Throws ConstraintError if the bounds were built more than one servo step before `step`.
void require_fresh(const GrfBounds& bounds, long step);

/// Lower/upper box on the stacked support rows (one block per contact, rows as in the contact).
struct StackedBounds {
  Eigen::VectorXd lb;
  Eigen::VectorXd ub;
};

/// Wrench of contact c scattered into a 6-vector from the stacked support force.
std::vector<Vector6d> split_support_wrench(const ContactSet& contacts, const Eigen::VectorXd& stacked);

/// Friction/ZMP boxes of every contact, restricted to its rows. Contacts must include row kFy.
StackedBounds support_bounds(const ContactSet& contacts, const Eigen::VectorXd& F_bar_prev,
                             const FootGeometry& geom, long stamp = -1);

/**
 * Per-axis bounds on the support MPC actions. Row i of lb <= F_bar - Lambda U <= ub is kept
 * with the diagonal entry only:
 *   U_i in [(F_bar_i - ub_i) / Lambda_ii, (F_bar_i - lb_i) / Lambda_ii].
 * `coupling_gain[i]` = sum_{j != i} |Lambda_ij| is the neglected coupling per unit action.
 */
struct AxisBounds {
  Eigen::VectorXd U_lb;
  Eigen::VectorXd U_ub;
  Eigen::VectorXd coupling_gain;
};

/// Throws SingularityError when a diagonal entry is below 1e-10.
AxisBounds grf_bounds_to_axis_bounds(const StackedBounds& bounds, const Eigen::MatrixXd& Lambda,
                                     const Eigen::VectorXd& F_bar_now);

/// |sum_{j != i} Lambda_ij U_j| per row: the wrench error the diagonal decoupling ignores.
Eigen::VectorXd decoupling_residual(const Eigen::MatrixXd& Lambda, const Eigen::VectorXd& U);

/// Selection rows mapping velocity coordinates to joint tasks.
struct JointTaskMap {
  std::vector<int> indices;
  Eigen::MatrixXd J;
};

/// Throws ConstraintError on duplicate or out-of-range indices.
JointTaskMap joint_task_jacobian(const std::vector<int>& indices, int total_coords);

/// (J M^-1 J')^-1 for a joint selection.
Eigen::MatrixXd joint_apparent_inertia(const JointTaskMap& map, const Eigen::MatrixXd& Minv);

/**
 * Joint set-points from the contact-consistent forward dynamics
 *   qdd_des = M^-1 [N_f' (gamma - V) - J_f' Lambda_f Jd_f qd].
 * Window entry k (k = 1..Np) is the measured joint state carried forward at constant qdd_des,
 *   q + qd t_k + qdd_des t_k^2 / 2,  t_k = k dt,
 * clamped to [lb, ub]. Far from the limits an MPC tracking the window reproduces qdd_des; near a
 * limit the clamped tail makes it brake ahead of the bound. q_des and qd_des are the first step.
 */
struct JointReference {
  Eigen::VectorXd qdd_des;  // all coordinates
  Eigen::VectorXd q_des;    // one per joint
  Eigen::VectorXd qd_des;
  std::vector<std::vector<double>> windows;
};

JointReference joint_reference_setpoint(const RobotModel& model, const RobotState& state, const Eigen::VectorXd& gamma,
                                        const ContactSet& contacts, const std::vector<std::string>& joints, double dt,
                                        int Np, const std::vector<std::pair<double, double>>& limits = {});

}  // namespace mixed
