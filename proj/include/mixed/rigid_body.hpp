#pragma once

#include <Eigen/Dense>

#include <map>
#include <stdexcept>
#include <string>
#include <vector>

namespace mixed {

using Matrix6d = Eigen::Matrix<double, 6, 6>;
using Vector6d = Eigen::Matrix<double, 6, 1>;

struct ModelError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Raised when a constraint or task Jacobian loses row rank.
struct SingularityError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/**
 * Joint kinds.
 *
 *   Fixed     root only, no coordinates
 *   Revolute  1 dof about `axis`
 *   Prismatic 1 dof along `axis`
 *   Planar    root only; translation in the plane normal to `axis` plus rotation about it.
 *             q = (p_u, p_w, theta) in the parent frame, v = (v_u, v_w, omega) in the body frame,
 *             where (u, w, axis) is right-handed.
 *   Floating  root only; q = (p, quaternion w x y z), v = (v_lin, omega), both in the body frame.
 */
enum class JointType { Fixed, Revolute, Prismatic, Planar, Floating };

struct Body {
  std::string name;
  int parent = -1;
  JointType joint = JointType::Revolute;
  Eigen::Vector3d axis = Eigen::Vector3d::UnitZ();
  /// Joint frame in the parent body frame: orientation (columns are joint axes) and origin.
  Eigen::Matrix3d tree_rotation = Eigen::Matrix3d::Identity();
  Eigen::Vector3d tree_origin = Eigen::Vector3d::Zero();
  double mass = 0.0;
  Eigen::Vector3d com = Eigen::Vector3d::Zero();
  Eigen::Matrix3d inertia = Eigen::Matrix3d::Zero();  // about the COM, body axes

  int q_index = 0;
  int v_index = 0;
  int nq = 0;
  int nv = 0;
};

struct Frame {
  std::string name;
  int body = 0;
  Eigen::Vector3d offset = Eigen::Vector3d::Zero();
  Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
};

/**
 * Kinematic tree with the root at index 0 and parents preceding children.
 * Immutable after finalize(); safe to share between threads.
 */
class RobotModel {
 public:
  static constexpr const char* kComFrame = "com";

  /// Appends a body and returns its index. Call finalize() after the last one.
  int add_body(Body body);
  void add_frame(Frame frame);
  void set_gravity(const Eigen::Vector3d& g) { gravity_ = g; }
  /// Validates the tree and assigns coordinate offsets.
  void finalize();

  const std::string& name() const { return name_; }
  void set_name(std::string name) { name_ = std::move(name); }

  int nq() const { return nq_; }
  int nv() const { return nv_; }
  int num_bodies() const { return static_cast<int>(bodies_.size()); }
  const Body& body(int i) const { return bodies_[i]; }
  const std::vector<Body>& bodies() const { return bodies_; }
  int body_index(const std::string& name) const;

  bool has_frame(const std::string& name) const;
  const Frame& frame(const std::string& name) const;
  const std::map<std::string, Frame>& frames() const { return frames_; }

  const Eigen::Vector3d& gravity() const { return gravity_; }
  double total_mass() const { return total_mass_; }

  /// Coordinates (velocity indices) driven by actuators: every joint except the root's.
  const std::vector<int>& actuated() const { return actuated_; }
  /// Selection matrix, na x nv; Gamma = S' tau.
  const Eigen::MatrixXd& selection() const { return selection_; }
  /// Velocity index of a named joint (the body it moves). Joint must have one dof.
  int joint_velocity_index(const std::string& body_name) const;
  int joint_position_index(const std::string& body_name) const;

  /// Identity orientation, zero displacement.
  Eigen::VectorXd neutral_configuration() const;

  /// JSON model description; see models/README.md for the schema.
  static RobotModel from_json_text(const std::string& text);
  static RobotModel load(const std::string& path);

 private:
  std::string name_ = "model";
  std::vector<Body> bodies_;
  std::map<std::string, Frame> frames_;
  Eigen::Vector3d gravity_{0.0, -9.81, 0.0};
  double total_mass_ = 0.0;
  int nq_ = 0;
  int nv_ = 0;
  std::vector<int> actuated_;
  Eigen::MatrixXd selection_;
  bool finalized_ = false;
};

struct RobotState {
  Eigen::VectorXd q;
  Eigen::VectorXd qd;
};

/// Throws ModelError when the dimensions do not fit the model.
void validate_state(const RobotModel& model, const RobotState& state);

/// Per-body transforms and velocity-product accelerations for one state.
struct KinematicsCache {
  std::vector<Matrix6d> X_up;    // parent -> body
  std::vector<Matrix6d> X_base;  // world -> body
  std::vector<Vector6d> v;       // body spatial velocity, body coords (angular first)
  std::vector<Vector6d> a_bias;  // spatial acceleration at qdd = 0, no gravity
  std::vector<Eigen::Matrix3d> R;  // body -> world rotation
  std::vector<Eigen::Vector3d> p;  // body origin, world coords
};

KinematicsCache forward_kinematics(const RobotModel& model, const RobotState& state);

struct FramePose {
  Eigen::Matrix3d R;
  Eigen::Vector3d p;
};

FramePose frame_pose(const RobotModel& model, const Eigen::VectorXd& q, const std::string& frame);
Eigen::Vector3d com_position(const RobotModel& model, const Eigen::VectorXd& q);

/**
 * World-aligned frame Jacobian with linear rows first:
 *   [v; omega] = J qd,   [a; alpha] = J qdd + Jdqd
 * where v, a are the classical velocity and acceleration of the frame origin. The wrench
 * ordering (Fx, Fy, Fz, tx, ty, tz) matches, so J' f maps a wrench at the frame to
 * generalized forces. The "com" frame returns the COM Jacobian with zero angular rows.
 */
struct FrameKinematics {
  Eigen::MatrixXd J;
  Vector6d Jdqd;
};

FrameKinematics frame_kinematics(const RobotModel& model, const KinematicsCache& kin, const std::string& frame);
FrameKinematics frame_kinematics(const RobotModel& model, const RobotState& state, const std::string& frame);

/// Composite-rigid-body mass matrix.
Eigen::MatrixXd mass_matrix(const RobotModel& model, const Eigen::VectorXd& q);

/// Recursive Newton-Euler inverse dynamics: returns M qdd + V.
Eigen::VectorXd inverse_dynamics(const RobotModel& model, const RobotState& state, const Eigen::VectorXd& qdd,
                                 const Eigen::Vector3d& gravity);
Eigen::VectorXd inverse_dynamics(const RobotModel& model, const RobotState& state, const Eigen::VectorXd& qdd);

/// Coriolis, centrifugal and gravity term: inverse dynamics at qdd = 0.
Eigen::VectorXd nonlinear_term(const RobotModel& model, const RobotState& state, const Eigen::Vector3d& gravity);
Eigen::VectorXd nonlinear_term(const RobotModel& model, const RobotState& state);

double kinetic_energy(const RobotModel& model, const RobotState& state);
double potential_energy(const RobotModel& model, const Eigen::VectorXd& q);

/// Unconstrained forward dynamics M^-1 (gamma - V) for a generalized force gamma (length nv).
Eigen::VectorXd forward_dynamics(const RobotModel& model, const RobotState& state, const Eigen::VectorXd& gamma);

/// A support made of selected rows of one or more frames, stacked in order.
struct ContactRows {
  std::string frame;
  std::vector<int> rows;  // indices into the 6 rows of the frame Jacobian
};
using ContactSet = std::vector<ContactRows>;

/// Stacked Jacobian and drift term of a contact set.
struct SupportKinematics {
  Eigen::MatrixXd J;
  Eigen::VectorXd Jdqd;
};

SupportKinematics support_kinematics(const RobotModel& model, const KinematicsCache& kin, const ContactSet& contacts);

/**
 * Forward dynamics under the virtual contact constraint J qdd + Jdqd = 0:
 *
 *   qdd = M^-1 [ N' (gamma - V) - J' Lambda Jdqd ],   Lambda = (J M^-1 J')^-1,  N = I - M^-1 J' Lambda J
 *
 * gamma is the full generalized force (S' tau plus any base wrench). Throws SingularityError
 * when J M^-1 J' is rank deficient.
 */
Eigen::VectorXd constrained_forward_dynamics(const RobotModel& model, const RobotState& state,
                                             const Eigen::VectorXd& gamma, const ContactSet& contacts);

/// q advanced by velocity v over dt (base orientation updated on the manifold).
Eigen::VectorXd integrate_configuration(const RobotModel& model, const Eigen::VectorXd& q, const Eigen::VectorXd& v,
                                        double dt);

/// Semi-implicit Euler: qd' = qd + qdd dt, then q' = integrate_configuration(q, qd', dt).
RobotState integrate(const RobotModel& model, const RobotState& state, const Eigen::VectorXd& qdd, double dt);

}  // namespace mixed
