#include "mixed/rigid_body.hpp"

#include <Eigen/Geometry>

#include <algorithm>
#include <cmath>

namespace mixed {

namespace {

Eigen::Matrix3d skew(const Eigen::Vector3d& v) {
  Eigen::Matrix3d m;
  m << 0.0, -v.z(), v.y(), v.z(), 0.0, -v.x(), -v.y(), v.x(), 0.0;
  return m;
}

// Plucker transforms use the angular-first layout [omega; v].
struct Transform {
  Eigen::Matrix3d E = Eigen::Matrix3d::Identity();  // rotates source coords into target coords
  Eigen::Vector3d r = Eigen::Vector3d::Zero();      // target origin in source coords

  Matrix6d motion() const {
    Matrix6d X = Matrix6d::Zero();
    X.topLeftCorner<3, 3>() = E;
    X.bottomRightCorner<3, 3>() = E;
    X.bottomLeftCorner<3, 3>() = -E * skew(r);
    return X;
  }
  // this * inner: first inner (A->B), then this (B->C).
  Transform operator*(const Transform& inner) const { return {E * inner.E, inner.r + inner.E.transpose() * r}; }
};

Matrix6d crm(const Vector6d& v) {
  Matrix6d m = Matrix6d::Zero();
  m.topLeftCorner<3, 3>() = skew(v.head<3>());
  m.bottomRightCorner<3, 3>() = skew(v.head<3>());
  m.bottomLeftCorner<3, 3>() = skew(v.tail<3>());
  return m;
}

Matrix6d crf(const Vector6d& v) { return -crm(v).transpose(); }

Matrix6d spatial_inertia(double m, const Eigen::Vector3d& c, const Eigen::Matrix3d& Ic) {
  const Eigen::Matrix3d C = skew(c);
  Matrix6d I;
  I.topLeftCorner<3, 3>() = Ic + m * C * C.transpose();
  I.topRightCorner<3, 3>() = m * C;
  I.bottomLeftCorner<3, 3>() = m * C.transpose();
  I.bottomRightCorner<3, 3>() = m * Eigen::Matrix3d::Identity();
  return I;
}

// In-plane basis (u, w) with u x w = n for a coordinate-axis normal n.
std::pair<Eigen::Vector3d, Eigen::Vector3d> plane_basis(const Eigen::Vector3d& n) {
  if (n.x() > 0.5) return {Eigen::Vector3d::UnitY(), Eigen::Vector3d::UnitZ()};
  if (n.y() > 0.5) return {Eigen::Vector3d::UnitZ(), Eigen::Vector3d::UnitX()};
  return {Eigen::Vector3d::UnitX(), Eigen::Vector3d::UnitY()};
}

Eigen::MatrixXd motion_subspace(const Body& b) {
  Eigen::MatrixXd S = Eigen::MatrixXd::Zero(6, b.nv);
  switch (b.joint) {
    case JointType::Fixed:
      break;
    case JointType::Revolute:
      S.col(0).head<3>() = b.axis;
      break;
    case JointType::Prismatic:
      S.col(0).tail<3>() = b.axis;
      break;
    case JointType::Planar: {
      const auto [u, w] = plane_basis(b.axis);
      S.col(0).tail<3>() = u;
      S.col(1).tail<3>() = w;
      S.col(2).head<3>() = b.axis;
      break;
    }
    case JointType::Floating:
      for (int i = 0; i < 3; ++i) {
        S(3 + i, i) = 1.0;
        S(i, 3 + i) = 1.0;
      }
      break;
  }
  return S;
}

Eigen::Matrix3d quat_rotation(const Eigen::Ref<const Eigen::VectorXd>& q4) {
  return Eigen::Quaterniond(q4[0], q4[1], q4[2], q4[3]).normalized().toRotationMatrix();
}

Transform joint_transform(const Body& b, const Eigen::VectorXd& q) {
  const auto qs = q.segment(b.q_index, b.nq);
  Transform X;
  switch (b.joint) {
    case JointType::Fixed:
      break;
    case JointType::Revolute:
      X.E = Eigen::AngleAxisd(qs[0], b.axis).toRotationMatrix().transpose();
      break;
    case JointType::Prismatic:
      X.r = b.axis * qs[0];
      break;
    case JointType::Planar: {
      const auto [u, w] = plane_basis(b.axis);
      X.E = Eigen::AngleAxisd(qs[2], b.axis).toRotationMatrix().transpose();
      X.r = qs[0] * u + qs[1] * w;
      break;
    }
    case JointType::Floating:
      X.E = quat_rotation(qs.tail(4)).transpose();
      X.r = qs.head<3>();
      break;
  }
  return X;
}

Transform tree_transform(const Body& b) { return {b.tree_rotation.transpose(), b.tree_origin}; }

std::vector<Matrix6d> up_transforms(const RobotModel& model, const Eigen::VectorXd& q) {
  std::vector<Matrix6d> X(model.num_bodies());
  for (int i = 0; i < model.num_bodies(); ++i) {
    const Body& b = model.body(i);
    X[i] = (joint_transform(b, q) * tree_transform(b)).motion();
  }
  return X;
}

std::vector<Matrix6d> body_inertias(const RobotModel& model) {
  std::vector<Matrix6d> I(model.num_bodies());
  for (int i = 0; i < model.num_bodies(); ++i) {
    const Body& b = model.body(i);
    I[i] = spatial_inertia(b.mass, b.com, b.inertia);
  }
  return I;
}

std::string joint_name(JointType t) {
  switch (t) {
    case JointType::Fixed: return "fixed";
    case JointType::Revolute: return "revolute";
    case JointType::Prismatic: return "prismatic";
    case JointType::Planar: return "planar";
    case JointType::Floating: return "floating";
  }
  return "?";
}

// Velocity and classical acceleration Jacobian rows of a body-fixed point.
void point_jacobian(const RobotModel& model, const KinematicsCache& kin, int body, const Eigen::Vector3d& offset,
                    Eigen::Ref<Eigen::MatrixXd> J, Eigen::Ref<Vector6d> Jdqd) {
  // Body-coordinate spatial Jacobian, angular rows first.
  Eigen::MatrixXd Jb = Eigen::MatrixXd::Zero(6, model.nv());
  const Matrix6d& Xb = kin.X_base[body];
  for (int j = body; j >= 0; j = model.body(j).parent) {
    const Body& bj = model.body(j);
    if (bj.nv == 0) continue;
    // ^bX_j = ^bX_0 (^jX_0)^-1
    const Matrix6d& Xj = kin.X_base[j];
    const Eigen::Matrix3d Et = Xj.topLeftCorner<3, 3>().transpose();
    Matrix6d Xj_inv = Matrix6d::Zero();
    Xj_inv.topLeftCorner<3, 3>() = Et;
    Xj_inv.bottomRightCorner<3, 3>() = Et;
    Xj_inv.bottomLeftCorner<3, 3>() = -Et * Xj.bottomLeftCorner<3, 3>() * Et;
    Jb.middleCols(bj.v_index, bj.nv) = Xb * Xj_inv * motion_subspace(bj);
  }
  const Eigen::Matrix3d& R = kin.R[body];
  const Eigen::Matrix3d O = skew(offset);
  J.topRows<3>() = R * (Jb.bottomRows<3>() - O * Jb.topRows<3>());
  J.bottomRows<3>() = R * Jb.topRows<3>();

  const Vector6d& v = kin.v[body];
  const Vector6d& a = kin.a_bias[body];
  const Eigen::Vector3d w = v.head<3>();
  const Eigen::Vector3d vp = v.tail<3>() + w.cross(offset);
  const Eigen::Vector3d ap = a.tail<3>() + a.head<3>().cross(offset) + w.cross(vp);
  Jdqd.head<3>() = R * ap;
  Jdqd.tail<3>() = R * a.head<3>();
}

}  // namespace

int RobotModel::add_body(Body body) {
  finalized_ = false;
  bodies_.push_back(std::move(body));
  return static_cast<int>(bodies_.size()) - 1;
}

void RobotModel::add_frame(Frame frame) {
  if (frame.name == kComFrame) throw ModelError("frame name 'com' is reserved");
  if (frames_.count(frame.name)) throw ModelError("duplicate frame '" + frame.name + "'");
  frames_[frame.name] = std::move(frame);
}

void RobotModel::finalize() {
  if (bodies_.empty()) throw ModelError("model has no bodies");
  nq_ = nv_ = 0;
  total_mass_ = 0.0;
  actuated_.clear();
  for (int i = 0; i < num_bodies(); ++i) {
    Body& b = bodies_[i];
    const std::string who = "body '" + b.name + "': ";
    if (i == 0 && b.parent != -1) throw ModelError(who + "root must not have a parent");
    if (i > 0 && (b.parent < 0 || b.parent >= i)) throw ModelError(who + "parent must precede the body");
    const bool root_only = b.joint == JointType::Fixed || b.joint == JointType::Planar || b.joint == JointType::Floating;
    if (i > 0 && root_only) throw ModelError(who + joint_name(b.joint) + " joints are only allowed at the root");
    for (int k = 0; k < i; ++k)
      if (bodies_[k].name == b.name) throw ModelError(who + "duplicate name");

    if (b.joint != JointType::Fixed && b.joint != JointType::Floating) {
      const double n = b.axis.norm();
      if (!(n > 1e-12)) throw ModelError(who + "joint axis is zero");
      b.axis /= n;
    }
    if (b.joint == JointType::Planar && std::abs(b.axis.cwiseAbs().maxCoeff() - 1.0) > 1e-12)
      throw ModelError(who + "planar normal must be a coordinate axis");
    if (b.joint == JointType::Planar) b.axis = b.axis.cwiseAbs();

    const bool massless_ok = i == 0 && b.joint == JointType::Fixed;
    if (!(b.mass > 0.0) && !(massless_ok && b.mass == 0.0)) throw ModelError(who + "mass must be positive");
    if ((b.inertia - b.inertia.transpose()).cwiseAbs().maxCoeff() > 1e-12 * (1.0 + b.inertia.norm()))
      throw ModelError(who + "inertia is not symmetric");
    if (Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d>(b.inertia).eigenvalues().minCoeff() < -1e-12)
      throw ModelError(who + "inertia is not positive semidefinite");
    if ((b.tree_rotation.transpose() * b.tree_rotation - Eigen::Matrix3d::Identity()).norm() > 1e-9)
      throw ModelError(who + "joint frame rotation is not orthonormal");

    switch (b.joint) {
      case JointType::Fixed: b.nq = b.nv = 0; break;
      case JointType::Revolute:
      case JointType::Prismatic: b.nq = b.nv = 1; break;
      case JointType::Planar: b.nq = b.nv = 3; break;
      case JointType::Floating: b.nq = 7; b.nv = 6; break;
    }
    b.q_index = nq_;
    b.v_index = nv_;
    nq_ += b.nq;
    nv_ += b.nv;
    total_mass_ += b.mass;
    if (b.joint == JointType::Revolute || b.joint == JointType::Prismatic) actuated_.push_back(b.v_index);
  }
  if (nv_ == 0) throw ModelError("model has no degrees of freedom");
  for (const auto& [name, f] : frames_)
    if (f.body < 0 || f.body >= num_bodies()) throw ModelError("frame '" + name + "' refers to a missing body");

  selection_ = Eigen::MatrixXd::Zero(static_cast<int>(actuated_.size()), nv_);
  for (int k = 0; k < static_cast<int>(actuated_.size()); ++k) selection_(k, actuated_[k]) = 1.0;
  finalized_ = true;
}

int RobotModel::body_index(const std::string& name) const {
  for (int i = 0; i < num_bodies(); ++i)
    if (bodies_[i].name == name) return i;
  throw ModelError("unknown body '" + name + "'");
}

bool RobotModel::has_frame(const std::string& name) const { return name == kComFrame || frames_.count(name) > 0; }

const Frame& RobotModel::frame(const std::string& name) const {
  const auto it = frames_.find(name);
  if (it == frames_.end()) throw ModelError("unknown frame '" + name + "'");
  return it->second;
}

int RobotModel::joint_velocity_index(const std::string& body_name) const {
  const Body& b = bodies_[body_index(body_name)];
  if (b.nv != 1) throw ModelError("body '" + body_name + "' is not moved by a single-dof joint");
  return b.v_index;
}

int RobotModel::joint_position_index(const std::string& body_name) const {
  const Body& b = bodies_[body_index(body_name)];
  if (b.nq != 1) throw ModelError("body '" + body_name + "' is not moved by a single-dof joint");
  return b.q_index;
}

Eigen::VectorXd RobotModel::neutral_configuration() const {
  Eigen::VectorXd q = Eigen::VectorXd::Zero(nq_);
  for (const Body& b : bodies_)
    if (b.joint == JointType::Floating) q[b.q_index + 3] = 1.0;
  return q;
}

void validate_state(const RobotModel& model, const RobotState& state) {
  if (state.q.size() != model.nq() || state.qd.size() != model.nv())
    throw ModelError("state dimensions do not match model '" + model.name() + "'");
}

KinematicsCache forward_kinematics(const RobotModel& model, const RobotState& state) {
  validate_state(model, state);
  const int nb = model.num_bodies();
  KinematicsCache k;
  k.X_up.resize(nb);
  k.X_base.resize(nb);
  k.v.resize(nb);
  k.a_bias.resize(nb);
  k.R.resize(nb);
  k.p.resize(nb);
  for (int i = 0; i < nb; ++i) {
    const Body& b = model.body(i);
    const Transform up = joint_transform(b, state.q) * tree_transform(b);
    k.X_up[i] = up.motion();
    const Eigen::MatrixXd S = motion_subspace(b);
    const Vector6d vj = S * state.qd.segment(b.v_index, b.nv);
    if (b.parent < 0) {
      k.X_base[i] = k.X_up[i];
      k.R[i] = up.E.transpose();
      k.p[i] = up.r;
      k.v[i] = vj;
      k.a_bias[i].setZero();
    } else {
      k.X_base[i] = k.X_up[i] * k.X_base[b.parent];
      k.R[i] = k.R[b.parent] * up.E.transpose();
      k.p[i] = k.p[b.parent] + k.R[b.parent] * up.r;
      k.v[i] = k.X_up[i] * k.v[b.parent] + vj;
      k.a_bias[i] = k.X_up[i] * k.a_bias[b.parent] + crm(k.v[i]) * vj;
    }
  }
  return k;
}

FramePose frame_pose(const RobotModel& model, const Eigen::VectorXd& q, const std::string& frame) {
  const RobotState s{q, Eigen::VectorXd::Zero(model.nv())};
  const auto kin = forward_kinematics(model, s);
  if (frame == RobotModel::kComFrame) return {Eigen::Matrix3d::Identity(), com_position(model, q)};
  const Frame& f = model.frame(frame);
  return {kin.R[f.body] * f.rotation, kin.p[f.body] + kin.R[f.body] * f.offset};
}

Eigen::Vector3d com_position(const RobotModel& model, const Eigen::VectorXd& q) {
  const auto kin = forward_kinematics(model, {q, Eigen::VectorXd::Zero(model.nv())});
  Eigen::Vector3d c = Eigen::Vector3d::Zero();
  for (int i = 0; i < model.num_bodies(); ++i) c += model.body(i).mass * (kin.p[i] + kin.R[i] * model.body(i).com);
  return c / model.total_mass();
}

FrameKinematics frame_kinematics(const RobotModel& model, const KinematicsCache& kin, const std::string& frame) {
  FrameKinematics fk;
  fk.J = Eigen::MatrixXd::Zero(6, model.nv());
  fk.Jdqd.setZero();
  if (frame == RobotModel::kComFrame) {
    Eigen::MatrixXd Ji(6, model.nv());
    Vector6d di;
    for (int i = 0; i < model.num_bodies(); ++i) {
      const Body& b = model.body(i);
      if (b.mass == 0.0) continue;
      point_jacobian(model, kin, i, b.com, Ji, di);
      fk.J.topRows<3>() += (b.mass / model.total_mass()) * Ji.topRows<3>();
      fk.Jdqd.head<3>() += (b.mass / model.total_mass()) * di.head<3>();
    }
    return fk;
  }
  const Frame& f = model.frame(frame);
  point_jacobian(model, kin, f.body, f.offset, fk.J, fk.Jdqd);
  return fk;
}

FrameKinematics frame_kinematics(const RobotModel& model, const RobotState& state, const std::string& frame) {
  return frame_kinematics(model, forward_kinematics(model, state), frame);
}

Eigen::MatrixXd mass_matrix(const RobotModel& model, const Eigen::VectorXd& q) {
  if (q.size() != model.nq()) throw ModelError("configuration size does not match model");
  const int nb = model.num_bodies();
  const auto X = up_transforms(model, q);
  auto Ic = body_inertias(model);
  Eigen::MatrixXd M = Eigen::MatrixXd::Zero(model.nv(), model.nv());
  for (int i = nb - 1; i >= 0; --i) {
    const Body& bi = model.body(i);
    if (bi.parent >= 0) Ic[bi.parent] += X[i].transpose() * Ic[i] * X[i];
    if (bi.nv == 0) continue;
    const Eigen::MatrixXd Si = motion_subspace(bi);
    Eigen::MatrixXd F = Ic[i] * Si;
    M.block(bi.v_index, bi.v_index, bi.nv, bi.nv) = Si.transpose() * F;
    for (int j = i; model.body(j).parent >= 0;) {
      F = X[j].transpose() * F;
      j = model.body(j).parent;
      const Body& bj = model.body(j);
      if (bj.nv == 0) continue;
      const Eigen::MatrixXd blk = F.transpose() * motion_subspace(bj);
      M.block(bi.v_index, bj.v_index, bi.nv, bj.nv) = blk;
      M.block(bj.v_index, bi.v_index, bj.nv, bi.nv) = blk.transpose();
    }
  }
  return M;
}

Eigen::VectorXd inverse_dynamics(const RobotModel& model, const RobotState& state, const Eigen::VectorXd& qdd,
                                 const Eigen::Vector3d& gravity) {
  validate_state(model, state);
  if (qdd.size() != model.nv()) throw ModelError("acceleration size does not match model");
  const int nb = model.num_bodies();
  const auto X = up_transforms(model, state.q);
  const auto I = body_inertias(model);
  std::vector<Vector6d> v(nb), a(nb), f(nb);
  Vector6d a_world = Vector6d::Zero();
  a_world.tail<3>() = -gravity;
  std::vector<Eigen::MatrixXd> S(nb);
  for (int i = 0; i < nb; ++i) {
    const Body& b = model.body(i);
    S[i] = motion_subspace(b);
    const Vector6d vj = S[i] * state.qd.segment(b.v_index, b.nv);
    const Vector6d aj = S[i] * qdd.segment(b.v_index, b.nv);
    const Vector6d& vp = b.parent < 0 ? Vector6d::Zero().eval() : v[b.parent];
    const Vector6d& ap = b.parent < 0 ? a_world : a[b.parent];
    v[i] = X[i] * vp + vj;
    a[i] = X[i] * ap + aj + crm(v[i]) * vj;
    f[i] = I[i] * a[i] + crf(v[i]) * I[i] * v[i];
  }
  Eigen::VectorXd tau(model.nv());
  for (int i = nb - 1; i >= 0; --i) {
    const Body& b = model.body(i);
    if (b.nv > 0) tau.segment(b.v_index, b.nv) = S[i].transpose() * f[i];
    if (b.parent >= 0) f[b.parent] += X[i].transpose() * f[i];
  }
  return tau;
}

Eigen::VectorXd inverse_dynamics(const RobotModel& model, const RobotState& state, const Eigen::VectorXd& qdd) {
  return inverse_dynamics(model, state, qdd, model.gravity());
}

Eigen::VectorXd nonlinear_term(const RobotModel& model, const RobotState& state, const Eigen::Vector3d& gravity) {
  return inverse_dynamics(model, state, Eigen::VectorXd::Zero(model.nv()), gravity);
}

Eigen::VectorXd nonlinear_term(const RobotModel& model, const RobotState& state) {
  return nonlinear_term(model, state, model.gravity());
}

double kinetic_energy(const RobotModel& model, const RobotState& state) {
  validate_state(model, state);
  return 0.5 * state.qd.dot(mass_matrix(model, state.q) * state.qd);
}

double potential_energy(const RobotModel& model, const Eigen::VectorXd& q) {
  return -model.total_mass() * model.gravity().dot(com_position(model, q));
}

Eigen::VectorXd forward_dynamics(const RobotModel& model, const RobotState& state, const Eigen::VectorXd& gamma) {
  if (gamma.size() != model.nv()) throw ModelError("generalized force size does not match model");
  return mass_matrix(model, state.q).llt().solve(gamma - nonlinear_term(model, state));
}

SupportKinematics support_kinematics(const RobotModel& model, const KinematicsCache& kin, const ContactSet& contacts) {
  int rows = 0;
  for (const auto& c : contacts) rows += static_cast<int>(c.rows.size());
  SupportKinematics s;
  s.J.resize(rows, model.nv());
  s.Jdqd.resize(rows);
  int r = 0;
  for (const auto& c : contacts) {
    const auto fk = frame_kinematics(model, kin, c.frame);
    for (int row : c.rows) {
      if (row < 0 || row >= 6) throw ModelError("contact row index out of range for frame '" + c.frame + "'");
      s.J.row(r) = fk.J.row(row);
      s.Jdqd[r] = fk.Jdqd[row];
      ++r;
    }
  }
  return s;
}

Eigen::VectorXd constrained_forward_dynamics(const RobotModel& model, const RobotState& state,
                                             const Eigen::VectorXd& gamma, const ContactSet& contacts) {
  if (gamma.size() != model.nv()) throw ModelError("generalized force size does not match model");
  const auto kin = forward_kinematics(model, state);
  const auto sup = support_kinematics(model, kin, contacts);
  const Eigen::MatrixXd M = mass_matrix(model, state.q);
  const Eigen::LLT<Eigen::MatrixXd> llt(M);
  const Eigen::MatrixXd MinvJt = llt.solve(sup.J.transpose());
  const Eigen::MatrixXd A = sup.J * MinvJt;
  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(A, Eigen::EigenvaluesOnly);
  if (A.rows() > 0 && !(es.eigenvalues().minCoeff() > 1e-10 * es.eigenvalues().maxCoeff()))
    throw SingularityError("support Jacobian is rank deficient");
  const Eigen::MatrixXd Lambda = A.llt().solve(Eigen::MatrixXd::Identity(A.rows(), A.rows()));
  const Eigen::MatrixXd Jbar = MinvJt * Lambda;  // M^-1 J' Lambda
  const Eigen::MatrixXd N = Eigen::MatrixXd::Identity(model.nv(), model.nv()) - Jbar * sup.J;
  const Eigen::VectorXd V = nonlinear_term(model, state);
  return llt.solve(N.transpose() * (gamma - V) - sup.J.transpose() * (Lambda * sup.Jdqd));
}

Eigen::VectorXd integrate_configuration(const RobotModel& model, const Eigen::VectorXd& q, const Eigen::VectorXd& v,
                                        double dt) {
  if (q.size() != model.nq() || v.size() != model.nv()) throw ModelError("state dimensions do not match model");
  Eigen::VectorXd out = q;
  for (const Body& b : model.bodies()) {
    const auto vs = v.segment(b.v_index, b.nv);
    switch (b.joint) {
      case JointType::Fixed:
        break;
      case JointType::Revolute:
      case JointType::Prismatic:
        out[b.q_index] += vs[0] * dt;
        break;
      case JointType::Planar: {
        const double th = q[b.q_index + 2];
        const double c = std::cos(th), s = std::sin(th);
        out[b.q_index] += (c * vs[0] - s * vs[1]) * dt;
        out[b.q_index + 1] += (s * vs[0] + c * vs[1]) * dt;
        out[b.q_index + 2] += vs[2] * dt;
        break;
      }
      case JointType::Floating: {
        const auto q4 = q.segment<4>(b.q_index + 3);
        const Eigen::Quaterniond rot = Eigen::Quaterniond(q4[0], q4[1], q4[2], q4[3]).normalized();
        out.segment<3>(b.q_index) += rot.toRotationMatrix() * vs.head(3) * dt;
        const Eigen::Vector3d w = vs.tail(3) * dt;
        const double angle = w.norm();
        Eigen::Quaterniond step = Eigen::Quaterniond::Identity();
        if (angle > 0.0) step = Eigen::Quaterniond(Eigen::AngleAxisd(angle, w / angle));
        const Eigen::Quaterniond next = (rot * step).normalized();
        out.segment<4>(b.q_index + 3) << next.w(), next.x(), next.y(), next.z();
        break;
      }
    }
  }
  return out;
}

RobotState integrate(const RobotModel& model, const RobotState& state, const Eigen::VectorXd& qdd, double dt) {
  validate_state(model, state);
  RobotState next;
  next.qd = state.qd + qdd * dt;
  next.q = integrate_configuration(model, state.q, next.qd, dt);
  return next;
}

}  // namespace mixed
