#include "mixed/constraints.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>
#include <tuple>

namespace mixed {

namespace {

constexpr double kInfinity = std::numeric_limits<double>::infinity();

}  // namespace

void FootGeometry::validate() const {
  if (!(d_x > 0.0) || !(d_z > 0.0) || !(mu > 0.0) || !(mu_prime > 0.0))
    throw ConstraintError("foot geometry: d_x, d_z, mu and mu_prime must be positive");
}

GrfBounds zmp_friction_bounds(const Vector6d& F_bar_prev, const FootGeometry& geom, long stamp) {
  const double fy = F_bar_prev[kFy];
  if (!(fy > 0.0)) throw ContactLossError("support force Fy = " + std::to_string(fy) + " <= 0: contact lost");
  if (geom.d_x < 0.0 || geom.d_z < 0.0 || geom.mu < 0.0 || geom.mu_prime < 0.0)
    throw ConstraintError("foot geometry must be non-negative");
  GrfBounds b;
  b.ub << geom.mu * fy, kInfinity, geom.mu * fy, geom.d_z * fy, geom.mu_prime * fy, geom.d_x * fy;
  b.lb = -b.ub;
  b.lb[kFy] = 0.0;
  b.stamp = stamp;
  return b;
}

void require_fresh(const GrfBounds& bounds, long step) {
  if (step - bounds.stamp > 1)
    throw ConstraintError("support bounds from step " + std::to_string(bounds.stamp) + " are stale at step " +
                          std::to_string(step));
}

std::vector<Vector6d> split_support_wrench(const ContactSet& contacts, const Eigen::VectorXd& stacked) {
  std::vector<Vector6d> out;
  int r = 0;
  for (const auto& c : contacts) {
    Vector6d w = Vector6d::Zero();
    for (int row : c.rows) {
      if (r >= stacked.size()) throw ConstraintError("stacked support vector shorter than the contact rows");
      w[row] = stacked[r++];
    }
    out.push_back(w);
  }
  if (r != stacked.size()) throw ConstraintError("stacked support vector longer than the contact rows");
  return out;
}

StackedBounds support_bounds(const ContactSet& contacts, const Eigen::VectorXd& F_bar_prev, const FootGeometry& geom,
                             long stamp) {
  const auto wrenches = split_support_wrench(contacts, F_bar_prev);
  StackedBounds out;
  out.lb.resize(F_bar_prev.size());
  out.ub.resize(F_bar_prev.size());
  int r = 0;
  for (size_t c = 0; c < contacts.size(); ++c) {
    const auto& rows = contacts[c].rows;
    if (std::find(rows.begin(), rows.end(), kFy) == rows.end())
      throw ConstraintError("contact '" + contacts[c].frame + "' has no vertical force row");
    const GrfBounds b = zmp_friction_bounds(wrenches[c], geom, stamp);
    for (int row : rows) {
      out.lb[r] = b.lb[row];
      out.ub[r] = b.ub[row];
      ++r;
    }
  }
  return out;
}

AxisBounds grf_bounds_to_axis_bounds(const StackedBounds& bounds, const Eigen::MatrixXd& Lambda,
                                     const Eigen::VectorXd& F_bar_now) {
  const Eigen::Index n = F_bar_now.size();
  if (Lambda.rows() != n || Lambda.cols() != n || bounds.lb.size() != n || bounds.ub.size() != n)
    throw ConstraintError("axis bounds: dimension mismatch");
  AxisBounds out;
  out.U_lb.resize(n);
  out.U_ub.resize(n);
  out.coupling_gain.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double l = Lambda(i, i);
    if (!(l >= 1e-10)) throw SingularityError("support inertia diagonal " + std::to_string(i) + " is singular");
    out.U_lb[i] = (F_bar_now[i] - bounds.ub[i]) / l;
    out.U_ub[i] = (F_bar_now[i] - bounds.lb[i]) / l;
    out.coupling_gain[i] = Lambda.row(i).cwiseAbs().sum() - std::abs(l);
  }
  return out;
}

Eigen::VectorXd decoupling_residual(const Eigen::MatrixXd& Lambda, const Eigen::VectorXd& U) {
  Eigen::MatrixXd off = Lambda;
  off.diagonal().setZero();
  return (off * U).cwiseAbs();
}

JointTaskMap joint_task_jacobian(const std::vector<int>& indices, int total_coords) {
  std::set<int> seen;
  JointTaskMap map;
  map.indices = indices;
  map.J = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(indices.size()), total_coords);
  for (size_t r = 0; r < indices.size(); ++r) {
    const int j = indices[r];
    if (j < 0 || j >= total_coords)
      throw ConstraintError("joint index " + std::to_string(j) + " out of range [0, " + std::to_string(total_coords) +
                            ")");
    if (!seen.insert(j).second) throw ConstraintError("duplicate joint index " + std::to_string(j));
    map.J(static_cast<Eigen::Index>(r), j) = 1.0;
  }
  return map;
}

Eigen::MatrixXd joint_apparent_inertia(const JointTaskMap& map, const Eigen::MatrixXd& Minv) {
  const Eigen::MatrixXd inv = map.J * Minv * map.J.transpose();
  return inv.ldlt().solve(Eigen::MatrixXd::Identity(inv.rows(), inv.cols()));
}

JointReference joint_reference_setpoint(const RobotModel& model, const RobotState& state, const Eigen::VectorXd& gamma,
                                        const ContactSet& contacts, const std::vector<std::string>& joints, double dt,
                                        int Np, const std::vector<std::pair<double, double>>& limits) {
  const auto n = static_cast<Eigen::Index>(joints.size());
  if (!(dt > 0.0) || Np < 1) throw ConstraintError("joint reference: dt > 0 and Np >= 1 required");
  if (!limits.empty() && static_cast<Eigen::Index>(limits.size()) != n)
    throw ConstraintError("joint reference: one limit pair per joint");
  JointReference ref;
  ref.qdd_des = constrained_forward_dynamics(model, state, gamma, contacts);
  ref.q_des.resize(n);
  ref.qd_des.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& name = joints[static_cast<size_t>(i)];
    const double q = state.q[model.joint_position_index(name)];
    const double qd = state.qd[model.joint_velocity_index(name)];
    const double a = ref.qdd_des[model.joint_velocity_index(name)];
    double lb = -kInfinity, ub = kInfinity;
    if (!limits.empty()) std::tie(lb, ub) = limits[static_cast<size_t>(i)];
    std::vector<double> w(static_cast<size_t>(Np));
    for (int k = 0; k < Np; ++k) {
      const double t = (k + 1) * dt;
      w[static_cast<size_t>(k)] = std::clamp(q + qd * t + 0.5 * a * t * t, lb, ub);
    }
    ref.q_des[i] = w.front();
    ref.qd_des[i] = w.front() == q + qd * dt + 0.5 * a * dt * dt ? qd + a * dt : 0.0;
    ref.windows.push_back(std::move(w));
  }
  return ref;
}

}  // namespace mixed
