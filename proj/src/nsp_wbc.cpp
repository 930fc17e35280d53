#include "mixed/nsp_wbc.hpp"

#include <set>

namespace mixed {

namespace {

bool well_conditioned(const Eigen::MatrixXd& A) {
  if (A.rows() == 0) return false;
  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(A, Eigen::EigenvaluesOnly);
  const double hi = es.eigenvalues().maxCoeff();
  return hi > 0.0 && es.eigenvalues().minCoeff() > kRankTolerance * hi;
}

Eigen::MatrixXd spd_inverse(const Eigen::MatrixXd& A) {
  return A.llt().solve(Eigen::MatrixXd::Identity(A.rows(), A.cols()));
}

}  // namespace

OpSpaceData op_space_data_from_inverse(const Eigen::MatrixXd& J, const Eigen::MatrixXd& Minv, const std::string& task) {
  if (J.cols() != Minv.rows()) throw WbcError(task + ": Jacobian width does not match the mass matrix");
  const Eigen::MatrixXd JMinv = J * Minv;
  const Eigen::MatrixXd A = JMinv * J.transpose();
  if (!well_conditioned(A)) throw SingularityError(task + ": Jacobian is rank deficient");
  OpSpaceData d;
  d.Lambda = spd_inverse(A);
  d.Jbar_T = d.Lambda * JMinv;
  d.N = Eigen::MatrixXd::Identity(J.cols(), J.cols()) - d.Jbar_T.transpose() * J;
  return d;
}

OpSpaceData op_space_data(const Eigen::MatrixXd& J, const Eigen::MatrixXd& M, const std::string& task) {
  if (M.rows() != M.cols()) throw WbcError(task + ": mass matrix is not square");
  const Eigen::LLT<Eigen::MatrixXd> llt(M);
  if (llt.info() != Eigen::Success) throw WbcError(task + ": mass matrix is not positive definite");
  return op_space_data_from_inverse(J, llt.solve(Eigen::MatrixXd::Identity(M.rows(), M.cols())), task);
}

int numerical_rank(const Eigen::MatrixXd& A, double rel_tol) {
  if (A.size() == 0) return 0;
  const Eigen::JacobiSVD<Eigen::MatrixXd> svd(A);
  const auto& s = svd.singularValues();
  if (s.size() == 0 || s[0] <= 1e-12) return 0;
  int r = 0;
  for (int i = 0; i < s.size(); ++i)
    if (s[i] > rel_tol * s[0]) ++r;
  return r;
}

PrioritizedJacobian prioritized_jacobian(const Eigen::MatrixXd& J_k, const Eigen::MatrixXd& accumulated_null) {
  if (J_k.cols() != accumulated_null.rows()) throw WbcError("prioritized Jacobian: shape mismatch");
  PrioritizedJacobian p;
  p.J_star = J_k * accumulated_null;
  // Rank is measured against the unprojected scale so a fully absorbed task reports 0.
  const double scale = J_k.size() ? J_k.norm() : 0.0;
  p.rank = p.J_star.norm() <= 1e-9 * scale ? 0 : numerical_rank(p.J_star);
  return p;
}

int TaskHierarchy::foot_dimension() const {
  int n = 0;
  for (const auto& c : foot) n += static_cast<int>(c.rows.size());
  return n;
}

void TaskHierarchy::validate(const RobotModel& model) const {
  if (foot.empty() || foot_dimension() == 0) throw WbcError("hierarchy: support task is empty");
  for (const auto& c : foot) {
    if (!model.has_frame(c.frame)) throw WbcError("hierarchy: unknown support frame '" + c.frame + "'");
    for (int r : c.rows)
      if (r < 0 || r > 5) throw WbcError("hierarchy: support row out of range");
  }
  std::set<int> priorities;
  std::set<std::string> names;
  for (const auto& t : tasks) {
    const std::string who = "task '" + t.name + "'";
    if (!priorities.insert(t.priority).second) throw WbcError(who + ": duplicate priority");
    if (!names.insert(t.name).second) throw WbcError(who + ": duplicate name");
    if (t.dimension() == 0) throw WbcError(who + ": no rows");
    if (!t.frame.empty()) {
      if (!t.joints.empty()) throw WbcError(who + ": give either a frame or joints, not both");
      if (!model.has_frame(t.frame)) throw WbcError(who + ": unknown frame '" + t.frame + "'");
      for (int r : t.rows)
        if (r < 0 || r > 5) throw WbcError(who + ": row out of range");
    } else {
      for (const auto& j : t.joints) {
        try {
          model.joint_velocity_index(j);
        } catch (const ModelError& e) {
          throw WbcError(who + ": " + e.what());
        }
      }
    }
  }
  for (size_t i = 1; i < tasks.size(); ++i)
    if (tasks[i].priority <= tasks[i - 1].priority) throw WbcError("hierarchy: tasks must be listed by priority");
}

TaskKinematics task_kinematics(const RobotModel& model, const KinematicsCache& kin, const TaskSpec& task) {
  TaskKinematics tk;
  const int n = task.dimension();
  tk.J = Eigen::MatrixXd::Zero(n, model.nv());
  tk.Jdqd = Eigen::VectorXd::Zero(n);
  if (!task.frame.empty()) {
    const auto fk = frame_kinematics(model, kin, task.frame);
    for (int i = 0; i < n; ++i) {
      tk.J.row(i) = fk.J.row(task.rows[i]);
      tk.Jdqd[i] = fk.Jdqd[task.rows[i]];
    }
  } else {
    for (int i = 0; i < n; ++i) tk.J(i, model.joint_velocity_index(task.joints[i])) = 1.0;
  }
  return tk;
}

DynamicsSnapshot make_snapshot(const RobotModel& model, const RobotState& state, const TaskHierarchy& hierarchy) {
  DynamicsSnapshot s;
  s.state = state;
  s.kin = forward_kinematics(model, state);
  s.M = mass_matrix(model, state.q);
  const Eigen::LLT<Eigen::MatrixXd> llt(s.M);
  s.Minv = llt.solve(Eigen::MatrixXd::Identity(model.nv(), model.nv()));
  s.V = nonlinear_term(model, state);
  s.foot = support_kinematics(model, s.kin, hierarchy.foot);
  s.foot_os = op_space_data_from_inverse(s.foot.J, s.Minv, "support");
  s.tasks.reserve(hierarchy.tasks.size());
  for (const auto& t : hierarchy.tasks) s.tasks.push_back(task_kinematics(model, s.kin, t));
  return s;
}

FootWrench foot_wrench(const DynamicsSnapshot& snap, const Eigen::VectorXd& U_foot) {
  if (U_foot.size() != snap.foot.J.rows()) throw WbcError("foot command size does not match the support task");
  FootWrench w;
  w.Lambda = snap.foot_os.Lambda;
  // Rigid contact (zero support acceleration) with the posture torque eliminated by N_f.
  w.F_ideal = w.Lambda * (snap.foot.J * (snap.Minv * snap.V) - snap.foot.Jdqd);
  w.F = w.F_ideal - w.Lambda * U_foot;
  return w;
}

FootWrench foot_wrench(const RobotModel& model, const RobotState& state, const ContactSet& foot,
                       const Eigen::VectorXd& U_foot) {
  TaskHierarchy h;
  h.foot = foot;
  return foot_wrench(make_snapshot(model, state, h), U_foot);
}

Eigen::Vector3d support_resultant(const RobotModel& model, const KinematicsCache& kin, const Eigen::VectorXd& gamma) {
  const Body& root = model.body(0);
  if (gamma.size() != model.nv()) throw WbcError("generalized force size does not match model");
  if (root.joint == JointType::Floating) return kin.R[0] * gamma.head<3>();
  if (root.joint == JointType::Planar) {
    // Base coordinates are body-frame translations along the in-plane axes u, w.
    Eigen::Vector3d u = Eigen::Vector3d::UnitY(), w = Eigen::Vector3d::UnitZ();
    if (root.axis.y() > 0.5) u = Eigen::Vector3d::UnitZ(), w = Eigen::Vector3d::UnitX();
    if (root.axis.z() > 0.5) u = Eigen::Vector3d::UnitX(), w = Eigen::Vector3d::UnitY();
    return kin.R[0] * (gamma[0] * u + gamma[1] * w);
  }
  throw WbcError("support resultant needs a planar or floating root");
}

WbcOutput solve_hierarchy(const RobotModel& model, const DynamicsSnapshot& snap, const TaskHierarchy& hierarchy,
                          const Eigen::VectorXd& U_foot, const std::vector<Eigen::VectorXd>& task_accels,
                          const WbcOptions& options) {
  const int nv = model.nv();
  if (task_accels.size() != hierarchy.tasks.size()) throw WbcError("one acceleration command per task is required");
  if (snap.tasks.size() != hierarchy.tasks.size()) throw WbcError("snapshot was built for a different hierarchy");

  WbcOutput out;
  const FootWrench fw = foot_wrench(snap, U_foot);
  out.F_foot_ideal = fw.F_ideal;
  out.F_foot = fw.F;
  out.Lambda_foot = fw.Lambda;

  const Eigen::MatrixXd& Minv = snap.Minv;
  const Eigen::MatrixXd& Jf = snap.foot.J;
  const Eigen::MatrixXd NfT = snap.foot_os.N.transpose();
  // Terms shared by every task: M^-1 N_f' V and M^-1 J_f' Lambda_f (Jd_f qd [+ U_foot]).
  const Eigen::VectorXd drift_q = Minv * (NfT * snap.V);
  Eigen::VectorXd foot_term = snap.foot.Jdqd;
  if (options.foot_compensation) foot_term += U_foot;
  const Eigen::VectorXd foot_q = Minv * (Jf.transpose() * (fw.Lambda * foot_term));

  Eigen::MatrixXd N_acc = snap.foot_os.N;
  Eigen::VectorXd tau_sum = Eigen::VectorXd::Zero(nv);

  for (size_t k = 0; k < hierarchy.tasks.size(); ++k) {
    const TaskSpec& spec = hierarchy.tasks[k];
    const TaskKinematics& tk = snap.tasks[k];
    if (task_accels[k].size() != spec.dimension())
      throw WbcError("task '" + spec.name + "': command size does not match its dimension");
    TaskResult r;
    r.name = spec.name;
    r.commanded = task_accels[k];
    r.force = Eigen::VectorXd::Zero(spec.dimension());
    r.torque = Eigen::VectorXd::Zero(nv);

    const auto pj = prioritized_jacobian(tk.J, N_acc);
    r.rank = pj.rank;
    const Eigen::MatrixXd JsMinv = pj.J_star * Minv;
    const Eigen::MatrixXd A = JsMinv * pj.J_star.transpose();
    if (pj.rank < spec.dimension() || !well_conditioned(A)) {
      r.singular = true;
      out.diagnostics.push_back("task '" + spec.name + "' is singular at its priority (rank " +
                                std::to_string(pj.rank) + " of " + std::to_string(spec.dimension()) + ")");
    } else {
      const Eigen::MatrixXd Lam = spd_inverse(A);
      const Eigen::VectorXd rhs = task_accels[k] - tk.Jdqd + tk.J * (drift_q - Minv * (NfT * tau_sum) + foot_q);
      r.force = Lam * rhs;
      r.torque = pj.J_star.transpose() * r.force;
      tau_sum += r.torque;
      N_acc -= JsMinv.transpose() * Lam * pj.J_star;
    }
    out.tasks.push_back(std::move(r));
  }

  out.gamma = Jf.transpose() * fw.F + NfT * tau_sum;
  if (options.null_space_damping) {
    const Eigen::VectorXd qdd_tasks = Minv * (out.gamma - snap.V);
    out.gamma += N_acc.transpose() * (snap.M * (-qdd_tasks - *options.null_space_damping * snap.state.qd));
  }
  if (!out.gamma.allFinite()) throw WbcError("non-finite generalized force");
  out.tau = model.selection() * out.gamma;

  const Eigen::VectorXd qdd = Minv * (out.gamma - snap.V);
  out.foot_achieved = -(Jf * qdd + snap.foot.Jdqd);
  for (size_t k = 0; k < out.tasks.size(); ++k) out.tasks[k].achieved = snap.tasks[k].J * qdd + snap.tasks[k].Jdqd;
  return out;
}

WbcOutput solve_hierarchy(const RobotModel& model, const RobotState& state, const TaskHierarchy& hierarchy,
                          const Eigen::VectorXd& U_foot, const std::vector<Eigen::VectorXd>& task_accels,
                          const WbcOptions& options) {
  return solve_hierarchy(model, make_snapshot(model, state, hierarchy), hierarchy, U_foot, task_accels, options);
}

}  // namespace mixed
