#pragma once

#include <random>

#include "dynamics_oracles.hpp"
#include "mixed/nsp_wbc.hpp"
#include "mixed/runtime.hpp"

namespace fixture {

inline mixed::RobotModel humanoid() { return mixed::RobotModel::load(oracle::model_path("planar_humanoid.json")); }

/// Slightly crouched double stance with both soles on y = 0.
inline mixed::RobotState home(const mixed::RobotModel& m) {
  Eigen::VectorXd q = m.neutral_configuration();
  auto set = [&](const char* b, double v) { q[m.joint_position_index(b)] = v; };
  set("thigh_l", -0.3);
  set("shank_l", 0.6);
  set("foot_l", -0.3);
  set("thigh_r", -0.3);
  set("shank_r", 0.6);
  set("foot_r", -0.3);
  set("upper_arm", -0.2);
  set("forearm", -1.4);
  q[0] -= mixed::frame_pose(m, q, "sole_l").p.y();
  return {q, Eigen::VectorXd::Zero(m.nv())};
}

inline mixed::ContactSet double_support() { return {{"sole_l", {1, 2, 3}}, {"sole_r", {1, 2, 3}}}; }

/// Support, CoM fore-aft, elbow + left knee, hand, torso pitch: twelve rows on twelve coordinates.
inline mixed::TaskHierarchy full_hierarchy() {
  using mixed::TaskKind;
  mixed::TaskHierarchy h;
  h.foot = double_support();
  h.tasks = {
      {"com", 1, TaskKind::Normal, "com", {2}, {}},
      {"joints", 2, TaskKind::Critical, "", {}, {"forearm", "shank_l"}},
      {"hand", 3, TaskKind::Normal, "hand", {1, 2}, {}},
      {"posture", 4, TaskKind::Normal, "torso_top", {3}, {}},
  };
  return h;
}

inline std::vector<Eigen::VectorXd> zero_accels(const mixed::TaskHierarchy& h) {
  std::vector<Eigen::VectorXd> a;
  for (const auto& t : h.tasks) a.push_back(Eigen::VectorXd::Zero(t.dimension()));
  return a;
}

inline std::vector<Eigen::VectorXd> random_accels(const mixed::TaskHierarchy& h, std::mt19937& rng, double scale = 1.0) {
  std::normal_distribution<double> N(0.0, scale);
  std::vector<Eigen::VectorXd> a;
  for (const auto& t : h.tasks) a.push_back(Eigen::VectorXd::NullaryExpr(t.dimension(), [&] { return N(rng); }));
  return a;
}

/// Home posture perturbed by small random joint offsets and velocities.
inline mixed::RobotState perturbed_home(const mixed::RobotModel& m, std::mt19937& rng) {
  std::normal_distribution<double> N(0.0, 1.0);
  auto s = home(m);
  for (int i = 2; i < m.nq(); ++i) s.q[i] += 0.1 * N(rng);
  for (int i = 0; i < m.nv(); ++i) s.qd[i] = 0.3 * N(rng);
  return s;
}

/// Full hierarchy with eight MPC axes: six support rows, elbow and left knee.
inline mixed::MixedConfig mixed_config(int workers = 1) {
  mixed::MixedConfig c;
  c.hierarchy = full_hierarchy();
  for (const auto& t : c.hierarchy.tasks) c.gains.push_back(mixed::PdGains::uniform(t.dimension(), 100.0, 20.0));
  c.foot_mpc.weights.R = 1e-6;
  c.foot_mpc.bounds = {-5.0, 5.0, -50.0, 50.0, -mixed::kInf, mixed::kInf};
  c.task_mpc.weights.R = 1e-6;
  c.task_mpc.bounds = {-5.0, 5.0, -100.0, 100.0, -mixed::kInf, mixed::kInf};
  c.limits = {{"joints", {{-2.618, -0.436}, {0.05, 2.5}}}};
  c.workers = workers;
  return c;
}

}  // namespace fixture
