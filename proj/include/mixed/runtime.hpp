#pragma once

#include <Eigen/Dense>

#include <condition_variable>
#include <functional>
#include <memory>
#include <mutex>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "mixed/constraints.hpp"
#include "mixed/mpc.hpp"
#include "mixed/nsp_wbc.hpp"

namespace mixed {

struct RuntimeError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Raised by run_cycle when the budget policy is Abort and the cycle overran.
struct BudgetOverrun : RuntimeError {
  BudgetOverrun(long step, double elapsed_us);
  long step;
  double elapsed_us;
};

/// Diagonal PD gains.
struct PdGains {
  Eigen::VectorXd Kp;
  Eigen::VectorXd Kd;

  static PdGains uniform(int n, double kp, double kd);
  /// Throws RuntimeError unless Kp > 0 and Kd >= 0 on every axis.
  void validate() const;
};

/// Kp (x_ref - x) + Kd (dx_ref - dx), per axis.
Eigen::VectorXd pd_accel(const Eigen::VectorXd& x_ref, const Eigen::VectorXd& dx_ref, const Eigen::VectorXd& x,
                         const Eigen::VectorXd& dx, const PdGains& gains);

enum class BudgetAction { Record, Abort };

struct BudgetPolicy {
  double budget_us = 1750.0;
  BudgetAction action = BudgetAction::Record;
  void validate() const;
};

/**
 * Fixed pool of `size` participants: the calling thread plus size - 1 workers. run() calls
 * job(w) once for every w in [0, size) and returns when all have finished.
 */
class WorkerPool {
 public:
  explicit WorkerPool(int size);
  ~WorkerPool();
  WorkerPool(const WorkerPool&) = delete;
  WorkerPool& operator=(const WorkerPool&) = delete;

  int size() const { return size_; }
  void run(const std::function<void(int)>& job);

 private:
  void loop(int w);

  int size_;
  std::vector<std::thread> threads_;
  std::mutex mu_;
  std::condition_variable start_cv_;
  std::condition_variable done_cv_;
  const std::function<void(int)>* job_ = nullptr;
  long generation_ = 0;
  int pending_ = 0;
  bool stop_ = false;
};

/// Current task coordinates: frame position rows, rotation-vector rows, or joint positions.
Eigen::VectorXd task_position(const RobotModel& model, const RobotState& state, const TaskSpec& task);
/// Stacked support coordinates in the same row order as the support Jacobian.
Eigen::VectorXd support_position(const RobotModel& model, const RobotState& state, const ContactSet& contacts);

struct MixedConfig {
  TaskHierarchy hierarchy;
  /// One entry per task; used by Normal tasks only.
  std::vector<PdGains> gains;
  /// Template for the support axes (U is the support-coordinate acceleration).
  MpcAxisConfig foot_mpc;
  /// Template for Critical task axes; Y bounds are taken from `limits`.
  MpcAxisConfig task_mpc;
  /// Output bounds (lb, ub) per Critical task row, keyed by task name.
  std::vector<std::pair<std::string, std::vector<std::pair<double, double>>>> limits;
  FootGeometry foot;
  /// When false the support action is forced to zero (pure rigid-contact support).
  bool foot_mpc_enabled = true;
  /// Damping (1/s) of the directions left free when the joint set-points are predicted.
  double null_space_damping = 2.0;
  int workers = 1;
  BudgetPolicy budget;

  void validate(const RobotModel& model) const;
};

/// Desired position and velocity of one task, in task coordinates.
struct TaskReference {
  Eigen::VectorXd x;
  Eigen::VectorXd xd;
};

struct AxisTrace {
  double y = 0.0;
  double y_ref = 0.0;
  double U = 0.0;
  double dU = 0.0;
  QpStatus status = QpStatus::Optimal;
  bool fallback = false;
  int iterations = 0;
};

/// Wall-clock of one cycle, microseconds.
struct CycleTimes {
  double mixed_main_us = 0.0;    // bounds, references, MPC share of the calling thread, PD laws
  double mixed_worker_us = 0.0;  // slowest worker share, zero with one participant
  double nsp_us = 0.0;           // dynamics snapshot and hierarchy solves
  double total_us = 0.0;
};

struct CycleTrace {
  long step = 0;
  std::vector<Eigen::VectorXd> task_commanded;
  std::vector<Eigen::VectorXd> task_achieved;
  Eigen::VectorXd foot_commanded;
  Eigen::VectorXd foot_achieved;
  Eigen::VectorXd foot_position;  // support coordinates minus their anchors
  std::vector<AxisTrace> axes;
  Eigen::VectorXd F_bar;
  Eigen::VectorXd F_foot;
  Eigen::VectorXd zmp_band;  // d_z Fy of the previous step, per contact
  Eigen::VectorXd tau_x;     // commanded torque about X, per contact
  double decoupling = 0.0;   // largest neglected support coupling
  Eigen::VectorXd joint_q_des;
  Eigen::VectorXd joint_qd_des;
  CycleTimes times;
  bool overrun = false;
};

struct CycleResult {
  WbcOutput output;
  CycleTrace trace;
};

/**
 * One control loop. Support rows and Critical task rows each get a SingleAxisMpc; Normal
 * tasks use PD laws. Critical joint tasks track the joint trajectory predicted from the measured
 * state by the contact-consistent forward dynamics of the previous cycle's torques, solved
 * without the joint tasks and with the uncommanded directions damped; Critical frame tasks track
 * their reference position.
 *
 * Axis-to-participant assignment is static (axis j on participant j mod workers) and never
 * changes the result.
 */
class MixedController {
 public:
  MixedController(const RobotModel& model, MixedConfig config);

  /// Anchors the support at the current pose and rests every axis on its measurement.
  void reset(const RobotState& state, long step = 0);

  /// References that hold the current pose of every task.
  std::vector<TaskReference> hold_references(const RobotState& state) const;

  CycleResult run_cycle(const RobotState& state, const std::vector<TaskReference>& references);

  const MixedConfig& config() const { return config_; }
  const RobotModel& model() const { return model_; }
  const std::vector<std::string>& axis_names() const { return axis_names_; }
  int support_axes() const { return foot_dim_; }

 private:
  struct Axis {
    int task = -1;  // -1 for the support
    int row = 0;
    std::unique_ptr<SingleAxisMpc> mpc;
  };

  const RobotModel& model_;
  MixedConfig config_;
  int foot_dim_ = 0;
  std::vector<Axis> axes_;
  std::vector<std::string> axis_names_;
  std::vector<int> joint_tasks_;
  std::vector<std::string> limited_joints_;
  TaskHierarchy free_hierarchy_;
  WorkerPool pool_;
  Eigen::VectorXd anchor_;
  Eigen::VectorXd F_bar_prev_;
  Eigen::VectorXd gamma_free_;
  std::vector<std::pair<double, double>> joint_limits_;
  long step_ = 0;
  bool ready_ = false;
};

/// Average and maximum of one timing column.
struct TimingStat {
  double average = 0.0;
  double maximum = 0.0;
  long argmax = 0;
};

struct TimingReport {
  TimingStat mixed_main, mixed_worker, nsp, total;
  long cycles = 0;
  long overruns = 0;
  double sum_of_module_maxima = 0.0;

  std::string to_text() const;
};

/// Throws RuntimeError on an empty input.
TimingReport timing_report(const std::vector<CycleTimes>& times, double budget_us = 1750.0);

}  // namespace mixed
