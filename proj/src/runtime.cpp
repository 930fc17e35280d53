#include "mixed/runtime.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <exception>
#include <iomanip>
#include <sstream>

namespace mixed {

namespace {

using Clock = std::chrono::steady_clock;

double micros_since(Clock::time_point t0) {
  return std::chrono::duration<double, std::micro>(Clock::now() - t0).count();
}

Vector6d pose_coordinates(const FramePose& pose) {
  const Eigen::AngleAxisd aa(pose.R);
  Vector6d x;
  x << pose.p, aa.angle() * aa.axis();
  return x;
}

const char* const kRowLabels[6] = {"Fx", "Fy", "Fz", "tx", "ty", "tz"};

}  // namespace

BudgetOverrun::BudgetOverrun(long s, double us)
    : RuntimeError("cycle " + std::to_string(s) + " took " + std::to_string(us) + " us, over budget"),
      step(s),
      elapsed_us(us) {}

PdGains PdGains::uniform(int n, double kp, double kd) {
  return {Eigen::VectorXd::Constant(n, kp), Eigen::VectorXd::Constant(n, kd)};
}

void PdGains::validate() const {
  if (Kp.size() != Kd.size()) throw RuntimeError("PD gains: Kp and Kd sizes differ");
  if (!(Kp.array() > 0.0).all() || !(Kd.array() >= 0.0).all())
    throw RuntimeError("PD gains: Kp must be positive and Kd non-negative");
}

Eigen::VectorXd pd_accel(const Eigen::VectorXd& x_ref, const Eigen::VectorXd& dx_ref, const Eigen::VectorXd& x,
                         const Eigen::VectorXd& dx, const PdGains& gains) {
  const auto n = x.size();
  if (x_ref.size() != n || dx_ref.size() != n || dx.size() != n || gains.Kp.size() != n || gains.Kd.size() != n)
    throw RuntimeError("pd_accel: dimension mismatch");
  return gains.Kp.cwiseProduct(x_ref - x) + gains.Kd.cwiseProduct(dx_ref - dx);
}

void BudgetPolicy::validate() const {
  if (!(budget_us > 0.0)) throw RuntimeError("budget must be positive");
}

WorkerPool::WorkerPool(int size) : size_(size) {
  if (size < 1) throw RuntimeError("worker pool needs at least one participant");
  for (int w = 1; w < size; ++w) threads_.emplace_back([this, w] { loop(w); });
}

WorkerPool::~WorkerPool() {
  {
    std::lock_guard<std::mutex> lock(mu_);
    stop_ = true;
  }
  start_cv_.notify_all();
  for (auto& t : threads_) t.join();
}

void WorkerPool::run(const std::function<void(int)>& job) {
  if (size_ == 1) {
    job(0);
    return;
  }
  {
    std::lock_guard<std::mutex> lock(mu_);
    job_ = &job;
    pending_ = size_ - 1;
    ++generation_;
  }
  start_cv_.notify_all();
  std::exception_ptr error;
  try {
    job(0);
  } catch (...) {
    error = std::current_exception();
  }
  std::unique_lock<std::mutex> lock(mu_);
  done_cv_.wait(lock, [this] { return pending_ == 0; });
  job_ = nullptr;
  if (error) std::rethrow_exception(error);
}

void WorkerPool::loop(int w) {
  long seen = 0;
  for (;;) {
    const std::function<void(int)>* job = nullptr;
    {
      std::unique_lock<std::mutex> lock(mu_);
      start_cv_.wait(lock, [&] { return stop_ || generation_ != seen; });
      if (stop_) return;
      seen = generation_;
      job = job_;
    }
    // Jobs handed to the pool report their own failures; a throw here must not kill the loop.
    try {
      (*job)(w);
    } catch (...) {
    }
    std::lock_guard<std::mutex> lock(mu_);
    if (--pending_ == 0) done_cv_.notify_one();
  }
}

Eigen::VectorXd task_position(const RobotModel& model, const RobotState& state, const TaskSpec& task) {
  Eigen::VectorXd x(task.dimension());
  if (task.frame.empty()) {
    for (size_t i = 0; i < task.joints.size(); ++i)
      x[static_cast<Eigen::Index>(i)] = state.q[model.joint_position_index(task.joints[i])];
    return x;
  }
  const Vector6d full = pose_coordinates(frame_pose(model, state.q, task.frame));
  for (size_t i = 0; i < task.rows.size(); ++i) x[static_cast<Eigen::Index>(i)] = full[task.rows[i]];
  return x;
}

Eigen::VectorXd support_position(const RobotModel& model, const RobotState& state, const ContactSet& contacts) {
  std::vector<double> rows;
  for (const auto& c : contacts) {
    const Vector6d full = pose_coordinates(frame_pose(model, state.q, c.frame));
    for (int r : c.rows) rows.push_back(full[r]);
  }
  return Eigen::Map<Eigen::VectorXd>(rows.data(), static_cast<Eigen::Index>(rows.size()));
}

void MixedConfig::validate(const RobotModel& model) const {
  hierarchy.validate(model);
  if (gains.size() != hierarchy.tasks.size()) throw RuntimeError("one PD gain set per task required");
  if (!(null_space_damping >= 0.0)) throw RuntimeError("null-space damping must be non-negative");
  for (size_t k = 0; k < hierarchy.tasks.size(); ++k) {
    const auto& t = hierarchy.tasks[k];
    if (t.kind != TaskKind::Normal) continue;
    if (gains[k].Kp.size() != t.dimension()) throw RuntimeError("PD gains of task '" + t.name + "' have wrong size");
    gains[k].validate();
  }
  foot_mpc.validate();
  task_mpc.validate();
  if (foot_mpc.dt != task_mpc.dt) throw RuntimeError("support and task MPCs must share the servo period");
  for (const auto& [name, rows] : limits) {
    const auto it = std::find_if(hierarchy.tasks.begin(), hierarchy.tasks.end(),
                                 [&](const TaskSpec& t) { return t.name == name; });
    if (it == hierarchy.tasks.end() || it->kind != TaskKind::Critical)
      throw RuntimeError("limits given for '" + name + "', which is not a critical task");
    if (static_cast<int>(rows.size()) != it->dimension())
      throw RuntimeError("limits of '" + name + "' need one (lb, ub) pair per row");
    for (const auto& [lb, ub] : rows)
      if (!(lb <= ub)) throw RuntimeError("limits of '" + name + "' have lb > ub");
  }
  foot.validate();
  if (workers < 1) throw RuntimeError("workers must be at least 1");
  budget.validate();
}

MixedController::MixedController(const RobotModel& model, MixedConfig config)
    : model_(model), config_(std::move(config)), pool_((config_.validate(model), config_.workers)) {
  const auto& h = config_.hierarchy;
  foot_dim_ = h.foot_dimension();
  if (config_.foot_mpc_enabled) {
    int r = 0;
    for (const auto& c : h.foot)
      for (int row : c.rows) {
        axes_.push_back({-1, r++, std::make_unique<SingleAxisMpc>(config_.foot_mpc)});
        axis_names_.push_back(c.frame + "_" + kRowLabels[row]);
      }
  }
  for (size_t k = 0; k < h.tasks.size(); ++k) {
    const auto& t = h.tasks[k];
    if (t.kind != TaskKind::Critical) continue;
    const auto lim = std::find_if(config_.limits.begin(), config_.limits.end(),
                                  [&](const auto& l) { return l.first == t.name; });
    for (int r = 0; r < t.dimension(); ++r) {
      MpcAxisConfig cfg = config_.task_mpc;
      if (lim != config_.limits.end()) {
        cfg.bounds.Y_lb = lim->second[static_cast<size_t>(r)].first;
        cfg.bounds.Y_ub = lim->second[static_cast<size_t>(r)].second;
      }
      axes_.push_back({static_cast<int>(k), r, std::make_unique<SingleAxisMpc>(cfg)});
      axis_names_.push_back(t.frame.empty() ? t.joints[static_cast<size_t>(r)] : t.name + "_" + std::to_string(r));
    }
    if (t.frame.empty()) {
      joint_tasks_.push_back(static_cast<int>(k));
      limited_joints_.insert(limited_joints_.end(), t.joints.begin(), t.joints.end());
      for (int r = 0; r < t.dimension(); ++r)
        joint_limits_.push_back(lim != config_.limits.end() ? lim->second[static_cast<size_t>(r)]
                                                            : std::make_pair(-kInf, kInf));
    }
  }
  // Without the joint tasks the set-point shows where the other tasks drive the joints;
  // directions nobody commands are held by null-space damping.
  free_hierarchy_ = h.without([](const TaskSpec& t) { return t.kind == TaskKind::Critical && t.frame.empty(); });
}

void MixedController::reset(const RobotState& state, long step) {
  validate_state(model_, state);
  const auto& h = config_.hierarchy;
  const auto snap = make_snapshot(model_, state, h);
  anchor_ = support_position(model_, state, h.foot);
  F_bar_prev_ = foot_wrench(snap, Eigen::VectorXd::Zero(foot_dim_)).F_ideal;
  gamma_free_ = snap.V;
  const Eigen::VectorXd foot_rate = snap.foot.J * state.qd;
  for (auto& a : axes_) {
    if (a.task < 0) {
      a.mpc->reset(0.0, -foot_rate[a.row]);
    } else {
      const auto& t = h.tasks[static_cast<size_t>(a.task)];
      const Eigen::VectorXd x = task_position(model_, state, t);
      a.mpc->reset(x[a.row], (snap.tasks[static_cast<size_t>(a.task)].J * state.qd)[a.row]);
    }
  }
  step_ = step;
  ready_ = true;
}

std::vector<TaskReference> MixedController::hold_references(const RobotState& state) const {
  std::vector<TaskReference> refs;
  for (const auto& t : config_.hierarchy.tasks)
    refs.push_back({task_position(model_, state, t), Eigen::VectorXd::Zero(t.dimension())});
  return refs;
}

CycleResult MixedController::run_cycle(const RobotState& state, const std::vector<TaskReference>& references) {
  if (!ready_) throw RuntimeError("run_cycle before reset");
  const auto& h = config_.hierarchy;
  if (references.size() != h.tasks.size()) throw RuntimeError("one reference per task required");
  const auto t_start = Clock::now();

  // Dynamics quantities belong to the whole-body controller's share of the cycle.
  const auto snap = make_snapshot(model_, state, h);
  const FootWrench ideal = foot_wrench(snap, Eigen::VectorXd::Zero(foot_dim_));
  const double dynamics_us = micros_since(t_start);
  const auto t_prep = Clock::now();
  const StackedBounds wrench_box = support_bounds(h.foot, F_bar_prev_, config_.foot, step_ - 1);
  const AxisBounds support_box = grf_bounds_to_axis_bounds(wrench_box, ideal.Lambda, ideal.F_ideal);

  JointReference joint_ref;
  if (!limited_joints_.empty()) {
    joint_ref = joint_reference_setpoint(model_, state, gamma_free_, h.foot, limited_joints_, config_.task_mpc.dt,
                                         config_.task_mpc.Np, joint_limits_);
  }

  // Measurements and reference windows, prepared before the parallel section.
  const size_t n_axes = axes_.size();
  std::vector<double> ys(n_axes), yds(n_axes);
  std::vector<std::vector<double>> windows(n_axes);
  const Eigen::VectorXd foot_pos = support_position(model_, state, h.foot) - anchor_;
  const Eigen::VectorXd foot_rate = snap.foot.J * state.qd;
  std::vector<Eigen::VectorXd> task_x(h.tasks.size()), task_xd(h.tasks.size());
  for (size_t k = 0; k < h.tasks.size(); ++k) {
    task_x[k] = task_position(model_, state, h.tasks[k]);
    task_xd[k] = snap.tasks[k].J * state.qd;
  }
  int joint_row = 0;
  for (size_t j = 0; j < n_axes; ++j) {
    auto& a = axes_[j];
    if (a.task < 0) {
      ys[j] = -foot_pos[a.row];
      yds[j] = -foot_rate[a.row];
      windows[j].assign(static_cast<size_t>(config_.foot_mpc.Np), 0.0);
      MpcBounds b = config_.foot_mpc.bounds;
      b.U_lb = std::max(b.U_lb, support_box.U_lb[a.row]);
      b.U_ub = std::min(b.U_ub, support_box.U_ub[a.row]);
      if (b.U_lb > b.U_ub) b.U_lb = b.U_ub = std::clamp(0.0, support_box.U_lb[a.row], support_box.U_ub[a.row]);
      a.mpc->set_bounds(b);
    } else {
      const auto k = static_cast<size_t>(a.task);
      ys[j] = task_x[k][a.row];
      yds[j] = task_xd[k][a.row];
      if (h.tasks[k].frame.empty())
        windows[j] = joint_ref.windows[static_cast<size_t>(joint_row++)];
      else
        windows[j].assign(static_cast<size_t>(config_.task_mpc.Np), references[k].x[a.row]);
    }
  }

  const double prep_us = micros_since(t_prep);

  // Parallel section: each participant solves its statically assigned axes.
  std::vector<MpcStepResult> results(n_axes);
  std::vector<double> share_us(static_cast<size_t>(pool_.size()), 0.0);
  const int P = pool_.size();
  std::vector<std::exception_ptr> errors(static_cast<size_t>(P));
  pool_.run([&](int w) {
    const auto t0 = Clock::now();
    try {
      for (size_t j = static_cast<size_t>(w); j < n_axes; j += static_cast<size_t>(P))
        results[j] = axes_[j].mpc->step(ys[j], yds[j], windows[j]);
    } catch (...) {
      errors[static_cast<size_t>(w)] = std::current_exception();
    }
    share_us[static_cast<size_t>(w)] = micros_since(t0);
  });
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);

  const auto t_pd = Clock::now();
  Eigen::VectorXd U_foot = Eigen::VectorXd::Zero(foot_dim_);
  std::vector<Eigen::VectorXd> accels(h.tasks.size());
  for (size_t k = 0; k < h.tasks.size(); ++k) {
    if (h.tasks[k].kind == TaskKind::Normal) {
      const auto& ref = references[k];
      accels[k] = pd_accel(ref.x, ref.xd, task_x[k], task_xd[k], config_.gains[k]);
    } else {
      accels[k] = Eigen::VectorXd::Zero(h.tasks[k].dimension());
    }
  }
  for (size_t j = 0; j < n_axes; ++j) {
    const auto& a = axes_[j];
    if (a.task < 0)
      U_foot[a.row] = results[j].U;
    else
      accels[static_cast<size_t>(a.task)][a.row] = results[j].U;
  }
  const double pd_us = micros_since(t_pd);

  const auto t_nsp = Clock::now();
  CycleResult res;
  res.output = solve_hierarchy(model_, snap, h, U_foot, accels);
  if (!joint_tasks_.empty()) {
    DynamicsSnapshot free_snap = snap;
    std::vector<Eigen::VectorXd> free_accels;
    free_snap.tasks.clear();
    for (size_t k = 0; k < h.tasks.size(); ++k) {
      if (std::find(joint_tasks_.begin(), joint_tasks_.end(), static_cast<int>(k)) != joint_tasks_.end()) continue;
      free_snap.tasks.push_back(snap.tasks[k]);
      free_accels.push_back(accels[k]);
    }
    WbcOptions free_options;
    free_options.null_space_damping = config_.null_space_damping;
    gamma_free_ = solve_hierarchy(model_, free_snap, free_hierarchy_, U_foot, free_accels, free_options).gamma;
  } else {
    gamma_free_ = res.output.gamma;
  }
  const double nsp_us = micros_since(t_nsp);

  auto& tr = res.trace;
  tr.step = step_;
  for (const auto& t : res.output.tasks) {
    tr.task_commanded.push_back(t.commanded);
    tr.task_achieved.push_back(t.achieved);
  }
  tr.foot_commanded = U_foot;
  tr.foot_achieved = res.output.foot_achieved;
  tr.foot_position = foot_pos;
  for (size_t j = 0; j < n_axes; ++j) {
    const auto& r = results[j];
    tr.axes.push_back({ys[j], windows[j].front(), r.U, r.dU, r.status, r.fallback, r.iterations});
  }
  tr.F_bar = ideal.F_ideal;
  tr.F_foot = res.output.F_foot;
  const auto prev = split_support_wrench(h.foot, F_bar_prev_);
  const auto now = split_support_wrench(h.foot, res.output.F_foot);
  const Eigen::VectorXd coupling = decoupling_residual(ideal.Lambda, U_foot);
  tr.decoupling = coupling.size() ? coupling.maxCoeff() : 0.0;
  tr.zmp_band.resize(static_cast<Eigen::Index>(h.foot.size()));
  tr.tau_x.resize(static_cast<Eigen::Index>(h.foot.size()));
  for (size_t c = 0; c < h.foot.size(); ++c) {
    tr.zmp_band[static_cast<Eigen::Index>(c)] = config_.foot.d_z * prev[c][kFy];
    tr.tau_x[static_cast<Eigen::Index>(c)] = now[c][kTx];
  }
  tr.joint_q_des = joint_ref.q_des;
  tr.joint_qd_des = joint_ref.qd_des;

  F_bar_prev_ = ideal.F_ideal;
  ++step_;

  tr.times.mixed_main_us = prep_us + share_us[0] + pd_us;
  for (size_t w = 1; w < share_us.size(); ++w) tr.times.mixed_worker_us = std::max(tr.times.mixed_worker_us, share_us[w]);
  tr.times.nsp_us = dynamics_us + nsp_us;
  tr.times.total_us = micros_since(t_start);
  tr.overrun = tr.times.total_us > config_.budget.budget_us;
  if (tr.overrun && config_.budget.action == BudgetAction::Abort) throw BudgetOverrun(tr.step, tr.times.total_us);
  return res;
}

TimingReport timing_report(const std::vector<CycleTimes>& times, double budget_us) {
  if (times.empty()) throw RuntimeError("timing report of an empty trace");
  TimingReport rep;
  rep.cycles = static_cast<long>(times.size());
  auto fill = [&](TimingStat& s, double CycleTimes::*field) {
    double sum = 0.0;
    s.maximum = -1.0;
    for (size_t i = 0; i < times.size(); ++i) {
      const double v = times[i].*field;
      sum += v;
      if (v > s.maximum) {
        s.maximum = v;
        s.argmax = static_cast<long>(i);
      }
    }
    s.average = sum / static_cast<double>(times.size());
  };
  fill(rep.mixed_main, &CycleTimes::mixed_main_us);
  fill(rep.mixed_worker, &CycleTimes::mixed_worker_us);
  fill(rep.nsp, &CycleTimes::nsp_us);
  fill(rep.total, &CycleTimes::total_us);
  rep.sum_of_module_maxima = rep.mixed_main.maximum + rep.mixed_worker.maximum + rep.nsp.maximum;
  for (const auto& t : times)
    if (t.total_us > budget_us) ++rep.overruns;
  return rep;
}

std::string TimingReport::to_text() const {
  std::ostringstream os;
  os << std::fixed << std::setprecision(2);
  os << "module            average_us   maximum_us   max_cycle\n";
  auto line = [&](const char* name, const TimingStat& s) {
    os << std::left << std::setw(16) << name << std::right << std::setw(12) << s.average << std::setw(13) << s.maximum
       << std::setw(12) << s.argmax << "\n";
  };
  line("mixed_main", mixed_main);
  line("mixed_worker", mixed_worker);
  line("nsp", nsp);
  line("total", total);
  os << "cycles " << cycles << ", overruns " << overruns << ", sum of module maxima " << sum_of_module_maxima
     << " us, total maximum " << total.maximum << " us\n";
  return os.str();
}

}  // namespace mixed
