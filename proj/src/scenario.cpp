#include "mixed/scenario.hpp"

#include <json.hpp>
#include <unsupported/Eigen/MatrixFunctions>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <random>
#include <sstream>

namespace mixed {

using nlohmann::json;

// ---------------------------------------------------------------- traces

void TraceTable::add(std::vector<double> row) {
  if (row.size() != columns.size())
    throw ScenarioError("trace row has " + std::to_string(row.size()) + " values for " +
                        std::to_string(columns.size()) + " columns");
  rows.push_back(std::move(row));
}

std::string to_csv(const TraceTable& table) {
  std::string out;
  for (size_t i = 0; i < table.columns.size(); ++i) out += (i ? "," : "") + table.columns[i];
  out += "\n";
  char buf[40];
  for (const auto& row : table.rows) {
    for (size_t i = 0; i < row.size(); ++i) {
      std::snprintf(buf, sizeof buf, "%.17g", row[i]);
      if (i) out += ",";
      out += buf;
    }
    out += "\n";
  }
  return out;
}

std::uint64_t fnv1a(const std::string& text) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

void emit_traces(const std::vector<std::pair<std::string, TraceTable>>& tables, const std::string& dir,
                 const RunManifest& manifest) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw ScenarioError("cannot create output directory '" + dir + "': " + ec.message());
  auto write = [&](const std::string& name, const std::string& text) {
    const auto path = std::filesystem::path(dir) / name;
    std::ofstream f(path, std::ios::binary);
    f << text;
    f.close();
    if (!f) throw ScenarioError("cannot write '" + path.string() + "'");
  };
  json files = json::array();
  for (const auto& [stem, table] : tables) {
    write(stem + ".csv", to_csv(table));
    files.push_back(stem + ".csv");
  }
  char hash[17];
  std::snprintf(hash, sizeof hash, "%016llx", static_cast<unsigned long long>(fnv1a(manifest.config_text)));
  const json m = {{"scenario", manifest.scenario},
                  {"config_fnv1a", hash},
                  {"seed", manifest.seed},
                  {"workers", manifest.workers},
                  {"code_version", kCodeVersion},
                  {"files", files}};
  write("manifest.json", m.dump(2) + "\n");
}

// ---------------------------------------------------------------- force and admittance

void ForceProfile::validate() const {
  auto sorted = segments;
  std::sort(sorted.begin(), sorted.end(), [](const auto& a, const auto& b) { return a.start < b.start; });
  for (size_t i = 0; i < sorted.size(); ++i) {
    const auto& s = sorted[i];
    if (!std::isfinite(s.start) || !std::isfinite(s.end) || !s.from.allFinite() || !s.to.allFinite())
      throw ScenarioError("force segment with non-finite values");
    if (!(s.end > s.start)) throw ScenarioError("force segment must end after it starts");
    if (i && s.start < sorted[i - 1].end) throw ScenarioError("force segments overlap");
  }
}

Vector6d ForceProfile::at(double t) const {
  for (const auto& s : segments)
    if (t >= s.start && t < s.end) return s.from + (s.to - s.from) * ((t - s.start) / (s.end - s.start));
  return Vector6d::Zero();
}

ForceProfile ForceProfile::scaled(double k) const {
  ForceProfile p = *this;
  for (auto& s : p.segments) {
    s.from *= k;
    s.to *= k;
  }
  return p;
}

Admittance::Admittance(const AdmittanceParams& params, int dim, double dt) {
  if (!(params.M > 0.0)) throw ScenarioError("admittance mass must be positive");
  if (params.D < 0.0 || params.K < 0.0) throw ScenarioError("admittance damping and stiffness must be non-negative");
  if (!(dt > 0.0)) throw ScenarioError("admittance dt must be positive");
  // Zero-order-hold discretization via the exponential of the input-augmented system.
  Eigen::Matrix3d A = Eigen::Matrix3d::Zero();
  A(0, 1) = 1.0;
  A(1, 0) = -params.K / params.M;
  A(1, 1) = -params.D / params.M;
  A(1, 2) = 1.0 / params.M;
  const Eigen::Matrix3d E = (A * dt).exp();
  Ad_ = E.topLeftCorner<2, 2>();
  Bd_ = E.topRightCorner<2, 1>();
  x_ = Eigen::VectorXd::Zero(dim);
  xd_ = Eigen::VectorXd::Zero(dim);
}

void Admittance::reset() {
  x_.setZero();
  xd_.setZero();
}

void Admittance::step(const Eigen::VectorXd& force) {
  if (force.size() != x_.size()) throw ScenarioError("admittance force has the wrong dimension");
  if (!force.allFinite()) throw ScenarioError("admittance force is not finite");
  for (Eigen::Index i = 0; i < x_.size(); ++i) {
    const Eigen::Vector2d s = Ad_ * Eigen::Vector2d(x_[i], xd_[i]) + Bd_ * force[i];
    x_[i] = s[0];
    xd_[i] = s[1];
  }
}

// ---------------------------------------------------------------- JSON helpers

namespace {

template <class T>
T get(const json& j, const std::string& key, const T& fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ScenarioError("config key '" + key + "': " + e.what());
  }
}

template <class T>
T require(const json& j, const std::string& key) {
  if (!j.contains(key)) throw ScenarioError("config key '" + key + "' is required");
  return get<T>(j, key, T{});
}

json parse_json(const std::string& text) {
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    throw ScenarioError(std::string("config is not valid JSON: ") + e.what());
  }
}

void expect_scenario(const json& j, const std::string& name) {
  const auto s = get<std::string>(j, "scenario", name);
  if (s != name) throw ScenarioError("config key 'scenario' is '" + s + "', expected '" + name + "'");
}

Vector6d vec6(const json& j, const std::string& key) {
  const auto v = get<std::vector<double>>(j, key, std::vector<double>(6, 0.0));
  if (v.size() != 6) throw ScenarioError("config key '" + key + "' needs 6 values");
  return Eigen::Map<const Vector6d>(v.data());
}

MpcBounds axis_bounds(const json& j, const std::string& key, const MpcBounds& fallback) {
  if (!j.contains(key)) return fallback;
  const json& b = j.at(key);
  MpcBounds out = fallback;
  const double dU = get<double>(b, "dU", fallback.dU_ub);
  const double U = get<double>(b, "U", fallback.U_ub);
  out.dU_lb = -dU;
  out.dU_ub = dU;
  out.U_lb = -U;
  out.U_ub = U;
  return out;
}

}  // namespace

// ---------------------------------------------------------------- bounded 1D tracking

void Fig3Config::validate() const {
  if (!(dt > 0.0)) throw ScenarioError("fig3: 'dt' must be positive");
  if (!(duration > 0.0)) throw ScenarioError("fig3: 'duration' must be positive");
  if (!(frequency > 0.0)) throw ScenarioError("fig3: 'frequency' must be positive");
  if (!(m_bar > 0.0)) throw ScenarioError("fig3: 'm_bar' must be positive");
  if (Nc < 1 || Np < Nc) throw ScenarioError("fig3: need 1 <= Nc <= Np");
  if (!(R > 0.0)) throw ScenarioError("fig3: 'R' must be positive");
  if (!(jerk_limit > 0.0)) throw ScenarioError("fig3: 'jerk_limit' must be positive");
  if (!(U_lb < U_ub) || !(Y_lb < Y_ub)) throw ScenarioError("fig3: bounds need lb < ub");
  if (!(baseline_kp > 0.0) || baseline_kd < 0.0) throw ScenarioError("fig3: baseline gains invalid");
}

Fig3Config parse_fig3_config(const std::string& json_text) {
  const json j = parse_json(json_text);
  expect_scenario(j, "fig3");
  Fig3Config c;
  c.dt = get(j, "dt", c.dt);
  c.duration = get(j, "duration", c.duration);
  c.amplitude = get(j, "amplitude", c.amplitude);
  c.frequency = get(j, "frequency", c.frequency);
  c.m_bar = get(j, "m_bar", c.m_bar);
  c.Np = get(j, "Np", c.Np);
  c.Nc = get(j, "Nc", c.Nc);
  c.R = get(j, "R", c.R);
  c.jerk_limit = get(j, "jerk_limit", c.jerk_limit);
  const auto U = get<std::vector<double>>(j, "U_bounds", {c.U_lb, c.U_ub});
  const auto Y = get<std::vector<double>>(j, "Y_bounds", {c.Y_lb, c.Y_ub});
  if (U.size() != 2 || Y.size() != 2) throw ScenarioError("fig3: 'U_bounds' and 'Y_bounds' need [lb, ub]");
  c.U_lb = U[0];
  c.U_ub = U[1];
  c.Y_lb = Y[0];
  c.Y_ub = Y[1];
  if (j.contains("baseline")) {
    c.baseline_kp = get(j["baseline"], "kp", c.baseline_kp);
    c.baseline_kd = get(j["baseline"], "kd", c.baseline_kd);
  }
  c.validate();
  return c;
}

Fig3Report run_fig3(const Fig3Config& c) {
  c.validate();
  Fig3Report rep;
  rep.dU_bound = c.jerk_limit * c.dt;
  MpcAxisConfig cfg;
  cfg.dt = c.dt;
  cfg.m_bar = c.m_bar;
  cfg.Np = c.Np;
  cfg.Nc = c.Nc;
  cfg.weights.R = c.R;
  cfg.bounds = {-rep.dU_bound, rep.dU_bound, c.U_lb, c.U_ub, c.Y_lb, c.Y_ub};
  SingleAxisMpc mpc(cfg);
  const DiscretePlant plant = build_discrete_plant(c.dt, c.m_bar);
  const double w = 2.0 * std::numbers::pi * c.frequency;
  auto ref = [&](double t) { return c.amplitude * std::sin(w * t); };
  auto excess = [&](double x) { return std::max({0.0, x - c.Y_ub, c.Y_lb - x}); };

  rep.trace.columns = {"t",      "ref",   "mpc_x",  "mpc_xd",   "mpc_U",        "mpc_dU",
                       "mpc_status", "base_x", "base_xd", "base_U", "base_clamped"};
  Eigen::Vector2d s = Eigen::Vector2d::Zero(), b = Eigen::Vector2d::Zero();
  double u_prev = 0.0, bu_prev = 0.0;
  std::vector<double> window(static_cast<size_t>(c.Np));
  const long steps = std::lround(c.duration / c.dt);
  for (long n = 0; n < steps; ++n) {
    const double t = static_cast<double>(n) * c.dt;
    for (int i = 0; i < c.Np; ++i) window[static_cast<size_t>(i)] = ref(static_cast<double>(n + 1 + i) * c.dt);
    const auto r = mpc.step(s[0], s[1], window);
    if (r.fallback) ++rep.mpc.fallbacks;
    rep.mpc.peak_jerk = std::max(rep.mpc.peak_jerk, std::abs(r.U - u_prev) / c.dt);
    rep.mpc.max_abs_dU = std::max(rep.mpc.max_abs_dU, std::abs(r.U - u_prev));
    u_prev = r.U;

    const OneStepTarget tg{ref(t), c.amplitude * w * std::cos(w * t), -c.amplitude * w * w * std::sin(w * t),
                           c.baseline_kp, c.baseline_kd};
    const auto o = one_step_qp_baseline(plant, b[0], b[1], tg, cfg.bounds);
    if (n > 0) {
      rep.baseline.peak_jerk = std::max(rep.baseline.peak_jerk, std::abs(o.U - bu_prev) / c.dt);
      rep.baseline.max_abs_dU = std::max(rep.baseline.max_abs_dU, std::abs(o.U - bu_prev));
    }
    if (o.clamped) ++rep.baseline.fallbacks;
    bu_prev = o.U;

    s = plant.Ad * s + plant.Bd * r.U;
    b = plant.Ad * b + plant.Bd * o.U;
    rep.mpc.peak_abs_x = std::max(rep.mpc.peak_abs_x, std::abs(s[0]));
    rep.baseline.peak_abs_x = std::max(rep.baseline.peak_abs_x, std::abs(b[0]));
    rep.mpc.violation_integral += excess(s[0]) * c.dt;
    rep.baseline.violation_integral += excess(b[0]) * c.dt;
    rep.trace.add({t + c.dt, ref(t + c.dt), s[0], s[1], r.U, r.dU, static_cast<double>(r.status), b[0], b[1], o.U,
                   o.clamped ? 1.0 : 0.0});
  }
  return rep;
}

std::string summarize(const Fig3Report& r) {
  std::ostringstream os;
  os.precision(6);
  auto line = [&](const char* name, const ControllerSummary& s) {
    os << name << ": peak |x| " << s.peak_abs_x << " m, peak jerk " << s.peak_jerk << " m/s^3, max |dU| "
       << s.max_abs_dU << ", bound excess integral " << s.violation_integral << " m s, fallbacks " << s.fallbacks
       << "\n";
  };
  line("mpc     ", r.mpc);
  line("one-step", r.baseline);
  os << "jerk ratio " << r.baseline.peak_jerk / std::max(r.mpc.peak_jerk, 1e-300) << ", dU bound " << r.dU_bound
     << "\n";
  return os.str();
}

// ---------------------------------------------------------------- compliance

void ComplianceConfig::validate() const {
  if (!(dt > 0.0)) throw ScenarioError("compliance: 'dt' must be positive");
  if (!(duration > 0.0)) throw ScenarioError("compliance: 'duration' must be positive");
  if (controller.foot_mpc.dt != dt || controller.task_mpc.dt != dt)
    throw ScenarioError("compliance: controller dt differs from 'dt'");
  if (!(plant_mass_scale > 0.0)) throw ScenarioError("compliance: 'plant.mass_scale' must be positive");
  if (!(fall_fraction > 0.0 && fall_fraction < 1.0)) throw ScenarioError("compliance: 'fall_fraction' in (0, 1)");
  if (initial_noise < 0.0) throw ScenarioError("compliance: 'initial_noise' must be non-negative");
  force.validate();
  if (drag) {
    if (!(drag->target >= 0.0) || !(drag->until > 0.0)) throw ScenarioError("compliance: drag target/until invalid");
    if (drag->direction.size() == 0 || drag->direction.norm() == 0.0)
      throw ScenarioError("compliance: drag direction must be non-zero");
  }
}

ComplianceConfig parse_compliance_config(const std::string& text, const std::string& base_dir) {
  const json j = parse_json(text);
  expect_scenario(j, "compliance");
  ComplianceConfig c;
  c.config_text = text;
  c.model = get<std::string>(j, "model", c.model);
  if (std::filesystem::path(c.model).is_relative()) c.model = (std::filesystem::path(base_dir) / c.model).string();
  c.dt = get(j, "dt", c.dt);
  c.duration = get(j, "duration", c.duration);
  c.seed = get<std::uint64_t>(j, "seed", c.seed);
  c.initial_noise = get(j, "initial_noise", c.initial_noise);
  c.home = get<std::map<std::string, double>>(j, "home", {});

  auto& mc = c.controller;
  for (const auto& s : require<json>(j, "support"))
    mc.hierarchy.foot.push_back({require<std::string>(s, "frame"), require<std::vector<int>>(s, "rows")});
  for (const auto& t : require<json>(j, "tasks")) {
    TaskSpec spec;
    spec.name = require<std::string>(t, "name");
    spec.priority = require<int>(t, "priority");
    const auto kind = get<std::string>(t, "kind", "normal");
    if (kind != "normal" && kind != "critical")
      throw ScenarioError("task '" + spec.name + "': 'kind' must be 'normal' or 'critical'");
    spec.kind = kind == "critical" ? TaskKind::Critical : TaskKind::Normal;
    spec.frame = get<std::string>(t, "frame", "");
    spec.rows = get<std::vector<int>>(t, "rows", {});
    spec.joints = get<std::vector<std::string>>(t, "joints", {});
    mc.hierarchy.tasks.push_back(spec);
    mc.gains.push_back(PdGains::uniform(spec.dimension(), get(t, "kp", 100.0), get(t, "kd", 20.0)));
    if (t.contains("limits")) {
      std::vector<std::pair<double, double>> lim;
      for (const auto& l : get<std::vector<std::vector<double>>>(t, "limits", {})) {
        if (l.size() != 2) throw ScenarioError("task '" + spec.name + "': each limit is [lb, ub]");
        lim.emplace_back(l[0], l[1]);
      }
      mc.limits.emplace_back(spec.name, lim);
    }
  }
  const json mpc = get<json>(j, "mpc", json::object());
  for (auto* a : {&mc.foot_mpc, &mc.task_mpc}) {
    a->dt = c.dt;
    a->Np = get(mpc, "Np", a->Np);
    a->Nc = get(mpc, "Nc", a->Nc);
    a->weights.R = get(mpc, "R", 1e-6);
  }
  mc.foot_mpc.bounds = axis_bounds(mpc, "support", {-5.0, 5.0, -50.0, 50.0, -kInf, kInf});
  mc.task_mpc.bounds = axis_bounds(mpc, "task", {-5.0, 5.0, -100.0, 100.0, -kInf, kInf});
  mc.foot_mpc_enabled = get(j, "support_mpc", true);
  mc.null_space_damping = get(mpc, "null_space_damping", mc.null_space_damping);
  if (j.contains("foot")) {
    const json& f = j["foot"];
    mc.foot.d_x = get(f, "d_x", mc.foot.d_x);
    mc.foot.d_z = get(f, "d_z", mc.foot.d_z);
    mc.foot.mu = get(f, "mu", mc.foot.mu);
    mc.foot.mu_prime = get(f, "mu_prime", mc.foot.mu_prime);
  }
  mc.workers = get(j, "workers", 1);
  if (j.contains("budget")) {
    mc.budget.budget_us = get(j["budget"], "us", mc.budget.budget_us);
    const auto policy = get<std::string>(j["budget"], "policy", "record");
    if (policy != "record" && policy != "abort") throw ScenarioError("'budget.policy' must be 'record' or 'abort'");
    mc.budget.action = policy == "abort" ? BudgetAction::Abort : BudgetAction::Record;
  }
  if (j.contains("admittance")) {
    c.admittance.M = get(j["admittance"], "M", c.admittance.M);
    c.admittance.D = get(j["admittance"], "D", c.admittance.D);
    c.admittance.K = get(j["admittance"], "K", c.admittance.K);
  }
  if (j.contains("drag")) {
    const json& d = j["drag"];
    DragSpec drag;
    drag.task = get<std::string>(d, "task", drag.task);
    const auto dir = require<std::vector<double>>(d, "direction");
    drag.direction = Eigen::Map<const Eigen::VectorXd>(dir.data(), static_cast<Eigen::Index>(dir.size()));
    drag.target = get(d, "target", drag.target);
    drag.until = get(d, "until", drag.until);
    c.drag = drag;
  }
  if (j.contains("force")) {
    const json& f = j["force"];
    c.force.frame = get<std::string>(f, "frame", c.force.frame);
    for (const auto& s : get<json>(f, "segments", json::array())) {
      ForceSegment seg;
      seg.start = require<double>(s, "start");
      seg.end = require<double>(s, "end");
      seg.from = vec6(s, "from");
      seg.to = s.contains("to") ? vec6(s, "to") : seg.from;
      c.force.segments.push_back(seg);
    }
  }
  if (c.drag && !c.force.segments.empty()) throw ScenarioError("give either 'drag' or 'force', not both");
  if (j.contains("plant")) c.plant_mass_scale = get(j["plant"], "mass_scale", 1.0);
  c.fall_fraction = get(j, "fall_fraction", c.fall_fraction);
  c.stop_on_fall = get(j, "stop_on_fall", c.stop_on_fall);
  c.validate();
  return c;
}

RobotModel scaled_model(const RobotModel& model, double scale) {
  RobotModel out;
  out.set_name(model.name());
  out.set_gravity(model.gravity());
  for (Body b : model.bodies()) {
    b.mass *= scale;
    b.inertia *= scale;
    out.add_body(b);
  }
  for (const auto& [name, f] : model.frames()) out.add_frame(f);
  out.finalize();
  return out;
}

RobotState make_home(const RobotModel& model, const std::map<std::string, double>& joints, const ContactSet& support) {
  Eigen::VectorXd q = model.neutral_configuration();
  for (const auto& [name, value] : joints) q[model.joint_position_index(name)] = value;
  if (support.empty()) throw ScenarioError("home pose needs a support");
  double lowest = kInf;
  for (const auto& c : support) lowest = std::min(lowest, frame_pose(model, q, c.frame).p.y());
  const Body& root = model.bodies().front();
  int vertical = -1;
  if (root.joint == JointType::Floating) vertical = 1;
  if (root.joint == JointType::Planar) {
    if (root.axis.isApprox(Eigen::Vector3d::UnitX())) vertical = 0;
    if (root.axis.isApprox(Eigen::Vector3d::UnitZ())) vertical = 1;
  }
  if (vertical < 0) throw ScenarioError("home pose: the root cannot translate vertically");
  q[vertical] -= lowest;
  return {q, Eigen::VectorXd::Zero(model.nv())};
}

namespace {

int task_index(const TaskHierarchy& h, const std::string& name) {
  for (size_t k = 0; k < h.tasks.size(); ++k)
    if (h.tasks[k].name == name) return static_cast<int>(k);
  throw ScenarioError("no task named '" + name + "'");
}

/// Force on the dragged task's rows at time t.
Eigen::VectorXd task_force(const ComplianceConfig& c, const TaskSpec& task, double magnitude, double t) {
  if (c.drag) {
    if (t >= c.drag->until) return Eigen::VectorXd::Zero(task.dimension());
    return magnitude * c.drag->direction.normalized();
  }
  const Vector6d w = c.force.at(t);
  Eigen::VectorXd f(task.dimension());
  for (int i = 0; i < task.dimension(); ++i) f[i] = w[task.rows[static_cast<size_t>(i)]];
  return f;
}

double height_of(const RobotModel& model, const Eigen::VectorXd& q) {
  const Body& root = model.bodies().front();
  if (root.joint == JointType::Planar) return root.axis.isApprox(Eigen::Vector3d::UnitX()) ? q[0] : q[1];
  return q[1];
}

}  // namespace

double calibrate_drag(const ComplianceConfig& c, const RobotModel&, const RobotState&) {
  if (!c.drag) throw ScenarioError("calibration needs a 'drag' section");
  const long steps = std::lround(c.drag->until / c.dt);
  auto travel = [&](double f) {
    Admittance a(c.admittance, 1, c.dt);
    const Eigen::VectorXd F = Eigen::VectorXd::Constant(1, f);
    for (long n = 0; n < steps; ++n) a.step(F);
    return a.x()[0];
  };
  double lo = 0.0, hi = 1.0;
  while (travel(hi) < c.drag->target) {
    hi *= 2.0;
    if (hi > 1e9) throw ScenarioError("drag target unreachable with this admittance");
  }
  for (int i = 0; i < 200 && hi - lo > 1e-12 * hi; ++i) {
    const double mid = 0.5 * (lo + hi);
    (travel(mid) < c.drag->target ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

ComplianceReport run_compliance(const ComplianceConfig& c) {
  c.validate();
  const RobotModel model = RobotModel::load(c.model);
  const RobotModel plant = c.plant_mass_scale == 1.0 ? model : scaled_model(model, c.plant_mass_scale);
  const auto& h = c.controller.hierarchy;
  RobotState s = make_home(model, c.home, h.foot);
  if (c.initial_noise > 0.0) {
    std::mt19937_64 rng(c.seed);
    std::normal_distribution<double> N(0.0, c.initial_noise);
    const int first_joint = model.bodies().front().nq;
    for (int i = first_joint; i < model.nq(); ++i) s.q[i] += N(rng);
  }

  MixedController ctl(model, c.controller);
  ctl.reset(s);
  auto refs = ctl.hold_references(s);
  const std::string drag_task = c.drag ? c.drag->task : c.force.frame;
  int k_drag = -1;
  for (size_t k = 0; k < h.tasks.size(); ++k)
    if (h.tasks[k].name == drag_task || (!c.drag && h.tasks[k].frame == drag_task)) k_drag = static_cast<int>(k);
  if (k_drag < 0) throw ScenarioError("no task receives the external force ('" + drag_task + "')");
  const TaskSpec& dragged = h.tasks[static_cast<size_t>(k_drag)];
  if (dragged.kind != TaskKind::Normal || dragged.frame.empty())
    throw ScenarioError("the dragged task must be a Normal frame task");
  if (c.drag && c.drag->direction.size() != dragged.dimension())
    throw ScenarioError("drag direction needs one entry per row of '" + dragged.name + "'");
  const Eigen::VectorXd x0 = refs[static_cast<size_t>(k_drag)].x;

  ComplianceReport rep;
  rep.drag_force = c.drag ? calibrate_drag(c, model, s) : 0.0;
  Admittance adm(c.admittance, dragged.dimension(), c.dt);

  // Limited joints, in the controller's axis order.
  std::vector<std::pair<std::string, std::pair<double, double>>> limited;
  for (const auto& [name, rows] : c.controller.limits) {
    const TaskSpec& t = h.tasks[static_cast<size_t>(task_index(h, name))];
    if (!t.frame.empty()) continue;
    for (size_t r = 0; r < rows.size(); ++r) limited.push_back({t.joints[r], rows[r]});
  }
  for (const auto& [j, lim] : limited) rep.joint_range[j] = {kInf, -kInf};

  auto& tr = rep.trace;
  tr.columns.push_back("t");
  for (int i = 0; i < model.nq(); ++i) tr.columns.push_back("q" + std::to_string(i));
  for (int i = 0; i < model.nv(); ++i) tr.columns.push_back("qd" + std::to_string(i));
  for (const auto& a : ctl.axis_names())
    for (const char* f : {"_y", "_ref", "_U", "_dU", "_status", "_fallback"}) tr.columns.push_back(a + f);
  for (const auto& t : h.tasks)
    for (int i = 0; i < t.dimension(); ++i) {
      tr.columns.push_back(t.name + "_cmd" + std::to_string(i));
      tr.columns.push_back(t.name + "_ach" + std::to_string(i));
    }
  const int fd = ctl.support_axes();
  for (int i = 0; i < fd; ++i)
    for (const char* f : {"support_U", "support_ach", "support_pos", "F_bar", "F"})
      tr.columns.push_back(std::string(f) + std::to_string(i));
  for (const auto& ct : h.foot) {
    tr.columns.push_back(ct.frame + "_tau_x");
    tr.columns.push_back(ct.frame + "_zmp_band");
  }
  tr.columns.push_back("decoupling");
  for (int i = 0; i < dragged.dimension(); ++i) {
    tr.columns.push_back("force" + std::to_string(i));
    tr.columns.push_back("ref" + std::to_string(i));
  }
  tr.columns.push_back("base_height");
  tr.columns.push_back("energy");
  rep.timing.columns = {"step", "mixed_main_us", "mixed_worker_us", "nsp_us", "total_us"};

  const double nominal_height = height_of(model, s.q);
  auto energy = [&](const RobotState& st) { return kinetic_energy(plant, st) + potential_energy(plant, st.q); };
  rep.energy_start = rep.energy_max = energy(s);
  const long steps = std::lround(c.duration / c.dt);
  const long drag_end = c.drag ? std::lround(c.drag->until / c.dt) : -1;
  double residual_sq = 0.0;

  for (long n = 0; n < steps; ++n) {
    const double t = static_cast<double>(n) * c.dt;
    refs[static_cast<size_t>(k_drag)] = {x0 + adm.x(), adm.xd()};
    CycleResult res;
    try {
      res = ctl.run_cycle(s, refs);
    } catch (const ContactLossError&) {
      rep.fell = true;
      rep.fall_step = n;
      break;
    }
    const auto& cy = res.trace;
    rep.times.push_back(cy.times);
    rep.timing.add({static_cast<double>(n), cy.times.mixed_main_us, cy.times.mixed_worker_us, cy.times.nsp_us,
                    cy.times.total_us});

    // Margins of the commanded cycle.
    for (size_t j = 0; j < limited.size(); ++j) {
      const double q = s.q[model.joint_position_index(limited[j].first)];
      auto& range = rep.joint_range[limited[j].first];
      range.first = std::min(range.first, q);
      range.second = std::max(range.second, q);
      rep.joint_bound_excess =
          std::max({rep.joint_bound_excess, limited[j].second.first - q, q - limited[j].second.second});
    }
    for (Eigen::Index ci = 0; ci < cy.tau_x.size(); ++ci) {
      const double ex = std::abs(cy.tau_x[ci]) - cy.zmp_band[ci];
      const double allowance = cy.decoupling + 0.05 * 2.0 * cy.zmp_band[ci];
      if (ex > allowance) rep.zmp_within_allowance = false;
      if (ex > rep.zmp_worst_excess) {
        rep.zmp_worst_excess = ex;
        rep.zmp_worst_allowance = allowance;
      }
    }
    rep.max_decoupling = std::max(rep.max_decoupling, cy.decoupling);
    for (const auto& a : cy.axes) rep.fallbacks += a.fallback ? 1 : 0;
    const double resid = cy.foot_position.norm();
    residual_sq += resid * resid;
    rep.foot_residual_max = std::max(rep.foot_residual_max, resid);

    std::vector<double> row;
    row.reserve(tr.columns.size());
    row.push_back(t);
    for (int i = 0; i < model.nq(); ++i) row.push_back(s.q[i]);
    for (int i = 0; i < model.nv(); ++i) row.push_back(s.qd[i]);
    for (const auto& a : cy.axes)
      row.insert(row.end(), {a.y, a.y_ref, a.U, a.dU, static_cast<double>(a.status), a.fallback ? 1.0 : 0.0});
    for (size_t k = 0; k < h.tasks.size(); ++k)
      for (Eigen::Index i = 0; i < cy.task_commanded[k].size(); ++i) {
        row.push_back(cy.task_commanded[k][i]);
        row.push_back(cy.task_achieved[k][i]);
      }
    for (int i = 0; i < fd; ++i)
      row.insert(row.end(), {cy.foot_commanded[i], cy.foot_achieved[i], cy.foot_position[i], cy.F_bar[i], cy.F_foot[i]});
    for (Eigen::Index ci = 0; ci < cy.tau_x.size(); ++ci) {
      row.push_back(cy.tau_x[ci]);
      row.push_back(cy.zmp_band[ci]);
    }
    row.push_back(cy.decoupling);
    const Eigen::VectorXd force = task_force(c, dragged, rep.drag_force, t);
    for (int i = 0; i < dragged.dimension(); ++i) {
      row.push_back(force[i]);
      row.push_back(refs[static_cast<size_t>(k_drag)].x[i]);
    }

    s = integrate(plant, s, forward_dynamics(plant, s, res.output.gamma), c.dt);
    adm.step(force);
    rep.steps = n + 1;
    const double e = energy(s);
    rep.energy_max = std::max(rep.energy_max, e);
    row.push_back(height_of(model, s.q));
    row.push_back(e);
    tr.add(std::move(row));

    if (n + 1 == drag_end) {
      rep.hand_displacement = (task_position(model, s, dragged) - x0).norm();
      rep.reference_displacement = adm.x().norm();
    }
    if (!s.q.allFinite() || height_of(model, s.q) < c.fall_fraction * nominal_height) {
      if (!rep.fell) rep.fall_step = n;
      rep.fell = true;
      if (c.stop_on_fall) break;
    }
  }
  rep.foot_residual_rms = rep.steps ? std::sqrt(residual_sq / static_cast<double>(rep.steps)) : 0.0;
  return rep;
}

std::string summarize(const ComplianceReport& r, const ComplianceConfig& c) {
  std::ostringstream os;
  os.precision(6);
  os << "steps " << r.steps << (r.fell ? ", FELL at step " + std::to_string(r.fall_step) : ", no fall") << "\n";
  if (c.drag)
    os << "drag force " << r.drag_force << " N, reference travel " << r.reference_displacement
       << " m, achieved travel " << r.hand_displacement << " m\n";
  for (const auto& [lim_task, rows] : c.controller.limits) {
    const auto& t = c.controller.hierarchy.tasks[static_cast<size_t>(task_index(c.controller.hierarchy, lim_task))];
    for (size_t i = 0; i < rows.size() && t.frame.empty(); ++i) {
      const auto& range = r.joint_range.at(t.joints[i]);
      os << t.joints[i] << " range [" << range.first << ", " << range.second << "] rad, limits [" << rows[i].first
         << ", " << rows[i].second << "]\n";
    }
  }
  os << "joint bound excess " << r.joint_bound_excess << " rad\n";
  os << "worst tau_x beyond ZMP band " << r.zmp_worst_excess << " N m (allowance " << r.zmp_worst_allowance
     << "), within allowance: " << (r.zmp_within_allowance ? "yes" : "no") << "\n";
  os << "max decoupling " << r.max_decoupling << " N, support residual rms " << r.foot_residual_rms << " max "
     << r.foot_residual_max << "\n";
  os << "energy start " << r.energy_start << " J, max " << r.energy_max << " J, MPC fallbacks " << r.fallbacks << "\n";
  return os.str();
}

}  // namespace mixed
