#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "mixed/runtime.hpp"

namespace mixed {

/// Invalid scenario configuration; the message names the offending key.
struct ScenarioError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline constexpr const char* kCodeVersion = "mixed-control 1.0.0";

/// Rows of numbers with named columns, written as CSV.
struct TraceTable {
  std::vector<std::string> columns;
  std::vector<std::vector<double>> rows;

  void add(std::vector<double> row);
};

/// Header plus one line per row, values printed with %.17g.
std::string to_csv(const TraceTable& table);

/// 64-bit FNV-1a, used to fingerprint configurations in run manifests.
std::uint64_t fnv1a(const std::string& text);

struct RunManifest {
  std::string scenario;
  std::string config_text;
  std::uint64_t seed = 0;
  int workers = 1;
};

/**
 * Writes <dir>/<stem>.csv for every table and <dir>/manifest.json with the config hash, seed
 * and code version. Creates `dir` if needed; throws ScenarioError on I/O failure.
 */
void emit_traces(const std::vector<std::pair<std::string, TraceTable>>& tables, const std::string& dir,
                 const RunManifest& manifest);

/// Piecewise-linear wrench at a frame: each segment ramps from `from` to `to` over [start, end).
struct ForceSegment {
  double start = 0.0;
  double end = 0.0;
  Vector6d from = Vector6d::Zero();
  Vector6d to = Vector6d::Zero();
};

struct ForceProfile {
  std::string frame = "hand";
  std::vector<ForceSegment> segments;

  /// Throws ScenarioError on overlapping, reversed or non-finite segments.
  void validate() const;
  Vector6d at(double t) const;
  ForceProfile scaled(double k) const;
};

struct AdmittanceParams {
  double M = 5.0;
  double D = 40.0;
  double K = 0.0;
};

/**
 * M xdd + D xd + K x = F per axis, discretized exactly for a force held over each step, so a
 * step response agrees with the continuous solution at the sample instants.
 */
class Admittance {
 public:
  Admittance(const AdmittanceParams& params, int dim, double dt);
  void reset();
  void step(const Eigen::VectorXd& force);
  const Eigen::VectorXd& x() const { return x_; }
  const Eigen::VectorXd& xd() const { return xd_; }

 private:
  Eigen::Matrix2d Ad_;
  Eigen::Vector2d Bd_;
  Eigen::VectorXd x_;
  Eigen::VectorXd xd_;
};

// ---------------------------------------------------------------- bounded 1D tracking

struct Fig3Config {
  double dt = 0.002;
  double duration = 4.0;
  double amplitude = 0.2;
  double frequency = 0.5;
  double m_bar = 1.0;
  int Np = 20;
  int Nc = 5;
  double R = 1e-6;
  double jerk_limit = 1000.0;  // per-step increment bound is jerk_limit * dt
  double U_lb = -15.0, U_ub = 15.0;
  double Y_lb = -0.1, Y_ub = 0.1;
  double baseline_kp = 400.0;
  double baseline_kd = 40.0;

  void validate() const;
};

Fig3Config parse_fig3_config(const std::string& json_text);

struct ControllerSummary {
  double peak_abs_x = 0.0;
  double peak_jerk = 0.0;        // max |U_n - U_{n-1}| / dt
  double max_abs_dU = 0.0;
  double violation_integral = 0.0;  // integral of the output-bound excess, m s
  int fallbacks = 0;
};

struct Fig3Report {
  ControllerSummary mpc;
  ControllerSummary baseline;
  double dU_bound = 0.0;
  TraceTable trace;  // t, ref, x/xd/U per controller
};

/// One-dimensional comparison of the receding-horizon MPC and the one-step baseline.
Fig3Report run_fig3(const Fig3Config& config);

// ---------------------------------------------------------------- compliance

struct DragSpec {
  std::string task = "hand";
  Eigen::VectorXd direction;  // in the task's rows, normalized on use
  double target = 0.4;        // reference displacement reached at `until`
  double until = 2.0;
};

struct ComplianceConfig {
  std::string model = "models/planar_humanoid.json";
  double dt = 0.002;
  double duration = 3.0;
  std::uint64_t seed = 1;
  /// Standard deviation of the initial joint offsets drawn from `seed` (rad).
  double initial_noise = 0.0;
  std::map<std::string, double> home;  // joint positions, the base is lowered onto the soles
  MixedConfig controller;
  AdmittanceParams admittance;
  /// Either a calibrated drag or an explicit force profile.
  std::optional<DragSpec> drag;
  ForceProfile force;
  double plant_mass_scale = 1.0;
  double fall_fraction = 0.8;
  bool stop_on_fall = true;
  std::string config_text;

  void validate() const;
};

/// Parses the JSON schema documented in configs/README.md. Relative model paths resolve
/// against `base_dir`.
ComplianceConfig parse_compliance_config(const std::string& json_text, const std::string& base_dir = ".");

/// Bisects the force magnitude so that the admittance reference travels `target` by `until`.
double calibrate_drag(const ComplianceConfig& config, const RobotModel& model, const RobotState& home);

struct ComplianceReport {
  long steps = 0;
  bool fell = false;
  long fall_step = -1;
  double drag_force = 0.0;
  std::map<std::string, std::pair<double, double>> joint_range;  // limited joints: (min, max)
  double joint_bound_excess = 0.0;   // worst excursion beyond any joint limit, rad
  double zmp_worst_excess = 0.0;     // worst |tau_x| - band, N m
  double zmp_worst_allowance = 0.0;  // coupling + 5 % of the band width at that step
  bool zmp_within_allowance = true;
  double max_decoupling = 0.0;
  double hand_displacement = 0.0;      // achieved, at the end of the drag
  double reference_displacement = 0.0;
  double foot_residual_rms = 0.0;      // support coordinates off their anchors
  double foot_residual_max = 0.0;
  double energy_start = 0.0;
  double energy_max = 0.0;
  int fallbacks = 0;
  TraceTable trace;
  TraceTable timing;
  std::vector<CycleTimes> times;
};

/// Mass and inertia of every link multiplied by `scale`.
RobotModel scaled_model(const RobotModel& model, double scale);

/// Home pose from joint positions with the base lowered until the first support touches y = 0.
RobotState make_home(const RobotModel& model, const std::map<std::string, double>& joints, const ContactSet& support);

/// Closed-loop drag of the planar humanoid under the mixed controller.
ComplianceReport run_compliance(const ComplianceConfig& config);

std::string summarize(const Fig3Report& report);
std::string summarize(const ComplianceReport& report, const ComplianceConfig& config);

}  // namespace mixed
