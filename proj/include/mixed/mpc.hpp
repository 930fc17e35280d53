#pragma once

#include <Eigen/Dense>

#include <span>
#include <stdexcept>

#include "mixed/qp.hpp"

namespace mixed {

struct MpcConfigError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

/// Discrete double integrator with apparent mass: x+ = Ad x + Bd U, y = Cd x.
struct DiscretePlant {
  double dt = 0.0;
  double m_bar = 0.0;
  Eigen::Matrix2d Ad;
  Eigen::Vector2d Bd;
  Eigen::RowVector2d Cd;
};

DiscretePlant build_discrete_plant(double dt, double m_bar);

/// Incremental form over X = [dx; dxdot; y] driven by dU.
struct AugmentedModel {
  Eigen::Matrix3d Ae;
  Eigen::Vector3d Be;
  Eigen::RowVector3d Ce;
};

AugmentedModel build_augmented(const DiscretePlant& plant);

/// Y = F X + Phi dU, where Y stacks the outputs of steps n+1 ... n+Np and dU the first
/// Nc increments (the remaining increments are zero).
struct PredictionMatrices {
  Eigen::MatrixXd F;    // Np x 3
  Eigen::MatrixXd Phi;  // Np x Nc
  int Np = 0;
  int Nc = 0;
};

PredictionMatrices build_prediction(const AugmentedModel& aug, int Np, int Nc);

struct MpcBounds {
  double dU_lb = -kInf;
  double dU_ub = kInf;
  double U_lb = -kInf;
  double U_ub = kInf;
  double Y_lb = -kInf;
  double Y_ub = kInf;

  void validate() const;
};

struct MpcWeights {
  double R = 1.0;
};

struct MpcControllerState {
  Eigen::Vector3d X = Eigen::Vector3d::Zero();
  double U_prev = 0.0;
  WarmStart warm;
};

/**
 * Condensed-free QP over delta = [E; dU]:
 *
 *   min  E'E + R dU'dU
 *   s.t. E + Phi dU = Y_ref - F X
 *        dU_lb          <= dU_0                 <= dU_ub
 *        U_lb - U_prev  <= sum_{j<=i} dU_j      <= U_ub - U_prev     (i < Nc)
 *        Y_lb - F X     <= Phi dU               <= Y_ub - F X
 *
 * H = blockdiag(I, R I); the solver's 1/2 factor scales the cost without moving the argmin.
 */
QpProblem assemble_qp(const PredictionMatrices& pred, const MpcControllerState& state,
                      const Eigen::VectorXd& y_ref, const MpcWeights& weights, const MpcBounds& bounds);

struct MpcAxisConfig {
  double dt = 0.002;
  double m_bar = 1.0;
  int Np = 20;
  int Nc = 5;
  MpcWeights weights;
  MpcBounds bounds;

  void validate() const;
};

struct MpcStepResult {
  double U = 0.0;
  double dU = 0.0;
  QpStatus status = QpStatus::Optimal;
  /// Set when the QP was not solved to optimality. The move then comes from the same problem
  /// without output rows, or the previous action is held if that fails too.
  bool fallback = false;
  int iterations = 0;
  /// Predicted outputs for steps n+1 ... n+Np at the returned increments.
  Eigen::VectorXd predicted_Y;
};

/**
 * Receding-horizon controller for one task axis.
 *
 * Each step the caller supplies the measured output and its rate; the controller forms the
 * increment state from the previous measurement, solves the QP warm-started from the previous
 * working set and applies the first increment. On a non-optimal solve it raises `fallback` and
 * re-solves without the output rows, tracking the reference clamped into [Y_lb, Y_ub]; the
 * increment and action bounds stay hard. If that also fails the previous action is held.
 *
 * Not thread-safe; one instance per axis.
 */
class SingleAxisMpc {
 public:
  explicit SingleAxisMpc(const MpcAxisConfig& config);

  /// Resets the increment state to rest at the given measurement.
  void reset(double y, double ydot, double U = 0.0);

  /// Rebuilds the plant and prediction matrices when the apparent mass changes.
  void set_apparent_mass(double m_bar);
  void set_bounds(const MpcBounds& bounds);

  MpcStepResult step(double measured_y, double measured_ydot, std::span<const double> y_ref_window);

  const MpcAxisConfig& config() const { return config_; }
  const MpcControllerState& state() const { return state_; }
  const PredictionMatrices& prediction() const { return pred_; }
  const QpProblem& last_problem() const { return problem_; }

 private:
  void rebuild();

  MpcAxisConfig config_;
  DiscretePlant plant_;
  AugmentedModel aug_;
  PredictionMatrices pred_;
  MpcControllerState state_;
  QpSolver solver_;
  QpProblem problem_;
  double last_y_ = 0.0;
  double last_ydot_ = 0.0;
  bool initialized_ = false;
};

/// Reference and feedback gains for the one-step baseline.
struct OneStepTarget {
  double x_ref = 0.0;
  double xd_ref = 0.0;
  double xdd_ref = 0.0;
  double kp = 0.0;
  double kd = 0.0;
};

struct OneStepResult {
  double U = 0.0;
  bool clamped = false;  // one-step problem was infeasible
};

/**
 * Baseline that only looks one servo step ahead: minimizes (xdd_des - U)^2 subject to the
 * U bounds and the numerically integrated position x + xd dt + U dt^2 / (2 m_bar) staying
 * inside [Y_lb, Y_ub]. If both cannot hold, U is clamped into its own bounds toward the
 * position-feasible side.
 */
OneStepResult one_step_qp_baseline(const DiscretePlant& plant, double x, double xd,
                                   const OneStepTarget& target, const MpcBounds& bounds);

}  // namespace mixed
