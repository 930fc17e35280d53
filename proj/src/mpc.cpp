#include "mixed/mpc.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace mixed {

namespace {

void require(bool cond, const std::string& what) {
  if (!cond) throw MpcConfigError("MPC: " + what);
}

}  // namespace

DiscretePlant build_discrete_plant(double dt, double m_bar) {
  require(dt > 0.0 && std::isfinite(dt), "dt must be positive");
  require(m_bar > 0.0 && std::isfinite(m_bar), "apparent mass must be positive");
  DiscretePlant p;
  p.dt = dt;
  p.m_bar = m_bar;
  p.Ad << 1.0, dt, 0.0, 1.0;
  p.Bd << dt * dt / (2.0 * m_bar), dt / m_bar;
  p.Cd << 1.0, 0.0;
  return p;
}

AugmentedModel build_augmented(const DiscretePlant& plant) {
  AugmentedModel a;
  a.Ae.setZero();
  a.Ae.topLeftCorner<2, 2>() = plant.Ad;
  a.Ae.block<1, 2>(2, 0) = plant.Cd * plant.Ad;
  a.Ae(2, 2) = 1.0;
  a.Be.head<2>() = plant.Bd;
  a.Be[2] = plant.Cd * plant.Bd;
  a.Ce << 0.0, 0.0, 1.0;
  return a;
}

PredictionMatrices build_prediction(const AugmentedModel& aug, int Np, int Nc) {
  require(Nc >= 1 && Nc <= Np, "horizons must satisfy 1 <= Nc <= Np");
  PredictionMatrices pm;
  pm.Np = Np;
  pm.Nc = Nc;
  pm.F.resize(Np, 3);
  pm.Phi = Eigen::MatrixXd::Zero(Np, Nc);

  // markov[i] = Ce Ae^i Be
  Eigen::VectorXd markov(Np);
  Eigen::RowVector3d ce_pow = aug.Ce;  // Ce Ae^i
  for (int i = 0; i < Np; ++i) {
    markov[i] = ce_pow * aug.Be;
    ce_pow = ce_pow * aug.Ae;
    pm.F.row(i) = ce_pow;
  }
  for (int i = 0; i < Np; ++i)
    for (int j = 0; j <= std::min(i, Nc - 1); ++j) pm.Phi(i, j) = markov[i - j];
  return pm;
}

void MpcBounds::validate() const {
  auto pair = [](double lo, double hi, const char* name) {
    require(!std::isnan(lo) && !std::isnan(hi), std::string(name) + " bound is NaN");
    require(lo <= hi, std::string(name) + " lower bound exceeds upper bound");
  };
  pair(dU_lb, dU_ub, "dU");
  pair(U_lb, U_ub, "U");
  pair(Y_lb, Y_ub, "Y");
}

void MpcAxisConfig::validate() const {
  require(dt > 0.0, "dt must be positive");
  require(m_bar > 0.0, "apparent mass must be positive");
  require(Nc >= 1 && Nc <= Np, "horizons must satisfy 1 <= Nc <= Np");
  require(weights.R > 0.0, "R must be positive");
  bounds.validate();
}

QpProblem assemble_qp(const PredictionMatrices& pred, const MpcControllerState& state,
                      const Eigen::VectorXd& y_ref, const MpcWeights& weights, const MpcBounds& bounds) {
  const int Np = pred.Np;
  const int Nc = pred.Nc;
  require(y_ref.size() == Np, "reference window must have Np entries");
  require(weights.R > 0.0, "R must be positive");
  bounds.validate();

  const int n = Np + Nc;
  QpProblem qp;
  qp.H = Eigen::MatrixXd::Zero(n, n);
  qp.H.diagonal().head(Np).setConstant(1.0);
  qp.H.diagonal().tail(Nc).setConstant(weights.R);
  qp.g = Eigen::VectorXd::Zero(n);

  const Eigen::VectorXd free_response = pred.F * state.X;

  qp.Aeq.resize(Np, n);
  qp.Aeq << Eigen::MatrixXd::Identity(Np, Np), pred.Phi;
  qp.beq = y_ref - free_response;

  const int rows = 1 + Nc + Np;
  qp.Ain = Eigen::MatrixXd::Zero(rows, n);
  qp.lb.resize(rows);
  qp.ub.resize(rows);

  qp.Ain(0, Np) = 1.0;
  qp.lb[0] = bounds.dU_lb;
  qp.ub[0] = bounds.dU_ub;

  for (int i = 0; i < Nc; ++i) {
    qp.Ain.block(1 + i, Np, 1, i + 1).setOnes();
    qp.lb[1 + i] = bounds.U_lb - state.U_prev;
    qp.ub[1 + i] = bounds.U_ub - state.U_prev;
  }

  qp.Ain.block(1 + Nc, Np, Np, Nc) = pred.Phi;
  for (int i = 0; i < Np; ++i) {
    qp.lb[1 + Nc + i] = bounds.Y_lb - free_response[i];
    qp.ub[1 + Nc + i] = bounds.Y_ub - free_response[i];
  }
  return qp;
}

SingleAxisMpc::SingleAxisMpc(const MpcAxisConfig& config) : config_(config) {
  config_.validate();
  rebuild();
}

void SingleAxisMpc::rebuild() {
  plant_ = build_discrete_plant(config_.dt, config_.m_bar);
  aug_ = build_augmented(plant_);
  pred_ = build_prediction(aug_, config_.Np, config_.Nc);
}

void SingleAxisMpc::reset(double y, double ydot, double U) {
  state_.X << 0.0, 0.0, y;
  state_.U_prev = U;
  state_.warm = {};
  last_y_ = y;
  last_ydot_ = ydot;
  initialized_ = true;
}

void SingleAxisMpc::set_apparent_mass(double m_bar) {
  if (m_bar == config_.m_bar) return;
  require(m_bar > 0.0 && std::isfinite(m_bar), "apparent mass must be positive");
  config_.m_bar = m_bar;
  rebuild();
}

void SingleAxisMpc::set_bounds(const MpcBounds& bounds) {
  bounds.validate();
  config_.bounds = bounds;
}

MpcStepResult SingleAxisMpc::step(double measured_y, double measured_ydot, std::span<const double> y_ref_window) {
  require(static_cast<int>(y_ref_window.size()) == config_.Np, "reference window must have Np entries");
  if (!initialized_) reset(measured_y, measured_ydot);

  state_.X << measured_y - last_y_, measured_ydot - last_ydot_, measured_y;
  last_y_ = measured_y;
  last_ydot_ = measured_ydot;

  const Eigen::Map<const Eigen::VectorXd> y_ref(y_ref_window.data(), config_.Np);
  problem_ = assemble_qp(pred_, state_, y_ref, config_.weights, config_.bounds);
  const QpSolution sol = solver_.solve(problem_, state_.warm.empty() ? nullptr : &state_.warm);

  MpcStepResult out;
  out.status = sol.status;
  out.iterations = sol.iterations;
  Eigen::VectorXd dU = Eigen::VectorXd::Zero(config_.Nc);
  const auto& b = config_.bounds;
  if (sol.status == QpStatus::Optimal) {
    dU = sol.x.tail(config_.Nc);
    state_.warm = WarmStart::from(sol);
  } else {
    // Output rows dropped and the reference clamped into them: with U_prev inside its box
    // this problem is always feasible, and it steers back inside as hard as the input allows.
    out.fallback = true;
    state_.warm = {};
    const Eigen::VectorXd inside = y_ref.cwiseMax(b.Y_lb).cwiseMin(b.Y_ub);
    QpProblem recovery = assemble_qp(pred_, state_, inside, config_.weights, b);
    recovery.lb.tail(config_.Np).setConstant(-std::numeric_limits<double>::infinity());
    recovery.ub.tail(config_.Np).setConstant(std::numeric_limits<double>::infinity());
    const QpSolution rec = solver_.solve(recovery, nullptr);
    if (rec.status == QpStatus::Optimal) dU = rec.x.tail(config_.Nc);
  }
  // Rounding in the solver may leave the first move an ulp outside its box.
  out.dU = std::clamp(dU[0], b.dU_lb, b.dU_ub);
  out.U = state_.U_prev + out.dU;
  while (out.U - state_.U_prev > b.dU_ub || out.U - state_.U_prev < b.dU_lb)
    out.U = std::nextafter(out.U, state_.U_prev);
  if (out.U < b.U_lb || out.U > b.U_ub) out.U = std::clamp(out.U, b.U_lb, b.U_ub);
  out.dU = out.U - state_.U_prev;
  dU[0] = out.dU;
  out.predicted_Y = pred_.F * state_.X + pred_.Phi * dU;
  state_.U_prev = out.U;
  return out;
}

OneStepResult one_step_qp_baseline(const DiscretePlant& plant, double x, double xd, const OneStepTarget& target,
                                   const MpcBounds& bounds) {
  bounds.validate();
  const double xdd_des =
      target.xdd_ref + target.kp * (target.x_ref - x) + target.kd * (target.xd_ref - xd);
  const double dt = plant.dt;
  const double gain = dt * dt / (2.0 * plant.m_bar);
  const double drift = x + xd * dt;

  QpProblem qp = QpProblem::unconstrained(Eigen::MatrixXd::Constant(1, 1, 2.0),
                                          Eigen::VectorXd::Constant(1, -2.0 * xdd_des));
  qp.Ain.resize(2, 1);
  qp.Ain << 1.0, gain;
  qp.lb.resize(2);
  qp.ub.resize(2);
  qp.lb << bounds.U_lb, bounds.Y_lb - drift;
  qp.ub << bounds.U_ub, bounds.Y_ub - drift;

  const QpSolution sol = solve_qp(qp);
  OneStepResult out;
  if (sol.status == QpStatus::Optimal) {
    out.U = sol.x[0];
    return out;
  }
  out.clamped = true;
  const double u_pos_hi = (bounds.Y_ub - drift) / gain;
  out.U = u_pos_hi < bounds.U_lb ? bounds.U_lb : bounds.U_ub;
  return out;
}

}  // namespace mixed
