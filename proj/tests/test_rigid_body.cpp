#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "dynamics_oracles.hpp"
#include "mixed/rigid_body.hpp"

using namespace mixed;
using oracle::model_path;

namespace {

RobotState at_rest(const RobotModel& m, Eigen::VectorXd q) { return {std::move(q), Eigen::VectorXd::Zero(m.nv())}; }

// Fourth-order Runge-Kutta on (q, qd) for the energy check; independent of the library integrator.
RobotState rk4(const RobotModel& m, const RobotState& s, double dt, const Eigen::Vector3d& g) {
  auto f = [&](const RobotState& x) {
    return Eigen::VectorXd(mass_matrix(m, x.q).llt().solve(-nonlinear_term(m, x, g)));
  };
  auto shift = [&](const RobotState& x, const Eigen::VectorXd& v, const Eigen::VectorXd& a, double h) {
    return RobotState{integrate_configuration(m, x.q, v, h), x.qd + a * h};
  };
  // Valid for models whose configuration space is flat (all shipped fixed-base chains).
  const Eigen::VectorXd k1v = s.qd, k1a = f(s);
  const RobotState s2 = shift(s, k1v, k1a, dt / 2);
  const Eigen::VectorXd k2v = s2.qd, k2a = f(s2);
  const RobotState s3 = shift(s, k2v, k2a, dt / 2);
  const Eigen::VectorXd k3v = s3.qd, k3a = f(s3);
  const RobotState s4 = shift(s, k3v, k3a, dt);
  const Eigen::VectorXd k4v = s4.qd, k4a = f(s4);
  return {s.q + dt / 6 * (k1v + 2 * k2v + 2 * k3v + k4v), s.qd + dt / 6 * (k1a + 2 * k2a + 2 * k3a + k4a)};
}

}  // namespace

TEST_CASE("model loading") {
  for (const char* name : oracle::kShippedModels) {
    CAPTURE(name);
    CHECK_NOTHROW(RobotModel::load(model_path(name)));
  }
  const auto h = RobotModel::load(model_path("planar_humanoid.json"));
  CHECK(h.nv() == 12);
  CHECK(h.nq() == 12);
  CHECK(h.total_mass() == doctest::Approx(60.0));
  CHECK(h.actuated().size() == 9);
  CHECK(h.selection().rows() == 9);

  const auto fa = RobotModel::load(model_path("floating_arm.json"));
  CHECK(fa.nq() == 10);
  CHECK(fa.nv() == 9);

  CHECK_THROWS_AS(RobotModel::load(model_path("missing.json")), ModelError);
  CHECK_THROWS_AS(RobotModel::from_json_text("{"), ModelError);
  CHECK_THROWS_AS(RobotModel::from_json_text(R"({"links": [{"name": "a", "mass": 0}]})"), ModelError);
  CHECK_THROWS_AS(RobotModel::from_json_text(R"({"links": [{"name": "a", "mass": 1, "parent": "b"}]})"), ModelError);
  CHECK_THROWS_AS(RobotModel::from_json_text(
                      R"({"links": [{"name": "a", "mass": 1}, {"name": "b", "parent": "a", "joint": "floating", "mass": 1}]})"),
                  ModelError);
  CHECK_THROWS_AS(RobotModel::from_json_text(R"({"links": [{"name": "a", "mass": 1, "inertia": [1, 1, -1, 0, 0, 0]}]})"),
                  ModelError);
  CHECK_THROWS_AS(RobotModel::from_json_text(
                      R"({"links": [{"name": "a", "mass": 1}], "frames": [{"name": "com", "link": "a"}]})"),
                  ModelError);
  CHECK_THROWS_AS(h.frame("nope"), ModelError);
  CHECK_THROWS_AS(mass_matrix(h, Eigen::VectorXd::Zero(3)), ModelError);
}

TEST_CASE("pendulum closed forms") {
  const auto m = RobotModel::load(model_path("pendulum.json"));
  const double mass = 2.0, l = 0.5, g = 9.81;
  std::mt19937 rng(3);
  for (int i = 0; i < 5; ++i) {
    const auto s = oracle::random_state(m, rng);
    CHECK(mass_matrix(m, s.q)(0, 0) == doctest::Approx(mass * l * l).epsilon(1e-14));
  }
  CHECK(nonlinear_term(m, at_rest(m, Eigen::VectorXd::Zero(1)))[0] == doctest::Approx(mass * g * l));
  CHECK(std::abs(nonlinear_term(m, at_rest(m, Eigen::VectorXd::Constant(1, -std::numbers::pi / 2)))[0]) <= 1e-12);
}

TEST_CASE("two-link mass matrix matches the textbook form and the inverse-dynamics columns") {
  const auto m = RobotModel::load(model_path("two_link.json"));
  std::mt19937 rng(11);
  for (int i = 0; i < 20; ++i) {
    const auto s = oracle::random_state(m, rng);
    const Eigen::MatrixXd M = mass_matrix(m, s.q);
    const Eigen::Matrix2d ref = oracle::two_link_mass(s.q[1], 1.0, 0.5, 0.09, 0.8, 1.0, 0.4, 0.05);
    CHECK((M - ref).cwiseAbs().maxCoeff() <= 1e-12);

    const RobotState rest{s.q, Eigen::VectorXd::Zero(2)};
    const Eigen::Vector3d zero_g = Eigen::Vector3d::Zero();
    for (int j = 0; j < 2; ++j) {
      const Eigen::VectorXd col = inverse_dynamics(m, rest, Eigen::VectorXd::Unit(2, j), zero_g);
      CHECK((M.col(j) - col).cwiseAbs().maxCoeff() <= 1e-10);
    }
  }
}

TEST_CASE("composite-rigid-body and Newton-Euler paths agree on every shipped model") {
  std::mt19937 rng(21);
  std::normal_distribution<double> N(0.0, 1.0);
  for (const char* name : oracle::kShippedModels) {
    CAPTURE(name);
    const auto m = RobotModel::load(model_path(name));
    double worst = 0.0;
    for (int i = 0; i < 100; ++i) {
      const auto s = oracle::random_state(m, rng);
      const Eigen::VectorXd qdd = Eigen::VectorXd::NullaryExpr(m.nv(), [&] { return N(rng); });
      const Eigen::VectorXd lhs = mass_matrix(m, s.q) * qdd + nonlinear_term(m, s);
      worst = std::max(worst, (lhs - inverse_dynamics(m, s, qdd)).cwiseAbs().maxCoeff());
      const Eigen::MatrixXd M = mass_matrix(m, s.q);
      CHECK((M - M.transpose()).cwiseAbs().maxCoeff() <= 1e-10 * M.cwiseAbs().maxCoeff());
      CHECK(M.llt().info() == Eigen::Success);
      CHECK(kinetic_energy(m, s) > 0.0);
    }
    CHECK(worst <= 1e-10);
  }
}

TEST_CASE("energy is conserved without actuation") {
  for (const char* name : {"two_link.json", "three_link.json"}) {
    CAPTURE(name);
    const auto m = RobotModel::load(model_path(name));
    std::mt19937 rng(5);
    RobotState s = oracle::random_state(m, rng);
    const Eigen::Vector3d zero_g = Eigen::Vector3d::Zero();
    const double e0 = kinetic_energy(m, s);
    double drift = 0.0;
    for (int k = 0; k < 1000; ++k) {
      s = rk4(m, s, 1e-4, zero_g);
      drift = std::max(drift, std::abs(kinetic_energy(m, s) - e0));
    }
    CHECK(drift <= 1e-6);

    // With gravity the total energy is conserved as well.
    RobotState t = oracle::random_state(m, rng);
    const double E0 = kinetic_energy(m, t) + potential_energy(m, t.q);
    for (int k = 0; k < 1000; ++k) t = rk4(m, t, 1e-4, m.gravity());
    CHECK(std::abs(kinetic_energy(m, t) + potential_energy(m, t.q) - E0) <= 1e-6);
  }
}

TEST_CASE("frame Jacobians against finite differences") {
  std::mt19937 rng(8);
  for (const char* name : oracle::kShippedModels) {
    const auto m = RobotModel::load(model_path(name));
    std::vector<std::string> frames{RobotModel::kComFrame};
    for (const auto& [f, _] : m.frames()) frames.push_back(f);
    for (int trial = 0; trial < 5; ++trial) {
      const auto s = oracle::random_state(m, rng);
      const auto kin = forward_kinematics(m, s);
      for (const auto& f : frames) {
        CAPTURE(name);
        CAPTURE(f);
        const auto fk = frame_kinematics(m, kin, f);
        const double eps = 1e-6;
        const auto plus = frame_pose(m, integrate_configuration(m, s.q, s.qd, eps), f);
        const auto minus = frame_pose(m, integrate_configuration(m, s.q, s.qd, -eps), f);
        const Eigen::Vector3d v_fd = (plus.p - minus.p) / (2 * eps);
        const Eigen::VectorXd v = fk.J * s.qd;
        CHECK((v.head<3>() - v_fd).norm() <= 1e-6 * (1.0 + v_fd.norm()));
        if (f != RobotModel::kComFrame) {
          const Eigen::Vector3d w_fd = oracle::rotation_log(plus.R * minus.R.transpose()) / (2 * eps);
          CHECK((v.tail<3>() - w_fd).norm() <= 1e-6 * (1.0 + w_fd.norm()));
        }

        // Drift: derivative of J qd along the motion at constant generalized velocity.
        const RobotState sp{integrate_configuration(m, s.q, s.qd, eps), s.qd};
        const RobotState sm{integrate_configuration(m, s.q, s.qd, -eps), s.qd};
        const Eigen::VectorXd a_fd =
            (frame_kinematics(m, sp, f).J * s.qd - frame_kinematics(m, sm, f).J * s.qd) / (2 * eps);
        CHECK((fk.Jdqd - a_fd).norm() <= 1e-5 * (1.0 + a_fd.norm()));

        CHECK(frame_kinematics(m, RobotState{s.q, Eigen::VectorXd::Zero(m.nv())}, f).Jdqd.norm() == 0.0);
      }
    }
  }
}

TEST_CASE("planar base columns are identity-like at zero heading") {
  const auto m = RobotModel::load(model_path("planar_humanoid.json"));
  const auto fk = frame_kinematics(m, at_rest(m, m.neutral_configuration()), "pelvis");
  CHECK(fk.J(1, 0) == 1.0);  // y velocity from v_u
  CHECK(fk.J(2, 1) == 1.0);  // z velocity from v_w
  CHECK(fk.J(3, 2) == 1.0);  // roll rate from omega
  CHECK(fk.J.rightCols(9).norm() == 0.0);
}

TEST_CASE("gravity load equals the COM Jacobian transpose times the weight") {
  std::mt19937 rng(31);
  for (const char* name : oracle::kShippedModels) {
    CAPTURE(name);
    const auto m = RobotModel::load(model_path(name));
    for (int i = 0; i < 10; ++i) {
      const auto s = at_rest(m, oracle::random_state(m, rng).q);
      const auto fk = frame_kinematics(m, s, RobotModel::kComFrame);
      const Eigen::VectorXd held = -fk.J.topRows<3>().transpose() * (m.total_mass() * m.gravity());
      CHECK((nonlinear_term(m, s) - held).cwiseAbs().maxCoeff() <= 1e-10);
    }
  }
}

TEST_CASE("constrained forward dynamics") {
  SUBCASE("three-link tip pinned: matches the multiplier solve and zeroes tip acceleration") {
    const auto m = RobotModel::load(model_path("three_link.json"));
    const ContactSet tip{{"foot", {0, 1}}};
    std::mt19937 rng(2);
    std::normal_distribution<double> N(0.0, 1.0);
    for (int i = 0; i < 20; ++i) {
      const auto s = oracle::random_state(m, rng, 0.5);
      const Eigen::MatrixXd M = mass_matrix(m, s.q);
      const auto kin = forward_kinematics(m, s);
      const auto sup = support_kinematics(m, kin, tip);
      // Null-space posture torque: only moves the remaining free direction.
      const Eigen::MatrixXd Minv = M.inverse();
      const Eigen::MatrixXd Lam = (sup.J * Minv * sup.J.transpose()).inverse();
      const Eigen::MatrixXd Nc = Eigen::MatrixXd::Identity(3, 3) - Minv * sup.J.transpose() * Lam * sup.J;
      const Eigen::VectorXd gamma = Nc.transpose() * Eigen::Vector3d(N(rng), N(rng), N(rng));
      const Eigen::VectorXd qdd = constrained_forward_dynamics(m, s, gamma, tip);
      const Eigen::VectorXd ref = oracle::kkt_contact_dynamics(M, nonlinear_term(m, s), sup.J, sup.Jdqd, gamma);
      CHECK((qdd - ref).cwiseAbs().maxCoeff() <= 1e-6);
      CHECK((sup.J * qdd + sup.Jdqd).cwiseAbs().maxCoeff() <= 1e-8);
    }
  }
  SUBCASE("humanoid double support under random torques") {
    const auto m = RobotModel::load(model_path("planar_humanoid.json"));
    const ContactSet feet{{"sole_l", {1, 2, 3}}, {"sole_r", {1, 2, 3}}};
    std::mt19937 rng(6);
    std::normal_distribution<double> N(0.0, 1.0);
    for (int i = 0; i < 50; ++i) {
      auto s = oracle::random_state(m, rng, 0.5);
      s.q.tail(9) *= 0.3;
      const Eigen::VectorXd tau = Eigen::VectorXd::NullaryExpr(9, [&] { return 50.0 * N(rng); });
      const Eigen::VectorXd gamma = m.selection().transpose() * tau;
      const Eigen::VectorXd qdd = constrained_forward_dynamics(m, s, gamma, feet);
      const auto sup = support_kinematics(m, forward_kinematics(m, s), feet);
      CHECK((sup.J * qdd + sup.Jdqd).cwiseAbs().maxCoeff() <= 1e-8);
      const Eigen::VectorXd ref =
          oracle::kkt_contact_dynamics(mass_matrix(m, s.q), nonlinear_term(m, s), sup.J, sup.Jdqd, gamma);
      CHECK((qdd - ref).cwiseAbs().maxCoeff() <= 1e-6);
    }
  }
  SUBCASE("rank-deficient support") {
    const auto m = RobotModel::load(model_path("two_link.json"));
    const ContactSet over{{"tip", {0, 1, 5}}};  // three rows on two coordinates
    CHECK_THROWS_AS(constrained_forward_dynamics(m, at_rest(m, Eigen::Vector2d(0.3, 0.4)), Eigen::Vector2d::Zero(), over),
                    SingularityError);
  }
}

TEST_CASE("integration") {
  SUBCASE("zero motion leaves the state unchanged") {
    const auto m = RobotModel::load(model_path("floating_arm.json"));
    std::mt19937 rng(1);
    auto s = oracle::random_state(m, rng);
    s.qd.setZero();
    const auto n = integrate(m, s, Eigen::VectorXd::Zero(m.nv()), 0.002);
    CHECK((n.q - s.q).norm() == 0.0);
    CHECK(n.qd.norm() == 0.0);
  }
  SUBCASE("constant acceleration on a prismatic coordinate") {
    const auto m = RobotModel::load(model_path("floating_arm.json"));
    RobotState s{m.neutral_configuration(), Eigen::VectorXd::Zero(m.nv())};
    Eigen::VectorXd qdd = Eigen::VectorXd::Zero(m.nv());
    const int k = m.joint_velocity_index("c");
    qdd[k] = 0.7;
    for (int i = 0; i < 25; ++i) s = integrate(m, s, qdd, 0.002);
    CHECK(s.qd[k] == doctest::Approx(25 * 0.7 * 0.002).epsilon(1e-14));
  }
  SUBCASE("free fall of floating and planar bases") {
    for (const char* name : {"floating_arm.json", "planar_humanoid.json"}) {
      CAPTURE(name);
      const auto m = RobotModel::load(model_path(name));
      RobotState s{m.neutral_configuration(), Eigen::VectorXd::Zero(m.nv())};
      for (int i = 0; i < 100; ++i) s = integrate(m, s, forward_dynamics(m, s, Eigen::VectorXd::Zero(m.nv())), 0.002);
      const auto fk = frame_kinematics(m, s, RobotModel::kComFrame);
      CHECK(std::abs((fk.J * s.qd)[1] + 9.81 * 0.2) <= 1e-12);
    }
  }
  SUBCASE("first-order convergence on a smooth swing") {
    const auto m = RobotModel::load(model_path("two_link.json"));
    const RobotState s0{Eigen::Vector2d(0.3, -0.5), Eigen::Vector2d(0.5, -0.2)};
    auto run = [&](double dt) {
      RobotState s = s0;
      const int steps = static_cast<int>(std::lround(0.2 / dt));
      for (int i = 0; i < steps; ++i) s = integrate(m, s, forward_dynamics(m, s, Eigen::Vector2d::Zero()), dt);
      return s.q;
    };
    const Eigen::VectorXd fine = run(1e-6);
    const double e1 = (run(2e-3) - fine).norm();
    const double e2 = (run(1e-3) - fine).norm();
    CHECK(e1 / e2 >= 1.9);
  }
  SUBCASE("floating orientation stays on the unit sphere") {
    const auto m = RobotModel::load(model_path("floating_arm.json"));
    std::mt19937 rng(4);
    auto s = oracle::random_state(m, rng, 3.0);
    for (int i = 0; i < 500; ++i) s = integrate(m, s, Eigen::VectorXd::Zero(m.nv()), 0.01);
    CHECK(std::abs(s.q.segment<4>(3).norm() - 1.0) <= 1e-12);
  }
}
