#include <doctest.h>

#include <json.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "dynamics_oracles.hpp"
#include "mixed/scenario.hpp"

using namespace mixed;
using nlohmann::json;

namespace {

std::string slurp(const std::filesystem::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

json shipped_compliance() { return json::parse(slurp(std::string(MIXED_SOURCE_DIR) + "/configs/compliance.json")); }

ComplianceConfig compliance_from(const json& j) {
  return parse_compliance_config(j.dump(), std::string(MIXED_SOURCE_DIR) + "/configs");
}

std::filesystem::path scratch(const std::string& name) {
  const auto p = std::filesystem::temp_directory_path() / ("mixed_test_scenario_" + name);
  std::filesystem::remove_all(p);
  return p;
}

}  // namespace

TEST_CASE("admittance") {
  const double dt = 0.002;
  Admittance rest({5.0, 40.0, 0.0}, 2, dt);
  for (int i = 0; i < 100; ++i) rest.step(Eigen::Vector2d::Zero());
  CHECK(rest.x().norm() == 0.0);
  CHECK(rest.xd().norm() == 0.0);

  // Step response of M xdd + D xd = F from rest.
  const double M = 5.0, D = 40.0, F = 3.0;
  Admittance drag({M, D, 0.0}, 1, dt);
  for (int n = 1; n <= 500; ++n) {
    drag.step(Eigen::VectorXd::Constant(1, F));
    const double t = n * dt;
    const double x = F / D * (t - M / D * (1.0 - std::exp(-D * t / M)));
    const double v = F / D * (1.0 - std::exp(-D * t / M));
    CHECK(drag.x()[0] == doctest::Approx(x).epsilon(1e-9));
    CHECK(std::abs(drag.xd()[0] - v) <= 1e-9);
  }

  Admittance spring({1.0, 10.0, 100.0}, 1, dt);
  for (int n = 0; n < 5000; ++n) spring.step(Eigen::VectorXd::Constant(1, 7.0));
  CHECK(std::abs(spring.x()[0] - 0.07) <= 1e-6);
  spring.reset();
  CHECK(spring.x()[0] == 0.0);

  CHECK_THROWS_AS(Admittance({0.0, 1.0, 0.0}, 1, dt), ScenarioError);
  CHECK_THROWS_AS(Admittance({1.0, -1.0, 0.0}, 1, dt), ScenarioError);
  CHECK_THROWS_AS(Admittance({1.0, 1.0, 0.0}, 1, 0.0), ScenarioError);
  CHECK_THROWS_AS(drag.step(Eigen::Vector2d::Zero()), ScenarioError);
  CHECK_THROWS_AS(drag.step(Eigen::VectorXd::Constant(1, NAN)), ScenarioError);
}

TEST_CASE("force profiles") {
  ForceProfile p;
  Vector6d a = Vector6d::Zero(), b = Vector6d::Zero();
  b[1] = -10.0;
  p.segments = {{0.0, 1.0, a, b}, {1.0, 2.0, b, b}};
  CHECK_NOTHROW(p.validate());
  CHECK(p.at(0.5)[1] == doctest::Approx(-5.0));
  CHECK(p.at(1.5)[1] == -10.0);
  CHECK(p.at(2.0).norm() == 0.0);
  CHECK(p.at(-1.0).norm() == 0.0);
  CHECK(p.scaled(0.5).at(1.5)[1] == -5.0);

  ForceProfile overlap = p;
  overlap.segments[1].start = 0.9;
  CHECK_THROWS_AS(overlap.validate(), ScenarioError);
  ForceProfile reversed = p;
  reversed.segments[0].end = -1.0;
  CHECK_THROWS_AS(reversed.validate(), ScenarioError);
  ForceProfile nan = p;
  nan.segments[0].to[0] = NAN;
  CHECK_THROWS_AS(nan.validate(), ScenarioError);
}

TEST_CASE("one-dimensional comparison") {
  const Fig3Config c;
  const auto r = run_fig3(c);
  CHECK(r.mpc.peak_abs_x <= 0.1 + 2e-3);
  CHECK(r.baseline.peak_abs_x > 0.1);
  CHECK(r.baseline.peak_jerk >= 10.0 * r.mpc.peak_jerk);
  CHECK(r.dU_bound == doctest::Approx(c.jerk_limit * c.dt));
  CHECK(r.mpc.max_abs_dU <= r.dU_bound);
  CHECK(r.mpc.fallbacks == 0);
  CHECK(r.mpc.violation_integral < r.baseline.violation_integral);
  CHECK(r.trace.rows.size() == static_cast<size_t>(std::llround(c.duration / c.dt)));

  // Above 0.5 Hz the reference reaches the bound faster than the plant can brake inside the
  // default 40 ms lookahead, so only the jerk contrast is asserted there.
  for (double f : {0.25, 0.5, 0.75, 1.0}) {
    CAPTURE(f);
    Fig3Config cf;
    cf.frequency = f;
    const auto rf = run_fig3(cf);
    if (f <= 0.5) {
      CHECK(rf.mpc.peak_abs_x <= 0.1 + 2e-3);
      CHECK(rf.mpc.fallbacks == 0);
    }
    CHECK(rf.baseline.peak_abs_x > 0.1);
    CHECK(rf.mpc.max_abs_dU <= rf.dU_bound);
    CHECK(rf.baseline.peak_jerk >= 10.0 * rf.mpc.peak_jerk);
  }

  const auto parsed = parse_fig3_config(R"({"scenario": "fig3", "frequency": 0.75, "Y_bounds": [-0.2, 0.1]})");
  CHECK(parsed.frequency == 0.75);
  CHECK(parsed.Y_lb == -0.2);
  CHECK(parsed.Np == 20);
  CHECK_THROWS_AS(parse_fig3_config("{"), ScenarioError);
  CHECK_THROWS_AS(parse_fig3_config(R"({"scenario": "compliance"})"), ScenarioError);
  CHECK_THROWS_AS(parse_fig3_config(R"({"Nc": 30})"), ScenarioError);
  CHECK_THROWS_AS(parse_fig3_config(R"({"U_bounds": [1]})"), ScenarioError);
  CHECK_THROWS_AS(parse_fig3_config(R"({"dt": "fast"})"), ScenarioError);
  CHECK_THROWS_AS(parse_fig3_config(R"({"Y_bounds": [0.1, -0.1]})"), ScenarioError);
}

TEST_CASE("trace output") {
  TraceTable empty{{"t", "x"}, {}};
  CHECK(to_csv(empty) == "t,x\n");

  TraceTable ten{{"t", "x"}, {}};
  for (int i = 0; i < 10; ++i) ten.add({i * 0.1, 1.0 / 3.0});
  const std::string csv = to_csv(ten);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 11);
  const auto second = csv.substr(csv.find('\n') + 1);
  const double back = std::stod(second.substr(second.find(',') + 1));
  CHECK(back == 1.0 / 3.0);
  CHECK_THROWS_AS(ten.add({1.0}), ScenarioError);

  CHECK(fnv1a("") == 14695981039346656037ull);
  CHECK(fnv1a("a") == 0xaf63dc4c8601ec8cull);

  const auto dir = scratch("emit");
  emit_traces({{"trace", ten}, {"empty", empty}}, dir.string(), {"fig3", "{}", 7, 2});
  CHECK(slurp(dir / "trace.csv") == csv);
  CHECK(slurp(dir / "empty.csv") == "t,x\n");
  const auto manifest = json::parse(slurp(dir / "manifest.json"));
  CHECK(manifest["seed"] == 7);
  CHECK(manifest["workers"] == 2);
  CHECK(manifest["code_version"] == kCodeVersion);
  CHECK(manifest["config_fnv1a"] == "08f44b07b5901a25");
  CHECK(manifest["files"].size() == 2);
  const std::string first = slurp(dir / "manifest.json");
  emit_traces({{"trace", ten}, {"empty", empty}}, dir.string(), {"fig3", "{}", 7, 2});
  CHECK(slurp(dir / "manifest.json") == first);
  std::filesystem::remove_all(dir);
}

TEST_CASE("compliance config validation") {
  CHECK_NOTHROW(compliance_from(shipped_compliance()));
  const auto c = compliance_from(shipped_compliance());
  CHECK(c.controller.hierarchy.tasks.size() == 4);
  CHECK(c.controller.limits.size() == 1);
  CHECK(c.drag.has_value());
  CHECK(std::filesystem::exists(c.model));

  auto broken = [](auto edit) {
    json j = shipped_compliance();
    edit(j);
    return j;
  };
  CHECK_THROWS_AS(compliance_from(broken([](json& j) { j.erase("support"); })), ScenarioError);
  CHECK_THROWS_AS(compliance_from(broken([](json& j) { j["tasks"][0]["kind"] = "urgent"; })), ScenarioError);
  CHECK_THROWS_AS(compliance_from(broken([](json& j) { j["budget"]["policy"] = "ignore"; })), ScenarioError);
  CHECK_THROWS_AS(compliance_from(broken([](json& j) { j["dt"] = -0.002; })), ScenarioError);
  CHECK_THROWS_AS(compliance_from(broken([](json& j) { j["fall_fraction"] = 1.5; })), ScenarioError);
  CHECK_THROWS_AS(compliance_from(broken([](json& j) { j["drag"]["direction"] = {0.0, 0.0}; })), ScenarioError);
  CHECK_THROWS_AS(compliance_from(broken([](json& j) { j["tasks"][1]["limits"] = {{-1.0}}; })), ScenarioError);
  CHECK_THROWS_AS(compliance_from(broken([](json& j) {
                    j["force"] = {{"segments", {{{"start", 0}, {"end", 1}, {"from", {0, 1, 0, 0, 0, 0}}}}}};
                  })),
                  ScenarioError);
  CHECK_THROWS_AS(compliance_from(broken([](json& j) { j["scenario"] = "fig3"; })), ScenarioError);
}

TEST_CASE("models for the compliance scenario") {
  const auto c = compliance_from(shipped_compliance());
  const auto m = RobotModel::load(c.model);
  const auto heavy = scaled_model(m, 1.1);
  const auto s = make_home(m, c.home, c.controller.hierarchy.foot);
  CHECK(heavy.total_mass() == doctest::Approx(1.1 * m.total_mass()).epsilon(1e-12));
  CHECK((mass_matrix(heavy, s.q) - 1.1 * mass_matrix(m, s.q)).cwiseAbs().maxCoeff() <= 1e-9);

  double lowest = 1e9;
  for (const auto& contact : c.controller.hierarchy.foot)
    lowest = std::min(lowest, frame_pose(m, s.q, contact.frame).p[1]);
  CHECK(std::abs(lowest) <= 1e-12);
  CHECK_THROWS_AS(make_home(m, c.home, {}), ScenarioError);
}

TEST_CASE("compliance without external force stays put and does not gain energy") {
  json j = shipped_compliance();
  j.erase("drag");
  j["duration"] = 5.0;
  j["workers"] = 1;
  j["initial_noise"] = 0.01;
  const auto r = run_compliance(compliance_from(j));
  CHECK_FALSE(r.fell);
  CHECK(r.steps == 2500);
  CHECK(r.energy_max <= r.energy_start + 1e-6);
  CHECK(r.joint_bound_excess == 0.0);
  CHECK(r.fallbacks == 0);
  CHECK(r.foot_residual_max <= 1e-9);
}

TEST_CASE("moderate drag stays inside every constraint") {
  json j = shipped_compliance();
  j["drag"]["target"] = 0.3;
  const auto c = compliance_from(j);
  const auto r = run_compliance(c);
  CHECK_FALSE(r.fell);
  CHECK(r.reference_displacement == doctest::Approx(0.3).epsilon(1e-3));
  CHECK(r.drag_force > 0.0);
  CHECK(r.joint_bound_excess <= 0.01);
  CHECK(r.zmp_within_allowance);
  CHECK(r.trace.rows.size() == static_cast<size_t>(r.steps));
  CHECK(r.timing.rows.size() == static_cast<size_t>(r.steps));
  CHECK(r.trace.columns.size() == r.trace.rows.front().size());
}
