// Command-line front end: fig3, compliance and bench scenarios.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include "mixed/scenario.hpp"

namespace {

using namespace mixed;

struct Options {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::optional<int> workers;
  std::optional<std::string> budget_policy;
  long cycles = 2000;
};

std::string read_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ScenarioError("cannot read config '" + path + "'");
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

ComplianceConfig load_compliance(const Options& o) {
  if (o.config.empty()) throw ScenarioError("--config is required");
  const auto dir = std::filesystem::path(o.config).parent_path().string();
  ComplianceConfig c = parse_compliance_config(read_file(o.config), dir.empty() ? "." : dir);
  if (o.seed) c.seed = *o.seed;
  if (o.workers) c.controller.workers = *o.workers;
  if (o.budget_policy) {
    if (*o.budget_policy != "record" && *o.budget_policy != "abort")
      throw ScenarioError("--budget-policy must be 'record' or 'abort'");
    c.controller.budget.action = *o.budget_policy == "abort" ? BudgetAction::Abort : BudgetAction::Record;
  }
  c.validate();
  return c;
}

int run_fig3_cmd(const Options& o) {
  const std::string text = o.config.empty() ? std::string("{}") : read_file(o.config);
  const Fig3Config c = parse_fig3_config(text);
  const Fig3Report r = run_fig3(c);
  std::cout << summarize(r);
  if (!o.out.empty()) emit_traces({{"fig3", r.trace}}, o.out, {"fig3", text, o.seed.value_or(0), 1});
  const bool ok = r.mpc.peak_abs_x <= std::max(std::abs(c.Y_lb), std::abs(c.Y_ub)) + 2e-3 && r.mpc.fallbacks == 0;
  return ok ? 0 : 2;
}

int run_compliance_cmd(const Options& o) {
  const ComplianceConfig c = load_compliance(o);
  ComplianceReport r;
  try {
    r = run_compliance(c);
  } catch (const BudgetOverrun& e) {
    std::cerr << "budget abort: " << e.what() << "\n";
    return 3;
  }
  const std::string text = summarize(r, c);
  std::cout << text;
  const TimingReport timing = timing_report(r.times, c.controller.budget.budget_us);
  std::cout << timing.to_text();
  if (!o.out.empty()) {
    emit_traces({{"trace", r.trace}, {"timing", r.timing}}, o.out,
                {"compliance", c.config_text, c.seed, c.controller.workers});
    std::ofstream(std::filesystem::path(o.out) / "report.txt") << text << timing.to_text();
  }
  return r.fell ? 2 : 0;
}

int run_bench_cmd(const Options& o) {
  ComplianceConfig c = load_compliance(o);
  c.duration = static_cast<double>(o.cycles) * c.dt;
  ComplianceReport r;
  try {
    r = run_compliance(c);
  } catch (const BudgetOverrun& e) {
    std::cerr << "budget abort: " << e.what() << "\n";
    return 3;
  }
  const TimingReport t = timing_report(r.times, c.controller.budget.budget_us);
  std::cout << "workers " << c.controller.workers << ", MPC axes " << MixedController(RobotModel::load(c.model), c.controller).axis_names().size()
            << ", Np " << c.controller.task_mpc.Np << ", Nc " << c.controller.task_mpc.Nc << "\n";
  std::cout << t.to_text();
  const bool below = t.total.average < c.controller.budget.budget_us;
  std::cout << "average total below budget (" << c.controller.budget.budget_us << " us): " << (below ? "yes" : "no")
            << "\n";
  std::cout << "total maximum below sum of module maxima: "
            << (t.total.maximum < t.sum_of_module_maxima ? "yes" : "no") << "\n";
  if (!o.out.empty()) {
    emit_traces({{"timing", r.timing}}, o.out, {"bench", c.config_text, c.seed, c.controller.workers});
    std::ofstream(std::filesystem::path(o.out) / "report.txt") << t.to_text();
  }
  if (r.fell) return 2;
  return below ? 0 : 4;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Mixed MPC/PD whole-body control scenarios"};
  app.require_subcommand(1);
  Options o;
  auto common = [&](CLI::App* sub) {
    sub->add_option("-c,--config", o.config, "Scenario config (JSON)");
    sub->add_option("-o,--out", o.out, "Output directory for CSV traces and the run manifest");
    sub->add_option("--seed", o.seed, "Override the config seed");
    sub->add_option("--workers", o.workers, "Override the MPC worker count")->check(CLI::PositiveNumber);
    sub->add_option("--budget-policy", o.budget_policy, "record or abort")->check(CLI::IsMember({"record", "abort"}));
  };
  auto* fig3 = app.add_subcommand("fig3", "One-step QP baseline vs single-axis MPC on a bounded 1D plant");
  common(fig3);
  auto* compliance = app.add_subcommand("compliance", "Planar humanoid hand drag under mixed control");
  common(compliance);
  auto* bench = app.add_subcommand("bench", "Cycle timing of the compliance controller");
  common(bench);
  bench->add_option("--cycles", o.cycles, "Number of control cycles")->check(CLI::PositiveNumber);
  CLI11_PARSE(app, argc, argv);

  try {
    if (fig3->parsed()) return run_fig3_cmd(o);
    if (compliance->parsed()) return run_compliance_cmd(o);
    return run_bench_cmd(o);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
