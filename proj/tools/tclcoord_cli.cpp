// Command-line front end: plan, simulate, validate-model, export-broadcast, audit.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>
#include <string>

#include <CLI11.hpp>

#include "tclcoord/tclcoord.hpp"

namespace fs = std::filesystem;
using namespace tclcoord;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitSolverCap = 3;
constexpr int kExitQos = 4;

void write_json(const fs::path & path, const ScenarioConfig & config, const json & body)
{
  std::ofstream out(path);
  if (!out) { throw Error("cannot write '" + path.string() + "'"); }
  out << provenance_header(config) << "\n" << body.dump(2) << "\n";
}

json to_json(const AuditReport & a)
{
  return json{{"cycling_violations", a.cycling_violations},
              {"min_gap_steps", a.min_gap_steps == std::numeric_limits<int>::max() ? -1 : a.min_gap_steps},
              {"switches", a.switches},
              {"max_excursion_c", a.max_excursion},
              {"excursion_p999_c", a.excursion_p999},
              {"excursion_bound_c", a.excursion_bound},
              {"excursion_violations", a.excursion_violations},
              {"rmse_kw", a.rmse},
              {"rmse_over_p_agg", a.rmse_ratio},
              {"mean_tv", a.mean_tv},
              {"max_tv", a.max_tv}};
}

bool qos_ok(const AuditReport & a, NoiseModel noise)
{
  if (a.cycling_violations > 0) { return false; }
  return noise == NoiseModel::sde ? a.excursion_p999 <= a.excursion_bound : a.excursion_violations == 0;
}

ScenarioConfig apply_overrides(ScenarioConfig c, long n_tcl, long seed, const std::string & noise,
                               const std::string & timing, bool no_monotone, bool no_guard)
{
  if (n_tcl > 0) { c.n_tcl = n_tcl; }
  if (seed >= 0) { c.seed = static_cast<std::uint64_t>(seed); }
  if (!noise.empty()) { c.noise = noise == "sde" ? NoiseModel::sde : NoiseModel::ode; }
  if (!timing.empty()) { c.timing = *parse_switch_timing(timing); }
  if (no_monotone) { c.monotone = false; }
  if (no_guard) { c.cycling_guard = false; }
  return c;
}

int cmd_plan(const Scenario & s, const fs::path & out_dir)
{
  const PlanProblem pr = s.plan_problem();
  AdmmSettings settings = s.solver_settings();
  settings.progress = [](int k, double prim, double dual, double rho) {
    if (k % 500 == 0) { std::cerr << "iter " << k << " primal " << prim << " dual " << dual << " rho " << rho << "\n"; }
  };
  const PlanSolution sol = solve_plan(pr, settings);
  const RolloutReport rep = verify_equivalence(sol, pr);

  fs::create_directories(out_dir);
  write_plan((out_dir / "plan.csv").string(), PlanFile{s.config, s.r_ba, sol.reference, s.theta_a, sol.policies},
             s.grid);
  const json summary{{"variables", sol.num_variables},
                     {"constraints", sol.num_constraints},
                     {"iterations", sol.solver.iterations},
                     {"factorizations", sol.solver.factorizations},
                     {"primal_residual", sol.solver.prim_res},
                     {"dual_residual", sol.solver.dual_res},
                     {"solve_seconds", sol.solver.seconds},
                     {"eta_kw2", sol.eta},
                     {"eta_rollout_kw2", rep.eta_rollout},
                     {"relative_gap", rep.relative_gap},
                     {"max_marginal_gap", rep.max_marginal_gap}};
  write_json(out_dir / "plan_summary.json", s.config, summary);
  std::cout << summary.dump(2) << "\n";
  return 0;
}

int cmd_simulate(const Scenario & s, const PlanFile & plan, const fs::path & out_dir)
{
  const auto marginals = propagate_schedule(s.grid, s.config.params, s.config.tau, s.config.dt_min, s.nu_hat,
                                            plan.policies, s.theta_a);
  const FleetTrace trace =
      simulate(s.fleet_config(), s.config.n_tcl, s.nu_hat, s.config.seed, plan.policies, s.theta_a, &marginals);
  const Vector c = output_vector(s.grid.N, s.config.tau, s.config.P_agg());
  // the plan's reference is in kW for the planned fleet; policies do not depend on its size
  const double scale = static_cast<double>(s.config.n_tcl) / static_cast<double>(plan.config.n_tcl);
  std::vector<double> reference = plan.reference;
  for (double & r : reference) { r *= scale; }
  const AuditReport rep = audit(trace, reference, s.grid, s.config.tau, s.config.P_agg(), s.excursion_bound());

  fs::create_directories(out_dir);
  {
    std::ofstream out(out_dir / "trace.csv");
    out << provenance_header(s.config) << "\n" << "k,r_ba_kw,r_kw,y_kw,gamma_e_kw,tv\n";
    for (std::size_t k = 0; k < trace.power.size(); ++k) {
      out << k << "," << format_exact(plan.r_ba[k] * scale) << "," << format_exact(reference[k]) << ","
          << format_exact(trace.power[k]) << "," << format_exact(output(marginals[k], c)) << ","
          << format_exact(trace.tv[k]) << "\n";
    }
  }
  {
    std::ofstream out(out_dir / "tcls.csv");
    out << provenance_header(s.config) << "\n" << "id,switches,min_gap_steps,theta_min_c,theta_max_c,switch_steps\n";
    for (std::size_t i = 0; i < trace.records.size(); ++i) {
      const auto & r = trace.records[i];
      int gap = -1;
      for (std::size_t j = 1; j < r.switches.size(); ++j) {
        const int d = r.switches[j] - r.switches[j - 1];
        gap = gap < 0 ? d : std::min(gap, d);
      }
      out << i << "," << r.switches.size() << "," << gap << "," << format_exact(r.theta_min) << ","
          << format_exact(r.theta_max) << ",";
      for (std::size_t j = 0; j < r.switches.size(); ++j) { out << (j ? " " : "") << r.switches[j]; }
      out << "\n";
    }
  }
  write_json(out_dir / "audit.json", s.config, to_json(rep));
  std::cout << to_json(rep).dump(2) << "\n";
  return qos_ok(rep, s.config.noise) ? 0 : kExitQos;
}

int cmd_audit(const Scenario & s, const fs::path & trace_path, const fs::path & tcls_path)
{
  FleetTrace trace;
  std::vector<double> reference;
  for (const auto & row : read_csv_rows(trace_path.string(), "trace")) {
    if (row.size() < 6) { throw ConfigError("trace: expected 6 columns"); }
    reference.push_back(parse_double(row[2], "trace"));
    trace.power.push_back(parse_double(row[3], "trace"));
    trace.tv.push_back(parse_double(row[5], "trace"));
  }
  for (const auto & row : read_csv_rows(tcls_path.string(), "tcls")) {
    if (row.size() < 6) { throw ConfigError("tcls: expected 6 columns"); }
    TclRecord r;
    r.theta_min = parse_double(row[3], "tcls");
    r.theta_max = parse_double(row[4], "tcls");
    std::istringstream steps(row[5]);
    for (int k; steps >> k;) { r.switches.push_back(k); }
    trace.records.push_back(std::move(r));
  }
  const AuditReport rep = audit(trace, reference, s.grid, s.config.tau, s.config.P_agg(), s.excursion_bound());
  std::cout << to_json(rep).dump(2) << "\n";
  return qos_ok(rep, s.config.noise) ? 0 : kExitQos;
}

int cmd_validate(const Scenario & s, int seeds, std::uint64_t schedule_seed, const fs::path & out_path)
{
  const ModelValidation v = validate_model(s, seeds, schedule_seed);
  json runs = json::array();
  for (std::size_t r = 0; r < v.seeds.size(); ++r) {
    runs.push_back({{"seed", v.seeds[r]}, {"mean_tv", v.mean_tv[r]}, {"max_tv", v.max_tv[r]}});
  }
  const json report{{"n_tcl", s.config.n_tcl}, {"seeds", seeds}, {"mean_tv", v.average()}, {"runs", runs}};
  if (!out_path.empty()) { write_json(out_path, s.config, report); }
  std::cout << report.dump(2) << "\n";
  return 0;
}

}  // namespace

int main(int argc, char ** argv)
{
  CLI::App app{"Plan, broadcast, simulate and audit coordinated TCL fleets"};
  app.require_subcommand(1);

  std::string config_path, out_dir = "out", plan_path, trace_path, tcls_path, out_path, noise, timing;
  long n_tcl = 0, seed = -1;
  int seeds = 10;
  std::uint64_t schedule_seed = 7;
  bool no_monotone = false, no_guard = false;

  const auto add_common = [&](CLI::App * sub) {
    sub->add_option("-c,--config", config_path, "scenario JSON")->required()->check(CLI::ExistingFile);
    sub->add_option("--n-tcl", n_tcl, "override the fleet size");
    sub->add_option("--seed", seed, "override the master seed");
    sub->add_option("--noise", noise, "ode or sde")->check(CLI::IsMember({"ode", "sde"}));
    sub->add_option("--switch-timing", timing, "latched, immediate or model")
        ->check(CLI::IsMember({"latched", "immediate", "model"}));
    sub->add_flag("--no-monotone", no_monotone, "drop the monotone switching constraints");
    sub->add_flag("--no-cycling-guard", no_guard, "allow grid-support switches next to the deadband edges");
  };

  auto * plan = app.add_subcommand("plan", "solve the planning program and write plan.csv");
  add_common(plan);
  plan->add_option("-o,--out-dir", out_dir, "output directory");

  auto * sim = app.add_subcommand("simulate", "replay a plan on a fresh fleet and audit it");
  add_common(sim);
  sim->add_option("-p,--plan", plan_path, "plan.csv")->required()->check(CLI::ExistingFile);
  sim->add_option("-o,--out-dir", out_dir, "output directory");

  auto * val = app.add_subcommand("validate-model", "compare fleet histograms with the model marginals");
  add_common(val);
  val->add_option("--seeds", seeds, "number of fleet seeds");
  val->add_option("--schedule-seed", schedule_seed, "seed of the random policy schedule");
  val->add_option("-o,--out", out_path, "report JSON");

  auto * exp = app.add_subcommand("export-broadcast", "write the per-step broadcast payload");
  exp->add_option("-p,--plan", plan_path, "plan.csv")->required()->check(CLI::ExistingFile);
  exp->add_option("-o,--out", out_path, "broadcast CSV")->required();

  auto * aud = app.add_subcommand("audit", "recompute the QoS and tracking report from simulate outputs");
  add_common(aud);
  aud->add_option("-t,--trace", trace_path, "trace.csv")->required()->check(CLI::ExistingFile);
  aud->add_option("--tcls", tcls_path, "tcls.csv")->required()->check(CLI::ExistingFile);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*exp) {
      const PlanFile p = read_plan(plan_path);
      write_broadcast(out_path, p.config, p.policies);
      std::cout << p.policies.size() << " steps, " << broadcast_width(p.config.grid()) << " numbers per step\n";
      return 0;
    }
    const ScenarioConfig cfg =
        apply_overrides(load_config(config_path), n_tcl, seed, noise, timing, no_monotone, no_guard);
    const Scenario s = load_scenario(cfg);
    if (*plan) { return cmd_plan(s, out_dir); }
    if (*sim) {
      const PlanFile p = read_plan(plan_path);
      if (p.policies.size() != static_cast<std::size_t>(cfg.horizon)) {
        throw ConfigError("plan length differs from the configured horizon");
      }
      return cmd_simulate(s, p, out_dir);
    }
    if (*val) { return cmd_validate(s, seeds, schedule_seed, out_path); }
    if (*aud) { return cmd_audit(s, trace_path, tcls_path); }
  } catch (const SolverMaxIterations & e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitSolverCap;
  } catch (const ConfigError & e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const InvalidParameter & e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const StructureViolation & e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const Error & e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
