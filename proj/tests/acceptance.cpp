// Acceptance run: one PASS/FAIL line per criterion. Exits nonzero if any criterion
// fails that was not named with --known-failure. Run from the source directory
// (ctest does this) so the shipped scenario resolves.

#include <chrono>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <random>
#include <set>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "support.hpp"
#include "tclcoord/tclcoord.hpp"

using namespace tclcoord;
namespace fs = std::filesystem;

namespace {

constexpr const char * kScenario = "scenarios/nominal/config.json";

struct Outcome
{
  bool pass{false};
  std::string detail;
};

double seconds_since(std::chrono::steady_clock::time_point t0)
{
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(double v, int precision = 4)
{
  std::ostringstream s;
  s << std::setprecision(precision) << v;
  return s.str();
}

struct Draw
{
  TclParams params;
  double theta_a;
  double dt_min;  ///< admissible step for this draw, at most 1 min
};

/// The 100 draws shared by criteria 1-3.
std::vector<Draw> draws(const GridSpec & g)
{
  std::mt19937_64 rng(20210715);
  std::vector<Draw> out;
  for (int i = 0; i < 100; ++i) {
    const auto d = testing::random_draw(rng, g);
    out.push_back({d.params, d.theta_a, std::min(1.0, max_stable_step_minutes(g, d.params, d.theta_a))});
  }
  return out;
}

/// Diagonal strictly negative, off-diagonals non-negative.
bool sign_pattern_holds(const SparseMatrix & A)
{
  for (int i = 0; i < A.outerSize(); ++i) {
    bool diag_seen = false;
    for (SparseMatrix::InnerIterator it(A, i); it; ++it) {
      if (it.col() == i) {
        diag_seen = true;
        if (!(it.value() < 0)) { return false; }
      } else if (it.value() < 0) {
        return false;
      }
    }
    if (!diag_seen) { return false; }
  }
  return true;
}

Outcome rate_matrices(const GridSpec & g, const std::vector<Draw> & ds)
{
  const auto t0 = std::chrono::steady_clock::now();
  double worst = 0;
  int bad_sign = 0;
  for (const Draw & d : ds) {
    const SparseMatrix A = build_rate_matrix(g, d.params, d.theta_a, gamma_for_step(g, d.params, d.dt_min));
    worst = std::max(worst, max_row_sum(A));
    bad_sign += !sign_pattern_holds(A);
  }
  const double t = seconds_since(t0);
  return {worst < 1e-12 && bad_sign == 0 && t < 5.0,
          "max |row sum| " + fmt(worst) + ", sign failures " + std::to_string(bad_sign) + ", " + fmt(t, 3) + " s"};
}

Outcome cfl(const GridSpec & g, const std::vector<Draw> & ds)
{
  int failures = 0;
  double worst_entry = 0;
  for (const Draw & d : ds) {
    const SparseMatrix A = build_rate_matrix(g, d.params, d.theta_a, gamma_for_step(g, d.params, d.dt_min));
    const double bound = cfl_bound_minutes(A);
    try {
      const SparseMatrix P = transition_matrix(A, bound);
      if (!is_stochastic(P)) { ++failures; }
      for (int i = 0; i < P.outerSize(); ++i) {
        for (SparseMatrix::InnerIterator it(P, i); it; ++it) {
          worst_entry = std::max({worst_entry, -it.value(), it.value() - 1.0});
        }
      }
    } catch (const CflViolation &) {
      ++failures;
    }
    try {
      transition_matrix(A, 1.01 * bound);
      ++failures;
    } catch (const CflViolation &) {
    }
  }
  return {failures == 0 && worst_entry <= 1e-12,
          "failures " + std::to_string(failures) + ", worst entry outside [0,1] " + fmt(worst_entry)};
}

Outcome factorization(const GridSpec & g, const std::vector<Draw> & ds)
{
  double worst = 0;
  for (const Draw & d : ds) {
    const SparseMatrix P =
        transition_matrix(build_rate_matrix(g, d.params, d.theta_a, gamma_for_step(g, d.params, d.dt_min)), d.dt_min);
    try {
      const TransitionFactors f = factorize(P, g, 1.0);
      worst = std::max(worst, (f.Phi_TS * f.G - Matrix(P)).cwiseAbs().maxCoeff());
    } catch (const Error & e) {
      return {false, std::string("factorization failed: ") + e.what()};
    }
  }
  return {worst < 1e-12, "max |Phi G - P| " + fmt(worst)};
}

Outcome conservation(const Scenario & s)
{
  const ExpandedLayout X{s.grid.N, s.config.tau};
  std::mt19937_64 rng(360);
  std::exponential_distribution<double> e;
  std::uniform_real_distribution<double> u(0, 1);
  double worst = 0;
  for (int trial = 0; trial < 10; ++trial) {
    Vector nu(X.size());
    for (int i = 0; i < X.size(); ++i) { nu(i) = e(rng); }
    nu /= nu.sum();
    const auto schedule = random_schedule(s.grid, s.config.tau, trial % 2 == 0, 360, 100 + trial, 1 + trial,
                                          u(rng));
    for (const Vector & m : propagate_schedule(s.grid, s.config.params, s.config.tau, s.config.dt_min, nu,
                                               schedule, s.theta_a)) {
      worst = std::max(worst, std::abs(m.sum() - 1.0));
    }
  }
  return {worst < 1e-9, "max |sum nu - 1| over 10 x 360 steps " + fmt(worst)};
}

std::uint64_t bits(double v)
{
  std::uint64_t b;
  std::memcpy(&b, &v, sizeof b);
  return b;
}

Outcome broadcast(const Scenario & s, const std::vector<PolicyPair> & policies, const fs::path & dir)
{
  const fs::path path = dir / "broadcast.csv";
  write_broadcast(path.string(), s.config, policies);
  int rows = 0, wrong_width = 0;
  for (const auto & row : read_csv_rows(path.string(), "broadcast")) {
    ++rows;
    wrong_width += row.size() - 1 != 18;
  }
  const auto back = read_broadcast(path.string(), s.grid);
  long mismatches = 0;
  for (std::size_t k = 0; k < policies.size(); ++k) {
    for (int j = 0; j < s.grid.N; ++j) {
      mismatches += bits(back[k].kappa_on(j)) != bits(policies[k].kappa_on(j));
      mismatches += bits(back[k].kappa_off(j)) != bits(policies[k].kappa_off(j));
    }
  }
  return {rows == static_cast<int>(policies.size()) && wrong_width == 0 && mismatches == 0 &&
              broadcast_width(s.grid) == 18,
          std::to_string(rows) + " rows of " + std::to_string(broadcast_width(s.grid)) + " numbers, " +
              std::to_string(mismatches) + " bit mismatches"};
}

}  // namespace

int main(int argc, char ** argv)
{
  CLI::App app{"Acceptance criteria"};
  std::vector<int> known;
  app.add_option("--known-failure", known, "criteria whose failure does not change the exit status");
  CLI11_PARSE(app, argc, argv);
  const std::set<int> known_set(known.begin(), known.end());

  std::vector<int> failed, unexpected;
  const auto report = [&](int id, const std::string & name, const Outcome & o) {
    std::cout << (o.pass ? "PASS" : "FAIL") << "  " << std::setw(2) << id << "  " << name << ": " << o.detail
              << std::endl;
    if (!o.pass) {
      failed.push_back(id);
      if (!known_set.count(id)) { unexpected.push_back(id); }
    }
  };
  const auto guarded = [&](int id, const std::string & name, const std::function<Outcome()> & f) {
    try {
      report(id, name, f());
    } catch (const std::exception & e) {
      report(id, name, {false, std::string("error: ") + e.what()});
    }
  };

  const GridSpec g = build_grid(20, 22, 10, 2);
  const auto ds = draws(g);
  guarded(1, "rate matrix row sums and signs", [&] { return rate_matrices(g, ds); });
  guarded(2, "explicit step at the stability bound", [&] { return cfl(g, ds); });
  guarded(3, "transition factorization", [&] { return factorization(g, ds); });

  Scenario nominal;
  try {
    nominal = load_scenario(load_config(kScenario));
  } catch (const std::exception & e) {
    for (int id = 4; id <= 10; ++id) { report(id, "scenario", {false, std::string("cannot load: ") + e.what()}); }
    std::cout << "7 of 10 criteria failed" << std::endl;
    return 1;
  }
  guarded(4, "measure conservation", [&] { return conservation(nominal); });

  PlanSolution sol;
  bool planned = false;
  guarded(5, "plan cost equals rollout cost", [&] {
    sol = solve_plan(nominal.plan_problem(), nominal.solver_settings());
    planned = true;
    const RolloutReport rep = verify_equivalence(sol, nominal.plan_problem());
    return Outcome{rep.relative_gap <= 1e-3, "eta plan " + fmt(rep.eta_plan, 8) + " kW^2, rollout " +
                                                 fmt(rep.eta_rollout, 8) + " kW^2, relative gap " +
                                                 fmt(rep.relative_gap)};
  });
  guarded(6, "program size and solve time", [&] {
    if (!planned) { return Outcome{false, "no plan"}; }
    return Outcome{sol.num_variables == 69120 && sol.solver.seconds < 600,
                   std::to_string(sol.num_variables) + " variables, " + std::to_string(sol.num_constraints) +
                       " constraints, " + std::to_string(sol.solver.iterations) + " iterations, " +
                       fmt(sol.solver.seconds, 3) + " s"};
  });

  AuditReport qos;
  bool simulated = false;
  guarded(7, "cycling and temperature QoS, 20,000 TCLs", [&] {
    if (!planned) { return Outcome{false, "no plan"}; }
    const FleetTrace trace = simulate(nominal.fleet_config(), nominal.config.n_tcl, nominal.nu_hat, nominal.config.seed,
                                      sol.policies, nominal.theta_a);
    qos = audit(trace, sol.reference, g, nominal.config.tau, nominal.config.P_agg(), nominal.excursion_bound());
    simulated = true;
    return Outcome{qos.cycling_violations == 0 && qos.min_gap_steps >= nominal.config.tau &&
                       qos.excursion_violations == 0,
                   "cycling violations " + std::to_string(qos.cycling_violations) + ", min gap " +
                       std::to_string(qos.min_gap_steps) + " steps, max excursion " + fmt(qos.max_excursion) +
                       " C (bound " + fmt(qos.excursion_bound) + " C)"};
  });
  guarded(8, "tracking RMSE / P_agg", [&] {
    if (!simulated) { return Outcome{false, "no simulation"}; }
    return Outcome{qos.rmse_ratio <= 0.05, fmt(qos.rmse_ratio * 100, 3) + " % (" + fmt(qos.rmse, 5) + " kW)"};
  });

  guarded(9, "fleet histogram converges to the model", [&] {
    ScenarioConfig c = nominal.config;
    c.noise = NoiseModel::sde;
    c.timing = SwitchTiming::model;
    c.n_tcl = 2000;
    const double small = validate_model(load_scenario(c), 10, 7).average();
    c.n_tcl = 20000;
    const double large = validate_model(load_scenario(c), 10, 7).average();
    const double ratio = small / large;
    return Outcome{ratio >= 2 && ratio <= 5, "mean TV " + fmt(small) + " (2,000) vs " + fmt(large) +
                                                 " (20,000), ratio " + fmt(ratio, 3) + ", target [2, 5]"};
  });

  guarded(10, "broadcast payload", [&] {
    if (!planned) { return Outcome{false, "no plan"}; }
    const fs::path dir = fs::temp_directory_path() / "tclcoord_acceptance";
    fs::create_directories(dir);
    const Outcome o = broadcast(nominal, sol.policies, dir);
    fs::remove_all(dir);
    return o;
  });

  if (failed.empty()) {
    std::cout << "all criteria passed" << std::endl;
    return 0;
  }
  std::cout << failed.size() << " of 10 criteria failed:";
  for (int id : failed) { std::cout << " " << id << (known_set.count(id) ? " (known)" : ""); }
  std::cout << std::endl;
  return unexpected.empty() ? 0 : 1;
}
