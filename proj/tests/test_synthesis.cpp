#include <random>

#include <gtest/gtest.h>

#include "support.hpp"
#include "tclcoord/scenario.hpp"
#include "tclcoord/synthesis.hpp"

using namespace tclcoord;
using tclcoord::testing::nominal_params;

namespace {

PlanProblem small_problem(int T)
{
  PlanProblem pr;
  pr.grid = build_grid(20, 22, 10, 2);
  pr.params = nominal_params();
  pr.tau = 5;
  pr.dt_min = 1.0;
  pr.n_tcl = 20000;
  for (int k = 0; k < T; ++k) { pr.theta_a.push_back(31.0 + 2.0 * k / T); }
  pr.r_ba.assign(T, 0.0);
  pr.nu_hat = thermostat_stationary(pr.grid, pr.params, pr.tau, pr.dt_min, pr.theta_a[0]);
  return pr;
}

/// Output of the model driven by a schedule, in kW.
std::vector<double> rollout_output(const PlanProblem & pr, const std::vector<PolicyPair> & schedule)
{
  const Vector c = output_vector(pr.grid.N, pr.tau, pr.P_agg());
  std::vector<double> y;
  for (const Vector & nu : propagate_schedule(pr.grid, pr.params, pr.tau, pr.dt_min, pr.nu_hat, schedule, pr.theta_a)) {
    y.push_back(output(nu, c));
  }
  return y;
}

AdmmSettings tight()
{
  AdmmSettings s;
  s.eps_abs = s.eps_rel = 1e-9;
  return s;
}

}  // namespace

TEST(Structure, GuardedSupportForNominal)
{
  const GridSpec g = build_grid(20, 22, 10, 2);
  const SwitchStructure st = switch_structure(g, 5, true);
  for (int j = 1; j <= g.N; ++j) {
    EXPECT_EQ(st.free_on[j - 1], j >= 7 && j <= 11) << "off bin " << j;
    EXPECT_EQ(st.free_off[j - 1], j >= 2 && j <= 6) << "on bin " << j;
  }
  const SwitchStructure open = switch_structure(g, 5, false);
  for (int j = 1; j <= g.N; ++j) {
    EXPECT_EQ(open.free_on[j - 1], in_on_support(g, j));
    EXPECT_EQ(open.free_off[j - 1], in_off_support(g, j));
  }
}

TEST(Layout, NominalVariableCount)
{
  const PlanLayout V{12, 5, 360};
  EXPECT_EQ(V.num_variables(), 69120);
  EXPECT_EQ(V.nx(), 144);

  PlanProblem pr = small_problem(360);
  const QpProblem qp = assemble(pr);
  EXPECT_EQ(qp.num_variables(), 69120);
  EXPECT_EQ(qp.F.rows(), 360);
}

TEST(Assemble, ThermostatWitnessIsFeasible)
{
  const PlanProblem pr = small_problem(40);
  const QpProblem qp = assemble(pr);
  EXPECT_LT(constraint_violation(qp, thermostat_witness(pr)), 1e-12);
}

TEST(Assemble, ObjectivePlusOffsetIsTrackingError)
{
  PlanProblem pr = small_problem(20);
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0, 1);
  for (double & r : pr.r_ba) { r = u(rng) * pr.P_agg(); }
  double offset = 0;
  const QpProblem qp = assemble(pr, &offset);
  const Vector x = thermostat_witness(pr);
  const std::vector<double> y = rollout_output(pr, std::vector<PolicyPair>(20, PolicyPair::zeros(pr.grid.N)));
  double err = 0;
  for (int k = 0; k < 20; ++k) { err += (pr.r_ba[k] - y[k]) * (pr.r_ba[k] - y[k]); }
  const double P2 = pr.P_agg() * pr.P_agg();
  EXPECT_NEAR((qp.objective(x) + offset) * P2, err, 1e-9 * err);
}

TEST(Plan, ReachableTargetHasZeroCost)
{
  PlanProblem pr = small_problem(30);
  const SwitchStructure st = switch_structure(pr.grid, pr.tau, true);
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(0, 0.3);
  std::vector<PolicyPair> schedule;
  for (int k = 0; k < 30; ++k) {
    PolicyPair p = PolicyPair::zeros(pr.grid.N);
    for (int j = 1; j <= pr.grid.N; ++j) {
      if (st.free_on[j - 1]) { p.kappa_on(j - 1) = u(rng); }
      if (st.free_off[j - 1]) { p.kappa_off(j - 1) = u(rng); }
    }
    schedule.push_back(p);
  }
  pr.r_ba = rollout_output(pr, schedule);
  pr.monotone = false;

  const PlanSolution sol = solve_plan(pr, tight());
  EXPECT_LT(sol.eta_normalized, 1e-7);
  const RolloutReport rep = verify_equivalence(sol, pr);
  EXPECT_LT(rep.max_marginal_gap, 1e-5);
  EXPECT_LT(std::sqrt(rep.eta_rollout) / pr.P_agg(), 1e-4);
}

TEST(Plan, RolloutMatchesProgramCost)
{
  PlanProblem pr = small_problem(40);
  for (int k = 0; k < 40; ++k) { pr.r_ba[k] = pr.P_agg() * (0.35 + 0.15 * std::sin(k / 5.0)); }
  const PlanSolution sol = solve_plan(pr, tight());
  ASSERT_TRUE(sol.solver.converged);
  const RolloutReport rep = verify_equivalence(sol, pr);
  EXPECT_LT(rep.relative_gap, 1e-3);
  EXPECT_LT(rep.max_marginal_gap, 1e-5);

  const SwitchStructure st = switch_structure(pr.grid, pr.tau, true);
  for (const PolicyPair & p : sol.policies) {
    EXPECT_NO_THROW(validate(p, pr.grid));
    for (int j = 1; j <= pr.grid.N; ++j) {
      if (!st.free_on[j - 1]) { EXPECT_EQ(p.kappa_on(j - 1), 0.0); }
      if (!st.free_off[j - 1]) { EXPECT_EQ(p.kappa_off(j - 1), 0.0); }
    }
  }
  for (int k = 0; k < 40; ++k) {
    EXPECT_LT(extraction_identity_residual(sol.joints[k], sol.policies[k], pr.grid, pr.tau), 1e-12);
  }
}

TEST(Plan, MonotoneJointOrdering)
{
  PlanProblem pr = small_problem(30);
  for (int k = 0; k < 30; ++k) { pr.r_ba[k] = pr.P_agg() * (k % 10 < 5 ? 0.15 : 0.6); }
  const PlanSolution sol = solve_plan(pr, tight());
  const PlanLayout V{pr.grid.N, pr.tau, 30};
  const GridSpec & g = pr.grid;
  for (int k = 0; k < 30; ++k) {
    for (int j = g.m + 2; j <= g.N - 1; ++j) {
      EXPECT_LE(sol.solver.x(V.off_switch(k, j - 1)), sol.solver.x(V.off_switch(k, j)) + 1e-6);
    }
    for (int j = 2; j + 1 <= g.q - 1; ++j) {
      EXPECT_LE(sol.solver.x(V.on_switch(k, j + 1)), sol.solver.x(V.on_switch(k, j)) + 1e-6);
    }
  }
}

TEST(Extract, RatiosTiesAndEmptyStates)
{
  const GridSpec g = build_grid(20, 22, 10, 2);
  const int tau = 5;
  const ExpandedLayout X{g.N, tau};
  const SwitchStructure st = switch_structure(g, tau, true);
  StepJoint J;
  J.nu = Vector::Zero(X.size());
  J.off_stay = J.off_switch = J.on_stay = J.on_switch = Vector::Zero(g.N);
  // off bin 8 carries mass 0.4 of which 0.1 switches; off N forced; on bin 3 empty
  J.nu(X.index(Mode::off, 8, 0)) = 0.4;
  J.off_switch(7) = 0.1;
  J.off_stay(7) = 0.3;
  J.nu(X.index(Mode::off, g.N, 0)) = 0.2;
  J.off_switch(g.N - 1) = 0.2;
  J.nu(X.index(Mode::on, 5, 0)) = 0.4;
  J.on_stay(4) = 0.4;

  const PolicyPair p = extract_policy(J, g, tau, st);
  EXPECT_DOUBLE_EQ(p.kappa_on(7), 0.25);
  EXPECT_DOUBLE_EQ(p.kappa_off(4), 0.0);
  EXPECT_DOUBLE_EQ(p.kappa_on(8), 0.5);   // free, no mass
  EXPECT_DOUBLE_EQ(p.kappa_off(2), 0.5);  // free, no mass
  EXPECT_DOUBLE_EQ(p.kappa_on(3), 0.0);   // tied
  EXPECT_DOUBLE_EQ(switch_probability(p, g, Mode::off, g.N), 1.0);
  EXPECT_LT(extraction_identity_residual(J, p, g, tau), 1e-15);

  StepJoint bad = J;
  bad.off_switch(g.N - 1) = 0.1;  // a forced switch that does not happen
  EXPECT_THROW(extract_policy(bad, g, tau, st), ConstraintResidual);
}

TEST(Validate, RejectsMalformedProblems)
{
  PlanProblem pr = small_problem(5);
  PlanProblem a = pr;
  a.theta_a.pop_back();
  EXPECT_THROW(assemble(a), DimensionMismatch);
  PlanProblem b = pr;
  b.nu_hat = Vector::Zero(3);
  EXPECT_THROW(assemble(b), DimensionMismatch);
  PlanProblem c = pr;
  c.nu_hat *= 2;
  EXPECT_THROW(assemble(c), InvalidParameter);
  PlanProblem d = pr;
  d.r_ba.clear();
  d.theta_a.clear();
  EXPECT_THROW(assemble(d), InvalidParameter);
}
