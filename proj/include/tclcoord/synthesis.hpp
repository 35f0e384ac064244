#pragma once

#include <algorithm>
#include <cmath>
#include <sstream>
#include <vector>

#include <Eigen/Sparse>

#include "errors.hpp"
#include "expanded.hpp"
#include "generator.hpp"
#include "grid.hpp"
#include "markov.hpp"
#include "qp_admm.hpp"

namespace tclcoord {

/// Planning inputs. Power is in kW, temperatures in degC, the step in minutes.
struct PlanProblem
{
  GridSpec grid;
  TclParams params;
  int tau{5};
  double dt_min{1.0};
  long n_tcl{20000};
  std::vector<double> r_ba;     ///< target per step
  std::vector<double> theta_a;  ///< ambient per step
  Vector nu_hat;                ///< initial expanded marginal
  bool monotone{true};
  /// Forbid grid-support switches close enough to the deadband edge that the
  /// thermostat would force a second switch during the lockout.
  bool cycling_guard{true};

  int horizon() const { return static_cast<int>(r_ba.size()); }
  double P_agg() const { return aggregate_capacity(params, n_tcl); }
};

/**
 * @brief Which l = 0 switching entries are decision variables.
 *
 * free_on[j-1] refers to off bin j, free_off[j-1] to on bin j. Entries that are
 * not free are tied to the thermostat value (1 at off N and on 1, 0 otherwise).
 */
struct SwitchStructure
{
  std::vector<bool> free_on;
  std::vector<bool> free_off;
};

inline SwitchStructure switch_structure(const GridSpec & g, int tau, bool cycling_guard)
{
  SwitchStructure s{std::vector<bool>(g.N, false), std::vector<bool>(g.N, false)};
  for (int j = 1; j <= g.N; ++j) {
    // within-mode motion is at most one bin per step, so a switch from these bins
    // cannot reach the opposite boundary before the counter returns to 0
    s.free_on[j - 1] = in_on_support(g, j) && (!cycling_guard || j >= g.m + tau);
    s.free_off[j - 1] = in_off_support(g, j) && (!cycling_guard || j <= g.q - tau + 1);
  }
  return s;
}

/// Variable offsets of the planning program: per step [nu, B_oo, B_on, B_onoff, B_onon].
struct PlanLayout
{
  int N{0};
  int tau{0};
  int T{0};

  int nx() const { return 2 * N * (tau + 1); }
  int per_step() const { return nx() + 4 * N; }
  int num_variables() const { return per_step() * T; }
  int nu(int k, int s) const { return k * per_step() + s; }
  int off_stay(int k, int j) const { return k * per_step() + nx() + j - 1; }
  int off_switch(int k, int j) const { return off_stay(k, j) + N; }
  int on_switch(int k, int j) const { return off_stay(k, j) + 2 * N; }
  int on_stay(int k, int j) const { return off_stay(k, j) + 3 * N; }
};

/// One step of the sparse joint: marginal plus the l = 0 diagonal blocks (length N each).
struct StepJoint
{
  Vector nu;
  Vector off_stay;
  Vector off_switch;
  Vector on_switch;
  Vector on_stay;
};

struct PlanSolution
{
  std::vector<double> reference;      ///< r_k [kW]
  std::vector<Vector> marginals;      ///< optimal nu_k
  std::vector<StepJoint> joints;      ///< repaired joints
  std::vector<PolicyPair> policies;   ///< extracted schedule
  double eta{0};                      ///< optimal cost [kW^2]
  double eta_normalized{0};           ///< optimal cost in units of P_agg^2
  int num_variables{0};
  int num_constraints{0};
  AdmmResult solver;
};

inline void validate(const PlanProblem & pr)
{
  if (pr.horizon() < 1) { throw InvalidParameter("plan: horizon must be at least 1"); }
  if (static_cast<int>(pr.theta_a.size()) != pr.horizon()) {
    throw DimensionMismatch("plan: ambient series length differs from the horizon");
  }
  const ExpandedLayout X{pr.grid.N, pr.tau};
  if (pr.nu_hat.size() != X.size()) { throw DimensionMismatch("plan: nu_hat has the wrong length"); }
  if (pr.nu_hat.minCoeff() < 0 || std::abs(pr.nu_hat.sum() - 1) > 1e-9) {
    throw InvalidParameter("plan: nu_hat must be a probability vector");
  }
}

/// Flow map L with flows = L x_k, flows ordered as the rows of the expanded dynamics.
inline SparseMatrix flow_map(const GridSpec & g, int tau)
{
  const ExpandedLayout X{g.N, tau};
  const PlanLayout V{g.N, tau, 1};
  const int B = X.block();
  std::vector<Triplet> t;
  for (Mode mode : {Mode::off, Mode::on}) {
    const int stay_row = mode == Mode::off ? 0 : 3 * B;
    const int switch_row = mode == Mode::off ? B : 2 * B;
    for (int l = 0; l <= tau; ++l) {
      for (int j = 1; j <= g.N; ++j) {
        const int s = X.index(mode, j, l) - (mode == Mode::on ? B : 0);
        if (l == 0) {
          t.emplace_back(stay_row + s, mode == Mode::off ? V.off_stay(0, j) : V.on_stay(0, j), 1.0);
          t.emplace_back(switch_row + s, mode == Mode::off ? V.off_switch(0, j) : V.on_switch(0, j), 1.0);
          continue;
        }
        const double beta = thermostat_probability(g, mode, j);
        const int col = V.nu(0, X.index(mode, j, l));
        if (beta < 1) { t.emplace_back(stay_row + s, col, 1 - beta); }
        if (beta > 0) { t.emplace_back(switch_row + s, col, beta); }
      }
    }
  }
  SparseMatrix L(2 * X.size(), V.per_step());
  L.setFromTriplets(t.begin(), t.end());
  return L;
}

/**
 * @brief Convex program over the sparse joint distributions.
 *
 * The cost sum_k (r_k/P_agg - c'nu_k)^2 is expressed as 1/2 |F x|^2 + q'x plus
 * a constant returned through offset (all in units of P_agg^2).
 */
inline QpProblem assemble(const PlanProblem & pr, double * offset = nullptr)
{
  validate(pr);
  const GridSpec & g = pr.grid;
  const int N = g.N;
  const int T = pr.horizon();
  const PlanLayout V{N, pr.tau, T};
  const ExpandedLayout X{N, pr.tau};
  const int nx = X.size();
  const SwitchStructure st = switch_structure(g, pr.tau, pr.cycling_guard);
  const SparseMatrix L = flow_map(g, pr.tau);
  const double P_agg = pr.P_agg();
  constexpr double inf = std::numeric_limits<double>::infinity();

  std::vector<Triplet> a;
  std::vector<double> lo, hi;
  int row = 0;
  const auto bound = [&](double l, double u) {
    lo.push_back(l);
    hi.push_back(u);
    ++row;
  };

  for (int s = 0; s < nx; ++s) {
    a.emplace_back(row, V.nu(0, s), 1.0);
    bound(pr.nu_hat(s), pr.nu_hat(s));
  }

  for (int k = 0; k + 1 < T; ++k) {
    const TransitionFactors f = step_factors(g, pr.params, pr.theta_a[k], pr.dt_min);
    const SparseMatrix GE = expanded_dynamics(f, pr.tau);
    const SparseMatrix M = SparseMatrix(GE.transpose() * L);
    for (int i = 0; i < M.outerSize(); ++i) {
      for (SparseMatrix::InnerIterator it(M, i); it; ++it) {
        a.emplace_back(row, k * V.per_step() + it.col(), it.value());
      }
      a.emplace_back(row, V.nu(k + 1, i), -1.0);
      bound(0, 0);
    }
  }

  for (int k = 0; k < T; ++k) {
    for (int j = 1; j <= N; ++j) {
      a.emplace_back(row, V.off_stay(k, j), 1.0);
      a.emplace_back(row, V.off_switch(k, j), 1.0);
      a.emplace_back(row, V.nu(k, X.index(Mode::off, j, 0)), -1.0);
      bound(0, 0);
      a.emplace_back(row, V.on_stay(k, j), 1.0);
      a.emplace_back(row, V.on_switch(k, j), 1.0);
      a.emplace_back(row, V.nu(k, X.index(Mode::on, j, 0)), -1.0);
      bound(0, 0);
    }
    for (int j = 1; j <= N; ++j) {
      if (!st.free_on[j - 1]) {
        a.emplace_back(row, V.off_switch(k, j), 1.0);
        const double beta = thermostat_probability(g, Mode::off, j);
        if (beta != 0) { a.emplace_back(row, V.nu(k, X.index(Mode::off, j, 0)), -beta); }
        bound(0, 0);
      }
      if (!st.free_off[j - 1]) {
        a.emplace_back(row, V.on_switch(k, j), 1.0);
        const double beta = thermostat_probability(g, Mode::on, j);
        if (beta != 0) { a.emplace_back(row, V.nu(k, X.index(Mode::on, j, 0)), -beta); }
        bound(0, 0);
      }
    }
    if (pr.monotone) {
      for (int j = g.m + 2; j <= N - 1; ++j) {
        if (!st.free_on[j - 1] && !st.free_on[j - 2]) { continue; }
        a.emplace_back(row, V.off_switch(k, j - 1), 1.0);
        a.emplace_back(row, V.off_switch(k, j), -1.0);
        bound(-inf, 0);
      }
      for (int j = 2; j + 1 <= g.q - 1; ++j) {
        if (!st.free_off[j - 1] && !st.free_off[j]) { continue; }
        a.emplace_back(row, V.on_switch(k, j + 1), 1.0);
        a.emplace_back(row, V.on_switch(k, j), -1.0);
        bound(-inf, 0);
      }
    }
  }

  const int n = V.num_variables();
  for (int i = 0; i < n; ++i) {
    a.emplace_back(row, i, 1.0);
    bound(0, 1);
  }

  QpProblem qp;
  qp.A.resize(row, n);
  qp.A.setFromTriplets(a.begin(), a.end());
  qp.l = Eigen::Map<Vector>(lo.data(), row);
  qp.u = Eigen::Map<Vector>(hi.data(), row);

  // cost: |sqrt2 (c'nu_k) - sqrt2 r_k|^2 / 2
  std::vector<Triplet> f;
  Vector r(T);
  for (int k = 0; k < T; ++k) {
    r(k) = pr.r_ba[k] / P_agg;
    for (int s = X.block(); s < nx; ++s) { f.emplace_back(k, V.nu(k, s), std::sqrt(2.0)); }
  }
  qp.F.resize(T, n);
  qp.F.setFromTriplets(f.begin(), f.end());
  qp.q = -std::sqrt(2.0) * (qp.F.transpose() * r);
  if (offset) { *offset = r.squaredNorm(); }
  return qp;
}

/// Feasible point generated by the thermostat policy from nu_hat.
inline Vector thermostat_witness(const PlanProblem & pr)
{
  const PlanLayout V{pr.grid.N, pr.tau, pr.horizon()};
  const ExpandedLayout X{pr.grid.N, pr.tau};
  const PolicyPair ts = PolicyPair::zeros(pr.grid.N);
  const SparseMatrix Phi = expand_policy(ts, pr.grid, pr.tau);
  Vector x = Vector::Zero(V.num_variables());
  Vector nu = pr.nu_hat;
  for (int k = 0; k < pr.horizon(); ++k) {
    x.segment(V.nu(k, 0), X.size()) = nu;
    for (int j = 1; j <= pr.grid.N; ++j) {
      const double voff = nu(X.index(Mode::off, j, 0));
      const double von = nu(X.index(Mode::on, j, 0));
      const double boff = thermostat_probability(pr.grid, Mode::off, j);
      const double bon = thermostat_probability(pr.grid, Mode::on, j);
      x(V.off_switch(k, j)) = boff * voff;
      x(V.off_stay(k, j)) = (1 - boff) * voff;
      x(V.on_switch(k, j)) = bon * von;
      x(V.on_stay(k, j)) = (1 - bon) * von;
    }
    if (k + 1 < pr.horizon()) {
      const auto f = step_factors(pr.grid, pr.params, pr.theta_a[k], pr.dt_min);
      nu = step(nu, Phi, expanded_dynamics(f, pr.tau));
    }
  }
  return x;
}

/// Largest violation of l <= A x <= u.
inline double constraint_violation(const QpProblem & qp, const Vector & x)
{
  const Vector Ax = qp.A * x;
  return std::max((qp.l - Ax).maxCoeff(), (Ax - qp.u).maxCoeff());
}

/// Per-step joint read off the solution vector, projected onto the per-step constraints.
inline StepJoint repair_joint(const Vector & x, int k, const PlanLayout & V, const GridSpec & g,
                              const SwitchStructure & st)
{
  const ExpandedLayout X{g.N, V.tau};
  StepJoint J;
  J.nu = x.segment(V.nu(k, 0), X.size()).cwiseMax(0.0);
  J.off_stay.resize(g.N);
  J.off_switch.resize(g.N);
  J.on_switch.resize(g.N);
  J.on_stay.resize(g.N);
  for (int j = 1; j <= g.N; ++j) {
    const double voff = J.nu(X.index(Mode::off, j, 0));
    const double von = J.nu(X.index(Mode::on, j, 0));
    const double sw_on = st.free_on[j - 1] ? std::clamp(x(V.off_switch(k, j)), 0.0, voff)
                                           : thermostat_probability(g, Mode::off, j) * voff;
    const double sw_off = st.free_off[j - 1] ? std::clamp(x(V.on_switch(k, j)), 0.0, von)
                                             : thermostat_probability(g, Mode::on, j) * von;
    J.off_switch(j - 1) = sw_on;
    J.off_stay(j - 1) = voff - sw_on;
    J.on_switch(j - 1) = sw_off;
    J.on_stay(j - 1) = von - sw_off;
  }
  return J;
}

/// Largest residual of the per-step row-mass and fixed-entry ties.
inline double joint_residual(const StepJoint & J, const GridSpec & g, int tau, const SwitchStructure & st)
{
  const ExpandedLayout X{g.N, tau};
  double worst = 0;
  for (int j = 1; j <= g.N; ++j) {
    const double voff = J.nu(X.index(Mode::off, j, 0));
    const double von = J.nu(X.index(Mode::on, j, 0));
    worst = std::max(worst, std::abs(J.off_stay(j - 1) + J.off_switch(j - 1) - voff));
    worst = std::max(worst, std::abs(J.on_stay(j - 1) + J.on_switch(j - 1) - von));
    if (!st.free_on[j - 1]) {
      worst = std::max(worst, std::abs(J.off_switch(j - 1) - thermostat_probability(g, Mode::off, j) * voff));
    }
    if (!st.free_off[j - 1]) {
      worst = std::max(worst, std::abs(J.on_switch(j - 1) - thermostat_probability(g, Mode::on, j) * von));
    }
  }
  for (int i = 0; i < J.nu.size(); ++i) { worst = std::max(worst, -J.nu(i)); }
  return worst;
}

/**
 * @brief Policy whose product with the marginal reproduces the joint.
 *
 * States with mass above eps get switch/mass. Massless states get the tied value
 * when the entry is fixed and an even split otherwise.
 */
inline PolicyPair extract_policy(const StepJoint & J, const GridSpec & g, int tau,
                                 const SwitchStructure & st, double eps = 1e-10, double tol = 1e-8)
{
  const double res = joint_residual(J, g, tau, st);
  if (res > tol) {
    std::ostringstream msg;
    msg << "extract: joint violates the program constraints by " << res;
    throw ConstraintResidual(msg.str(), res);
  }
  const ExpandedLayout X{g.N, tau};
  PolicyPair p = PolicyPair::zeros(g.N);
  for (int j = 1; j <= g.N; ++j) {
    if (st.free_on[j - 1]) {
      const double v = J.nu(X.index(Mode::off, j, 0));
      p.kappa_on(j - 1) = v > eps ? std::clamp(J.off_switch(j - 1) / v, 0.0, 1.0) : 0.5;
    }
    if (st.free_off[j - 1]) {
      const double v = J.nu(X.index(Mode::on, j, 0));
      p.kappa_off(j - 1) = v > eps ? std::clamp(J.on_switch(j - 1) / v, 0.0, 1.0) : 0.5;
    }
  }
  return p;
}

/// max |diag(nu) Phi - J| over the l = 0 blocks.
inline double extraction_identity_residual(const StepJoint & J, const PolicyPair & p,
                                           const GridSpec & g, int tau)
{
  const ExpandedLayout X{g.N, tau};
  double worst = 0;
  for (int j = 1; j <= g.N; ++j) {
    const double voff = J.nu(X.index(Mode::off, j, 0));
    const double von = J.nu(X.index(Mode::on, j, 0));
    const double kon = switch_probability(p, g, Mode::off, j);
    const double koff = switch_probability(p, g, Mode::on, j);
    worst = std::max({worst, std::abs(voff * kon - J.off_switch(j - 1)),
                      std::abs(voff * (1 - kon) - J.off_stay(j - 1)),
                      std::abs(von * koff - J.on_switch(j - 1)),
                      std::abs(von * (1 - koff) - J.on_stay(j - 1))});
  }
  return worst;
}

/// Solve the planning program and extract the policy schedule.
inline PlanSolution solve_plan(const PlanProblem & pr, const AdmmSettings & settings = {})
{
  double offset = 0;
  const QpProblem qp = assemble(pr, &offset);
  const AdmmResult res = AdmmSolver(settings).solve(qp);

  const PlanLayout V{pr.grid.N, pr.tau, pr.horizon()};
  const ExpandedLayout X{pr.grid.N, pr.tau};
  const SwitchStructure st = switch_structure(pr.grid, pr.tau, pr.cycling_guard);
  const double P_agg = pr.P_agg();

  PlanSolution sol;
  sol.solver = res;
  sol.num_variables = qp.num_variables();
  sol.num_constraints = qp.num_constraints();
  sol.eta_normalized = std::max(0.0, res.objective + offset);
  sol.eta = P_agg * P_agg * sol.eta_normalized;
  for (int k = 0; k < pr.horizon(); ++k) {
    StepJoint J = repair_joint(res.x, k, V, pr.grid, st);
    sol.policies.push_back(extract_policy(J, pr.grid, pr.tau, st));
    sol.marginals.push_back(res.x.segment(V.nu(k, 0), X.size()));
    sol.reference.push_back(std::clamp(P_agg * sol.marginals.back().tail(X.block()).sum(), 0.0, P_agg));
    sol.joints.push_back(std::move(J));
  }
  return sol;
}

struct RolloutReport
{
  double eta_rollout{0};         ///< [kW^2]
  double eta_plan{0};            ///< [kW^2]
  double relative_gap{0};        ///< |eta_rollout - eta_plan| / max(1, eta_plan)
  double max_marginal_gap{0};    ///< max_k |nu_rollout - nu_plan|_inf
  std::vector<double> output;    ///< rollout power [kW]
};

/// Propagate nu_hat with the extracted policies and compare against the program.
inline RolloutReport verify_equivalence(const PlanSolution & sol, const PlanProblem & pr)
{
  const double P_agg = pr.P_agg();
  const Vector c = output_vector(pr.grid.N, pr.tau, P_agg);
  RolloutReport rep;
  Vector nu = pr.nu_hat;
  for (int k = 0; k < pr.horizon(); ++k) {
    const double y = output(nu, c);
    rep.output.push_back(y);
    rep.eta_rollout += (pr.r_ba[k] - y) * (pr.r_ba[k] - y);
    rep.max_marginal_gap = std::max(rep.max_marginal_gap, (nu - sol.marginals[k]).cwiseAbs().maxCoeff());
    if (k + 1 < pr.horizon()) {
      const auto f = step_factors(pr.grid, pr.params, pr.theta_a[k], pr.dt_min);
      nu = step(nu, expand_policy(sol.policies[k], pr.grid, pr.tau), expanded_dynamics(f, pr.tau));
    }
  }
  rep.eta_plan = sol.eta;
  rep.relative_gap = std::abs(rep.eta_rollout - rep.eta_plan) / std::max(1.0, rep.eta_plan);
  return rep;
}

}  // namespace tclcoord
