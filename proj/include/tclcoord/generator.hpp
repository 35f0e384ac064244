#pragma once

#include <cmath>
#include <sstream>
#include <vector>

#include <Eigen/Sparse>

#include "errors.hpp"
#include "grid.hpp"

namespace tclcoord {

using SparseMatrix = Eigen::SparseMatrix<double, Eigen::RowMajor>;
using Triplet = Eigen::Triplet<double>;

/// Thermal parameters of one TCL. Rates are per hour.
struct TclParams
{
  double R{2.0};           ///< thermal resistance [degC/kW]
  double C{1.0};           ///< thermal capacitance [kWh/degC]
  double P0{5.5};          ///< rated electrical power [kW]
  double eta{2.5};         ///< coefficient of performance
  double sigma2{0.01};     ///< Brownian variance [degC^2/h]
  double lambda_set{21.0}; ///< setpoint [degC]
};

inline void validate(const TclParams & p)
{
  if (!(p.R > 0 && p.C > 0 && p.P0 > 0 && p.eta > 0)) {
    throw InvalidParameter("params: R, C, P0 and eta must be positive");
  }
  if (!(p.sigma2 >= 0)) { throw InvalidParameter("params: sigma2 must be non-negative"); }
}

inline double minutes_to_hours(double minutes) { return minutes / 60.0; }

/// Temperature drift [degC/h].
inline double drift(double theta, Mode mode, double theta_a, const TclParams & p)
{
  const double u = mode == Mode::on ? 1.0 : 0.0;
  return -(theta - theta_a) / (p.R * p.C) - u * p.eta * p.P0 / p.C;
}

/// Power that holds the setpoint at ambient theta_a [kW].
inline double baseline_power(double theta_a, const TclParams & p)
{
  return (theta_a - p.lambda_set) / (p.eta * p.R);
}

inline double fleet_baseline(double theta_a, const TclParams & p, long n_tcl)
{
  return static_cast<double>(n_tcl) * baseline_power(theta_a, p);
}

/// Power drawn when every TCL is on [kW].
inline double aggregate_capacity(const TclParams & p, long n_tcl)
{
  return static_cast<double>(n_tcl) * p.P0;
}

/// Diffusion rate sigma^2 / dl^2 [1/h].
inline double diffusion_rate(const GridSpec & g, const TclParams & p)
{
  return p.sigma2 / (g.delta_lambda * g.delta_lambda);
}

/// Switching rate gamma that makes alpha = gamma + D equal 1/dt.
inline double gamma_for_step(const GridSpec & g, const TclParams & p, double dt_min)
{
  if (!(dt_min > 0)) { throw InvalidParameter("dt must be positive"); }
  const double dt = minutes_to_hours(dt_min);
  if (p.sigma2 > 0 && !(dt < g.delta_lambda * g.delta_lambda / p.sigma2)) {
    std::ostringstream msg;
    msg << "dt = " << dt_min << " min must be below dl^2/sigma^2 = "
        << 60.0 * g.delta_lambda * g.delta_lambda / p.sigma2 << " min";
    throw InvalidParameter(msg.str());
  }
  return 1.0 / dt - diffusion_rate(g, p);
}

/// True if off drift >= 0 and on drift <= 0 at every edge the scheme uses.
inline bool drift_signs_hold(const GridSpec & g, const TclParams & p, double theta_a)
{
  for (int j = 1; j < g.N; ++j) {
    if (drift(g.right_edge(Mode::off, j), Mode::off, theta_a, p) < 0) { return false; }
  }
  for (int j = 2; j <= g.N; ++j) {
    if (drift(g.left_edge(Mode::on, j), Mode::on, theta_a, p) > 0) { return false; }
  }
  return true;
}

/// Throws AssumptionViolation unless off drift >= 0 and on drift <= 0 at every edge the scheme uses.
inline void check_drift_signs(const GridSpec & g, const TclParams & p, double theta_a)
{
  for (int j = 1; j < g.N; ++j) {
    const double edge = g.right_edge(Mode::off, j);
    if (drift(edge, Mode::off, theta_a, p) < 0) {
      std::ostringstream msg;
      msg << "off drift is negative at " << edge << " degC for ambient " << theta_a << " degC";
      throw AssumptionViolation(msg.str());
    }
  }
  for (int j = 2; j <= g.N; ++j) {
    const double edge = g.left_edge(Mode::on, j);
    if (drift(edge, Mode::on, theta_a, p) > 0) {
      std::ostringstream msg;
      msg << "on drift is positive at " << edge << " degC for ambient " << theta_a << " degC";
      throw AssumptionViolation(msg.str());
    }
  }
}

/**
 * @brief Finite-volume generator of the on/off Fokker-Planck pair.
 *
 * Rows are "from" states, columns "to" states. Off bin j is index j-1, on bin j
 * is index N+j-1. Off mass leaves through off bin N into the on bin holding the
 * same temperature, and on mass leaves through on bin 1 into off bin m.
 */
inline SparseMatrix build_rate_matrix(const GridSpec & g, const TclParams & p, double theta_a,
                                      double gamma)
{
  validate(p);
  if (!(gamma > 0)) { throw InvalidParameter("gamma must be positive"); }
  check_drift_signs(g, p, theta_a);

  const int N = g.N;
  const double D = diffusion_rate(g, p);
  const double alpha = gamma + D;
  const auto off = [](int j) { return j - 1; };
  const auto on = [N](int j) { return N + j - 1; };

  std::vector<Triplet> t;
  t.reserve(6 * N);
  const auto row = [&t](int i, const std::vector<std::pair<int, double>> & out) {
    double total = 0;
    for (const auto & [j, rate] : out) {
      if (rate != 0) { t.emplace_back(i, j, rate); }
      total += rate;
    }
    t.emplace_back(i, i, -total);
  };

  for (int j = 1; j < N; ++j) {
    const double up = 0.5 * D + drift(g.right_edge(Mode::off, j), Mode::off, theta_a, p) / g.delta_lambda;
    std::vector<std::pair<int, double>> out{{off(j + 1), up}};
    if (j > 1) { out.emplace_back(off(j - 1), 0.5 * D); }
    row(off(j), out);
  }
  row(off(N), {{on(g.aligned_bin(Mode::off, N)), alpha}});

  row(on(1), {{off(g.m), alpha}});
  for (int j = 2; j <= N; ++j) {
    const double down = 0.5 * D - drift(g.left_edge(Mode::on, j), Mode::on, theta_a, p) / g.delta_lambda;
    std::vector<std::pair<int, double>> out{{on(j - 1), down}};
    if (j < N) { out.emplace_back(on(j + 1), 0.5 * D); }
    row(on(j), out);
  }

  SparseMatrix A(2 * N, 2 * N);
  A.setFromTriplets(t.begin(), t.end());
  return A;
}

/// Largest |row sum| of A.
inline double max_row_sum(const SparseMatrix & A)
{
  double worst = 0;
  for (int i = 0; i < A.outerSize(); ++i) {
    double s = 0;
    for (SparseMatrix::InnerIterator it(A, i); it; ++it) { s += it.value(); }
    worst = std::max(worst, std::abs(s));
  }
  return worst;
}

/// True if A has a non-positive diagonal, non-negative off-diagonal and row sums within tol.
inline bool is_rate_matrix(const SparseMatrix & A, double tol = 1e-12)
{
  for (int i = 0; i < A.outerSize(); ++i) {
    for (SparseMatrix::InnerIterator it(A, i); it; ++it) {
      if (it.col() == i ? it.value() > 0 : it.value() < 0) { return false; }
    }
  }
  return max_row_sum(A) < tol;
}

}  // namespace tclcoord
