#pragma once

#include <cmath>
#include <limits>
#include <sstream>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include "errors.hpp"
#include "generator.hpp"
#include "grid.hpp"

namespace tclcoord {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Largest admissible step for P = I + dt*A, in minutes.
inline double cfl_bound_minutes(const SparseMatrix & A)
{
  double worst = 0;
  for (int i = 0; i < A.rows(); ++i) { worst = std::max(worst, std::abs(A.coeff(i, i))); }
  return worst > 0 ? 60.0 / worst : std::numeric_limits<double>::infinity();
}

/**
 * @brief Largest step [min] for which alpha = 1/dt keeps I + dt*A stochastic.
 *
 * The boundary rows then sit exactly at the bound; the interior rows do not
 * depend on gamma. The dl^2/sigma^2 limit is strict, so it is backed off by a
 * relative 1e-9.
 */
inline double max_stable_step_minutes(const GridSpec & g, const TclParams & p, double theta_a)
{
  const SparseMatrix A = build_rate_matrix(g, p, theta_a, 1.0);
  double worst = 0;
  for (int i = 0; i < A.rows(); ++i) {
    if (i == g.N - 1 || i == g.N) { continue; }
    worst = std::max(worst, std::abs(A.coeff(i, i)));
  }
  double dt = worst > 0 ? 60.0 / worst : std::numeric_limits<double>::infinity();
  if (p.sigma2 > 0) { dt = std::min(dt, 60.0 * g.delta_lambda * g.delta_lambda / p.sigma2 * (1 - 1e-9)); }
  return dt;
}

/**
 * @brief One-step transition matrix P = I + dt*A with dt in minutes.
 *
 * Diagonal entries that land within rounding of zero are set to zero so that a
 * step taken exactly at the bound yields an exact absorbing-free row.
 */
inline SparseMatrix transition_matrix(const SparseMatrix & A, double dt_min)
{
  if (!(dt_min > 0)) { throw InvalidParameter("dt must be positive"); }
  constexpr double rel_tol = 1e-12;
  const double dt = minutes_to_hours(dt_min);

  std::vector<Triplet> t;
  t.reserve(A.nonZeros() + A.rows());
  for (int i = 0; i < A.outerSize(); ++i) {
    bool has_diag = false;
    for (SparseMatrix::InnerIterator it(A, i); it; ++it) {
      if (it.col() != i) {
        t.emplace_back(i, it.col(), dt * it.value());
        continue;
      }
      has_diag = true;
      const double scaled = dt * it.value();
      if (scaled < -1.0 - rel_tol) {
        std::ostringstream msg;
        msg << "CFL: dt = " << dt_min << " min exceeds 1/|A_ii| = " << cfl_bound_minutes(A)
            << " min at row " << i << " (A_ii = " << it.value() << " 1/h)";
        throw CflViolation(msg.str(), i, it.value(), minutes_to_hours(cfl_bound_minutes(A)));
      }
      const double d = 1.0 + scaled;
      t.emplace_back(i, i, std::abs(d) <= rel_tol ? 0.0 : d);
    }
    if (!has_diag) { t.emplace_back(i, i, 1.0); }
  }
  SparseMatrix P(A.rows(), A.cols());
  P.setFromTriplets(t.begin(), t.end());
  return P;
}

inline bool is_stochastic(const SparseMatrix & P, double tol = 1e-12)
{
  for (int i = 0; i < P.outerSize(); ++i) {
    double s = 0;
    for (SparseMatrix::InnerIterator it(P, i); it; ++it) {
      if (it.value() < -tol || it.value() > 1 + tol) { return false; }
      s += it.value();
    }
    if (std::abs(s - 1) > tol) { return false; }
  }
  return true;
}

/// Thermostat switching probabilities per bin: off switches only at bin N, on only at bin 1.
struct ThermostatPolicy
{
  Vector off;  ///< P(switch on | off, bin)
  Vector on;   ///< P(switch off | on, bin)
};

inline ThermostatPolicy thermostat_policy(const GridSpec & g)
{
  ThermostatPolicy ts{Vector::Zero(g.N), Vector::Zero(g.N)};
  ts.off(g.N - 1) = 1;
  ts.on(0) = 1;
  return ts;
}

/**
 * @brief Factors of P = Phi_TS * G.
 *
 * G stacks four N x N blocks row-wise: off-stay, off-switch, on-switch, on-stay.
 * The stay blocks are the policy-free matrices P_off, P_on; the switch blocks are
 * the shifted S_off, S_on that carry the mode change.
 */
struct TransitionFactors
{
  Matrix P_off;
  Matrix P_on;
  Matrix S_off;
  Matrix S_on;
  Matrix Phi_TS;  ///< 2N x 4N
  Matrix G;       ///< 4N x 2N
};

inline Matrix policy_free_off(const SparseMatrix & P, const GridSpec & g)
{
  const int N = g.N;
  Matrix Poff = Matrix(P.toDense().topLeftCorner(N, N));
  Poff.row(N - 1).setZero();
  Poff(N - 1, N - 1) = 1;
  return Poff;
}

inline Matrix policy_free_on(const SparseMatrix & P, const GridSpec & g)
{
  const int N = g.N;
  Matrix Pon = Matrix(P.toDense().bottomRightCorner(N, N));
  Pon.row(0).setZero();
  Pon(0, 0) = 1;
  return Pon;
}

/// S_off(i, j-(m-1)) = P_off(i, j) on {m..N}^2, zero elsewhere.
inline Matrix shifted_off(const Matrix & P_off, const GridSpec & g)
{
  Matrix S = Matrix::Zero(g.N, g.N);
  const int s = g.m - 1;
  for (int i = g.m; i <= g.N; ++i) {
    for (int j = g.m; j <= g.N; ++j) { S(i - 1, j - s - 1) = P_off(i - 1, j - 1); }
  }
  return S;
}

/// S_on(i, j+(m-1)) = P_on(i, j) on {1..q}^2, zero elsewhere.
inline Matrix shifted_on(const Matrix & P_on, const GridSpec & g)
{
  Matrix S = Matrix::Zero(g.N, g.N);
  const int s = g.m - 1;
  for (int i = 1; i <= g.q; ++i) {
    for (int j = 1; j <= g.q; ++j) { S(i - 1, j + s - 1) = P_on(i - 1, j - 1); }
  }
  return S;
}

inline TransitionFactors factorize(const SparseMatrix & P, const GridSpec & g, double tol = 1e-12)
{
  const int N = g.N;
  if (P.rows() != 2 * N || P.cols() != 2 * N) {
    throw DimensionMismatch("factorize: P must be 2N x 2N");
  }
  TransitionFactors f;
  f.P_off = policy_free_off(P, g);
  f.P_on = policy_free_on(P, g);
  f.S_off = shifted_off(f.P_off, g);
  f.S_on = shifted_on(f.P_on, g);

  const auto ts = thermostat_policy(g);
  f.Phi_TS = Matrix::Zero(2 * N, 4 * N);
  for (int i = 0; i < N; ++i) {
    f.Phi_TS(i, i) = 1 - ts.off(i);
    f.Phi_TS(i, N + i) = ts.off(i);
    f.Phi_TS(N + i, 2 * N + i) = ts.on(i);
    f.Phi_TS(N + i, 3 * N + i) = 1 - ts.on(i);
  }

  f.G = Matrix::Zero(4 * N, 2 * N);
  f.G.block(0, 0, N, N) = f.P_off;
  f.G.block(N, N, N, N) = f.S_off;
  f.G.block(2 * N, 0, N, N) = f.S_on;
  f.G.block(3 * N, N, N, N) = f.P_on;

  const double dev = (f.Phi_TS * f.G - P.toDense()).cwiseAbs().maxCoeff();
  if (!(dev < tol)) {
    std::ostringstream msg;
    msg << "factorize: max |Phi_TS G - P| = " << dev << " (was alpha = 1/dt used?)";
    throw FactorizationMismatch(msg.str(), dev);
  }
  return f;
}

/// Factors for ambient theta_a with alpha tied to the step, all in one call.
inline TransitionFactors step_factors(const GridSpec & g, const TclParams & p, double theta_a,
                                      double dt_min)
{
  const SparseMatrix A = build_rate_matrix(g, p, theta_a, gamma_for_step(g, p, dt_min));
  return factorize(transition_matrix(A, dt_min), g);
}

}  // namespace tclcoord
