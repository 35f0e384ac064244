#pragma once

#include <sstream>
#include <tuple>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include "errors.hpp"
#include "grid.hpp"
#include "markov.hpp"

namespace tclcoord {

/**
 * @brief Index map for the state space (mode, bin, lockout counter).
 *
 * The off block precedes the on block. Within a block the counter is major:
 * (j, l) sits at l*N + j - 1.
 */
struct ExpandedLayout
{
  int N{0};
  int tau{0};

  int block() const { return N * (tau + 1); }
  int size() const { return 2 * block(); }
  int index(Mode mode, int bin, int l) const
  {
    return (mode == Mode::on ? block() : 0) + l * N + bin - 1;
  }
};

/// Counter transitions when staying (C) and when switching (D); entry (l, l').
inline std::pair<Matrix, Matrix> lockout_matrices(int tau)
{
  if (tau < 1) { throw InvalidParameter("tau must be at least 1"); }
  Matrix Cm = Matrix::Zero(tau + 1, tau + 1);
  Matrix Dm = Matrix::Zero(tau + 1, tau + 1);
  Cm(0, 0) = 1;
  for (int l = 1; l < tau; ++l) { Cm(l, l + 1) = 1; }
  Cm(tau, 0) = 1;
  Dm.col(1).setOnes();
  return {Cm, Dm};
}

/**
 * @brief Grid-support switching probabilities, one entry per bin (index j-1).
 *
 * kappa_on(j-1) is P(switch on | off bin j) and may be nonzero for j in m+1..N-1;
 * kappa_off(j-1) is P(switch off | on bin j) and may be nonzero for j in 2..q-1.
 * The boundary entries (off N, on 1) are implied and ignored here.
 */
struct PolicyPair
{
  Vector kappa_on;
  Vector kappa_off;

  static PolicyPair zeros(int N) { return {Vector::Zero(N), Vector::Zero(N)}; }
};

inline bool in_on_support(const GridSpec & g, int off_bin) { return off_bin > g.m && off_bin < g.N; }
inline bool in_off_support(const GridSpec & g, int on_bin) { return on_bin > 1 && on_bin < g.q; }

inline void validate(const PolicyPair & gs, const GridSpec & g)
{
  if (gs.kappa_on.size() != g.N || gs.kappa_off.size() != g.N) {
    throw DimensionMismatch("policy vectors must have length N");
  }
  for (int j = 1; j <= g.N; ++j) {
    for (const auto & [value, supported, name] :
         {std::tuple{gs.kappa_on(j - 1), in_on_support(g, j), "kappa_on"},
          std::tuple{gs.kappa_off(j - 1), in_off_support(g, j), "kappa_off"}}) {
      if (!(value >= 0 && value <= 1)) {
        std::ostringstream msg;
        msg << name << " at bin " << j << " is " << value << ", outside [0, 1]";
        throw InvalidParameter(msg.str());
      }
      if (value != 0 && !supported) {
        std::ostringstream msg;
        msg << name << " at bin " << j << " must be 0, got " << value;
        throw StructureViolation(msg.str());
      }
    }
  }
}

/// Full switching probability including the fixed boundary entries.
inline double switch_probability(const PolicyPair & gs, const GridSpec & g, Mode mode, int bin)
{
  if (mode == Mode::off) { return bin == g.N ? 1.0 : (in_on_support(g, bin) ? gs.kappa_on(bin - 1) : 0.0); }
  return bin == 1 ? 1.0 : (in_off_support(g, bin) ? gs.kappa_off(bin - 1) : 0.0);
}

/// Switching probability of a locked-out state.
inline double thermostat_probability(const GridSpec & g, Mode mode, int bin)
{
  return mode == Mode::off ? (bin == g.N ? 1.0 : 0.0) : (bin == 1 ? 1.0 : 0.0);
}

/// Switching probability of every expanded state (grid support at l = 0, thermostat otherwise).
inline Vector switch_vector(const PolicyPair & gs, const GridSpec & g, int tau)
{
  const ExpandedLayout X{g.N, tau};
  Vector beta(X.size());
  for (Mode mode : {Mode::off, Mode::on}) {
    for (int l = 0; l <= tau; ++l) {
      for (int j = 1; j <= g.N; ++j) {
        beta(X.index(mode, j, l)) =
            l == 0 ? switch_probability(gs, g, mode, j) : thermostat_probability(g, mode, j);
      }
    }
  }
  return beta;
}

/**
 * @brief Expanded policy matrix, |X| x 2|X|.
 *
 * Columns are grouped as off-stay, off-switch, on-switch, on-stay, each of
 * length N(tau+1), matching the row groups of the expanded dynamics.
 */
inline SparseMatrix expand_policy(const PolicyPair & gs, const GridSpec & g, int tau)
{
  validate(gs, g);
  const ExpandedLayout X{g.N, tau};
  const int B = X.block();
  const Vector beta = switch_vector(gs, g, tau);
  std::vector<Triplet> t;
  t.reserve(2 * X.size());
  for (int s = 0; s < B; ++s) {
    t.emplace_back(s, s, 1 - beta(s));
    t.emplace_back(s, B + s, beta(s));
    t.emplace_back(B + s, 2 * B + s, beta(B + s));
    t.emplace_back(B + s, 3 * B + s, 1 - beta(B + s));
  }
  SparseMatrix Phi(X.size(), 2 * X.size());
  Phi.setFromTriplets(t.begin(), t.end());
  Phi.prune(0.0);
  return Phi;
}

inline void append_kron(std::vector<Triplet> & t, const Matrix & L, const Matrix & M, int row0,
                        int col0)
{
  for (int a = 0; a < L.rows(); ++a) {
    for (int b = 0; b < L.cols(); ++b) {
      if (L(a, b) == 0) { continue; }
      for (int i = 0; i < M.rows(); ++i) {
        for (int j = 0; j < M.cols(); ++j) {
          if (M(i, j) != 0) {
            t.emplace_back(row0 + a * M.rows() + i, col0 + b * M.cols() + j, L(a, b) * M(i, j));
          }
        }
      }
    }
  }
}

/// Expanded dynamics, 2|X| x |X|: [C (x) P_off; D (x) S_off; D (x) S_on; C (x) P_on].
inline SparseMatrix expanded_dynamics(const TransitionFactors & f, int tau)
{
  const int N = static_cast<int>(f.P_off.rows());
  const ExpandedLayout X{N, tau};
  const int B = X.block();
  const auto [Cm, Dm] = lockout_matrices(tau);
  std::vector<Triplet> t;
  append_kron(t, Cm, f.P_off, 0, 0);
  append_kron(t, Dm, f.S_off, B, B);
  append_kron(t, Dm, f.S_on, 2 * B, 0);
  append_kron(t, Cm, f.P_on, 3 * B, B);
  SparseMatrix G(2 * X.size(), X.size());
  G.setFromTriplets(t.begin(), t.end());
  return G;
}

/// Output map: aggregate power is nu . c with c = [0, P_agg 1].
inline Vector output_vector(int N, int tau, double P_agg)
{
  const ExpandedLayout X{N, tau};
  Vector c = Vector::Zero(X.size());
  c.tail(X.block()).setConstant(P_agg);
  return c;
}

/// nu <- nu Phi G, with nu held as a column vector.
inline Vector step(const Vector & nu, const SparseMatrix & Phi_E, const SparseMatrix & G_E)
{
  if (nu.size() != Phi_E.rows() || Phi_E.cols() != G_E.rows()) {
    throw DimensionMismatch("step: factor dimensions disagree with the marginal");
  }
  const Vector flows = Phi_E.transpose() * nu;
  return G_E.transpose() * flows;
}

inline double output(const Vector & nu, const Vector & c) { return nu.dot(c); }

/// Stationary law of the chain nu <- nu M for a fixed step matrix M = Phi G.
inline Vector stationary_distribution(const SparseMatrix & Phi_E, const SparseMatrix & G_E)
{
  const Matrix M = Matrix(Phi_E * G_E);
  const int n = static_cast<int>(M.rows());
  Matrix lhs = M.transpose() - Matrix::Identity(n, n);
  lhs.row(n - 1).setOnes();
  Vector rhs = Vector::Zero(n);
  rhs(n - 1) = 1;
  Vector nu = lhs.fullPivLu().solve(rhs);
  nu = nu.cwiseMax(0.0);
  return nu / nu.sum();
}

/// Marginal of the state-space point (mode, bin, l).
inline Vector point_mass(const GridSpec & g, int tau, Mode mode, int bin, int l)
{
  const ExpandedLayout X{g.N, tau};
  Vector nu = Vector::Zero(X.size());
  nu(X.index(mode, bin, l)) = 1;
  return nu;
}

}  // namespace tclcoord
