#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "errors.hpp"

namespace tclcoord {

enum class Mode { off = 0, on = 1 };

inline const char * to_string(Mode mode) { return mode == Mode::on ? "on" : "off"; }

/**
 * @brief Control-volume layout of the on and off temperature axes.
 *
 * Bins are numbered 1..N. Storage in the node vectors is zero based, so bin j
 * lives at index j-1. Off bin j and on bin j-(m-1) share a node for j >= m.
 */
struct GridSpec
{
  int N{0};
  int q{0};
  int m{0};
  double lambda_min{0};
  double lambda_max{0};
  double delta_lambda{0};
  std::vector<double> nodes_on;
  std::vector<double> nodes_off;

  double node(Mode mode, int bin) const
  {
    return mode == Mode::on ? nodes_on.at(bin - 1) : nodes_off.at(bin - 1);
  }
  double left_edge(Mode mode, int bin) const { return node(mode, bin) - 0.5 * delta_lambda; }
  double right_edge(Mode mode, int bin) const { return node(mode, bin) + 0.5 * delta_lambda; }

  /// Bin on the other axis holding the same temperature, or 0 if outside it.
  int aligned_bin(Mode from, int bin) const
  {
    const int j = from == Mode::off ? bin - (m - 1) : bin + (m - 1);
    return (j >= 1 && j <= N) ? j : 0;
  }
};

inline GridSpec build_grid(double lambda_min, double lambda_max, int q, int m)
{
  if (!(lambda_max > lambda_min)) {
    throw InvalidParameter("grid: lambda_max must exceed lambda_min");
  }
  if (q < 3) { throw InvalidParameter("grid: q must be at least 3"); }
  if (m < 1) { throw InvalidParameter("grid: m must be at least 1"); }

  GridSpec g;
  g.q = q;
  g.m = m;
  g.N = q + m;
  g.lambda_min = lambda_min;
  g.lambda_max = lambda_max;
  g.delta_lambda = (lambda_max - lambda_min) / (q - 1);
  g.nodes_off.resize(g.N);
  g.nodes_on.resize(g.N);
  for (int j = 1; j <= g.N; ++j) {
    // off node m sits half a cell below the deadband
    g.nodes_off[j - 1] = lambda_min + (j - m - 0.5) * g.delta_lambda;
    g.nodes_on[j - 1] = lambda_min + (j - 1.5) * g.delta_lambda;
  }
  return g;
}

/// Bin whose half-open interval [node - dl/2, node + dl/2) contains theta, clamped to 1..N.
inline int bin_temperature(double theta, Mode mode, const GridSpec & g)
{
  const double cells = std::floor((theta - g.lambda_min) / g.delta_lambda);
  if (!std::isfinite(cells)) { return cells > 0 ? g.N : 1; }
  const double offset = mode == Mode::off ? g.m + 1 : 2;
  const double j = std::clamp(cells + offset, 1.0, static_cast<double>(g.N));
  return static_cast<int>(j);
}

}  // namespace tclcoord
