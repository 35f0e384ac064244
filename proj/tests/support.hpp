#pragma once

#include <random>

#include "tclcoord/generator.hpp"

namespace tclcoord::testing {

inline TclParams nominal_params() { return TclParams{2.0, 1.0, 5.5, 2.5, 0.01, 21.0}; }

struct Draw
{
  TclParams params;
  double theta_a;
};

/// R in [1,3], C in [0.5,2], sigma2 in [0,0.05], ambient in [28,38]; draws that
/// break the drift-sign assumption on the grid are redrawn.
inline Draw random_draw(std::mt19937_64 & rng, const GridSpec & g)
{
  std::uniform_real_distribution<double> R(1, 3), C(0.5, 2), s2(0, 0.05), ta(28, 38);
  for (;;) {
    Draw d{nominal_params(), 0};
    d.params.R = R(rng);
    d.params.C = C(rng);
    d.params.sigma2 = s2(rng);
    d.theta_a = ta(rng);
    if (drift_signs_hold(g, d.params, d.theta_a)) { return d; }
  }
}

}  // namespace tclcoord::testing
