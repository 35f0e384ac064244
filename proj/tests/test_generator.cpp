#include <random>

#include <gtest/gtest.h>

#include "support.hpp"
#include "tclcoord/generator.hpp"

using namespace tclcoord;

using tclcoord::testing::nominal_params;

TEST(Drift, HandEvaluation)
{
  const TclParams p = nominal_params();
  // -(21-32)/2 - 2.5*5.5/1 = 5.5 - 13.75
  EXPECT_DOUBLE_EQ(drift(21, Mode::on, 32, p), -8.25);
  EXPECT_DOUBLE_EQ(drift(21, Mode::off, 32, p), 5.5);
  EXPECT_DOUBLE_EQ(drift(27, Mode::off, 27, p), 0.0);
}

TEST(Baseline, HandEvaluation)
{
  const TclParams p = nominal_params();
  EXPECT_NEAR(baseline_power(32, p), 2.2, 1e-12);
  EXPECT_DOUBLE_EQ(baseline_power(21, p), 0.0);
  EXPECT_NEAR(fleet_baseline(32, p, 20000), 44000.0, 1e-8);
  EXPECT_DOUBLE_EQ(aggregate_capacity(p, 20000), 110000.0);
}

TEST(RateMatrix, PureAdvectionUpwind)
{
  // with theta_a chosen so the off drift is constant only approximately, use a huge RC
  TclParams p = nominal_params();
  p.sigma2 = 0;
  p.R = 1e12;
  const GridSpec g = build_grid(20, 22, 10, 2);
  const double v = 5.0;  // off drift = (theta_a - theta)/(RC): set theta_a to realize v near 21
  const double theta_a = 21 + v * p.R * p.C;
  const SparseMatrix A = build_rate_matrix(g, p, theta_a, 60.0);
  for (int j = 1; j < g.N; ++j) {
    const double vj = drift(g.right_edge(Mode::off, j), Mode::off, theta_a, p);
    EXPECT_NEAR(A.coeff(j - 1, j - 1), -vj / g.delta_lambda, 1e-9);
    EXPECT_NEAR(A.coeff(j - 1, j), vj / g.delta_lambda, 1e-9);
    EXPECT_NEAR(vj, v, 1e-9);
    if (j > 1) { EXPECT_EQ(A.coeff(j - 1, j - 2), 0.0); }
  }
}

TEST(RateMatrix, NominalBoundarySink)
{
  const TclParams p = nominal_params();
  const GridSpec g = build_grid(20, 22, 10, 2);
  const double gamma = gamma_for_step(g, p, 1.0);
  EXPECT_NEAR(gamma, 60.0 - p.sigma2 / (g.delta_lambda * g.delta_lambda), 1e-12);
  const SparseMatrix A = build_rate_matrix(g, p, 32, gamma);
  const int N = g.N;
  EXPECT_NEAR(A.coeff(N - 1, N - 1), -60.0, 1e-12);
  // off N feeds the on bin with the same temperature, on 1 feeds off m
  EXPECT_NEAR(A.coeff(N - 1, N + (N - g.m + 1) - 1), 60.0, 1e-12);
  EXPECT_NEAR(A.coeff(N, N), -60.0, 1e-12);
  EXPECT_NEAR(A.coeff(N, g.m - 1), 60.0, 1e-12);
  // no flow back out of the boundary bins into their own mode
  EXPECT_EQ(A.coeff(N - 1, N - 2), 0.0);
  EXPECT_EQ(A.coeff(N, N + 1), 0.0);
  // sink and source rates match
  EXPECT_EQ(-A.coeff(N - 1, N - 1), A.coeff(N - 1, N + N - g.m));
  EXPECT_EQ(-A.coeff(N, N), A.coeff(N, g.m - 1));
}

TEST(RateMatrix, SparsityPattern)
{
  const GridSpec g = build_grid(20, 22, 10, 2);
  const SparseMatrix A = build_rate_matrix(g, nominal_params(), 32, gamma_for_step(g, nominal_params(), 1.0));
  const int N = g.N;
  for (int i = 0; i < 2 * N; ++i) {
    for (SparseMatrix::InnerIterator it(A, i); it; ++it) {
      const int j = static_cast<int>(it.col());
      const bool same_block = (i < N) == (j < N);
      if (same_block) {
        EXPECT_LE(std::abs(i - j), 1) << i << "," << j;
      } else {
        EXPECT_TRUE((i == N - 1 && j == N + N - g.m) || (i == N && j == g.m - 1)) << i << "," << j;
      }
    }
  }
}

TEST(RateMatrix, LemmaOneRandomSweep)
{
  std::mt19937_64 rng(11);
  const GridSpec g = build_grid(20, 22, 10, 2);
  for (int trial = 0; trial < 200; ++trial) {
    const auto [p, theta_a] = tclcoord::testing::random_draw(rng, g);
    const SparseMatrix A = build_rate_matrix(g, p, theta_a, gamma_for_step(g, p, 1.0));
    EXPECT_TRUE(is_rate_matrix(A, 1e-12));
    // mass is conserved under nu' = nu A
    Eigen::RowVectorXd nu = Eigen::RowVectorXd::Random(2 * g.N).cwiseAbs();
    EXPECT_NEAR((nu * A).sum(), 0.0, 1e-10);
  }
}

TEST(RateMatrix, RejectsBadInputs)
{
  const GridSpec g = build_grid(20, 22, 10, 2);
  EXPECT_THROW(build_rate_matrix(g, nominal_params(), 32, 0.0), InvalidParameter);
  EXPECT_THROW(build_rate_matrix(g, nominal_params(), 32, -1.0), InvalidParameter);
  // ambient below the deadband makes the off drift negative
  EXPECT_THROW(build_rate_matrix(g, nominal_params(), 21.0, 50.0), AssumptionViolation);
  TclParams weak = nominal_params();
  weak.P0 = 0.1;  // the compressor no longer cools at 38 degC ambient
  EXPECT_THROW(build_rate_matrix(g, weak, 38.0, 50.0), AssumptionViolation);
  // dt must stay below dl^2 / sigma^2
  TclParams noisy = nominal_params();
  noisy.sigma2 = 3.0;
  EXPECT_THROW(gamma_for_step(g, noisy, 1.0), InvalidParameter);
}
