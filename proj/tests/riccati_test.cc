#include "flatmpc/riccati.h"

#include <cmath>
#include <limits>
#include <random>
#include <vector>

#include <Eigen/Eigenvalues>
#include <gtest/gtest.h>

#include "flatmpc/errors.h"
#include "flatmpc/tracker.h"
#include "test_oracles.h"

namespace flatmpc {
namespace {

FlatLTI ScalarIntegrator() {
  return FlatLTI::Make(Eigen::MatrixXd::Zero(1, 1),
                       Eigen::MatrixXd::Identity(1, 1));
}

RiccatiParams ScalarParams(double gamma) {
  return {Eigen::MatrixXd::Identity(1, 1), Eigen::MatrixXd::Identity(1, 1),
          gamma};
}

RiccatiParams UnicycleParams(double gamma) {
  return {Eigen::MatrixXd::Identity(4, 4), Eigen::MatrixXd::Identity(2, 2),
          gamma};
}

void ExpectValidSolution(const FlatLTI& sys, const RiccatiParams& params,
                         const RiccatiSolution& sol) {
  const Eigen::MatrixXd& P = sol.P;
  EXPECT_LE((P - P.transpose()).norm(), 1e-12);
  EXPECT_GT(MinEigenvalue(P), 0.0);
  EXPECT_LE(sol.residual, 1e-8);
  const Eigen::MatrixXd closed =
      sys.A() - 0.5 * sys.B() * params.R.llt().solve(sys.B().transpose()) * P;
  const Eigen::VectorXcd eig = closed.eigenvalues();
  EXPECT_LT(eig.real().maxCoeff(), 0.0);
}

TEST(SolveModifiedAre, ScalarWithAttenuation) {
  // p^2 (1 - 1/4) = 1.
  const RiccatiSolution sol = SolveModifiedAre(ScalarIntegrator(), ScalarParams(2.0));
  EXPECT_NEAR(sol.P(0, 0), 2.0 / std::sqrt(3.0), 1e-10);
  ExpectValidSolution(ScalarIntegrator(), ScalarParams(2.0), sol);
}

TEST(SolveModifiedAre, ScalarStandardAre) {
  const RiccatiParams params =
      ScalarParams(std::numeric_limits<double>::infinity());
  const RiccatiSolution sol = SolveModifiedAre(ScalarIntegrator(), params);
  EXPECT_NEAR(sol.P(0, 0), 1.0, 1e-10);
}

TEST(SolveModifiedAre, UnicycleExampleAnchor) {
  const FlatLTI sys = FlatLTI::DoubleIntegrator(2);
  const RiccatiSolution sol = SolveModifiedAre(sys, UnicycleParams(2.0));
  EXPECT_NEAR(MaxEigenvalue(sol.P), 4.83, 0.01);
  ExpectValidSolution(sys, UnicycleParams(2.0), sol);
}

TEST(SolveModifiedAre, GammaTooSmallHasNoSolution) {
  EXPECT_THROW(SolveModifiedAre(ScalarIntegrator(), ScalarParams(1.0)),
               NoStabilizingSolution);
  EXPECT_THROW(SolveModifiedAre(FlatLTI::DoubleIntegrator(2), UnicycleParams(0.5)),
               NoStabilizingSolution);
}

TEST(SolveModifiedAre, RejectsMalformedWeights) {
  RiccatiParams bad = UnicycleParams(2.0);
  bad.Q(0, 0) = -1.0;
  EXPECT_THROW(SolveModifiedAre(FlatLTI::DoubleIntegrator(2), bad),
               InvalidArgument);
  bad = UnicycleParams(-2.0);
  EXPECT_THROW(SolveModifiedAre(FlatLTI::DoubleIntegrator(2), bad),
               InvalidArgument);
}

TEST(SolveModifiedAre, RandomSystemsMeetInvariants) {
  std::mt19937 rng(21);
  int solved = 0;
  for (int trial = 0; trial < 40; ++trial) {
    const int n = 2 + trial % 5;
    const int m = 1 + trial % 2;
    const FlatLTI sys = FlatLTI::Make(testing::RandomMatrix(rng, n, n),
                                      testing::RandomMatrix(rng, n, m));
    const RiccatiParams params{testing::RandomSpd(rng, n, 0.5, 2.0),
                               testing::RandomSpd(rng, m, 0.5, 2.0), 20.0};
    try {
      const RiccatiSolution sol = SolveModifiedAre(sys, params);
      ExpectValidSolution(sys, params, sol);
      ++solved;
    } catch (const NoStabilizingSolution&) {
      // gamma = 20 is not large enough for every random pair.
    }
  }
  EXPECT_GE(solved, 30);
}

TEST(RiccatiResidual, Examples) {
  const FlatLTI sys = ScalarIntegrator();
  const RiccatiParams params = ScalarParams(2.0);
  const RiccatiSolution sol = SolveModifiedAre(sys, params);
  EXPECT_LE(RiccatiResidual(sys, params, sol.P), 1e-10);
  EXPECT_GT(RiccatiResidual(sys, params,
                            sol.P + 0.1 * Eigen::MatrixXd::Identity(1, 1)),
            0.0);
  EXPECT_NEAR(RiccatiResidual(sys, params, Eigen::MatrixXd::Identity(1, 1)),
              0.25, 1e-15);
}

TEST(MinimizeGamma, AllInfeasibleGrid) {
  const std::vector<double> grid = {1.0};
  EXPECT_THROW(MinimizeGamma(ScalarIntegrator(), Eigen::MatrixXd::Identity(1, 1),
                             Eigen::MatrixXd::Identity(1, 1), 1.0, grid),
               AllGammaInfeasible);
}

TEST(MinimizeGamma, SinglePointUnicycle) {
  const std::vector<double> grid = {2.0};
  const GammaSearchResult res = MinimizeGamma(
      FlatLTI::DoubleIntegrator(2), Eigen::MatrixXd::Identity(4, 4),
      Eigen::MatrixXd::Identity(2, 2), 1.0, grid);
  EXPECT_EQ(res.gamma, 2.0);
  EXPECT_NEAR(MaxEigenvalue(res.solution.P), 4.83, 0.01);
  ASSERT_EQ(res.candidates.size(), 1u);
  EXPECT_TRUE(res.candidates[0].feasible);
}

TEST(MinimizeGamma, ReturnsGridMinimumOfSemiAxis) {
  const FlatLTI sys = ScalarIntegrator();
  const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(1, 1);
  const std::vector<double> grid = DefaultGammaGrid();
  const GammaSearchResult res = MinimizeGamma(sys, I, I, 0.3, grid);

  // Exhaustive recomputation over the grid from the closed form
  // p = 1 / sqrt(1 - 1/gamma^2) (gamma > 1).
  double best = std::numeric_limits<double>::infinity();
  double best_gamma = 0.0;
  for (const double g : grid) {
    if (g <= 1.0 + 1e-9) continue;
    const double p = 1.0 / std::sqrt(1.0 - 1.0 / (g * g));
    const double v_max = 0.5 * g * g * p * 0.09;
    const double axis = std::sqrt(2.0 * v_max / p);
    if (axis < best) {
      best = axis;
      best_gamma = g;
    }
  }
  EXPECT_EQ(res.gamma, best_gamma);
  double reported = std::numeric_limits<double>::infinity();
  for (const auto& c : res.candidates) {
    if (c.gamma == res.gamma) reported = c.semi_axis;
    if (c.feasible) EXPECT_GE(c.semi_axis, reported - 1e-12);
  }
  EXPECT_NEAR(reported, best, 1e-9);
  EXPECT_EQ(res.candidates.size(), grid.size());
}

TEST(MinimizeGamma, DefaultGridShape) {
  const std::vector<double> grid = DefaultGammaGrid();
  ASSERT_EQ(grid.size(), 101u);
  EXPECT_NEAR(grid.front(), 0.5, 1e-12);
  EXPECT_NEAR(grid.back(), 50.0, 1e-9);
  EXPECT_NEAR(std::log10(grid[50] / grid[0]), 1.0, 1e-12);
}

TEST(SolveModifiedAre, LargerGammaNeverIncreasesLambdaMax) {
  // Regression property on the unicycle system, checked over a dense grid.
  const FlatLTI sys = FlatLTI::DoubleIntegrator(2);
  double previous = std::numeric_limits<double>::infinity();
  int feasible = 0;
  for (const double g : DefaultGammaGrid()) {
    try {
      const RiccatiSolution sol = SolveModifiedAre(sys, UnicycleParams(g));
      const double lmax = MaxEigenvalue(sol.P);
      EXPECT_LE(lmax, previous + 1e-9) << "gamma = " << g;
      previous = lmax;
      ++feasible;
    } catch (const NoStabilizingSolution&) {
      EXPECT_EQ(feasible, 0) << "infeasible gamma above a feasible one: " << g;
    }
  }
  EXPECT_GT(feasible, 50);
}

}  // namespace
}  // namespace flatmpc
