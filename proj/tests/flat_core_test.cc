#include "flatmpc/flat_core.h"

#include <cmath>
#include <limits>
#include <random>

#include <gtest/gtest.h>

#include "flatmpc/errors.h"
#include "test_oracles.h"

namespace flatmpc {
namespace {

using testing::RandomMatrix;
using testing::RandomVector;

TEST(MatrixExponential, ZeroGivesIdentity) {
  const Eigen::MatrixXd E = MatrixExponential(Eigen::MatrixXd::Zero(5, 5));
  EXPECT_TRUE(E.isIdentity(0.0));
}

TEST(MatrixExponential, NilpotentBlock) {
  Eigen::MatrixXd M(2, 2);
  M << 0, 1, 0, 0;
  Eigen::MatrixXd expected(2, 2);
  expected << 1, 1, 0, 1;
  EXPECT_LE((MatrixExponential(M) - expected).norm(), 1e-15);
}

TEST(MatrixExponential, MatchesTaylorOracle) {
  std::mt19937 rng(7);
  for (int trial = 0; trial < 20; ++trial) {
    const Eigen::MatrixXd M = RandomMatrix(rng, 4, 4);
    const Eigen::MatrixXd oracle = testing::TaylorExp(M);
    EXPECT_LE((MatrixExponential(M) - oracle).norm(), 1e-10 * oracle.norm());
  }
}

TEST(MatrixExponential, RejectsBadInput) {
  EXPECT_THROW(MatrixExponential(Eigen::MatrixXd::Zero(2, 3)), InvalidArgument);
  Eigen::MatrixXd M = Eigen::MatrixXd::Zero(2, 2);
  M(1, 0) = std::numeric_limits<double>::quiet_NaN();
  EXPECT_THROW(MatrixExponential(M), InvalidArgument);
}

TEST(FlatLTI, RejectsUncontrollablePair) {
  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(2, 2);
  Eigen::MatrixXd B(2, 1);
  B << 1, 0;
  EXPECT_THROW(FlatLTI::Make(A, B), InvalidArgument);
  EXPECT_THROW(FlatLTI::Make(Eigen::MatrixXd::Zero(2, 3), B), InvalidArgument);
}

TEST(FlatLTI, DoubleIntegratorIsControllable) {
  const FlatLTI sys = FlatLTI::DoubleIntegrator(2);
  EXPECT_EQ(sys.state_dim(), 4);
  EXPECT_EQ(sys.input_dim(), 2);
  EXPECT_EQ(ControllabilityRank(sys.A(), sys.B()), 4);
}

TEST(Discretize, DoubleIntegratorClosedForm) {
  const DiscreteLTI d = Discretize(FlatLTI::DoubleIntegrator(2), 1.0);
  Eigen::MatrixXd Ad(4, 4), Bd(4, 2);
  Ad << 1, 0, 1, 0,  //
      0, 1, 0, 1,    //
      0, 0, 1, 0,    //
      0, 0, 0, 1;
  Bd << 0.5, 0, 0, 0.5, 1, 0, 0, 1;
  EXPECT_LE((d.Ad - Ad).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_LE((d.Bd - Bd).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_EQ(d.T, 1.0);
}

TEST(Discretize, ZeroDriftIsScaledInput) {
  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(1, 1);
  Eigen::MatrixXd B(1, 1);
  B << 3.0;
  const DiscreteLTI d = Discretize(FlatLTI::Make(A, B), 0.25);
  EXPECT_NEAR(d.Ad(0, 0), 1.0, 1e-15);
  EXPECT_NEAR(d.Bd(0, 0), 0.75, 1e-15);
}

TEST(Discretize, MatchesQuadratureOracle) {
  std::mt19937 rng(11);
  const double T = 0.1;
  for (int trial = 0; trial < 10; ++trial) {
    // Shift the spectrum left to get a stable A.
    Eigen::MatrixXd A = RandomMatrix(rng, 4, 4);
    A -= 3.0 * Eigen::MatrixXd::Identity(4, 4);
    const Eigen::MatrixXd B = RandomMatrix(rng, 4, 2);
    const DiscreteLTI d = Discretize(FlatLTI::Make(A, B), T);
    const Eigen::MatrixXd Bd_oracle = testing::Simpson(
        [&](double s) -> Eigen::MatrixXd { return testing::TaylorExp(A * s) * B; },
        T, 200);
    EXPECT_LE((d.Bd - Bd_oracle).cwiseAbs().maxCoeff(), 1e-8);
    EXPECT_LE((d.Ad - testing::TaylorExp(A * T)).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(Discretize, RejectsNonPositivePeriod) {
  const FlatLTI sys = FlatLTI::DoubleIntegrator(1);
  EXPECT_THROW(Discretize(sys, 0.0), InvalidArgument);
  EXPECT_THROW(Discretize(sys, -1.0), InvalidArgument);
}

TEST(Discretize, TwoStepsEqualDoublePeriod) {
  std::mt19937 rng(3);
  for (int trial = 0; trial < 10; ++trial) {
    const FlatLTI sys =
        FlatLTI::Make(RandomMatrix(rng, 4, 4), RandomMatrix(rng, 4, 2));
    const DiscreteLTI one = Discretize(sys, 0.3);
    const DiscreteLTI two = Discretize(sys, 0.6);
    EXPECT_LE((one.Ad * one.Ad - two.Ad).norm(), 1e-10);
    EXPECT_LE((one.Ad * one.Bd + one.Bd - two.Bd).norm(), 1e-10);
  }
}

TEST(RolloutReference, EndpointsAndAnalyticForm) {
  const FlatLTI sys = FlatLTI::DoubleIntegrator(2);
  const DiscreteLTI d = Discretize(sys, 1.5);
  Eigen::VectorXd z(4), v(2);
  z << 1.0, -2.0, 0.5, 0.25;
  v << -0.3, 0.8;
  EXPECT_EQ(RolloutReference(sys, z, v, 0.0, 1.5), z);
  EXPECT_LE((RolloutReference(sys, z, v, 1.5, 1.5) - (d.Ad * z + d.Bd * v))
                .cwiseAbs()
                .maxCoeff(),
            1e-12);

  const double t = 0.7;
  const Eigen::VectorXd xi = RolloutReference(sys, z, v, t, 1.5);
  for (int axis = 0; axis < 2; ++axis) {
    EXPECT_NEAR(xi(axis), z(axis) + z(2 + axis) * t + 0.5 * v(axis) * t * t,
                1e-12);
    EXPECT_NEAR(xi(2 + axis), z(2 + axis) + v(axis) * t, 1e-12);
  }
}

TEST(RolloutReference, RejectsTimeOutsideInterval) {
  const FlatLTI sys = FlatLTI::DoubleIntegrator(2);
  const Eigen::VectorXd z = Eigen::VectorXd::Zero(4);
  const Eigen::VectorXd v = Eigen::VectorXd::Zero(2);
  EXPECT_THROW(RolloutReference(sys, z, v, -1e-9, 1.0), InvalidArgument);
  EXPECT_THROW(RolloutReference(sys, z, v, 1.0 + 1e-9, 1.0), InvalidArgument);
}

TEST(RolloutReference, SemigroupProperty) {
  std::mt19937 rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    const FlatLTI sys =
        FlatLTI::Make(RandomMatrix(rng, 4, 4), RandomMatrix(rng, 4, 2));
    const Eigen::VectorXd z = RandomVector(rng, 4);
    const Eigen::VectorXd v = RandomVector(rng, 2);
    std::uniform_real_distribution<double> dt(0.0, 0.5);
    const double t1 = dt(rng), t2 = dt(rng);
    const Eigen::VectorXd direct = RolloutReference(sys, z, v, t1 + t2, 1.0);
    const Eigen::VectorXd chained = RolloutReference(
        sys, RolloutReference(sys, z, v, t1, 1.0), v, t2, 1.0);
    EXPECT_LE((direct - chained).cwiseAbs().maxCoeff(), 1e-10);
  }
}

}  // namespace
}  // namespace flatmpc
