#include "flatmpc/tracker.h"

#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "test_oracles.h"

namespace flatmpc {
namespace {

struct Unicycle {
  FlatLTI sys = FlatLTI::DoubleIntegrator(2);
  RiccatiParams params{Eigen::MatrixXd::Identity(4, 4),
                       Eigen::MatrixXd::Identity(2, 2), 2.0};
  RiccatiSolution sol = SolveModifiedAre(sys, params);
  TrackingLaw Law(double w_bar) const {
    return TrackingLaw(sys, params, sol, w_bar);
  }
};

TEST(TrackingLaw, ScalarFeedback) {
  const FlatLTI sys = FlatLTI::Make(Eigen::MatrixXd::Zero(1, 1),
                                    Eigen::MatrixXd::Identity(1, 1));
  const RiccatiParams params{Eigen::MatrixXd::Identity(1, 1),
                             Eigen::MatrixXd::Identity(1, 1), 2.0};
  const TrackingLaw law(sys, params, SolveModifiedAre(sys, params), 1.0);
  EXPECT_NEAR(law.Feedback(Eigen::VectorXd::Ones(1))(0), -1.0 / std::sqrt(3.0),
              1e-10);
  EXPECT_EQ(law.Feedback(Eigen::VectorXd::Zero(1))(0), 0.0);
}

TEST(TrackingLaw, FeedbackIsLinear) {
  const TrackingLaw law = Unicycle().Law(0.1);
  std::mt19937 rng(1);
  const Eigen::VectorXd e = testing::RandomVector(rng, 4);
  EXPECT_LE((law.Feedback(2.0 * e) - 2.0 * law.Feedback(e)).norm(), 1e-14);
  EXPECT_EQ(law.K().rows(), 2);
  EXPECT_EQ(law.K().cols(), 4);
}

TEST(TrackingLaw, LyapunovValues) {
  const Unicycle u;
  const RiccatiSolution identity{Eigen::MatrixXd::Identity(4, 4), 0.0};
  const TrackingLaw law(u.sys, u.params, identity, 1.0);
  Eigen::VectorXd e(4);
  e << 3, 4, 0, 0;
  EXPECT_DOUBLE_EQ(law.Lyapunov(e), 12.5);
  EXPECT_EQ(law.Lyapunov(Eigen::VectorXd::Zero(4)), 0.0);

  const TrackingLaw real = u.Law(1.0);
  std::mt19937 rng(2);
  const Eigen::VectorXd x = testing::RandomVector(rng, 4);
  EXPECT_NEAR(real.Lyapunov(3.0 * x), 9.0 * real.Lyapunov(x), 1e-12);
  EXPECT_GT(real.Lyapunov(x), 0.0);
}

TEST(ComputeVMax, UnicycleExampleAnchor) {
  const Unicycle u;
  EXPECT_NEAR(ComputeVMax(u.sol.P, u.params.Q, 2.0, 1.0), 9.66, 0.05);
  EXPECT_EQ(ComputeVMax(u.sol.P, u.params.Q, 2.0, 0.0), 0.0);
  const double one = ComputeVMax(u.sol.P, u.params.Q, 2.0, 0.3);
  const double two = ComputeVMax(u.sol.P, u.params.Q, 2.0, 0.6);
  EXPECT_NEAR(two, 4.0 * one, 1e-14);
}

TEST(TrackingLaw, VMaxMatchesFormulaExactly) {
  const Unicycle u;
  const TrackingLaw law = u.Law(0.37);
  const double expected = 0.5 * 2.0 * 2.0 * MaxEigenvalue(u.sol.P) /
                          MinEigenvalue(u.params.Q) * 0.37 * 0.37;
  EXPECT_EQ(law.v_max(), expected);
  EXPECT_EQ(law.ellipsoid().level, law.v_max());
}

TEST(TrackingLaw, FlatInput) {
  const TrackingLaw law = Unicycle().Law(0.1);
  std::mt19937 rng(4);
  const Eigen::VectorXd xi = testing::RandomVector(rng, 4);
  const Eigen::VectorXd xi2 = testing::RandomVector(rng, 4);
  const Eigen::VectorXd v_ref = testing::RandomVector(rng, 2);
  const Eigen::VectorXd v_ref2 = testing::RandomVector(rng, 2);
  const Eigen::VectorXd zero4 = Eigen::VectorXd::Zero(4);
  const Eigen::VectorXd zero2 = Eigen::VectorXd::Zero(2);
  EXPECT_EQ(law.FlatInput(xi, xi, v_ref), v_ref);
  EXPECT_LE((law.FlatInput(xi, zero4, zero2) - law.Feedback(xi)).norm(), 1e-15);
  // Affine in (error, v_ref).
  const Eigen::VectorXd sum = law.FlatInput(xi + xi2, zero4, v_ref + v_ref2);
  const Eigen::VectorXd parts =
      law.FlatInput(xi, zero4, v_ref) + law.FlatInput(xi2, zero4, v_ref2);
  EXPECT_LE((sum - parts).norm(), 1e-14);
}

TEST(TrackingLaw, IssMarginExamples) {
  const TrackingLaw law = Unicycle().Law(0.2);
  const Eigen::VectorXd zero4 = Eigen::VectorXd::Zero(4);
  EXPECT_EQ(law.IssMargin(zero4, zero4), 0.0);

  // |e|^2 = gamma^2 w^2 / lambda_min(Q) with |w| = w_bar sits on the
  // boundary of the decrease region.
  Eigen::VectorXd e = Eigen::VectorXd::Zero(4);
  e(1) = 2.0 * 0.2;
  Eigen::VectorXd w = Eigen::VectorXd::Zero(4);
  w(0) = 0.2;
  EXPECT_NEAR(law.IssMargin(e, w), 0.0, 1e-15);
}

TEST(TrackingLaw, RateMatchesExpandedRiccatiForm) {
  const Unicycle u;
  const TrackingLaw law = u.Law(0.2);
  std::mt19937 rng(8);
  const Eigen::MatrixXd& P = u.sol.P;
  for (int i = 0; i < 200; ++i) {
    const Eigen::VectorXd e = testing::RandomVector(rng, 4, -3, 3);
    const Eigen::VectorXd w = testing::RandomVector(rng, 4, -0.2, 0.2);
    const double expanded =
        0.5 * e.dot((-u.params.Q - P * P / 4.0) * e) + e.dot(P * w);
    EXPECT_NEAR(law.LyapunovRate(e, w), expanded, 1e-10);
    EXPECT_LE(expanded, law.IssMargin(e, w) + 1e-9);
  }
}

// ISS certificate on 10^4 random samples with |w| <= w_bar.
TEST(TrackingLaw, IssCertificateHoldsOnRandomSamples) {
  const TrackingLaw law = Unicycle().Law(0.5);
  std::mt19937 rng(9);
  std::normal_distribution<double> normal;
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  int failures = 0;
  for (int i = 0; i < 10000; ++i) {
    Eigen::VectorXd e(4), w(4);
    for (int k = 0; k < 4; ++k) {
      e(k) = normal(rng);
      w(k) = normal(rng);
    }
    e *= 3.0 * unit(rng);
    w *= 0.5 * std::pow(unit(rng), 0.25) / w.norm();
    if (law.LyapunovRate(e, w) > law.IssMargin(e, w) + 1e-9) ++failures;
  }
  EXPECT_EQ(failures, 0);
}

TEST(TrackingLaw, BoundaryOfEllipsoidIsInvariant) {
  const Unicycle u;
  const TrackingLaw law = u.Law(0.5);
  std::mt19937 rng(10);
  std::normal_distribution<double> normal;
  int failures = 0;
  for (int i = 0; i < 5000; ++i) {
    Eigen::VectorXd e(4);
    for (int k = 0; k < 4; ++k) e(k) = normal(rng);
    e *= std::sqrt(law.v_max() / law.Lyapunov(e));
    // Worst case: w aligned with grad V = P e.
    const Eigen::VectorXd grad = u.sol.P * e;
    const Eigen::VectorXd w_worst = law.w_bar() * grad / grad.norm();
    if (law.LyapunovRate(e, w_worst) > 1e-9) ++failures;
    Eigen::VectorXd w(4);
    for (int k = 0; k < 4; ++k) w(k) = normal(rng);
    w *= law.w_bar() / w.norm();
    if (law.LyapunovRate(e, w) > 1e-9) ++failures;
  }
  EXPECT_EQ(failures, 0);
}

TEST(ErrorEllipsoid, MembershipIsExact) {
  const TrackingLaw law = Unicycle().Law(0.1);
  const ErrorEllipsoid D = law.ellipsoid();
  Eigen::VectorXd e = Eigen::VectorXd::Zero(4);
  e(0) = 1.0;
  const double scale = std::sqrt(D.level / D.Value(e));
  EXPECT_TRUE(D.Contains(0.999999 * scale * e));
  EXPECT_FALSE(D.Contains(1.000001 * scale * e));
  const Eigen::VectorXd axes = D.SemiAxes();
  EXPECT_NEAR(axes.maxCoeff(), EllipsoidSemiAxis(D.P, D.level), 1e-14);
}

}  // namespace
}  // namespace flatmpc
