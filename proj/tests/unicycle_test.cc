#include "flatmpc/unicycle.h"

#include <cmath>
#include <numbers>
#include <random>

#include <gtest/gtest.h>

#include "flatmpc/errors.h"
#include "flatmpc/flat_core.h"

namespace flatmpc {
namespace {

using Eigen::Vector2d;
using Eigen::Vector4d;

UnicycleState Aligned(double x1, double x2, double speed, double heading) {
  return {x1, x2, heading, speed * std::cos(heading), speed * std::sin(heading)};
}

TEST(FlatMap, CopiesCoordinates) {
  EXPECT_EQ(FlatMap({}), Vector4d::Zero());
  EXPECT_EQ(FlatMap({1, 2, 0.7, 3, 4}), Vector4d(1, 2, 3, 4));
}

TEST(InverseMap, Examples) {
  const UnicycleState a = InverseMap(Vector4d(0, 0, 1, 0));
  EXPECT_EQ(a.x3, 0.0);
  EXPECT_EQ(a.y1, 1.0);
  EXPECT_EQ(a.y2, 0.0);
  EXPECT_NEAR(InverseMap(Vector4d(0, 0, 0, 1)).x3, std::numbers::pi / 2, 1e-15);
  EXPECT_THROW(InverseMap(Vector4d(1, 1, 0, 0)), SingularState);
  EXPECT_THROW(InverseMap(Vector4d(1, 1, 5e-7, 0)), SingularState);
  EXPECT_NO_THROW(InverseMap(Vector4d(1, 1, 2e-6, 0)));
  EXPECT_THROW(InverseMap(Eigen::VectorXd::Zero(3)), InvalidArgument);
}

TEST(InverseMap, RoundTripOffSingularSet) {
  std::mt19937 rng(3);
  std::uniform_real_distribution<double> pos(-5, 5), ang(-3.1, 3.1),
      spd(0.01, 3);
  for (int i = 0; i < 500; ++i) {
    const UnicycleState s = Aligned(pos(rng), pos(rng), spd(rng), ang(rng));
    const UnicycleState r = InverseMap(FlatMap(s));
    EXPECT_NEAR(r.x1, s.x1, 1e-15);
    EXPECT_NEAR(r.x2, s.x2, 1e-15);
    EXPECT_NEAR(r.x3, s.x3, 1e-12);
    EXPECT_EQ(r.y1, s.y1);
    EXPECT_EQ(r.y2, s.y2);
  }
}

TEST(EndogenousFeedback, Examples) {
  const UnicycleState s{0, 0, 0, 1, 0};
  EXPECT_TRUE(EndogenousFeedback(s, Vector2d(0, 1)).isApprox(Vector2d(1, 1)));
  EXPECT_TRUE(EndogenousFeedback(s, Vector2d(1, 0)).isApprox(Vector2d(1, 0)));
  const UnicycleState t{0, 0, 0.3, 3, -4};
  const Vector2d u = EndogenousFeedback(t, Vector2d::Zero());
  EXPECT_DOUBLE_EQ(u(0), 5.0);
  EXPECT_EQ(u(1), 0.0);
  EXPECT_THROW(EndogenousFeedback({0, 0, 0, 0, 0}, Vector2d(1, 0)),
               SingularState);
}

TEST(PlantDerivative, Examples) {
  const Vector2d zero = Vector2d::Zero();
  UnicycleState::Vector expected;
  expected << 1, 0, 0, 0, 0;
  EXPECT_TRUE(PlantDerivative({0, 0, 0, 1, 0}, Vector2d(1, 0), zero, zero)
                  .isApprox(expected));
  EXPECT_EQ(PlantDerivative({2, 3, 1, 0, 0}, zero, zero, zero),
            UnicycleState::Vector::Zero());
  const auto r = PlantDerivative({0, 0, std::numbers::pi / 2, 0, 2},
                                 Vector2d(2, 0), zero, zero);
  EXPECT_NEAR(r(0), 0.0, 1e-15);
  EXPECT_DOUBLE_EQ(r(1), 2.0);
  EXPECT_EQ(r(2), 0.0);
}

// With u from the endogenous feedback the flat state obeys the double
// integrator exactly, plus the disturbance residual.
TEST(PlantDerivative, LinearizesToDoubleIntegrator) {
  const FlatLTI sys = FlatLTI::DoubleIntegrator(2);
  std::mt19937 rng(11);
  std::uniform_real_distribution<double> pos(-5, 5), ang(-3.1, 3.1),
      spd(0.05, 1.0), acc(-2, 2), dist(-0.1, 0.1);
  for (int i = 0; i < 500; ++i) {
    const UnicycleState s = Aligned(pos(rng), pos(rng), spd(rng), ang(rng));
    const Vector2d v(acc(rng), acc(rng));
    const Vector2d d = i % 2 == 0 ? Vector2d::Zero() : Vector2d(dist(rng), dist(rng));
    const Vector2d u = EndogenousFeedback(s, v);
    const UnicycleState::Vector f = PlantDerivative(s, u, v, d);
    const Vector4d xi_dot(f(0), f(1), f(3), f(4));
    const Vector4d lin = sys.A() * FlatMap(s) + sys.B() * v;
    const Vector4d w = FlatDisturbance(s, u, d);
    EXPECT_LT((xi_dot - lin - w).norm(), 1e-13);
    if (i % 2 == 0) EXPECT_LT(w.norm(), 1e-14);
    // |w|^2 = d1^2 + |y|^2 d2^2, bounded by |d| while the speed is <= 1.
    EXPECT_NEAR(w.squaredNorm(),
                d(0) * d(0) + s.speed() * s.speed() * d(1) * d(1), 1e-15);
    EXPECT_LE(w.norm(), d.norm() + 1e-15);
    EXPECT_LT((DisturbanceJacobian(s) * d - w).norm(), 1e-14);
  }
}

// The heading rate equals the rotation rate of y, so y stays aligned with
// the heading. Checked against a central difference of atan2.
TEST(PlantDerivative, KeepsVelocityAlignedWithHeading) {
  std::mt19937 rng(5);
  std::uniform_real_distribution<double> ang(-3, 3), spd(0.1, 2), acc(-2, 2),
      dist(-0.2, 0.2);
  for (int i = 0; i < 200; ++i) {
    const UnicycleState s = Aligned(0, 0, spd(rng), ang(rng));
    const Vector2d v(acc(rng), acc(rng));
    const Vector2d d(dist(rng), dist(rng));
    const Vector2d u = EndogenousFeedback(s, v);
    const UnicycleState::Vector f = PlantDerivative(s, u, v, d);
    const double eps = 1e-6;
    const Vector2d yp = Vector2d(s.y1, s.y2) + eps * Vector2d(f(3), f(4));
    const Vector2d ym = Vector2d(s.y1, s.y2) - eps * Vector2d(f(3), f(4));
    double dtheta = std::atan2(yp(1), yp(0)) - std::atan2(ym(1), ym(0));
    dtheta = std::remainder(dtheta, 2 * std::numbers::pi);
    EXPECT_NEAR(dtheta / (2 * eps), f(2), 1e-6);
  }
}

}  // namespace
}  // namespace flatmpc
