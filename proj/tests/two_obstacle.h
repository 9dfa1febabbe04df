#pragma once

// A 4 m x 3 m room with two wall segments, covered by five overlapping
// rectangles. The robot starts bottom left and parks top right.

#include <vector>

#include <Eigen/Dense>

#include "flatmpc/ftocp.h"
#include "flatmpc/riccati.h"
#include "flatmpc/tracker.h"
#include "flatmpc/unicycle.h"

namespace flatmpc::testing {

inline std::vector<Region> TwoObstacleRegions() {
  return {Region::Rectangle(0, {0, 0}, {1, 3}),
          Region::Rectangle(1, {3, 0}, {4, 3}),
          Region::Rectangle(2, {0, 0}, {4, 0.9}),
          Region::Rectangle(3, {0, 1.3}, {4, 1.7}),
          Region::Rectangle(4, {0, 2.1}, {4, 3})};
}

/// Obstacles [1, 3] x [0.9, 1.3] and [1, 3] x [1.7, 2.1] and the room walls,
/// written out independently of the region cover.
inline bool InsideFreeSpace(double x, double y) {
  if (x < 0 || x > 4 || y < 0 || y > 3) return false;
  const bool in_obstacle_x = x > 1 && x < 3;
  if (in_obstacle_x && y > 0.9 && y < 1.3) return false;
  if (in_obstacle_x && y > 1.7 && y < 2.1) return false;
  return true;
}

struct TwoObstacleSetup {
  FlatLTI sys = FlatLTI::DoubleIntegrator(2);
  RiccatiParams params{Eigen::MatrixXd::Identity(4, 4),
                       Eigen::MatrixXd::Identity(2, 2), 2.0};
  RiccatiSolution riccati = SolveModifiedAre(sys, params);
  TrackingLaw law;
  Ftocp planner;
  UnicycleState start{0.5, 0.45, 0.0, 0.1, 0.0};

  explicit TwoObstacleSetup(double d_bar = 0.05, double T = 1.0, int N = 9)
      : law(sys, params, riccati, d_bar),
        planner(FtocpSpec{sys, T, N, Eigen::Vector4d(3.5, 2.55, 0, 0),
                          law.ellipsoid(),
                          SafeGeometry::Make(TwoObstacleRegions()),
                          Eigen::MatrixXd::Identity(4, 4),
                          10.0 * Eigen::MatrixXd::Identity(2, 2)}) {}
};

}  // namespace flatmpc::testing
