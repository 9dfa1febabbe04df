#pragma once

#include <vector>

#include <Eigen/Dense>

#include "flatmpc/flat_core.h"
#include "flatmpc/tracker.h"

namespace flatmpc {

/// {xi : a' xi <= b}. The barrier h(xi) = a' xi - b is <= 0 on the safe side.
struct HalfSpace {
  Eigen::VectorXd a;
  double b = 0.0;

  double Barrier(const Eigen::Ref<const Eigen::VectorXd>& xi) const {
    return a.dot(xi) - b;
  }
};

/// Convex polytope given by half-spaces, usually an axis-aligned rectangle in
/// the position coordinates of the flat state.
struct Region {
  int id = 0;
  std::vector<HalfSpace> halfspaces;

  /// [lo, hi] box on flat coordinates (0, 1), embedded in a flat state of
  /// dimension `state_dim`. Throws InvalidArgument unless lo < hi.
  static Region Rectangle(int id, const Eigen::Vector2d& lo,
                          const Eigen::Vector2d& hi, int state_dim = 4);

  /// Closed membership: every barrier <= 0.
  bool Contains(const Eigen::Ref<const Eigen::VectorXd>& xi) const;
  /// min over half-spaces of b - a' xi; >= 0 iff xi is in the region.
  double Margin(const Eigen::Ref<const Eigen::VectorXd>& xi) const;
};

/// Linear constraints Gz z + Gv v <= h on one ZOH step (z, v).
struct StepConstraints {
  Eigen::MatrixXd Gz;
  Eigen::MatrixXd Gv;
  Eigen::VectorXd h;

  int rows() const { return static_cast<int>(h.size()); }
  /// Largest value of Gz z + Gv v - h (<= 0 when satisfied).
  double MaxViolation(const Eigen::Ref<const Eigen::VectorXd>& z,
                      const Eigen::Ref<const Eigen::VectorXd>& v) const;
};

/// Union of overlapping regions together with their overlap graph.
class SafeGeometry {
 public:
  /// Region ids are renumbered to their position in `regions`. Throws
  /// InvalidArgument on an empty list, mismatched dimensions, a zero normal
  /// or a region with empty interior.
  static SafeGeometry Make(std::vector<Region> regions);

  const std::vector<Region>& regions() const { return regions_; }
  int size() const { return static_cast<int>(regions_.size()); }
  int state_dim() const { return state_dim_; }

  /// Closed polytopes i and j intersect. Symmetric, and true for i == j.
  bool Overlaps(int i, int j) const { return overlap_(i, j) != 0; }
  /// Regions overlapping i, excluding i, ascending.
  std::vector<int> Neighbors(int i) const;

  /// Largest Region::Margin over all regions; >= 0 iff xi lies in the union.
  double Margin(const Eigen::Ref<const Eigen::VectorXd>& xi) const;

 private:
  SafeGeometry() = default;

  std::vector<Region> regions_;
  Eigen::MatrixXi overlap_;
  int state_dim_ = 0;
};

/// Pontryagin difference of a half-space and the ellipsoid D:
/// b' = b - sqrt(2 level a' P^-1 a). Throws InvalidArgument if level < 0.
HalfSpace Tighten(const HalfSpace& hs, const ErrorEllipsoid& D);

/// Sampled barrier conditions keeping a' xi(t) <= b on [0, T] under the ZOH
/// input v from xi(0) = z:
///   h0 <= 0,  h0 + h0' T <= 0,  h0 + h0' T + h0'' T^2 / 2 <= 0,
/// with h0' = a'(A z + B v), h0'' = a' A (A z + B v). Exact when h'' is
/// constant along the interval, which requires a' A^2 = 0 (true for position
/// normals of integrator chains); throws InvalidArgument otherwise.
StepConstraints CbfIntervalConstraints(const HalfSpace& hs, const FlatLTI& sys,
                                       double T);

/// The region tightened by D, as polytope.
Region TightenRegion(const Region& region, const ErrorEllipsoid& D);

/// Stacked CbfIntervalConstraints of every tightened edge of `region`.
/// Throws EmptyTightenedRegion if the tightened polytope is empty.
StepConstraints RegionConstraints(const Region& region, const ErrorEllipsoid& D,
                                  const FlatLTI& sys, double T);

/// Ids of the regions whose tightened polytope contains xi (closed sets).
std::vector<int> Locate(const SafeGeometry& geometry, const ErrorEllipsoid& D,
                        const Eigen::Ref<const Eigen::VectorXd>& xi);

}  // namespace flatmpc
