#include "flatmpc/safeset.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>

#include "flatmpc/convex_solver.h"
#include "flatmpc/errors.h"

namespace flatmpc {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

struct Box {
  Eigen::VectorXd lo;
  Eigen::VectorXd hi;
};

// Bounds of a polytope whose normals are all (scaled) coordinate vectors.
std::optional<Box> AxisBox(const Region& region, int dim) {
  Box box{Eigen::VectorXd::Constant(dim, -kInf),
          Eigen::VectorXd::Constant(dim, kInf)};
  for (const HalfSpace& hs : region.halfspaces) {
    Eigen::Index k;
    const double peak = hs.a.cwiseAbs().maxCoeff(&k);
    if (peak == 0.0 || hs.a.cwiseAbs().sum() != peak) return std::nullopt;
    const double bound = hs.b / hs.a(k);
    if (hs.a(k) > 0.0) {
      box.hi(k) = std::min(box.hi(k), bound);
    } else {
      box.lo(k) = std::max(box.lo(k), bound);
    }
  }
  return box;
}

// Intersection of the polytopes is nonempty. `strict` asks for an interior
// point instead (only decided exactly for boxes).
bool PolytopesIntersect(const std::vector<const Region*>& parts, int dim,
                        bool strict) {
  Region joined;
  for (const Region* r : parts) {
    joined.halfspaces.insert(joined.halfspaces.end(), r->halfspaces.begin(),
                             r->halfspaces.end());
  }
  if (const auto box = AxisBox(joined, dim)) {
    return strict ? (box->lo.array() < box->hi.array()).all()
                  : (box->lo.array() <= box->hi.array()).all();
  }
  ConvexSubproblem prob = ConvexSubproblem::Empty(dim);
  prob.H.setIdentity();
  const int m = static_cast<int>(joined.halfspaces.size());
  prob.Ain.resize(m, dim);
  prob.bin.resize(m);
  for (int i = 0; i < m; ++i) {
    const double scale = joined.halfspaces[i].a.norm();
    prob.Ain.row(i) = joined.halfspaces[i].a.transpose() / scale;
    prob.bin(i) = joined.halfspaces[i].b / scale - (strict ? 1e-9 : 0.0);
  }
  return Solve(prob).status != SolveStatus::kInfeasible;
}

}  // namespace

Region Region::Rectangle(int id, const Eigen::Vector2d& lo,
                         const Eigen::Vector2d& hi, int state_dim) {
  if (state_dim < 2) throw InvalidArgument("Rectangle: state_dim < 2");
  if (!(lo.array() < hi.array()).all() || !lo.allFinite() || !hi.allFinite()) {
    throw InvalidArgument("Rectangle: need finite lo < hi");
  }
  Region r;
  r.id = id;
  for (int k = 0; k < 2; ++k) {
    HalfSpace upper{Eigen::VectorXd::Unit(state_dim, k), hi(k)};
    HalfSpace lower{-Eigen::VectorXd::Unit(state_dim, k), -lo(k)};
    r.halfspaces.push_back(lower);
    r.halfspaces.push_back(upper);
  }
  return r;
}

bool Region::Contains(const Eigen::Ref<const Eigen::VectorXd>& xi) const {
  for (const HalfSpace& hs : halfspaces) {
    if (hs.Barrier(xi) > 0.0) return false;
  }
  return true;
}

double Region::Margin(const Eigen::Ref<const Eigen::VectorXd>& xi) const {
  double margin = kInf;
  for (const HalfSpace& hs : halfspaces) margin = std::min(margin, -hs.Barrier(xi));
  return margin;
}

double StepConstraints::MaxViolation(
    const Eigen::Ref<const Eigen::VectorXd>& z,
    const Eigen::Ref<const Eigen::VectorXd>& v) const {
  if (rows() == 0) return -kInf;
  return (Gz * z + Gv * v - h).maxCoeff();
}

SafeGeometry SafeGeometry::Make(std::vector<Region> regions) {
  if (regions.empty()) throw InvalidArgument("SafeGeometry: no regions");
  SafeGeometry g;
  g.state_dim_ = -1;
  for (std::size_t i = 0; i < regions.size(); ++i) {
    Region& r = regions[i];
    r.id = static_cast<int>(i);
    if (r.halfspaces.empty()) {
      throw InvalidArgument("SafeGeometry: region without half-spaces");
    }
    for (const HalfSpace& hs : r.halfspaces) {
      if (g.state_dim_ < 0) g.state_dim_ = static_cast<int>(hs.a.size());
      if (hs.a.size() != g.state_dim_ || !hs.a.allFinite() ||
          !std::isfinite(hs.b)) {
        throw InvalidArgument("SafeGeometry: malformed half-space");
      }
      if (hs.a.isZero(0.0)) throw InvalidArgument("SafeGeometry: zero normal");
    }
    if (!PolytopesIntersect({&r}, g.state_dim_, true)) {
      throw InvalidArgument("SafeGeometry: region " + std::to_string(i) +
                            " has empty interior");
    }
  }
  const int n = static_cast<int>(regions.size());
  g.overlap_ = Eigen::MatrixXi::Identity(n, n);
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) {
      const bool hit =
          PolytopesIntersect({&regions[i], &regions[j]}, g.state_dim_, false);
      g.overlap_(i, j) = g.overlap_(j, i) = hit ? 1 : 0;
    }
  }
  g.regions_ = std::move(regions);
  return g;
}

std::vector<int> SafeGeometry::Neighbors(int i) const {
  std::vector<int> out;
  for (int j = 0; j < size(); ++j) {
    if (j != i && Overlaps(i, j)) out.push_back(j);
  }
  return out;
}

double SafeGeometry::Margin(const Eigen::Ref<const Eigen::VectorXd>& xi) const {
  double best = -kInf;
  for (const Region& r : regions_) best = std::max(best, r.Margin(xi));
  return best;
}

HalfSpace Tighten(const HalfSpace& hs, const ErrorEllipsoid& D) {
  if (!(D.level >= 0.0)) throw InvalidArgument("Tighten: negative level");
  if (D.P.rows() != hs.a.size() || D.P.cols() != hs.a.size()) {
    throw InvalidArgument("Tighten: dimension mismatch");
  }
  const double support_sq = 2.0 * D.level * hs.a.dot(D.P.llt().solve(hs.a));
  return {hs.a, hs.b - std::sqrt(support_sq)};
}

StepConstraints CbfIntervalConstraints(const HalfSpace& hs, const FlatLTI& sys,
                                       double T) {
  const int n = sys.state_dim();
  const int m = sys.input_dim();
  if (hs.a.size() != n) throw InvalidArgument("CbfIntervalConstraints: size");
  if (!(T > 0.0)) throw InvalidArgument("CbfIntervalConstraints: T <= 0");
  const Eigen::RowVectorXd a = hs.a.transpose();
  const Eigen::MatrixXd& A = sys.A();
  const Eigen::MatrixXd& B = sys.B();
  if ((a * A * A).norm() > 1e-12 * a.norm() * std::max(1.0, (A * A).norm())) {
    throw InvalidArgument(
        "CbfIntervalConstraints: second barrier derivative is not constant");
  }
  // h0 = a z - b, h1 = a (A z + B v), h2 = a A (A z + B v).
  const Eigen::RowVectorXd h1z = a * A;
  const Eigen::RowVectorXd h1v = a * B;
  const Eigen::RowVectorXd h2z = a * A * A;
  const Eigen::RowVectorXd h2v = a * A * B;
  StepConstraints out;
  out.Gz.resize(3, n);
  out.Gv.resize(3, m);
  out.h = Eigen::VectorXd::Constant(3, hs.b);
  out.Gz.row(0) = a;
  out.Gv.row(0).setZero();
  out.Gz.row(1) = a + T * h1z;
  out.Gv.row(1) = T * h1v;
  out.Gz.row(2) = a + T * h1z + 0.5 * T * T * h2z;
  out.Gv.row(2) = T * h1v + 0.5 * T * T * h2v;
  return out;
}

Region TightenRegion(const Region& region, const ErrorEllipsoid& D) {
  Region out;
  out.id = region.id;
  for (const HalfSpace& hs : region.halfspaces) {
    out.halfspaces.push_back(Tighten(hs, D));
  }
  return out;
}

StepConstraints RegionConstraints(const Region& region, const ErrorEllipsoid& D,
                                  const FlatLTI& sys, double T) {
  const Region tight = TightenRegion(region, D);
  if (!PolytopesIntersect({&tight}, sys.state_dim(), false)) {
    throw EmptyTightenedRegion("region " + std::to_string(region.id) +
                               " is empty after tightening by the error "
                               "ellipsoid");
  }
  const int k = static_cast<int>(tight.halfspaces.size());
  StepConstraints out;
  out.Gz.resize(3 * k, sys.state_dim());
  out.Gv.resize(3 * k, sys.input_dim());
  out.h.resize(3 * k);
  for (int i = 0; i < k; ++i) {
    const StepConstraints c = CbfIntervalConstraints(tight.halfspaces[i], sys, T);
    out.Gz.middleRows(3 * i, 3) = c.Gz;
    out.Gv.middleRows(3 * i, 3) = c.Gv;
    out.h.segment(3 * i, 3) = c.h;
  }
  return out;
}

std::vector<int> Locate(const SafeGeometry& geometry, const ErrorEllipsoid& D,
                        const Eigen::Ref<const Eigen::VectorXd>& xi) {
  std::vector<int> ids;
  for (const Region& r : geometry.regions()) {
    if (TightenRegion(r, D).Contains(xi)) ids.push_back(r.id);
  }
  return ids;
}

}  // namespace flatmpc
