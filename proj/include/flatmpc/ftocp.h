#pragma once

#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "flatmpc/convex_solver.h"
#include "flatmpc/flat_core.h"
#include "flatmpc/safeset.h"
#include "flatmpc/tracker.h"

namespace flatmpc {

struct FtocpSpec {
  FlatLTI sys;
  double T = 1.0;
  int N = 1;
  Eigen::VectorXd xi_goal;
  ErrorEllipsoid D;
  SafeGeometry geometry;
  Eigen::MatrixXd Qc;
  Eigen::MatrixXd Rc;
};

enum class FtocpStatus {
  kOptimal,     // globally optimal over region assignments
  kFeasible,    // feasible but not proven optimal (timeout or MaxIter nodes)
  kInfeasible,  // every assignment proven infeasible
  kFailed,      // nothing feasible found and infeasibility not proven
};

std::string_view ToString(FtocpStatus status);

struct FtocpSolution {
  std::vector<Eigen::VectorXd> z;  // N + 1 flat states
  std::vector<Eigen::VectorXd> v;  // N flat inputs
  std::vector<int> regions;        // N region ids
  double cost = 0.0;
  FtocpStatus status = FtocpStatus::kFailed;
  int nodes = 0;            // relaxations solved
  double solve_time = 0.0;  // seconds

  bool usable() const {
    return status == FtocpStatus::kOptimal || status == FtocpStatus::kFeasible;
  }
};

struct FtocpOptions {
  double timeout = 0.2;  // seconds of wall time per solve
  int max_nodes = 0;     // relaxations per solve, 0 for no limit
};

/// One branch-and-bound node: regions fixed for `prefix`, relaxation value
/// `bound` (+inf when the relaxation was infeasible).
struct BnbNode {
  std::vector<int> prefix;
  double bound = 0.0;
};

/// Worst residuals of an FtocpSolution against every constraint of the
/// problem at a given measured state.
struct ConstraintCheck {
  double dynamics = 0.0;
  double terminal = 0.0;
  double region = 0.0;          // largest barrier-constraint value
  double initial_ratio = 0.0;   // V(xi_now - z_0) / V_max
  bool assignment_valid = true; // consecutive regions overlap

  bool Passes(double tol = kFeasibilityTolerance,
              double ratio_tol = 1e-6) const;
};

/// Finite-horizon planner over the flat system with the safe set encoded by
/// per-step region assignments.
///
/// Decision vector layout: [z_0, ..., z_N, v_0, ..., v_{N-1}].
class Ftocp {
 public:
  /// Validates the spec (goal must be an unforced equilibrium and lie in a
  /// tightened region) and precomputes the region blocks. Throws
  /// InvalidArgument or EmptyTightenedRegion.
  explicit Ftocp(FtocpSpec spec);

  const FtocpSpec& spec() const { return spec_; }
  const DiscreteLTI& discrete() const { return disc_; }
  const StepConstraints& region_block(int id) const { return blocks_[id]; }
  int num_variables() const;

  /// The convex problem for a full assignment (N ids, consecutive ones
  /// overlapping). Throws InvalidArgument otherwise.
  ConvexSubproblem Build(const Eigen::Ref<const Eigen::VectorXd>& xi_now,
                         const std::vector<int>& assignment) const;

  /// Relaxation in which only the first prefix.size() steps carry region
  /// constraints.
  ConvexSubproblem BuildRelaxation(const Eigen::Ref<const Eigen::VectorXd>& xi_now,
                                   const std::vector<int>& prefix) const;

  /// Best-first branch and bound. `warm` (usually the shifted previous plan)
  /// seeds the incumbent. If `trace` is given every evaluated node is
  /// appended to it.
  FtocpSolution Solve(const Eigen::Ref<const Eigen::VectorXd>& xi_now,
                      const FtocpOptions& options = {},
                      const FtocpSolution* warm = nullptr,
                      std::vector<BnbNode>* trace = nullptr) const;

  /// Drops the first step and appends (xi_goal, 0) in the last region.
  FtocpSolution Shift(const FtocpSolution& prev) const;

  /// (z - xi_g)' Qc (z - xi_g) + v' Rc v.
  double StageCost(const Eigen::Ref<const Eigen::VectorXd>& z,
                   const Eigen::Ref<const Eigen::VectorXd>& v) const;
  double TotalCost(const FtocpSolution& sol) const;

  ConstraintCheck Check(const FtocpSolution& sol,
                        const Eigen::Ref<const Eigen::VectorXd>& xi_now) const;

  /// Splits a decision vector into z, v and attaches the assignment.
  FtocpSolution Unpack(const Eigen::Ref<const Eigen::VectorXd>& x,
                       std::vector<int> regions) const;

 private:
  bool ValidAssignment(const std::vector<int>& regions) const;

  FtocpSpec spec_;
  DiscreteLTI disc_;
  std::vector<StepConstraints> blocks_;
  ConvexSubproblem base_;  // cost, dynamics, terminal; ellipsoid centre unset
};

/// Reference state and input t seconds after the plan started, from the
/// exact ZOH rollout of segment floor(t / T). Requires 0 <= t < N T.
struct ReferencePoint {
  Eigen::VectorXd xi;
  Eigen::VectorXd v;
};
ReferencePoint Reference(const FtocpSolution& sol, const FlatLTI& sys, double T,
                         double t);

}  // namespace flatmpc
