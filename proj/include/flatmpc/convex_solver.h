#pragma once

#include <limits>
#include <optional>
#include <string_view>

#include <Eigen/Dense>

namespace flatmpc {

/// 0.5 (x - center)' P (x - center) <= level, with P symmetric PSD.
struct EllipsoidConstraint {
  Eigen::MatrixXd P;
  Eigen::VectorXd center;
  double level = 0.0;

  double Value(const Eigen::Ref<const Eigen::VectorXd>& x) const {
    const Eigen::VectorXd d = x - center;
    return 0.5 * d.dot(P * d) - level;
  }
};

/// minimize    0.5 x' H x + g' x + constant
/// subject to  Aeq x = beq,  Ain x <= bin,  optional ellipsoid.
struct ConvexSubproblem {
  Eigen::MatrixXd H;
  Eigen::VectorXd g;
  double constant = 0.0;
  Eigen::MatrixXd Aeq;
  Eigen::VectorXd beq;
  Eigen::MatrixXd Ain;
  Eigen::VectorXd bin;
  std::optional<EllipsoidConstraint> ellipsoid;

  int num_variables() const { return static_cast<int>(H.rows()); }

  /// Empty problem over n variables (zero cost, no constraints).
  static ConvexSubproblem Empty(int n);
  double Objective(const Eigen::Ref<const Eigen::VectorXd>& x) const;
  /// Largest violation over all constraints (0 when feasible).
  double MaxViolation(const Eigen::Ref<const Eigen::VectorXd>& x) const;
};

enum class SolveStatus { kOptimal, kInfeasible, kMaxIter };

std::string_view ToString(SolveStatus status);

/// Lagrange multipliers: eq is free, ineq and ellipsoid are >= 0.
struct Duals {
  Eigen::VectorXd eq;
  Eigen::VectorXd ineq;
  double ellipsoid = 0.0;
};

struct SolveReport {
  SolveStatus status = SolveStatus::kMaxIter;
  Eigen::VectorXd x;
  Duals duals;
  double objective = 0.0;
  /// Lagrangian dual function at `duals`; a lower bound on the optimum.
  double dual_bound = -std::numeric_limits<double>::infinity();
  double kkt_residual = std::numeric_limits<double>::infinity();
  double max_violation = std::numeric_limits<double>::infinity();
  /// For kInfeasible: residual of the Farkas-type certificate (stationarity
  /// of the normalized multipliers that prove infeasibility).
  double certificate_residual = std::numeric_limits<double>::infinity();
  int iterations = 0;
};

struct SolverOptions {
  int max_iterations = 200;
};

/// Tolerances every kOptimal report meets.
inline constexpr double kKktTolerance = 1e-6;
inline constexpr double kFeasibilityTolerance = 1e-7;

/// Primal-dual interior point method. Equalities are eliminated through a
/// null-space basis, the remaining inequality-constrained problem is first
/// tested for feasibility (phase I, which also yields the infeasibility
/// certificate) and then solved with Mehrotra predictor-corrector steps, the
/// ellipsoid handled as one convex quadratic inequality.
///
/// Deterministic: identical inputs give bit-identical reports.
SolveReport Solve(const ConvexSubproblem& prob,
                  const SolverOptions& options = {});

/// max of stationarity, primal feasibility, dual feasibility and
/// complementarity residuals, all in the infinity norm.
double CheckKkt(const ConvexSubproblem& prob,
                const Eigen::Ref<const Eigen::VectorXd>& x,
                const Duals& duals);

}  // namespace flatmpc
