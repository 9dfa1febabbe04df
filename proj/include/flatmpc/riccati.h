#pragma once

#include <limits>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "flatmpc/flat_core.h"

namespace flatmpc {

/// Weights of the disturbance-attenuating Riccati equation
///   P A + A' P - P B R^-1 B' P + P P / gamma^2 + Q = 0.
/// gamma = +infinity drops the attenuation term (standard continuous ARE).
struct RiccatiParams {
  Eigen::MatrixXd Q;
  Eigen::MatrixXd R;
  double gamma = std::numeric_limits<double>::infinity();
};

struct RiccatiSolution {
  Eigen::MatrixXd P;
  double residual = 0.0;
};

/// Stabilizing solution through the stable invariant subspace of the
/// Hamiltonian [[A, -S], [-Q, -A']] with S = B R^-1 B' - I / gamma^2. The
/// subspace is obtained from a complex Schur form reordered so the
/// eigenvalues with negative real part come first.
///
/// Throws NoStabilizingSolution if the Hamiltonian has eigenvalues on (or
/// numerically at) the imaginary axis, if the subspace basis is singular, or
/// if the recovered P is not symmetric positive definite with residual
/// <= 1e-8. Throws InvalidArgument for malformed Q, R or gamma.
RiccatiSolution SolveModifiedAre(const FlatLTI& sys,
                                 const RiccatiParams& params);

/// Frobenius norm of P A + A' P - P B R^-1 B' P + P P / gamma^2 + Q.
double RiccatiResidual(const FlatLTI& sys, const RiccatiParams& params,
                       const Eigen::Ref<const Eigen::MatrixXd>& P);

/// Largest semi-axis of {e : 0.5 e' P e <= v_max}.
double EllipsoidSemiAxis(const Eigen::Ref<const Eigen::MatrixXd>& P,
                         double v_max);

struct GammaCandidate {
  double gamma = 0.0;
  bool feasible = false;
  double v_max = 0.0;
  double semi_axis = std::numeric_limits<double>::infinity();
};

struct GammaSearchResult {
  double gamma = 0.0;
  RiccatiSolution solution;
  std::vector<GammaCandidate> candidates;
};

/// Line search over gamma minimizing the largest semi-axis of the error
/// ellipsoid. Infeasible grid points are skipped; ties go to the smaller
/// gamma. Throws AllGammaInfeasible if nothing on the grid is feasible.
GammaSearchResult MinimizeGamma(const FlatLTI& sys,
                                const Eigen::Ref<const Eigen::MatrixXd>& Q,
                                const Eigen::Ref<const Eigen::MatrixXd>& R,
                                double w_bar, std::span<const double> grid);

/// 50 log-spaced points per decade over [0.5, 50].
std::vector<double> DefaultGammaGrid();

/// Smallest and largest eigenvalue of a symmetric matrix.
double MinEigenvalue(const Eigen::Ref<const Eigen::MatrixXd>& S);
double MaxEigenvalue(const Eigen::Ref<const Eigen::MatrixXd>& S);

}  // namespace flatmpc
