#include "flatmpc/riccati.h"

#include <algorithm>
#include <cmath>
#include <complex>
#include <sstream>

#include <Eigen/Eigenvalues>

#include "flatmpc/errors.h"
#include "flatmpc/tracker.h"

namespace flatmpc {

namespace {

using ComplexMatrix = Eigen::MatrixXcd;
using Complex = std::complex<double>;

constexpr double kResidualTolerance = 1e-8;

void ValidateParams(const FlatLTI& sys, const RiccatiParams& params) {
  const int n = sys.state_dim();
  const int m = sys.input_dim();
  if (params.Q.rows() != n || params.Q.cols() != n) {
    throw InvalidArgument("Riccati: Q has wrong dimensions");
  }
  if (params.R.rows() != m || params.R.cols() != m) {
    throw InvalidArgument("Riccati: R has wrong dimensions");
  }
  if (!(params.gamma > 0.0)) {
    throw InvalidArgument("Riccati: gamma must be positive");
  }
  if (!params.Q.isApprox(params.Q.transpose(), 1e-12) ||
      !params.R.isApprox(params.R.transpose(), 1e-12)) {
    throw InvalidArgument("Riccati: Q and R must be symmetric");
  }
  if (MinEigenvalue(params.Q) <= 0.0 || MinEigenvalue(params.R) <= 0.0) {
    throw InvalidArgument("Riccati: Q and R must be positive definite");
  }
}

// S = B R^-1 B' - I / gamma^2.
Eigen::MatrixXd QuadraticTerm(const FlatLTI& sys,
                              const RiccatiParams& params) {
  const int n = sys.state_dim();
  Eigen::MatrixXd S =
      sys.B() * params.R.llt().solve(sys.B().transpose());
  if (std::isfinite(params.gamma)) {
    S -= Eigen::MatrixXd::Identity(n, n) / (params.gamma * params.gamma);
  }
  return S;
}

// Swaps the adjacent diagonal entries k, k+1 of the upper triangular T with
// one unitary rotation, updating the Schur vectors U.
void SwapAdjacent(ComplexMatrix& T, ComplexMatrix& U, Eigen::Index k) {
  const Complex t11 = T(k, k);
  const Complex t22 = T(k + 1, k + 1);
  // (t12, t22 - t11) is an eigenvector of the 2x2 block for t22.
  const Complex x1 = T(k, k + 1);
  const Complex x2 = t22 - t11;
  const double r = std::hypot(std::abs(x1), std::abs(x2));
  if (r == 0.0) return;
  const Complex c = x1 / r;
  const Complex s = x2 / r;
  Eigen::Matrix2cd G;
  G << c, -std::conj(s), s, std::conj(c);

  T.middleRows(k, 2) = G.adjoint() * T.middleRows(k, 2);
  T.middleCols(k, 2) = T.middleCols(k, 2) * G;
  U.middleCols(k, 2) = U.middleCols(k, 2) * G;
  T(k + 1, k) = 0.0;
}

// Bubble the stable eigenvalues (Re < 0) to the leading block.
void ReorderStableFirst(ComplexMatrix& T, ComplexMatrix& U) {
  const Eigen::Index dim = T.rows();
  for (Eigen::Index i = 0; i < dim; ++i) {
    for (Eigen::Index k = dim - 2; k >= i; --k) {
      if (T(k, k).real() >= 0.0 && T(k + 1, k + 1).real() < 0.0) {
        SwapAdjacent(T, U, k);
      }
      if (k == 0) break;
    }
  }
}

}  // namespace

double MinEigenvalue(const Eigen::Ref<const Eigen::MatrixXd>& S) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(S, Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff();
}

double MaxEigenvalue(const Eigen::Ref<const Eigen::MatrixXd>& S) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(S, Eigen::EigenvaluesOnly);
  return es.eigenvalues().maxCoeff();
}

double RiccatiResidual(const FlatLTI& sys, const RiccatiParams& params,
                       const Eigen::Ref<const Eigen::MatrixXd>& P) {
  const Eigen::MatrixXd S = QuadraticTerm(sys, params);
  const Eigen::MatrixXd defect =
      P * sys.A() + sys.A().transpose() * P - P * S * P + params.Q;
  return defect.norm();
}

RiccatiSolution SolveModifiedAre(const FlatLTI& sys,
                                 const RiccatiParams& params) {
  ValidateParams(sys, params);
  const int n = sys.state_dim();
  const Eigen::MatrixXd S = QuadraticTerm(sys, params);

  Eigen::MatrixXd H(2 * n, 2 * n);
  H << sys.A(), -S, -params.Q, -sys.A().transpose();

  Eigen::ComplexSchur<Eigen::MatrixXd> schur(H);
  if (schur.info() != Eigen::Success) {
    throw NoStabilizingSolution("Riccati: Schur decomposition failed");
  }
  ComplexMatrix T = schur.matrixT();
  ComplexMatrix U = schur.matrixU();

  // Eigenvalues within this band of the imaginary axis are treated as on it.
  const double axis_tol = 1e-9 * std::max(1.0, H.norm());
  int stable = 0;
  for (Eigen::Index i = 0; i < 2 * n; ++i) {
    const double re = T(i, i).real();
    if (std::abs(re) <= axis_tol) {
      std::ostringstream msg;
      msg << "Riccati: Hamiltonian eigenvalue " << T(i, i)
          << " on the imaginary axis (gamma = " << params.gamma
          << " too small?)";
      throw NoStabilizingSolution(msg.str());
    }
    if (re < 0.0) ++stable;
  }
  if (stable != n) {
    throw NoStabilizingSolution("Riccati: stable subspace has wrong dimension");
  }

  ReorderStableFirst(T, U);

  const ComplexMatrix U11 = U.topLeftCorner(n, n);
  const ComplexMatrix U21 = U.bottomLeftCorner(n, n);
  Eigen::FullPivLU<ComplexMatrix> lu(U11);
  if (!lu.isInvertible() ||
      lu.rcond() < 1e3 * std::numeric_limits<double>::epsilon()) {
    throw NoStabilizingSolution("Riccati: stable subspace basis is singular");
  }
  // P U11 = U21.
  const ComplexMatrix Pc =
      U11.transpose().fullPivLu().solve(U21.transpose()).transpose();
  Eigen::MatrixXd P = Pc.real();
  P = 0.5 * (P + P.transpose()).eval();

  RiccatiSolution sol{P, RiccatiResidual(sys, params, P)};
  if (!(sol.residual <= kResidualTolerance)) {
    std::ostringstream msg;
    msg << "Riccati: residual " << sol.residual << " above tolerance";
    throw NoStabilizingSolution(msg.str());
  }
  if (!(MinEigenvalue(P) > 0.0)) {
    throw NoStabilizingSolution("Riccati: solution is not positive definite");
  }
  return sol;
}

double EllipsoidSemiAxis(const Eigen::Ref<const Eigen::MatrixXd>& P,
                         double v_max) {
  return std::sqrt(2.0 * v_max / MinEigenvalue(P));
}

GammaSearchResult MinimizeGamma(const FlatLTI& sys,
                                const Eigen::Ref<const Eigen::MatrixXd>& Q,
                                const Eigen::Ref<const Eigen::MatrixXd>& R,
                                double w_bar, std::span<const double> grid) {
  if (grid.empty()) throw InvalidArgument("MinimizeGamma: empty grid");
  if (!std::is_sorted(grid.begin(), grid.end())) {
    throw InvalidArgument("MinimizeGamma: grid must be ascending");
  }
  GammaSearchResult result;
  result.candidates.reserve(grid.size());
  int best = -1;
  for (const double gamma : grid) {
    GammaCandidate cand;
    cand.gamma = gamma;
    try {
      RiccatiSolution sol = SolveModifiedAre(sys, {Q, R, gamma});
      cand.feasible = true;
      cand.v_max = ComputeVMax(sol.P, Q, gamma, w_bar);
      cand.semi_axis = EllipsoidSemiAxis(sol.P, cand.v_max);
      // Strict comparison keeps the lowest gamma on ties.
      if (best < 0 ||
          cand.semi_axis < result.candidates[best].semi_axis) {
        best = static_cast<int>(result.candidates.size());
        result.gamma = gamma;
        result.solution = std::move(sol);
      }
    } catch (const NoStabilizingSolution&) {
      cand.feasible = false;
    }
    result.candidates.push_back(cand);
  }
  if (best < 0) {
    throw AllGammaInfeasible(
        "MinimizeGamma: no grid point admits a stabilizing solution");
  }
  return result;
}

std::vector<double> DefaultGammaGrid() {
  // log10(0.5) .. log10(50) spans two decades.
  constexpr int kPerDecade = 50;
  const double lo = std::log10(0.5);
  const int count = 2 * kPerDecade + 1;
  std::vector<double> grid(count);
  for (int i = 0; i < count; ++i) {
    grid[i] = std::pow(10.0, lo + static_cast<double>(i) / kPerDecade);
  }
  return grid;
}

}  // namespace flatmpc
