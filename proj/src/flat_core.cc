#include "flatmpc/flat_core.h"

#include <cmath>
#include <string>

#include <unsupported/Eigen/MatrixFunctions>

#include "flatmpc/errors.h"

namespace flatmpc {

namespace {

// Top blocks of exp([[A, B], [0, 0]] t): (exp(A t), int_0^t exp(A s) ds B).
std::pair<Eigen::MatrixXd, Eigen::MatrixXd> AugmentedExponential(
    const FlatLTI& sys, double t) {
  const int n = sys.state_dim();
  const int m = sys.input_dim();
  Eigen::MatrixXd aug = Eigen::MatrixXd::Zero(n + m, n + m);
  aug.topLeftCorner(n, n) = sys.A() * t;
  aug.topRightCorner(n, m) = sys.B() * t;
  const Eigen::MatrixXd e = MatrixExponential(aug);
  return {e.topLeftCorner(n, n), e.topRightCorner(n, m)};
}

}  // namespace

FlatLTI FlatLTI::Make(const Eigen::Ref<const Eigen::MatrixXd>& A,
                      const Eigen::Ref<const Eigen::MatrixXd>& B) {
  if (A.rows() == 0 || A.rows() != A.cols()) {
    throw InvalidArgument("FlatLTI: A must be square and non-empty");
  }
  if (B.rows() != A.rows() || B.cols() == 0) {
    throw InvalidArgument("FlatLTI: B must have as many rows as A");
  }
  if (!A.allFinite() || !B.allFinite()) {
    throw InvalidArgument("FlatLTI: non-finite entries");
  }
  if (ControllabilityRank(A, B) != A.rows()) {
    throw InvalidArgument("FlatLTI: (A, B) is not controllable");
  }
  return FlatLTI(A, B);
}

FlatLTI FlatLTI::DoubleIntegrator(int axes) {
  if (axes < 1) throw InvalidArgument("DoubleIntegrator: axes must be >= 1");
  const int n = 2 * axes;
  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(n, n);
  Eigen::MatrixXd B = Eigen::MatrixXd::Zero(n, axes);
  A.topRightCorner(axes, axes).setIdentity();
  B.bottomRows(axes).setIdentity();
  return Make(A, B);
}

int ControllabilityRank(const Eigen::Ref<const Eigen::MatrixXd>& A,
                        const Eigen::Ref<const Eigen::MatrixXd>& B) {
  const Eigen::Index n = A.rows();
  const Eigen::Index m = B.cols();
  Eigen::MatrixXd ctrb(n, n * m);
  Eigen::MatrixXd block = B;
  for (Eigen::Index k = 0; k < n; ++k) {
    ctrb.middleCols(k * m, m) = block;
    block = A * block;
  }
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(ctrb);
  qr.setThreshold(1e-10);
  return static_cast<int>(qr.rank());
}

Eigen::MatrixXd MatrixExponential(const Eigen::Ref<const Eigen::MatrixXd>& M) {
  if (M.rows() != M.cols()) {
    throw InvalidArgument("MatrixExponential: matrix is not square");
  }
  if (!M.allFinite()) {
    throw InvalidArgument("MatrixExponential: non-finite entries");
  }
  if (M.size() == 0) return Eigen::MatrixXd(0, 0);
  const Eigen::MatrixXd copy = M;
  return copy.exp();
}

DiscreteLTI Discretize(const FlatLTI& sys, double T) {
  if (!(T > 0.0) || !std::isfinite(T)) {
    throw InvalidArgument("Discretize: sampling period must be positive");
  }
  auto [Ad, Bd] = AugmentedExponential(sys, T);
  return DiscreteLTI{std::move(Ad), std::move(Bd), T};
}

Eigen::VectorXd RolloutReference(const FlatLTI& sys,
                                 const Eigen::Ref<const Eigen::VectorXd>& z,
                                 const Eigen::Ref<const Eigen::VectorXd>& v,
                                 double t, double T) {
  if (!(t >= 0.0 && t <= T)) {
    throw InvalidArgument("RolloutReference: t = " + std::to_string(t) +
                          " outside [0, " + std::to_string(T) + "]");
  }
  if (z.size() != sys.state_dim() || v.size() != sys.input_dim()) {
    throw InvalidArgument("RolloutReference: dimension mismatch");
  }
  if (t == 0.0) return z;
  const auto [phi, gamma] = AugmentedExponential(sys, t);
  return phi * z + gamma * v;
}

}  // namespace flatmpc
