#include "flatmpc/tracker.h"

#include <cmath>

#include <Eigen/Eigenvalues>

#include "flatmpc/errors.h"

namespace flatmpc {

Eigen::VectorXd ErrorEllipsoid::SemiAxes() const {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(P, Eigen::EigenvaluesOnly);
  return (2.0 * level * es.eigenvalues().cwiseInverse()).cwiseSqrt();
}

double ComputeVMax(const Eigen::Ref<const Eigen::MatrixXd>& P,
                   const Eigen::Ref<const Eigen::MatrixXd>& Q, double gamma,
                   double w_bar) {
  return 0.5 * gamma * gamma * MaxEigenvalue(P) / MinEigenvalue(Q) * w_bar *
         w_bar;
}

TrackingLaw::TrackingLaw(const FlatLTI& sys, const RiccatiParams& params,
                         const RiccatiSolution& solution, double w_bar)
    : A_(sys.A()),
      B_(sys.B()),
      P_(solution.P),
      gamma_(params.gamma),
      w_bar_(w_bar),
      lambda_min_Q_(MinEigenvalue(params.Q)) {
  if (P_.rows() != sys.state_dim() || P_.cols() != sys.state_dim()) {
    throw InvalidArgument("TrackingLaw: P has wrong dimensions");
  }
  if (!(w_bar >= 0.0)) {
    throw InvalidArgument("TrackingLaw: w_bar must be non-negative");
  }
  if (!std::isfinite(gamma_)) {
    throw InvalidArgument("TrackingLaw: needs a finite gamma for V_max");
  }
  K_ = 0.5 * params.R.llt().solve(B_.transpose() * P_);
  v_max_ = ComputeVMax(P_, params.Q, gamma_, w_bar_);
}

Eigen::VectorXd TrackingLaw::Feedback(
    const Eigen::Ref<const Eigen::VectorXd>& xi_e) const {
  return -K_ * xi_e;
}

double TrackingLaw::Lyapunov(const Eigen::Ref<const Eigen::VectorXd>& xi_e) const {
  return 0.5 * xi_e.dot(P_ * xi_e);
}

Eigen::VectorXd TrackingLaw::FlatInput(
    const Eigen::Ref<const Eigen::VectorXd>& xi,
    const Eigen::Ref<const Eigen::VectorXd>& xi_ref,
    const Eigen::Ref<const Eigen::VectorXd>& v_ref) const {
  return v_ref + Feedback(xi - xi_ref);
}

double TrackingLaw::IssMargin(const Eigen::Ref<const Eigen::VectorXd>& xi_e,
                              const Eigen::Ref<const Eigen::VectorXd>& w) const {
  return -0.5 * lambda_min_Q_ * xi_e.squaredNorm() +
         0.5 * gamma_ * gamma_ * w.squaredNorm();
}

double TrackingLaw::LyapunovRate(
    const Eigen::Ref<const Eigen::VectorXd>& xi_e,
    const Eigen::Ref<const Eigen::VectorXd>& w) const {
  const Eigen::VectorXd xi_dot = A_ * xi_e + B_ * Feedback(xi_e) + w;
  return (P_ * xi_e).dot(xi_dot);
}

}  // namespace flatmpc
