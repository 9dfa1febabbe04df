#pragma once

#include <Eigen/Dense>

#include "flatmpc/flat_core.h"
#include "flatmpc/riccati.h"

namespace flatmpc {

/// Sub-level set {e : 0.5 e' P e <= level} of the tracking Lyapunov function.
struct ErrorEllipsoid {
  Eigen::MatrixXd P;
  double level = 0.0;

  double Value(const Eigen::Ref<const Eigen::VectorXd>& e) const {
    return 0.5 * e.dot(P * e);
  }
  /// Exact test, no slack.
  bool Contains(const Eigen::Ref<const Eigen::VectorXd>& e) const {
    return Value(e) <= level;
  }
  /// Semi-axis lengths sqrt(2 level / lambda_i(P)), ascending eigenvalue order.
  Eigen::VectorXd SemiAxes() const;
};

/// 0.5 gamma^2 lambda_max(P) / lambda_min(Q) w_bar^2.
double ComputeVMax(const Eigen::Ref<const Eigen::MatrixXd>& P,
                   const Eigen::Ref<const Eigen::MatrixXd>& Q, double gamma,
                   double w_bar);

/// Low-level ISS tracking controller around a flat reference.
///
/// The feedback is u_e = -K e with K = 0.5 R^-1 B' P. With P from
/// SolveModifiedAre, V(e) = 0.5 e' P e satisfies
///   dV/dt <= -0.5 lambda_min(Q) |e|^2 + 0.5 gamma^2 |w|^2
/// along e_dot = A e + B u_e + w, which makes the ellipsoid at level V_max
/// robustly invariant for |w| <= w_bar.
class TrackingLaw {
 public:
  TrackingLaw(const FlatLTI& sys, const RiccatiParams& params,
              const RiccatiSolution& solution, double w_bar);

  const Eigen::MatrixXd& K() const { return K_; }
  const Eigen::MatrixXd& P() const { return P_; }
  double gamma() const { return gamma_; }
  double w_bar() const { return w_bar_; }
  double v_max() const { return v_max_; }
  double lambda_min_Q() const { return lambda_min_Q_; }
  ErrorEllipsoid ellipsoid() const { return {P_, v_max_}; }

  Eigen::VectorXd Feedback(const Eigen::Ref<const Eigen::VectorXd>& xi_e) const;
  double Lyapunov(const Eigen::Ref<const Eigen::VectorXd>& xi_e) const;

  /// v_ref + Feedback(xi - xi_ref).
  Eigen::VectorXd FlatInput(const Eigen::Ref<const Eigen::VectorXd>& xi,
                            const Eigen::Ref<const Eigen::VectorXd>& xi_ref,
                            const Eigen::Ref<const Eigen::VectorXd>& v_ref) const;

  /// -alpha(|xi_e|) + iota(|w|) with alpha(s) = 0.5 lambda_min(Q) s^2 and
  /// iota(s) = 0.5 gamma^2 s^2.
  double IssMargin(const Eigen::Ref<const Eigen::VectorXd>& xi_e,
                   const Eigen::Ref<const Eigen::VectorXd>& w) const;

  /// dV/dt = grad V . (A e + B Feedback(e) + w), evaluated directly.
  double LyapunovRate(const Eigen::Ref<const Eigen::VectorXd>& xi_e,
                      const Eigen::Ref<const Eigen::VectorXd>& w) const;

 private:
  Eigen::MatrixXd A_;
  Eigen::MatrixXd B_;
  Eigen::MatrixXd P_;
  Eigen::MatrixXd K_;
  double gamma_;
  double w_bar_;
  double lambda_min_Q_;
  double v_max_;
};

}  // namespace flatmpc
