#pragma once

#include <Eigen/Dense>

namespace flatmpc {

/// Linear time-invariant flat system  xi_dot = A xi + B v.
///
/// Construct through Make(), which checks dimensions and controllability;
/// every flat system obtained from a differentially flat plant is
/// controllable, so an uncontrollable pair is rejected as a modelling error.
class FlatLTI {
 public:
  static FlatLTI Make(const Eigen::Ref<const Eigen::MatrixXd>& A,
                      const Eigen::Ref<const Eigen::MatrixXd>& B);

  /// `axes` decoupled double integrators. State ordering is all positions
  /// first, then all velocities: xi = (p_1..p_k, p_1'..p_k'), v = (a_1..a_k).
  /// axes = 2 is the flat system of the unicycle.
  static FlatLTI DoubleIntegrator(int axes);

  const Eigen::MatrixXd& A() const { return A_; }
  const Eigen::MatrixXd& B() const { return B_; }
  int state_dim() const { return static_cast<int>(A_.rows()); }
  int input_dim() const { return static_cast<int>(B_.cols()); }

 private:
  FlatLTI(Eigen::MatrixXd A, Eigen::MatrixXd B)
      : A_(std::move(A)), B_(std::move(B)) {}

  Eigen::MatrixXd A_;
  Eigen::MatrixXd B_;
};

/// Exact zero-order-hold discretisation of a FlatLTI with period T.
struct DiscreteLTI {
  Eigen::MatrixXd Ad;
  Eigen::MatrixXd Bd;
  double T = 0.0;
};

/// Rank of the controllability matrix [B, AB, ..., A^{n-1}B].
int ControllabilityRank(const Eigen::Ref<const Eigen::MatrixXd>& A,
                        const Eigen::Ref<const Eigen::MatrixXd>& B);

/// exp(M) for a square, finite M. Throws InvalidArgument otherwise.
Eigen::MatrixXd MatrixExponential(const Eigen::Ref<const Eigen::MatrixXd>& M);

/// Ad = exp(A T), Bd = int_0^T exp(A s) B ds, both read off the exponential of
/// the augmented matrix [[A, B], [0, 0]] T. Throws InvalidArgument if T <= 0.
DiscreteLTI Discretize(const FlatLTI& sys, double T);

/// Continuous-time state reached from z after t seconds under the constant
/// input v, i.e. exp(A t) z + (int_0^t exp(A s) ds) B v. Requires
/// 0 <= t <= T; T is the hold interval the input is valid for.
Eigen::VectorXd RolloutReference(const FlatLTI& sys,
                                 const Eigen::Ref<const Eigen::VectorXd>& z,
                                 const Eigen::Ref<const Eigen::VectorXd>& v,
                                 double t, double T);

}  // namespace flatmpc
