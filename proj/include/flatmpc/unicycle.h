#pragma once

#include <cmath>

#include <Eigen/Dense>

namespace flatmpc {

/// Speed below which the inverse flat map is treated as singular, m/s.
inline constexpr double kSpeedFloor = 1e-6;

/// Unicycle with its dynamic extension: position (x1, x2), heading x3 and
/// the extension state y, the planar velocity the feedback linearization
/// tracks.
struct UnicycleState {
  double x1 = 0.0;
  double x2 = 0.0;
  double x3 = 0.0;
  double y1 = 0.0;
  double y2 = 0.0;

  using Vector = Eigen::Matrix<double, 5, 1>;
  Vector AsVector() const { return Vector(x1, x2, x3, y1, y2); }
  static UnicycleState FromVector(const Vector& s) {
    return {s(0), s(1), s(2), s(3), s(4)};
  }
  double speed() const { return std::hypot(y1, y2); }
};

/// xi = (x1, x2, y1, y2).
Eigen::Vector4d FlatMap(const UnicycleState& s);

/// x = (xi_1, xi_2, atan2(xi_4, xi_3)), y = (xi_3, xi_4). Throws
/// SingularState when |(xi_3, xi_4)| < eps.
UnicycleState InverseMap(const Eigen::Ref<const Eigen::VectorXd>& xi,
                         double eps = kSpeedFloor);

/// u1 = |y|, u2 = (-y2 v1 + y1 v2) / |y|^2. Throws SingularState when
/// |y| < eps.
Eigen::Vector2d EndogenousFeedback(const UnicycleState& s,
                                   const Eigen::Ref<const Eigen::VectorXd>& v,
                                   double eps = kSpeedFloor);

/// Time derivative of (x, y) under input u, flat input v and matched
/// disturbance d:
///   x1' = (u1 + d1) cos x3,  x2' = (u1 + d1) sin x3,  x3' = u2 + d2,
///   y'  = v + d2 J y,        J = [[0, -1], [1, 0]].
/// The extension turns with the heading, so y stays aligned with it and
/// |y| = u1 along closed-loop trajectories.
UnicycleState::Vector PlantDerivative(const UnicycleState& s,
                                      const Eigen::Ref<const Eigen::VectorXd>& u,
                                      const Eigen::Ref<const Eigen::VectorXd>& v,
                                      const Eigen::Ref<const Eigen::VectorXd>& d);

/// Disturbance seen by the flat system, xi' - A xi - B v, for the
/// derivative above. Equals (d1 e(x3), d2 J y) when y = u1 e(x3).
Eigen::Vector4d FlatDisturbance(const UnicycleState& s,
                                const Eigen::Ref<const Eigen::VectorXd>& u,
                                const Eigen::Ref<const Eigen::VectorXd>& d);

/// d(w)/d(d) at s with y aligned to the heading: columns (e(x3), 0) and
/// (0, J y).
Eigen::Matrix<double, 4, 2> DisturbanceJacobian(const UnicycleState& s);

}  // namespace flatmpc
