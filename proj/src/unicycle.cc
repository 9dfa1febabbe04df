#include "flatmpc/unicycle.h"

#include <cmath>
#include <string>

#include "flatmpc/errors.h"

namespace flatmpc {

namespace {

void RequireSpeed(double y1, double y2, double eps, const char* who) {
  const double speed = std::hypot(y1, y2);
  if (!(speed >= eps)) {
    throw SingularState(std::string(who) + ": speed " + std::to_string(speed) +
                        " below floor " + std::to_string(eps));
  }
}

}  // namespace

Eigen::Vector4d FlatMap(const UnicycleState& s) {
  return Eigen::Vector4d(s.x1, s.x2, s.y1, s.y2);
}

UnicycleState InverseMap(const Eigen::Ref<const Eigen::VectorXd>& xi,
                         double eps) {
  if (xi.size() != 4) throw InvalidArgument("InverseMap: need a 4-vector");
  RequireSpeed(xi(2), xi(3), eps, "InverseMap");
  return {xi(0), xi(1), std::atan2(xi(3), xi(2)), xi(2), xi(3)};
}

Eigen::Vector2d EndogenousFeedback(const UnicycleState& s,
                                   const Eigen::Ref<const Eigen::VectorXd>& v,
                                   double eps) {
  if (v.size() != 2) throw InvalidArgument("EndogenousFeedback: need a 2-vector");
  RequireSpeed(s.y1, s.y2, eps, "EndogenousFeedback");
  const double sq = s.y1 * s.y1 + s.y2 * s.y2;
  return Eigen::Vector2d(std::sqrt(sq), (-s.y2 * v(0) + s.y1 * v(1)) / sq);
}

UnicycleState::Vector PlantDerivative(const UnicycleState& s,
                                      const Eigen::Ref<const Eigen::VectorXd>& u,
                                      const Eigen::Ref<const Eigen::VectorXd>& v,
                                      const Eigen::Ref<const Eigen::VectorXd>& d) {
  if (u.size() != 2 || v.size() != 2 || d.size() != 2) {
    throw InvalidArgument("PlantDerivative: u, v and d must be 2-vectors");
  }
  const double speed = u(0) + d(0);
  UnicycleState::Vector out;
  out << speed * std::cos(s.x3), speed * std::sin(s.x3), u(1) + d(1),
      v(0) - d(1) * s.y2, v(1) + d(1) * s.y1;
  return out;
}

Eigen::Vector4d FlatDisturbance(const UnicycleState& s,
                                const Eigen::Ref<const Eigen::VectorXd>& u,
                                const Eigen::Ref<const Eigen::VectorXd>& d) {
  const double speed = u(0) + d(0);
  return Eigen::Vector4d(speed * std::cos(s.x3) - s.y1,
                         speed * std::sin(s.x3) - s.y2, -d(1) * s.y2,
                         d(1) * s.y1);
}

Eigen::Matrix<double, 4, 2> DisturbanceJacobian(const UnicycleState& s) {
  Eigen::Matrix<double, 4, 2> G = Eigen::Matrix<double, 4, 2>::Zero();
  G(0, 0) = std::cos(s.x3);
  G(1, 0) = std::sin(s.x3);
  G(2, 1) = -s.y2;
  G(3, 1) = s.y1;
  return G;
}

}  // namespace flatmpc
