#pragma once

#include <cstdint>
#include <limits>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "flatmpc/ftocp.h"
#include "flatmpc/tracker.h"
#include "flatmpc/unicycle.h"

namespace flatmpc {

enum class DisturbanceKind {
  kNone,
  kSinusoid,       // d_bar (cos omega t, sin omega t)
  kUniformRandom,  // uniform in the d_bar disk, redrawn every integration step
  kWorstCase,      // d_bar G' P e / |G' P e|, the direction that grows V fastest
};

std::string_view ToString(DisturbanceKind kind);
/// Inverse of ToString. Throws InvalidArgument on an unknown name.
DisturbanceKind ParseDisturbanceKind(std::string_view name);

struct DisturbanceModel {
  DisturbanceKind kind = DisturbanceKind::kNone;
  double d_bar = 0.0;
  std::uint64_t seed = 0;
  double omega = 1.0;  // rad/s, sinusoid only
};

struct Rates {
  double T = 1.0;       // replanning period, s
  double f_low = 300.0; // tracking law rate, Hz
  double f_int = 3000.0;

  /// Requires f_int >= 10 f_low >= 10 / T, with f_int / f_low and f_low T
  /// integers. Throws InvalidArgument otherwise.
  void Validate() const;
  int steps_per_sample() const;
  int samples_per_replan() const;
};

struct SimOptions {
  Rates rates;
  double duration = 30.0;  // s, upper bound; the run ends earlier at rest
  FtocpOptions ftocp;
  /// The first plan is computed before the robot moves.
  double initial_timeout = std::numeric_limits<double>::infinity();
  double speed_floor = kSpeedFloor;
};

/// One log point on the tracking-law grid.
struct SimSample {
  double t = 0.0;
  UnicycleState state;
  Eigen::Vector4d xi = Eigen::Vector4d::Zero();
  Eigen::Vector4d xi_ref = Eigen::Vector4d::Zero();
  Eigen::Vector2d u = Eigen::Vector2d::Zero();
  Eigen::Vector2d v = Eigen::Vector2d::Zero();
  Eigen::Vector2d d = Eigen::Vector2d::Zero();
  double w_norm = 0.0;   // |xi' - A xi - B v|
  double V = 0.0;        // V(xi - xi_ref)
  double V_goal = 0.0;   // V(xi - xi_goal)
  double margin = 0.0;   // SafeGeometry::Margin of the position
  int replan = -1;       // index into SimLog::replans if a replan happened here
  bool rest = false;
};

struct ReplanRecord {
  int k = 0;
  double t = 0.0;
  FtocpStatus status = FtocpStatus::kFailed;  // of the direct solve
  bool fallback = false;  // shifted previous plan used instead
  double cost = 0.0;      // of the plan in use
  int nodes = 0;
  double solve_time = 0.0;
  bool shift_ok = true;   // shifted plan passed the constraint checker
  bool cost_ok = true;    // J(k) <= J(k-1) - l(z_0, v_0) + 1e-6
  std::vector<int> regions;
};

struct SimLog {
  double d_bar = 0.0;
  double v_max = 0.0;
  std::vector<SimSample> samples;
  std::vector<ReplanRecord> replans;
  UnicycleState final_state;
  bool rest = false;  // rest logic engaged and ended the run
};

/// Tolerance on the per-replan cost decrease.
inline constexpr double kCostDecreaseTolerance = 1e-6;

/// Closed-loop simulation of the disturbed unicycle under the planner and
/// the tracking law. The planner must be built for the unicycle flat system
/// with the law's ellipsoid.
class Simulator {
 public:
  Simulator(const Ftocp& planner, const TrackingLaw& law, SimOptions options);

  /// Runs from `start`. Throws InitialInfeasible if the first plan has no
  /// usable solution, and SingularState if the speed drops below the floor
  /// while V(xi - xi_goal) > V_max.
  SimLog Run(const UnicycleState& start,
             const DisturbanceModel& disturbance) const;

 private:
  const Ftocp& planner_;
  const TrackingLaw& law_;
  SimOptions options_;
};

/// One classical RK4 step of length h under held flat input v. The
/// disturbance is a callable d(t, state).
template <typename Disturbance>
UnicycleState Rk4Step(const UnicycleState& s, double t, double h,
                      const Eigen::Vector2d& v, const Disturbance& d,
                      double speed_floor = kSpeedFloor) {
  auto f = [&](double tau, const UnicycleState::Vector& x) {
    const UnicycleState st = UnicycleState::FromVector(x);
    const Eigen::Vector2d u = EndogenousFeedback(st, v, speed_floor);
    return PlantDerivative(st, u, v, d(tau, st));
  };
  const UnicycleState::Vector x = s.AsVector();
  const UnicycleState::Vector k1 = f(t, x);
  const UnicycleState::Vector k2 = f(t + 0.5 * h, x + 0.5 * h * k1);
  const UnicycleState::Vector k3 = f(t + 0.5 * h, x + 0.5 * h * k2);
  const UnicycleState::Vector k4 = f(t + h, x + h * k3);
  return UnicycleState::FromVector(x + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4));
}

}  // namespace flatmpc
