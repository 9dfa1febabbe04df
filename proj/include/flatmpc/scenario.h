#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "flatmpc/ftocp.h"
#include "flatmpc/riccati.h"
#include "flatmpc/simulator.h"
#include "flatmpc/tracker.h"
#include "flatmpc/unicycle.h"

namespace flatmpc {

/// Horizon, replanning period and tracking rate of a robot class.
struct Profile {
  std::string name;
  int N = 9;
  double T = 1.0;
  double f_low = 300.0;
};

/// "rover" (N = 9, T = 1 s, 300 Hz) or "quadruped" (N = 30, T = 2 s, 20 Hz).
/// Throws ScenarioError for other names.
Profile ProfileByName(std::string_view name);

struct Rectangle {
  Eigen::Vector2d lo;
  Eigen::Vector2d hi;
};

/// Everything needed to synthesize the controller and run one experiment.
struct Scenario {
  std::string name;
  std::string profile = "rover";
  std::vector<Rectangle> regions;
  UnicycleState start;
  Eigen::Vector2d goal = Eigen::Vector2d::Zero();
  double d_bar = 0.0;
  Eigen::MatrixXd Q;
  Eigen::MatrixXd R;
  std::optional<double> gamma;     // fixed gamma, or
  std::vector<double> gamma_grid;  // line search over this grid
  Eigen::MatrixXd Qc;
  Eigen::MatrixXd Rc;
  int N = 9;
  Rates rates;
  double duration = 30.0;
  DisturbanceKind disturbance = DisturbanceKind::kNone;
  double omega = 1.0;
  std::uint64_t seed = 0;
  FtocpOptions solver;

  SimOptions sim_options() const;
  DisturbanceModel disturbance_model(std::uint64_t run_seed) const;
};

struct ScenarioOverrides {
  /// Replaces the file's profile together with its N, T and f_low.
  std::optional<std::string> profile;
  /// "dotted.key=value" assignments applied last. The value is parsed as
  /// JSON and taken as a plain string if that fails; null removes the key.
  std::vector<std::string> assignments;
};

/// Parses and validates a JSON scenario. Throws ScenarioError with a
/// message naming the offending key.
Scenario ParseScenario(std::string_view json_text,
                       const ScenarioOverrides& overrides = {});
Scenario LoadScenario(const std::string& path,
                      const ScenarioOverrides& overrides = {});

/// Tracking law and planner synthesized from a scenario.
///
/// Throws NoStabilizingSolution or AllGammaInfeasible from the Riccati
/// step. With `with_planner`, also EmptyTightenedRegion if a region vanishes
/// under tightening and InvalidArgument if the goal lies outside every
/// tightened region.
class Controller {
 public:
  explicit Controller(const Scenario& scenario, bool with_planner = true);

  const FlatLTI& sys() const { return sys_; }
  const RiccatiParams& params() const { return params_; }
  const RiccatiSolution& riccati() const { return riccati_; }
  /// Present when gamma came from a grid search.
  const std::optional<GammaSearchResult>& search() const { return search_; }
  const TrackingLaw& law() const { return law_; }
  const SafeGeometry& geometry() const { return geometry_; }
  bool has_planner() const { return planner_.has_value(); }
  /// Throws InvalidArgument when built without a planner.
  const Ftocp& planner() const;

 private:
  FlatLTI sys_;
  std::optional<GammaSearchResult> search_;
  RiccatiParams params_;
  RiccatiSolution riccati_;
  TrackingLaw law_;
  SafeGeometry geometry_;
  std::optional<Ftocp> planner_;
};

}  // namespace flatmpc
