#include "flatmpc/scenario.h"

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "flatmpc/errors.h"
#include "json.hpp"

namespace flatmpc {

namespace {

using nlohmann::json;

void CheckKeys(const json& j, const std::string& where,
               const std::set<std::string>& allowed) {
  if (!j.is_object()) throw ScenarioError(where + ": expected an object");
  for (const auto& [key, value] : j.items()) {
    if (!allowed.contains(key)) {
      throw ScenarioError(where + ": unknown key '" + key + "'");
    }
  }
}

double Number(const json& j, const std::string& key) {
  if (!j.is_number()) throw ScenarioError(key + ": expected a number");
  const double x = j.get<double>();
  if (!std::isfinite(x)) throw ScenarioError(key + ": not finite");
  return x;
}

double Positive(const json& j, const std::string& key) {
  const double x = Number(j, key);
  if (!(x > 0.0)) throw ScenarioError(key + ": must be positive");
  return x;
}

Eigen::VectorXd Vector(const json& j, const std::string& key, int n) {
  if (!j.is_array() || static_cast<int>(j.size()) != n) {
    throw ScenarioError(key + ": expected an array of " + std::to_string(n) +
                        " numbers");
  }
  Eigen::VectorXd v(n);
  for (int i = 0; i < n; ++i) v(i) = Number(j[i], key);
  return v;
}

/// A scalar s means s I, an array the diagonal, nested arrays the matrix.
Eigen::MatrixXd Matrix(const json& j, const std::string& key, int n) {
  if (j.is_number()) {
    return Number(j, key) * Eigen::MatrixXd::Identity(n, n);
  }
  if (j.is_array() && static_cast<int>(j.size()) == n && !j.empty() &&
      j[0].is_number()) {
    return Vector(j, key, n).asDiagonal();
  }
  if (j.is_array() && static_cast<int>(j.size()) == n) {
    Eigen::MatrixXd M(n, n);
    for (int i = 0; i < n; ++i) M.row(i) = Vector(j[i], key, n).transpose();
    return M;
  }
  throw ScenarioError(key + ": expected a number, a diagonal of " +
                      std::to_string(n) + " or an " + std::to_string(n) +
                      "x" + std::to_string(n) + " matrix");
}

void RequireSymmetricPositive(const Eigen::MatrixXd& M, const std::string& key,
                              bool strict) {
  if ((M - M.transpose()).norm() > 1e-12 * (1.0 + M.norm())) {
    throw ScenarioError(key + ": not symmetric");
  }
  const double lo = MinEigenvalue(M);
  if (strict ? !(lo > 0.0) : !(lo >= 0.0)) {
    throw ScenarioError(key + (strict ? ": not positive definite"
                                      : ": not positive semidefinite"));
  }
}

void Assign(json& root, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw ScenarioError("override '" + assignment + "': expected key=value");
  }
  const std::string path = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);
  json value = json::parse(text, nullptr, false);
  if (value.is_discarded()) value = text;
  json* node = &root;
  std::stringstream parts(path);
  std::string part;
  std::vector<std::string> keys;
  while (std::getline(parts, part, '.')) {
    if (part.empty()) throw ScenarioError("override '" + assignment + "': empty key");
    keys.push_back(part);
  }
  for (std::size_t i = 0; i + 1 < keys.size(); ++i) {
    if (!node->is_object()) {
      throw ScenarioError("override '" + assignment + "': '" + keys[i] +
                          "' is not an object");
    }
    node = &(*node)[keys[i]];
    if (node->is_null()) *node = json::object();
  }
  if (!node->is_object()) {
    throw ScenarioError("override '" + assignment + "': parent is not an object");
  }
  if (value.is_null()) {
    node->erase(keys.back());
  } else {
    (*node)[keys.back()] = value;
  }
}

}  // namespace

Profile ProfileByName(std::string_view name) {
  if (name == "rover") return {"rover", 9, 1.0, 300.0};
  if (name == "quadruped") return {"quadruped", 30, 2.0, 20.0};
  throw ScenarioError("unknown profile '" + std::string(name) + "'");
}

SimOptions Scenario::sim_options() const {
  SimOptions opt;
  opt.rates = rates;
  opt.duration = duration;
  opt.ftocp = solver;
  return opt;
}

DisturbanceModel Scenario::disturbance_model(std::uint64_t run_seed) const {
  return {disturbance, d_bar, run_seed, omega};
}

Scenario ParseScenario(std::string_view json_text,
                       const ScenarioOverrides& overrides) {
  json j = json::parse(json_text, nullptr, false);
  if (j.is_discarded()) throw ScenarioError("scenario is not valid JSON");
  if (!j.is_object()) throw ScenarioError("scenario: expected an object");
  if (overrides.profile) {
    j["profile"] = *overrides.profile;
    j.erase("N");
    j.erase("T");
    if (j.contains("rates") && j["rates"].is_object()) j["rates"].erase("f_low");
  }
  for (const std::string& a : overrides.assignments) Assign(j, a);

  CheckKeys(j, "scenario",
            {"name", "profile", "regions", "start", "goal", "d_bar", "Q", "R",
             "gamma", "gamma_grid", "Qc", "Rc", "N", "T", "rates", "duration",
             "disturbance", "seed", "solver"});
  for (const char* key : {"regions", "start", "goal", "d_bar"}) {
    if (!j.contains(key)) throw ScenarioError(std::string("missing key '") + key + "'");
  }

  Scenario s;
  s.name = j.value("name", std::string("scenario"));
  if (j.contains("profile")) {
    if (!j["profile"].is_string()) throw ScenarioError("profile: expected a string");
    s.profile = j["profile"].get<std::string>();
  }
  const Profile profile = ProfileByName(s.profile);

  const json& regions = j["regions"];
  if (!regions.is_array() || regions.empty()) {
    throw ScenarioError("regions: expected a non-empty array");
  }
  for (const json& r : regions) {
    CheckKeys(r, "regions[]", {"min", "max"});
    if (!r.contains("min") || !r.contains("max")) {
      throw ScenarioError("regions[]: need 'min' and 'max'");
    }
    Rectangle rect{Vector(r["min"], "regions[].min", 2),
                   Vector(r["max"], "regions[].max", 2)};
    if (!(rect.lo.array() < rect.hi.array()).all()) {
      throw ScenarioError("regions[]: min must be below max in both axes");
    }
    s.regions.push_back(rect);
  }

  const json& start = j["start"];
  CheckKeys(start, "start", {"position", "velocity", "heading"});
  if (!start.contains("position") || !start.contains("velocity")) {
    throw ScenarioError("start: need 'position' and 'velocity'");
  }
  const Eigen::VectorXd p = Vector(start["position"], "start.position", 2);
  const Eigen::VectorXd v = Vector(start["velocity"], "start.velocity", 2);
  double heading = std::atan2(v(1), v(0));
  if (v.norm() == 0.0) {
    heading = start.contains("heading") ? Number(start["heading"], "start.heading") : 0.0;
  } else if (start.contains("heading")) {
    throw ScenarioError("start.heading: only allowed with zero velocity");
  }
  s.start = {p(0), p(1), heading, v(0), v(1)};
  s.goal = Vector(j["goal"], "goal", 2);

  s.d_bar = Number(j["d_bar"], "d_bar");
  if (s.d_bar < 0.0) throw ScenarioError("d_bar: must be non-negative");

  s.Q = j.contains("Q") ? Matrix(j["Q"], "Q", 4) : Eigen::MatrixXd::Identity(4, 4);
  s.R = j.contains("R") ? Matrix(j["R"], "R", 2) : Eigen::MatrixXd::Identity(2, 2);
  s.Qc = j.contains("Qc") ? Matrix(j["Qc"], "Qc", 4) : Eigen::MatrixXd::Identity(4, 4);
  s.Rc = j.contains("Rc") ? Matrix(j["Rc"], "Rc", 2) : Eigen::MatrixXd::Identity(2, 2);
  RequireSymmetricPositive(s.Q, "Q", true);
  RequireSymmetricPositive(s.R, "R", true);
  RequireSymmetricPositive(s.Qc, "Qc", false);
  RequireSymmetricPositive(s.Rc, "Rc", true);

  if (j.contains("gamma") && j.contains("gamma_grid")) {
    throw ScenarioError("give either 'gamma' or 'gamma_grid', not both");
  }
  if (j.contains("gamma_grid")) {
    const json& g = j["gamma_grid"];
    if (g.is_string() && g.get<std::string>() == "default") {
      s.gamma_grid = DefaultGammaGrid();
    } else if (g.is_array() && !g.empty()) {
      for (const json& x : g) s.gamma_grid.push_back(Positive(x, "gamma_grid[]"));
    } else {
      throw ScenarioError("gamma_grid: expected \"default\" or a non-empty array");
    }
  } else {
    s.gamma = j.contains("gamma") ? Positive(j["gamma"], "gamma") : 2.0;
  }

  s.N = profile.N;
  s.rates = {profile.T, profile.f_low, 3000.0};
  if (j.contains("N")) {
    if (!j["N"].is_number_integer() || j["N"].get<int>() < 1) {
      throw ScenarioError("N: expected a positive integer");
    }
    s.N = j["N"].get<int>();
  }
  if (j.contains("T")) s.rates.T = Positive(j["T"], "T");
  if (j.contains("rates")) {
    CheckKeys(j["rates"], "rates", {"f_low", "f_int"});
    if (j["rates"].contains("f_low")) s.rates.f_low = Positive(j["rates"]["f_low"], "rates.f_low");
    if (j["rates"].contains("f_int")) s.rates.f_int = Positive(j["rates"]["f_int"], "rates.f_int");
  }
  try {
    s.rates.Validate();
  } catch (const InvalidArgument& e) {
    throw ScenarioError(e.what());
  }
  if (j.contains("duration")) s.duration = Positive(j["duration"], "duration");

  if (j.contains("disturbance")) {
    const json& d = j["disturbance"];
    CheckKeys(d, "disturbance", {"kind", "omega"});
    if (d.contains("kind")) {
      if (!d["kind"].is_string()) throw ScenarioError("disturbance.kind: expected a string");
      try {
        s.disturbance = ParseDisturbanceKind(d["kind"].get<std::string>());
      } catch (const InvalidArgument& e) {
        throw ScenarioError(std::string("disturbance.kind: ") + e.what());
      }
    }
    if (d.contains("omega")) s.omega = Number(d["omega"], "disturbance.omega");
  }
  if (j.contains("seed")) {
    if (!j["seed"].is_number_unsigned()) throw ScenarioError("seed: expected a non-negative integer");
    s.seed = j["seed"].get<std::uint64_t>();
  }
  if (j.contains("solver")) {
    const json& o = j["solver"];
    CheckKeys(o, "solver", {"timeout", "max_nodes"});
    if (o.contains("timeout")) s.solver.timeout = Positive(o["timeout"], "solver.timeout");
    if (o.contains("max_nodes")) {
      if (!o["max_nodes"].is_number_integer() || o["max_nodes"].get<int>() < 0) {
        throw ScenarioError("solver.max_nodes: expected a non-negative integer");
      }
      s.solver.max_nodes = o["max_nodes"].get<int>();
    }
  }
  return s;
}

Scenario LoadScenario(const std::string& path,
                      const ScenarioOverrides& overrides) {
  std::ifstream in(path);
  if (!in) throw ScenarioError("cannot read scenario file '" + path + "'");
  std::stringstream buffer;
  buffer << in.rdbuf();
  return ParseScenario(buffer.str(), overrides);
}

namespace {

std::optional<GammaSearchResult> Search(const FlatLTI& sys, const Scenario& s) {
  if (s.gamma) return std::nullopt;
  return MinimizeGamma(sys, s.Q, s.R, s.d_bar, s.gamma_grid);
}

RiccatiSolution SolveFor(const FlatLTI& sys, const RiccatiParams& params,
                         const std::optional<GammaSearchResult>& search) {
  if (search) return search->solution;
  return SolveModifiedAre(sys, params);
}

std::vector<Region> Regions(const Scenario& s) {
  std::vector<Region> out;
  for (std::size_t i = 0; i < s.regions.size(); ++i) {
    out.push_back(Region::Rectangle(static_cast<int>(i), s.regions[i].lo,
                                    s.regions[i].hi));
  }
  return out;
}

}  // namespace

Controller::Controller(const Scenario& scenario, bool with_planner)
    : sys_(FlatLTI::DoubleIntegrator(2)),
      search_(Search(sys_, scenario)),
      params_{scenario.Q, scenario.R,
              search_ ? search_->gamma : *scenario.gamma},
      riccati_(SolveFor(sys_, params_, search_)),
      law_(sys_, params_, riccati_, scenario.d_bar),
      geometry_(SafeGeometry::Make(Regions(scenario))) {
  if (with_planner) {
    planner_.emplace(FtocpSpec{
        sys_, scenario.rates.T, scenario.N,
        Eigen::Vector4d(scenario.goal(0), scenario.goal(1), 0, 0),
        law_.ellipsoid(), geometry_, scenario.Qc, scenario.Rc});
  }
}

const Ftocp& Controller::planner() const {
  if (!planner_) throw InvalidArgument("Controller: built without a planner");
  return *planner_;
}

}  // namespace flatmpc
