#include "flatmpc/report.h"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <istream>
#include <limits>
#include <map>
#include <ostream>
#include <sstream>

#include "flatmpc/errors.h"
#include "flatmpc/safeset.h"
#include "json.hpp"

namespace flatmpc {

namespace {

using Json = nlohmann::ordered_json;

constexpr double kInf = std::numeric_limits<double>::infinity();

double Ratio(double num, double den) {
  if (den > 0.0) return num / den;
  return num > 0.0 ? kInf : 0.0;
}

FtocpStatus ParseStatus(std::string_view name) {
  for (FtocpStatus s : {FtocpStatus::kOptimal, FtocpStatus::kFeasible,
                        FtocpStatus::kInfeasible, FtocpStatus::kFailed}) {
    if (name == ToString(s)) return s;
  }
  throw ScenarioError("trajectory CSV: unknown status '" + std::string(name) + "'");
}

Json Row(const Eigen::Ref<const Eigen::VectorXd>& v) {
  Json a = Json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v(i));
  return a;
}

Json Rows(const Eigen::Ref<const Eigen::MatrixXd>& M) {
  Json a = Json::array();
  for (Eigen::Index i = 0; i < M.rows(); ++i) a.push_back(Row(M.row(i).transpose()));
  return a;
}

Json ReportObject(const Report& r) {
  Json j;
  j["passed"] = r.passed();
  j["failures"] = r.failures;
  j["samples"] = r.samples;
  j["final_time"] = r.final_time;
  j["safety_violations"] = r.safety_violations;
  j["min_safety_margin"] = r.min_safety_margin;
  j["max_v_ratio"] = r.max_v_ratio;
  j["max_w_ratio"] = r.max_w_ratio;
  j["feasibility"] = {{"replans", r.replans},
                      {"direct", r.direct},
                      {"fallbacks", r.fallbacks},
                      {"shift_failures", r.shift_failures},
                      {"cost_failures", r.cost_failures},
                      {"median_solve_time", r.median_solve_time}};
  j["final_v_goal_ratio"] = r.final_v_goal_ratio;
  j["rest"] = r.rest;
  j["converged"] = r.converged;
  j["tolerances"] = {{"v_ratio", r.tolerances.v_ratio},
                     {"w_ratio", r.tolerances.w_ratio},
                     {"cost", r.tolerances.cost},
                     {"feasibility", r.tolerances.feasibility}};
  return j;
}

const std::vector<std::string>& CsvColumns() {
  static const std::vector<std::string> columns = {
      "t", "x1", "x2", "x3", "y1", "y2",
      "xi1", "xi2", "xi3", "xi4",
      "xi_ref1", "xi_ref2", "xi_ref3", "xi_ref4",
      "u1", "u2", "v1", "v2", "d1", "d2",
      "w_norm", "d_bar", "V", "V_max", "V_goal", "margin",
      "replan", "status", "fallback", "cost", "nodes", "solve_time",
      "shift_ok", "cost_ok", "rest"};
  return columns;
}

std::string Num(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

double ParseNum(const std::string& s, int line) {
  double x = 0.0;
  const char* end = s.data() + s.size();
  const auto [ptr, ec] = std::from_chars(s.data(), end, x);
  if (ec != std::errc() || ptr != end) {
    if (s == "inf") return kInf;
    if (s == "-inf") return -kInf;
    if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
    throw ScenarioError("trajectory CSV line " + std::to_string(line) +
                        ": bad number '" + s + "'");
  }
  return x;
}

}  // namespace

Report ComputeReport(const SimLog& log, const ReportTolerances& tol) {
  Report r;
  r.tolerances = tol;
  r.samples = static_cast<int>(log.samples.size());
  r.min_safety_margin = kInf;
  for (const SimSample& s : log.samples) {
    if (s.margin < 0.0) ++r.safety_violations;
    r.min_safety_margin = std::min(r.min_safety_margin, s.margin);
    r.max_v_ratio = std::max(r.max_v_ratio, Ratio(s.V, log.v_max));
    r.max_w_ratio = std::max(r.max_w_ratio, Ratio(s.w_norm, log.d_bar));
  }
  std::vector<double> times;
  for (const ReplanRecord& rec : log.replans) {
    ++r.replans;
    if (rec.fallback) {
      ++r.fallbacks;
    } else {
      ++r.direct;
    }
    if (!rec.shift_ok) ++r.shift_failures;
    if (!rec.cost_ok) ++r.cost_failures;
    times.push_back(rec.solve_time);
  }
  if (!times.empty()) {
    std::sort(times.begin(), times.end());
    const std::size_t n = times.size();
    r.median_solve_time =
        n % 2 == 1 ? times[n / 2] : 0.5 * (times[n / 2 - 1] + times[n / 2]);
  }
  if (!log.samples.empty()) {
    const SimSample& last = log.samples.back();
    r.final_time = last.t;
    r.final_v_goal_ratio = Ratio(last.V_goal, log.v_max);
  }
  r.rest = log.rest;
  r.converged = log.rest && !log.samples.empty() &&
                log.samples.back().V_goal <= log.v_max;

  if (r.samples == 0) r.failures.push_back("empty log");
  if (r.safety_violations > 0) r.failures.push_back("safety");
  if (!(r.max_v_ratio <= 1.0 + tol.v_ratio)) r.failures.push_back("invariance");
  if (!(r.max_w_ratio <= 1.0 + tol.w_ratio)) r.failures.push_back("disturbance bound");
  if (r.shift_failures > 0) r.failures.push_back("recursive feasibility");
  if (r.cost_failures > 0) r.failures.push_back("cost decrease");
  if (!r.converged) r.failures.push_back("convergence");
  return r;
}

std::string ReportJson(const Report& report) {
  return ReportObject(report).dump(2) + "\n";
}

void WriteTrajectoryCsv(const SimLog& log, std::ostream& out) {
  const auto& columns = CsvColumns();
  for (std::size_t i = 0; i < columns.size(); ++i) {
    out << (i ? "," : "") << columns[i];
  }
  out << "\n";
  for (const SimSample& s : log.samples) {
    std::vector<std::string> f = {
        Num(s.t), Num(s.state.x1), Num(s.state.x2), Num(s.state.x3),
        Num(s.state.y1), Num(s.state.y2)};
    for (int i = 0; i < 4; ++i) f.push_back(Num(s.xi(i)));
    for (int i = 0; i < 4; ++i) f.push_back(Num(s.xi_ref(i)));
    for (const Eigen::Vector2d* p : {&s.u, &s.v, &s.d}) {
      f.push_back(Num((*p)(0)));
      f.push_back(Num((*p)(1)));
    }
    f.push_back(Num(s.w_norm));
    f.push_back(Num(log.d_bar));
    f.push_back(Num(s.V));
    f.push_back(Num(log.v_max));
    f.push_back(Num(s.V_goal));
    f.push_back(Num(s.margin));
    f.push_back(std::to_string(s.replan));
    if (s.replan >= 0) {
      const ReplanRecord& r = log.replans.at(s.replan);
      f.push_back(std::string(ToString(r.status)));
      f.push_back(r.fallback ? "1" : "0");
      f.push_back(Num(r.cost));
      f.push_back(std::to_string(r.nodes));
      f.push_back(Num(r.solve_time));
      f.push_back(r.shift_ok ? "1" : "0");
      f.push_back(r.cost_ok ? "1" : "0");
    } else {
      for (int i = 0; i < 7; ++i) f.push_back("");
    }
    f.push_back(s.rest ? "1" : "0");
    for (std::size_t i = 0; i < f.size(); ++i) out << (i ? "," : "") << f[i];
    out << "\n";
  }
}

SimLog ReadTrajectoryCsv(std::istream& in) {
  const auto& columns = CsvColumns();
  std::string line;
  if (!std::getline(in, line)) throw ScenarioError("trajectory CSV: empty file");
  std::map<std::string, int> index;
  {
    std::stringstream ss(line);
    std::string name;
    int i = 0;
    while (std::getline(ss, name, ',')) index[name] = i++;
  }
  for (const std::string& c : columns) {
    if (!index.contains(c)) throw ScenarioError("trajectory CSV: missing column '" + c + "'");
  }

  SimLog log;
  int number = 1;
  while (std::getline(in, line)) {
    ++number;
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) f.push_back(cell);
    if (!line.empty() && line.back() == ',') f.push_back("");
    if (f.size() != index.size()) {
      throw ScenarioError("trajectory CSV line " + std::to_string(number) +
                          ": wrong number of fields");
    }
    auto get = [&](const char* name) { return f[index.at(name)]; };
    auto num = [&](const char* name) { return ParseNum(get(name), number); };

    SimSample s;
    s.t = num("t");
    s.state = {num("x1"), num("x2"), num("x3"), num("y1"), num("y2")};
    s.xi = Eigen::Vector4d(num("xi1"), num("xi2"), num("xi3"), num("xi4"));
    s.xi_ref = Eigen::Vector4d(num("xi_ref1"), num("xi_ref2"), num("xi_ref3"),
                               num("xi_ref4"));
    s.u = Eigen::Vector2d(num("u1"), num("u2"));
    s.v = Eigen::Vector2d(num("v1"), num("v2"));
    s.d = Eigen::Vector2d(num("d1"), num("d2"));
    s.w_norm = num("w_norm");
    s.V = num("V");
    s.V_goal = num("V_goal");
    s.margin = num("margin");
    s.replan = static_cast<int>(num("replan"));
    s.rest = get("rest") == "1";
    log.d_bar = num("d_bar");
    log.v_max = num("V_max");
    if (s.replan >= 0) {
      if (s.replan != static_cast<int>(log.replans.size())) {
        throw ScenarioError("trajectory CSV line " + std::to_string(number) +
                            ": replans out of order");
      }
      ReplanRecord r;
      r.k = s.replan;
      r.t = s.t;
      r.status = ParseStatus(get("status"));
      r.fallback = get("fallback") == "1";
      r.cost = num("cost");
      r.nodes = static_cast<int>(num("nodes"));
      r.solve_time = num("solve_time");
      r.shift_ok = get("shift_ok") == "1";
      r.cost_ok = get("cost_ok") == "1";
      log.replans.push_back(r);
    }
    if (s.rest) log.rest = true;
    log.final_state = s.state;
    log.samples.push_back(s);
  }
  return log;
}

void WriteReplansJsonl(const SimLog& log, std::ostream& out) {
  for (const ReplanRecord& r : log.replans) {
    Json j;
    j["k"] = r.k;
    j["t"] = r.t;
    j["status"] = ToString(r.status);
    j["fallback"] = r.fallback;
    j["cost"] = r.cost;
    j["nodes"] = r.nodes;
    j["solve_time"] = r.solve_time;
    j["shift_ok"] = r.shift_ok;
    j["cost_ok"] = r.cost_ok;
    j["regions"] = r.regions;
    out << j.dump() << "\n";
  }
}

std::string AggregateJson(const std::vector<SeedOutcome>& outcomes) {
  int passed = 0, violations = 0, fallbacks = 0, shift_failures = 0,
      cost_failures = 0, not_converged = 0, aborted = 0;
  double max_v = 0.0, max_w = 0.0, min_margin = kInf;
  std::vector<double> times;
  Json runs = Json::array();
  for (const SeedOutcome& o : outcomes) {
    if (o.passed()) ++passed;
    Json run;
    run["seed"] = o.seed;
    run["passed"] = o.passed();
    if (!o.error.empty()) {
      ++aborted;
      run["error"] = o.error;
      runs.push_back(run);
      continue;
    }
    const Report& r = o.report;
    violations += r.safety_violations;
    fallbacks += r.fallbacks;
    shift_failures += r.shift_failures;
    cost_failures += r.cost_failures;
    if (!r.converged) ++not_converged;
    max_v = std::max(max_v, r.max_v_ratio);
    max_w = std::max(max_w, r.max_w_ratio);
    min_margin = std::min(min_margin, r.min_safety_margin);
    times.push_back(r.median_solve_time);
    run["failures"] = r.failures;
    run["max_v_ratio"] = r.max_v_ratio;
    run["min_safety_margin"] = r.min_safety_margin;
    run["final_v_goal_ratio"] = r.final_v_goal_ratio;
    runs.push_back(run);
  }
  std::sort(times.begin(), times.end());
  Json j;
  j["passed"] = passed == static_cast<int>(outcomes.size()) && !outcomes.empty();
  j["runs"] = outcomes.size();
  j["passed_runs"] = passed;
  j["aborted_runs"] = aborted;
  j["safety_violations"] = violations;
  j["min_safety_margin"] = min_margin;
  j["max_v_ratio"] = max_v;
  j["max_w_ratio"] = max_w;
  j["fallbacks"] = fallbacks;
  j["shift_failures"] = shift_failures;
  j["cost_failures"] = cost_failures;
  j["not_converged"] = not_converged;
  j["median_of_median_solve_times"] = times.empty() ? 0.0 : times[times.size() / 2];
  const ReportTolerances tol;
  j["tolerances"] = {{"v_ratio", tol.v_ratio},
                     {"w_ratio", tol.w_ratio},
                     {"cost", tol.cost},
                     {"feasibility", tol.feasibility}};
  j["per_seed"] = runs;
  return j.dump(2) + "\n";
}

std::string SynthesisJson(const Controller& controller) {
  const TrackingLaw& law = controller.law();
  const ErrorEllipsoid D = law.ellipsoid();
  Json j;
  j["gamma"] = law.gamma();
  j["w_bar"] = law.w_bar();
  j["P"] = Rows(law.P());
  j["K"] = Rows(law.K());
  j["lambda_max_P"] = MaxEigenvalue(law.P());
  j["lambda_min_Q"] = law.lambda_min_Q();
  j["V_max"] = law.v_max();
  j["riccati_residual"] = controller.riccati().residual;
  j["semi_axes"] = Row(D.SemiAxes());
  Json regions = Json::array();
  for (const Region& region : controller.geometry().regions()) {
    bool empty = false;
    try {
      RegionConstraints(region, D, controller.sys(), 1.0);
    } catch (const EmptyTightenedRegion&) {
      empty = true;
    }
    Json halfspaces = Json::array();
    for (const HalfSpace& hs : region.halfspaces) {
      const HalfSpace tight = Tighten(hs, D);
      halfspaces.push_back({{"a", Row(hs.a)},
                            {"b", hs.b},
                            {"b_tightened", tight.b},
                            {"offset", hs.b - tight.b}});
    }
    regions.push_back({{"id", region.id},
                       {"empty_after_tightening", empty},
                       {"halfspaces", halfspaces}});
  }
  j["regions"] = regions;
  if (controller.search()) {
    Json grid = Json::array();
    for (const GammaCandidate& c : controller.search()->candidates) {
      grid.push_back({{"gamma", c.gamma},
                      {"feasible", c.feasible},
                      {"v_max", c.v_max},
                      {"semi_axis", c.feasible ? c.semi_axis : -1.0}});
    }
    j["gamma_search"] = grid;
  }
  return j.dump(2) + "\n";
}

}  // namespace flatmpc
