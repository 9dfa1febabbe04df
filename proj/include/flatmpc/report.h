#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "flatmpc/scenario.h"
#include "flatmpc/simulator.h"

namespace flatmpc {

/// Tolerances every report is judged against. Echoed into the JSON.
struct ReportTolerances {
  double v_ratio = 1e-6;  // V / V_max <= 1 + v_ratio
  double w_ratio = 1e-9;  // |w| / d_bar <= 1 + w_ratio
  double cost = kCostDecreaseTolerance;
  double feasibility = kFeasibilityTolerance;
};

/// Verdict on one closed-loop run, computed from the log alone.
struct Report {
  int samples = 0;
  double final_time = 0.0;
  int safety_violations = 0;  // log points with the position outside S
  double min_safety_margin = 0.0;
  double max_v_ratio = 0.0;   // max V(xi - xi_ref) / V_max
  double max_w_ratio = 0.0;   // max |w| / d_bar
  int replans = 0;
  int direct = 0;             // solved plan in use
  int fallbacks = 0;          // shifted plan in use
  int shift_failures = 0;
  int cost_failures = 0;
  double median_solve_time = 0.0;
  double final_v_goal_ratio = 0.0;  // V(xi_final - xi_goal) / V_max
  bool rest = false;
  bool converged = false;
  ReportTolerances tolerances;
  std::vector<std::string> failures;

  bool passed() const { return failures.empty(); }
};

Report ComputeReport(const SimLog& log, const ReportTolerances& tol = {});
std::string ReportJson(const Report& report);

/// Header plus one row per log point; numbers printed with 17 significant
/// digits so that ReadTrajectoryCsv reproduces them exactly.
void WriteTrajectoryCsv(const SimLog& log, std::ostream& out);
/// Inverse of WriteTrajectoryCsv for every field ComputeReport reads.
/// Throws ScenarioError on a malformed file.
SimLog ReadTrajectoryCsv(std::istream& in);

/// One JSON object per replan.
void WriteReplansJsonl(const SimLog& log, std::ostream& out);

/// Monte Carlo summary over independent runs.
struct SeedOutcome {
  std::uint64_t seed = 0;
  Report report;
  std::string error;  // exception text if the run aborted
  bool passed() const { return error.empty() && report.passed(); }
};

std::string AggregateJson(const std::vector<SeedOutcome>& outcomes);

/// P, K, gamma, lambda_max(P), V_max, semi-axes and per-half-space
/// tightening offsets, plus the gamma search table if there was one.
std::string SynthesisJson(const Controller& controller);

}  // namespace flatmpc
