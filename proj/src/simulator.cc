#include "flatmpc/simulator.h"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <optional>
#include <random>
#include <string>

#include "flatmpc/errors.h"

namespace flatmpc {

namespace {

bool IsInteger(double x) { return std::abs(x - std::round(x)) < 1e-9 * (1.0 + std::abs(x)); }

}  // namespace

std::string_view ToString(DisturbanceKind kind) {
  switch (kind) {
    case DisturbanceKind::kNone: return "none";
    case DisturbanceKind::kSinusoid: return "sinusoid";
    case DisturbanceKind::kUniformRandom: return "uniform-random";
    case DisturbanceKind::kWorstCase: return "worst-case-aligned";
  }
  return "unknown";
}

DisturbanceKind ParseDisturbanceKind(std::string_view name) {
  for (DisturbanceKind k :
       {DisturbanceKind::kNone, DisturbanceKind::kSinusoid,
        DisturbanceKind::kUniformRandom, DisturbanceKind::kWorstCase}) {
    if (name == ToString(k)) return k;
  }
  throw InvalidArgument("unknown disturbance kind '" + std::string(name) + "'");
}

void Rates::Validate() const {
  if (!(T > 0.0) || !(f_low > 0.0) || !(f_int > 0.0) || !std::isfinite(T) ||
      !std::isfinite(f_low) || !std::isfinite(f_int)) {
    throw InvalidArgument("Rates: T, f_low and f_int must be positive");
  }
  if (f_int < 10.0 * f_low || f_low * T < 1.0) {
    throw InvalidArgument("Rates: need f_int >= 10 f_low >= 10 / T");
  }
  if (!IsInteger(f_int / f_low) || !IsInteger(f_low * T)) {
    throw InvalidArgument("Rates: f_int / f_low and f_low T must be integers");
  }
}

int Rates::steps_per_sample() const {
  return static_cast<int>(std::lround(f_int / f_low));
}

int Rates::samples_per_replan() const {
  return static_cast<int>(std::lround(f_low * T));
}

Simulator::Simulator(const Ftocp& planner, const TrackingLaw& law,
                     SimOptions options)
    : planner_(planner), law_(law), options_(std::move(options)) {
  options_.rates.Validate();
  if (std::abs(options_.rates.T - planner_.spec().T) > 1e-12) {
    throw InvalidArgument("Simulator: replanning period differs from planner T");
  }
  if (planner_.spec().sys.state_dim() != 4 || planner_.spec().sys.input_dim() != 2) {
    throw InvalidArgument("Simulator: planner is not a planar double integrator");
  }
  if (!(options_.duration > 0.0) || !(options_.speed_floor > 0.0)) {
    throw InvalidArgument("Simulator: duration and speed floor must be positive");
  }
}

SimLog Simulator::Run(const UnicycleState& start,
                      const DisturbanceModel& disturbance) const {
  if (!(disturbance.d_bar >= 0.0) || !std::isfinite(disturbance.d_bar)) {
    throw InvalidArgument("Simulator: d_bar must be finite and non-negative");
  }
  const Rates& rates = options_.rates;
  const FtocpSpec& spec = planner_.spec();
  const FlatLTI& sys = spec.sys;
  const ErrorEllipsoid D = law_.ellipsoid();
  const int per_sample = rates.steps_per_sample();
  const int per_replan = per_sample * rates.samples_per_replan();
  const double h = 1.0 / rates.f_int;
  const long total_steps = std::lround(options_.duration * rates.f_int);
  const double d_bar = disturbance.d_bar;

  SimLog log;
  log.d_bar = d_bar;
  log.v_max = law_.v_max();

  std::mt19937_64 rng(disturbance.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  Eigen::Vector2d d_step = Eigen::Vector2d::Zero();

  FtocpSolution plan;
  double plan_start = 0.0;
  auto reference = [&](double t) {
    const double tau = std::clamp(t - plan_start, 0.0, rates.T);
    return RolloutReference(sys, plan.z[0], plan.v[0], tau, rates.T);
  };

  auto disturbance_at = [&](double t, const UnicycleState& s) -> Eigen::Vector2d {
    switch (disturbance.kind) {
      case DisturbanceKind::kNone:
        return Eigen::Vector2d::Zero();
      case DisturbanceKind::kSinusoid:
        return d_bar * Eigen::Vector2d(std::cos(disturbance.omega * t),
                                       std::sin(disturbance.omega * t));
      case DisturbanceKind::kUniformRandom:
        return d_step;
      case DisturbanceKind::kWorstCase: {
        const Eigen::Vector4d e = FlatMap(s) - reference(t);
        const Eigen::Vector2d g =
            DisturbanceJacobian(s).transpose() * (law_.P() * e);
        const double norm = g.norm();
        if (!(norm > 0.0)) return Eigen::Vector2d::Zero();
        return d_bar * g / norm;
      }
    }
    return Eigen::Vector2d::Zero();
  };

  auto make_sample = [&](double t, const UnicycleState& s) {
    SimSample row;
    row.t = t;
    row.state = s;
    row.xi = FlatMap(s);
    row.V_goal = D.Value(row.xi - spec.xi_goal);
    row.margin = spec.geometry.Margin(row.xi);
    return row;
  };

  auto rest = [&](SimSample row) {
    row.xi_ref = spec.xi_goal;
    row.V = row.V_goal;
    row.rest = true;
    log.samples.push_back(row);
    log.rest = true;
  };

  UnicycleState s = start;
  Eigen::Vector2d v_hold = Eigen::Vector2d::Zero();
  for (long step = 0; step <= total_steps; ++step) {
    const double t = static_cast<double>(step) * h;
    const bool sample = step % per_sample == 0;
    std::optional<SimSample> row;
    if (sample || step == total_steps) row = make_sample(t, s);

    if (step == total_steps) {
      if (!plan.z.empty()) row->xi_ref = reference(t);
      row->V = D.Value(row->xi - row->xi_ref);
      log.samples.push_back(*row);
      break;
    }

    if (step % per_replan == 0) {
      if (row->V_goal <= D.level) {
        rest(*row);
        break;
      }
      const int k = static_cast<int>(log.replans.size());
      ReplanRecord rec;
      rec.k = k;
      rec.t = t;
      std::optional<FtocpSolution> shifted;
      double prev_stage = 0.0;
      if (k > 0) {
        prev_stage = planner_.StageCost(plan.z[0], plan.v[0]);
        shifted = planner_.Shift(plan);
        rec.shift_ok = planner_.Check(*shifted, row->xi).Passes();
      }
      FtocpOptions solve_options = options_.ftocp;
      if (k == 0) solve_options.timeout = options_.initial_timeout;
      FtocpSolution fresh = planner_.Solve(row->xi, solve_options,
                                           shifted ? &*shifted : nullptr);
      rec.status = fresh.status;
      rec.nodes = fresh.nodes;
      rec.solve_time = fresh.solve_time;
      if (fresh.usable()) {
        plan = std::move(fresh);
      } else if (k == 0) {
        throw InitialInfeasible("first plan failed with status " +
                                std::string(ToString(fresh.status)));
      } else {
        plan = *shifted;
        rec.fallback = true;
      }
      plan.cost = planner_.TotalCost(plan);
      rec.cost = plan.cost;
      rec.regions = plan.regions;
      if (k > 0) {
        rec.cost_ok = rec.cost <= log.replans.back().cost - prev_stage +
                                      kCostDecreaseTolerance;
      }
      plan_start = t;
      row->replan = k;
      log.replans.push_back(std::move(rec));
    }

    if (sample) {
      if (s.speed() < options_.speed_floor) {
        if (row->V_goal <= D.level) {
          rest(*row);
          break;
        }
        throw SingularState("speed " + std::to_string(s.speed()) +
                            " below floor at t = " + std::to_string(t) +
                            " away from the goal");
      }
      row->xi_ref = reference(t);
      v_hold = law_.FlatInput(row->xi, row->xi_ref, plan.v[0]);
    }

    if (disturbance.kind == DisturbanceKind::kUniformRandom) {
      const double r = d_bar * std::sqrt(unit(rng));
      const double theta = 2.0 * std::numbers::pi * unit(rng);
      d_step = r * Eigen::Vector2d(std::cos(theta), std::sin(theta));
    }

    if (sample) {
      row->v = v_hold;
      row->u = EndogenousFeedback(s, v_hold, options_.speed_floor);
      row->d = disturbance_at(t, s);
      row->w_norm = FlatDisturbance(s, row->u, row->d).norm();
      row->V = D.Value(row->xi - row->xi_ref);
      log.samples.push_back(*row);
    }

    s = Rk4Step(s, t, h, v_hold, disturbance_at, options_.speed_floor);
  }
  log.final_state = s;
  return log;
}

}  // namespace flatmpc
