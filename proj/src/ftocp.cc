#include "flatmpc/ftocp.h"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <queue>

#include "flatmpc/errors.h"

namespace flatmpc {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kPruneSlack = 1e-9;

struct QueueEntry {
  double key = 0.0;
  std::vector<int> prefix;
  bool evaluated = false;
  Eigen::VectorXd x;
};

// Lowest key first, then the lexicographically smaller prefix.
struct LaterInQueue {
  bool operator()(const QueueEntry& a, const QueueEntry& b) const {
    if (a.key != b.key) return a.key > b.key;
    if (a.prefix != b.prefix) return a.prefix > b.prefix;
    return !a.evaluated && b.evaluated;
  }
};

}  // namespace

std::string_view ToString(FtocpStatus status) {
  switch (status) {
    case FtocpStatus::kOptimal:
      return "optimal";
    case FtocpStatus::kFeasible:
      return "feasible";
    case FtocpStatus::kInfeasible:
      return "infeasible";
    case FtocpStatus::kFailed:
      return "failed";
  }
  return "unknown";
}

bool ConstraintCheck::Passes(double tol, double ratio_tol) const {
  return assignment_valid && dynamics <= tol && terminal <= tol &&
         region <= tol && initial_ratio <= 1.0 + ratio_tol;
}

Ftocp::Ftocp(FtocpSpec spec) : spec_(std::move(spec)) {
  const int n = spec_.sys.state_dim();
  const int m = spec_.sys.input_dim();
  const int N = spec_.N;
  if (N < 1) throw InvalidArgument("Ftocp: N < 1");
  if (!(spec_.T > 0.0)) throw InvalidArgument("Ftocp: T <= 0");
  if (spec_.xi_goal.size() != n || !spec_.xi_goal.allFinite()) {
    throw InvalidArgument("Ftocp: bad goal");
  }
  if (spec_.Qc.rows() != n || spec_.Qc.cols() != n || spec_.Rc.rows() != m ||
      spec_.Rc.cols() != m) {
    throw InvalidArgument("Ftocp: stage weight dimensions");
  }
  if ((spec_.Qc - spec_.Qc.transpose()).norm() > 1e-12 * (1.0 + spec_.Qc.norm()) ||
      (spec_.Rc - spec_.Rc.transpose()).norm() > 1e-12 * (1.0 + spec_.Rc.norm())) {
    throw InvalidArgument("Ftocp: stage weights must be symmetric");
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> qeig(spec_.Qc);
  Eigen::LLT<Eigen::MatrixXd> rllt(spec_.Rc);
  if (qeig.eigenvalues().minCoeff() < 0.0 || rllt.info() != Eigen::Success) {
    throw InvalidArgument("Ftocp: need Qc >= 0 and Rc > 0");
  }
  if (spec_.D.P.rows() != n || spec_.geometry.state_dim() != n) {
    throw InvalidArgument("Ftocp: ellipsoid or geometry dimension mismatch");
  }

  disc_ = Discretize(spec_.sys, spec_.T);
  if ((disc_.Ad * spec_.xi_goal - spec_.xi_goal).norm() >
      1e-9 * (1.0 + spec_.xi_goal.norm())) {
    throw InvalidArgument("Ftocp: goal is not an unforced equilibrium");
  }
  for (const Region& r : spec_.geometry.regions()) {
    blocks_.push_back(RegionConstraints(r, spec_.D, spec_.sys, spec_.T));
  }
  if (Locate(spec_.geometry, spec_.D, spec_.xi_goal).empty()) {
    throw InvalidArgument("Ftocp: goal is outside every tightened region");
  }

  const int nz = (N + 1) * n;
  const int nx = nz + N * m;
  base_ = ConvexSubproblem::Empty(nx);
  const Eigen::VectorXd Qg = spec_.Qc * spec_.xi_goal;
  for (int i = 0; i < N; ++i) {
    base_.H.block(i * n, i * n, n, n) = 2.0 * spec_.Qc;
    base_.H.block(nz + i * m, nz + i * m, m, m) = 2.0 * spec_.Rc;
    base_.g.segment(i * n, n) = -2.0 * Qg;
  }
  base_.constant = N * spec_.xi_goal.dot(Qg);

  base_.Aeq = Eigen::MatrixXd::Zero((N + 1) * n, nx);
  base_.beq = Eigen::VectorXd::Zero((N + 1) * n);
  for (int i = 0; i < N; ++i) {
    base_.Aeq.block(i * n, (i + 1) * n, n, n).setIdentity();
    base_.Aeq.block(i * n, i * n, n, n) = -disc_.Ad;
    base_.Aeq.block(i * n, nz + i * m, n, m) = -disc_.Bd;
  }
  base_.Aeq.block(N * n, N * n, n, n).setIdentity();
  base_.beq.tail(n) = spec_.xi_goal;

  EllipsoidConstraint e;
  e.P = Eigen::MatrixXd::Zero(nx, nx);
  e.P.topLeftCorner(n, n) = spec_.D.P;
  e.center = Eigen::VectorXd::Zero(nx);
  e.level = spec_.D.level;
  base_.ellipsoid = e;
}

int Ftocp::num_variables() const { return base_.num_variables(); }

bool Ftocp::ValidAssignment(const std::vector<int>& regions) const {
  const int count = spec_.geometry.size();
  for (std::size_t i = 0; i < regions.size(); ++i) {
    if (regions[i] < 0 || regions[i] >= count) return false;
    if (i > 0 && !spec_.geometry.Overlaps(regions[i - 1], regions[i])) {
      return false;
    }
  }
  return true;
}

ConvexSubproblem Ftocp::BuildRelaxation(
    const Eigen::Ref<const Eigen::VectorXd>& xi_now,
    const std::vector<int>& prefix) const {
  const int n = spec_.sys.state_dim();
  const int m = spec_.sys.input_dim();
  const int nz = (spec_.N + 1) * n;
  if (xi_now.size() != n) throw InvalidArgument("Ftocp: bad measured state");
  if (static_cast<int>(prefix.size()) > spec_.N || !ValidAssignment(prefix)) {
    throw InvalidArgument(
        "Ftocp: region assignment must use known ids and overlapping "
        "consecutive regions");
  }
  ConvexSubproblem prob = base_;
  prob.ellipsoid->center.head(n) = xi_now;
  int rows = 0;
  for (const int r : prefix) rows += blocks_[r].rows();
  prob.Ain = Eigen::MatrixXd::Zero(rows, prob.num_variables());
  prob.bin.resize(rows);
  int row = 0;
  for (std::size_t i = 0; i < prefix.size(); ++i) {
    const StepConstraints& c = blocks_[prefix[i]];
    prob.Ain.block(row, i * n, c.rows(), n) = c.Gz;
    prob.Ain.block(row, nz + i * m, c.rows(), m) = c.Gv;
    prob.bin.segment(row, c.rows()) = c.h;
    row += c.rows();
  }
  return prob;
}

ConvexSubproblem Ftocp::Build(const Eigen::Ref<const Eigen::VectorXd>& xi_now,
                              const std::vector<int>& assignment) const {
  if (static_cast<int>(assignment.size()) != spec_.N) {
    throw InvalidArgument("Ftocp: assignment length must equal N");
  }
  return BuildRelaxation(xi_now, assignment);
}

double Ftocp::StageCost(const Eigen::Ref<const Eigen::VectorXd>& z,
                        const Eigen::Ref<const Eigen::VectorXd>& v) const {
  const Eigen::VectorXd e = z - spec_.xi_goal;
  return e.dot(spec_.Qc * e) + v.dot(spec_.Rc * v);
}

double Ftocp::TotalCost(const FtocpSolution& sol) const {
  double cost = 0.0;
  for (std::size_t i = 0; i < sol.v.size(); ++i) cost += StageCost(sol.z[i], sol.v[i]);
  return cost;
}

FtocpSolution Ftocp::Unpack(const Eigen::Ref<const Eigen::VectorXd>& x,
                            std::vector<int> regions) const {
  const int n = spec_.sys.state_dim();
  const int m = spec_.sys.input_dim();
  const int nz = (spec_.N + 1) * n;
  FtocpSolution sol;
  for (int i = 0; i <= spec_.N; ++i) sol.z.push_back(x.segment(i * n, n));
  for (int i = 0; i < spec_.N; ++i) sol.v.push_back(x.segment(nz + i * m, m));
  sol.regions = std::move(regions);
  sol.cost = TotalCost(sol);
  return sol;
}

FtocpSolution Ftocp::Solve(const Eigen::Ref<const Eigen::VectorXd>& xi_now,
                           const FtocpOptions& options,
                           const FtocpSolution* warm,
                           std::vector<BnbNode>* trace) const {
  using Clock = std::chrono::steady_clock;
  const auto start = Clock::now();
  const int n = spec_.sys.state_dim();
  const int m = spec_.sys.input_dim();
  const int N = spec_.N;
  const int nz = (N + 1) * n;
  const int count = spec_.geometry.size();

  int nodes = 0;
  bool incomplete = false;
  double incumbent = kInf;
  FtocpSolution best;
  bool have_best = false;

  auto offer = [&](const Eigen::VectorXd& x, std::vector<int> regions,
                   double value) {
    if (value < incumbent) {
      incumbent = value;
      best = Unpack(x, std::move(regions));
      have_best = true;
    }
  };

  if (warm != nullptr && static_cast<int>(warm->regions.size()) == N &&
      ValidAssignment(warm->regions)) {
    ++nodes;
    const SolveReport rep = flatmpc::Solve(Build(xi_now, warm->regions));
    if (rep.status == SolveStatus::kOptimal) {
      offer(rep.x, warm->regions, rep.objective);
    } else if (static_cast<int>(warm->z.size()) == N + 1 &&
               static_cast<int>(warm->v.size()) == N &&
               Check(*warm, xi_now).Passes()) {
      incumbent = TotalCost(*warm);
      best = *warm;
      have_best = true;
    }
  }

  // Lexicographically smallest completion of `prefix` whose region blocks
  // the point x already satisfies; empty optional if none exists.
  auto complete = [&](const Eigen::VectorXd& x, const std::vector<int>& prefix,
                      std::vector<int>* out) {
    const int d = static_cast<int>(prefix.size());
    std::vector<std::vector<char>> ok(N, std::vector<char>(count, 0));
    for (int j = N - 1; j >= d; --j) {
      for (int r = 0; r < count; ++r) {
        if (blocks_[r].MaxViolation(x.segment(j * n, n),
                                    x.segment(nz + j * m, m)) >
            kFeasibilityTolerance) {
          continue;
        }
        bool tail = j == N - 1;
        for (int s = 0; s < count && !tail; ++s) {
          tail = ok[j + 1][s] && spec_.geometry.Overlaps(r, s);
        }
        ok[j][r] = tail;
      }
    }
    *out = prefix;
    for (int j = d; j < N; ++j) {
      const int prev = j > 0 ? (*out)[j - 1] : -1;
      int pick = -1;
      for (int r = 0; r < count && pick < 0; ++r) {
        if (ok[j][r] && (prev < 0 || spec_.geometry.Overlaps(prev, r))) pick = r;
      }
      if (pick < 0) return false;
      out->push_back(pick);
    }
    return true;
  };

  std::priority_queue<QueueEntry, std::vector<QueueEntry>, LaterInQueue> queue;
  queue.push({-kInf, {}, false, {}});
  while (!queue.empty()) {
    if (queue.top().key >= incumbent - kPruneSlack) break;
    if (std::chrono::duration<double>(Clock::now() - start).count() >
            options.timeout ||
        (options.max_nodes > 0 && nodes >= options.max_nodes)) {
      incomplete = true;
      break;
    }
    QueueEntry node = queue.top();
    queue.pop();

    if (!node.evaluated) {
      ++nodes;
      const SolveReport rep = flatmpc::Solve(BuildRelaxation(xi_now, node.prefix));
      if (rep.status == SolveStatus::kInfeasible) {
        if (trace) trace->push_back({node.prefix, kInf});
        continue;
      }
      if (rep.status != SolveStatus::kOptimal) {
        incomplete = true;
        continue;
      }
      if (trace) trace->push_back({node.prefix, rep.objective});
      std::vector<int> full;
      if (complete(rep.x, node.prefix, &full)) {
        offer(rep.x, std::move(full), rep.objective);
        continue;
      }
      if (rep.objective >= incumbent - kPruneSlack) continue;
      node.key = rep.objective;
      node.x = rep.x;
      node.evaluated = true;
      queue.push(std::move(node));
      continue;
    }

    const int d = static_cast<int>(node.prefix.size());
    std::vector<int> children;
    if (d == 0) {
      for (int r = 0; r < count; ++r) children.push_back(r);
    } else {
      children.push_back(node.prefix.back());
      for (const int r : spec_.geometry.Neighbors(node.prefix.back())) {
        children.push_back(r);
      }
      std::sort(children.begin(), children.end());
    }
    for (const int r : children) {
      QueueEntry child{node.key, node.prefix, false, {}};
      child.prefix.push_back(r);
      if (blocks_[r].MaxViolation(node.x.segment(d * n, n),
                                  node.x.segment(nz + d * m, m)) <=
          kFeasibilityTolerance) {
        // The parent's optimum is feasible, hence optimal, for the child.
        child.evaluated = true;
        child.x = node.x;
        if (trace) trace->push_back({child.prefix, child.key});
      }
      queue.push(std::move(child));
    }
  }

  if (have_best) {
    best.status = incomplete ? FtocpStatus::kFeasible : FtocpStatus::kOptimal;
  } else {
    best = FtocpSolution{};
    best.status = incomplete ? FtocpStatus::kFailed : FtocpStatus::kInfeasible;
  }
  best.nodes = nodes;
  best.solve_time =
      std::chrono::duration<double>(Clock::now() - start).count();
  return best;
}

FtocpSolution Ftocp::Shift(const FtocpSolution& prev) const {
  const int N = spec_.N;
  if (static_cast<int>(prev.z.size()) != N + 1 ||
      static_cast<int>(prev.v.size()) != N ||
      static_cast<int>(prev.regions.size()) != N) {
    throw InvalidArgument("Ftocp::Shift: malformed solution");
  }
  FtocpSolution out;
  out.z.assign(prev.z.begin() + 1, prev.z.end());
  out.z.push_back(spec_.xi_goal);
  out.v.assign(prev.v.begin() + 1, prev.v.end());
  out.v.push_back(Eigen::VectorXd::Zero(spec_.sys.input_dim()));
  out.regions.assign(prev.regions.begin() + 1, prev.regions.end());
  out.regions.push_back(prev.regions.back());
  out.cost = TotalCost(out);
  out.status = FtocpStatus::kFeasible;
  return out;
}

ConstraintCheck Ftocp::Check(const FtocpSolution& sol,
                             const Eigen::Ref<const Eigen::VectorXd>& xi_now) const {
  const int N = spec_.N;
  ConstraintCheck c;
  if (static_cast<int>(sol.z.size()) != N + 1 ||
      static_cast<int>(sol.v.size()) != N ||
      static_cast<int>(sol.regions.size()) != N ||
      !ValidAssignment(sol.regions)) {
    c.assignment_valid = false;
    c.dynamics = c.terminal = c.region = c.initial_ratio = kInf;
    return c;
  }
  c.region = -kInf;
  for (int i = 0; i < N; ++i) {
    const Eigen::VectorXd next = disc_.Ad * sol.z[i] + disc_.Bd * sol.v[i];
    c.dynamics = std::max(c.dynamics, (sol.z[i + 1] - next).lpNorm<Eigen::Infinity>());
    c.region = std::max(c.region,
                        blocks_[sol.regions[i]].MaxViolation(sol.z[i], sol.v[i]));
  }
  c.terminal = (sol.z[N] - spec_.xi_goal).lpNorm<Eigen::Infinity>();
  const double value = spec_.D.Value(xi_now - sol.z[0]);
  c.initial_ratio = spec_.D.level > 0.0 ? value / spec_.D.level
                                        : (value > 0.0 ? kInf : 0.0);
  return c;
}

ReferencePoint Reference(const FtocpSolution& sol, const FlatLTI& sys, double T,
                         double t) {
  const int N = static_cast<int>(sol.v.size());
  if (!(t >= 0.0) || !(t < N * T)) {
    throw InvalidArgument("Reference: t outside [0, N T)");
  }
  const int i = std::min(N - 1, static_cast<int>(std::floor(t / T)));
  const double tau = std::clamp(t - i * T, 0.0, T);
  return {RolloutReference(sys, sol.z[i], sol.v[i], tau, T), sol.v[i]};
}

}  // namespace flatmpc
