#include "flatmpc/convex_solver.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <vector>

#include "flatmpc/errors.h"

namespace flatmpc {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Cone program
//   minimize 0.5 x' G x + c' x  s.t.  C x + s = d,  s in K,
// with K = R^l_+ x Q^q, the second-order cone block (q = 0 for none) being
// {(s_0, s_1) : s_0 >= |s_1|}.
struct ConeProblem {
  Eigen::MatrixXd G;
  Eigen::VectorXd c;
  Eigen::MatrixXd C;
  Eigen::VectorXd d;
  int l = 0;
  int q = 0;

  int dim() const { return static_cast<int>(G.rows()); }
  int degree() const { return l + (q > 0 ? 1 : 0); }
};

struct ConeState {
  Eigen::VectorXd x;
  Eigen::VectorXd s;
  Eigen::VectorXd z;
};

struct ConeResult {
  ConeState state;
  bool converged = false;
  int iterations = 0;
};

double InfNorm(const Eigen::VectorXd& v) {
  return v.size() == 0 ? 0.0 : v.lpNorm<Eigen::Infinity>();
}

// sqrt(v_0^2 - |v_1|^2) for v in the interior of Q.
double SocNorm(const Eigen::Ref<const Eigen::VectorXd>& v) {
  const double tail = v.tail(v.size() - 1).norm();
  return std::sqrt(std::max(0.0, (v(0) - tail) * (v(0) + tail)));
}

// Smallest "eigenvalue" of v with respect to K; positive iff v in int K.
double ConeMin(const ConeProblem& p, const Eigen::VectorXd& v) {
  double out = kInf;
  if (p.l > 0) out = v.head(p.l).minCoeff();
  if (p.q > 0) {
    const auto b = v.tail(p.q);
    out = std::min(out, b(0) - b.tail(p.q - 1).norm());
  }
  return out;
}

void AddIdentity(const ConeProblem& p, Eigen::VectorXd& v, double a) {
  v.head(p.l).array() += a;
  if (p.q > 0) v(p.l) += a;
}

// Largest alpha with v + alpha dv in K (may be +inf).
double MaxStep(const ConeProblem& p, const Eigen::VectorXd& v,
               const Eigen::VectorXd& dv) {
  double alpha = kInf;
  for (int i = 0; i < p.l; ++i) {
    if (dv(i) < 0.0) alpha = std::min(alpha, -v(i) / dv(i));
  }
  if (p.q > 0) {
    const auto a = v.tail(p.q);
    const auto da = dv.tail(p.q);
    const double na = a.tail(p.q - 1).norm();
    // f(t) = (a0 + t da0)^2 - |a1 + t da1|^2 = qa t^2 + 2 qb t + qc.
    const double qa = da(0) * da(0) - da.tail(p.q - 1).squaredNorm();
    const double qb = a(0) * da(0) - a.tail(p.q - 1).dot(da.tail(p.q - 1));
    const double qc = (a(0) - na) * (a(0) + na);
    if (da(0) < 0.0) alpha = std::min(alpha, -a(0) / da(0));
    if (qa == 0.0) {
      if (qb < 0.0) alpha = std::min(alpha, -qc / (2.0 * qb));
    } else {
      const double disc = qb * qb - qa * qc;
      if (disc >= 0.0) {
        const double root = std::sqrt(disc);
        // Roots (-qb -+ root) / qa, computed without cancellation.
        const double k = -qb - std::copysign(root, qb);
        for (double t : {k / qa, k != 0.0 ? qc / k : kInf}) {
          if (t > 0.0) alpha = std::min(alpha, t);
        }
      }
    }
  }
  return alpha;
}

// Nesterov-Todd scaling W with W z = W^-1 s = lambda. W is diagonal on the
// linear block and dense on the cone block.
struct NtScaling {
  Eigen::VectorXd lin;  // sqrt(s / z)
  Eigen::MatrixXd soc;
  Eigen::MatrixXd soc_inv;
  Eigen::VectorXd lambda;

  Eigen::VectorXd Apply(const ConeProblem& p, const Eigen::VectorXd& v) const {
    Eigen::VectorXd out(v.size());
    out.head(p.l) = lin.cwiseProduct(v.head(p.l));
    if (p.q > 0) out.tail(p.q) = soc * v.tail(p.q);
    return out;
  }
  Eigen::VectorXd ApplyInverse(const ConeProblem& p,
                               const Eigen::VectorXd& v) const {
    Eigen::VectorXd out(v.size());
    out.head(p.l) = v.head(p.l).cwiseQuotient(lin);
    if (p.q > 0) out.tail(p.q) = soc_inv * v.tail(p.q);
    return out;
  }
};

NtScaling ComputeScaling(const ConeProblem& p, const ConeState& x) {
  NtScaling w;
  w.lin = x.s.head(p.l).cwiseQuotient(x.z.head(p.l)).cwiseSqrt();
  if (p.q > 0) {
    const Eigen::VectorXd s = x.s.tail(p.q);
    const Eigen::VectorXd z = x.z.tail(p.q);
    const double sn = SocNorm(s);
    const double zn = SocNorm(z);
    const Eigen::VectorXd sb = s / sn;
    Eigen::VectorXd zb = z / zn;
    const double gamma = std::sqrt(0.5 * (1.0 + sb.dot(zb)));
    zb.tail(p.q - 1) *= -1.0;
    const Eigen::VectorXd wb = (sb + zb) / (2.0 * gamma);
    const double beta = std::sqrt(sn / zn);
    // W = beta P(v), v the Jordan square root of the scaling point wb.
    Eigen::VectorXd v = wb;
    v(0) += 1.0;
    v /= std::sqrt(2.0 * (wb(0) + 1.0));
    Eigen::VectorXd jw = v;
    jw.tail(p.q - 1) *= -1.0;
    Eigen::MatrixXd J = -Eigen::MatrixXd::Identity(p.q, p.q);
    J(0, 0) = 1.0;
    w.soc = beta * (2.0 * v * v.transpose() - J);
    w.soc_inv = (2.0 * jw * jw.transpose() - J) / beta;
  }
  w.lambda = w.Apply(p, x.z);
  return w;
}

// Jordan product u o v.
Eigen::VectorXd Product(const ConeProblem& p, const Eigen::VectorXd& u,
                        const Eigen::VectorXd& v) {
  Eigen::VectorXd out(u.size());
  out.head(p.l) = u.head(p.l).cwiseProduct(v.head(p.l));
  if (p.q > 0) {
    const auto a = u.tail(p.q);
    const auto b = v.tail(p.q);
    out(p.l) = a.dot(b);
    out.tail(p.q - 1) = a(0) * b.tail(p.q - 1) + b(0) * a.tail(p.q - 1);
  }
  return out;
}

// Solves lambda o x = r.
Eigen::VectorXd Divide(const ConeProblem& p, const Eigen::VectorXd& lambda,
                       const Eigen::VectorXd& r) {
  Eigen::VectorXd out(r.size());
  out.head(p.l) = r.head(p.l).cwiseQuotient(lambda.head(p.l));
  if (p.q > 0) {
    const auto a = lambda.tail(p.q);
    const auto b = r.tail(p.q);
    const double det = SocNorm(a) * SocNorm(a);
    const double x0 = (a(0) * b(0) - a.tail(p.q - 1).dot(b.tail(p.q - 1))) / det;
    out(p.l) = x0;
    out.tail(p.q - 1) = (b.tail(p.q - 1) - x0 * a.tail(p.q - 1)) / a(0);
  }
  return out;
}

Eigen::VectorXd SolveSpd(Eigen::MatrixXd K, const Eigen::VectorXd& rhs) {
  double shift = 0.0;
  for (int attempt = 0; attempt < 12; ++attempt) {
    Eigen::LLT<Eigen::MatrixXd> llt(K);
    if (llt.info() == Eigen::Success) return llt.solve(rhs);
    const double next = shift == 0.0
                            ? 1e-12 * std::max(1.0, K.diagonal().cwiseAbs().maxCoeff())
                            : 10.0 * shift;
    K.diagonal().array() += next - shift;
    shift = next;
  }
  return K.ldlt().solve(rhs);
}

ConeState DefaultStart(const ConeProblem& p) {
  // x minimizes 0.5 x'Gx + c'x + 0.5 |Cx - d|^2; s and z are then shifted
  // into the cone interior.
  ConeState x;
  Eigen::MatrixXd K = p.G;
  K.noalias() += p.C.transpose() * p.C;
  x.x = SolveSpd(K, -p.c + p.C.transpose() * p.d);
  x.s = p.d - p.C * x.x;
  x.z = -x.s;
  for (Eigen::VectorXd* v : {&x.s, &x.z}) {
    const double low = ConeMin(p, *v);
    if (low < 1e-8) AddIdentity(p, *v, 1.0 - low);
  }
  return x;
}

// Relative targets on the dual residual, primal residual and gap.
struct IpmTolerances {
  double dual = 1e-10;
  double primal = 1e-10;
  double gap = 1e-10;
};

// Mehrotra predictor-corrector with Nesterov-Todd scaling. `stop_when` is
// polled on every iterate and can end the run early.
template <typename StopFn>
ConeResult RunConeIpm(const ConeProblem& p, ConeState x, int max_iter,
                      const IpmTolerances& tol, StopFn&& stop_when) {
  const int rows = static_cast<int>(p.C.rows());
  const double scale_d = 1.0 + InfNorm(p.c);
  const double scale_p = 1.0 + InfNorm(p.d);
  Eigen::VectorXd e = Eigen::VectorXd::Zero(rows);
  AddIdentity(p, e, 1.0);

  // Tight targets end the run at once; ten-times-looser ones are accepted
  // when progress stalls, which happens once rounding dominates.
  auto merit = [&](const ConeState& y, double rd, double rp) {
    const double obj = 0.5 * y.x.dot(p.G * y.x) + p.c.dot(y.x);
    const double gap = y.s.dot(y.z);
    return std::max({rd / (tol.dual * scale_d), rp / (tol.primal * scale_p),
                     gap / (tol.gap * (1.0 + std::abs(obj)))});
  };
  ConeResult out;
  ConeState best = x;
  double best_merit = kInf;
  int since_best = 0;
  for (int it = 0; it < max_iter; ++it) {
    out.iterations = it;
    if (!(ConeMin(p, x.s) > 0.0 && ConeMin(p, x.z) > 0.0) || !x.x.allFinite()) {
      break;
    }
    const Eigen::VectorXd r_x = p.G * x.x + p.c + p.C.transpose() * x.z;
    const Eigen::VectorXd r_z = p.C * x.x + x.s - p.d;
    const double current = merit(x, InfNorm(r_x), InfNorm(r_z));
    if (current < best_merit) {
      best_merit = current;
      best = x;
      since_best = 0;
    } else {
      ++since_best;
    }
    if (current <= 1.0) break;
    if (best_merit <= 10.0 && since_best >= 5) break;
    if (stop_when(x)) {
      best = x;
      best_merit = 0.0;
      break;
    }

    const NtScaling w = ComputeScaling(p, x);
    const double mu = x.s.dot(x.z) / p.degree();
    Eigen::MatrixXd WiC(rows, p.dim());
    for (int j = 0; j < p.dim(); ++j) WiC.col(j) = w.ApplyInverse(p, p.C.col(j));
    Eigen::MatrixXd K = p.G;
    K.noalias() += WiC.transpose() * WiC;
    Eigen::LLT<Eigen::MatrixXd> llt(K);
    const bool factored = llt.info() == Eigen::Success;

    // Newton direction for complementarity target lambda o (ds~ + dz~) = rc.
    struct Direction {
      Eigen::VectorXd dx, ds, dz, ds_scaled, dz_scaled;
    };
    auto newton = [&](const Eigen::VectorXd& rc) {
      Direction d;
      const Eigen::VectorXd t = Divide(p, w.lambda, rc);
      const Eigen::VectorXd rhs =
          -r_x - WiC.transpose() * (w.ApplyInverse(p, r_z) + t);
      d.dx = factored ? Eigen::VectorXd(llt.solve(rhs)) : SolveSpd(K, rhs);
      d.dz_scaled = w.ApplyInverse(p, p.C * d.dx + r_z) + t;
      d.dz = w.ApplyInverse(p, d.dz_scaled);
      d.ds_scaled = t - d.dz_scaled;
      d.ds = w.Apply(p, d.ds_scaled);
      return d;
    };

    const Eigen::VectorXd ll = Product(p, w.lambda, w.lambda);
    const Direction aff = newton(-ll);
    const double a_aff = std::min(
        {1.0, MaxStep(p, x.s, aff.ds), MaxStep(p, x.z, aff.dz)});
    const double gap_aff =
        (x.s + a_aff * aff.ds).dot(x.z + a_aff * aff.dz) / p.degree();
    const double sigma = std::pow(std::clamp(gap_aff / mu, 0.0, 1.0), 3);
    const Direction dir = newton(-ll - Product(p, aff.ds_scaled, aff.dz_scaled) +
                                 sigma * mu * e);
    const double alpha = std::min(
        1.0, 0.99 * std::min(MaxStep(p, x.s, dir.ds), MaxStep(p, x.z, dir.dz)));
    x.x += alpha * dir.dx;
    x.s += alpha * dir.ds;
    x.z += alpha * dir.dz;
    out.iterations = it + 1;
  }
  out.converged = best_merit <= 10.0;
  out.state = std::move(best);
  return out;
}

// Reduced problem over the null space of the equalities:
//   minimize 0.5 u' G u + c' u  s.t.  C u <= d,  0.5 u' M u + m' u + r <= 0.
struct ReducedProblem {
  Eigen::MatrixXd G;
  Eigen::VectorXd c;
  Eigen::MatrixXd C;
  Eigen::VectorXd d;
  bool has_quad = false;
  Eigen::MatrixXd M;
  Eigen::VectorXd m;
  double r = 0.0;

  int dim() const { return static_cast<int>(G.rows()); }
  int rows() const { return static_cast<int>(C.rows()); }
  double Quad(const Eigen::VectorXd& u) const {
    return 0.5 * u.dot(M * u) + m.dot(u) + r;
  }
};

// Rows of the cone program for the reduced constraints, with `extra`
// trailing variables left unconstrained. The quadratic is written as
// |F u|^2 <= 2 tau with tau = -m'u - r, i.e.
// (tau + 1/2, F u, tau - 1/2) in Q.
void ConstraintRows(const ReducedProblem& p, int extra, ConeProblem& out) {
  const int n = p.dim();
  const int m = p.rows();
  Eigen::MatrixXd F(0, n);
  if (p.has_quad) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(p.M);
    const Eigen::VectorXd& ev = eig.eigenvalues();
    const double cut = 1e-13 * std::max(1.0, ev.cwiseAbs().maxCoeff());
    std::vector<int> keep;
    for (int i = 0; i < n; ++i) {
      if (ev(i) > cut) keep.push_back(i);
    }
    F.resize(static_cast<int>(keep.size()), n);
    for (std::size_t k = 0; k < keep.size(); ++k) {
      F.row(k) = std::sqrt(ev(keep[k])) *
                 eig.eigenvectors().col(keep[k]).transpose();
    }
  }
  out.l = m;
  out.q = p.has_quad ? static_cast<int>(F.rows()) + 2 : 0;
  out.C = Eigen::MatrixXd::Zero(m + out.q, n + extra);
  out.d = Eigen::VectorXd::Zero(m + out.q);
  out.C.topLeftCorner(m, n) = p.C;
  out.d.head(m) = p.d;
  if (p.has_quad) {
    out.C.block(m, 0, 1, n) = p.m.transpose();
    out.d(m) = 0.5 - p.r;
    out.C.block(m + 1, 0, F.rows(), n) = -F;
    out.C.block(m + out.q - 1, 0, 1, n) = p.m.transpose();
    out.d(m + out.q - 1) = -0.5 - p.r;
  }
}

// Multiplier of the quadratic from the cone dual block.
double QuadMultiplier(const ConeProblem& cone, const Eigen::VectorXd& z) {
  if (cone.q == 0) return 0.0;
  return z(cone.l) + z(cone.l + cone.q - 1);
}

struct PhaseOneResult {
  double t = kInf;
  Eigen::VectorXd u;
  bool converged = false;
  int iterations = 0;
  double certificate_residual = kInf;
};

// minimize t  s.t.  C u - t <= d,  q(u) - t <= 0,  t >= -1.
PhaseOneResult PhaseOne(const ReducedProblem& p, int max_iter) {
  const int n = p.dim();
  const int m = p.rows();
  ConeProblem cone;
  ConstraintRows(p, 1, cone);
  // The t column: every original row is relaxed by t, then t >= -1 is
  // appended to the linear block.
  cone.C.col(n).head(m).setConstant(-1.0);
  if (p.has_quad) {
    cone.C(m, n) = -1.0;
    cone.C(m + cone.q - 1, n) = -1.0;
  }
  Eigen::MatrixXd C(cone.C.rows() + 1, n + 1);
  C << cone.C.topRows(m), Eigen::RowVectorXd::Unit(n + 1, n) * -1.0,
      cone.C.bottomRows(cone.q);
  Eigen::VectorXd d(cone.d.size() + 1);
  d << cone.d.head(m), 1.0, cone.d.tail(cone.q);
  cone.C = std::move(C);
  cone.d = std::move(d);
  cone.l = m + 1;
  cone.G = Eigen::MatrixXd::Zero(n + 1, n + 1);
  cone.c = Eigen::VectorXd::Unit(n + 1, n);

  // A point strictly inside every original constraint settles feasibility.
  auto strictly_feasible = [&](const ConeState& x) {
    const Eigen::VectorXd u = x.x.head(n);
    if (m > 0 && (p.C * u - p.d).maxCoeff() >= 0.0) return false;
    return !p.has_quad || p.Quad(u) < 0.0;
  };
  // Only the sign of t matters here, so a stalled dual residual is
  // tolerated further than in the optimization phase.
  const IpmTolerances tol{1e-8, 1e-9, 1e-9};
  ConeResult res = RunConeIpm(cone, DefaultStart(cone), max_iter, tol,
                              strictly_feasible);

  PhaseOneResult out;
  out.u = res.state.x.head(n);
  out.converged = res.converged;
  out.iterations = res.iterations;
  out.t = res.state.x(n);
  if (strictly_feasible(res.state)) {
    out.t = std::min(out.t, -1e-300);
    out.converged = true;
    return out;
  }
  if (res.converged) {
    // Normalized multipliers certify infeasibility when
    // lam' (C u - d) + lam_q q(u) > 0 for all u; report their stationarity.
    const Eigen::VectorXd lam = res.state.z.head(m).cwiseMax(0.0);
    const double lam_q = std::max(0.0, QuadMultiplier(cone, res.state.z));
    const double total = lam.sum() + lam_q;
    if (total > 0.0) {
      Eigen::VectorXd stat = Eigen::VectorXd::Zero(n);
      if (m > 0) stat += p.C.transpose() * lam;
      if (p.has_quad) stat += lam_q * (p.M * out.u + p.m);
      out.certificate_residual = InfNorm(stat) / total;
    }
  }
  return out;
}

struct ReducedPoint {
  Eigen::VectorXd u;
  Eigen::VectorXd lam;
  double lam_q = 0.0;
};

// Newton refinement on the KKT system of the active set guessed from an
// interior-point solution: rows with multiplier above slack are held as
// equalities, the rest dropped. Returns nothing if the iteration diverges.
std::optional<ReducedPoint> Polish(const ReducedProblem& p,
                                   const ReducedPoint& start) {
  const int n = p.dim();
  std::vector<int> active;
  for (int i = 0; i < p.rows(); ++i) {
    if (start.lam(i) > p.d(i) - p.C.row(i).dot(start.u)) active.push_back(i);
  }
  const bool quad = p.has_quad && start.lam_q > -p.Quad(start.u);
  const int a = static_cast<int>(active.size());
  const int k = n + a + (quad ? 1 : 0);
  Eigen::MatrixXd CA(a, n);
  Eigen::VectorXd dA(a);
  for (int i = 0; i < a; ++i) {
    CA.row(i) = p.C.row(active[i]);
    dA(i) = p.d(active[i]);
  }
  ReducedPoint x = start;
  Eigen::VectorXd y(a);
  for (int i = 0; i < a; ++i) y(i) = start.lam(active[i]);
  double kappa = quad ? start.lam_q : 0.0;
  for (int it = 0; it < 8; ++it) {
    Eigen::VectorXd grad_q = p.has_quad ? Eigen::VectorXd(p.M * x.u + p.m)
                                        : Eigen::VectorXd::Zero(n);
    Eigen::VectorXd res(k);
    res.head(n) = p.G * x.u + p.c + CA.transpose() * y;
    if (quad) res.head(n) += kappa * grad_q;
    res.segment(n, a) = CA * x.u - dA;
    if (quad) res(n + a) = p.Quad(x.u);
    if (InfNorm(res) <= 1e-14 * (1.0 + InfNorm(p.c) + InfNorm(p.d))) break;
    Eigen::MatrixXd J = Eigen::MatrixXd::Zero(k, k);
    J.topLeftCorner(n, n) = p.G;
    if (quad) J.topLeftCorner(n, n) += kappa * p.M;
    J.block(0, n, n, a) = CA.transpose();
    J.block(n, 0, a, n) = CA;
    if (quad) {
      J.block(0, n + a, n, 1) = grad_q;
      J.block(n + a, 0, 1, n) = grad_q.transpose();
    }
    // Minimum-norm step; J is singular when active rows are dependent.
    const Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(J);
    const Eigen::VectorXd step = cod.solve(-res);
    if (!step.allFinite()) return std::nullopt;
    x.u += step.head(n);
    y += step.segment(n, a);
    if (quad) kappa += step(n + a);
  }
  x.lam = Eigen::VectorXd::Zero(p.rows());
  for (int i = 0; i < a; ++i) x.lam(active[i]) = std::max(0.0, y(i));
  x.lam_q = quad ? std::max(0.0, kappa) : 0.0;
  return x;
}

// Null-space parametrisation x = xp + Z u of {x : Aeq x = beq}.
struct NullSpace {
  Eigen::VectorXd xp;
  Eigen::MatrixXd Z;
  Eigen::MatrixXd range_pinv;  // maps grad to eq multipliers: y = -pinv' grad
  double inconsistency = 0.0;
};

NullSpace EliminateEqualities(const ConvexSubproblem& prob) {
  const int n = prob.num_variables();
  NullSpace ns;
  if (prob.Aeq.rows() == 0) {
    ns.xp = Eigen::VectorXd::Zero(n);
    ns.Z = Eigen::MatrixXd::Identity(n, n);
    ns.range_pinv = Eigen::MatrixXd::Zero(n, 0);
    return ns;
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(
      prob.Aeq, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Eigen::VectorXd& sv = svd.singularValues();
  const double tol = std::max(prob.Aeq.rows(), prob.Aeq.cols()) *
                     std::numeric_limits<double>::epsilon() *
                     (sv.size() > 0 ? sv(0) : 0.0);
  int rank = 0;
  while (rank < sv.size() && sv(rank) > tol) ++rank;
  const Eigen::MatrixXd Ur = svd.matrixU().leftCols(rank);
  const Eigen::MatrixXd Vr = svd.matrixV().leftCols(rank);
  const Eigen::VectorXd inv_s = sv.head(rank).cwiseInverse();
  ns.xp = Vr * inv_s.asDiagonal() * (Ur.transpose() * prob.beq);
  ns.Z = svd.matrixV().rightCols(n - rank);
  // y = -(Aeq')^+ grad = -Ur S^-1 Vr' grad.
  ns.range_pinv = Vr * inv_s.asDiagonal() * Ur.transpose();
  ns.inconsistency = InfNorm(prob.Aeq * ns.xp - prob.beq);
  return ns;
}

ReducedProblem Reduce(const ConvexSubproblem& prob, const NullSpace& ns) {
  ReducedProblem p;
  p.G = ns.Z.transpose() * prob.H * ns.Z;
  p.G = 0.5 * (p.G + p.G.transpose()).eval();
  p.c = ns.Z.transpose() * (prob.H * ns.xp + prob.g);
  if (prob.Ain.rows() > 0) {
    p.C = prob.Ain * ns.Z;
    p.d = prob.bin - prob.Ain * ns.xp;
  } else {
    p.C = Eigen::MatrixXd::Zero(0, ns.Z.cols());
    p.d = Eigen::VectorXd::Zero(0);
  }
  if (prob.ellipsoid) {
    const EllipsoidConstraint& e = *prob.ellipsoid;
    const Eigen::VectorXd delta = ns.xp - e.center;
    p.has_quad = true;
    p.M = ns.Z.transpose() * e.P * ns.Z;
    p.M = 0.5 * (p.M + p.M.transpose()).eval();
    p.m = ns.Z.transpose() * (e.P * delta);
    p.r = 0.5 * delta.dot(e.P * delta) - e.level;
  }
  return p;
}

Eigen::VectorXd LagrangianGradient(const ConvexSubproblem& prob,
                                   const Eigen::VectorXd& x,
                                   const Eigen::VectorXd& lam, double lam_q) {
  Eigen::VectorXd grad = prob.H * x + prob.g;
  if (prob.Ain.rows() > 0) grad += prob.Ain.transpose() * lam;
  if (prob.ellipsoid) {
    grad += lam_q * (prob.ellipsoid->P * (x - prob.ellipsoid->center));
  }
  return grad;
}

double DualBound(const ConvexSubproblem& prob, const Eigen::VectorXd& x,
                 const Duals& duals) {
  // L is a convex quadratic in x; inf L = L(x) - 0.5 r' Hl^-1 r with r its
  // gradient at x, valid when Hl is positive definite.
  Eigen::MatrixXd Hl = prob.H;
  if (prob.ellipsoid) Hl += duals.ellipsoid * prob.ellipsoid->P;
  Eigen::VectorXd r = LagrangianGradient(prob, x, duals.ineq, duals.ellipsoid);
  if (prob.Aeq.rows() > 0) r += prob.Aeq.transpose() * duals.eq;
  double L = prob.Objective(x);
  if (prob.Aeq.rows() > 0) L += duals.eq.dot(prob.Aeq * x - prob.beq);
  if (prob.Ain.rows() > 0) L += duals.ineq.dot(prob.Ain * x - prob.bin);
  if (prob.ellipsoid) L += duals.ellipsoid * prob.ellipsoid->Value(x);
  Eigen::LLT<Eigen::MatrixXd> llt(Hl);
  if (llt.info() != Eigen::Success) return -kInf;
  return L - 0.5 * r.dot(llt.solve(r));
}

void Validate(const ConvexSubproblem& prob) {
  const Eigen::Index n = prob.H.rows();
  auto fail = [](const char* what) {
    throw InvalidArgument(std::string("ConvexSubproblem: ") + what);
  };
  if (prob.H.cols() != n || prob.g.size() != n) fail("cost dimensions");
  if (prob.Aeq.rows() != prob.beq.size() ||
      (prob.Aeq.rows() > 0 && prob.Aeq.cols() != n)) {
    fail("equality dimensions");
  }
  if (prob.Ain.rows() != prob.bin.size() ||
      (prob.Ain.rows() > 0 && prob.Ain.cols() != n)) {
    fail("inequality dimensions");
  }
  if (prob.ellipsoid) {
    const auto& e = *prob.ellipsoid;
    if (e.P.rows() != n || e.P.cols() != n || e.center.size() != n) {
      fail("ellipsoid dimensions");
    }
  }
}

}  // namespace

ConvexSubproblem ConvexSubproblem::Empty(int n) {
  ConvexSubproblem p;
  p.H = Eigen::MatrixXd::Zero(n, n);
  p.g = Eigen::VectorXd::Zero(n);
  p.Aeq = Eigen::MatrixXd::Zero(0, n);
  p.beq = Eigen::VectorXd::Zero(0);
  p.Ain = Eigen::MatrixXd::Zero(0, n);
  p.bin = Eigen::VectorXd::Zero(0);
  return p;
}

double ConvexSubproblem::Objective(
    const Eigen::Ref<const Eigen::VectorXd>& x) const {
  return 0.5 * x.dot(H * x) + g.dot(x) + constant;
}

double ConvexSubproblem::MaxViolation(
    const Eigen::Ref<const Eigen::VectorXd>& x) const {
  double v = 0.0;
  if (Aeq.rows() > 0) v = std::max(v, InfNorm(Aeq * x - beq));
  if (Ain.rows() > 0) v = std::max(v, (Ain * x - bin).maxCoeff());
  if (ellipsoid) v = std::max(v, ellipsoid->Value(x));
  return v;
}

std::string_view ToString(SolveStatus status) {
  switch (status) {
    case SolveStatus::kOptimal:
      return "optimal";
    case SolveStatus::kInfeasible:
      return "infeasible";
    case SolveStatus::kMaxIter:
      return "max_iter";
  }
  return "unknown";
}

double CheckKkt(const ConvexSubproblem& prob,
                const Eigen::Ref<const Eigen::VectorXd>& x,
                const Duals& duals) {
  const int m = static_cast<int>(prob.Ain.rows());
  Eigen::VectorXd lam =
      duals.ineq.size() == m ? duals.ineq : Eigen::VectorXd::Zero(m);
  const double lam_q = prob.ellipsoid ? duals.ellipsoid : 0.0;

  Eigen::VectorXd stat = LagrangianGradient(prob, x, lam, lam_q);
  if (prob.Aeq.rows() > 0) {
    if (duals.eq.size() == prob.Aeq.rows()) {
      stat += prob.Aeq.transpose() * duals.eq;
    }
  }
  double res = InfNorm(stat);
  res = std::max(res, prob.MaxViolation(x));
  if (m > 0) {
    res = std::max(res, InfNorm((-lam).cwiseMax(0.0)));
    const Eigen::VectorXd slack = prob.bin - prob.Ain * x;
    res = std::max(res, InfNorm(lam.cwiseProduct(slack)));
  }
  if (prob.ellipsoid) {
    res = std::max(res, std::max(0.0, -lam_q));
    res = std::max(res, std::abs(lam_q * prob.ellipsoid->Value(x)));
  }
  return res;
}

SolveReport Solve(const ConvexSubproblem& prob, const SolverOptions& options) {
  Validate(prob);
  const int n = prob.num_variables();
  const int m = static_cast<int>(prob.Ain.rows());
  SolveReport report;
  report.duals.eq = Eigen::VectorXd::Zero(prob.Aeq.rows());
  report.duals.ineq = Eigen::VectorXd::Zero(m);

  const NullSpace ns = EliminateEqualities(prob);
  if (ns.inconsistency > kFeasibilityTolerance * (1.0 + InfNorm(prob.beq))) {
    // The equality residual itself is the Farkas certificate:
    // y = Aeq xp - beq has Aeq' y = 0 and beq' y = -|y|^2 < 0.
    const Eigen::VectorXd y = prob.Aeq * ns.xp - prob.beq;
    report.status = SolveStatus::kInfeasible;
    report.x = ns.xp;
    report.max_violation = ns.inconsistency;
    report.certificate_residual =
        InfNorm(prob.Aeq.transpose() * y) / y.squaredNorm();
    return report;
  }

  const ReducedProblem p = Reduce(prob, ns);
  const int k = p.dim();
  Eigen::VectorXd u = Eigen::VectorXd::Zero(k);
  Eigen::VectorXd lam = Eigen::VectorXd::Zero(m);
  double lam_q = 0.0;
  int iterations = 0;
  bool converged = false;

  if (k == 0) {
    converged = prob.MaxViolation(ns.xp) <= kFeasibilityTolerance;
    if (!converged) {
      report.status = SolveStatus::kInfeasible;
      report.x = ns.xp;
      report.max_violation = prob.MaxViolation(ns.xp);
      report.certificate_residual = 0.0;
      return report;
    }
  } else if (m == 0 && !p.has_quad) {
    u = SolveSpd(p.G, -p.c);
    converged = true;
  } else {
    PhaseOneResult ph1 = PhaseOne(p, options.max_iterations);
    iterations = ph1.iterations;
    if (ph1.converged && ph1.t > kFeasibilityTolerance) {
      report.status = SolveStatus::kInfeasible;
      report.x = ns.xp + ns.Z * ph1.u;
      report.iterations = iterations;
      report.max_violation = prob.MaxViolation(report.x);
      report.certificate_residual = ph1.certificate_residual;
      return report;
    }
    ConeProblem cone;
    ConstraintRows(p, 0, cone);
    cone.G = p.G;
    cone.c = p.c;
    const int cap = std::max(1, options.max_iterations - iterations);
    ConeResult res = RunConeIpm(cone, DefaultStart(cone), cap, IpmTolerances{},
                                [](const ConeState&) { return false; });
    iterations += res.iterations;
    // A run that stopped on its own is handed to certification even if it
    // stalled above the IPM targets; polishing usually closes the gap.
    converged = res.converged || res.iterations < cap;
    u = res.state.x;
    lam = res.state.z.head(m).cwiseMax(0.0);
    lam_q = std::max(0.0, QuadMultiplier(cone, res.state.z));
  }

  auto assemble = [&](const Eigen::VectorXd& u_, const Eigen::VectorXd& lam_,
                      double lam_q_) {
    SolveReport r = report;
    r.x = ns.xp + ns.Z * u_;
    r.duals.ineq = lam_;
    r.duals.ellipsoid = prob.ellipsoid ? lam_q_ : 0.0;
    if (prob.Aeq.rows() > 0) {
      const Eigen::VectorXd grad = LagrangianGradient(prob, r.x, lam_, lam_q_);
      r.duals.eq = -ns.range_pinv.transpose() * grad;
    }
    r.iterations = iterations;
    r.objective = prob.Objective(r.x);
    r.kkt_residual = CheckKkt(prob, r.x, r.duals);
    r.max_violation = prob.MaxViolation(r.x);
    return r;
  };
  report = assemble(u, lam, lam_q);
  if (k > 0 && (m > 0 || p.has_quad)) {
    if (const auto polished = Polish(p, {u, lam, lam_q})) {
      SolveReport alt = assemble(polished->u, polished->lam, polished->lam_q);
      if (std::max(alt.kkt_residual, alt.max_violation) <
          std::max(report.kkt_residual, report.max_violation)) {
        report = std::move(alt);
      }
    }
  }
  report.dual_bound = DualBound(prob, report.x, report.duals);
  const bool certified = report.kkt_residual <= kKktTolerance &&
                         report.max_violation <= kFeasibilityTolerance;
  report.status = converged && certified ? SolveStatus::kOptimal
                                         : SolveStatus::kMaxIter;
  (void)n;
  return report;
}

}  // namespace flatmpc
