#include "loco/qp.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>

namespace loco::qp {

namespace {

constexpr double kFeasTol = 1e-9;
constexpr double kStepTol = 1e-11;
constexpr double kDualTol = 1e-10;

// Assembles and solves [H A'; A 0][x; mul] = [-g; b] for the rows in `rows`
// (equalities first, then the working inequalities).
bool solve_kkt(const QpProblem& p, const std::vector<int>& working,
               Workspace& ws, VecX& x_out, VecX& mul_out) {
  const int n = p.n();
  const int me = p.n_eq();
  const int mw = static_cast<int>(working.size());
  const int dim = n + me + mw;

  ws.kkt.setZero(dim, dim);
  ws.rhs.setZero(dim);
  ws.kkt.topLeftCorner(n, n) = p.H;
  if (me > 0) {
    ws.kkt.block(n, 0, me, n) = p.Aeq;
    ws.kkt.block(0, n, n, me) = p.Aeq.transpose();
    ws.rhs.segment(n, me) = p.beq;
  }
  for (int i = 0; i < mw; ++i) {
    ws.kkt.block(n + me + i, 0, 1, n) = p.Aineq.row(working[i]);
    ws.kkt.block(0, n + me + i, n, 1) = p.Aineq.row(working[i]).transpose();
    ws.rhs[n + me + i] = p.bineq[working[i]];
  }
  ws.rhs.head(n) = -p.g;

  Eigen::FullPivLU<MatX> lu(ws.kkt);
  if (!lu.isInvertible()) return false;
  ws.sol = lu.solve(ws.rhs);
  x_out = ws.sol.head(n);
  mul_out = ws.sol.tail(me + mw);
  return true;
}

}  // namespace

void Workspace::reserve(int n, int n_eq, int n_ineq) {
  const int dim = n + n_eq + n_ineq;
  kkt.resize(dim, dim);
  rhs.resize(dim);
  sol.resize(dim);
  step.resize(n);
  working.reserve(n_ineq);
}

QpSolution solve_equality_qp(const MatX& H, const VecX& g, const MatX& Aeq,
                             const VecX& beq) {
  const int n = static_cast<int>(g.size());
  const int me = static_cast<int>(beq.size());
  MatX kkt = MatX::Zero(n + me, n + me);
  kkt.topLeftCorner(n, n) = H;
  if (me > 0) {
    kkt.block(n, 0, me, n) = Aeq;
    kkt.block(0, n, n, me) = Aeq.transpose();
  }
  VecX rhs(n + me);
  rhs.head(n) = -g;
  rhs.tail(me) = beq;

  Eigen::FullPivLU<MatX> lu(kkt);
  if (!lu.isInvertible()) {
    throw QpError("singular KKT system: rank " + std::to_string(lu.rank()) +
                  " of " + std::to_string(n + me));
  }
  const VecX sol = lu.solve(rhs);
  QpSolution out;
  out.x = sol.head(n);
  out.eq_multipliers = sol.tail(me);
  out.ineq_multipliers = VecX();
  out.status = QpStatus::optimal;
  out.iterations = 1;
  return out;
}

namespace {

// Shared phase-2 loop. `x` must be feasible on entry.
QpSolution active_set_phase2(const QpProblem& p, VecX x,
                             std::vector<int> working, Workspace& ws,
                             int max_iter) {
  const int me = p.n_eq();
  const int mi = p.n_ineq();

  QpSolution out;
  out.x = x;
  out.status = QpStatus::max_iter;

  VecX x_sub, mul;
  for (int iter = 1; iter <= max_iter; ++iter) {
    out.iterations = iter;
    if (!solve_kkt(p, working, ws, x_sub, mul)) {
      // Degenerate working set; drop the most recent addition and retry.
      if (working.empty()) throw QpError("singular KKT with empty working set");
      working.pop_back();
      continue;
    }
    ws.step = x_sub - x;
    const double step_norm = ws.step.lpNorm<Eigen::Infinity>();

    if (step_norm <= kStepTol) {
      // At the working-set minimizer; check inequality multipliers.
      int drop = -1;
      double most_negative = -kDualTol;
      for (int i = 0; i < static_cast<int>(working.size()); ++i) {
        const double lam = mul[me + i];
        if (lam < most_negative) {
          most_negative = lam;
          drop = i;
        }
      }
      if (drop < 0) {
        out.x = x;
        out.eq_multipliers = mul.head(me);
        out.ineq_multipliers = VecX::Zero(mi);
        for (int i = 0; i < static_cast<int>(working.size()); ++i)
          out.ineq_multipliers[working[i]] = std::max(0.0, mul[me + i]);
        out.active_set = working;
        std::sort(out.active_set.begin(), out.active_set.end());
        out.status = QpStatus::optimal;
        return out;
      }
      working.erase(working.begin() + drop);
      continue;
    }

    // Line search toward x_sub; lowest-index blocking constraint enters.
    double alpha = 1.0;
    int blocking = -1;
    for (int i = 0; i < mi; ++i) {
      if (std::find(working.begin(), working.end(), i) != working.end())
        continue;
      const double adx = p.Aineq.row(i).dot(ws.step);
      if (adx <= kFeasTol) continue;
      const double slack = p.bineq[i] - p.Aineq.row(i).dot(x);
      const double a = slack / adx;
      if (a < alpha - 1e-14) {
        alpha = std::max(0.0, a);
        blocking = i;
      }
    }
    x += alpha * ws.step;
    if (blocking >= 0) working.push_back(blocking);
  }
  out.x = x;
  return out;
}

bool feasible_point(const QpProblem& p, const VecX& x, double tol) {
  if (p.n_eq() > 0 &&
      (p.Aeq * x - p.beq).lpNorm<Eigen::Infinity>() > tol)
    return false;
  if (p.n_ineq() > 0 && ((p.Aineq * x - p.bineq).array() > tol).any())
    return false;
  return true;
}

}  // namespace

QpSolution solve_active_set(const QpProblem& problem,
                            const QpSolution* warm_start, Workspace* ws_in,
                            int max_iter) {
  const int n = problem.n();
  const int me = problem.n_eq();
  const int mi = problem.n_ineq();
  if (max_iter <= 0) max_iter = 10 * (n + me + mi);

  Workspace local;
  Workspace& ws = ws_in ? *ws_in : local;
  ws.reserve(n + 1, me, mi);

  const double scale =
      std::max(1.0, problem.bineq.size() ? problem.bineq.cwiseAbs().maxCoeff()
                                         : 0.0);

  // Starting point: warm start if still feasible, else the equality-only
  // minimizer, else a phase-1 least-violation solve.
  VecX x0;
  std::vector<int> working;
  bool have_start = false;
  if (warm_start && warm_start->x.size() == n &&
      feasible_point(problem, warm_start->x, kFeasTol * scale)) {
    x0 = warm_start->x;
    for (int i : warm_start->active_set) {
      if (i < mi && std::abs(problem.Aineq.row(i).dot(x0) - problem.bineq[i]) <
                        kFeasTol * scale)
        working.push_back(i);
    }
    have_start = true;
  }
  if (!have_start) {
    try {
      QpSolution eq = solve_equality_qp(problem.H, problem.g, problem.Aeq,
                                        problem.beq);
      if (feasible_point(problem, eq.x, kFeasTol * scale)) {
        x0 = eq.x;
        have_start = true;
      }
    } catch (const QpError&) {
      // fall through to phase 1
    }
  }
  if (!have_start) {
    // Phase 1: minimize the uniform violation t with a small regularizer,
    //   Aeq x = beq,  Aineq x - t <= bineq,  starting strictly feasible.
    QpProblem ph;
    const double eps = 1e-8;
    ph.H = MatX::Identity(n + 1, n + 1) * eps;
    ph.g = VecX::Zero(n + 1);
    ph.g[n] = 1.0;
    ph.Aeq = MatX::Zero(me, n + 1);
    ph.Aeq.leftCols(n) = problem.Aeq;
    ph.beq = problem.beq;
    ph.Aineq = MatX::Zero(mi, n + 1);
    ph.Aineq.leftCols(n) = problem.Aineq;
    ph.Aineq.col(n).setConstant(-1.0);
    ph.bineq = problem.bineq;

    VecX xe = VecX::Zero(n);
    if (me > 0) {
      // Any equality-consistent point.
      xe = problem.Aeq.completeOrthogonalDecomposition().solve(problem.beq);
    }
    double t0 = 1.0;
    if (mi > 0)
      t0 = std::max(0.0, (problem.Aineq * xe - problem.bineq).maxCoeff()) + 1.0;
    VecX z0(n + 1);
    z0.head(n) = xe;
    z0[n] = t0;

    Workspace ws1;
    ws1.reserve(n + 1, me, mi);
    QpSolution ph_sol =
        active_set_phase2(ph, z0, {}, ws1, 10 * (n + 1 + me + mi));
    const double viol = ph_sol.x[n];
    if (viol > 1e-7 * scale || ph_sol.status != QpStatus::optimal) {
      QpSolution out;
      out.x = ph_sol.x.head(n);
      out.status = QpStatus::infeasible;
      out.max_violation = viol;
      out.iterations = ph_sol.iterations;
      out.ineq_multipliers = VecX::Zero(mi);
      out.eq_multipliers = VecX::Zero(me);
      return out;
    }
    x0 = ph_sol.x.head(n);
    have_start = true;
  }

  return active_set_phase2(problem, x0, working, ws, max_iter);
}

KktReport verify_kkt(const QpProblem& p, const QpSolution& sol) {
  KktReport r;
  const VecX& x = sol.x;
  VecX grad = p.H * x + p.g;
  if (p.n_eq() > 0 && sol.eq_multipliers.size() == p.n_eq())
    grad += p.Aeq.transpose() * sol.eq_multipliers;
  if (p.n_ineq() > 0 && sol.ineq_multipliers.size() == p.n_ineq())
    grad += p.Aineq.transpose() * sol.ineq_multipliers;
  r.stationarity = grad.lpNorm<Eigen::Infinity>();
  r.primal_eq = p.n_eq() > 0
                    ? (p.Aeq * x - p.beq).lpNorm<Eigen::Infinity>()
                    : 0.0;
  if (p.n_ineq() > 0) {
    const VecX slack = p.bineq - p.Aineq * x;
    r.primal_ineq = std::max(0.0, (-slack).maxCoeff());
    if (sol.ineq_multipliers.size() == p.n_ineq()) {
      r.dual = sol.ineq_multipliers.size() ? sol.ineq_multipliers.minCoeff()
                                           : 0.0;
      r.complementarity =
          (sol.ineq_multipliers.array() * slack.array()).abs().maxCoeff();
    }
  }
  return r;
}

}  // namespace loco::qp
