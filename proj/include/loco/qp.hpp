#pragma once

#include <stdexcept>
#include <vector>

#include "loco/types.hpp"

namespace loco::qp {

struct QpError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// min 1/2 x'Hx + g'x  s.t.  Aeq x = beq,  Aineq x <= bineq
struct QpProblem {
  MatX H;
  VecX g;
  MatX Aeq;
  VecX beq;
  MatX Aineq;
  VecX bineq;

  int n() const { return static_cast<int>(g.size()); }
  int n_eq() const { return static_cast<int>(beq.size()); }
  int n_ineq() const { return static_cast<int>(bineq.size()); }
};

enum class QpStatus { optimal, infeasible, max_iter };

struct QpSolution {
  VecX x;
  VecX eq_multipliers;
  VecX ineq_multipliers;       // >= 0, one per inequality (0 if inactive)
  std::vector<int> active_set;  // indices of active inequalities
  QpStatus status = QpStatus::optimal;
  int iterations = 0;
  double max_violation = 0.0;  // least-violation level when infeasible
};

// Preallocated buffers for the active-set iterations; reuse across solves on
// the same thread to keep the hot path allocation-free.
struct Workspace {
  MatX kkt;
  VecX rhs, sol, step;
  std::vector<int> working;
  void reserve(int n, int n_eq, int n_ineq);
};

// Direct KKT solve of the equality-constrained problem. Throws QpError with
// a rank report when the KKT matrix is singular.
QpSolution solve_equality_qp(const MatX& H, const VecX& g, const MatX& Aeq,
                             const VecX& beq);

// Primal active-set method for strictly convex H (on the equality null
// space). Deterministic: the lowest-index blocking constraint enters and the
// most negative multiplier (lowest index on ties) leaves. When the problem
// is infeasible the returned x is the least-violation point from phase 1 and
// status is infeasible. max_iter <= 0 selects the default 10*(n + m).
QpSolution solve_active_set(const QpProblem& problem,
                            const QpSolution* warm_start = nullptr,
                            Workspace* ws = nullptr, int max_iter = -1);

// Independent KKT check; never calls into the solver internals.
struct KktReport {
  double stationarity = 0.0;
  double primal_eq = 0.0;
  double primal_ineq = 0.0;
  double dual = 0.0;          // most negative inequality multiplier
  double complementarity = 0.0;
  bool ok(double tol = 1e-8) const {
    return stationarity < tol && primal_eq < tol && primal_ineq < tol &&
           dual > -tol && complementarity < tol;
  }
};
KktReport verify_kkt(const QpProblem& problem, const QpSolution& sol);

}  // namespace loco::qp
