#include <doctest.h>

#include <Eigen/Dense>
#include <optional>
#include <random>

#include "loco/qp.hpp"

using namespace loco;
using namespace loco::qp;

namespace {

double objective(const QpProblem& p, const VecX& x) {
  return 0.5 * x.dot(p.H * x) + p.g.dot(x);
}

// Exhaustive enumeration over active-set candidates, solved with a plain LU
// on the KKT system built here (independent of the solver code).
std::optional<std::pair<VecX, double>> enumerate_qp(const QpProblem& p) {
  const int n = p.n();
  const int me = p.n_eq();
  const int mi = p.n_ineq();
  std::optional<std::pair<VecX, double>> best;
  for (uint32_t mask = 0; mask < (1u << mi); ++mask) {
    std::vector<int> act;
    for (int i = 0; i < mi; ++i)
      if (mask & (1u << i)) act.push_back(i);
    const int ma = static_cast<int>(act.size());
    if (ma > n) continue;
    MatX kkt = MatX::Zero(n + me + ma, n + me + ma);
    kkt.topLeftCorner(n, n) = p.H;
    VecX rhs = VecX::Zero(n + me + ma);
    rhs.head(n) = -p.g;
    if (me > 0) {
      kkt.block(n, 0, me, n) = p.Aeq;
      kkt.block(0, n, n, me) = p.Aeq.transpose();
      rhs.segment(n, me) = p.beq;
    }
    for (int i = 0; i < ma; ++i) {
      kkt.block(n + me + i, 0, 1, n) = p.Aineq.row(act[i]);
      kkt.block(0, n + me + i, n, 1) = p.Aineq.row(act[i]).transpose();
      rhs[n + me + i] = p.bineq[act[i]];
    }
    Eigen::FullPivLU<MatX> lu(kkt);
    if (!lu.isInvertible()) continue;
    const VecX sol = lu.solve(rhs);
    const VecX x = sol.head(n);
    // KKT screening: primal feasibility and nonnegative multipliers.
    if (mi > 0 && ((p.Aineq * x - p.bineq).array() > 1e-8).any()) continue;
    bool dual_ok = true;
    for (int i = 0; i < ma; ++i)
      if (sol[n + me + i] < -1e-8) dual_ok = false;
    if (!dual_ok) continue;
    const double obj = objective(p, x);
    if (!best || obj < best->second - 1e-12) best = {x, obj};
  }
  return best;
}

QpProblem random_problem(std::mt19937_64& rng, int n, int me, int mi) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  QpProblem p;
  MatX A = MatX::NullaryExpr(n, n, [&] { return gauss(rng); });
  p.H = A.transpose() * A + 0.5 * MatX::Identity(n, n);
  p.g = VecX::NullaryExpr(n, [&] { return gauss(rng); });
  p.Aeq = MatX::NullaryExpr(me, n, [&] { return gauss(rng); });
  p.beq = VecX::NullaryExpr(me, [&] { return gauss(rng); });
  p.Aineq = MatX::NullaryExpr(mi, n, [&] { return gauss(rng); });
  p.bineq = VecX::NullaryExpr(mi, [&] { return gauss(rng); });
  // keep a margin of feasibility around a random anchor sometimes
  return p;
}

}  // namespace

TEST_CASE("solve_equality_qp: unconstrained and symmetric cases") {
  const int n = 4;
  QpSolution s = solve_equality_qp(MatX::Identity(n, n), VecX::Zero(n),
                                   MatX::Zero(0, n), VecX::Zero(0));
  CHECK(s.x.norm() == 0.0);

  // min ||x||^2 s.t. x1 + x2 = 2 -> (1, 1)
  MatX Aeq(1, 2);
  Aeq << 1, 1;
  VecX beq(1);
  beq << 2;
  s = solve_equality_qp(2.0 * MatX::Identity(2, 2), VecX::Zero(2), Aeq, beq);
  CHECK(s.x[0] == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(s.x[1] == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("solve_equality_qp: random SPD problems vs direct inverse") {
  std::mt19937_64 rng(9);
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (int trial = 0; trial < 50; ++trial) {
    const int n = 2 + trial % 8;
    const int me = trial % 3;
    QpProblem p = random_problem(rng, n, me, 0);
    const QpSolution s = solve_equality_qp(p.H, p.g, p.Aeq, p.beq);
    // direct oracle: block inverse of the KKT matrix
    MatX kkt = MatX::Zero(n + me, n + me);
    kkt.topLeftCorner(n, n) = p.H;
    if (me) {
      kkt.block(n, 0, me, n) = p.Aeq;
      kkt.block(0, n, n, me) = p.Aeq.transpose();
    }
    VecX rhs(n + me);
    rhs.head(n) = -p.g;
    rhs.tail(me) = p.beq;
    const VecX xo = (kkt.inverse() * rhs).head(n);
    CHECK((s.x - xo).lpNorm<Eigen::Infinity>() < 1e-10);
  }
}

TEST_CASE("solve_equality_qp: singular KKT reports rank") {
  MatX Aeq(2, 2);
  Aeq << 1, 1, 1, 1;  // dependent rows
  VecX beq(2);
  beq << 1, 2;
  CHECK_THROWS_WITH_AS(
      solve_equality_qp(MatX::Identity(2, 2), VecX::Zero(2), Aeq, beq),
      doctest::Contains("rank"), QpError);
}

TEST_CASE("solve_active_set: clamped scalar minimum") {
  // min (x-2)^2 s.t. x <= 1 -> x = 1, multiplier 2
  QpProblem p;
  p.H = 2.0 * MatX::Identity(1, 1);
  p.g = VecX::Constant(1, -4.0);
  p.Aeq.resize(0, 1);
  p.beq.resize(0);
  p.Aineq = MatX::Identity(1, 1);
  p.bineq = VecX::Constant(1, 1.0);
  const QpSolution s = solve_active_set(p);
  REQUIRE(s.status == QpStatus::optimal);
  CHECK(s.x[0] == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(s.ineq_multipliers[0] == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(verify_kkt(p, s).ok());
}

TEST_CASE("solve_active_set: inactive constraints match the equality path") {
  std::mt19937_64 rng(31);
  for (int trial = 0; trial < 30; ++trial) {
    const int n = 3 + trial % 6;
    QpProblem p = random_problem(rng, n, 1, 4);
    const QpSolution eq = solve_equality_qp(p.H, p.g, p.Aeq, p.beq);
    // loosen all inequalities so none bind at the equality optimum
    p.bineq = p.Aineq * eq.x + VecX::Constant(4, 1.0);
    const QpSolution s = solve_active_set(p);
    REQUIRE(s.status == QpStatus::optimal);
    CHECK((s.x - eq.x).lpNorm<Eigen::Infinity>() < 1e-9);
    CHECK(s.active_set.empty());
  }
}

TEST_CASE("solve_active_set: matches exhaustive enumeration") {
  std::mt19937_64 rng(123);
  int solved = 0, infeasible_seen = 0;
  for (int trial = 0; trial < 300; ++trial) {
    const int n = 2 + trial % 29;  // up to 30
    const int me = trial % 3;
    const int mi = 2 + trial % 7;  // enumeration stays tractable
    const QpProblem p = random_problem(rng, n, std::min(me, n - 1), mi);
    const auto oracle = enumerate_qp(p);
    const QpSolution s = solve_active_set(p);
    if (!oracle) {
      CHECK(s.status != QpStatus::optimal);
      ++infeasible_seen;
      continue;
    }
    REQUIRE(s.status == QpStatus::optimal);
    CHECK(std::abs(objective(p, s.x) - oracle->second) < 1e-8);
    const KktReport rep = verify_kkt(p, s);
    CHECK(rep.ok(1e-7));
    ++solved;
  }
  CHECK(solved > 250);
}

TEST_CASE("solve_active_set: phase-1 detects infeasibility, least violation") {
  QpProblem p;
  p.H = MatX::Identity(1, 1);
  p.g = VecX::Zero(1);
  p.Aeq.resize(0, 1);
  p.beq.resize(0);
  p.Aineq.resize(2, 1);
  p.Aineq << 1, -1;
  p.bineq.resize(2);
  p.bineq << -1.0, -1.0;  // x <= -1 and x >= 1: infeasible
  const QpSolution s = solve_active_set(p);
  CHECK(s.status == QpStatus::infeasible);
  CHECK(s.max_violation == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(std::abs(s.x[0]) < 1e-6);  // splits the violation evenly
}

TEST_CASE("solve_active_set: warm start changes iterations, not the optimum") {
  std::mt19937_64 rng(555);
  for (int trial = 0; trial < 40; ++trial) {
    const int n = 4 + trial % 10;
    QpProblem p = random_problem(rng, n, 1, 6);
    const QpSolution cold = solve_active_set(p);
    if (cold.status != QpStatus::optimal) continue;
    const QpSolution warm = solve_active_set(p, &cold);
    REQUIRE(warm.status == QpStatus::optimal);
    CHECK(std::abs(objective(p, warm.x) - objective(p, cold.x)) < 1e-10);
    CHECK(warm.iterations <= cold.iterations);
  }
}

TEST_CASE("verify_kkt: rejects a corrupted solution") {
  QpProblem p;
  p.H = 2.0 * MatX::Identity(2, 2);
  p.g = VecX::Constant(2, -2.0);
  p.Aeq.resize(0, 2);
  p.beq.resize(0);
  p.Aineq = MatX::Identity(2, 2);
  p.bineq = VecX::Constant(2, 10.0);
  QpSolution s = solve_active_set(p);
  REQUIRE(s.status == QpStatus::optimal);
  CHECK(verify_kkt(p, s).ok());
  s.x[0] += 0.1;
  CHECK(!verify_kkt(p, s).ok());
}
