#include <doctest.h>

#include <Eigen/Dense>
#include <random>

#include "loco/lipm.hpp"
#include "oracles.hpp"

using namespace loco;

namespace {

// Dense KKT solve of the uncondensed program over z = (x_1..x_N, p_1..p_N):
// the oracle for the condensed implementation. Extended precision keeps the
// oracle's own rounding far below the tolerance it enforces.
VecX full_kkt_plan(const AxisState& x_td, const MpcConfig& cfg,
                   const LipmParams& params) {
  using Scalar = long double;
  using MatL = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  using VecL = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  const int N = cfg.N;
  const int nz = 2 * N + N;
  const int nc = 2 * N;
  MatL H = MatL::Zero(nz, nz);
  VecL g = VecL::Zero(nz);
  for (int i = 0; i < N; ++i) {
    H(2 * i + 1, 2 * i + 1) += cfg.Q[i];
    g[2 * i + 1] -= static_cast<Scalar>(cfg.Q[i]) * cfg.v_des;
  }
  // R-term on consecutive ZMPs
  H(2 * N, 2 * N) += cfg.R[0];
  g[2 * N] -= static_cast<Scalar>(cfg.R[0]) * cfg.p0;
  for (int i = 1; i < N; ++i) {
    H(2 * N + i, 2 * N + i) += cfg.R[i];
    H(2 * N + i - 1, 2 * N + i - 1) += cfg.R[i];
    H(2 * N + i, 2 * N + i - 1) -= cfg.R[i];
    H(2 * N + i - 1, 2 * N + i) -= cfg.R[i];
  }
  // equality rows: x_i - A_i x_{i-1} - B_i p_i = A_1 x_td delta_{i1}
  MatL A = MatL::Zero(nc, nz);
  VecL b = VecL::Zero(nc);
  for (int i = 0; i < N; ++i) {
    const Scalar wt = static_cast<Scalar>(params.omega) * cfg.durations[i];
    const Scalar ch = std::cosh(wt), sh = std::sinh(wt);
    Eigen::Matrix<Scalar, 2, 2> Ai;
    Ai << ch, sh / params.omega, params.omega * sh, ch;
    Eigen::Matrix<Scalar, 2, 1> Bi;
    Bi << Scalar(1) - ch, -params.omega * sh;
    A.block<2, 2>(2 * i, 2 * i).setIdentity();
    if (i == 0) {
      b.segment<2>(0) =
          Ai * Eigen::Matrix<Scalar, 2, 1>(x_td.pos, x_td.vel);
    } else {
      A.block<2, 2>(2 * i, 2 * (i - 1)) = -Ai;
    }
    A.block<2, 1>(2 * i, 2 * N + i) = -Bi;
  }
  MatL kkt = MatL::Zero(nz + nc, nz + nc);
  kkt.topLeftCorner(nz, nz) = H;
  kkt.topRightCorner(nz, nc) = A.transpose();
  kkt.bottomLeftCorner(nc, nz) = A;
  VecL rhs(nz + nc);
  rhs.head(nz) = -g;
  rhs.tail(nc) = b;
  Eigen::FullPivLU<MatL> lu(kkt);
  VecL sol = lu.solve(rhs);
  sol -= lu.solve(MatL(kkt * sol) - rhs);
  return sol.segment(2 * N, N).cast<double>();
}

MpcConfig random_config(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  const int N = 1 + static_cast<int>(uni(rng) * 4.999);
  MpcConfig cfg;
  cfg.N = N;
  cfg.durations = VecX::Zero(N);
  cfg.Q = VecX::Zero(N);
  cfg.R = VecX::Zero(N);
  // Draw from the regime the planner runs in (swing phases of a trot with
  // the CoM near the pivot).
  for (int i = 0; i < N; ++i) {
    cfg.durations[i] = 0.15 + 0.3 * uni(rng);
    cfg.Q[i] = 2000.0 * uni(rng);
    cfg.R[i] = 0.2 + 5.0 * uni(rng);
  }
  cfg.t0 = 0.0;
  cfg.p0 = 0.4 * uni(rng) - 0.2;
  cfg.v_des = 2.4 * uni(rng) - 1.2;
  return cfg;
}

AxisState random_axis_state(const MpcConfig& cfg, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> uni(-1.0, 1.0);
  return {cfg.p0 + 0.25 * uni(rng), 1.2 * uni(rng)};
}

}  // namespace

TEST_CASE("lipm_transition: identity at t = 0 and unit determinant") {
  const LipmParams params = LipmParams::from(0.42, 9.8);
  const LipmTransition tr0 = lipm_transition(0.0, params.omega);
  CHECK((tr0.A - Eigen::Matrix2d::Identity()).norm() == 0.0);
  CHECK(tr0.B.norm() == 0.0);

  for (double t : {0.05, 0.13, 0.31, 0.77}) {
    const LipmTransition tr = lipm_transition(t, params.omega);
    CHECK(tr.A.determinant() == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("lipm_transition: propagation matches RK4 at the trot parameters") {
  const LipmParams params = LipmParams::from(0.42, 9.8);
  const AxisState x0{0.04, -0.3};
  const double p = -0.02;
  for (double t : {0.05, 0.1, 0.2, 0.3, 0.4, 0.5}) {
    const LipmTransition tr = lipm_transition(t, params.omega);
    const Eigen::Vector2d xt =
        tr.A * Eigen::Vector2d(x0.pos, x0.vel) + tr.B * p;
    const AxisState rk = oracles::rk4_lipm(x0, p, params.omega, t);
    CHECK(std::abs(xt[0] - rk.pos) < 1e-8);
    CHECK(std::abs(xt[1] - rk.vel) < 1e-8);
  }
}

TEST_CASE("predict_touchdown_state: trivial and RK4 cases") {
  const LipmParams params = LipmParams::from(0.42, 9.8);
  const AxisState x0{0.1, 0.5};
  const AxisState same = predict_touchdown_state(x0, 0.0, 0.0, params);
  CHECK(same.pos == x0.pos);
  CHECK(same.vel == x0.vel);

  // CoM balanced exactly on the pivot stays put.
  const AxisState eq = predict_touchdown_state({0.07, 0.0}, 0.07, 0.4, params);
  CHECK(eq.pos == doctest::Approx(0.07).epsilon(1e-14));
  CHECK(std::abs(eq.vel) < 1e-12);

  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> uni(-1.0, 1.0);
  for (int i = 0; i < 10; ++i) {
    const AxisState x{uni(rng), uni(rng)};
    const double p = uni(rng);
    const double t0 = 0.3 * std::abs(uni(rng));
    const AxisState pred = predict_touchdown_state(x, p, t0, params);
    const AxisState rk = oracles::rk4_lipm(x, p, params.omega, t0);
    CHECK(std::abs(pred.pos - rk.pos) < 1e-8);
    CHECK(std::abs(pred.vel - rk.vel) < 1e-8);
  }
}

TEST_CASE("plan_footsteps: equilibrium input keeps every step at p0") {
  const LipmParams params = LipmParams::from(0.42, 9.8);
  MpcConfig cfg = MpcConfig::uniform(3, 0.3, 1000.0, 1.0);
  cfg.p0 = 0.37;
  cfg.v_des = 0.0;
  const ZmpPlan plan = plan_footsteps({0.37, 0.0}, cfg, params);
  for (int i = 0; i < 3; ++i) CHECK(std::abs(plan.p_star[i] - 0.37) < 1e-12);
}

TEST_CASE("plan_footsteps: N = 1 matches the hand-derived scalar solution") {
  const LipmParams params = LipmParams::from(0.42, 9.8);
  MpcConfig cfg = MpcConfig::uniform(1, 0.3, 700.0, 2.0);
  cfg.p0 = -0.05;
  cfg.v_des = 0.4;
  const AxisState x_td{0.12, -0.2};

  const LipmTransition tr = lipm_transition(0.3, params.omega);
  const double c = (tr.A * Eigen::Vector2d(x_td.pos, x_td.vel))[1];
  const double b2 = tr.B[1];
  const double expected =
      (cfg.R[0] * cfg.p0 - cfg.Q[0] * b2 * (c - cfg.v_des)) /
      (cfg.Q[0] * b2 * b2 + cfg.R[0]);

  const ZmpPlan plan = plan_footsteps(x_td, cfg, params);
  CHECK(std::abs(plan.p_star[0] - expected) < 1e-12);
}

TEST_CASE("plan_footsteps: paper configuration matches the uncondensed KKT") {
  const LipmParams params = LipmParams::from(0.42, 9.8);
  MpcConfig cfg = MpcConfig::uniform(3, 0.3, 1000.0, 1.0);
  cfg.p0 = 0.02;
  cfg.v_des = 0.6;
  const AxisState x_td{0.05, 0.25};
  const ZmpPlan plan = plan_footsteps(x_td, cfg, params);
  const VecX oracle = full_kkt_plan(x_td, cfg, params);
  CHECK((plan.p_star - oracle).lpNorm<Eigen::Infinity>() < 1e-9);
}

TEST_CASE("plan_footsteps: condensing equivalence over random configs") {
  const LipmParams params = LipmParams::from(0.42, 9.8);
  std::mt19937_64 rng(2024);
  for (int trial = 0; trial < 200; ++trial) {
    const MpcConfig cfg = random_config(rng);
    const AxisState x_td = random_axis_state(cfg, rng);
    const ZmpPlan plan = plan_footsteps(x_td, cfg, params);
    const VecX oracle = full_kkt_plan(x_td, cfg, params);
    CHECK((plan.p_star - oracle).lpNorm<Eigen::Infinity>() < 1e-9);
    CHECK(plan.recursion_residual(x_td, cfg, params) < 1e-10);
  }
}

TEST_CASE("plan_footsteps: translation equivariance") {
  const LipmParams params = LipmParams::from(0.42, 9.8);
  std::mt19937_64 rng(77);
  std::uniform_real_distribution<double> uni(-1.0, 1.0);
  for (int trial = 0; trial < 50; ++trial) {
    MpcConfig cfg = random_config(rng);
    const AxisState x_td = random_axis_state(cfg, rng);
    const ZmpPlan base = plan_footsteps(x_td, cfg, params);

    const double shift = 2.0 * uni(rng);
    MpcConfig cfg2 = cfg;
    cfg2.p0 += shift;
    const ZmpPlan moved =
        plan_footsteps({x_td.pos + shift, x_td.vel}, cfg2, params);
    for (int i = 0; i < cfg.N; ++i)
      CHECK(std::abs(moved.p_star[i] - base.p_star[i] - shift) < 1e-9);
  }
}

TEST_CASE("plan_footsteps: determinism and horizon robustness") {
  const LipmParams params = LipmParams::from(0.42, 9.8);
  const AxisState x_td{0.08, 0.45};
  MpcConfig cfg = MpcConfig::uniform(3, 0.3, 1000.0, 1.0);
  cfg.v_des = 0.5;
  const ZmpPlan a = plan_footsteps(x_td, cfg, params);
  const ZmpPlan b = plan_footsteps(x_td, cfg, params);
  CHECK(a.p_star == b.p_star);  // bitwise

  // First-step stability across horizons (regression bound frozen from the
  // shipped configuration).
  double p1_prev = 0.0;
  double max_jump = 0.0;
  for (int N = 2; N <= 5; ++N) {
    MpcConfig c = MpcConfig::uniform(N, 0.3, 1000.0, 1.0);
    c.v_des = 0.5;
    const ZmpPlan plan = plan_footsteps(x_td, c, params);
    if (N > 2) max_jump = std::max(max_jump, std::abs(plan.p_star[0] - p1_prev));
    p1_prev = plan.p_star[0];
  }
  CHECK(max_jump < 0.02);
}

TEST_CASE("MpcConfig: invariant violations are rejected") {
  MpcConfig cfg = MpcConfig::uniform(3, 0.3, 1000.0, 1.0);
  cfg.R[1] = 0.0;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = MpcConfig::uniform(3, -0.1, 1000.0, 1.0);
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = MpcConfig::uniform(3, 0.3, 1000.0, 1.0);
  cfg.t0 = 0.5;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
}
