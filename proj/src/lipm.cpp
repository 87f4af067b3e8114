#include "loco/lipm.hpp"

#include <Eigen/Cholesky>

#include <cmath>

namespace loco {

namespace {
// The condensed Hessian grows like cosh(wT)^(2N); extended precision keeps
// the solve accurate through the long-swing configurations. Fixed-capacity
// storage keeps the solve allocation-free.
using Scalar = long double;
using MatN = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, 0,
                           kMaxHorizon, kMaxHorizon>;
using VecN = Eigen::Matrix<Scalar, Eigen::Dynamic, 1, 0, kMaxHorizon, 1>;
using Vec2L = Eigen::Matrix<Scalar, 2, 1>;
using Mat2L = Eigen::Matrix<Scalar, 2, 2>;

struct TransitionL {
  Mat2L A;
  Vec2L B;
};

TransitionL transition_l(Scalar t, Scalar omega) {
  const Scalar c = std::cosh(omega * t);
  const Scalar s = std::sinh(omega * t);
  TransitionL out;
  out.A << c, s / omega, omega * s, c;
  out.B << Scalar(1) - c, -omega * s;
  return out;
}
}  // namespace

LipmTransition lipm_transition(double t, double omega) {
  const double c = std::cosh(omega * t);
  const double s = std::sinh(omega * t);
  LipmTransition out;
  out.A << c, s / omega, omega * s, c;
  out.B << 1.0 - c, -omega * s;
  return out;
}

AxisState predict_touchdown_state(const AxisState& x0, double p0, double t0,
                                  const LipmParams& params) {
  const LipmTransition tr = lipm_transition(t0, params.omega);
  const Eigen::Vector2d x{x0.pos, x0.vel};
  const Eigen::Vector2d xt = tr.A * x + tr.B * p0;
  return {xt[0], xt[1]};
}

MpcConfig MpcConfig::uniform(int N, double T_s, double Q, double R) {
  MpcConfig cfg;
  cfg.N = N;
  cfg.durations = VecX::Constant(N, T_s);
  cfg.Q = VecX::Constant(N, Q);
  cfg.R = VecX::Constant(N, R);
  return cfg;
}

void MpcConfig::validate() const {
  if (N < 1 || N > kMaxHorizon)
    throw std::invalid_argument("MpcConfig: N out of range");
  if (durations.size() != N || Q.size() != N || R.size() != N)
    throw std::invalid_argument("MpcConfig: weight/duration sizes != N");
  if ((durations.array() <= 0.0).any())
    throw std::invalid_argument("MpcConfig: durations must be > 0");
  if ((Q.array() < 0.0).any())
    throw std::invalid_argument("MpcConfig: Q must be >= 0");
  if ((R.array() <= 0.0).any())
    throw std::invalid_argument("MpcConfig: R must be > 0");
  if (t0 < 0.0 || t0 > durations.maxCoeff())
    throw std::invalid_argument("MpcConfig: t0 outside [0, T_s]");
}

ZmpPlan plan_footsteps(const AxisState& x_td, const MpcConfig& cfg,
                       const LipmParams& params) {
  cfg.validate();
  const int N = cfg.N;

  // Condense x_i = A_i x_{i-1} + B_i p_i into vel_i = c_i + d_i' p, then the
  // cost is an unconstrained strictly convex quadratic in p (R_i > 0).
  std::array<Eigen::Vector2d, kMaxHorizon> state_from_x0;
  std::array<std::array<Eigen::Vector2d, kMaxHorizon>, kMaxHorizon>
      state_from_p;

  Eigen::Vector2d x0{x_td.pos, x_td.vel};
  for (int i = 0; i < N; ++i) {
    const LipmTransition tr = lipm_transition(cfg.durations[i], params.omega);
    state_from_x0[i] = tr.A * (i == 0 ? x0 : state_from_x0[i - 1]);
    for (int j = 0; j < i; ++j)
      state_from_p[i][j] = tr.A * state_from_p[i - 1][j];
    state_from_p[i][i] = tr.B;
  }

  MatN H = MatN::Zero(N, N);
  VecN g = VecN::Zero(N);
  for (int i = 0; i < N; ++i) {
    // velocity row of the condensed map
    const double ci = state_from_x0[i][1] - cfg.v_des;
    for (int j = 0; j <= i; ++j) {
      const double dij = state_from_p[i][j][1];
      g[j] += cfg.Q[i] * ci * dij;
      for (int k = 0; k <= i; ++k)
        H(j, k) += cfg.Q[i] * dij * state_from_p[i][k][1];
    }
  }
  // R-term: sum R_i (p_i - p_{i-1})^2 with p_0 fixed.
  H(0, 0) += cfg.R[0];
  g[0] -= cfg.R[0] * cfg.p0;
  for (int i = 1; i < N; ++i) {
    H(i, i) += cfg.R[i];
    H(i - 1, i - 1) += cfg.R[i];
    H(i, i - 1) -= cfg.R[i];
    H(i - 1, i) -= cfg.R[i];
  }

  Eigen::LDLT<MatN> ldlt(H);
  VecN p = ldlt.solve(VecN(-g));
  // One refinement step; the condensed Hessian grows like cosh(wT)^(2N) and
  // this recovers the digits the factorization loses on long horizons.
  p -= ldlt.solve(VecN(H * p + g));

  ZmpPlan plan;
  plan.p_star = p;

  plan.predicted.resize(N);
  Eigen::Vector2d x = x0;
  for (int i = 0; i < N; ++i) {
    const LipmTransition tr = lipm_transition(cfg.durations[i], params.omega);
    x = tr.A * x + tr.B * plan.p_star[i];
    plan.predicted[i] = {x[0], x[1]};
  }
  return plan;
}

double ZmpPlan::recursion_residual(const AxisState& x_td, const MpcConfig& cfg,
                                   const LipmParams& params) const {
  Eigen::Vector2d x{x_td.pos, x_td.vel};
  double res = 0.0;
  for (int i = 0; i < cfg.N; ++i) {
    const LipmTransition tr = lipm_transition(cfg.durations[i], params.omega);
    x = tr.A * x + tr.B * p_star[i];
    res = std::max(res, std::abs(x[0] - predicted[i].pos));
    res = std::max(res, std::abs(x[1] - predicted[i].vel));
  }
  return res;
}

}  // namespace loco
