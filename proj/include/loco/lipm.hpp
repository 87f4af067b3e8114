#pragma once

#include <stdexcept>

#include "loco/types.hpp"

namespace loco {

// Linear inverted pendulum: xdd = omega^2 (x - p) at constant height.
struct LipmParams {
  double z_com = 0.42;
  double g = 9.81;
  double omega = 0.0;

  static LipmParams from(double z_com, double g) {
    if (z_com <= 0.0 || g <= 0.0)
      throw std::invalid_argument("LipmParams: z_com and g must be > 0");
    return {z_com, g, std::sqrt(g / z_com)};
  }
};

// One horizontal axis of the CoM: [position; velocity].
struct AxisState {
  double pos = 0.0;
  double vel = 0.0;
};

struct LipmTransition {
  Eigen::Matrix2d A;
  Eigen::Vector2d B;
};

// Closed-form propagation over time t under a fixed pendulum pivot:
//   A = [cosh wt, sinh wt / w; w sinh wt, cosh wt],
//   B = [1 - cosh wt; -w sinh wt].
LipmTransition lipm_transition(double t, double omega);

// State at the coming touchdown, t0 seconds of swing remaining, pivot p0.
AxisState predict_touchdown_state(const AxisState& x0, double p0, double t0,
                                  const LipmParams& params);

inline constexpr int kMaxHorizon = 8;

// Per-axis footstep MPC configuration.
struct MpcConfig {
  int N = 3;
  VecX durations;  // T_s1..T_sN
  VecX Q;          // velocity-tracking weights
  VecX R;          // step-to-step ZMP motion weights (> 0)
  double t0 = 0.0;    // remaining swing time
  double p0 = 0.0;    // current ZMP coordinate
  double v_des = 0.0;

  static MpcConfig uniform(int N, double T_s, double Q, double R);
  void validate() const;  // throws std::invalid_argument
};

struct ZmpPlan {
  VecX p_star;                       // optimal ZMP per future step
  std::vector<AxisState> predicted;  // state at each touchdown

  // Max residual of the step recursion reconstructed from p_star.
  double recursion_residual(const AxisState& x_td, const MpcConfig& cfg,
                            const LipmParams& params) const;
};

// Solves the N-step ZMP program for one axis: minimize
//   sum_i 1/2 Q_i (vel_i - v_des)^2 + 1/2 R_i (p_i - p_{i-1})^2
// subject to the step recursion, by condensing the dynamics into an
// unconstrained N x N symmetric solve. Deterministic and allocation-free for
// N <= kMaxHorizon.
ZmpPlan plan_footsteps(const AxisState& x_td, const MpcConfig& cfg,
                       const LipmParams& params);

}  // namespace loco
