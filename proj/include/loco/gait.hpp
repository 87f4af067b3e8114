#pragma once

#include <array>
#include <optional>

#include "loco/lipm.hpp"
#include "loco/types.hpp"

namespace loco {

enum class StancePair { LF_RH = 0, RF_LH = 1 };

inline StancePair other_pair(StancePair p) {
  return p == StancePair::LF_RH ? StancePair::RF_LH : StancePair::LF_RH;
}
inline std::array<FootId, 2> stance_feet(StancePair p) {
  return p == StancePair::LF_RH
             ? std::array<FootId, 2>{FootId::LF, FootId::RH}
             : std::array<FootId, 2>{FootId::RF, FootId::LH};
}
inline std::array<FootId, 2> swing_feet(StancePair p) {
  return stance_feet(other_pair(p));
}

struct GaitSchedule {
  StancePair stance = StancePair::LF_RH;
  double phase_time = 0.0;
  double T_s = 0.3;
};

struct TouchdownEvent {
  StancePair new_stance;
};

// Clock-driven trot scheduling: crossing T_s swaps the stance pair and
// carries the phase remainder.
std::optional<TouchdownEvent> advance(GaitSchedule& schedule, double dt);

struct FootholdGeometry {
  double r = 0.41;       // ZMP-to-foot distance
  double theta0 = 0.56;  // nominal pair orientation
};

struct UserCommand {
  double vx = 0.0;
  double vy = 0.0;
  double omega_z = 0.0;
};

// Foothold targets for the swinging pair: both feet at distance r from the
// desired ZMP, oriented by theta0 plus the accumulated steering angle.
// Returned in the canonical order of swing_feet(stance).
std::array<Vec2, 2> desired_footholds(const Vec2& p1_star,
                                      const FootholdGeometry& geom,
                                      StancePair stance, double dtheta);

struct SwingReference {
  Vec3 pos = Vec3::Zero();
  Vec3 vel = Vec3::Zero();
  Vec3 acc = Vec3::Zero();
};

// Swing spline sample at normalized phase s in [0, 1]: x and y follow one
// cubic with zero boundary velocities; z follows two cubics meeting with
// zero velocity at the apex (s = 0.5), apex = max(start_z, target_z) +
// apex_offset. Velocities and accelerations are analytic derivatives.
SwingReference swing_reference(const Vec3& start, const Vec3& target,
                               double apex_offset, double s, double T_s);

struct ComReference {
  Vec2 pos;
  Vec2 vel;
};

// One-step LIPM rollout of the estimated CoM about the current ZMP.
ComReference com_reference(const AxisState& x_axis, const AxisState& y_axis,
                           const Vec2& zmp, const LipmParams& params,
                           double dt = 0.0025);

// Cubic with prescribed endpoint positions and velocities over [0, T].
struct Cubic {
  double c0 = 0, c1 = 0, c2 = 0, c3 = 0;
  static Cubic boundary(double p0, double v0, double p1, double v1, double T);
  double pos(double t) const { return ((c3 * t + c2) * t + c1) * t + c0; }
  double vel(double t) const { return (3 * c3 * t + 2 * c2) * t + c1; }
  double acc(double t) const { return 6 * c3 * t + 2 * c2; }
};

struct GaitConfig {
  double T_s = 0.3;
  FootholdGeometry geometry;
  double apex_offset = 0.08;
  double clamp_x = 0.28;  // workspace half-extents about the hip projection
  double clamp_y = 0.20;
};

// Stateful coordinator owned by the control loop: schedules the trot,
// tracks the current ZMP and steering angle, and re-anchors the swing
// splines to the commanded reference each cycle so replanned targets keep
// the reference continuous.
class GaitEngine {
 public:
  GaitEngine(const GaitConfig& cfg, const std::array<Vec3, kNumFeet>& foot_pos,
             StancePair initial = StancePair::LF_RH);

  // Advances the phase clock; on touchdown swaps the stance pair, moves the
  // current ZMP to the midpoint of the new support line and re-anchors the
  // new swing feet at their measured positions.
  bool advance(double dt, const std::array<Vec3, kNumFeet>& foot_pos);

  void accumulate_steering(double omega_z, double dt);

  // Eq.-style foothold targets, clamped to a box around each hip projection;
  // target height is the current mean support height.
  void update_targets(const Vec2& p1_star,
                      const std::array<Vec3, kNumFeet>& foot_pos,
                      const std::array<Vec3, kNumFeet>& hip_pos);

  // Swing references for the next control instant (dt ahead), rebuilt from
  // the stored reference state toward the current targets.
  std::array<SwingReference, 2> swing_refs(double dt);

  const GaitSchedule& schedule() const { return schedule_; }
  StancePair stance() const { return schedule_.stance; }
  std::array<FootId, 2> swing_pair() const { return swing_feet(stance()); }
  std::array<FootId, 2> stance_pair() const {
    return stance_feet(schedule_.stance);
  }
  double remaining_swing_time() const {
    return std::max(0.0, schedule_.T_s - schedule_.phase_time);
  }
  Vec2 current_zmp() const { return p0_; }
  double steering() const { return dtheta_; }
  double mean_support_height(const std::array<Vec3, kNumFeet>& foot_pos) const;
  const std::array<Vec3, 2>& targets() const { return targets_; }

 private:
  GaitConfig cfg_;
  GaitSchedule schedule_;
  Vec2 p0_ = Vec2::Zero();
  double dtheta_ = 0.0;
  std::array<Vec3, 2> targets_;      // keyed like swing_pair()
  std::array<Vec3, 2> liftoff_pos_;  // swing start, for the apex height
  std::array<SwingReference, 2> ref_;

  void anchor_swing(const std::array<Vec3, kNumFeet>& foot_pos);
};

}  // namespace loco
