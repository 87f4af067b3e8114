#include "loco/gait.hpp"

#include <cmath>

namespace loco {

std::optional<TouchdownEvent> advance(GaitSchedule& schedule, double dt) {
  schedule.phase_time += dt;
  if (schedule.phase_time < schedule.T_s) return std::nullopt;
  schedule.phase_time -= schedule.T_s;
  schedule.stance = other_pair(schedule.stance);
  return TouchdownEvent{schedule.stance};
}

std::array<Vec2, 2> desired_footholds(const Vec2& p1_star,
                                      const FootholdGeometry& geom,
                                      StancePair stance, double dtheta) {
  // The swinging pair lands symmetrically about the desired ZMP. The LF/RH
  // diagonal uses theta0 + dtheta; the RF/LH diagonal mirrors the lateral
  // component, which is the same diagonal rotated by the accumulated yaw.
  const auto swing = swing_feet(stance);
  Vec2 offset;
  if (swing[0] == FootId::LF) {
    offset = geom.r * Vec2(std::cos(geom.theta0 + dtheta),
                           std::sin(geom.theta0 + dtheta));
  } else {
    offset = geom.r * Vec2(std::cos(geom.theta0 - dtheta),
                           -std::sin(geom.theta0 - dtheta));
  }
  return {Vec2(p1_star + offset), Vec2(p1_star - offset)};
}

Cubic Cubic::boundary(double p0, double v0, double p1, double v1, double T) {
  Cubic c;
  c.c0 = p0;
  c.c1 = v0;
  const double T2 = T * T;
  c.c2 = (3.0 * (p1 - p0) - (2.0 * v0 + v1) * T) / T2;
  c.c3 = (2.0 * (p0 - p1) + (v0 + v1) * T) / (T2 * T);
  return c;
}

SwingReference swing_reference(const Vec3& start, const Vec3& target,
                               double apex_offset, double s, double T_s) {
  SwingReference out;
  const double t = s * T_s;
  for (int a = 0; a < 2; ++a) {
    const Cubic c = Cubic::boundary(start[a], 0.0, target[a], 0.0, T_s);
    out.pos[a] = c.pos(t);
    out.vel[a] = c.vel(t);
    out.acc[a] = c.acc(t);
  }
  const double apex = std::max(start.z(), target.z()) + apex_offset;
  const double T_half = 0.5 * T_s;
  if (s < 0.5) {
    const Cubic c = Cubic::boundary(start.z(), 0.0, apex, 0.0, T_half);
    out.pos.z() = c.pos(t);
    out.vel.z() = c.vel(t);
    out.acc.z() = c.acc(t);
  } else {
    const Cubic c = Cubic::boundary(apex, 0.0, target.z(), 0.0, T_half);
    out.pos.z() = c.pos(t - T_half);
    out.vel.z() = c.vel(t - T_half);
    out.acc.z() = c.acc(t - T_half);
  }
  return out;
}

ComReference com_reference(const AxisState& x_axis, const AxisState& y_axis,
                           const Vec2& zmp, const LipmParams& params,
                           double dt) {
  const LipmTransition tr = lipm_transition(dt, params.omega);
  const Eigen::Vector2d x = tr.A * Eigen::Vector2d(x_axis.pos, x_axis.vel) +
                            tr.B * zmp.x();
  const Eigen::Vector2d y = tr.A * Eigen::Vector2d(y_axis.pos, y_axis.vel) +
                            tr.B * zmp.y();
  ComReference out;
  out.pos = Vec2(x[0], y[0]);
  out.vel = Vec2(x[1], y[1]);
  return out;
}

GaitEngine::GaitEngine(const GaitConfig& cfg,
                       const std::array<Vec3, kNumFeet>& foot_pos,
                       StancePair initial)
    : cfg_(cfg) {
  schedule_.stance = initial;
  schedule_.phase_time = 0.0;
  schedule_.T_s = cfg.T_s;
  const auto st = stance_feet(initial);
  p0_ = 0.5 * (foot_pos[static_cast<int>(st[0])].head<2>() +
               foot_pos[static_cast<int>(st[1])].head<2>());
  anchor_swing(foot_pos);
  for (int i = 0; i < 2; ++i) targets_[i] = liftoff_pos_[i];
}

void GaitEngine::anchor_swing(const std::array<Vec3, kNumFeet>& foot_pos) {
  const auto sw = swing_pair();
  for (int i = 0; i < 2; ++i) {
    const Vec3 p = foot_pos[static_cast<int>(sw[i])];
    liftoff_pos_[i] = p;
    ref_[i].pos = p;
    ref_[i].vel.setZero();
    ref_[i].acc.setZero();
  }
}

bool GaitEngine::advance(double dt, const std::array<Vec3, kNumFeet>& foot_pos) {
  const auto event = loco::advance(schedule_, dt);
  if (!event) return false;
  const auto st = stance_feet(event->new_stance);
  p0_ = 0.5 * (foot_pos[static_cast<int>(st[0])].head<2>() +
               foot_pos[static_cast<int>(st[1])].head<2>());
  anchor_swing(foot_pos);
  for (int i = 0; i < 2; ++i) targets_[i] = liftoff_pos_[i];
  return true;
}

void GaitEngine::accumulate_steering(double omega_z, double dt) {
  dtheta_ += omega_z * dt;
}

double GaitEngine::mean_support_height(
    const std::array<Vec3, kNumFeet>& foot_pos) const {
  const auto st = stance_pair();
  return 0.5 * (foot_pos[static_cast<int>(st[0])].z() +
                foot_pos[static_cast<int>(st[1])].z());
}

void GaitEngine::update_targets(const Vec2& p1_star,
                                const std::array<Vec3, kNumFeet>& foot_pos,
                                const std::array<Vec3, kNumFeet>& hip_pos) {
  const auto xy = desired_footholds(p1_star, cfg_.geometry, stance(), dtheta_);
  const double z = mean_support_height(foot_pos);
  const auto sw = swing_pair();
  for (int i = 0; i < 2; ++i) {
    const Vec3& hip = hip_pos[static_cast<int>(sw[i])];
    targets_[i].x() = std::clamp(xy[i].x(), hip.x() - cfg_.clamp_x,
                                 hip.x() + cfg_.clamp_x);
    targets_[i].y() = std::clamp(xy[i].y(), hip.y() - cfg_.clamp_y,
                                 hip.y() + cfg_.clamp_y);
    targets_[i].z() = z;
  }
}

std::array<SwingReference, 2> GaitEngine::swing_refs(double dt) {
  const double T_rem = std::max(remaining_swing_time(), dt);
  const double t_eval = std::min(dt, T_rem);
  const double T_half = 0.5 * schedule_.T_s;

  std::array<SwingReference, 2> out;
  for (int i = 0; i < 2; ++i) {
    SwingReference next;
    for (int a = 0; a < 2; ++a) {
      const Cubic c = Cubic::boundary(ref_[i].pos[a], ref_[i].vel[a],
                                      targets_[i][a], 0.0, T_rem);
      next.pos[a] = c.pos(t_eval);
      next.vel[a] = c.vel(t_eval);
      next.acc[a] = c.acc(t_eval);
    }
    const double apex =
        std::max(liftoff_pos_[i].z(), targets_[i].z()) + cfg_.apex_offset;
    if (schedule_.phase_time < T_half) {
      const double T_to_apex = std::max(T_half - schedule_.phase_time, dt);
      const Cubic c = Cubic::boundary(ref_[i].pos.z(), ref_[i].vel.z(), apex,
                                      0.0, T_to_apex);
      next.pos.z() = c.pos(std::min(t_eval, T_to_apex));
      next.vel.z() = c.vel(std::min(t_eval, T_to_apex));
      next.acc.z() = c.acc(std::min(t_eval, T_to_apex));
    } else {
      const Cubic c = Cubic::boundary(ref_[i].pos.z(), ref_[i].vel.z(),
                                      targets_[i].z(), 0.0, T_rem);
      next.pos.z() = c.pos(t_eval);
      next.vel.z() = c.vel(t_eval);
      next.acc.z() = c.acc(t_eval);
    }
    ref_[i] = next;
    out[i] = next;
  }
  return out;
}

}  // namespace loco
