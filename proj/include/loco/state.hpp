#pragma once

#include "loco/types.hpp"

namespace loco {

// Generalized state of a floating-base robot.
//
// Velocity convention (fixed project-wide): v = [v_b; w_b; qd_j] where v_b is
// the linear velocity of the base origin expressed in the inertial frame I,
// w_b is the base angular velocity expressed in the base frame B, and qd_j
// are the joint rates. Generalized forces pair with this layout.
struct GeneralizedState {
  Vec3 base_pos = Vec3::Zero();      // base origin in frame I
  Quat base_quat = Quat::Identity();  // rotation I <- B
  VecX q_j;                           // n joint angles [rad]
  VecX v;                             // (6+n) generalized velocity

  GeneralizedState() = default;
  explicit GeneralizedState(int n)
      : q_j(VecX::Zero(n)), v(VecX::Zero(6 + n)) {}

  int n() const { return static_cast<int>(q_j.size()); }
  int nv() const { return 6 + n(); }

  Eigen::Ref<const Vec3> base_lin_vel() const { return v.head<3>(); }
  Eigen::Ref<const Vec3> base_ang_vel() const { return v.segment<3>(3); }
  Eigen::Ref<const VecX> joint_rates() const { return v.tail(n()); }
  Eigen::Ref<Vec3> base_lin_vel() { return v.head<3>(); }
  Eigen::Ref<Vec3> base_ang_vel() { return v.segment<3>(3); }
  Eigen::Ref<VecX> joint_rates() { return v.tail(n()); }

  Mat3 base_rotation() const { return base_quat.toRotationMatrix(); }

  void normalize_quat() { base_quat.normalize(); }

  // |quat| within 1e-9 of 1 and vector sizes consistent.
  bool valid() const {
    return std::abs(base_quat.norm() - 1.0) < 1e-9 &&
           v.size() == q_j.size() + 6 && v.allFinite() && q_j.allFinite();
  }
};

}  // namespace loco
