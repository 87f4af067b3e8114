// Independent reference implementations used only by tests. These must stay
// decoupled from the library's computation paths: kinematics are composed
// chain-by-chain at link CoMs (the library works in origin-referenced
// coordinates), constrained dynamics use the Lagrange-multiplier KKT form
// (the library uses the projected form), and the LIPM oracle integrates the
// ODE numerically (the library uses the closed form).
#pragma once

#include <random>
#include <vector>

#include "loco/lipm.hpp"
#include "loco/model.hpp"

namespace oracles {

using namespace loco;

// RK4 integration of xdd = omega^2 (x - p) with a fixed pivot p.
AxisState rk4_lipm(const AxisState& x0, double p, double omega, double t,
                   double h = 1e-5);

struct LinkKin {
  Iso3 pose;
  Vec3 com_w = Vec3::Zero();
  Mat3 I_w = Mat3::Zero();
  Vec3 v_com = Vec3::Zero();
  Vec3 omega = Vec3::Zero();
  Vec3 omega_dot = Vec3::Zero();  // at qdd = 0
  Vec3 a_com = Vec3::Zero();      // at qdd = 0, gravity excluded
  Vec3 joint_point_w = Vec3::Zero();
  Vec3 joint_axis_w = Vec3::Zero();
};

std::vector<LinkKin> link_kinematics(const RobotModel& model,
                                     const GeneralizedState& s);

double kinetic_energy(const RobotModel& model, const GeneralizedState& s);

// Per-link CoM Jacobian (6 x nv, [linear; angular]) assembled from the chain.
MatX com_jacobian(const RobotModel& model, const std::vector<LinkKin>& kin,
                  int body);

// Generalized bias h(q, v) from per-link Newton-Euler wrenches at qdd = 0.
VecX bias_oracle(const RobotModel& model, const GeneralizedState& s,
                 const Vec3& gravity);

// Constrained accelerations from the multiplier KKT system
//   [M J'; J 0][qdd; -lambda] = [S tau - h; -Jdot qd].
VecX multiplier_forward_dynamics(const RobotModel& model,
                                 const GeneralizedState& s,
                                 const ContactSet& contacts, const VecX& tau,
                                 const Vec3& gravity);

GeneralizedState random_state(const RobotModel& model, std::mt19937_64& rng,
                              double pos_scale = 0.5, double vel_scale = 1.0);
GeneralizedState standing_state(const RobotModel& model, double base_z = 0.462,
                                double hfe = 0.6, double kfe = 1.2);

inline const char* kQuadrupedPath = "models/quadruped.json";
inline const char* kSingleBodyPath = "models/single_body.json";

}  // namespace oracles
