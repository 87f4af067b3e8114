#pragma once

#include <array>
#include <string>
#include <vector>

#include "loco/model.hpp"

namespace loco {

// Heightfield terrain with bilinear sampling; empty grid means flat ground
// at z = 0. Normals come from half-cell central differences of the sampled
// height, which keeps them continuous across cell seams.
struct Terrain {
  int rows = 0, cols = 0;
  double cell = 0.1;
  double x0 = 0.0, y0 = 0.0;  // grid origin
  std::vector<double> h;

  bool flat() const { return h.empty(); }
  double height(double x, double y) const;
  Vec3 normal(double x, double y) const;

  static Terrain bumps(double amplitude, double cell, double extent_x,
                       double extent_y, uint64_t seed);
  static Terrain from_file(const std::string& path);
  void save(const std::string& path) const;
};

struct ContactParams {
  double kp = 3e4;   // N/m
  double kd = 1e3;   // N s/m
  double mu = 0.6;
  double kt = 6e3;   // tangential viscous slope before the Coulomb cap
};

struct World {
  Vec3 gravity = Vec3(0, 0, -9.81);
  Terrain terrain;
  ContactParams contact;
  double step = 2.5e-4;  // integrator step, <= control period
};

// External base wrench [F_world; T_world] over a time window.
struct Disturbance {
  double start = 0.0;
  double duration = 0.1;
  Vec6 wrench = Vec6::Zero();
};

// Wrench contribution of a disturbance at time t (zero outside its window).
Vec6 disturbance_wrench(const Disturbance& d, double t);

struct FootForce {
  bool in_contact = false;
  Vec3 force = Vec3::Zero();  // world frame
};

// Penalty contact: unilateral spring-damper normal plus a regularized
// Coulomb tangential force capped at mu times the normal.
std::array<FootForce, kNumFeet> contact_forces(
    const World& world, const std::array<Vec3, kNumFeet>& pos,
    const std::array<Vec3, kNumFeet>& vel);

struct SimFault : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct StepInfo {
  std::array<FootForce, kNumFeet> contact;
  bool fault = false;
};

class Simulator {
 public:
  Simulator(const RobotModel& model, const World& world);

  // One integrator step: clamps actuated torques to the model limits,
  // requires zero base torque rows, integrates semi-implicitly (velocity
  // first, pose with midpoint velocity) and renormalizes the quaternion.
  // On divergence the state is left at the last valid value and the fault
  // flag is set.
  StepInfo step(GeneralizedState& s, const VecX& tau_cmd,
                const Vec6& ext_base_wrench = Vec6::Zero());

  const World& world() const { return world_; }
  Dynamics& dynamics() { return dyn_; }

  double total_energy(const GeneralizedState& s);

 private:
  const RobotModel* model_;
  World world_;
  Dynamics dyn_;
  MatX Jc_;
  VecX scratch_tau_, rhs_;
};

}  // namespace loco
