#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "loco/state.hpp"
#include "loco/types.hpp"

namespace loco {

struct ModelError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Set of feet currently treated as ground contacts. Every contact is a
// 3-DoF point constraint, so the stacked Jacobian has 3k rows, k = count().
struct ContactSet {
  std::array<bool, kNumFeet> active = {false, false, false, false};

  static ContactSet none() { return {}; }
  static ContactSet all() { return {{true, true, true, true}}; }
  static ContactSet pair(FootId a, FootId b) {
    ContactSet c;
    c.active[static_cast<int>(a)] = true;
    c.active[static_cast<int>(b)] = true;
    return c;
  }

  bool contains(FootId f) const { return active[static_cast<int>(f)]; }
  int count() const {
    int k = 0;
    for (bool a : active) k += a ? 1 : 0;
    return k;
  }
  int rows() const { return 3 * count(); }
  // Row offset of a foot's 3-row block in the stacked Jacobian, -1 if absent.
  int row_of(FootId f) const {
    if (!contains(f)) return -1;
    int r = 0;
    for (int i = 0; i < static_cast<int>(f); ++i) r += active[i] ? 3 : 0;
    return r;
  }
};

// One rigid body and the joint connecting it to its parent. Bodies are stored
// in topological order; body 0 is the floating base.
struct Body {
  std::string name;
  int parent = -1;        // index into bodies, -1 for the base
  int joint_index = -1;   // actuated joint index, -1 for the base
  std::string joint_name;
  Vec3 axis = Vec3::UnitZ();  // revolute axis in the joint frame
  Iso3 X_pj = Iso3::Identity();  // parent link frame -> joint frame
  double mass = 0.0;
  Vec3 com = Vec3::Zero();       // link CoM in link frame
  Mat3 inertia = Mat3::Zero();   // about link CoM, link frame
};

struct FootFrame {
  int body = -1;
  Vec3 offset = Vec3::Zero();  // foot point in link frame
};

class RobotModel {
 public:
  const std::vector<Body>& bodies() const { return bodies_; }
  const std::array<FootFrame, kNumFeet>& feet() const { return feet_; }
  const VecX& torque_limits() const { return torque_limits_; }
  int n() const { return n_; }        // actuated joints
  int nv() const { return 6 + n_; }   // generalized velocity dimension
  double total_mass() const { return total_mass_; }
  const std::string& name() const { return name_; }
  bool has_feet() const { return feet_[0].body >= 0; }

  GeneralizedState make_state() const { return GeneralizedState(n_); }

  // Parses and validates a model from JSON text. Throws ModelError with the
  // offending field/element on parse or invariant failures.
  static RobotModel from_json_text(const std::string& text);
  static RobotModel from_file(const std::string& path);

 private:
  friend class Dynamics;
  std::vector<Body> bodies_;
  std::array<FootFrame, kNumFeet> feet_;
  VecX torque_limits_;
  int n_ = 0;
  double total_mass_ = 0.0;
  std::string name_;
};

RobotModel load_model(const std::string& model_text);

struct Placements {
  std::array<Vec3, kNumFeet> foot_pos;
  std::array<Vec3, kNumFeet> foot_vel;
  Vec3 base_pos;
  Quat base_quat;
  Vec3 com;
  Vec3 com_vel;
};

// Reusable evaluator for the rigid-body quantities consumed per control
// cycle. All spatial quantities use origin-referenced Plucker coordinates in
// the inertial frame, ordered [linear; angular]; see model.cpp. update() is
// the only mutating call, so distinct instances are safe on distinct threads.
class Dynamics {
 public:
  explicit Dynamics(const RobotModel& model);

  // Forward kinematics + velocities + M + h for the given state.
  void update(const GeneralizedState& s, const Vec3& gravity);
  // Kinematics and velocities only (skips M and h).
  void update_kinematics(const GeneralizedState& s);

  const RobotModel& model() const { return *model_; }
  const MatX& mass_matrix() const { return M_; }
  const VecX& bias() const { return h_; }

  Vec3 foot_position(FootId f) const;
  Vec3 foot_velocity(FootId f) const;
  Vec3 hip_position(FootId f) const;  // origin of the foot's leg chain root
  Vec3 com() const { return com_; }
  Vec3 com_velocity() const { return com_vel_; }
  Placements placements() const;

  // Stacked 3k x (6+n) point-contact Jacobian in the project velocity
  // convention; rows follow the canonical foot order.
  void contact_jacobian(const ContactSet& contacts, MatX& Jc) const;
  MatX contact_jacobian(const ContactSet& contacts) const;
  // 3 x 3 block of a foot's Jacobian w.r.t. its own leg joints.
  void leg_jacobian(FootId f, Mat3& J, std::array<int, 3>& joint_cols) const;

  double kinetic_energy() const;
  double potential_energy(const Vec3& gravity) const;

 private:
  void fk_pass(const GeneralizedState& s);
  void velocity_pass(const GeneralizedState& s);
  void crba();
  void rnea_bias(const GeneralizedState& s, const Vec3& gravity);

  const RobotModel* model_;
  // per-body caches
  std::vector<Iso3> X_w_;           // world pose of link frames
  std::vector<Vec3> com_w_;         // world CoM per link
  std::vector<Mat6> I_o_;           // spatial inertia about the world origin
  std::vector<Mat6> I_c_;           // composite (subtree) spatial inertia
  std::vector<Vec6> S_rev_;         // motion column per revolute joint's body
  Eigen::Matrix<double, 6, 6> S_base_;
  std::vector<Vec6> V_;             // body twists
  std::vector<Vec6> f_;             // RNEA force accumulator
  MatX M_;
  VecX h_;
  Vec3 com_ = Vec3::Zero();
  Vec3 com_vel_ = Vec3::Zero();
};

// Pure single-shot wrappers matching the evaluator; convenient in tests.
MatX mass_matrix(const RobotModel& model, const GeneralizedState& s);
VecX bias_forces(const RobotModel& model, const GeneralizedState& s,
                 const Vec3& gravity);
MatX contact_jacobian(const RobotModel& model, const GeneralizedState& s,
                      const ContactSet& contacts);
Placements kinematics(const RobotModel& model, const GeneralizedState& s);

// Actuated joint indices of a foot's leg chain, root to tip.
std::array<int, 3> leg_joints(const RobotModel& model, FootId foot);

}  // namespace loco
