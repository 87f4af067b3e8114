#include "loco/model.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include <json.hpp>

namespace loco {

// ---------------------------------------------------------------------------
// Math helpers
// ---------------------------------------------------------------------------

Vec3 euler_zyx_from_rotation(const Mat3& R) {
  // R = Rz(yaw) * Ry(pitch) * Rx(roll)
  const double pitch = std::asin(std::clamp(-R(2, 0), -1.0, 1.0));
  const double roll = std::atan2(R(2, 1), R(2, 2));
  const double yaw = std::atan2(R(1, 0), R(0, 0));
  return {roll, pitch, yaw};
}

Mat3 rotation_from_euler_zyx(const Vec3& rpy) {
  return (Eigen::AngleAxisd(rpy.z(), Vec3::UnitZ()) *
          Eigen::AngleAxisd(rpy.y(), Vec3::UnitY()) *
          Eigen::AngleAxisd(rpy.x(), Vec3::UnitX()))
      .toRotationMatrix();
}

Quat quat_exp(const Vec3& rotvec) {
  const double angle = rotvec.norm();
  if (angle < 1e-12) {
    Quat q(1.0, 0.5 * rotvec.x(), 0.5 * rotvec.y(), 0.5 * rotvec.z());
    q.normalize();
    return q;
  }
  return Quat(Eigen::AngleAxisd(angle, rotvec / angle));
}

double wrap_to_pi(double angle) {
  angle = std::fmod(angle + M_PI, 2.0 * M_PI);
  if (angle < 0) angle += 2.0 * M_PI;
  return angle - M_PI;
}

namespace {

// Origin-referenced spatial algebra in the inertial frame, blocks ordered
// [linear; angular]. A motion vector [v; w] carries the velocity of the
// body-fixed point currently at the world origin plus the angular velocity;
// a force vector [f; n] carries the net force plus the moment about the
// origin. Working in a single coordinate frame removes all per-joint
// transforms from the recursions; only the joint motion columns depend on
// configuration, and the base columns are chosen so the generalized velocity
// is exactly [v_I; w_B; qd_j].

inline Vec6 cross_motion(const Vec6& a, const Vec6& b) {
  Vec6 out;
  out.head<3>() =
      a.tail<3>().cross(b.head<3>()) + a.head<3>().cross(b.tail<3>());
  out.tail<3>() = a.tail<3>().cross(b.tail<3>());
  return out;
}

inline Vec6 cross_force(const Vec6& v, const Vec6& f) {
  Vec6 out;
  out.head<3>() = v.tail<3>().cross(f.head<3>());
  out.tail<3>() =
      v.tail<3>().cross(f.tail<3>()) + v.head<3>().cross(f.head<3>());
  return out;
}

// Spatial inertia about the world origin of a body with mass m, world CoM c
// and world-frame rotational inertia I_c about its CoM.
inline Mat6 spatial_inertia_origin(double m, const Vec3& c, const Mat3& I_c) {
  Mat6 I;
  const Mat3 cx = skew(c);
  I.topLeftCorner<3, 3>() = m * Mat3::Identity();
  I.topRightCorner<3, 3>() = -m * cx;
  I.bottomLeftCorner<3, 3>() = m * cx;
  I.bottomRightCorner<3, 3>() = I_c - m * cx * cx;
  return I;
}

}  // namespace

// ---------------------------------------------------------------------------
// Dynamics evaluator
// ---------------------------------------------------------------------------

Dynamics::Dynamics(const RobotModel& model) : model_(&model) {
  const size_t nb = model.bodies().size();
  X_w_.resize(nb);
  com_w_.resize(nb);
  I_o_.resize(nb);
  I_c_.resize(nb);
  S_rev_.resize(nb);
  V_.resize(nb);
  f_.resize(nb);
  M_.setZero(model.nv(), model.nv());
  h_.setZero(model.nv());
}

void Dynamics::fk_pass(const GeneralizedState& s) {
  const auto& bodies = model_->bodies();
  for (size_t i = 0; i < bodies.size(); ++i) {
    const Body& b = bodies[i];
    if (b.parent < 0) {
      X_w_[i].setIdentity();
      X_w_[i].linear() = s.base_quat.toRotationMatrix();
      X_w_[i].translation() = s.base_pos;
    } else {
      const Iso3 X_wj = X_w_[b.parent] * b.X_pj;
      X_w_[i] = X_wj * Eigen::AngleAxisd(s.q_j[b.joint_index], b.axis);
      // Revolute motion column: axis a through joint point p moves the
      // origin-coincident point at (p x a) qd.
      const Vec3 a_w = X_wj.linear() * b.axis;
      const Vec3 p_w = X_wj.translation();
      S_rev_[i].head<3>() = p_w.cross(a_w);
      S_rev_[i].tail<3>() = a_w;
    }
    com_w_[i] = X_w_[i] * b.com;
    const Mat3 R = X_w_[i].linear();
    I_o_[i] = spatial_inertia_origin(b.mass, com_w_[i],
                                     R * b.inertia * R.transpose());
  }
  // Base motion subspace: translational columns are the world axes; the
  // angular columns pair with body-frame rates and therefore carry R.
  const Mat3 R = X_w_[0].linear();
  const Vec3 p = X_w_[0].translation();
  S_base_.setZero();
  S_base_.topLeftCorner<3, 3>().setIdentity();
  S_base_.topRightCorner<3, 3>() = skew(p) * R;
  S_base_.bottomRightCorner<3, 3>() = R;

  com_.setZero();
  for (size_t i = 0; i < bodies.size(); ++i) com_ += bodies[i].mass * com_w_[i];
  com_ /= model_->total_mass();
}

void Dynamics::velocity_pass(const GeneralizedState& s) {
  const auto& bodies = model_->bodies();
  V_[0] = S_base_ * s.v.head<6>();
  for (size_t i = 1; i < bodies.size(); ++i) {
    const Body& b = bodies[i];
    V_[i] = V_[b.parent] + S_rev_[i] * s.v[6 + b.joint_index];
  }
  com_vel_.setZero();
  for (size_t i = 0; i < bodies.size(); ++i) {
    const Vec3 v_ci = V_[i].head<3>() + V_[i].tail<3>().cross(com_w_[i]);
    com_vel_ += bodies[i].mass * v_ci;
  }
  com_vel_ /= model_->total_mass();
}

void Dynamics::update_kinematics(const GeneralizedState& s) {
  fk_pass(s);
  velocity_pass(s);
}

void Dynamics::update(const GeneralizedState& s, const Vec3& gravity) {
  fk_pass(s);
  velocity_pass(s);
  crba();
  rnea_bias(s, gravity);
}

void Dynamics::crba() {
  const auto& bodies = model_->bodies();
  for (size_t i = 0; i < bodies.size(); ++i) I_c_[i] = I_o_[i];
  for (size_t i = bodies.size(); i-- > 1;) I_c_[bodies[i].parent] += I_c_[i];

  M_.setZero();
  M_.topLeftCorner<6, 6>() = S_base_.transpose() * (I_c_[0] * S_base_);
  for (size_t i = 1; i < bodies.size(); ++i) {
    const int col = 6 + bodies[i].joint_index;
    const Vec6 F = I_c_[i] * S_rev_[i];
    M_(col, col) = S_rev_[i].dot(F);
    int j = bodies[i].parent;
    while (j > 0) {
      const int row = 6 + bodies[j].joint_index;
      M_(row, col) = S_rev_[j].dot(F);
      M_(col, row) = M_(row, col);
      j = bodies[j].parent;
    }
    M_.block<6, 1>(0, col) = S_base_.transpose() * F;
    M_.block<1, 6>(col, 0) = M_.block<6, 1>(0, col).transpose();
  }
}

void Dynamics::rnea_bias(const GeneralizedState& s, const Vec3& gravity) {
  // Newton-Euler pass with qdd = 0. Gravity enters as a fictitious base
  // acceleration, so h collects Coriolis, centrifugal and gravity together.
  const auto& bodies = model_->bodies();

  std::vector<Vec6> A(bodies.size());
  // Velocity-product acceleration of the 6-dof base joint. The translational
  // columns are constant and the angular columns rotate with the base; their
  // rate contribution collapses to [v_I x w_W; 0].
  const Vec3 w_W = V_[0].tail<3>();
  const Vec3 v_I = s.v.head<3>();
  A[0].setZero();
  A[0].head<3>() = -gravity + v_I.cross(w_W);
  for (size_t i = 1; i < bodies.size(); ++i) {
    const Body& b = bodies[i];
    const Vec6 Vj = S_rev_[i] * s.v[6 + b.joint_index];
    A[i] = A[b.parent] + cross_motion(V_[i], Vj);
  }

  for (size_t i = 0; i < bodies.size(); ++i) {
    f_[i] = I_o_[i] * A[i] + cross_force(V_[i], I_o_[i] * V_[i]);
  }
  // Children precede nothing: bodies are topologically ordered, so walking
  // backwards folds each subtree before its root is read.
  for (size_t i = bodies.size(); i-- > 1;) {
    h_[6 + bodies[i].joint_index] = S_rev_[i].dot(f_[i]);
    f_[bodies[i].parent] += f_[i];
  }
  h_.head<6>() = S_base_.transpose() * f_[0];
}

Vec3 Dynamics::foot_position(FootId f) const {
  const FootFrame& ff = model_->feet()[static_cast<int>(f)];
  if (ff.body < 0) throw ModelError("model has no foot frame " + std::string(foot_name(f)));
  return X_w_[ff.body] * ff.offset;
}

Vec3 Dynamics::foot_velocity(FootId f) const {
  const FootFrame& ff = model_->feet()[static_cast<int>(f)];
  if (ff.body < 0) throw ModelError("model has no foot frame " + std::string(foot_name(f)));
  const Vec3 p = X_w_[ff.body] * ff.offset;
  return V_[ff.body].head<3>() + V_[ff.body].tail<3>().cross(p);
}

Vec3 Dynamics::hip_position(FootId f) const {
  const FootFrame& ff = model_->feet()[static_cast<int>(f)];
  if (ff.body < 0) throw ModelError("model has no foot frame " + std::string(foot_name(f)));
  // Walk up to the link whose parent is the base: its joint is the leg root.
  int i = ff.body;
  while (model_->bodies()[i].parent > 0) i = model_->bodies()[i].parent;
  return (X_w_[model_->bodies()[i].parent] * model_->bodies()[i].X_pj)
      .translation();
}

Placements Dynamics::placements() const {
  Placements p;
  p.base_pos = X_w_[0].translation();
  p.base_quat = Quat(X_w_[0].linear());
  p.com = com_;
  p.com_vel = com_vel_;
  for (int i = 0; i < kNumFeet; ++i) {
    const FootId f = static_cast<FootId>(i);
    if (model_->feet()[i].body >= 0) {
      p.foot_pos[i] = foot_position(f);
      p.foot_vel[i] = foot_velocity(f);
    } else {
      p.foot_pos[i].setZero();
      p.foot_vel[i].setZero();
    }
  }
  return p;
}

void Dynamics::contact_jacobian(const ContactSet& contacts, MatX& Jc) const {
  Jc.setZero(contacts.rows(), model_->nv());
  for (int fi = 0; fi < kNumFeet; ++fi) {
    const FootId f = static_cast<FootId>(fi);
    if (!contacts.contains(f)) continue;
    const FootFrame& ff = model_->feet()[fi];
    if (ff.body < 0)
      throw ModelError("contact set names missing foot frame " +
                       std::string(foot_name(f)));
    const int r = contacts.row_of(f);
    const Vec3 p = X_w_[ff.body] * ff.offset;
    // Point velocity from an origin-referenced column: v + w x p.
    for (int k = 0; k < 6; ++k) {
      const Vec6 col = S_base_.col(k);
      Jc.block<3, 1>(r, k) = col.head<3>() + col.tail<3>().cross(p);
    }
    int i = ff.body;
    while (i > 0) {
      const Vec6& col = S_rev_[i];
      Jc.block<3, 1>(r, 6 + model_->bodies()[i].joint_index) =
          col.head<3>() + col.tail<3>().cross(p);
      i = model_->bodies()[i].parent;
    }
  }
}

MatX Dynamics::contact_jacobian(const ContactSet& contacts) const {
  MatX Jc;
  contact_jacobian(contacts, Jc);
  return Jc;
}

void Dynamics::leg_jacobian(FootId f, Mat3& J,
                            std::array<int, 3>& joint_cols) const {
  const FootFrame& ff = model_->feet()[static_cast<int>(f)];
  if (ff.body < 0) throw ModelError("model has no foot frame " + std::string(foot_name(f)));
  const Vec3 p = X_w_[ff.body] * ff.offset;
  std::array<int, 3> chain{};
  int count = 0;
  int i = ff.body;
  while (i > 0) {
    if (count >= 3) throw ModelError("leg chain longer than 3 joints");
    chain[count++] = i;
    i = model_->bodies()[i].parent;
  }
  if (count != 3) throw ModelError("leg chain is not 3 joints");
  for (int k = 0; k < 3; ++k) {
    const int body = chain[2 - k];  // root-to-tip order
    joint_cols[k] = model_->bodies()[body].joint_index;
    const Vec6& col = S_rev_[body];
    J.col(k) = col.head<3>() + col.tail<3>().cross(p);
  }
}

double Dynamics::kinetic_energy() const {
  double T = 0.0;
  for (size_t i = 0; i < V_.size(); ++i)
    T += 0.5 * V_[i].dot(I_o_[i] * V_[i]);
  return T;
}

double Dynamics::potential_energy(const Vec3& gravity) const {
  double U = 0.0;
  const auto& bodies = model_->bodies();
  for (size_t i = 0; i < bodies.size(); ++i)
    U -= bodies[i].mass * gravity.dot(com_w_[i]);
  return U;
}

MatX mass_matrix(const RobotModel& model, const GeneralizedState& s) {
  Dynamics dyn(model);
  dyn.update(s, Vec3::Zero());
  return dyn.mass_matrix();
}

VecX bias_forces(const RobotModel& model, const GeneralizedState& s,
                 const Vec3& gravity) {
  Dynamics dyn(model);
  dyn.update(s, gravity);
  return dyn.bias();
}

MatX contact_jacobian(const RobotModel& model, const GeneralizedState& s,
                      const ContactSet& contacts) {
  Dynamics dyn(model);
  dyn.update_kinematics(s);
  return dyn.contact_jacobian(contacts);
}

Placements kinematics(const RobotModel& model, const GeneralizedState& s) {
  Dynamics dyn(model);
  dyn.update_kinematics(s);
  return dyn.placements();
}

std::array<int, 3> leg_joints(const RobotModel& model, FootId foot) {
  const FootFrame& ff = model.feet()[static_cast<int>(foot)];
  if (ff.body < 0)
    throw ModelError("model has no foot frame " + std::string(foot_name(foot)));
  std::array<int, 3> chain{};
  int count = 0;
  int i = ff.body;
  while (i > 0) {
    if (count >= 3) throw ModelError("leg chain longer than 3 joints");
    chain[count++] = model.bodies()[i].joint_index;
    i = model.bodies()[i].parent;
  }
  if (count != 3) throw ModelError("leg chain is not 3 joints");
  std::swap(chain[0], chain[2]);  // root-to-tip
  return chain;
}

// ---------------------------------------------------------------------------
// Model loading
// ---------------------------------------------------------------------------

namespace {

using nlohmann::json;

Vec3 get_vec3(const json& j, const std::string& ctx) {
  if (!j.is_array() || j.size() != 3)
    throw ModelError(ctx + ": expected an array of 3 numbers");
  return Vec3(j[0].get<double>(), j[1].get<double>(), j[2].get<double>());
}

Mat3 get_inertia(const json& j, const std::string& ctx) {
  // [ixx, ixy, ixz, iyy, iyz, izz]
  if (!j.is_array() || j.size() != 6)
    throw ModelError(ctx + ": expected [ixx, ixy, ixz, iyy, iyz, izz]");
  Mat3 I;
  I << j[0].get<double>(), j[1].get<double>(), j[2].get<double>(),
      j[1].get<double>(), j[3].get<double>(), j[4].get<double>(),
      j[2].get<double>(), j[4].get<double>(), j[5].get<double>();
  return I;
}

}  // namespace

RobotModel RobotModel::from_json_text(const std::string& text) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ModelError(std::string("model parse error: ") + e.what());
  }

  RobotModel m;
  try {
    if (!root.contains("schema_version") ||
        root["schema_version"].get<int>() != 1)
      throw ModelError("model: schema_version missing or unsupported");
    m.name_ = root.value("name", "unnamed");

    struct RawLink {
      std::string name;
      double mass;
      Vec3 com;
      Mat3 inertia;
    };
    std::vector<RawLink> raw_links;
    std::map<std::string, int> link_index;
    for (size_t i = 0; i < root.at("links").size(); ++i) {
      const json& jl = root["links"][i];
      const std::string ctx = "links[" + std::to_string(i) + "]";
      RawLink l;
      l.name = jl.at("name").get<std::string>();
      l.mass = jl.at("mass").get<double>();
      if (l.mass <= 0.0)
        throw ModelError(ctx + " (" + l.name + "): mass must be > 0");
      l.com = get_vec3(jl.at("com"), ctx + ".com");
      l.inertia = get_inertia(jl.at("inertia"), ctx + ".inertia");
      Eigen::SelfAdjointEigenSolver<Mat3> es(l.inertia);
      if (es.eigenvalues().minCoeff() <= 0.0)
        throw ModelError(ctx + " (" + l.name +
                         "): inertia tensor is not positive definite");
      if (link_index.count(l.name))
        throw ModelError(ctx + ": duplicate link name " + l.name);
      link_index[l.name] = static_cast<int>(i);
      raw_links.push_back(l);
    }

    struct RawJoint {
      std::string name, kind, parent, child;
      Vec3 axis = Vec3::UnitZ();
      Iso3 X = Iso3::Identity();
    };
    std::vector<RawJoint> raw_joints;
    int floating_count = 0;
    std::string base_link;
    for (size_t i = 0; i < root.at("joints").size(); ++i) {
      const json& jj = root["joints"][i];
      const std::string ctx = "joints[" + std::to_string(i) + "]";
      RawJoint rj;
      rj.name = jj.at("name").get<std::string>();
      rj.kind = jj.at("kind").get<std::string>();
      rj.parent = jj.at("parent").get<std::string>();
      rj.child = jj.at("child").get<std::string>();
      if (!link_index.count(rj.child))
        throw ModelError(ctx + ": unknown child link " + rj.child);
      if (rj.kind == "floating") {
        ++floating_count;
        if (rj.parent != "world")
          throw ModelError(ctx + ": floating joint parent must be 'world'");
        base_link = rj.child;
      } else if (rj.kind == "revolute") {
        if (!link_index.count(rj.parent))
          throw ModelError(ctx + ": unknown parent link " + rj.parent);
        rj.axis = get_vec3(jj.at("axis"), ctx + ".axis");
        const double nrm = rj.axis.norm();
        if (std::abs(nrm - 1.0) > 1e-6)
          throw ModelError(ctx + " (" + rj.name + "): axis must be unit length");
        rj.axis /= nrm;
        if (jj.contains("origin")) {
          const json& jo = jj["origin"];
          Vec3 xyz = jo.contains("xyz") ? get_vec3(jo["xyz"], ctx + ".origin.xyz")
                                        : Vec3::Zero();
          Vec3 rpy = jo.contains("rpy") ? get_vec3(jo["rpy"], ctx + ".origin.rpy")
                                        : Vec3::Zero();
          rj.X.linear() = rotation_from_euler_zyx(rpy);
          rj.X.translation() = xyz;
        }
      } else {
        throw ModelError(ctx + ": unknown joint kind '" + rj.kind + "'");
      }
      raw_joints.push_back(rj);
    }
    if (floating_count != 1)
      throw ModelError("model must have exactly one floating joint, found " +
                       std::to_string(floating_count));

    // Build the tree in topological order starting from the base link.
    std::map<std::string, std::vector<int>> children;  // parent link -> joints
    std::vector<bool> joint_used(raw_joints.size(), false);
    for (size_t i = 0; i < raw_joints.size(); ++i) {
      if (raw_joints[i].kind == "revolute")
        children[raw_joints[i].parent].push_back(static_cast<int>(i));
    }
    std::map<std::string, int> body_of_link;
    auto add_body = [&](const std::string& link, int parent_body,
                        const RawJoint* rj, int joint_index) {
      if (body_of_link.count(link))
        throw ModelError("link " + link +
                         " has more than one parent joint (not a tree)");
      Body b;
      const RawLink& rl = raw_links[link_index.at(link)];
      b.name = rl.name;
      b.mass = rl.mass;
      b.com = rl.com;
      b.inertia = rl.inertia;
      b.parent = parent_body;
      if (rj) {
        b.joint_name = rj->name;
        b.axis = rj->axis;
        b.X_pj = rj->X;
        b.joint_index = joint_index;
      }
      body_of_link[link] = static_cast<int>(m.bodies_.size());
      m.bodies_.push_back(b);
      return body_of_link[link];
    };

    add_body(base_link, -1, nullptr, -1);
    // Depth-first in declaration order; joint_index follows file order of
    // revolute joints so torque vectors match the file.
    std::vector<int> actuated_order;
    for (size_t i = 0; i < raw_joints.size(); ++i)
      if (raw_joints[i].kind == "revolute")
        actuated_order.push_back(static_cast<int>(i));
    std::map<int, int> joint_to_index;
    for (size_t i = 0; i < actuated_order.size(); ++i)
      joint_to_index[actuated_order[i]] = static_cast<int>(i);

    std::vector<std::string> stack = {base_link};
    while (!stack.empty()) {
      const std::string link = stack.back();
      stack.pop_back();
      auto it = children.find(link);
      if (it == children.end()) continue;
      for (int ji : it->second) {
        const RawJoint& rj = raw_joints[ji];
        joint_used[ji] = true;
        add_body(rj.child, body_of_link.at(link), &rj, joint_to_index.at(ji));
        stack.push_back(rj.child);
      }
    }
    for (size_t i = 0; i < raw_joints.size(); ++i) {
      if (raw_joints[i].kind == "revolute" && !joint_used[i])
        throw ModelError("joint " + raw_joints[i].name +
                         " is unreachable from the base (cycle or orphan)");
    }
    if (body_of_link.size() != raw_links.size())
      throw ModelError("some links are not connected to the tree");

    m.n_ = static_cast<int>(actuated_order.size());
    for (const Body& b : m.bodies_) m.total_mass_ += b.mass;

    // Feet (optional; required for contact queries).
    for (auto& ff : m.feet_) ff = FootFrame{};
    if (root.contains("feet")) {
      for (int fi = 0; fi < kNumFeet; ++fi) {
        const char* fname = kFootNames[fi];
        if (!root["feet"].contains(fname))
          throw ModelError(std::string("feet: missing entry for ") + fname);
        const json& jf = root["feet"][fname];
        const std::string link = jf.at("link").get<std::string>();
        if (!body_of_link.count(link))
          throw ModelError(std::string("feet.") + fname + ": unknown link " +
                           link);
        m.feet_[fi].body = body_of_link.at(link);
        m.feet_[fi].offset = jf.contains("offset")
                                 ? get_vec3(jf["offset"],
                                            std::string("feet.") + fname +
                                                ".offset")
                                 : Vec3::Zero();
      }
    }

    // Torque limits: scalar or per-joint array.
    m.torque_limits_.setConstant(m.n_, 1e9);
    if (root.contains("torque_limits")) {
      const json& jt = root["torque_limits"];
      if (jt.is_number()) {
        m.torque_limits_.setConstant(m.n_, jt.get<double>());
      } else if (jt.is_array()) {
        if (static_cast<int>(jt.size()) != m.n_)
          throw ModelError("torque_limits: expected " + std::to_string(m.n_) +
                           " entries");
        for (int i = 0; i < m.n_; ++i)
          m.torque_limits_[i] = jt[i].get<double>();
      } else {
        throw ModelError("torque_limits: expected number or array");
      }
      if ((m.torque_limits_.array() <= 0.0).any())
        throw ModelError("torque_limits: entries must be > 0");
    }
  } catch (const json::exception& e) {
    throw ModelError(std::string("model: ") + e.what());
  }
  return m;
}

RobotModel RobotModel::from_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ModelError("cannot open model file " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return from_json_text(ss.str());
}

RobotModel load_model(const std::string& model_text) {
  return RobotModel::from_json_text(model_text);
}

}  // namespace loco
