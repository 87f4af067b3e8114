#include "oracles.hpp"

#include <Eigen/Dense>

namespace oracles {

AxisState rk4_lipm(const AxisState& x0, double p, double omega, double t,
                   double h) {
  auto deriv = [&](const Eigen::Vector2d& x) {
    return Eigen::Vector2d(x[1], omega * omega * (x[0] - p));
  };
  Eigen::Vector2d x(x0.pos, x0.vel);
  const int steps = static_cast<int>(std::ceil(t / h));
  for (int i = 0; i < steps; ++i) {
    const double dt = std::min(h, t - i * h);
    if (dt <= 0) break;
    const Eigen::Vector2d k1 = deriv(x);
    const Eigen::Vector2d k2 = deriv(x + 0.5 * dt * k1);
    const Eigen::Vector2d k3 = deriv(x + 0.5 * dt * k2);
    const Eigen::Vector2d k4 = deriv(x + dt * k3);
    x += dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4);
  }
  return {x[0], x[1]};
}

std::vector<LinkKin> link_kinematics(const RobotModel& model,
                                     const GeneralizedState& s) {
  const auto& bodies = model.bodies();
  std::vector<LinkKin> kin(bodies.size());

  for (size_t i = 0; i < bodies.size(); ++i) {
    const Body& b = bodies[i];
    LinkKin& k = kin[i];
    if (b.parent < 0) {
      k.pose.setIdentity();
      k.pose.linear() = s.base_quat.toRotationMatrix();
      k.pose.translation() = s.base_pos;
      k.com_w = k.pose * b.com;
      k.I_w = k.pose.linear() * b.inertia * k.pose.linear().transpose();
      k.omega = k.pose.linear() * s.v.segment<3>(3);
      const Vec3 r = k.com_w - s.base_pos;
      k.v_com = s.v.head<3>() + k.omega.cross(r);
      k.omega_dot.setZero();
      k.a_com = k.omega.cross(k.omega.cross(r));
    } else {
      const LinkKin& pk = kin[b.parent];
      const Iso3 X_wj = pk.pose * b.X_pj;
      k.pose = X_wj * Eigen::AngleAxisd(s.q_j[b.joint_index], b.axis);
      k.joint_point_w = X_wj.translation();
      k.joint_axis_w = X_wj.linear() * b.axis;
      k.com_w = k.pose * b.com;
      k.I_w = k.pose.linear() * b.inertia * k.pose.linear().transpose();

      const double qd = s.v[6 + b.joint_index];
      k.omega = pk.omega + k.joint_axis_w * qd;
      const Vec3 rp = k.joint_point_w - pk.com_w;
      const Vec3 v_joint = pk.v_com + pk.omega.cross(rp);
      const Vec3 rc = k.com_w - k.joint_point_w;
      k.v_com = v_joint + k.omega.cross(rc);

      k.omega_dot = pk.omega_dot + pk.omega.cross(k.joint_axis_w) * qd;
      const Vec3 a_joint = pk.a_com + pk.omega_dot.cross(rp) +
                           pk.omega.cross(pk.omega.cross(rp));
      k.a_com = a_joint + k.omega_dot.cross(rc) +
                k.omega.cross(k.omega.cross(rc));
    }
  }
  return kin;
}

double kinetic_energy(const RobotModel& model, const GeneralizedState& s) {
  const auto kin = link_kinematics(model, s);
  double T = 0.0;
  for (size_t i = 0; i < kin.size(); ++i) {
    const double m = model.bodies()[i].mass;
    T += 0.5 * m * kin[i].v_com.squaredNorm() +
         0.5 * kin[i].omega.dot(kin[i].I_w * kin[i].omega);
  }
  return T;
}

MatX com_jacobian(const RobotModel& model, const std::vector<LinkKin>& kin,
                  int body) {
  const int nv = model.nv();
  MatX J = MatX::Zero(6, nv);
  const Vec3 c = kin[body].com_w;
  const Vec3 pb = kin[0].pose.translation();
  const Mat3 R = kin[0].pose.linear();
  for (int k = 0; k < 3; ++k) {
    J.block<3, 1>(0, k) = Vec3::Unit(k);
    const Vec3 rk = R.col(k);
    J.block<3, 1>(0, 3 + k) = rk.cross(c - pb);
    J.block<3, 1>(3, 3 + k) = rk;
  }
  int i = body;
  while (i > 0) {
    const Body& b = model.bodies()[i];
    J.block<3, 1>(0, 6 + b.joint_index) =
        kin[i].joint_axis_w.cross(c - kin[i].joint_point_w);
    J.block<3, 1>(3, 6 + b.joint_index) = kin[i].joint_axis_w;
    i = b.parent;
  }
  return J;
}

VecX bias_oracle(const RobotModel& model, const GeneralizedState& s,
                 const Vec3& gravity) {
  const auto kin = link_kinematics(model, s);
  VecX h = VecX::Zero(model.nv());
  for (size_t i = 0; i < kin.size(); ++i) {
    const double m = model.bodies()[i].mass;
    Eigen::Matrix<double, 6, 1> wrench;
    wrench.head<3>() = m * (kin[i].a_com - gravity);
    wrench.tail<3>() = kin[i].I_w * kin[i].omega_dot +
                       kin[i].omega.cross(kin[i].I_w * kin[i].omega);
    h += com_jacobian(model, kin, static_cast<int>(i)).transpose() * wrench;
  }
  return h;
}

VecX multiplier_forward_dynamics(const RobotModel& model,
                                 const GeneralizedState& s,
                                 const ContactSet& contacts, const VecX& tau,
                                 const Vec3& gravity) {
  const int nv = model.nv();
  const MatX M = mass_matrix(model, s);
  const VecX h = bias_forces(model, s, gravity);
  const MatX Jc = contact_jacobian(model, s, contacts);
  const int m = static_cast<int>(Jc.rows());

  // Jdot qd by advancing the configuration along its own flow.
  const double delta = 1e-7;
  GeneralizedState s_adv = s;
  s_adv.base_pos += delta * s.v.head<3>();
  s_adv.base_quat =
      (s.base_quat * quat_exp(delta * s.v.segment<3>(3))).normalized();
  s_adv.q_j += delta * s.v.tail(s.n());
  const MatX Jc_adv = contact_jacobian(model, s_adv, contacts);
  const VecX Jdot_qd = ((Jc_adv - Jc) / delta) * s.v;

  VecX s_tau = tau;
  s_tau.head<6>().setZero();

  MatX kkt = MatX::Zero(nv + m, nv + m);
  kkt.topLeftCorner(nv, nv) = M;
  kkt.topRightCorner(nv, m) = Jc.transpose();
  kkt.bottomLeftCorner(m, nv) = Jc;
  VecX rhs(nv + m);
  rhs.head(nv) = s_tau - h;
  rhs.tail(m) = -Jdot_qd;
  const VecX sol = kkt.partialPivLu().solve(rhs);
  return sol.head(nv);
}

GeneralizedState random_state(const RobotModel& model, std::mt19937_64& rng,
                              double pos_scale, double vel_scale) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> uni(-1.0, 1.0);
  GeneralizedState s = model.make_state();
  for (int i = 0; i < 3; ++i) s.base_pos[i] = pos_scale * uni(rng);
  s.base_quat = Quat(gauss(rng), gauss(rng), gauss(rng), gauss(rng));
  if (s.base_quat.norm() < 1e-6) s.base_quat = Quat::Identity();
  s.base_quat.normalize();
  for (int i = 0; i < s.n(); ++i) s.q_j[i] = 0.8 * uni(rng);
  for (int i = 0; i < s.nv(); ++i) s.v[i] = vel_scale * uni(rng);
  return s;
}

GeneralizedState standing_state(const RobotModel& model, double base_z,
                                double hfe, double kfe) {
  GeneralizedState s = model.make_state();
  s.base_pos = Vec3(0, 0, base_z);
  for (int f = 0; f < kNumFeet; ++f) {
    const auto cols = leg_joints(model, static_cast<FootId>(f));
    const bool front = f < 2;
    s.q_j[cols[1]] = front ? hfe : -hfe;
    s.q_j[cols[2]] = front ? -kfe : kfe;
  }
  return s;
}

}  // namespace oracles
