#include "loco/sim.hpp"

#include <Eigen/Cholesky>

#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

namespace loco {

// ---------------------------------------------------------------------------
// Terrain
// ---------------------------------------------------------------------------

double Terrain::height(double x, double y) const {
  if (flat()) return 0.0;
  const double gx = std::clamp((x - x0) / cell, 0.0, cols - 1.000001);
  const double gy = std::clamp((y - y0) / cell, 0.0, rows - 1.000001);
  const int i = static_cast<int>(gy);
  const int j = static_cast<int>(gx);
  const double fx = gx - j;
  const double fy = gy - i;
  const double h00 = h[i * cols + j];
  const double h01 = h[i * cols + j + 1];
  const double h10 = h[(i + 1) * cols + j];
  const double h11 = h[(i + 1) * cols + j + 1];
  return h00 * (1 - fx) * (1 - fy) + h01 * fx * (1 - fy) +
         h10 * (1 - fx) * fy + h11 * fx * fy;
}

Vec3 Terrain::normal(double x, double y) const {
  if (flat()) return Vec3::UnitZ();
  const double d = 0.5 * cell;
  const double dhdx = (height(x + d, y) - height(x - d, y)) / (2 * d);
  const double dhdy = (height(x, y + d) - height(x, y - d)) / (2 * d);
  return Vec3(-dhdx, -dhdy, 1.0).normalized();
}

Terrain Terrain::bumps(double amplitude, double cell, double extent_x,
                       double extent_y, uint64_t seed) {
  Terrain t;
  t.cell = cell;
  t.cols = std::max(2, static_cast<int>(extent_x / cell) + 1);
  t.rows = std::max(2, static_cast<int>(extent_y / cell) + 1);
  t.x0 = -0.25 * extent_x;
  t.y0 = -0.5 * extent_y;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-amplitude, amplitude);
  std::vector<double> raw(t.rows * t.cols);
  for (double& v : raw) v = u(rng);
  // One box-smoothing pass; keeps |h| <= amplitude while taming gradients.
  t.h.assign(raw.size(), 0.0);
  for (int i = 0; i < t.rows; ++i) {
    for (int j = 0; j < t.cols; ++j) {
      double sum = 0.0;
      int cnt = 0;
      for (int di = -1; di <= 1; ++di) {
        for (int dj = -1; dj <= 1; ++dj) {
          const int ii = i + di, jj = j + dj;
          if (ii < 0 || jj < 0 || ii >= t.rows || jj >= t.cols) continue;
          sum += raw[ii * t.cols + jj];
          ++cnt;
        }
      }
      t.h[i * t.cols + j] = sum / cnt;
    }
  }
  return t;
}

Terrain Terrain::from_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw SimFault("cannot open heightfield " + path);
  std::string magic, version;
  in >> magic >> version;
  if (magic != "heightfield" || version != "v1")
    throw SimFault("heightfield " + path + ": bad header");
  Terrain t;
  in >> t.rows >> t.cols >> t.cell >> t.x0 >> t.y0;
  if (!in || t.rows < 2 || t.cols < 2 || t.cell <= 0)
    throw SimFault("heightfield " + path + ": bad dimensions");
  t.h.resize(t.rows * t.cols);
  for (double& v : t.h) in >> v;
  if (!in) throw SimFault("heightfield " + path + ": truncated data");
  return t;
}

void Terrain::save(const std::string& path) const {
  std::ofstream out(path);
  out << "heightfield v1\n"
      << rows << " " << cols << " " << cell << " " << x0 << " " << y0 << "\n";
  for (int i = 0; i < rows; ++i) {
    for (int j = 0; j < cols; ++j)
      out << h[i * cols + j] << (j + 1 == cols ? '\n' : ' ');
  }
}

// ---------------------------------------------------------------------------
// Contacts and disturbances
// ---------------------------------------------------------------------------

Vec6 disturbance_wrench(const Disturbance& d, double t) {
  if (t >= d.start && t < d.start + d.duration) return d.wrench;
  return Vec6::Zero();
}

std::array<FootForce, kNumFeet> contact_forces(
    const World& world, const std::array<Vec3, kNumFeet>& pos,
    const std::array<Vec3, kNumFeet>& vel) {
  std::array<FootForce, kNumFeet> out;
  const ContactParams& cp = world.contact;
  for (int f = 0; f < kNumFeet; ++f) {
    const Vec3& p = pos[f];
    const double pen = p.z() - world.terrain.height(p.x(), p.y());
    if (pen >= 0.0) continue;
    const Vec3 n = world.terrain.normal(p.x(), p.y());
    const double pen_rate = vel[f].dot(n);
    const double N = std::max(0.0, -cp.kp * pen - cp.kd * pen_rate);
    if (N <= 0.0) continue;
    const Vec3 v_t = vel[f] - vel[f].dot(n) * n;
    Vec3 f_t = Vec3::Zero();
    const double vt_norm = v_t.norm();
    if (vt_norm > 1e-12)
      f_t = -std::min(cp.kt * vt_norm, cp.mu * N) * (v_t / vt_norm);
    out[f].in_contact = true;
    out[f].force = N * n + f_t;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Simulator
// ---------------------------------------------------------------------------

Simulator::Simulator(const RobotModel& model, const World& world)
    : model_(&model), world_(world), dyn_(model) {
  scratch_tau_.setZero(model.nv());
  rhs_.setZero(model.nv());
}

StepInfo Simulator::step(GeneralizedState& s, const VecX& tau_cmd,
                         const Vec6& ext_base_wrench) {
  StepInfo info;
  const int n = model_->n();
  if (tau_cmd.head<6>().cwiseAbs().maxCoeff() > 0.0)
    throw std::invalid_argument("sim step: base torque rows must be zero");

  scratch_tau_ = tau_cmd;
  for (int j = 0; j < n; ++j) {
    const double lim = model_->torque_limits()[j];
    scratch_tau_[6 + j] = std::clamp(tau_cmd[6 + j], -lim, lim);
  }

  dyn_.update(s, world_.gravity);

  ContactSet active;
  std::array<Vec3, kNumFeet> fpos, fvel;
  if (model_->has_feet()) {
    for (int f = 0; f < kNumFeet; ++f) {
      fpos[f] = dyn_.foot_position(static_cast<FootId>(f));
      fvel[f] = dyn_.foot_velocity(static_cast<FootId>(f));
    }
    info.contact = contact_forces(world_, fpos, fvel);
    for (int f = 0; f < kNumFeet; ++f)
      active.active[f] = info.contact[f].in_contact;
  }

  rhs_ = scratch_tau_ - dyn_.bias();
  if (active.count() > 0) {
    dyn_.contact_jacobian(active, Jc_);
    VecX lambda(active.rows());
    for (int f = 0; f < kNumFeet; ++f) {
      if (!active.active[f]) continue;
      lambda.segment<3>(active.row_of(static_cast<FootId>(f))) =
          info.contact[f].force;
    }
    rhs_.noalias() += Jc_.transpose() * lambda;
  }
  if (ext_base_wrench.squaredNorm() > 0.0) {
    // [F_world; T_world] at the base origin; torque rows pair with w_B.
    rhs_.head<3>() += ext_base_wrench.head<3>();
    rhs_.segment<3>(3) +=
        s.base_quat.toRotationMatrix().transpose() * ext_base_wrench.tail<3>();
  }

  const VecX qdd = dyn_.mass_matrix().ldlt().solve(rhs_);
  const VecX v_new = s.v + world_.step * qdd;

  if (!v_new.allFinite() ||
      v_new.lpNorm<Eigen::Infinity>() > 100.0) {
    info.fault = true;
    return info;
  }

  const double dt = world_.step;
  s.base_pos += dt * 0.5 * (s.v.head<3>() + v_new.head<3>());
  const Vec3 w_mid = 0.5 * (s.v.segment<3>(3) + v_new.segment<3>(3));
  s.base_quat = (s.base_quat * quat_exp(w_mid * dt)).normalized();
  s.q_j += dt * 0.5 * (s.v.tail(n) + v_new.tail(n));
  s.v = v_new;
  return info;
}

double Simulator::total_energy(const GeneralizedState& s) {
  dyn_.update(s, world_.gravity);
  return dyn_.kinetic_energy() + dyn_.potential_energy(world_.gravity);
}

}  // namespace loco
