#include <doctest.h>

#include <Eigen/Eigenvalues>
#include <fstream>
#include <sstream>

#include "loco/model.hpp"
#include "oracles.hpp"

using namespace loco;

namespace {

std::string slurp(const std::string& path) {
  std::ifstream in(path);
  REQUIRE(in.good());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

GeneralizedState advance_pose(const GeneralizedState& s, double delta) {
  GeneralizedState out = s;
  out.base_pos += delta * s.v.head<3>();
  out.base_quat = (s.base_quat * quat_exp(delta * s.v.segment<3>(3))).normalized();
  out.q_j += delta * s.v.tail(s.n());
  return out;
}

}  // namespace

TEST_CASE("load_model: single floating body has n = 0") {
  const RobotModel m = load_model(slurp(oracles::kSingleBodyPath));
  CHECK(m.n() == 0);
  CHECK(m.nv() == 6);
  CHECK(m.bodies().size() == 1);
  CHECK(!m.has_feet());
}

TEST_CASE("load_model: reference quadruped") {
  const RobotModel m = load_model(slurp(oracles::kQuadrupedPath));
  CHECK(m.n() == 12);
  CHECK(m.bodies().size() == 13);
  CHECK(m.has_feet());
  CHECK(m.total_mass() == doctest::Approx(35.0));
  CHECK(m.torque_limits().size() == 12);
  CHECK(m.torque_limits()[0] == doctest::Approx(40.0));
}

TEST_CASE("load_model: errors name the offending element") {
  const char* negative_mass = R"({
    "schema_version": 1,
    "links": [{"name": "bad_link", "mass": -1.0, "com": [0,0,0],
               "inertia": [1,0,0,1,0,1]}],
    "joints": [{"name": "f", "kind": "floating", "parent": "world",
                "child": "bad_link"}]
  })";
  CHECK_THROWS_WITH_AS(load_model(negative_mass),
                       doctest::Contains("bad_link"), ModelError);

  const char* bad_inertia = R"({
    "schema_version": 1,
    "links": [{"name": "l", "mass": 1.0, "com": [0,0,0],
               "inertia": [1,0,0,-2,0,1]}],
    "joints": [{"name": "f", "kind": "floating", "parent": "world",
                "child": "l"}]
  })";
  CHECK_THROWS_AS(load_model(bad_inertia), ModelError);

  CHECK_THROWS_AS(load_model("{ not json"), ModelError);

  // two parents for one link
  const char* not_tree = R"({
    "schema_version": 1,
    "links": [{"name": "a", "mass": 1.0, "com": [0,0,0], "inertia": [1,0,0,1,0,1]},
              {"name": "b", "mass": 1.0, "com": [0,0,0], "inertia": [1,0,0,1,0,1]}],
    "joints": [{"name": "f", "kind": "floating", "parent": "world", "child": "a"},
               {"name": "j1", "kind": "revolute", "parent": "a", "child": "b",
                "axis": [0,0,1]},
               {"name": "j2", "kind": "revolute", "parent": "a", "child": "b",
                "axis": [0,1,0]}]
  })";
  CHECK_THROWS_AS(load_model(not_tree), ModelError);
}

TEST_CASE("mass_matrix: single body is block diagonal [mI, body inertia]") {
  const char* text = R"({
    "schema_version": 1,
    "links": [{"name": "b", "mass": 4.0, "com": [0,0,0],
               "inertia": [0.3, 0.01, 0.0, 0.4, -0.02, 0.5]}],
    "joints": [{"name": "f", "kind": "floating", "parent": "world",
                "child": "b"}]
  })";
  const RobotModel m = load_model(text);
  GeneralizedState s = m.make_state();
  s.base_pos = Vec3(1.3, -0.4, 2.0);

  Mat3 I_local;
  I_local << 0.3, 0.01, 0.0, 0.01, 0.4, -0.02, 0.0, -0.02, 0.5;

  const MatX M = mass_matrix(m, s);
  CHECK((M.topLeftCorner<3, 3>() - 4.0 * Mat3::Identity()).norm() < 1e-12);
  CHECK(M.topRightCorner<3, 3>().norm() < 1e-12);
  CHECK((M.bottomRightCorner<3, 3>() - I_local).norm() < 1e-12);

  // Angular block pairs with body rates, so it stays the local inertia under
  // rotation too.
  s.base_quat = Quat(Eigen::AngleAxisd(0.7, Vec3(1, 2, 3).normalized()));
  const MatX M2 = mass_matrix(m, s);
  CHECK((M2.bottomRightCorner<3, 3>() - I_local).norm() < 1e-11);
}

TEST_CASE("mass_matrix: kinetic energy matches the per-link twist oracle") {
  const RobotModel m = RobotModel::from_file(oracles::kQuadrupedPath);
  std::mt19937_64 rng(42);
  for (int trial = 0; trial < 50; ++trial) {
    const GeneralizedState s = oracles::random_state(m, rng);
    const MatX M = mass_matrix(m, s);
    const double T_impl = 0.5 * s.v.dot(M * s.v);
    const double T_oracle = oracles::kinetic_energy(m, s);
    CHECK(std::abs(T_impl - T_oracle) <=
          1e-10 * std::max(1.0, std::abs(T_oracle)));
  }
}

TEST_CASE("mass_matrix: symmetric positive definite over random draws") {
  const RobotModel m = RobotModel::from_file(oracles::kQuadrupedPath);
  std::mt19937_64 rng(7);
  double max_asym = 0.0;
  double min_eig = 1e30;
  for (int trial = 0; trial < 1000; ++trial) {
    const GeneralizedState s = oracles::random_state(m, rng);
    const MatX M = mass_matrix(m, s);
    max_asym = std::max(max_asym,
                        (M - M.transpose()).cwiseAbs().maxCoeff());
    Eigen::SelfAdjointEigenSolver<MatX> es(M);
    min_eig = std::min(min_eig, es.eigenvalues().minCoeff());
  }
  CHECK(max_asym < 1e-12);
  CHECK(min_eig > 0.0);
}

TEST_CASE("bias_forces: statics equals the gravity load") {
  const RobotModel m = RobotModel::from_file(oracles::kQuadrupedPath);
  std::mt19937_64 rng(3);
  GeneralizedState s = oracles::random_state(m, rng);
  s.v.setZero();
  const Vec3 g(0, 0, -9.81);

  const VecX h = bias_forces(m, s, g);
  // base linear rows carry the whole weight, expressed in frame I
  CHECK(h[0] == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(h[1] == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(h[2] == doctest::Approx(m.total_mass() * 9.81));

  const VecX h0 = bias_forces(m, s, Vec3::Zero());
  CHECK(h0.lpNorm<Eigen::Infinity>() < 1e-12);
}

TEST_CASE("bias_forces: matches the independent per-link Newton-Euler oracle") {
  const RobotModel m = RobotModel::from_file(oracles::kQuadrupedPath);
  const Vec3 g(0, 0, -9.81);
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 40; ++trial) {
    const GeneralizedState s = oracles::random_state(m, rng);
    const VecX h = bias_forces(m, s, g);
    const VecX h_oracle = oracles::bias_oracle(m, s, g);
    CHECK((h - h_oracle).lpNorm<Eigen::Infinity>() < 1e-9);
  }
}

TEST_CASE("bias_forces: coriolis power identity vs finite-differenced M") {
  const RobotModel m = RobotModel::from_file(oracles::kQuadrupedPath);
  std::mt19937_64 rng(13);
  for (int trial = 0; trial < 20; ++trial) {
    const GeneralizedState s = oracles::random_state(m, rng);
    const VecX h_cor =
        bias_forces(m, s, Vec3::Zero());  // velocity terms only
    const double delta = 1e-7;
    const MatX Mdot =
        (mass_matrix(m, advance_pose(s, delta)) - mass_matrix(m, s)) / delta;
    const double lhs = s.v.dot(h_cor);
    const double rhs = 0.5 * s.v.dot(Mdot * s.v);
    CHECK(std::abs(lhs - rhs) < 1e-5 * std::max(1.0, std::abs(rhs)));
  }
}

TEST_CASE("contact_jacobian: empty set, trot dimensions, unknown foot") {
  const RobotModel m = RobotModel::from_file(oracles::kQuadrupedPath);
  const GeneralizedState s = oracles::standing_state(m);
  CHECK(contact_jacobian(m, s, ContactSet::none()).rows() == 0);
  CHECK(contact_jacobian(m, s, ContactSet::none()).cols() == 18);

  const MatX Jc =
      contact_jacobian(m, s, ContactSet::pair(FootId::LF, FootId::RH));
  CHECK(Jc.rows() == 6);
  CHECK(Jc.cols() == 18);

  const RobotModel single = RobotModel::from_file(oracles::kSingleBodyPath);
  CHECK_THROWS_AS(
      contact_jacobian(single, single.make_state(), ContactSet::all()),
      ModelError);
}

TEST_CASE("contact_jacobian: finite differences of foot kinematics") {
  const RobotModel m = RobotModel::from_file(oracles::kQuadrupedPath);
  std::mt19937_64 rng(5);
  const GeneralizedState s = oracles::random_state(m, rng);
  const ContactSet contacts = ContactSet::all();
  const MatX Jc = contact_jacobian(m, s, contacts);

  const double eps = 1e-6;
  std::uniform_real_distribution<double> uni(-1.0, 1.0);
  double worst = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    VecX delta(m.nv());
    for (int i = 0; i < m.nv(); ++i) delta[i] = uni(rng);

    GeneralizedState sp = s, sm = s;
    sp.v = delta;
    sm.v = -delta;
    sp = advance_pose(sp, eps);
    sm = advance_pose(sm, eps);
    sp.v = s.v;
    sm.v = s.v;

    const Placements pp = kinematics(m, sp);
    const Placements pm = kinematics(m, sm);
    VecX fd(12);
    for (int f = 0; f < 4; ++f)
      fd.segment<3>(3 * f) = (pp.foot_pos[f] - pm.foot_pos[f]) / (2 * eps);
    worst = std::max(worst, (fd - Jc * delta).lpNorm<Eigen::Infinity>());
  }
  CHECK(worst < 1e-5);
}

TEST_CASE("kinematics: single body CoM and feet symmetry of the quadruped") {
  const RobotModel single = RobotModel::from_file(oracles::kSingleBodyPath);
  GeneralizedState s = single.make_state();
  s.base_pos = Vec3(0.5, -1.0, 2.0);
  s.base_quat = Quat(Eigen::AngleAxisd(0.9, Vec3(0.3, -1, 0.2).normalized()));
  const Placements p = kinematics(single, s);
  const Vec3 expect =
      s.base_pos + s.base_quat.toRotationMatrix() * Vec3(0.01, -0.02, 0.03);
  CHECK((p.com - expect).norm() < 1e-14);

  const RobotModel quad = RobotModel::from_file(oracles::kQuadrupedPath);
  const Placements pq = kinematics(quad, quad.make_state());
  const Vec3 lf = pq.foot_pos[static_cast<int>(FootId::LF)];
  CHECK(lf.x() == doctest::Approx(0.347));
  CHECK(lf.y() == doctest::Approx(0.218));
  CHECK(lf.z() == doctest::Approx(-0.56));
  // mirror symmetry
  const Vec3 rf = pq.foot_pos[static_cast<int>(FootId::RF)];
  const Vec3 lh = pq.foot_pos[static_cast<int>(FootId::LH)];
  const Vec3 rh = pq.foot_pos[static_cast<int>(FootId::RH)];
  CHECK((rf - Vec3(lf.x(), -lf.y(), lf.z())).norm() < 1e-14);
  CHECK((lh - Vec3(-lf.x(), lf.y(), lf.z())).norm() < 1e-14);
  CHECK((rh - Vec3(-lf.x(), -lf.y(), lf.z())).norm() < 1e-14);
}

TEST_CASE("kinematics: CoM velocity matches finite differences") {
  const RobotModel m = RobotModel::from_file(oracles::kQuadrupedPath);
  std::mt19937_64 rng(19);
  for (int trial = 0; trial < 10; ++trial) {
    const GeneralizedState s = oracles::random_state(m, rng);
    const double delta = 1e-6;
    const Placements pp = kinematics(m, advance_pose(s, delta));
    const Placements pm = kinematics(m, advance_pose(s, -delta));
    const Vec3 fd = (pp.com - pm.com) / (2 * delta);
    const Placements p0 = kinematics(m, s);
    CHECK((fd - p0.com_vel).norm() < 1e-6);
  }
}
