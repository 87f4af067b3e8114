// Microbenchmark of the per-cycle kernels: dynamics quantities, projection,
// the finite-difference linearization (serial vs OpenMP) and the CARE solve
// (cold vs warm-started).
#include <chrono>
#include <cstdio>
#include <vector>

#include "loco/lqr.hpp"
#include "loco/runner.hpp"

using namespace loco;
using Clock = std::chrono::steady_clock;

namespace {

double median_ms(std::vector<double>& v) {
  std::sort(v.begin(), v.end());
  return 1e3 * v[v.size() / 2];
}

template <typename F>
double time_ms(F&& f, int reps) {
  std::vector<double> t;
  t.reserve(reps);
  for (int i = 0; i < reps; ++i) {
    auto t0 = Clock::now();
    f();
    t.push_back(std::chrono::duration<double>(Clock::now() - t0).count());
  }
  return median_ms(t);
}

}  // namespace

int main(int argc, char** argv) {
  const std::string model_path = argc > 1 ? argv[1] : "models/quadruped.json";
  RobotModel model = RobotModel::from_file(model_path);

  GeneralizedState s = model.make_state();
  s.base_pos = Vec3(0, 0, 0.462);
  for (int f = 0; f < kNumFeet; ++f) {
    const auto cols = leg_joints(model, static_cast<FootId>(f));
    const bool front = f < 2;
    s.q_j[cols[1]] = front ? 0.6 : -0.6;
    s.q_j[cols[2]] = front ? -1.2 : 1.2;
  }
  const Vec3 gravity(0, 0, -9.81);
  const ContactSet trot = ContactSet::pair(FootId::LF, FootId::RH);

  Dynamics dyn(model);
  std::printf("model %s: n=%d, mass=%.2f kg\n", model.name().c_str(),
              model.n(), model.total_mass());
  std::printf("machine: %s\n\n", machine_info().c_str());

  std::printf("%-34s %10.4f ms\n", "dynamics update (M, h, kinematics)",
              time_ms([&] { dyn.update(s, gravity); }, 500));

  dyn.update(s, gravity);
  MatX Jc;
  std::printf("%-34s %10.4f ms\n", "contact jacobian + projector",
              time_ms(
                  [&] {
                    dyn.contact_jacobian(trot, Jc);
                    volatile double x = projection_matrix(Jc)(0, 0);
                    (void)x;
                  },
                  500));

  dyn.contact_jacobian(trot, Jc);
  const ProjectedDynamics proj =
      projected_dynamics(dyn.mass_matrix(), Jc, nullptr, 0.0025);
  const VecX tau0 = gravity_compensation(dyn, s, proj, gravity);

  Linearizer lin(model);
  LinearizedBase lb;
  std::printf("%-34s %10.4f ms\n", "linearize (serial)",
              time_ms([&] { lb = lin.run(s, tau0, trot, gravity, 1e-5, false); },
                      100));
  std::printf("%-34s %10.4f ms\n", "linearize (openmp)",
              time_ms([&] { lb = lin.run(s, tau0, trot, gravity, 1e-5, true); },
                      100));

  VecX q_diag = VecX::Constant(12, 1500.0);
  q_diag.tail<6>().setConstant(1.0);
  const MatX Q = q_diag.asDiagonal();
  const MatX R = VecX::Constant(model.nv(), 0.03).asDiagonal();

  CareResult cold;
  std::printf("%-34s %10.4f ms\n", "care (cold)",
              time_ms([&] { cold = solve_care(lb.A, lb.B, Q, R); }, 50));
  std::printf("%-34s %10.4f ms\n", "care (warm)",
              time_ms([&] { solve_care(lb.A, lb.B, Q, R, &cold.P); }, 50));
  std::printf("\ncare residual %.3e in %d iterations\n", cold.residual,
              cold.iterations);
  return 0;
}
