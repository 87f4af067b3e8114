#pragma once

#include <memory>
#include <vector>

#include "loco/gait.hpp"
#include "loco/model.hpp"
#include "loco/projection.hpp"

namespace loco {

// 12-state base description: position (frame I), Z-Y-X Euler angles stored
// as (roll, pitch, yaw), linear velocity (frame I), angular velocity
// (frame B).
struct BaseState {
  Vec3 pos = Vec3::Zero();
  Vec3 rpy = Vec3::Zero();
  Vec3 v_lin = Vec3::Zero();
  Vec3 w_body = Vec3::Zero();

  Eigen::Matrix<double, 12, 1> vec() const {
    Eigen::Matrix<double, 12, 1> x;
    x << pos, rpy, v_lin, w_body;
    return x;
  }
  static BaseState from_state(const GeneralizedState& s);
};

// Error X_des - X with the angle components wrapped to (-pi, pi].
Eigen::Matrix<double, 12, 1> base_state_error(const BaseState& desired,
                                              const BaseState& measured);

struct LinearizedBase {
  MatX A;  // 12 x 12, top rows [0 I]
  MatX B;  // 12 x (6+n), top 6 rows zero
};

struct LqrWeights {
  VecX q_diag;          // 12 state weights
  double r_base = 0.03;
  double r_stance = 0.03;
  double swing_scale = 10.0;  // multiplier on swing-leg R entries

  // Builds the (6+n) input weight diagonal for the given swing joints.
  VecX r_diag(int nv, const std::vector<int>& swing_joints) const;
};

// --- CARE -------------------------------------------------------------

// Solves A'P + PA + C = 0 through the symmetric vectorization (78 unknowns
// at n = 12); exposed for tests.
MatX solve_lyapunov(const MatX& A, const MatX& C);

struct CareOptions {
  int max_iter = 50;
  double tol = 1e-8;  // relative Frobenius residual
};

struct CareResult {
  MatX P;
  MatX K;
  bool ok = false;
  int iterations = 0;
  double residual = 0.0;
  std::vector<double> residual_history;
};

// Infinite-horizon CARE via Newton-Kleinman, warm-started from a previous
// solution when provided and cold-started from a Lyapunov-based stabilizing
// gain otherwise.
CareResult solve_care(const MatX& A, const MatX& B, const MatX& Q,
                      const MatX& R, const MatX* warm_P = nullptr,
                      const CareOptions& opts = {});

double max_real_eigenvalue(const MatX& A);
inline bool is_hurwitz(const MatX& A) { return max_real_eigenvalue(A) < 0.0; }

// --- controller pieces --------------------------------------------------

// Static torques reproducing the gravity term in the constraint-free
// subspace, least squares over the listed actuated joints (all when null),
// minimum-norm on rank deficiency. Base rows are zero.
VecX gravity_compensation(const Dynamics& dyn_at_state,
                          const GeneralizedState& s,
                          const ProjectedDynamics& proj, const Vec3& gravity,
                          const std::vector<int>* active_joints = nullptr);

// xdd_b = J_b M_c^-1 (-P h + P_dot qd + P S tau).
Vec6 base_forward_dynamics(const ProjectedDynamics& proj, const VecX& h,
                           const VecX& v, const VecX& tau);

// Per-cycle linearization of the projected base dynamics: A21/A22 by central
// differences over the 12 base coordinates (Euler perturbations applied
// through an exact Euler-to-rotation rebuild), B analytic since the dynamics
// are affine in tau. The 12 difference columns are independent, so the
// parallel path distributes them over OpenMP threads and is bit-identical to
// the serial one.
class Linearizer {
 public:
  explicit Linearizer(const RobotModel& model, int threads = 0);
  ~Linearizer();

  LinearizedBase run(const GeneralizedState& s0, const VecX& tau0,
                     const ContactSet& contacts, const Vec3& gravity,
                     double eps = 1e-5, bool parallel = false);

  Linearizer(const Linearizer&) = delete;
  Linearizer& operator=(const Linearizer&) = delete;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

LinearizedBase linearize_base(const RobotModel& model,
                              const GeneralizedState& s0, const VecX& tau0,
                              const ContactSet& contacts, const Vec3& gravity,
                              double eps = 1e-5);

// tau = K (X_des - X) + tau0, with wrapped angle errors.
VecX lqr_torque(const MatX& K, const BaseState& X_des, const BaseState& X,
                const VecX& tau0);

struct SwingGains {
  double kp = 1500.0;
  double kd = 60.0;
};

struct SwingTask {
  FootId foot;
  SwingReference ref;
};

// Cartesian impedance plus leg-local inverse-dynamics feedforward for the
// swing legs. Returns a full (6+n) torque vector (base rows zero).
class SwingImpedance {
 public:
  explicit SwingImpedance(const RobotModel& model);
  VecX compute(const Dynamics& dyn, const GeneralizedState& s,
               const VecX& h_gravity, const std::vector<SwingTask>& tasks,
               const SwingGains& gains);

 private:
  Dynamics scratch_;
};

}  // namespace loco
