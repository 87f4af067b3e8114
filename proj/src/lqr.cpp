#include "loco/lqr.hpp"

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#ifdef _OPENMP
#include <omp.h>
#endif

#include <cmath>

namespace loco {

BaseState BaseState::from_state(const GeneralizedState& s) {
  BaseState x;
  x.pos = s.base_pos;
  x.rpy = euler_zyx_from_rotation(s.base_quat.toRotationMatrix());
  x.v_lin = s.v.head<3>();
  x.w_body = s.v.segment<3>(3);
  return x;
}

Eigen::Matrix<double, 12, 1> base_state_error(const BaseState& desired,
                                              const BaseState& measured) {
  Eigen::Matrix<double, 12, 1> e;
  e.segment<3>(0) = desired.pos - measured.pos;
  for (int i = 0; i < 3; ++i)
    e[3 + i] = wrap_to_pi(desired.rpy[i] - measured.rpy[i]);
  e.segment<3>(6) = desired.v_lin - measured.v_lin;
  e.segment<3>(9) = desired.w_body - measured.w_body;
  return e;
}

VecX LqrWeights::r_diag(int nv, const std::vector<int>& swing_joints) const {
  VecX r = VecX::Constant(nv, r_stance);
  r.head<6>().setConstant(r_base);
  for (int j : swing_joints) r[6 + j] = r_stance * swing_scale;
  return r;
}

// ---------------------------------------------------------------------------
// CARE
// ---------------------------------------------------------------------------

MatX solve_lyapunov(const MatX& A, const MatX& C) {
  const int n = static_cast<int>(A.rows());
  const int m = n * (n + 1) / 2;
  auto idx = [n](int i, int j) {  // i <= j
    return i * n - i * (i - 1) / 2 + (j - i);
  };
  MatX L = MatX::Zero(m, m);
  VecX rhs(m);
  // Row (i,j): d/dt of P_ij under op(P) = A'P + PA, expressed on vech(P).
  // (A'P + PA)_ij = sum_k A_ki P_kj + P_ik A_kj.
  for (int i = 0; i < n; ++i) {
    for (int j = i; j < n; ++j) {
      const int r = idx(i, j);
      for (int k = 0; k < n; ++k) {
        // A_ki P_kj term
        const int a = std::min(k, j), b = std::max(k, j);
        L(r, idx(a, b)) += A(k, i);
        // P_ik A_kj term
        const int c = std::min(i, k), d = std::max(i, k);
        L(r, idx(c, d)) += A(k, j);
      }
      rhs[r] = -C(i, j);
    }
  }
  const VecX v = L.partialPivLu().solve(rhs);
  MatX P(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = i; j < n; ++j) P(i, j) = P(j, i) = v[idx(i, j)];
  return P;
}

double max_real_eigenvalue(const MatX& A) {
  Eigen::EigenSolver<MatX> es(A, /*computeEigenvectors=*/false);
  return es.eigenvalues().real().maxCoeff();
}

namespace {

double care_residual(const MatX& A, const MatX& B, const MatX& Q,
                     const MatX& Rinv_Bt, const MatX& P) {
  const MatX res = A.transpose() * P + P * A -
                   P * B * (Rinv_Bt * P) + Q;
  return res.norm() / std::max(1.0, Q.norm());
}

// Bass construction of a stabilizing gain: shift A beyond its spectral
// abscissa, solve the shifted Lyapunov equation for W and use K0 = R^-1 B' W^-1.
bool stabilizing_gain(const MatX& A, const MatX& B, const MatX& Rinv,
                      MatX& K0) {
  const int n = static_cast<int>(A.rows());
  double beta = A.norm() + 0.5;
  for (int attempt = 0; attempt < 4; ++attempt, beta *= 2.0) {
    // (A + beta I) W + W (A + beta I)' = 2 B B'
    const MatX As = (A + beta * MatX::Identity(n, n)).transpose();
    const MatX W = solve_lyapunov(As, MatX(-2.0 * B * B.transpose()));
    const MatX W_reg =
        W + 1e-10 * std::max(1.0, W.norm()) * MatX::Identity(n, n);
    K0 = Rinv * B.transpose() * W_reg.ldlt().solve(MatX::Identity(n, n));
    if (is_hurwitz(A - B * K0)) return true;
  }
  return false;
}

}  // namespace

CareResult solve_care(const MatX& A, const MatX& B, const MatX& Q,
                      const MatX& R, const MatX* warm_P,
                      const CareOptions& opts) {
  CareResult out;
  const int n = static_cast<int>(A.rows());
  const MatX Rinv = R.ldlt().solve(MatX::Identity(R.rows(), R.cols()));
  const MatX Rinv_Bt = Rinv * B.transpose();

  MatX K;
  bool have_start = false;
  if (warm_P && warm_P->rows() == n) {
    K = Rinv_Bt * (*warm_P);
    have_start = is_hurwitz(A - B * K);
  }
  if (!have_start) have_start = stabilizing_gain(A, B, Rinv, K);
  if (!have_start) {
    out.ok = false;
    out.residual = std::numeric_limits<double>::infinity();
    return out;
  }

  MatX P = MatX::Zero(n, n);
  double res = std::numeric_limits<double>::infinity();
  for (int it = 1; it <= opts.max_iter; ++it) {
    const MatX Acl = A - B * K;
    P = solve_lyapunov(Acl, MatX(Q + K.transpose() * R * K));
    K = Rinv_Bt * P;
    res = care_residual(A, B, Q, Rinv_Bt, P);
    out.residual_history.push_back(res);
    out.iterations = it;
    if (res < opts.tol) break;
  }
  out.P = 0.5 * (P + P.transpose());
  out.K = Rinv_Bt * out.P;
  out.residual = res;
  out.ok = res < opts.tol && is_hurwitz(A - B * out.K);
  return out;
}

// ---------------------------------------------------------------------------
// Controller pieces
// ---------------------------------------------------------------------------

VecX gravity_compensation(const Dynamics& dyn_at_state,
                          const GeneralizedState& s,
                          const ProjectedDynamics& proj, const Vec3& gravity,
                          const std::vector<int>* active_joints) {
  const int nv = dyn_at_state.model().nv();
  const int na = nv - 6;

  GeneralizedState rest = s;
  rest.v.setZero();
  Dynamics statics(dyn_at_state.model());
  statics.update(rest, gravity);
  const VecX h_grav = statics.bias();

  std::vector<int> all;
  if (!active_joints) {
    all.resize(na);
    for (int i = 0; i < na; ++i) all[i] = i;
  }
  const std::vector<int>& act = active_joints ? *active_joints : all;

  MatX PSa(nv, act.size());
  for (size_t c = 0; c < act.size(); ++c) PSa.col(c) = proj.P.col(6 + act[c]);
  const VecX target = proj.P * h_grav;
  const VecX tau_a =
      PSa.completeOrthogonalDecomposition().solve(target);

  VecX tau0 = VecX::Zero(nv);
  for (size_t c = 0; c < act.size(); ++c) tau0[6 + act[c]] = tau_a[c];
  return tau0;
}

Vec6 base_forward_dynamics(const ProjectedDynamics& proj, const VecX& h,
                           const VecX& v, const VecX& tau) {
  VecX s_tau = tau;
  s_tau.head<6>().setZero();
  const VecX rhs = -proj.P * h + proj.P_dot * v + proj.P * s_tau;
  const VecX qdd = proj.M_c.partialPivLu().solve(rhs);
  return qdd.head<6>();
}

// ---------------------------------------------------------------------------
// Linearizer
// ---------------------------------------------------------------------------

namespace {

// One forward-dynamics evaluation of the projected base dynamics at an
// arbitrary base perturbation. P_dot is the directional derivative of P
// along the (perturbed) state's own flow, matching the running controller's
// backward-difference estimate in the smooth limit.
struct BaseDynEval {
  Dynamics dyn;
  Dynamics dyn_adv;
  explicit BaseDynEval(const RobotModel& model) : dyn(model), dyn_adv(model) {}

  Vec6 eval(const GeneralizedState& s, const VecX& tau,
            const ContactSet& contacts, const Vec3& gravity) {
    constexpr double kFlowDelta = 1e-6;
    dyn.update(s, gravity);
    const MatX Jc = dyn.contact_jacobian(contacts);
    const MatX P = projection_matrix(Jc);

    GeneralizedState s_adv = s;
    s_adv.base_pos += kFlowDelta * s.v.head<3>();
    s_adv.base_quat =
        (s.base_quat * quat_exp(kFlowDelta * s.v.segment<3>(3))).normalized();
    s_adv.q_j += kFlowDelta * s.v.tail(s.n());
    dyn_adv.update_kinematics(s_adv);
    const MatX Jc_adv = dyn_adv.contact_jacobian(contacts);
    const MatX P_adv = projection_matrix(Jc_adv);

    const int nv = static_cast<int>(P.rows());
    const MatX M_c = P * dyn.mass_matrix() + MatX::Identity(nv, nv) - P;
    VecX s_tau = tau;
    s_tau.head<6>().setZero();
    const VecX rhs = -P * dyn.bias() + ((P_adv - P) / kFlowDelta) * s.v +
                     P * s_tau;
    const VecX qdd = M_c.partialPivLu().solve(rhs);
    return qdd.head<6>();
  }
};

GeneralizedState perturb_base(const GeneralizedState& s0, const Vec3& rpy0,
                              int coord, double delta) {
  GeneralizedState s = s0;
  if (coord < 3) {
    s.base_pos[coord] += delta;
  } else if (coord < 6) {
    Vec3 rpy = rpy0;
    rpy[coord - 3] += delta;
    s.base_quat = Quat(rotation_from_euler_zyx(rpy)).normalized();
  } else if (coord < 9) {
    s.v[coord - 6] += delta;
  } else {
    s.v[coord - 6] += delta;  // angular block shares the velocity layout
  }
  return s;
}

}  // namespace

struct Linearizer::Impl {
  const RobotModel* model;
  std::vector<std::unique_ptr<BaseDynEval>> evals;
};

Linearizer::Linearizer(const RobotModel& model, int threads)
    : impl_(new Impl) {
  impl_->model = &model;
  int nt = threads;
#ifdef _OPENMP
  if (nt <= 0) nt = omp_get_max_threads();
#else
  if (nt <= 0) nt = 1;
#endif
  for (int i = 0; i < nt; ++i)
    impl_->evals.emplace_back(new BaseDynEval(model));
}

Linearizer::~Linearizer() = default;

LinearizedBase Linearizer::run(const GeneralizedState& s0, const VecX& tau0,
                               const ContactSet& contacts, const Vec3& gravity,
                               double eps, bool parallel) {
  const int nv = impl_->model->nv();
  LinearizedBase lin;
  lin.A = MatX::Zero(12, 12);
  lin.A.topRightCorner(6, 6).setIdentity();
  lin.B = MatX::Zero(12, nv);

  const Vec3 rpy0 =
      euler_zyx_from_rotation(s0.base_quat.toRotationMatrix());

  auto column = [&](int j, BaseDynEval& ev) {
    const GeneralizedState sp = perturb_base(s0, rpy0, j, eps);
    const GeneralizedState sm = perturb_base(s0, rpy0, j, -eps);
    const Vec6 fp = ev.eval(sp, tau0, contacts, gravity);
    const Vec6 fm = ev.eval(sm, tau0, contacts, gravity);
    lin.A.block<6, 1>(6, j) = (fp - fm) / (2.0 * eps);
  };

#ifdef _OPENMP
  if (parallel && impl_->evals.size() > 1) {
#pragma omp parallel for schedule(static) \
    num_threads(static_cast<int>(impl_->evals.size()))
    for (int j = 0; j < 12; ++j) column(j, *impl_->evals[omp_get_thread_num()]);
  } else {
    for (int j = 0; j < 12; ++j) column(j, *impl_->evals[0]);
  }
#else
  (void)parallel;
  for (int j = 0; j < 12; ++j) column(j, *impl_->evals[0]);
#endif

  // B is exact: the dynamics are affine in tau, B2 = J_b M_c^-1 P S.
  BaseDynEval& ev = *impl_->evals[0];
  ev.dyn.update(s0, gravity);
  const MatX Jc = ev.dyn.contact_jacobian(contacts);
  const MatX P = projection_matrix(Jc);
  MatX PS = P;
  PS.leftCols(6).setZero();
  const MatX M_c =
      P * ev.dyn.mass_matrix() + MatX::Identity(nv, nv) - P;
  lin.B.bottomRows(6) = M_c.partialPivLu().solve(PS).topRows(6);
  return lin;
}

LinearizedBase linearize_base(const RobotModel& model,
                              const GeneralizedState& s0, const VecX& tau0,
                              const ContactSet& contacts, const Vec3& gravity,
                              double eps) {
  Linearizer lin(model, 1);
  return lin.run(s0, tau0, contacts, gravity, eps, false);
}

VecX lqr_torque(const MatX& K, const BaseState& X_des, const BaseState& X,
                const VecX& tau0) {
  return K * base_state_error(X_des, X) + tau0;
}

// ---------------------------------------------------------------------------
// Swing impedance
// ---------------------------------------------------------------------------

SwingImpedance::SwingImpedance(const RobotModel& model) : scratch_(model) {}

VecX SwingImpedance::compute(const Dynamics& dyn, const GeneralizedState& s,
                             const VecX& h_gravity,
                             const std::vector<SwingTask>& tasks,
                             const SwingGains& gains) {
  const int nv = dyn.model().nv();
  VecX tau = VecX::Zero(nv);
  if (tasks.empty()) return tau;

  // Leg Jacobian rate by a small kinematic advance along the joint flow.
  constexpr double kDelta = 1e-6;
  GeneralizedState s_adv = s;
  s_adv.q_j += kDelta * s.v.tail(s.n());
  scratch_.update_kinematics(s_adv);

  for (const SwingTask& task : tasks) {
    Mat3 J, J_adv;
    std::array<int, 3> cols{};
    dyn.leg_jacobian(task.foot, J, cols);
    scratch_.leg_jacobian(task.foot, J_adv, cols);
    const Mat3 Jdot = (J_adv - J) / kDelta;

    const Vec3 x = dyn.foot_position(task.foot);
    const Vec3 xd = dyn.foot_velocity(task.foot);
    const Vec3 F =
        gains.kp * (task.ref.pos - x) + gains.kd * (task.ref.vel - xd);

    Vec3 qd_leg;
    for (int i = 0; i < 3; ++i) qd_leg[i] = s.v[6 + cols[i]];

    // Feedforward through the leg-local dynamics: joint accelerations that
    // realize the reference foot acceleration, plus the leg gravity load.
    Eigen::PartialPivLU<Mat3> lu(J);
    Vec3 qdd_ref;
    const Vec3 a_task = task.ref.acc - Jdot * qd_leg;
    if (std::abs(lu.determinant()) > 1e-8) {
      qdd_ref = lu.solve(a_task);
    } else {
      qdd_ref = (J.transpose() * J + 1e-6 * Mat3::Identity())
                    .ldlt()
                    .solve(J.transpose() * a_task);
    }
    Mat3 M_leg;
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j)
        M_leg(i, j) = dyn.mass_matrix()(6 + cols[i], 6 + cols[j]);

    const Vec3 tau_leg = J.transpose() * F + M_leg * qdd_ref;
    for (int i = 0; i < 3; ++i)
      tau[6 + cols[i]] += tau_leg[i] + h_gravity[6 + cols[i]];
  }
  return tau;
}

}  // namespace loco
