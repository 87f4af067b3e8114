#include "loco/projection.hpp"

#include <Eigen/Cholesky>
#include <Eigen/LU>
#include <Eigen/SVD>

#include <cmath>

namespace loco {

MatX pseudo_inverse(const MatX& J, double sigma_tol) {
  if (J.rows() == 0 || J.cols() == 0) return MatX::Zero(J.cols(), J.rows());

  if (J.rows() <= J.cols()) {
    // Gram route for the common full-row-rank case.
    const MatX G = J * J.transpose();
    Eigen::LDLT<MatX> ldlt(G);
    if (ldlt.info() == Eigen::Success) {
      const VecX d = ldlt.vectorD();
      const double dmax = d.maxCoeff();
      if (dmax > 0.0 && d.minCoeff() > 1e-12 * dmax)
        return J.transpose() * ldlt.solve(MatX::Identity(G.rows(), G.cols()));
    }
  }

  Eigen::JacobiSVD<MatX> svd(J, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const VecX& sigma = svd.singularValues();
  const double cutoff = sigma.size() ? sigma_tol * sigma.maxCoeff() : 0.0;
  VecX inv = VecX::Zero(sigma.size());
  for (int i = 0; i < sigma.size(); ++i)
    inv[i] = sigma[i] > cutoff ? 1.0 / sigma[i] : 0.0;
  return svd.matrixV() * inv.asDiagonal() * svd.matrixU().transpose();
}

MatX projection_matrix(const MatX& Jc, double sigma_tol) {
  const int nv = static_cast<int>(Jc.cols());
  if (Jc.rows() == 0) return MatX::Identity(nv, nv);
  MatX P = MatX::Identity(nv, nv) - pseudo_inverse(Jc, sigma_tol) * Jc;
  // The projector is symmetric by construction; keep it exactly so.
  P = 0.5 * (P + P.transpose()).eval();
  return P;
}

ProjectedDynamics projected_dynamics(const MatX& M, const MatX& Jc,
                                     const MatX* P_prev, double dt,
                                     double sigma_tol, double cond_warn) {
  const int nv = static_cast<int>(M.rows());
  ProjectedDynamics out;
  out.Jc = Jc;
  out.P = projection_matrix(Jc, sigma_tol);
  if (P_prev && P_prev->rows() == nv && dt > 0.0) {
    out.P_dot = (out.P - *P_prev) / dt;
  } else {
    out.P_dot = MatX::Zero(nv, nv);
  }
  out.M_c = out.P * M + MatX::Identity(nv, nv) - out.P;

  Eigen::PartialPivLU<MatX> lu(out.M_c);
  const MatX Minv = lu.inverse();
  const double norm1 = out.M_c.cwiseAbs().colwise().sum().maxCoeff();
  const double inv1 = Minv.cwiseAbs().colwise().sum().maxCoeff();
  out.M_c_condition = norm1 * inv1;
  out.degraded = !(out.M_c_condition < cond_warn);
  return out;
}

ContactForceSolution constraint_space_torques(const ProjectedDynamics& dyn,
                                              const MatX& M, const VecX& h,
                                              const VecX& qdd_cmd,
                                              const VecX& tau_motion,
                                              const ConstraintQpConfig& cfg,
                                              qp::Workspace* ws) {
  const int nv = static_cast<int>(M.rows());
  const int na = nv - 6;
  const int k3 = static_cast<int>(dyn.Jc.rows());
  const int k = k3 / 3;
  if (k == 0) throw std::invalid_argument("constraint_space_torques: no contacts");

  const MatX Pc = MatX::Identity(nv, nv) - dyn.P;  // projector onto the
                                                   // constraint subspace
  VecX s_tau_motion = tau_motion;
  s_tau_motion.head<6>().setZero();
  const VecX rhs0 = Pc * (M * qdd_cmd + h - s_tau_motion);

  // Null basis of P S_a: actuated torques that leave the constraint-free
  // dynamics untouched (internal forces only).
  const MatX PSa = dyn.P.rightCols(na);
  Eigen::JacobiSVD<MatX> svd(PSa, Eigen::ComputeFullV);
  const VecX& sigma = svd.singularValues();
  const double cutoff =
      (sigma.size() ? sigma.maxCoeff() : 0.0) * 1e-8 + 1e-300;
  int rank = 0;
  for (int i = 0; i < sigma.size(); ++i) rank += sigma[i] > cutoff ? 1 : 0;
  const int d = na - rank;
  const MatX Z = svd.matrixV().rightCols(d);  // na x d, orthonormal

  const double mu_pyr = cfg.mu / std::sqrt(2.0);
  const double f_ref = cfg.weight_ref / k;

  qp::QpProblem p;
  const int nx = d + k3;
  p.H = MatX::Identity(nx, nx);
  p.H.topLeftCorner(d, d) *= cfg.xi_reg;
  p.g = VecX::Zero(nx);
  for (int f = 0; f < k; ++f) p.g[d + 3 * f + 2] = -f_ref;

  // Jc-projected constraint-space balance; Jc has full row rank for the
  // stances handled here, so these 3k rows are independent and equivalent
  // to the full balance restricted to range(Jc').
  p.Aeq = MatX::Zero(k3, nx);
  p.Aeq.leftCols(d) = dyn.Jc * (Pc.rightCols(na) * Z);
  p.Aeq.rightCols(k3) = dyn.Jc * dyn.Jc.transpose();
  p.beq = dyn.Jc * rhs0;

  // Per foot: unilateral + 4-face pyramid. Then symmetric torque limits.
  const int n_ineq = 5 * k + 2 * na;
  p.Aineq = MatX::Zero(n_ineq, nx);
  p.bineq = VecX::Zero(n_ineq);
  for (int f = 0; f < k; ++f) {
    const int lz = d + 3 * f + 2;
    const int lx = d + 3 * f;
    const int ly = d + 3 * f + 1;
    int r = 5 * f;
    p.Aineq(r, lz) = -1.0;                                // -lz <= 0
    p.Aineq(r + 1, lx) = 1.0;  p.Aineq(r + 1, lz) = -mu_pyr;
    p.Aineq(r + 2, lx) = -1.0; p.Aineq(r + 2, lz) = -mu_pyr;
    p.Aineq(r + 3, ly) = 1.0;  p.Aineq(r + 3, lz) = -mu_pyr;
    p.Aineq(r + 4, ly) = -1.0; p.Aineq(r + 4, lz) = -mu_pyr;
  }
  for (int j = 0; j < na; ++j) {
    const double lim = cfg.tau_limits.size() == na ? cfg.tau_limits[j] : 1e9;
    const double tm = s_tau_motion[6 + j];
    p.Aineq.row(5 * k + 2 * j).segment(0, d) = Z.row(j);
    p.bineq[5 * k + 2 * j] = lim - tm;
    p.Aineq.row(5 * k + 2 * j + 1).segment(0, d) = -Z.row(j);
    p.bineq[5 * k + 2 * j + 1] = lim + tm;
  }

  const qp::QpSolution sol = qp::solve_active_set(p, nullptr, ws);

  ContactForceSolution out;
  out.lambda = sol.x.tail(k3);
  out.tau_constraint = VecX::Zero(nv);
  out.tau_constraint.tail(na) = Z * sol.x.head(d);
  out.feasible = sol.status == qp::QpStatus::optimal;
  out.violation = sol.max_violation;
  return out;
}

}  // namespace loco
