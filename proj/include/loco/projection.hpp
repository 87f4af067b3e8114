#pragma once

#include "loco/qp.hpp"
#include "loco/types.hpp"

namespace loco {

// Moore-Penrose pseudo-inverse. Full-row-rank inputs take the Gram route;
// anything rank-deficient falls back to SVD with relative truncation at
// sigma_tol * sigma_max.
MatX pseudo_inverse(const MatX& J, double sigma_tol = 1e-6);

// Orthogonal projector onto the contact-constraint null space, I - Jc+ Jc.
MatX projection_matrix(const MatX& Jc, double sigma_tol = 1e-6);

struct ProjectedDynamics {
  MatX P;       // nv x nv projector
  MatX P_dot;   // backward-difference estimate, zero on stance change
  MatX M_c;     // P M + I - P
  MatX Jc;      // stacked contact Jacobian the projector was built from
  double M_c_condition = 1.0;
  bool degraded = false;  // condition number above the warn threshold
};

ProjectedDynamics projected_dynamics(const MatX& M, const MatX& Jc,
                                     const MatX* P_prev, double dt,
                                     double sigma_tol = 1e-6,
                                     double cond_warn = 1e8);

struct ContactForceSolution {
  VecX lambda;          // 3k stacked contact forces
  VecX tau_constraint;  // nv, base rows zero, orthogonal to the motion space
  bool feasible = true;
  double violation = 0.0;  // least-violation level when infeasible
};

struct ConstraintQpConfig {
  double mu = 0.6;          // friction coefficient (pyramid uses mu/sqrt(2))
  VecX tau_limits;          // per actuated joint
  double weight_ref = 0.0;  // total vertical force shared equally per foot
  double xi_reg = 1e-4;     // regularization on the null-space coordinates
};

// Resolves contact forces and the constraint-space torque adjustment from
// the constraint-space balance, given the commanded accelerations and the
// motion-space torque. The torque adjustment is parameterized in the null
// space of P S, so it cannot disturb the constraint-free dynamics; its only
// authority is internal-force redistribution (e.g. the squeeze along a trot
// support line). Friction pyramid, unilaterality and torque limits are hard
// constraints; infeasible cycles return the least-violation point, flagged.
ContactForceSolution constraint_space_torques(const ProjectedDynamics& dyn,
                                              const MatX& M, const VecX& h,
                                              const VecX& qdd_cmd,
                                              const VecX& tau_motion,
                                              const ConstraintQpConfig& cfg,
                                              qp::Workspace* ws = nullptr);

}  // namespace loco
