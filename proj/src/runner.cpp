#include "loco/runner.hpp"

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdio>
#include <deque>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <random>
#include <thread>

#include <json.hpp>

namespace loco {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

double percentile(std::vector<double> v, double p) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const double idx = p * (v.size() - 1);
  const size_t lo = static_cast<size_t>(idx);
  const size_t hi = std::min(lo + 1, v.size() - 1);
  const double w = idx - lo;
  return v[lo] * (1 - w) + v[hi] * w;
}

std::array<double, 3> percentiles_ms(const std::vector<double>& v) {
  return {1e3 * percentile(v, 0.50), 1e3 * percentile(v, 0.95),
          1e3 * percentile(v, 0.99)};
}

// Bounded queue draining to a file on its own thread; the control loop is
// never blocked. Overflow drops lines and counts them.
class LogWriter {
 public:
  LogWriter(const std::string& path, size_t capacity = 1 << 15)
      : out_(path), cap_(capacity) {
    worker_ = std::thread([this] { this->drain(); });
  }
  ~LogWriter() { close(); }

  void push(std::string&& line) {
    {
      std::lock_guard<std::mutex> lk(mu_);
      if (queue_.size() >= cap_) {
        ++dropped_;
        return;
      }
      queue_.push_back(std::move(line));
    }
    cv_.notify_one();
  }

  void close() {
    {
      std::lock_guard<std::mutex> lk(mu_);
      if (done_) return;
      done_ = true;
    }
    cv_.notify_one();
    if (worker_.joinable()) worker_.join();
    out_.flush();
  }

  uint64_t dropped() const { return dropped_; }

 private:
  void drain() {
    std::unique_lock<std::mutex> lk(mu_);
    for (;;) {
      cv_.wait(lk, [this] { return done_ || !queue_.empty(); });
      while (!queue_.empty()) {
        std::string line = std::move(queue_.front());
        queue_.pop_front();
        lk.unlock();
        out_ << line;
        lk.lock();
      }
      if (done_) return;
    }
  }

  std::ofstream out_;
  std::deque<std::string> queue_;
  std::mutex mu_;
  std::condition_variable cv_;
  std::thread worker_;
  bool done_ = false;
  std::atomic<uint64_t> dropped_{0};
  size_t cap_;
};

struct GainProduct {
  MatX K, P_ric, A, B;
  double residual = 0.0;
  int iterations = 0;
  bool ok = false;
  double closed_loop_max_re = -1.0;  // filled when auditing
};

}  // namespace

// ---------------------------------------------------------------------------
// Control pipeline
// ---------------------------------------------------------------------------

struct TickResult {
  VecX tau;
  Vec3 com = Vec3::Zero(), com_vel = Vec3::Zero();
  bool touchdown = false;
  Vec2 p_star = Vec2::Zero(), zmp = Vec2::Zero();
  BaseState X, X_des;
  bool qp_infeasible = false;
  bool solver_fault = false;
  VecX lambda_full;
  const GainProduct* gains = nullptr;
  const MatX* P = nullptr;
  double t_plan = 0, t_refs = 0, t_proj = 0, t_lin = 0, t_care = 0, t_qp = 0;
  double total() const {
    return t_plan + t_refs + t_proj + t_lin + t_care + t_qp;
  }
};

class ControlPipeline {
 public:
  ControlPipeline(const Scenario& sc, const RobotModel& model, bool sync,
                  bool audit)
      : sc_(sc),
        model_(model),
        sync_(sync),
        audit_(audit),
        gravity_(0, 0, -sc.planner.g),
        lipm_(LipmParams::from(sc.planner.z_com, sc.planner.g)),
        dyn_(model),
        statics_(model),
        linearizer_(model),
        swing_ctrl_(model),
        gait_(make_gait_config(sc), initial_feet(model, sc)) {
    weights_.q_diag = VecX::Constant(12, sc.controller.q_pos);
    weights_.q_diag.tail<6>().setConstant(sc.controller.q_vel);
    weights_.r_base = sc.controller.r_base;
    weights_.r_stance = sc.controller.r_base;
    weights_.swing_scale = sc.controller.swing_scale;
    qp_cfg_.mu = sc.projection.mu;
    qp_cfg_.tau_limits = model.torque_limits();
    qp_cfg_.weight_ref = model.total_mass() * sc.planner.g;
    if (!sync_) {
      worker_ = std::thread([this] { this->worker_loop(); });
    }
  }

  ~ControlPipeline() {
    if (!sync_) {
      {
        std::lock_guard<std::mutex> lk(mu_);
        stop_ = true;
      }
      cv_job_.notify_one();
      if (worker_.joinable()) worker_.join();
    }
  }

  // Re-anchors the gait engine to the actual simulator feet (used once the
  // initial state is known; the constructor placement uses the model pose).
  void reset_gait(const std::array<Vec3, kNumFeet>& feet) {
    gait_ = GaitEngine(make_gait_config(sc_), feet);
  }

  const GaitEngine& gait() const { return gait_; }
  int care_fallbacks() const { return care_fallbacks_; }
  int qp_infeasible_count() const { return qp_infeasible_count_; }

  TickResult tick(const GeneralizedState& estimate, const UserCommand& cmd) {
    const double dt = sc_.control_dt;
    const int nv = model_.nv();
    TickResult out;

    dyn_.update(estimate, gravity_);
    std::array<Vec3, kNumFeet> feet, feet_vel, hips;
    for (int f = 0; f < kNumFeet; ++f) {
      feet[f] = dyn_.foot_position(static_cast<FootId>(f));
      feet_vel[f] = dyn_.foot_velocity(static_cast<FootId>(f));
      hips[f] = dyn_.hip_position(static_cast<FootId>(f));
    }
    out.com = dyn_.com();
    out.com_vel = dyn_.com_velocity();

    out.touchdown = gait_.advance(dt, feet);
    if (out.touchdown) have_P_prev_ = false;
    gait_.accumulate_steering(cmd.omega_z, dt);
    const double heading = gait_.steering();

    // --- plan: per-axis touchdown prediction + ZMP program
    auto t0 = Clock::now();
    const Vec2 zmp = gait_.current_zmp();
    const AxisState x_axis{out.com.x(), out.com_vel.x()};
    const AxisState y_axis{out.com.y(), out.com_vel.y()};
    const double t_rem = gait_.remaining_swing_time();
    const Vec2 v_des_world =
        Eigen::Rotation2Dd(heading) * Vec2(cmd.vx, cmd.vy);
    MpcConfig mpc = MpcConfig::uniform(sc_.planner.N, sc_.planner.T_s,
                                       sc_.planner.Q, sc_.planner.R);
    mpc.t0 = std::min(t_rem, sc_.planner.T_s);
    mpc.p0 = zmp.x();
    mpc.v_des = v_des_world.x();
    const AxisState xtd = predict_touchdown_state(x_axis, zmp.x(), mpc.t0, lipm_);
    const ZmpPlan plan_x = plan_footsteps(xtd, mpc, lipm_);
    mpc.p0 = zmp.y();
    mpc.v_des = v_des_world.y();
    const AxisState ytd = predict_touchdown_state(y_axis, zmp.y(), mpc.t0, lipm_);
    const ZmpPlan plan_y = plan_footsteps(ytd, mpc, lipm_);
    out.p_star = Vec2(plan_x.p_star[0], plan_y.p_star[0]);
    out.zmp = zmp;
    out.t_plan = seconds_since(t0);

    // --- references: footholds, swing splines, CoM rollout
    t0 = Clock::now();
    gait_.update_targets(out.p_star, feet, hips);
    const auto swing_refs = gait_.swing_refs(dt);
    const ComReference com_ref = com_reference(x_axis, y_axis, zmp, lipm_, dt);

    out.X = BaseState::from_state(estimate);
    out.X_des.pos = Vec3(estimate.base_pos.x() + (com_ref.pos.x() - out.com.x()),
                         estimate.base_pos.y() + (com_ref.pos.y() - out.com.y()),
                         gait_.mean_support_height(feet) + sc_.gait.base_height);
    out.X_des.rpy = Vec3(0, 0, heading);
    out.X_des.v_lin = Vec3(com_ref.vel.x(), com_ref.vel.y(), 0);
    out.X_des.w_body = Vec3(0, 0, cmd.omega_z);
    out.t_refs = seconds_since(t0);

    // --- projection quantities
    t0 = Clock::now();
    ContactSet contacts;
    for (FootId f : gait_.stance_pair())
      contacts.active[static_cast<int>(f)] = true;
    dyn_.contact_jacobian(contacts, Jc_);
    proj_ = projected_dynamics(dyn_.mass_matrix(), Jc_,
                               have_P_prev_ ? &P_prev_ : nullptr, dt,
                               sc_.projection.sigma_tol);
    P_prev_ = proj_.P;
    have_P_prev_ = true;

    GeneralizedState rest = estimate;
    rest.v.setZero();
    statics_.update(rest, gravity_);
    const VecX h_grav = statics_.bias();

    std::vector<int> stance_joints;
    for (FootId f : gait_.stance_pair())
      for (int c : leg_joints(model_, f)) stance_joints.push_back(c);
    std::sort(stance_joints.begin(), stance_joints.end());
    const VecX tau0 =
        gravity_compensation(dyn_, estimate, proj_, gravity_, &stance_joints);
    out.t_proj = seconds_since(t0);

    // --- base controller (gains computed from the previous tick's state)
    if (!initialized_) {
      GainProduct g = compute_gains(estimate, gait_.stance(), tau0);
      if (!g.ok) {
        care_fail_streak_ = 100;
        if (g.K.size() == 0) g.K = MatX::Zero(nv, 12);
      } else {
        warm_P_ = g.P_ric;
        have_warm_ = true;
      }
      current_ = std::move(g);
      initialized_ = true;
    } else if (!sync_) {
      wait_result();
    }

    VecX tau_base;
    if (sc_.controller.type == ControllerSpec::Type::Lqr) {
      tau_base = lqr_torque(current_.K, out.X_des, out.X, tau0);
    } else {
      tau_base = pd_torque(out.X_des, out.X, feet, tau0);
    }

    std::vector<SwingTask> tasks;
    const auto sw = gait_.swing_pair();
    for (int i = 0; i < 2; ++i) tasks.push_back({sw[i], swing_refs[i]});
    const VecX tau_swing = swing_ctrl_.compute(
        dyn_, estimate, h_grav, tasks,
        {sc_.controller.swing_kp, sc_.controller.swing_kd});
    VecX tau_motion = tau_base + tau_swing;
    tau_motion.head<6>().setZero();

    // --- constraint-space QP
    t0 = Clock::now();
    VecX s_tau = tau_motion;
    qdd_cmd_rhs_ = -proj_.P * dyn_.bias() + proj_.P_dot * estimate.v +
                   proj_.P * s_tau;
    const VecX qdd_cmd = proj_.M_c.partialPivLu().solve(qdd_cmd_rhs_);
    const ContactForceSolution csol = constraint_space_torques(
        proj_, dyn_.mass_matrix(), dyn_.bias(), qdd_cmd, tau_motion, qp_cfg_,
        &qp_ws_);
    if (!csol.feasible) {
      out.qp_infeasible = true;
      ++qp_infeasible_count_;
    }
    out.tau = tau_motion + csol.tau_constraint;
    out.tau.head<6>().setZero();
    out.t_qp = seconds_since(t0);

    out.lambda_full = VecX::Zero(3 * kNumFeet);
    for (int f = 0; f < kNumFeet; ++f) {
      const int r = contacts.row_of(static_cast<FootId>(f));
      if (r >= 0) out.lambda_full.segment<3>(3 * f) = csol.lambda.segment<3>(r);
    }

    // --- schedule the next cycle's gains from this tick's state
    if (sync_) {
      auto t1 = Clock::now();
      GainProduct next = compute_gains(estimate, gait_.stance(), tau0);
      const double elapsed = seconds_since(t1);
      out.t_lin = lin_time_;
      out.t_care = elapsed - lin_time_;
      accept_gains(std::move(next));
    } else {
      submit_job(estimate, gait_.stance(), tau0);
      out.t_lin = lin_time_;    // last completed worker timings
      out.t_care = care_time_;
    }
    if (care_fail_streak_ > 10) out.solver_fault = true;

    out.gains = &current_;
    out.P = &proj_.P;
    return out;
  }

 private:
  static GaitConfig make_gait_config(const Scenario& sc) {
    GaitConfig cfg;
    cfg.T_s = sc.planner.T_s;
    cfg.geometry = FootholdGeometry{sc.gait.r, sc.gait.theta0};
    cfg.apex_offset = sc.gait.apex;
    cfg.clamp_x = sc.gait.clamp_x;
    cfg.clamp_y = sc.gait.clamp_y;
    return cfg;
  }

  static std::array<Vec3, kNumFeet> initial_feet(const RobotModel& model,
                                                 const Scenario& sc) {
    (void)sc;
    Dynamics dyn(model);
    dyn.update_kinematics(model.make_state());
    std::array<Vec3, kNumFeet> feet;
    for (int f = 0; f < kNumFeet; ++f)
      feet[f] = model.has_feet() ? dyn.foot_position(static_cast<FootId>(f))
                                 : Vec3::Zero();
    return feet;
  }

  GainProduct compute_gains(const GeneralizedState& s, StancePair stance,
                            const VecX& tau0) {
    GainProduct g;
    ContactSet contacts;
    for (FootId f : stance_feet(stance))
      contacts.active[static_cast<int>(f)] = true;

    auto t0 = Clock::now();
    const LinearizedBase lin =
        linearizer_.run(s, tau0, contacts, gravity_, 1e-5, true);
    lin_time_ = seconds_since(t0);

    t0 = Clock::now();
    std::vector<int> swing_joints;
    for (FootId f : swing_feet(stance)) {
      for (int c : leg_joints(model_, f)) swing_joints.push_back(c);
    }
    const VecX r_diag = weights_.r_diag(model_.nv(), swing_joints);
    const MatX Q = weights_.q_diag.asDiagonal();
    const MatX R = r_diag.asDiagonal();
    const CareResult care =
        solve_care(lin.A, lin.B, Q, R, have_warm_ ? &warm_P_ : nullptr);
    care_time_ = seconds_since(t0);

    g.A = lin.A;
    g.B = lin.B;
    g.K = care.K;
    g.P_ric = care.P;
    g.residual = care.residual;
    g.iterations = care.iterations;
    g.ok = care.ok;
    if (audit_ && care.ok)
      g.closed_loop_max_re = max_real_eigenvalue(lin.A - lin.B * care.K);
    return g;
  }

  void accept_gains(GainProduct&& g) {
    if (g.ok) {
      warm_P_ = g.P_ric;
      have_warm_ = true;
      care_fail_streak_ = 0;
      current_ = std::move(g);
    } else {
      ++care_fail_streak_;
      ++care_fallbacks_;
    }
  }

  // --- deterministic one-cycle pipeline (worker rendezvous) ---------------

  void submit_job(const GeneralizedState& s, StancePair stance,
                  const VecX& tau0) {
    std::lock_guard<std::mutex> lk(mu_);
    job_state_ = s;
    job_stance_ = stance;
    job_tau0_ = tau0;
    job_ready_ = true;
    result_ready_ = false;
    cv_job_.notify_one();
  }

  void wait_result() {
    std::unique_lock<std::mutex> lk(mu_);
    cv_result_.wait(lk, [this] { return result_ready_; });
    accept_gains(std::move(result_));
    result_ready_ = false;
  }

  void worker_loop() {
    std::unique_lock<std::mutex> lk(mu_);
    for (;;) {
      cv_job_.wait(lk, [this] { return stop_ || job_ready_; });
      if (stop_) return;
      GeneralizedState s = job_state_;
      StancePair stance = job_stance_;
      VecX tau0 = job_tau0_;
      job_ready_ = false;
      lk.unlock();
      GainProduct g = compute_gains(s, stance, tau0);
      lk.lock();
      result_ = std::move(g);
      result_ready_ = true;
      cv_result_.notify_one();
    }
  }

  // --- diagonal PD baseline ------------------------------------------------

  VecX pd_torque(const BaseState& X_des, const BaseState& X,
                 const std::array<Vec3, kNumFeet>& feet, const VecX& tau0) {
    const auto e = base_state_error(X_des, X);
    Vec6 wrench;
    wrench.head<3>() = sc_.controller.pd_kp_lin.cwiseProduct(e.segment<3>(0)) +
                       sc_.controller.pd_kd_lin.cwiseProduct(e.segment<3>(6));
    wrench.tail<3>() = sc_.controller.pd_kp_ang.cwiseProduct(e.segment<3>(3)) +
                       sc_.controller.pd_kd_ang.cwiseProduct(e.segment<3>(9));

    // Distribute the wrench over the stance feet and map through the leg
    // Jacobians (reaction sign).
    const auto st = gait_.stance_pair();
    MatX G(6, 6);
    for (int i = 0; i < 2; ++i) {
      const Vec3 r = feet[static_cast<int>(st[i])] - X.pos;
      G.block<3, 3>(0, 3 * i).setIdentity();
      G.block<3, 3>(3, 3 * i) = skew(r);
    }
    const VecX lambda = pseudo_inverse(G) * wrench;
    VecX tau = tau0;
    for (int i = 0; i < 2; ++i) {
      Mat3 J;
      std::array<int, 3> cols{};
      dyn_.leg_jacobian(st[i], J, cols);
      const Vec3 tl = -J.transpose() * lambda.segment<3>(3 * i);
      for (int k = 0; k < 3; ++k) tau[6 + cols[k]] += tl[k];
    }
    return tau;
  }

  const Scenario sc_;
  const RobotModel& model_;
  const bool sync_;
  const bool audit_;
  Vec3 gravity_;
  LipmParams lipm_;
  Dynamics dyn_;
  Dynamics statics_;
  Linearizer linearizer_;
  SwingImpedance swing_ctrl_;
  GaitEngine gait_;
  LqrWeights weights_;
  ConstraintQpConfig qp_cfg_;
  qp::Workspace qp_ws_;

  MatX Jc_, P_prev_;
  ProjectedDynamics proj_;
  VecX qdd_cmd_rhs_;
  bool have_P_prev_ = false;

  GainProduct current_, result_;
  MatX warm_P_;
  bool have_warm_ = false;
  bool initialized_ = false;
  int care_fail_streak_ = 0;
  int care_fallbacks_ = 0;
  int qp_infeasible_count_ = 0;
  std::atomic<double> lin_time_{0.0}, care_time_{0.0};

  std::thread worker_;
  std::mutex mu_;
  std::condition_variable cv_job_, cv_result_;
  GeneralizedState job_state_;
  StancePair job_stance_ = StancePair::LF_RH;
  VecX job_tau0_;
  bool job_ready_ = false, result_ready_ = false, stop_ = false;
};

// ---------------------------------------------------------------------------
// Initial state
// ---------------------------------------------------------------------------

namespace {

GeneralizedState initial_state(const RobotModel& model, const Scenario& sc,
                               const Terrain& terrain) {
  GeneralizedState s = model.make_state();
  s.base_pos = Vec3(0, 0, sc.initial.base_z + terrain.height(0, 0));
  if (!model.has_feet()) return s;
  for (int f = 0; f < kNumFeet; ++f) {
    const auto cols = leg_joints(model, static_cast<FootId>(f));
    const bool front = f == static_cast<int>(FootId::LF) ||
                       f == static_cast<int>(FootId::RF);
    s.q_j[cols[1]] = front ? sc.initial.hfe : -sc.initial.hfe;
    s.q_j[cols[2]] = front ? -sc.initial.kfe : sc.initial.kfe;
  }
  return s;
}

void append_csv(std::string& row, const double* data, int n) {
  char buf[32];
  for (int i = 0; i < n; ++i) {
    std::snprintf(buf, sizeof(buf), ",%.17g", data[i]);
    row += buf;
  }
}

std::string log_header() {
  std::string h = "t,tick,stance,touchdown,dist,qp_inf,care_ok";
  auto add = [&h](const std::string& base, int n) {
    for (int i = 0; i < n; ++i) h += "," + base + std::to_string(i);
  };
  h += ",px,py,pz,qw,qx,qy,qz";
  add("q", 12);
  h += ",vx,vy,vz,wx,wy,wz";
  add("qd", 12);
  h += ",comx,comy,comz,comvx,comvy,comvz";
  h += ",zmpx,zmpy,pstarx,pstary";
  add("xdes", 12);
  add("x", 12);
  add("tau", 12);
  add("lam", 12);
  h += "\n";
  return h;
}

}  // namespace

// ---------------------------------------------------------------------------
// run_scenario
// ---------------------------------------------------------------------------

RunSummary run_scenario(const Scenario& sc, const RunOptions& opts) {
  RunSummary sum;
  sum.machine = machine_info();

  RobotModel model = RobotModel::from_file(sc.model_path);
  World world;
  world.gravity = Vec3(0, 0, -sc.planner.g);
  world.terrain = sc.terrain.build();
  world.contact = ContactParams{sc.sim.kp, sc.sim.kd, sc.sim.mu, sc.sim.kt};
  world.step = sc.sim.step;
  Simulator sim(model, world);

  GeneralizedState state = initial_state(model, sc, world.terrain);
  ControlPipeline pipeline(sc, model, opts.sync_lqr, opts.audit);
  {
    Dynamics dyn(model);
    dyn.update_kinematics(state);
    std::array<Vec3, kNumFeet> feet;
    for (int f = 0; f < kNumFeet; ++f)
      feet[f] = dyn.foot_position(static_cast<FootId>(f));
    pipeline.reset_gait(feet);
  }

  std::unique_ptr<LogWriter> log;
  std::ofstream ksnap;
  if (!opts.out_dir.empty()) {
    std::filesystem::create_directories(opts.out_dir);
    log = std::make_unique<LogWriter>(opts.out_dir + "/run_log.csv");
    log->push("# loco-log v1\n");
    log->push(log_header());
    ksnap.open(opts.out_dir + "/k_snapshots.csv");
    ksnap << "# loco-gains v1 rows=" << model.nv() << " cols=12\n";
  }

  const int ticks = static_cast<int>(std::llround(sc.duration / sc.control_dt));
  const int substeps =
      std::max(1, static_cast<int>(std::llround(sc.control_dt / sc.sim.step)));

  std::mt19937_64 noise_rng(sc.seed ^ 0x9e3779b97f4a7c15ULL);
  std::normal_distribution<double> gauss(0.0, 1.0);

  std::map<std::string, std::vector<double>> stage_times;
  std::vector<double> ts, vx, vy, vxd, vyd;
  ts.reserve(ticks);
  const Vec2 com0_xy = [&] {
    Dynamics dyn(model);
    dyn.update_kinematics(state);
    return Vec2(dyn.com().head<2>());
  }();

  const int snap1 = static_cast<int>(0.5 * sc.planner.T_s / sc.control_dt);
  const int snap2 = static_cast<int>(1.5 * sc.planner.T_s / sc.control_dt);

  Vec3 vel_sum = Vec3::Zero();
  int fwd_count = 0;
  double fwd_sum = 0.0;
  double rms_sum = 0.0;
  int rms_count = 0;
  sum.exit_code = 0;

  int k = 0;
  for (; k < ticks; ++k) {
    const double t = k * sc.control_dt;
    const UserCommand cmd = sc.command_at(t);

    GeneralizedState estimate = state;
    if (sc.noise.enabled()) {
      for (int i = 0; i < 3; ++i) estimate.base_pos[i] += sc.noise.pos * gauss(noise_rng);
      Vec3 drot;
      for (int i = 0; i < 3; ++i) drot[i] = sc.noise.rot * gauss(noise_rng);
      estimate.base_quat = (estimate.base_quat * quat_exp(drot)).normalized();
      for (int i = 0; i < estimate.v.size(); ++i)
        estimate.v[i] += sc.noise.vel * gauss(noise_rng);
    }

    TickResult res = pipeline.tick(estimate, cmd);
    if (res.solver_fault) {
      sum.fault = "care solver failed for more than 10 cycles";
      sum.exit_code = 3;
      break;
    }

    stage_times["plan"].push_back(res.t_plan);
    stage_times["references"].push_back(res.t_refs);
    stage_times["projection"].push_back(res.t_proj);
    stage_times["linearize"].push_back(res.t_lin);
    stage_times["care"].push_back(res.t_care);
    stage_times["qp"].push_back(res.t_qp);
    stage_times["total"].push_back(res.total());

    // metrics
    ts.push_back(t);
    vx.push_back(res.com_vel.x());
    vy.push_back(res.com_vel.y());
    vxd.push_back(res.X_des.v_lin.x());
    vyd.push_back(res.X_des.v_lin.y());
    vel_sum += res.com_vel;
    for (int a = 0; a < 3; ++a)
      sum.peak_vel[a] = std::max(sum.peak_vel[a], std::abs(res.com_vel[a]));
    if (t >= sum.transient) {
      fwd_sum += res.com_vel.x();
      ++fwd_count;
      const double ex = res.com_vel.x() - res.X_des.v_lin.x();
      const double ey = res.com_vel.y() - res.X_des.v_lin.y();
      rms_sum += ex * ex + ey * ey;
      ++rms_count;
    }
    sum.com_drift = std::max(
        sum.com_drift, (Vec2(res.com.head<2>()) - com0_xy).norm());
    sum.peak_roll = std::max(sum.peak_roll, std::abs(res.X.rpy.x()));
    sum.peak_pitch = std::max(sum.peak_pitch, std::abs(res.X.rpy.y()));

    if (opts.tick_hook) {
      TickAudit audit;
      audit.tick = k;
      audit.t = t;
      audit.state = &estimate;
      audit.stance = pipeline.gait().stance();
      audit.touchdown = res.touchdown;
      audit.p_star = res.p_star;
      audit.zmp = res.zmp;
      audit.X = res.X;
      audit.X_des = res.X_des;
      audit.K = &res.gains->K;
      audit.A = &res.gains->A;
      audit.B = &res.gains->B;
      audit.care_residual = res.gains->residual;
      audit.care_ok = res.gains->ok;
      audit.tau = &res.tau;
      audit.lambda = &res.lambda_full;
      audit.P = res.P;
      audit.qp_infeasible = res.qp_infeasible;
      opts.tick_hook(audit);
    }

    bool dist_active = false;
    Vec6 wrench_probe = Vec6::Zero();
    for (const Disturbance& d : sc.disturbances)
      wrench_probe += disturbance_wrench(d, t);
    dist_active = wrench_probe.squaredNorm() > 0;

    if (log && k % opts.ticks_per_log == 0) {
      std::string row;
      row.reserve(2200);
      char head[96];
      std::snprintf(head, sizeof(head), "%.6f,%d,%d,%d,%d,%d,%d", t, k,
                    static_cast<int>(pipeline.gait().stance()),
                    res.touchdown ? 1 : 0, dist_active ? 1 : 0,
                    res.qp_infeasible ? 1 : 0, res.gains->ok ? 1 : 0);
      row += head;
      const double quat[4] = {state.base_quat.w(), state.base_quat.x(),
                              state.base_quat.y(), state.base_quat.z()};
      append_csv(row, state.base_pos.data(), 3);
      append_csv(row, quat, 4);
      append_csv(row, state.q_j.data(), state.n());
      append_csv(row, state.v.data(), state.nv());
      append_csv(row, res.com.data(), 3);
      append_csv(row, res.com_vel.data(), 3);
      append_csv(row, res.zmp.data(), 2);
      append_csv(row, res.p_star.data(), 2);
      const auto xdes = res.X_des.vec();
      const auto xv = res.X.vec();
      append_csv(row, xdes.data(), 12);
      append_csv(row, xv.data(), 12);
      VecX tau_act = res.tau.tail(model.n());
      append_csv(row, tau_act.data(), model.n());
      append_csv(row, res.lambda_full.data(), 12);
      row += "\n";
      log->push(std::move(row));
    }
    if (ksnap.is_open() && (k == snap1 || k == snap2 || k == ticks - 1)) {
      ksnap << k << "," << static_cast<int>(pipeline.gait().stance());
      const MatX& K = res.gains->K;
      for (int i = 0; i < K.rows(); ++i)
        for (int j = 0; j < K.cols(); ++j) {
          char buf[32];
          std::snprintf(buf, sizeof(buf), ",%.17g", K(i, j));
          ksnap << buf;
        }
      ksnap << "\n";
    }

    // simulate to the next tick under zero-order-hold torque
    bool sim_fault = false;
    for (int ss = 0; ss < substeps; ++ss) {
      const double t_sub = t + ss * sc.sim.step;
      Vec6 wrench = Vec6::Zero();
      for (const Disturbance& d : sc.disturbances)
        wrench += disturbance_wrench(d, t_sub);
      const StepInfo info = sim.step(state, res.tau, wrench);
      if (info.fault) {
        sim_fault = true;
        break;
      }
    }
    if (sim_fault) {
      sum.fault = "simulation diverged";
      sum.exit_code = 2;
      break;
    }

    const Vec3 rpy = euler_zyx_from_rotation(state.base_quat.toRotationMatrix());
    if (state.base_pos.z() <
            world.terrain.height(state.base_pos.x(), state.base_pos.y()) + 0.2 ||
        std::abs(rpy.x()) > 1.0 || std::abs(rpy.y()) > 1.0) {
      sum.fall = true;
      break;
    }
  }

  sum.ticks = k;
  sum.duration = k * sc.control_dt;
  sum.completed = (k == ticks) && sum.exit_code == 0 && !sum.fall;
  if (k > 0) sum.mean_vel = vel_sum / k;
  if (fwd_count > 0) sum.forward_mean_after_transient = fwd_sum / fwd_count;
  if (rms_count > 0) sum.vel_rms_err = std::sqrt(rms_sum / (2.0 * rms_count));
  sum.qp_infeasible_count = pipeline.qp_infeasible_count();
  sum.care_fallback_count = pipeline.care_fallbacks();

  // Disturbance recoveries: time after the kick window until the lateral
  // velocity stays within 0.1 m/s of its reference for 0.2 s.
  for (const Disturbance& d : sc.disturbances) {
    RecoveryRecord rec;
    rec.kick_start = d.start;
    rec.kick_end = d.start + d.duration;
    const double hold = 0.2;
    for (size_t i = 0; i < ts.size(); ++i) {
      if (ts[i] < d.start || ts[i] > rec.kick_end + 0.4) continue;
      rec.peak_abs_vy = std::max(rec.peak_abs_vy, std::abs(vy[i]));
    }
    for (size_t i = 0; i < ts.size(); ++i) {
      if (ts[i] < rec.kick_end) continue;
      bool ok = true;
      size_t j = i;
      for (; j < ts.size() && ts[j] <= ts[i] + hold; ++j) {
        if (std::abs(vy[j] - vyd[j]) > 0.1) {
          ok = false;
          break;
        }
      }
      if (ok && (j == ts.size() ? ts.back() : ts[j]) >= ts[i] + hold - 1e-9) {
        rec.recovery_time = ts[i] - rec.kick_end;
        rec.recovered = true;
        break;
      }
      if (!ok) i = j;
    }
    sum.recoveries.push_back(rec);
  }

  for (const auto& [name, v] : stage_times)
    sum.timing_ms[name] = percentiles_ms(v);
  if (log) {
    log->close();
    sum.log_dropped = log->dropped();
  }
  if (!opts.out_dir.empty()) {
    std::ofstream sj(opts.out_dir + "/summary.json");
    sj << sum.to_json(false);
  }
  return sum;
}

// ---------------------------------------------------------------------------
// benchmark
// ---------------------------------------------------------------------------

BenchReport benchmark(const Scenario& sc, int repetitions,
                      const RunOptions& opts) {
  if (repetitions <= 0)
    throw ConfigError("benchmark: repetitions must be > 0 (empty report)");

  const int warmup = std::max(10, repetitions / 20);
  Scenario capped = sc;
  capped.duration = std::min(sc.duration,
                             (warmup + repetitions + 1) * sc.control_dt);

  RobotModel model = RobotModel::from_file(sc.model_path);
  World world;
  world.gravity = Vec3(0, 0, -sc.planner.g);
  world.terrain = sc.terrain.build();
  world.contact = ContactParams{sc.sim.kp, sc.sim.kd, sc.sim.mu, sc.sim.kt};
  world.step = sc.sim.step;
  Simulator sim(model, world);
  GeneralizedState state = initial_state(model, sc, world.terrain);
  ControlPipeline pipeline(capped, model, opts.sync_lqr, false);
  {
    Dynamics dyn(model);
    dyn.update_kinematics(state);
    std::array<Vec3, kNumFeet> feet;
    for (int f = 0; f < kNumFeet; ++f)
      feet[f] = dyn.foot_position(static_cast<FootId>(f));
    pipeline.reset_gait(feet);
  }

  const int ticks =
      static_cast<int>(std::llround(capped.duration / sc.control_dt));
  const int substeps =
      std::max(1, static_cast<int>(std::llround(sc.control_dt / sc.sim.step)));

  std::map<std::string, std::vector<double>> stage_times;
  int measured = 0;
  for (int k = 0; k < ticks && measured < repetitions; ++k) {
    const double t = k * sc.control_dt;
    TickResult res = pipeline.tick(state, sc.command_at(t));
    if (k >= warmup) {
      stage_times["plan"].push_back(res.t_plan);
      stage_times["references"].push_back(res.t_refs);
      stage_times["projection"].push_back(res.t_proj);
      stage_times["linearize"].push_back(res.t_lin);
      stage_times["care"].push_back(res.t_care);
      stage_times["qp"].push_back(res.t_qp);
      stage_times["total"].push_back(res.total());
      ++measured;
    }
    for (int ss = 0; ss < substeps; ++ss) {
      if (sim.step(state, res.tau).fault) break;
    }
  }
  if (measured == 0)
    throw ConfigError("benchmark: scenario too short for the warm-up");

  BenchReport rep;
  for (const auto& [name, v] : stage_times) rep.stage_ms[name] = percentiles_ms(v);
  rep.total_p95_ms = rep.stage_ms["total"][1];
  rep.measured_ticks = measured;
  rep.machine = machine_info();

  // Serial vs parallel linearization kernel on the initial stance.
  {
    GeneralizedState s0 = initial_state(model, sc, world.terrain);
    Linearizer lin(model);
    const ContactSet contacts = ContactSet::pair(FootId::LF, FootId::RH);
    const VecX tau0 = VecX::Zero(model.nv());
    const Vec3 g(0, 0, -sc.planner.g);
    auto time_mode = [&](bool parallel) {
      std::vector<double> times;
      for (int i = 0; i < 60; ++i) {
        auto t0 = Clock::now();
        lin.run(s0, tau0, contacts, g, 1e-5, parallel);
        times.push_back(seconds_since(t0));
      }
      return 1e3 * percentile(times, 0.5);
    };
    rep.linearize_serial_ms = time_mode(false);
    rep.linearize_parallel_ms = time_mode(true);
  }
  return rep;
}

std::string BenchReport::to_text() const {
  std::string s = "stage            p50 ms    p95 ms    p99 ms\n";
  char buf[128];
  for (const auto& [name, p] : stage_ms) {
    std::snprintf(buf, sizeof(buf), "%-14s %8.4f  %8.4f  %8.4f\n",
                  name.c_str(), p[0], p[1], p[2]);
    s += buf;
  }
  std::snprintf(buf, sizeof(buf),
                "linearize kernel p50: serial %.4f ms, parallel %.4f ms\n",
                linearize_serial_ms, linearize_parallel_ms);
  s += buf;
  std::snprintf(buf, sizeof(buf), "measured ticks: %d\n", measured_ticks);
  s += buf;
  s += "machine: " + machine + "\n";
  return s;
}

std::string RunSummary::to_json(bool deterministic_only) const {
  nlohmann::json j;
  j["completed"] = completed;
  j["fall"] = fall;
  j["fault"] = fault;
  j["exit_code"] = exit_code;
  j["ticks"] = ticks;
  j["duration"] = duration;
  j["mean_vel"] = {mean_vel.x(), mean_vel.y(), mean_vel.z()};
  j["peak_vel"] = {peak_vel.x(), peak_vel.y(), peak_vel.z()};
  j["forward_mean_after_transient"] = forward_mean_after_transient;
  j["transient"] = transient;
  j["vel_rms_err"] = vel_rms_err;
  j["com_drift"] = com_drift;
  j["peak_roll"] = peak_roll;
  j["peak_pitch"] = peak_pitch;
  j["qp_infeasible_count"] = qp_infeasible_count;
  j["care_fallback_count"] = care_fallback_count;
  j["log_dropped"] = log_dropped;
  nlohmann::json rec = nlohmann::json::array();
  for (const RecoveryRecord& r : recoveries) {
    rec.push_back({{"kick_start", r.kick_start},
                   {"kick_end", r.kick_end},
                   {"peak_abs_vy", r.peak_abs_vy},
                   {"recovery_time", r.recovery_time},
                   {"recovered", r.recovered}});
  }
  j["recoveries"] = rec;
  if (!deterministic_only) {
    nlohmann::json timing;
    for (const auto& [name, p] : timing_ms)
      timing[name] = {p[0], p[1], p[2]};
    j["timing_ms"] = timing;
    j["machine"] = machine;
  }
  return j.dump(2);
}

std::string machine_info() {
  std::string cpu = "unknown";
  std::ifstream in("/proc/cpuinfo");
  std::string line;
  while (std::getline(in, line)) {
    if (line.rfind("model name", 0) == 0) {
      const auto pos = line.find(':');
      if (pos != std::string::npos) cpu = line.substr(pos + 2);
      break;
    }
  }
  char buf[256];
  std::snprintf(buf, sizeof(buf), "%s | %u hw threads | %s", cpu.c_str(),
                std::thread::hardware_concurrency(),
#ifdef _OPENMP
                "openmp"
#else
                "no-openmp"
#endif
  );
  return buf;
}

}  // namespace loco
