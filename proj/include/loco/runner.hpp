#pragma once

#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "loco/lqr.hpp"
#include "loco/sim.hpp"

namespace loco {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct CommandPoint {
  double t = 0.0;
  UserCommand cmd;
};

struct TerrainSpec {
  enum class Kind { Flat, Bumps, File } kind = Kind::Flat;
  double amplitude = 0.03;
  double cell = 0.15;
  double extent = 16.0;
  uint64_t seed = 1;
  std::string path;

  Terrain build() const;
};

struct NoiseSpec {
  double pos = 0.0;  // m, per-axis gaussian sigma
  double rot = 0.0;  // rad
  double vel = 0.0;  // m/s and rad/s
  bool enabled() const { return pos > 0 || rot > 0 || vel > 0; }
};

struct PlannerSpec {
  double z_com = 0.42;
  double g = 9.8;
  int N = 3;
  double T_s = 0.3;
  double Q = 1000.0;
  double R = 1.0;
};

struct GaitSpec {
  double theta0 = 0.56;
  double r = 0.41;
  double apex = 0.08;
  double clamp_x = 0.28;
  double clamp_y = 0.20;
  double base_height = 0.46;  // desired base z above mean support
};

struct ControllerSpec {
  enum class Type { Lqr, DiagonalPd } type = Type::Lqr;
  double q_pos = 1500.0;   // first six state weights
  double q_vel = 1.0;      // last six state weights
  double r_base = 0.03;
  double swing_scale = 10.0;
  double swing_kp = 1500.0;
  double swing_kd = 60.0;
  // Diagonal PD baseline gains (base wrench).
  Vec3 pd_kp_lin = Vec3(600, 600, 2200);
  Vec3 pd_kd_lin = Vec3(180, 180, 350);
  Vec3 pd_kp_ang = Vec3(320, 320, 160);
  Vec3 pd_kd_ang = Vec3(30, 30, 20);
  double vmax = 1.5;       // command clamps
  double wmax = 1.0;
};

struct ProjectionSpec {
  double mu = 0.5;
  double sigma_tol = 1e-6;
};

struct SimSpec {
  double kp = 3e4;
  double kd = 1e3;
  double mu = 0.6;
  double kt = 6e3;
  double step = 2.5e-4;
};

struct InitialSpec {
  double base_z = 0.462;
  double hfe = 0.6;
  double kfe = 1.2;
};

struct Scenario {
  std::string name = "scenario";
  std::string model_path;
  double duration = 5.0;
  uint64_t seed = 0;
  double control_dt = 0.0025;
  std::vector<CommandPoint> commands;
  std::vector<Disturbance> disturbances;
  TerrainSpec terrain;
  PlannerSpec planner;
  GaitSpec gait;
  ControllerSpec controller;
  ProjectionSpec projection;
  SimSpec sim;
  NoiseSpec noise;
  InitialSpec initial;

  static Scenario from_file(const std::string& path);
  static Scenario from_json_text(const std::string& text,
                                 const std::string& base_dir = "");
  void validate() const;  // throws ConfigError
  UserCommand command_at(double t) const;
};

struct RecoveryRecord {
  double kick_start = 0.0;
  double kick_end = 0.0;
  double peak_abs_vy = 0.0;
  double recovery_time = -1.0;  // seconds after kick end; -1 if never
  bool recovered = false;
};

struct RunSummary {
  bool completed = false;
  bool fall = false;
  std::string fault;
  int exit_code = 0;  // 0 ok, 1 config, 2 sim fault, 3 solver fault
  int ticks = 0;
  double duration = 0.0;
  Vec3 mean_vel = Vec3::Zero();
  Vec3 peak_vel = Vec3::Zero();
  double forward_mean_after_transient = 0.0;
  double transient = 2.0;
  double vel_rms_err = 0.0;
  double com_drift = 0.0;
  double peak_roll = 0.0, peak_pitch = 0.0;
  std::vector<RecoveryRecord> recoveries;
  int qp_infeasible_count = 0;
  int care_fallback_count = 0;
  uint64_t log_dropped = 0;
  std::map<std::string, std::array<double, 3>> timing_ms;  // p50/p95/p99
  std::string machine;

  // Timing and machine fields are wall-clock and excluded when
  // deterministic_only is set; everything else is reproducible bit-for-bit.
  std::string to_json(bool deterministic_only = false) const;
};

// Per-tick audit snapshot handed to the optional test hook.
struct TickAudit {
  int tick = 0;
  double t = 0.0;
  const GeneralizedState* state = nullptr;
  StancePair stance = StancePair::LF_RH;
  bool touchdown = false;
  Vec2 p_star = Vec2::Zero();
  Vec2 zmp = Vec2::Zero();
  BaseState X, X_des;
  const MatX* K = nullptr;
  const MatX* A = nullptr;
  const MatX* B = nullptr;
  double care_residual = 0.0;
  bool care_ok = true;
  const VecX* tau = nullptr;
  const VecX* lambda = nullptr;
  const MatX* P = nullptr;
  bool qp_infeasible = false;
};

struct RunOptions {
  std::string out_dir;  // empty: no files written
  bool sync_lqr = true;
  int ticks_per_log = 1;
  bool audit = false;  // run per-cycle CARE residual / Hurwitz checks
  std::function<void(const TickAudit&)> tick_hook;
};

RunSummary run_scenario(const Scenario& scenario, const RunOptions& opts = {});

struct BenchReport {
  std::map<std::string, std::array<double, 3>> stage_ms;  // p50/p95/p99
  double total_p95_ms = 0.0;
  int measured_ticks = 0;
  double linearize_serial_ms = 0.0;
  double linearize_parallel_ms = 0.0;
  std::string machine;
  std::string to_text() const;
};

// Times the per-tick pipeline stages over `repetitions` control ticks
// (after a warm-up of at least 10 ticks) and compares the serial and
// OpenMP linearization kernels on the initial stance.
BenchReport benchmark(const Scenario& scenario, int repetitions,
                      const RunOptions& opts = {});

// Writes plot-ready columnar series (velocity, Euler angles, ZMP/footholds,
// gain heatmap) plus a gnuplot script next to them.
void emit_plots(const std::string& log_path, const std::string& out_dir);

std::string machine_info();

}  // namespace loco
