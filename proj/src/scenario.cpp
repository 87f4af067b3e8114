#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "loco/runner.hpp"

namespace loco {

using nlohmann::json;

Terrain TerrainSpec::build() const {
  switch (kind) {
    case Kind::Flat:
      return Terrain{};
    case Kind::Bumps:
      return Terrain::bumps(amplitude, cell, extent, extent, seed);
    case Kind::File:
      return Terrain::from_file(path);
  }
  return Terrain{};
}

UserCommand Scenario::command_at(double t) const {
  UserCommand cmd;
  for (const CommandPoint& p : commands) {
    if (p.t <= t) cmd = p.cmd;
  }
  cmd.vx = std::clamp(cmd.vx, -controller.vmax, controller.vmax);
  cmd.vy = std::clamp(cmd.vy, -controller.vmax, controller.vmax);
  cmd.omega_z = std::clamp(cmd.omega_z, -controller.wmax, controller.wmax);
  return cmd;
}

void Scenario::validate() const {
  if (duration <= 0) throw ConfigError("scenario: duration must be > 0");
  if (control_dt <= 0) throw ConfigError("scenario: control_dt must be > 0");
  if (model_path.empty()) throw ConfigError("scenario: model path missing");
  if (sim.step > control_dt)
    throw ConfigError("scenario: sim.step must be <= control_dt");
  if (sim.kp <= 0 || sim.kd <= 0)
    throw ConfigError("scenario: contact kp and kd must be > 0");
  if (std::fmod(control_dt, sim.step) > 1e-9 &&
      std::fmod(control_dt, sim.step) < sim.step - 1e-9)
    throw ConfigError("scenario: control_dt must be a multiple of sim.step");
  double last = -1.0;
  for (const CommandPoint& p : commands) {
    if (p.t <= last)
      throw ConfigError("scenario: command times must be strictly increasing");
    last = p.t;
  }
  for (const Disturbance& d : disturbances) {
    if (d.duration <= 0)
      throw ConfigError("scenario: disturbance duration must be > 0");
  }
  if (planner.N < 1 || planner.N > kMaxHorizon)
    throw ConfigError("scenario: planner N out of range");
  if (planner.z_com <= 0 || planner.g <= 0)
    throw ConfigError("scenario: planner z_com and g must be > 0");
  if (planner.T_s <= 0) throw ConfigError("scenario: planner T_s must be > 0");
  if (gait.r <= 0) throw ConfigError("scenario: gait r must be > 0");
  if (projection.mu <= 0) throw ConfigError("scenario: mu must be > 0");
}

namespace {

Vec3 parse_vec3(const json& j, const std::string& ctx) {
  if (!j.is_array() || j.size() != 3)
    throw ConfigError(ctx + ": expected [x, y, z]");
  return Vec3(j[0].get<double>(), j[1].get<double>(), j[2].get<double>());
}

}  // namespace

Scenario Scenario::from_json_text(const std::string& text,
                                  const std::string& base_dir) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("scenario parse error: ") + e.what());
  }
  Scenario s;
  try {
    if (!root.contains("schema_version") ||
        root["schema_version"].get<int>() != 1)
      throw ConfigError("scenario: schema_version missing or unsupported");
    s.name = root.value("name", "scenario");
    s.model_path = root.at("model").get<std::string>();
    if (!base_dir.empty() &&
        !std::filesystem::path(s.model_path).is_absolute()) {
      s.model_path = (std::filesystem::path(base_dir) / s.model_path).string();
    }
    s.duration = root.at("duration").get<double>();
    s.seed = root.value("seed", 0ULL);
    s.control_dt = root.value("control_dt", 0.0025);

    if (root.contains("commands")) {
      for (const json& jc : root["commands"]) {
        CommandPoint p;
        p.t = jc.at("t").get<double>();
        p.cmd.vx = jc.value("vx", 0.0);
        p.cmd.vy = jc.value("vy", 0.0);
        p.cmd.omega_z = jc.value("wz", 0.0);
        s.commands.push_back(p);
      }
    }
    if (root.contains("disturbances")) {
      for (const json& jd : root["disturbances"]) {
        Disturbance d;
        d.start = jd.at("start").get<double>();
        d.duration = jd.at("duration").get<double>();
        d.wrench.head<3>() = jd.contains("force")
                                 ? parse_vec3(jd["force"], "disturbance.force")
                                 : Vec3::Zero();
        d.wrench.tail<3>() =
            jd.contains("torque") ? parse_vec3(jd["torque"], "disturbance.torque")
                                  : Vec3::Zero();
        s.disturbances.push_back(d);
      }
    }
    if (root.contains("terrain")) {
      const json& jt = root["terrain"];
      const std::string kind = jt.value("kind", "flat");
      if (kind == "flat") {
        s.terrain.kind = TerrainSpec::Kind::Flat;
      } else if (kind == "bumps") {
        s.terrain.kind = TerrainSpec::Kind::Bumps;
        s.terrain.amplitude = jt.value("amplitude", 0.03);
        s.terrain.cell = jt.value("cell", 0.15);
        s.terrain.extent = jt.value("extent", 16.0);
        s.terrain.seed = jt.value("seed", 1ULL);
      } else if (kind == "file") {
        s.terrain.kind = TerrainSpec::Kind::File;
        s.terrain.path = jt.at("path").get<std::string>();
        if (!base_dir.empty() &&
            !std::filesystem::path(s.terrain.path).is_absolute())
          s.terrain.path =
              (std::filesystem::path(base_dir) / s.terrain.path).string();
      } else {
        throw ConfigError("scenario: unknown terrain kind '" + kind + "'");
      }
    }
    if (root.contains("planner")) {
      const json& jp = root["planner"];
      s.planner.z_com = jp.value("z_com", s.planner.z_com);
      s.planner.g = jp.value("g", s.planner.g);
      s.planner.N = jp.value("N", s.planner.N);
      s.planner.T_s = jp.value("T_s", s.planner.T_s);
      s.planner.Q = jp.value("Q", s.planner.Q);
      s.planner.R = jp.value("R", s.planner.R);
    }
    if (root.contains("gait")) {
      const json& jg = root["gait"];
      s.gait.theta0 = jg.value("theta0", s.gait.theta0);
      s.gait.r = jg.value("r", s.gait.r);
      s.gait.apex = jg.value("apex", s.gait.apex);
      s.gait.clamp_x = jg.value("clamp_x", s.gait.clamp_x);
      s.gait.clamp_y = jg.value("clamp_y", s.gait.clamp_y);
      s.gait.base_height = jg.value("base_height", s.gait.base_height);
    }
    if (root.contains("controller")) {
      const json& jc = root["controller"];
      const std::string type = jc.value("type", "lqr");
      if (type == "lqr") {
        s.controller.type = ControllerSpec::Type::Lqr;
      } else if (type == "diagonal_pd") {
        s.controller.type = ControllerSpec::Type::DiagonalPd;
      } else {
        throw ConfigError("scenario: unknown controller type '" + type + "'");
      }
      s.controller.q_pos = jc.value("q_pos", s.controller.q_pos);
      s.controller.q_vel = jc.value("q_vel", s.controller.q_vel);
      s.controller.r_base = jc.value("r_base", s.controller.r_base);
      s.controller.swing_scale = jc.value("swing_scale", s.controller.swing_scale);
      s.controller.swing_kp = jc.value("swing_kp", s.controller.swing_kp);
      s.controller.swing_kd = jc.value("swing_kd", s.controller.swing_kd);
      s.controller.vmax = jc.value("vmax", s.controller.vmax);
      s.controller.wmax = jc.value("wmax", s.controller.wmax);
      if (jc.contains("pd_kp_lin"))
        s.controller.pd_kp_lin = parse_vec3(jc["pd_kp_lin"], "pd_kp_lin");
      if (jc.contains("pd_kd_lin"))
        s.controller.pd_kd_lin = parse_vec3(jc["pd_kd_lin"], "pd_kd_lin");
      if (jc.contains("pd_kp_ang"))
        s.controller.pd_kp_ang = parse_vec3(jc["pd_kp_ang"], "pd_kp_ang");
      if (jc.contains("pd_kd_ang"))
        s.controller.pd_kd_ang = parse_vec3(jc["pd_kd_ang"], "pd_kd_ang");
    }
    if (root.contains("projection")) {
      const json& jp = root["projection"];
      s.projection.mu = jp.value("mu", s.projection.mu);
      s.projection.sigma_tol = jp.value("sigma_tol", s.projection.sigma_tol);
    }
    if (root.contains("sim")) {
      const json& js = root["sim"];
      s.sim.kp = js.value("kp", s.sim.kp);
      s.sim.kd = js.value("kd", s.sim.kd);
      s.sim.mu = js.value("mu", s.sim.mu);
      s.sim.kt = js.value("kt", s.sim.kt);
      s.sim.step = js.value("step", s.sim.step);
    }
    if (root.contains("noise")) {
      const json& jn = root["noise"];
      s.noise.pos = jn.value("pos", 0.0);
      s.noise.rot = jn.value("rot", 0.0);
      s.noise.vel = jn.value("vel", 0.0);
    }
    if (root.contains("initial")) {
      const json& ji = root["initial"];
      s.initial.base_z = ji.value("base_z", s.initial.base_z);
      s.initial.hfe = ji.value("hfe", s.initial.hfe);
      s.initial.kfe = ji.value("kfe", s.initial.kfe);
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("scenario: ") + e.what());
  }
  s.validate();
  return s;
}

Scenario Scenario::from_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open scenario file " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return from_json_text(ss.str(),
                        std::filesystem::path(path).parent_path().string());
}

}  // namespace loco
