#include <CLI11.hpp>

#include <cstdio>
#include <iostream>

#include "loco/runner.hpp"

using namespace loco;

int main(int argc, char** argv) {
  CLI::App app{"loco - quadruped trot planning/control stack with a headless "
               "rigid-body simulator"};
  app.require_subcommand(1);

  std::string scenario_path, model_override, out_dir = "out";
  uint64_t seed = 0;
  bool seed_set = false, sync_lqr = false;
  int ticks_per_log = 1;
  int reps = 2000;
  std::string log_path;

  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--scenario", scenario_path, "scenario JSON")->required();
    cmd->add_option("--model", model_override, "override the model file");
    cmd->add_option("--seed", seed, "override the scenario seed")
        ->each([&](const std::string&) { seed_set = true; });
  };

  CLI::App* run = app.add_subcommand("run", "execute a scenario");
  add_common(run);
  run->add_option("--out", out_dir, "output directory");
  run->add_flag("--sync-lqr", sync_lqr,
                "compute the LQR stage synchronously in the control thread");
  run->add_option("--ticks-per-log", ticks_per_log, "log every n-th tick")
      ->check(CLI::PositiveNumber);

  CLI::App* bench = app.add_subcommand("bench", "per-stage latency benchmark");
  add_common(bench);
  bench->add_option("--reps", reps, "measured control ticks");
  bench->add_option("--out", out_dir, "output directory");
  bench->add_flag("--sync-lqr", sync_lqr, "synchronous LQR stage");

  CLI::App* plot = app.add_subcommand("plot", "emit plot data from a run log");
  plot->add_option("--log", log_path, "run_log.csv path")->required();
  plot->add_option("--out", out_dir, "output directory");

  CLI::App* validate =
      app.add_subcommand("validate-config", "check a scenario and its model");
  add_common(validate);

  CLI11_PARSE(app, argc, argv);

  try {
    if (plot->parsed()) {
      emit_plots(log_path, out_dir);
      std::printf("plot data written to %s\n", out_dir.c_str());
      return 0;
    }

    Scenario sc = Scenario::from_file(scenario_path);
    if (!model_override.empty()) sc.model_path = model_override;
    if (seed_set) sc.seed = seed;

    if (validate->parsed()) {
      sc.validate();
      RobotModel model = RobotModel::from_file(sc.model_path);
      std::printf("ok: scenario '%s', model '%s' (n=%d, mass=%.2f kg)\n",
                  sc.name.c_str(), model.name().c_str(), model.n(),
                  model.total_mass());
      return 0;
    }

    if (bench->parsed()) {
      RunOptions opts;
      opts.sync_lqr = sync_lqr;
      const BenchReport rep = benchmark(sc, reps, opts);
      std::printf("%s", rep.to_text().c_str());
      return 0;
    }

    RunOptions opts;
    opts.out_dir = out_dir;
    opts.sync_lqr = sync_lqr;
    opts.ticks_per_log = ticks_per_log;
    const RunSummary sum = run_scenario(sc, opts);
    std::printf("%s\n", sum.to_json(false).c_str());
    if (sum.fall && sum.exit_code == 0) {
      std::fprintf(stderr, "run ended in a fall\n");
    }
    return sum.exit_code;
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 1;
  } catch (const ModelError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 1;
  } catch (const SimFault& e) {
    std::fprintf(stderr, "simulation fault: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
}
