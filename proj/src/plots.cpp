#include <filesystem>
#include <fstream>
#include <sstream>
#include <vector>

#include "loco/runner.hpp"

namespace loco {

namespace {

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  return out;
}

}  // namespace

void emit_plots(const std::string& log_path, const std::string& out_dir) {
  std::ifstream in(log_path);
  if (!in) throw ConfigError("cannot open log " + log_path);
  std::string line;
  std::getline(in, line);
  if (line != "# loco-log v1")
    throw ConfigError("log schema mismatch: expected '# loco-log v1', got '" +
                      line + "'");
  std::getline(in, line);
  const std::vector<std::string> header = split_csv(line);
  auto col = [&](const std::string& name) {
    for (size_t i = 0; i < header.size(); ++i)
      if (header[i] == name) return static_cast<int>(i);
    throw ConfigError("log is missing column " + name);
  };

  const int c_t = col("t");
  const int c_comv = col("comvx");
  const int c_xdes = col("xdes0");
  const int c_x = col("x0");
  const int c_zmp = col("zmpx");
  const int c_pstar = col("pstarx");

  std::filesystem::create_directories(out_dir);
  std::ofstream fvel(out_dir + "/velocity.dat");
  std::ofstream feul(out_dir + "/euler.dat");
  std::ofstream fzmp(out_dir + "/zmp.dat");
  fvel << "# t vx vy vz vx_des vy_des\n";
  feul << "# t roll pitch yaw\n";
  fzmp << "# t zmp_x zmp_y pstar_x pstar_y\n";

  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto cells = split_csv(line);
    fvel << cells[c_t] << " " << cells[c_comv] << " " << cells[c_comv + 1]
         << " " << cells[c_comv + 2] << " " << cells[c_xdes + 6] << " "
         << cells[c_xdes + 7] << "\n";
    feul << cells[c_t] << " " << cells[c_x + 3] << " " << cells[c_x + 4] << " "
         << cells[c_x + 5] << "\n";
    fzmp << cells[c_t] << " " << cells[c_zmp] << " " << cells[c_zmp + 1] << " "
         << cells[c_pstar] << " " << cells[c_pstar + 1] << "\n";
  }

  // Gain heatmaps from the snapshot file written next to the log.
  const auto snap_path =
      std::filesystem::path(log_path).parent_path() / "k_snapshots.csv";
  int n_snaps = 0;
  if (std::ifstream snap{snap_path.string()}) {
    std::string sline;
    std::getline(snap, sline);  // header
    while (std::getline(snap, sline)) {
      if (sline.empty()) continue;
      const auto cells = split_csv(sline);
      const int vals = static_cast<int>(cells.size()) - 2;
      const int cols_k = 12;
      const int rows_k = vals / cols_k;
      std::ofstream fg(out_dir + "/gains_" + std::to_string(n_snaps) + ".dat");
      fg << "# row col K(row,col)   [tick " << cells[0] << ", stance "
         << cells[1] << "]\n";
      for (int i = 0; i < rows_k; ++i) {
        for (int j = 0; j < cols_k; ++j)
          fg << i << " " << j << " " << cells[2 + i * cols_k + j] << "\n";
        fg << "\n";
      }
      ++n_snaps;
    }
  }

  std::ofstream gp(out_dir + "/plots.gp");
  gp << "set terminal pngcairo size 1000,700\n"
     << "set output 'velocity.png'\n"
     << "set xlabel 't [s]'; set ylabel 'v [m/s]'\n"
     << "plot 'velocity.dat' u 1:2 w l t 'vx', '' u 1:3 w l t 'vy', \\\n"
     << "     '' u 1:5 w l dt 2 t 'vx des', '' u 1:6 w l dt 2 t 'vy des'\n"
     << "set output 'euler.png'\n"
     << "set ylabel 'angle [rad]'\n"
     << "plot 'euler.dat' u 1:2 w l t 'roll', '' u 1:3 w l t 'pitch', "
        "'' u 1:4 w l t 'yaw'\n"
     << "set output 'zmp.png'\n"
     << "set xlabel 'x [m]'; set ylabel 'y [m]'\n"
     << "plot 'zmp.dat' u 2:3 w p pt 7 ps 0.3 t 'zmp', "
        "'' u 4:5 w p pt 6 ps 0.3 t 'p*'\n";
  for (int s = 0; s < n_snaps; ++s) {
    gp << "set output 'gains_" << s << ".png'\n"
       << "set xlabel 'state'; set ylabel 'torque row'\n"
       << "set view map\n"
       << "splot 'gains_" << s << ".dat' u 2:1:3 w image t 'K'\n";
  }
}

}  // namespace loco
