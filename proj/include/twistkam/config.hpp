// twistkam: experiment configuration (INI-style sections of key = value).
#pragma once

#include <map>
#include <string>
#include <vector>

#include "twistkam/genfun.hpp"
#include "twistkam/types.hpp"

namespace twistkam {

// Raw sectioned key/value text: '#' or ';' comments, [section] headers.
class IniFile {
 public:
  static IniFile parse_file(const std::string& path);
  static IniFile parse_string(const std::string& text);

  bool has(const std::string& section, const std::string& key) const;
  std::string get(const std::string& section, const std::string& key) const;
  std::string get_or(const std::string& section, const std::string& key,
                     const std::string& fallback) const;

  double get_double(const std::string& section, const std::string& key, double fallback) const;
  int get_int(const std::string& section, const std::string& key, int fallback) const;
  bool get_bool(const std::string& section, const std::string& key, bool fallback) const;
  std::vector<double> get_doubles(const std::string& section, const std::string& key) const;
  std::vector<int> get_ints(const std::string& section, const std::string& key) const;

 private:
  std::map<std::string, std::map<std::string, std::string>> values_;
};

struct ExperimentConfig {
  FamilySpec family;

  int N = 3;
  VecXi r;
  std::vector<int> m_list = {10, 20, 40};
  int n_max = 500;  // cap for the theorem-iii iterate range

  // Rotation vector: literal entries, or named ("golden" = (sqrt5-1)/2 per
  // axis, "sqrt2_sqrt3" = (sqrt2-1, sqrt3-1)).
  Vec omega;
  double gamma = 0.3;
  double tau = 1.2;
  int K_max = 10000;

  int modes = 32;           // KAM Fourier cutoff
  double tol = 1e-11;       // KAM solver tolerance
  int graph_grid = 128;
  int graph_cutoff = 24;
  int metric_grid = 128;
  int metric_cutoff = 24;
  int flat_cutoff = -1;
  int scan_x_grid = 24;
  int scan_p_grid = 9;
  double scan_p_window = 0.5;
  int scan_n_max = 12;
  double scan_margin = 1e-6;  // abort threshold for the conjugate-point scan
  int theta_grid = 64;        // theorem verification grid
  bool parallel = true;

  std::string output_dir = "out";
  bool phase_svg = true;

  static ExperimentConfig from_ini(const IniFile& ini);
  static ExperimentConfig from_file(const std::string& path);
};

Vec named_rotation(const std::string& name, int dim);

}  // namespace twistkam
