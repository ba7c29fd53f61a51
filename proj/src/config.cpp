#include "twistkam/config.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

namespace twistkam {

namespace {

std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> parts;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, sep)) parts.push_back(trim(item));
  return parts;
}

}  // namespace

IniFile IniFile::parse_string(const std::string& text) {
  IniFile ini;
  std::string section;
  std::stringstream ss(text);
  std::string line;
  int lineno = 0;
  while (std::getline(ss, line)) {
    ++lineno;
    size_t hash = line.find_first_of("#;");
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']')
        throw ConfigError("config line " + std::to_string(lineno) + ": unterminated section");
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
    std::string key = trim(line.substr(0, eq));
    std::string val = trim(line.substr(eq + 1));
    if (key.empty()) throw ConfigError("config line " + std::to_string(lineno) + ": empty key");
    ini.values_[section][key] = val;
  }
  return ini;
}

IniFile IniFile::parse_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_string(ss.str());
}

bool IniFile::has(const std::string& section, const std::string& key) const {
  auto s = values_.find(section);
  return s != values_.end() && s->second.count(key) > 0;
}

std::string IniFile::get(const std::string& section, const std::string& key) const {
  if (!has(section, key)) throw ConfigError("missing config key [" + section + "] " + key);
  return values_.at(section).at(key);
}

std::string IniFile::get_or(const std::string& section, const std::string& key,
                            const std::string& fallback) const {
  return has(section, key) ? get(section, key) : fallback;
}

double IniFile::get_double(const std::string& section, const std::string& key,
                           double fallback) const {
  if (!has(section, key)) return fallback;
  try {
    return std::stod(get(section, key));
  } catch (const std::exception&) {
    throw ConfigError("bad number for [" + section + "] " + key);
  }
}

int IniFile::get_int(const std::string& section, const std::string& key, int fallback) const {
  if (!has(section, key)) return fallback;
  try {
    return std::stoi(get(section, key));
  } catch (const std::exception&) {
    throw ConfigError("bad integer for [" + section + "] " + key);
  }
}

bool IniFile::get_bool(const std::string& section, const std::string& key, bool fallback) const {
  if (!has(section, key)) return fallback;
  std::string v = get(section, key);
  std::transform(v.begin(), v.end(), v.begin(), ::tolower);
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ConfigError("bad boolean for [" + section + "] " + key);
}

std::vector<double> IniFile::get_doubles(const std::string& section, const std::string& key) const {
  std::vector<double> out;
  for (const auto& p : split(get(section, key), ',')) {
    try {
      out.push_back(std::stod(p));
    } catch (const std::exception&) {
      throw ConfigError("bad number list for [" + section + "] " + key);
    }
  }
  return out;
}

std::vector<int> IniFile::get_ints(const std::string& section, const std::string& key) const {
  std::vector<int> out;
  for (const auto& p : split(get(section, key), ',')) {
    try {
      out.push_back(std::stoi(p));
    } catch (const std::exception&) {
      throw ConfigError("bad integer list for [" + section + "] " + key);
    }
  }
  return out;
}

Vec named_rotation(const std::string& name, int dim) {
  if (name == "golden") return Vec::Constant(dim, (std::sqrt(5.0) - 1.0) / 2.0);
  if (name == "sqrt2_sqrt3") {
    if (dim != 2) throw ConfigError("rotation 'sqrt2_sqrt3' needs dim = 2");
    Vec w(2);
    w << std::sqrt(2.0) - 1.0, std::sqrt(3.0) - 1.0;
    return w;
  }
  throw ConfigError("unknown rotation name '" + name + "'");
}

ExperimentConfig ExperimentConfig::from_ini(const IniFile& ini) {
  ExperimentConfig cfg;
  cfg.family.name = ini.get("family", "name");
  cfg.family.dim = ini.get_int("family", "dim", 1);
  if (ini.has("family", "amplitude")) {
    auto a = ini.get_doubles("family", "amplitude");
    cfg.family.amplitude = Vec(a.size());
    for (size_t i = 0; i < a.size(); ++i) cfg.family.amplitude[i] = a[i];
  }
  cfg.family.epsilon = ini.get_double("family", "epsilon", 0.0);

  cfg.N = ini.get_int("problem", "N", 3);
  if (ini.has("problem", "r")) {
    auto r = ini.get_ints("problem", "r");
    cfg.r = VecXi(r.size());
    for (size_t i = 0; i < r.size(); ++i) cfg.r[i] = r[i];
  } else {
    cfg.r = VecXi::Zero(cfg.family.dim);
    cfg.r[0] = 1;
  }
  if (ini.has("problem", "m_list")) cfg.m_list = ini.get_ints("problem", "m_list");
  cfg.n_max = ini.get_int("problem", "n_max", 500);

  std::string omega_spec = ini.get_or("diophantine", "omega", "golden");
  if (omega_spec.find_first_not_of("0123456789.,-+e ") == std::string::npos &&
      omega_spec.find_first_of("0123456789") != std::string::npos) {
    auto w = split(omega_spec, ',');
    cfg.omega = Vec(w.size());
    for (size_t i = 0; i < w.size(); ++i) cfg.omega[i] = std::stod(w[i]);
  } else {
    cfg.omega = named_rotation(omega_spec, cfg.family.dim);
  }
  cfg.gamma = ini.get_double("diophantine", "gamma", 0.3);
  cfg.tau = ini.get_double("diophantine", "tau", 1.2);
  cfg.K_max = ini.get_int("diophantine", "K_max", 10000);

  cfg.modes = ini.get_int("solver", "modes", 32);
  cfg.tol = ini.get_double("solver", "tol", 1e-11);
  cfg.graph_grid = ini.get_int("solver", "graph_grid", 128);
  cfg.graph_cutoff = ini.get_int("solver", "graph_cutoff", 24);
  cfg.metric_grid = ini.get_int("solver", "metric_grid", 128);
  cfg.metric_cutoff = ini.get_int("solver", "metric_cutoff", 24);
  cfg.flat_cutoff = ini.get_int("solver", "flat_cutoff", -1);
  cfg.scan_x_grid = ini.get_int("solver", "scan_x_grid", 24);
  cfg.scan_p_grid = ini.get_int("solver", "scan_p_grid", 9);
  cfg.scan_p_window = ini.get_double("solver", "scan_p_window", 0.5);
  cfg.scan_n_max = ini.get_int("solver", "scan_n_max", 12);
  cfg.scan_margin = ini.get_double("solver", "scan_margin", 1e-6);
  cfg.theta_grid = ini.get_int("solver", "theta_grid", 64);
  cfg.parallel = ini.get_bool("solver", "parallel", true);

  cfg.output_dir = ini.get_or("output", "dir", "out");
  cfg.phase_svg = ini.get_bool("output", "phase_svg", true);

  if (cfg.r.size() != cfg.family.dim) throw ConfigError("r must have one entry per dimension");
  if (cfg.omega.size() != cfg.family.dim)
    throw ConfigError("omega must have one entry per dimension");
  if (cfg.N < 1) throw ConfigError("N must be >= 1");
  for (int m : cfg.m_list)
    if (m < 1) throw ConfigError("m values must be >= 1");
  return cfg;
}

ExperimentConfig ExperimentConfig::from_file(const std::string& path) {
  return from_ini(IniFile::parse_file(path));
}

}  // namespace twistkam
