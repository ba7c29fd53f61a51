// twistkam command-line driver.
#include <CLI11.hpp>

#include <filesystem>
#include <iostream>
#include <nlohmann/json.hpp>

#include "twistkam/io.hpp"
#include "twistkam/pipeline.hpp"

using namespace twistkam;

namespace {

struct Overrides {
  std::string config_path;
  int N = -1;
  std::vector<int> r;
  std::vector<int> m;
  int modes = -1;
  double tol = -1.0;
  std::string out;
};

void add_common(CLI::App* cmd, Overrides& ov) {
  cmd->add_option("--config", ov.config_path, "experiment config file")->required();
  cmd->add_option("--N", ov.N, "override problem N");
  cmd->add_option("--r", ov.r, "override translation vector r");
  cmd->add_option("--m", ov.m, "override m list");
  cmd->add_option("--modes", ov.modes, "override Fourier cutoff");
  cmd->add_option("--tol", ov.tol, "override solver tolerance");
  cmd->add_option("--out", ov.out, "override output directory");
}

ExperimentConfig load(const Overrides& ov) {
  ExperimentConfig cfg = ExperimentConfig::from_file(ov.config_path);
  if (ov.N > 0) cfg.N = ov.N;
  if (!ov.r.empty()) {
    cfg.r = VecXi(ov.r.size());
    for (size_t i = 0; i < ov.r.size(); ++i) cfg.r[i] = ov.r[i];
  }
  if (!ov.m.empty()) cfg.m_list = ov.m;
  if (ov.modes > 0) cfg.modes = ov.modes;
  if (ov.tol > 0) cfg.tol = ov.tol;
  if (!ov.out.empty()) cfg.output_dir = ov.out;
  if (cfg.r.size() != cfg.family.dim) throw ConfigError("r must have one entry per dimension");
  return cfg;
}

int cmd_check_genfun(const ExperimentConfig& cfg) {
  GenFunPtr S = make_family(cfg.family);
  double per = check_periodicity(*S);
  TwistEstimate tw = check_uniform_twist(*S);
  DiophantineCheck dc = check_strongly_diophantine(cfg.omega, cfg.gamma, cfg.tau, cfg.K_max);
  std::cout << "periodicity residual = " << per << "\n";
  std::cout << "twist constant A = " << tw.A << (tw.ok ? " (ok)" : " (FAIL)") << "\n";
  std::cout << "diophantine margin = " << dc.margin << (dc.margin >= 1.0 ? " (ok)" : " (FAIL)")
            << "\n";
  return (per <= 1e-10 && tw.ok && dc.margin >= 1.0) ? 0 : 1;
}

int cmd_orbit(const ExperimentConfig& cfg, const std::vector<double>& x0,
              const std::vector<double>& p0, int steps) {
  GenFunPtr S = make_family(cfg.family);
  TwistMap F(S);
  const int d = cfg.family.dim;
  Vec x = Vec::Zero(d), p = Vec::Zero(d);
  for (int i = 0; i < d && i < static_cast<int>(x0.size()); ++i) x[i] = x0[i];

  std::filesystem::create_directories(cfg.output_dir);
  std::vector<std::vector<double>> rows;
  if (p0.empty()) {
    // No momentum given: the (N, r)-periodic orbit through x.
    ExtremalSequence seq = periodic_orbit(*S, x, cfg.N, cfg.r);
    for (size_t i = 0; i < seq.points.size(); ++i) {
      std::vector<double> row{static_cast<double>(i)};
      Vec pi = i + 1 < seq.points.size() ? Vec(-S->d1(seq.points[i], seq.points[i + 1]))
                                         : Vec(S->d2(seq.points[i - 1], seq.points[i]));
      for (int a = 0; a < d; ++a) row.push_back(seq.points[i][a]);
      for (int a = 0; a < d; ++a) row.push_back(pi[a]);
      rows.push_back(row);
    }
  } else {
    for (int i = 0; i < d && i < static_cast<int>(p0.size()); ++i) p[i] = p0[i];
    CotangentPoint z{x, p};
    for (int n = 0; n <= steps; ++n) {
      std::vector<double> row{static_cast<double>(n)};
      for (int a = 0; a < d; ++a) row.push_back(z.x[a]);
      for (int a = 0; a < d; ++a) row.push_back(z.p[a]);
      rows.push_back(row);
      if (n < steps) z = F.forward(z);
    }
  }
  std::vector<std::string> header{"n"};
  for (int a = 0; a < d; ++a) header.push_back("x" + std::to_string(a + 1));
  for (int a = 0; a < d; ++a) header.push_back("p" + std::to_string(a + 1));
  std::string path = cfg.output_dir + "/orbit.csv";
  io::write_csv(path, header, rows);
  std::cout << "wrote " << path << " (" << rows.size() << " rows)\n";
  return 0;
}

int cmd_periodic_graph(const ExperimentConfig& cfg) {
  GenFunPtr S = make_family(cfg.family);
  GraphOptions opts;
  opts.fourier_cutoff = cfg.graph_cutoff;
  opts.parallel = cfg.parallel;
  InvariantGraph g = build_invariant_graph(S, cfg.N, cfg.r, cfg.graph_grid, opts);
  std::filesystem::create_directories(cfg.output_dir);
  io::write_json_file(cfg.output_dir + "/graph.json", io::graph_to_json(g));
  io::write_graph_csv(cfg.output_dir + "/graph.csv", g, cfg.graph_grid);
  std::cout << "p_inf = [" << g.p_inf.transpose() << "]\n";
  std::cout << "invariance residual = " << g.invariance_residual << "\n";
  std::cout << "curl residual = " << g.curl_residual << "\n";
  return g.invariance_residual <= 1e-8 ? 0 : 1;
}

int cmd_conjugate_scan(const ExperimentConfig& cfg) {
  GenFunPtr S = make_family(cfg.family);
  TwistMap F(S);
  ScanOptions so;
  so.x_grid = cfg.scan_x_grid;
  so.p_grid = cfg.scan_p_grid;
  so.p_center = cfg.r.cast<double>() / cfg.N;
  so.p_window = cfg.scan_p_window;
  so.n_max = cfg.scan_n_max;
  so.parallel = cfg.parallel;
  ScanResult scan = transversality_scan(F, so);
  std::filesystem::create_directories(cfg.output_dir);
  std::vector<std::string> header;
  for (int a = 0; a < cfg.family.dim; ++a) header.push_back("x" + std::to_string(a + 1));
  for (int a = 0; a < cfg.family.dim; ++a) header.push_back("p" + std::to_string(a + 1));
  header.push_back("n");
  header.push_back("margin");
  io::write_csv(cfg.output_dir + "/conjugate_scan.csv", header, scan.table);
  std::cout << "min margin = " << scan.min_margin << " at x = [" << scan.argmin.x.transpose()
            << "], p = [" << scan.argmin.p.transpose() << "], n = " << scan.argmin_n << "\n";
  return scan.min_margin > cfg.scan_margin ? 0 : 1;
}

int cmd_normal_form(const ExperimentConfig& cfg) {
  GenFunPtr S = make_family(cfg.family);
  TwistMap F(S, 1e-13);
  GraphOptions gopts;
  gopts.fourier_cutoff = cfg.graph_cutoff;
  gopts.parallel = cfg.parallel;
  InvariantGraph graph = build_invariant_graph(S, cfg.N, cfg.r, cfg.graph_grid, gopts);
  MetricField metric =
      metric_from_graph(F, graph, cfg.N, cfg.metric_grid, cfg.metric_cutoff, cfg.parallel);
  FlatOptions fopts;
  fopts.psi_cutoff = cfg.flat_cutoff > 0 ? cfg.flat_cutoff : cfg.metric_cutoff;
  FlatStructure flat = flat_structure(metric, fopts);
  NormalFormChart chart{graph, flat.psi};
  TwistMap F1 = build_normal_form_map(S, chart, 1e-13);
  NormalFormReport nf = verify_normal_form(F1, cfg.N, cfg.r);

  std::filesystem::create_directories(cfg.output_dir);
  io::write_json_file(cfg.output_dir + "/flat.json", io::flat_to_json(flat));
  nlohmann::json j;
  j["B_bar"] = nlohmann::json::array();
  for (int a = 0; a < flat.B_bar.rows(); ++a) {
    nlohmann::json row = nlohmann::json::array();
    for (int b = 0; b < flat.B_bar.cols(); ++b) row.push_back(flat.B_bar(a, b));
    j["B_bar"].push_back(row);
  }
  j["conjugacy_residual"] = flat.conjugacy_residual;
  j["q1"] = nf.exact ? 1e9 : nf.q1;
  j["q2"] = nf.exact ? 1e9 : nf.q2;
  j["exact"] = nf.exact;
  j["scalings"] = nf.scalings;
  j["position_residuals"] = nf.position_residuals;
  j["momentum_residuals"] = nf.momentum_residuals;
  io::write_json_file(cfg.output_dir + "/normal_form.json", j);

  std::cout << "B_bar =\n" << flat.B_bar << "\n";
  std::cout << "conjugacy residual = " << flat.conjugacy_residual << "\n";
  if (nf.exact)
    std::cout << "residuals at round-off; exponents exact (inf)\n";
  else
    std::cout << "q1 = " << nf.q1 << ", q2 = " << nf.q2 << "\n";
  bool ok = flat.conjugacy_residual <= 1e-7 && (nf.exact || (nf.q1 >= 1.9 && nf.q2 >= 2.9));
  return ok ? 0 : 1;
}

int cmd_kam_solve(const ExperimentConfig& cfg) {
  GenFunPtr S = make_family(cfg.family);
  TwistMap F(S, 1e-13);
  const int d = cfg.family.dim;
  DiophantineCheck dc = check_strongly_diophantine(cfg.omega, cfg.gamma, cfg.tau, cfg.K_max);
  if (dc.margin < 1.0) {
    std::cout << "rotation rejected by the Diophantine margin check (margin " << dc.margin
              << " at k = [" << dc.argmin_k.transpose() << "])\n";
    return 1;
  }
  EmbeddedTorus init = EmbeddedTorus::flat(d, cfg.modes, cfg.omega, cfg.omega);
  SolveOptions sopts;
  sopts.parallel = cfg.parallel;
  SolveResult res = solve_invariance(F, cfg.omega, init, cfg.modes, cfg.tol, sopts);

  std::filesystem::create_directories(cfg.output_dir);
  io::write_json_file(cfg.output_dir + "/torus.json", io::torus_to_json(res.torus));
  io::write_torus_csv(cfg.output_dir + "/torus.csv", d, d == 1 ? 512 : 48,
                      [&](const Vec& th) { return res.torus.at(th); });
  {
    std::vector<std::vector<double>> rows;
    for (size_t i = 0; i < res.residual_history.size(); ++i)
      rows.push_back({static_cast<double>(i), res.residual_history[i],
                      i > 0 && i - 1 < res.condition_history.size()
                          ? res.condition_history[i - 1]
                          : 0.0});
    io::write_csv(cfg.output_dir + "/newton_log.csv", {"step", "residual", "condition"}, rows);
  }
  std::cout << "residual = " << res.residual_history.back()
            << " after " << res.residual_history.size() - 1 << " Newton steps\n";
  if (!res.condition_history.empty())
    std::cout << "final condition = " << res.condition_history.back() << "\n";
  return res.converged ? 0 : 1;
}

int cmd_verify_theorem(const ExperimentConfig& cfg) {
  TheoremReport rep = run_pipeline(cfg);
  for (const auto& rec : rep.records)
    std::cout << "m = " << rec.m << ": theorem residual = " << rec.theorem_residual
              << ", hausdorff = " << rec.hausdorff << ", |u| = " << rec.u_norm
              << ", m|v| = " << rec.m * rec.v_norm << "\n";
  std::cout << "corollary residual = " << rep.corollary_residual << "\n";
  std::cout << "hausdorff slope = " << rep.trends.hausdorff_slope << "\n";
  std::cout << (rep.pass ? "PASS" : "FAIL") << "\n";
  return rep.pass ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"symplectic twist maps, invariant graphs, and KAM tori"};
  app.require_subcommand(1);

  Overrides ov;
  std::vector<double> orbit_x, orbit_p;
  int orbit_steps = 100;

  auto* c_check = app.add_subcommand("check-genfun", "validate C1/C2 and the rotation vector");
  add_common(c_check, ov);
  auto* c_orbit = app.add_subcommand("orbit", "iterate the map or compute a periodic orbit");
  add_common(c_orbit, ov);
  c_orbit->add_option("--x", orbit_x, "initial position")->required();
  c_orbit->add_option("--p", orbit_p, "initial momentum (omit for the (N,r) orbit)");
  c_orbit->add_option("--n", orbit_steps, "iteration count");
  auto* c_graph = app.add_subcommand("periodic-graph", "build the invariant graph G_{N,r}");
  add_common(c_graph, ov);
  auto* c_scan = app.add_subcommand("conjugate-scan", "vertical transversality scan");
  add_common(c_scan, ov);
  auto* c_nf = app.add_subcommand("normal-form", "flat structure and normal-form exponents");
  add_common(c_nf, ov);
  auto* c_kam = app.add_subcommand("kam-solve", "invariant torus of the family map at omega");
  add_common(c_kam, ov);
  auto* c_thm = app.add_subcommand("verify-theorem", "full pipeline and report");
  add_common(c_thm, ov);

  CLI11_PARSE(app, argc, argv);

  try {
    ExperimentConfig cfg = load(ov);
    if (c_check->parsed()) return cmd_check_genfun(cfg);
    if (c_orbit->parsed()) return cmd_orbit(cfg, orbit_x, orbit_p, orbit_steps);
    if (c_graph->parsed()) return cmd_periodic_graph(cfg);
    if (c_scan->parsed()) return cmd_conjugate_scan(cfg);
    if (c_nf->parsed()) return cmd_normal_form(cfg);
    if (c_kam->parsed()) return cmd_kam_solve(cfg);
    if (c_thm->parsed()) return cmd_verify_theorem(cfg);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 2;
}
