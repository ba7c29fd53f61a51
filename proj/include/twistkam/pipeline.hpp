// twistkam: end-to-end composition from generating function to verified tori.
#pragma once

#include "twistkam/config.hpp"
#include "twistkam/conjugacy.hpp"
#include "twistkam/kam.hpp"
#include "twistkam/rescaling.hpp"

namespace twistkam {

struct StageError : std::runtime_error {
  std::string stage;
  StageError(std::string stage_name, const std::string& what)
      : std::runtime_error("[stage " + stage_name + "] " + what), stage(std::move(stage_name)) {}
};

// G(x,p) = (psi(x), p_inf + Du(psi(x)) + Dpsi(x)^{-T} p); maps the zero
// section onto the graph and conjugates F to the normal-form map F1.
struct NormalFormChart {
  InvariantGraph graph;
  TorusDiffeo psi;

  CotangentPoint apply(const CotangentPoint& z) const;
  CotangentPoint apply_inverse(const CotangentPoint& z) const;
};

// F1 = G^{-1} F G as the twist map of S1 = S0(psi x, psi y).
TwistMap build_normal_form_map(const GenFunPtr& S, const NormalFormChart& chart,
                               double newton_tol = 1e-12);

struct RotationBookkeeping {
  Vec beta_measured;
  VecXi k_m;  // N m beta - omega
  VecXi l_m;  // = r for large m
  double translation_residual = 0.0;  // sup_j |delta_j - beta| (alpha_{m,1} rigidity)
  double integrality_residual = 0.0;  // distance of N m beta - omega from Z^d
};

// Measures the rotation of j_m^{-1} F1 j_m as the mean lifted displacement and
// checks N m beta_m - omega = m r in integers.
RotationBookkeeping rotation_bookkeeping(const EmbeddedTorus& jm, const TwistMap& F1, int N,
                                         int m, const Vec& omega, const VecXi& r,
                                         int theta_grid = 32, double tol = 1e-8);

// sup over the grid of circle-dist(psi^{-1}(f(psi(theta))), theta + r/N) with
// f the projected action of F on the graph.
double check_corollary(const TorusDiffeo& psi, const TwistMap& F, const InvariantGraph& graph,
                       int N, const VecXi& r, int grid_n = 256);

struct MRecord {
  int m = 0;
  Vec beta_m;
  std::vector<long> k_m, l_m;
  double theorem_residual = 0.0;
  int n_checked = 0;
  double hausdorff = 0.0;
  double psi_c0 = 0.0;
  double psi_c1 = 0.0;
  double u_norm = 0.0;
  double v_norm = 0.0;
  double lemma4_residual = 0.0;
  double solver_residual = 0.0;
  double condition = 0.0;
  double mstep_residual = 0.0;
  double translation_residual = 0.0;
  double torus_min_jacobian = 0.0;
};

struct TrendChecks {
  double hausdorff_slope = 0.0;  // of distance vs m in log-log, expect ~1
  bool hausdorff_decreasing = false;
  bool psi_converging = false;
  bool u_norm_decreasing = false;
  bool mv_norm_decreasing = false;
};

struct TheoremReport {
  std::string family;
  int dim = 1;
  int N = 0;
  std::vector<long> r;

  double periodicity_residual = 0.0;
  double twist_A = 0.0;
  double omega_margin = 0.0;
  double scan_margin = 0.0;

  double graph_invariance_residual = 0.0;
  double graph_curl_residual = 0.0;
  Vec p_inf;

  Mat B_bar;
  double flat_conjugacy_residual = 0.0;
  double metric_min_eigenvalue = 0.0;
  double monodromy_symmetry_residual = 0.0;
  double monodromy_d_deviation = 0.0;

  double q1 = 0.0, q2 = 0.0;
  double normal_form_bbar_gap = 0.0;  // ||B_bar_fit - B_bar||
  double euler_slope = 0.0;
  double euler_momentum_slope = 0.0;
  std::vector<FlowConvergenceRow> flow_rows;

  std::vector<MRecord> records;
  double corollary_residual = 0.0;
  TrendChecks trends;

  bool pass = false;
  std::string failure;  // stage-tagged diagnostic when aborted
};

// Executes the full pipeline; persists report.json, graph artifacts, per-m
// torus files, trends.csv and (d = 1) phase.svg into cfg.output_dir. A stage
// failure persists partial results and rethrows as StageError.
TheoremReport run_pipeline(const ExperimentConfig& cfg);

// Residual set of the theorem check, reproducible from persisted artifacts.
struct TheoremResiduals {
  double theorem_residual = 0.0;
  double lemma4_residual = 0.0;
  double hausdorff = 0.0;
};

TheoremResiduals theorem_residuals(const TwistMap& F, const NormalFormChart& chart,
                                   const TwistMap& F1, const EmbeddedTorus& jm, int N,
                                   const VecXi& r, const Vec& omega, int m, int n_max,
                                   int theta_grid, bool parallel = true);

// d = 1 phase portrait: graph curve, torus curves, orbit dots.
void write_phase_svg(const std::string& path, const TwistMap& F, const InvariantGraph& graph,
                     const std::vector<std::pair<int, std::function<CotangentPoint(const Vec&)>>>&
                         torus_embeddings,
                     int samples = 400);

}  // namespace twistkam
