// twistkam: conjugate-point diagnostics, the monodromy metric, flat structure.
#pragma once

#include <functional>
#include <vector>

#include "twistkam/twistmap.hpp"
#include "twistkam/variational.hpp"

namespace twistkam {

// Smallest singular value of the b-block of D F^n at z: positive values
// certify D F^n(V) is transverse to the vertical at this point and iterate.
double vertical_transversality(const TwistMap& map, const CotangentPoint& z, long n);

struct ScanOptions {
  int x_grid = 16;        // base-point grid nodes per axis
  Vec p_center;           // center of the momentum window (defaults to 0)
  double p_window = 0.5;  // half-width of the momentum box
  int p_grid = 9;         // momentum samples per axis
  int n_min = 1;
  int n_max = 12;
  bool refine = true;     // Nelder-Mead polish around the coarse minimum
  bool parallel = true;
};

struct ScanResult {
  double min_margin = 0.0;
  CotangentPoint argmin;
  long argmin_n = 0;
  // one row per (point, n): x..., p..., n, margin
  std::vector<std::vector<double>> table;
};

// Minimum transversality margin over a phase-space sample box and iterate
// range. The serial kernel is the reference implementation.
ScanResult transversality_scan_serial(const TwistMap& map, const ScanOptions& opts);
ScanResult transversality_scan_parallel(const TwistMap& map, const ScanOptions& opts);
ScanResult transversality_scan(const TwistMap& map, const ScanOptions& opts);

struct MonodromyReport {
  Vec base_point;
  int N = 0;
  Mat B;                      // b-block in the graph-adapted frame
  double symmetry_residual = 0.0;
  double smallest_eigenvalue = 0.0;
  double d_block_deviation = 0.0;  // ||D_N - I||_inf
};

// Conjugates D F^N along the graph orbit by the fiber translation
// G0(x,p) = (x, p + p_inf + Du(x)) and reports the resulting B block.
MonodromyReport monodromy_B(const TwistMap& map, const InvariantGraph& graph, const Vec& xbar,
                            int N, double d_block_tol = 1e-6);

// Matrix-valued B(x) sampled on a grid and Fourier-fitted; defines the metric
// g = <B^{-1} v, v'> and the Hamiltonian H = <B p, p>/2.
struct MetricField {
  int d = 0;
  int grid_n = 0;
  FourierMap B;  // arity d*d, row-major entries
  std::vector<Mat> samples;
  double sym_residual = 0.0;
  double min_eigenvalue = 0.0;

  Mat B_at(const Vec& x) const;
  // dB/dx_k at x.
  Mat dB_at(const Vec& x, int k) const;
  // Hessian in x of entry (i,j).
  Mat entry_hessian(const Vec& x, int i, int j) const;

  static MetricField from_samples(std::vector<Mat> samples, int grid_n, int cutoff);
  static MetricField from_function(int d, const std::function<Mat(const Vec&)>& fn, int grid_n,
                                   int cutoff);
};

MetricField metric_from_graph_serial(const TwistMap& map, const InvariantGraph& graph, int N,
                                     int grid_n, int cutoff = -1);
MetricField metric_from_graph_parallel(const TwistMap& map, const InvariantGraph& graph, int N,
                                       int grid_n, int cutoff = -1);
MetricField metric_from_graph(const TwistMap& map, const InvariantGraph& graph, int N, int grid_n,
                              int cutoff = -1, bool parallel = true);

struct HessianIdentityReport {
  // index k-1 for k = 1..k_max
  std::vector<double> skn_identity_residual;   // S_kN vs k^2 B_N d11 B_N + k B_N
  std::vector<double> action_fd_residual;      // FD Hessian of A_n vs -B_n^T d12 B_{n+1}
  double symplectic_residual = 0.0;            // d11 d12^{-T} d22 d12^{-1} = I at (x0, x1)
  double d11_min_eigenvalue = 0.0;             // over orbit points
  double d22_min_eigenvalue = 0.0;
  double bkn_scaling_residual = 0.0;           // max_k ||B_{kN} - k B_N|| / ||k B_N||
};

// Verifies the monodromy/action identities along the (N,r)-periodic orbit
// through xbar, using the zero-section generating function S0.
HessianIdentityReport hessian_identities(const GenFunPtr& S, const InvariantGraph& graph,
                                         const Vec& xbar, int N, int k_max = 5,
                                         double fd_step = 3e-4);

struct FlatStructure {
  TorusDiffeo psi;
  Mat B_bar;
  double conjugacy_residual = 0.0;  // sup ||Dpsi^{-1} B(psi) Dpsi^{-T} - B_bar||
  double min_jacobian_det = 0.0;    // of psi on samples
};

struct FlatOptions {
  int psi_cutoff = -1;       // default: metric cutoff (min 8)
  int collocation_grid = -1; // default 4*cutoff+1 per axis
  double tol = 1e-10;
  int max_iter = 60;
};

// d = 1: closed form via quadrature of B^{-1/2}. d >= 2: Levenberg-damped
// collocation least squares for psi^{-1} = id + periodic and constant B_bar.
// Output is gauge-fixed so that mean(psi - id) = 0.
FlatStructure flat_structure(const MetricField& B, const FlatOptions& opts = {});

struct JacobiProbeResult {
  double min_margin = 0.0;  // min over t in [t_min, T] of sigma_min(D_p x(t))
  double t_at_min = 0.0;
  bool degenerate = false;  // margin fell below the degeneracy threshold
  double threshold = 0.0;
};

// Integrates the Hamiltonian flow of H = <B(x)p,p>/2 and its variational
// equation (RK4) and monitors the p-derivative block of the position.
JacobiProbeResult jacobi_conjugate_probe(const MetricField& B, const Vec& x, const Vec& p,
                                         double T, int steps, double threshold = 1e-8);

}  // namespace twistkam
