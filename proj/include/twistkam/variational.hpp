// twistkam: extremal sequences, (N,r)-periodic orbits, the invariant graph.
#pragma once

#include <optional>
#include <vector>

#include "twistkam/fourier.hpp"
#include "twistkam/twistmap.hpp"
#include "twistkam/types.hpp"

namespace twistkam {

// Lifted points x_0..x_L stationary for sum_i S(x_i, x_{i+1}) at the interior.
struct ExtremalSequence {
  std::vector<Vec> points;
  int length() const { return static_cast<int>(points.size()) - 1; }
};

double action(const GeneratingFunction& S, const std::vector<Vec>& points);

// Max over interior indices of |d2 S(x_{i-1},x_i) + d1 S(x_i,x_{i+1})|.
double stationarity_residual(const GeneratingFunction& S, const std::vector<Vec>& points);

// Block-tridiagonal Hessian of the action in the interior variables
// (diagonal d22(x_{i-1},x_i) + d11(x_i,x_{i+1}), off-diagonal d12).
Mat interior_hessian(const GeneratingFunction& S, const std::vector<Vec>& points);

// Unique extremal sequence with x_0 = x, x_L = y (fixed endpoints), solved by
// damped Newton on the stationarity equations. Initial guess: the straight
// line, unless init is supplied.
ExtremalSequence extremal_bvp(const GeneratingFunction& S, const Vec& x, const Vec& y, int L,
                              double tol = 1e-12, int max_iter = 60,
                              const std::vector<Vec>* init = nullptr);

// Extremal sequence of length N+1 with x_N = x_0 + r.
ExtremalSequence periodic_orbit(const GeneratingFunction& S, const Vec& x0, int N, const VecXi& r,
                                double tol = 1e-12);

// Max over n <= horizon of |x_{n+N} - x_n - r| when the sequence is extended
// by the twist map from (x_0, p_0).
double shift_periodicity_residual(const TwistMap& map, const ExtremalSequence& seq, int N,
                                  const VecXi& r, int horizon);

// The graph G_{N,r} in the representation p(x) = p_inf + Du(x).
struct InvariantGraph {
  int N = 0;
  VecXi r;
  Vec p_inf;
  FourierMap u;  // scalar, mean zero
  int grid_n = 0;
  std::vector<Vec> p_samples;  // node-major on the uniform grid

  double curl_residual = 0.0;        // Lagrangian (closedness) defect of the samples
  double fit_residual = 0.0;         // sup |p_inf + Du - p_samples| on the grid
  double invariance_residual = 0.0;  // sup dist(F(x, p(x)), graph)

  int dim() const { return static_cast<int>(p_inf.size()); }
  Vec p_at(const Vec& x) const { return p_inf + u.jacobian(x).row(0).transpose(); }
  Mat d2u(const Vec& x) const { return u.hessian(x, 0); }
  CotangentPoint point_at(const Vec& x) const { return {x, p_at(x)}; }
};

struct GraphOptions {
  int fourier_cutoff = -1;     // default (grid_n - 1) / 4
  double solver_tol = 1e-12;
  bool parallel = true;
  int shift_check_stride = 1;  // check shift periodicity on every k-th node
  int shift_check_horizon_mult = 3;
  double shift_check_tol = 1e-8;
  double curl_tol = 1e-8;
};

// Periodic-orbit momenta over the uniform grid (the data-parallel kernel).
// The serial variant is the reference; the parallel one must agree exactly.
std::vector<Vec> graph_momentum_samples_serial(const GeneratingFunction& S, int N, const VecXi& r,
                                               int grid_n, double tol = 1e-12);
std::vector<Vec> graph_momentum_samples_parallel(const GeneratingFunction& S, int N, const VecXi& r,
                                                 int grid_n, double tol = 1e-12);

InvariantGraph build_invariant_graph(const GenFunPtr& S, int N, const VecXi& r,
                                     int grid_n, const GraphOptions& opts = {});

}  // namespace twistkam
