// twistkam: strongly Diophantine vectors and the invariance-equation solver.
#pragma once

#include "twistkam/twistmap.hpp"

namespace twistkam {

struct DiophantineCheck {
  double margin = 0.0;  // min over k of |k.omega + l| |k|^tau / gamma
  VecXi argmin_k;
  long argmin_l = 0;
};

// Exhaustive scan of 0 < |k|_inf <= K_max with the minimizing integer l.
// margin >= 1 verifies the strong Diophantine bound up to the cutoff.
DiophantineCheck check_strongly_diophantine(const Vec& omega, double gamma, double tau, int K_max);

// Largest gamma valid at this cutoff: min_k |k.omega + l| |k|_inf^tau.
double find_diophantine_gamma(const Vec& omega, double tau, int K_max);

struct DiophantineVector {
  Vec omega;
  double gamma = 0.0;
  double tau = 0.0;
  int K_max = 0;
  double worst_margin = 0.0;

  static DiophantineVector verified(const Vec& omega, double gamma, double tau, int K_max);
};

// Lagrangian embedding j(theta) = (theta + u(theta), c + v(theta)).
struct EmbeddedTorus {
  Vec beta;      // target rotation of the one-step equation
  Vec c;         // constant momentum level
  FourierMap u;  // position correction, arity d
  FourierMap v;  // momentum correction, arity d

  double jacobian_min_det = 0.0;     // of theta + u on the grid (graph property)
  double lagrangian_residual = 0.0;  // pullback 2-form on the grid (0 when d = 1)

  int dim() const { return static_cast<int>(c.size()); }
  CotangentPoint at(const Vec& theta) const {
    return {theta + u.eval(theta), c + v.eval(theta)};
  }
  // d j / d theta, 2d x d.
  Mat tangent(const Vec& theta) const;

  static EmbeddedTorus flat(int dim, int cutoff, const Vec& beta, const Vec& c);
  // Same coefficients re-embedded at a new cutoff.
  EmbeddedTorus with_cutoff(int cutoff) const;
};

struct SolveOptions {
  int max_iter = 25;
  int oversample = 2;            // collocation nodes per axis = oversample*(2M)+1
  double cond_threshold = 1e12;
  int svd_cond_max_dof = 900;    // exact SVD condition below this size
  bool parallel = true;
};

struct SolveResult {
  EmbeddedTorus torus;
  std::vector<double> residual_history;   // sup norm per Newton step (incl. initial)
  std::vector<double> condition_history;  // per solved step
  bool converged = false;

  // r_{k+1} <= C r_k^2 on the final two steps.
  double quadratic_tail_constant() const;
};

// Collocation Newton on truncated Fourier coefficients for
// Phi(j(theta)) = j(theta + beta), gauge mean(u) = 0, dense least squares.
SolveResult solve_invariance(const TwistMap& Phi, const Vec& beta, const EmbeddedTorus& init,
                             int modes, double tol, const SolveOptions& opts = {});

// Residual sup over the collocation grid (serial reference / OpenMP kernel).
double invariance_residual_serial(const TwistMap& Phi, const Vec& beta, const EmbeddedTorus& j,
                                  int grid_n);
double invariance_residual_parallel(const TwistMap& Phi, const Vec& beta, const EmbeddedTorus& j,
                                    int grid_n);

struct JmResult {
  EmbeddedTorus torus;   // solves F1(j(theta)) = j(theta + beta_m)
  Vec beta_m;            // r/N + omega/(N m)
  SolveResult solve;
  double mstep_residual = 0.0;     // F1^{Nm}(j(theta)) vs j(theta+omega) + (m r, 0)
  double inherited_margin = 0.0;   // min |k.beta_m + l| N m |k|^tau / gamma over the scan
};

struct JmOptions {
  int modes = 32;
  double tol = 1e-11;
  int margin_scan_K = 64;
  int mstep_samples = 16;
  SolveOptions solver;
};

// Builds the torus j_m of the one-step equation for F1 with rotation beta_m,
// seeded by the leading-order guess (theta, Bbar^{-1}(omega/m)) or a warm start.
JmResult construct_jm(const TwistMap& F1, int N, const VecXi& r, int m,
                      const DiophantineVector& omega, const Mat& Bbar, const JmOptions& opts = {},
                      const EmbeddedTorus* warm_start = nullptr);

}  // namespace twistkam
