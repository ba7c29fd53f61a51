// twistkam: fiber rescalings Phi_eps, Euler-step correspondence, normal form.
#pragma once

#include "twistkam/conjugacy.hpp"
#include "twistkam/twistmap.hpp"

namespace twistkam {

// Twist map of S/eps (equals R_eps^{-1} F R_eps).
TwistMap rescale_map(const GenFunPtr& S, double eps, double newton_tol = 1e-12);

// Explicit conjugation R_eps^{-1} F^steps R_eps evaluated at z, minus the
// integer translation (shift, 0) of the lift.
CotangentPoint rescaled_iterate(const TwistMap& F, double eps, const CotangentPoint& z, long steps,
                                const Vec& shift);

// Hamiltonian vector field of H = <B(x)p,p>/2.
Vec hamiltonian_vector_field(const MetricField& B, const CotangentPoint& z);

// Time-T flow of X_H by classical RK4 with the given number of steps.
CotangentPoint hamiltonian_flow(const MetricField& B, CotangentPoint z, double T, int steps);

struct EulerDefectReport {
  double defect = 0.0;        // || Phi_eps(z) - z - eps X_H(z) || at eps
  double defect_half = 0.0;   // same at eps/2
  double slope = 0.0;         // log2(defect / defect_half), ~2 for smooth maps
  double momentum_defect = 0.0;       // second block vs -(eps/2) D_x <B p, p>
  double momentum_defect_half = 0.0;
  double momentum_slope = 0.0;
};

// F_base^N translates the cover by r and fixes the zero section; Phi_eps is
// its rescaling with the translation subtracted.
EulerDefectReport euler_defect(const TwistMap& F_base, int N, const VecXi& r,
                               const MetricField& B, const CotangentPoint& z, double eps);

struct FlowConvergenceRow {
  int m = 0;
  double c0_distance = 0.0;
  double c1_distance = 0.0;
};

// C^0/C^1 distance between (Phi_{S/m})^m and the time-S flow of H over the
// sample set; Jacobians by central differences on both maps.
std::vector<FlowConvergenceRow> flow_convergence(const TwistMap& F_base, int N, const VecXi& r,
                                                 const MetricField& B, double S_time,
                                                 const std::vector<int>& m_list,
                                                 const std::vector<CotangentPoint>& samples,
                                                 int flow_steps = 4096, double fd_step = 1e-5);

struct NormalFormReport {
  Mat B_bar_fit;               // first-order momentum response on the zero section
  double B_bar_spread = 0.0;   // max over samples of ||b(x) - B_bar_fit||
  double q1 = 0.0;             // position residual order (inf sentinel if exact)
  double q2 = 0.0;             // momentum residual order
  double q1_regression_residual = 0.0;
  double q2_regression_residual = 0.0;
  std::vector<double> scalings;
  std::vector<double> position_residuals;
  std::vector<double> momentum_residuals;
  bool exact = false;  // residuals at round-off, exponents reported as inf
};

struct NormalFormOptions {
  int sample_count = 16;        // base points on the zero section
  int directions = 4;           // covector directions per point
  double lambda_max = 1e-2;     // five scalings per decade down to lambda_max/10
  int scaling_count = 5;
  // Residuals below this are rounding noise, not a measurable power law;
  // several Newton solves in sequence leave a floor of a few 1e-13.
  double exact_cutoff = 1e-12;
  unsigned seed = 20250903;
};

// Verifies F1^N(x, p) = (x + r + Bbar p + O(p^2), p + O(p^3)) on the cover.
NormalFormReport verify_normal_form(const TwistMap& F1, int N, const VecXi& r,
                                    const NormalFormOptions& opts = {});

}  // namespace twistkam
