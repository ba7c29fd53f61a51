// twistkam: trigonometric-polynomial representation of periodic maps on T^d.
#pragma once

#include <complex>
#include <functional>
#include <vector>

#include "twistkam/types.hpp"

namespace twistkam {

// Real-valued map T^d -> R^arity stored as full complex Fourier coefficients
// c_k, |k_i| <= M, with the conjugate symmetry c_{-k} = conj(c_k) enforced.
// Evaluation is f(theta) = sum_k c_k exp(2*pi*i k.theta).
class FourierMap {
 public:
  FourierMap() = default;
  FourierMap(int dim, int cutoff, int arity);

  // Least-squares trigonometric fit from values on the uniform n^d grid
  // theta_j = j/n (row-major node order, node-major value layout).
  // Requires n >= 2*cutoff + 1.
  static FourierMap fit(const std::vector<Vec>& samples, int nodes_per_axis,
                        int dim, int cutoff);

  // Samples fn on the default 4M+1 grid (or nodes_per_axis if > 0) and fits.
  static FourierMap fit_function(const std::function<Vec(const Vec&)>& fn, int dim,
                                 int arity, int cutoff, int nodes_per_axis = -1);

  int dim() const { return dim_; }
  int cutoff() const { return cutoff_; }
  int arity() const { return arity_; }
  int mode_count() const { return mode_count_; }

  Vec eval(const Vec& theta) const;
  CVec eval_complex(const Vec& theta) const;
  // Rows: components, columns: d/d theta_j.
  Mat jacobian(const Vec& theta) const;
  // Second derivative of one component, d x d.
  Mat hessian(const Vec& theta, int comp) const;

  std::complex<double> coeff(const VecXi& k, int comp) const;
  void set_coeff(const VecXi& k, int comp, std::complex<double> c);

  // Mode vector for a flat mode index (each entry in [-M, M]).
  VecXi mode(int flat) const;
  int mode_index(const VecXi& k) const;

  // Sup of |c_k| over modes with |k|_inf == m (tail-decay diagnostics).
  double shell_max(int m) const;

  double sup_norm_estimate(int nodes_per_axis = -1) const;

  // Scales coefficients so that the map becomes theta -> f(theta + shift).
  FourierMap shifted(const Vec& shift) const;

  FourierMap& operator*=(double s);

 private:
  void enforce_conjugate_symmetry();

  int dim_ = 0;
  int cutoff_ = 0;
  int arity_ = 0;
  int mode_count_ = 0;
  // coeffs_[comp * mode_count_ + flat_mode]
  std::vector<std::complex<double>> coeffs_;
};

struct PotentialFit {
  FourierMap u;          // scalar potential, mean zero
  double curl_residual;  // max_k,j |(2*pi*i*k_j) u_k - q_{k,j}|
  double mean_residual;  // |q_0| (should vanish for an exact gradient field)
};

// Solves Du = q in Fourier space for a scalar u with mean(u) = 0.
// q must have arity == dim. The curl residual measures closedness of q.
PotentialFit potential_from_gradient(const FourierMap& q);

// Row-major uniform grid nodes theta_j = j/n on [0,1)^d.
std::vector<Vec> grid_nodes(int dim, int nodes_per_axis);

}  // namespace twistkam
