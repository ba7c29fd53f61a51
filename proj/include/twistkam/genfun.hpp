// twistkam: generating functions S(x,y), built-in families, C1/C2 checks.
#pragma once

#include <functional>
#include <memory>
#include <string>

#include "twistkam/fourier.hpp"
#include "twistkam/types.hpp"

namespace twistkam {

// A smooth S : R^d x R^d -> R with 1-periodicity along the diagonal (C1)
// and the uniform twist condition (C2). d1/d2 are gradients in the first
// and second argument; d12 holds [d^2 S / dx_i dy_j].
class GeneratingFunction {
 public:
  virtual ~GeneratingFunction() = default;
  virtual int dim() const = 0;
  virtual double value(const Vec& x, const Vec& y) const = 0;
  virtual Vec d1(const Vec& x, const Vec& y) const = 0;
  virtual Vec d2(const Vec& x, const Vec& y) const = 0;
  virtual Mat d11(const Vec& x, const Vec& y) const = 0;
  virtual Mat d12(const Vec& x, const Vec& y) const = 0;
  virtual Mat d22(const Vec& x, const Vec& y) const = 0;
  // Declared lower bound A > 0 for -sym(d12).
  virtual double twist_constant() const = 0;
};

using GenFunPtr = std::shared_ptr<const GeneratingFunction>;

// Circle diffeomorphism phi(t) = t + a sin(2 pi t) / (2 pi), |a| < 1.
struct SineDiffeo {
  double a = 0.0;
  double eval(double t) const;
  double deriv(double t) const;
  double deriv2(double t) const;
  // Bisection bracket then Newton polish.
  double inverse(double s) const;
};

struct FamilySpec {
  std::string name;  // integrable | conjugated_integrable | perturbed_cosine
  int dim = 1;
  Vec amplitude;       // per-axis a for conjugated_integrable (scalar broadcasts)
  double epsilon = 0.0;  // perturbation size for perturbed_cosine
};

// Families:
//   integrable              S(x,y) = |y-x|^2 / 2
//   conjugated_integrable   S(x,y) = |phi(y)-phi(x)|^2 / 2, phi per axis
//   perturbed_cosine        S(x,y) = |y-x|^2 / 2 + eps sum_i cos(2 pi x_i)/(2 pi)^2
GenFunPtr make_family(const FamilySpec& spec);

// Per-axis diffeos of a conjugated_integrable family (throws otherwise).
std::vector<SineDiffeo> family_diffeos(const FamilySpec& spec);

// Max over random (x, y) and integer shifts |r|_inf <= r_max of
// |S(x+r, y+r) - S(x,y)|.
double check_periodicity(const GeneratingFunction& S, int samples = 10000, int r_max = 2,
                         unsigned seed = 20250901);

struct TwistEstimate {
  double A;   // sampled min eigenvalue of -sym(d12)
  bool ok;    // A > 0
};

// Samples -sym(d12) on a uniform grid plus random points; the grid picks up
// boundary extrema like phi'(1/2) that random draws miss.
TwistEstimate check_uniform_twist(const GeneratingFunction& S, int samples = 10000,
                                  unsigned seed = 20250902);

// Generating function built from callables; missing derivative callbacks fall
// back to central finite differences (test instrumentation and prototyping).
class CallbackGeneratingFunction : public GeneratingFunction {
 public:
  using ValueFn = std::function<double(const Vec&, const Vec&)>;
  CallbackGeneratingFunction(int dim, ValueFn value, double twist_constant = 1.0,
                             double fd_step = 1e-5);
  int dim() const override { return dim_; }
  double value(const Vec& x, const Vec& y) const override { return value_(x, y); }
  Vec d1(const Vec& x, const Vec& y) const override;
  Vec d2(const Vec& x, const Vec& y) const override;
  Mat d11(const Vec& x, const Vec& y) const override;
  Mat d12(const Vec& x, const Vec& y) const override;
  Mat d22(const Vec& x, const Vec& y) const override;
  double twist_constant() const override { return twist_; }

 private:
  int dim_;
  ValueFn value_;
  double twist_;
  double h_;
};

// S0(x,y) = S(x,y) + u(x) - u(y) - <p_inf, y - x>, the generating function of
// G0^{-1} F G0 for the fiber translation G0(x,p) = (x, p + p_inf + Du(x)).
class TransformedGeneratingFunction : public GeneratingFunction {
 public:
  TransformedGeneratingFunction(GenFunPtr base, FourierMap u, Vec p_inf);
  int dim() const override { return base_->dim(); }
  double value(const Vec& x, const Vec& y) const override;
  Vec d1(const Vec& x, const Vec& y) const override;
  Vec d2(const Vec& x, const Vec& y) const override;
  Mat d11(const Vec& x, const Vec& y) const override;
  Mat d12(const Vec& x, const Vec& y) const override;
  Mat d22(const Vec& x, const Vec& y) const override;
  double twist_constant() const override { return base_->twist_constant(); }

 private:
  GenFunPtr base_;
  FourierMap u_;  // scalar
  Vec p_inf_;
};

// Degree-one torus diffeomorphism psi = id + periodic part, with a fitted
// inverse polished by Newton on demand.
struct TorusDiffeo {
  FourierMap periodic;      // psi - id, arity d
  FourierMap inv_periodic;  // psi^{-1} - id, arity d

  static TorusDiffeo identity(int dim);
  // Fits the inverse on a grid (Newton per node seeded by the forward grid).
  static TorusDiffeo from_periodic(const FourierMap& periodic, int inverse_cutoff = -1,
                                   int inverse_grid = -1);

  int dim() const { return periodic.dim(); }
  Vec apply(const Vec& x) const { return x + periodic.eval(x); }
  Mat jacobian(const Vec& x) const;
  Mat hessian(const Vec& x, int comp) const { return periodic.hessian(x, comp); }
  // Fitted inverse refined by Newton to high accuracy.
  Vec apply_inverse(const Vec& y, double tol = 1e-13) const;
};

// S1(x,y) = S0(psi(x), psi(y)): generating function of G1^{-1} F0 G1 for the
// cotangent lift G1(x,p) = (psi(x), Dpsi(x)^{-T} p).
class PulledBackGeneratingFunction : public GeneratingFunction {
 public:
  PulledBackGeneratingFunction(GenFunPtr base, TorusDiffeo psi, double twist_constant);
  int dim() const override { return base_->dim(); }
  double value(const Vec& x, const Vec& y) const override;
  Vec d1(const Vec& x, const Vec& y) const override;
  Vec d2(const Vec& x, const Vec& y) const override;
  Mat d11(const Vec& x, const Vec& y) const override;
  Mat d12(const Vec& x, const Vec& y) const override;
  Mat d22(const Vec& x, const Vec& y) const override;
  double twist_constant() const override { return twist_; }

 private:
  GenFunPtr base_;
  TorusDiffeo psi_;
  double twist_;
};

// S / eps (the rescaled map Phi_eps is the twist map of this function).
class ScaledGeneratingFunction : public GeneratingFunction {
 public:
  ScaledGeneratingFunction(GenFunPtr base, double eps);
  int dim() const override { return base_->dim(); }
  double value(const Vec& x, const Vec& y) const override { return base_->value(x, y) / eps_; }
  Vec d1(const Vec& x, const Vec& y) const override { return base_->d1(x, y) / eps_; }
  Vec d2(const Vec& x, const Vec& y) const override { return base_->d2(x, y) / eps_; }
  Mat d11(const Vec& x, const Vec& y) const override { return base_->d11(x, y) / eps_; }
  Mat d12(const Vec& x, const Vec& y) const override { return base_->d12(x, y) / eps_; }
  Mat d22(const Vec& x, const Vec& y) const override { return base_->d22(x, y) / eps_; }
  double twist_constant() const override { return base_->twist_constant() / eps_; }

 private:
  GenFunPtr base_;
  double eps_;
};

}  // namespace twistkam
