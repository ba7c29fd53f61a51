// twistkam: the symplectic twist map implicitly defined by S, with tangent maps.
#pragma once

#include <vector>

#include "twistkam/blocks.hpp"
#include "twistkam/genfun.hpp"
#include "twistkam/types.hpp"

namespace twistkam {

// F(x,p) = (x',p') defined by p = -d1 S(x,x'), p' = d2 S(x,x').
// Works in lifted (universal cover) coordinates throughout; projection to the
// torus is the caller's business.
class TwistMap {
 public:
  explicit TwistMap(GenFunPtr S, double newton_tol = 1e-12, int max_iter = 50)
      : S_(std::move(S)), tol_(newton_tol), max_iter_(max_iter) {}

  int dim() const { return S_->dim(); }
  const GeneratingFunction& generating_function() const { return *S_; }
  GenFunPtr generating_function_ptr() const { return S_; }
  double newton_tol() const { return tol_; }

  CotangentPoint forward(const CotangentPoint& z) const;
  CotangentPoint inverse(const CotangentPoint& z) const;
  CotangentPoint iterate(CotangentPoint z, long n) const;

  TangentBlocks tangent(const CotangentPoint& z) const;
  // Chain-rule product of per-step blocks along the orbit, m_{n-1} ... m_0.
  TangentBlocks tangent_product(const CotangentPoint& z, long n) const;

  // Points z, F z, ..., F^n z (n >= 0) or backwards for n < 0.
  std::vector<CotangentPoint> orbit(const CotangentPoint& z, long n) const;

  TwistMap with_tolerance(double tol, int max_iter = -1) const {
    return TwistMap(S_, tol, max_iter > 0 ? max_iter : max_iter_);
  }

 private:
  Vec solve_forward_x(const Vec& x, const Vec& p) const;
  Vec solve_inverse_x(const Vec& xp, const Vec& pp) const;

  GenFunPtr S_;
  double tol_;
  int max_iter_;
};

// Tangent blocks of the single step from second derivatives of S at (x, x').
TangentBlocks twist_step_blocks(const GeneratingFunction& S, const Vec& x, const Vec& xp);

}  // namespace twistkam
