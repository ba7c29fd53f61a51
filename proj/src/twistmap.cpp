#include "twistkam/twistmap.hpp"

#include <sstream>

namespace twistkam {

namespace {
std::string point_str(const Vec& x, const Vec& p) {
  std::ostringstream os;
  os << "(x = [" << x.transpose() << "], p = [" << p.transpose() << "])";
  return os.str();
}
}  // namespace

Vec TwistMap::solve_forward_x(const Vec& x, const Vec& p) const {
  // First-order twist estimate x' = x + B0 p, B0 = -d12(x,x)^{-1}.
  Vec xp = x - S_->d12(x, x).partialPivLu().solve(p);
  double res = sup_norm(Vec(p + S_->d1(x, xp)));
  for (int it = 0; it < max_iter_; ++it) {
    if (res <= tol_) return xp;
    Vec g = p + S_->d1(x, xp);
    Vec step = -S_->d12(x, xp).partialPivLu().solve(g);
    // Residual at the rounding floor: the correction is below representable
    // resolution and cannot improve further.
    if (sup_norm(step) <= 1e-15 * (1.0 + sup_norm(xp))) return xp;
    double lambda = 1.0;
    for (int h = 0; h < 40; ++h) {
      Vec cand = xp + lambda * step;
      double cres = sup_norm(Vec(p + S_->d1(x, cand)));
      if (cres < res || cres <= tol_) {
        xp = cand;
        res = cres;
        break;
      }
      lambda *= 0.5;
      if (h == 39) throw NewtonDivergence("twist forward: damping exhausted at " + point_str(x, p));
    }
  }
  if (res <= tol_) return xp;
  throw NewtonDivergence("twist forward: iteration cap hit at " + point_str(x, p));
}

Vec TwistMap::solve_inverse_x(const Vec& xp, const Vec& pp) const {
  Vec x = xp + S_->d12(xp, xp).partialPivLu().solve(pp);
  double res = sup_norm(Vec(S_->d2(x, xp) - pp));
  for (int it = 0; it < max_iter_; ++it) {
    if (res <= tol_) return x;
    Vec g = S_->d2(x, xp) - pp;
    // d/dx of d2 S(x, x') is d12^T.
    Vec step = -S_->d12(x, xp).transpose().partialPivLu().solve(g);
    if (sup_norm(step) <= 1e-15 * (1.0 + sup_norm(x))) return x;
    double lambda = 1.0;
    for (int h = 0; h < 40; ++h) {
      Vec cand = x + lambda * step;
      double cres = sup_norm(Vec(S_->d2(cand, xp) - pp));
      if (cres < res || cres <= tol_) {
        x = cand;
        res = cres;
        break;
      }
      lambda *= 0.5;
      if (h == 39) throw NewtonDivergence("twist inverse: damping exhausted at " + point_str(xp, pp));
    }
  }
  if (res <= tol_) return x;
  throw NewtonDivergence("twist inverse: iteration cap hit at " + point_str(xp, pp));
}

CotangentPoint TwistMap::forward(const CotangentPoint& z) const {
  Vec xp = solve_forward_x(z.x, z.p);
  return {xp, S_->d2(z.x, xp)};
}

CotangentPoint TwistMap::inverse(const CotangentPoint& z) const {
  Vec x = solve_inverse_x(z.x, z.p);
  return {x, -S_->d1(x, z.x)};
}

CotangentPoint TwistMap::iterate(CotangentPoint z, long n) const {
  for (; n > 0; --n) z = forward(z);
  for (; n < 0; ++n) z = inverse(z);
  return z;
}

std::vector<CotangentPoint> TwistMap::orbit(const CotangentPoint& z, long n) const {
  std::vector<CotangentPoint> pts;
  pts.reserve(static_cast<size_t>(std::abs(n)) + 1);
  pts.push_back(z);
  CotangentPoint w = z;
  for (long i = 0; i < std::abs(n); ++i) {
    w = n > 0 ? forward(w) : inverse(w);
    pts.push_back(w);
  }
  return pts;
}

TangentBlocks twist_step_blocks(const GeneratingFunction& S, const Vec& x, const Vec& xp) {
  const Mat D11 = S.d11(x, xp);
  const Mat D12 = S.d12(x, xp);
  const Mat D22 = S.d22(x, xp);
  auto lu = D12.partialPivLu();
  TangentBlocks t;
  t.a = -lu.solve(D11);
  t.b = -lu.solve(Mat::Identity(S.dim(), S.dim()));
  t.c = D12.transpose() + D22 * t.a;
  t.d = D22 * t.b;
  return t;
}

TangentBlocks TwistMap::tangent(const CotangentPoint& z) const {
  Vec xp = solve_forward_x(z.x, z.p);
  return twist_step_blocks(*S_, z.x, xp);
}

TangentBlocks TwistMap::tangent_product(const CotangentPoint& z, long n) const {
  TangentBlocks acc = TangentBlocks::identity(dim());
  CotangentPoint w = z;
  for (long i = 0; i < std::abs(n); ++i) {
    if (n > 0) {
      acc = tangent(w).compose_after(acc);
      w = forward(w);
    } else {
      w = inverse(w);
      acc = tangent(w).symplectic_inverse().compose_after(acc);
    }
  }
  return acc;
}

}  // namespace twistkam
