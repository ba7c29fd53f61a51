// twistkam: 2x2 block decomposition of cotangent-bundle differentials.
#pragma once

#include "twistkam/types.hpp"

namespace twistkam {

// Differential of a map of T^*T^d in the horizontal/vertical splitting:
//   [dx'; dp'] = [a b; c d] [dx; dp].
// b maps covectors to vectors, c maps vectors to covectors.
struct TangentBlocks {
  Mat a, b, c, d;

  static TangentBlocks identity(int dim) {
    return {Mat::Identity(dim, dim), Mat::Zero(dim, dim), Mat::Zero(dim, dim),
            Mat::Identity(dim, dim)};
  }

  int dim() const { return static_cast<int>(a.rows()); }

  Mat assemble() const {
    const int d_ = dim();
    Mat m(2 * d_, 2 * d_);
    m.topLeftCorner(d_, d_) = a;
    m.topRightCorner(d_, d_) = b;
    m.bottomLeftCorner(d_, d_) = c;
    m.bottomRightCorner(d_, d_) = d;
    return m;
  }

  // Composition: this after other (matrix product, this * other).
  TangentBlocks compose_after(const TangentBlocks& o) const {
    return {a * o.a + b * o.c, a * o.b + b * o.d, c * o.a + d * o.c, c * o.b + d * o.d};
  }

  // Inverse of a symplectic block matrix: J^{-1} M^T J.
  TangentBlocks symplectic_inverse() const {
    return {d.transpose(), -b.transpose(), -c.transpose(), a.transpose()};
  }

  // || M^T J M - J ||_inf with J the standard symplectic form.
  double symplecticity_residual() const {
    const int d_ = dim();
    Mat J = Mat::Zero(2 * d_, 2 * d_);
    J.topRightCorner(d_, d_) = Mat::Identity(d_, d_);
    J.bottomLeftCorner(d_, d_) = -Mat::Identity(d_, d_);
    Mat m = assemble();
    return sup_norm(Mat(m.transpose() * J * m - J));
  }
};

}  // namespace twistkam
