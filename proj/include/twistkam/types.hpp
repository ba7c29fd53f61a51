// twistkam: shared scalar/vector types, torus arithmetic, error types.
#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <stdexcept>
#include <string>

namespace twistkam {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;
using VecXi = Eigen::VectorXi;
using CVec = Eigen::VectorXcd;

// A lifted phase-space point (x in R^d, p a covector).
struct CotangentPoint {
  Vec x;
  Vec p;
};

// Newton iteration hit its cap without meeting tolerance.
struct NewtonDivergence : std::runtime_error {
  explicit NewtonDivergence(const std::string& what) : std::runtime_error(what) {}
};

// Newton stopped reducing the residual.
struct NewtonStagnation : std::runtime_error {
  explicit NewtonStagnation(const std::string& what) : std::runtime_error(what) {}
};

// Linearized system condition number beyond the configured threshold.
struct IllConditioned : std::runtime_error {
  explicit IllConditioned(const std::string& what) : std::runtime_error(what) {}
};

// Bad experiment configuration.
struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

// Canonical torus representative of a scalar, in [0,1).
inline double wrap1(double t) {
  if (!std::isfinite(t)) throw std::invalid_argument("wrap: non-finite coordinate");
  double w = t - std::floor(t);
  if (w >= 1.0) w -= 1.0;  // t slightly below an integer can round up
  if (w < 0.0) w += 1.0;
  return w;
}

// Componentwise canonical representative in [0,1)^d.
inline Vec wrap(const Vec& x) {
  Vec w(x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) w[i] = wrap1(x[i]);
  return w;
}

// Distance on the circle R/Z.
inline double circle_dist1(double a, double b) {
  double t = std::fabs(wrap1(a) - wrap1(b));
  return std::min(t, 1.0 - t);
}

// Sup over axes of the per-axis circle distance.
inline double circle_dist(const Vec& a, const Vec& b) {
  double m = 0.0;
  for (Eigen::Index i = 0; i < a.size(); ++i) m = std::max(m, circle_dist1(a[i], b[i]));
  return m;
}

inline double sup_norm(const Vec& v) { return v.size() ? v.cwiseAbs().maxCoeff() : 0.0; }
inline double sup_norm(const Mat& m) { return m.size() ? m.cwiseAbs().maxCoeff() : 0.0; }

}  // namespace twistkam
