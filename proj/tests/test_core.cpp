#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <numbers>
#include <random>

#include "twistkam/blocks.hpp"
#include "twistkam/fourier.hpp"
#include "twistkam/types.hpp"

using namespace twistkam;

namespace {
constexpr double kTwoPi = 2.0 * std::numbers::pi;
}

TEST_CASE("wrap maps to the canonical representative") {
  CHECK(wrap1(1.25) == doctest::Approx(0.25).epsilon(1e-15));
  CHECK(wrap1(-0.5) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(wrap1(0.0) == 0.0);
  CHECK_THROWS_AS(wrap1(std::numeric_limits<double>::quiet_NaN()), std::invalid_argument);
  CHECK_THROWS_AS(wrap1(std::numeric_limits<double>::infinity()), std::invalid_argument);
}

TEST_CASE("wrap is idempotent and lands in [0,1)") {
  std::mt19937_64 rng(42);
  std::uniform_real_distribution<double> u(-50.0, 50.0);
  for (int i = 0; i < 2000; ++i) {
    double t = u(rng);
    double w = wrap1(t);
    CHECK(w >= 0.0);
    CHECK(w < 1.0);
    CHECK(wrap1(w) == w);
  }
  // Values just below an integer must not wrap to 1.0.
  CHECK(wrap1(-1e-18) < 1.0);
  CHECK(wrap1(2.0 - 1e-16) < 1.0);
}

TEST_CASE("circle distance is symmetric and respects the seam") {
  CHECK(circle_dist1(0.1, 0.9) == doctest::Approx(0.2));
  CHECK(circle_dist1(0.0, 0.5) == doctest::Approx(0.5));
  CHECK(circle_dist1(1.25, 0.25) == doctest::Approx(0.0));
}

TEST_CASE("fourier fit of a constant keeps only the zero mode") {
  auto f = FourierMap::fit_function([](const Vec&) { return Vec::Constant(1, 0.7); }, 1, 1, 4, 16);
  VecXi zero = VecXi::Zero(1);
  CHECK(f.coeff(zero, 0).real() == doctest::Approx(0.7).epsilon(1e-14));
  for (int k = 1; k <= 4; ++k)
    CHECK(std::abs(f.coeff(VecXi::Constant(1, k), 0)) < 1e-14);
  CHECK(f.eval(Vec::Constant(1, 0.123))[0] == doctest::Approx(0.7).epsilon(1e-14));
}

TEST_CASE("fourier fit of sin(2 pi t) puts amplitude 1/2 in the |k| = 1 imaginary parts") {
  auto f = FourierMap::fit_function(
      [](const Vec& t) { return Vec::Constant(1, std::sin(kTwoPi * t[0])); }, 1, 1, 4, 16);
  auto c1 = f.coeff(VecXi::Constant(1, 1), 0);
  auto cm1 = f.coeff(VecXi::Constant(1, -1), 0);
  CHECK(c1.imag() == doctest::Approx(-0.5).epsilon(1e-13));
  CHECK(cm1.imag() == doctest::Approx(0.5).epsilon(1e-13));
  CHECK(std::abs(c1.real()) < 1e-14);
  CHECK(f.eval(Vec::Constant(1, 0.25))[0] == doctest::Approx(1.0).epsilon(1e-13));
}

TEST_CASE("fourier coefficient of the conjugacy test family") {
  // (phi(t) - t)/3 with phi(t) = t + 0.3 sin(2 pi t)/(2 pi): the analytic
  // |k| = 1 coefficient is 0.3 / (2 pi * 3 * 2).
  const double a = 0.3;
  auto f = FourierMap::fit_function(
      [&](const Vec& t) { return Vec::Constant(1, a * std::sin(kTwoPi * t[0]) / (kTwoPi * 3.0)); },
      1, 1, 8);
  double expected = a / (kTwoPi * 3.0 * 2.0);
  CHECK(std::abs(f.coeff(VecXi::Constant(1, 1), 0)) == doctest::Approx(expected).epsilon(1e-12));

  // Its derivative at 0 is 0.3/3 = 0.1; the raw phi - id derivative is 0.3.
  Mat J = f.jacobian(Vec::Zero(1));
  CHECK(J(0, 0) == doctest::Approx(a / 3.0).epsilon(1e-12));
}

TEST_CASE("fitted maps evaluate real and match samples") {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  // Random smooth periodic map: a few harmonics.
  double a1 = u(rng), b1 = u(rng), a2 = u(rng);
  auto fn = [&](const Vec& t) {
    return Vec::Constant(1, a1 * std::cos(kTwoPi * t[0]) + b1 * std::sin(kTwoPi * t[0]) +
                                a2 * std::cos(2 * kTwoPi * t[0]));
  };
  auto f = FourierMap::fit_function(fn, 1, 1, 6);
  for (int i = 0; i < 50; ++i) {
    Vec t = Vec::Constant(1, wrap1(u(rng)));
    CHECK(f.eval(t)[0] == doctest::Approx(fn(t)[0]).epsilon(1e-12));
    CHECK(std::abs(f.eval_complex(t)[0].imag()) < 1e-12);
    // Periodicity at the seam.
    CHECK(f.eval(Vec::Constant(1, t[0] + 1.0))[0] == doctest::Approx(f.eval(t)[0]).epsilon(1e-12));
  }
}

TEST_CASE("fourier derivative matches central differences") {
  auto fn = [](const Vec& t) {
    Vec v(2);
    v << std::sin(kTwoPi * t[0]) * std::cos(kTwoPi * t[1]), std::cos(kTwoPi * (t[0] + 2 * t[1]));
    return v;
  };
  auto f = FourierMap::fit_function(fn, 2, 2, 4);
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double h = 1e-6;
  for (int i = 0; i < 20; ++i) {
    Vec t(2);
    t << u(rng), u(rng);
    Mat J = f.jacobian(t);
    for (int c = 0; c < 2; ++c)
      for (int a = 0; a < 2; ++a) {
        Vec tp = t, tm = t;
        tp[a] += h;
        tm[a] -= h;
        double fd = (f.eval(tp)[c] - f.eval(tm)[c]) / (2 * h);
        CHECK(J(c, a) == doctest::Approx(fd).epsilon(1e-6));
      }
  }
}

TEST_CASE("fourier hessian matches finite differences of the jacobian") {
  auto fn = [](const Vec& t) {
    return Vec::Constant(1, std::sin(kTwoPi * t[0]) + 0.3 * std::cos(2 * kTwoPi * t[0]));
  };
  auto f = FourierMap::fit_function(fn, 1, 1, 4);
  const double h = 1e-6;
  for (double t0 : {0.0, 0.3, 0.77}) {
    Vec t = Vec::Constant(1, t0);
    Vec tp = Vec::Constant(1, t0 + h), tm = Vec::Constant(1, t0 - h);
    double fd = (f.jacobian(tp)(0, 0) - f.jacobian(tm)(0, 0)) / (2 * h);
    CHECK(f.hessian(t, 0)(0, 0) == doctest::Approx(fd).epsilon(1e-5));
  }
}

TEST_CASE("fit rejects a cutoff too large for the grid") {
  std::vector<Vec> samples(8, Vec::Zero(1));
  CHECK_THROWS_AS(FourierMap::fit(samples, 8, 1, 4), std::invalid_argument);
}

TEST_CASE("potential_from_gradient recovers a known potential") {
  // u = sin(2 pi x) cos(2 pi y) / (2 pi), q = Du.
  auto q_fn = [](const Vec& t) {
    Vec g(2);
    g << std::cos(kTwoPi * t[0]) * std::cos(kTwoPi * t[1]),
        -std::sin(kTwoPi * t[0]) * std::sin(kTwoPi * t[1]);
    return g;
  };
  FourierMap q = FourierMap::fit_function(q_fn, 2, 2, 4);
  PotentialFit pf = potential_from_gradient(q);
  CHECK(pf.curl_residual < 1e-12);
  CHECK(pf.mean_residual < 1e-13);
  for (double x : {0.1, 0.6}) {
    Vec t(2);
    t << x, 0.3;
    double expected = std::sin(kTwoPi * x) * std::cos(kTwoPi * 0.3) / kTwoPi;
    CHECK(pf.u.eval(t)[0] == doctest::Approx(expected).epsilon(1e-12));
  }
}

TEST_CASE("shifted moves the argument") {
  auto f = FourierMap::fit_function(
      [](const Vec& t) { return Vec::Constant(1, std::sin(kTwoPi * t[0])); }, 1, 1, 4);
  FourierMap g = f.shifted(Vec::Constant(1, 0.25));
  for (double t0 : {0.0, 0.4, 0.9})
    CHECK(g.eval(Vec::Constant(1, t0))[0] ==
          doctest::Approx(f.eval(Vec::Constant(1, t0 + 0.25))[0]).epsilon(1e-13));
}

TEST_CASE("tangent blocks: symplectic inverse and residual") {
  TangentBlocks t;
  t.a = Mat::Identity(2, 2);
  t.b = Mat::Identity(2, 2) * 3.0;
  t.c = Mat::Zero(2, 2);
  t.d = Mat::Identity(2, 2);
  CHECK(t.symplecticity_residual() < 1e-15);
  TangentBlocks inv = t.symplectic_inverse();
  TangentBlocks prod = t.compose_after(inv);
  CHECK(sup_norm(Mat(prod.assemble() - Mat::Identity(4, 4))) < 1e-15);
}
