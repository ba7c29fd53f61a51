#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <numbers>
#include <random>

#include "twistkam/genfun.hpp"

using namespace twistkam;

namespace {
constexpr double kTwoPi = 2.0 * std::numbers::pi;

FamilySpec integrable_1d() { return {"integrable", 1, Vec(), 0.0}; }

FamilySpec conjugated_1d(double a = 0.3) {
  return {"conjugated_integrable", 1, Vec::Constant(1, a), 0.0};
}

// Central finite differences of S against the analytic evaluators.
void check_derivatives(const GeneratingFunction& S, unsigned seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.5, 1.5);
  const int d = S.dim();
  const double h = 1e-5;
  for (int trial = 0; trial < 25; ++trial) {
    Vec x(d), y(d);
    for (int i = 0; i < d; ++i) {
      x[i] = u(rng);
      y[i] = u(rng);
    }
    Vec g1 = S.d1(x, y), g2 = S.d2(x, y);
    for (int i = 0; i < d; ++i) {
      Vec xp = x, xm = x, yp = y, ym = y;
      xp[i] += h;
      xm[i] -= h;
      yp[i] += h;
      ym[i] -= h;
      double fd1 = (S.value(xp, y) - S.value(xm, y)) / (2 * h);
      double fd2 = (S.value(x, yp) - S.value(x, ym)) / (2 * h);
      CHECK(g1[i] == doctest::Approx(fd1).epsilon(1e-6));
      CHECK(g2[i] == doctest::Approx(fd2).epsilon(1e-6));
    }
    Mat D11 = S.d11(x, y), D12 = S.d12(x, y), D22 = S.d22(x, y);
    for (int j = 0; j < d; ++j) {
      Vec xp = x, xm = x, yp = y, ym = y;
      xp[j] += h;
      xm[j] -= h;
      yp[j] += h;
      ym[j] -= h;
      Vec fd11 = (S.d1(xp, y) - S.d1(xm, y)) / (2 * h);
      Vec fd12 = (S.d1(x, yp) - S.d1(x, ym)) / (2 * h);
      Vec fd22 = (S.d2(x, yp) - S.d2(x, ym)) / (2 * h);
      for (int i = 0; i < d; ++i) {
        CHECK(D11(i, j) == doctest::Approx(fd11[i]).epsilon(2e-6));
        CHECK(D12(i, j) == doctest::Approx(fd12[i]).epsilon(2e-6));
        CHECK(D22(i, j) == doctest::Approx(fd22[i]).epsilon(2e-6));
      }
    }
    // Mixed partials: d12 = (d21)^T by evaluating d2's x-derivative.
    for (int j = 0; j < d; ++j) {
      Vec xp = x, xm = x;
      xp[j] += h;
      xm[j] -= h;
      Vec fd21 = (S.d2(xp, y) - S.d2(xm, y)) / (2 * h);
      for (int i = 0; i < d; ++i) CHECK(D12(j, i) == doctest::Approx(fd21[i]).epsilon(2e-6));
    }
  }
}

}  // namespace

TEST_CASE("integrable family values") {
  auto S = make_family(integrable_1d());
  CHECK(S->value(Vec::Constant(1, 0.2), Vec::Constant(1, 0.7)) == doctest::Approx(0.125));
  // Depends on y - x only; the residual is pure rounding noise.
  CHECK(check_periodicity(*S) <= 1e-14);
  CHECK(check_uniform_twist(*S).A == doctest::Approx(1.0));
}

TEST_CASE("conjugated family: closed form and S(x,x) = 0") {
  auto spec = conjugated_1d();
  auto S = make_family(spec);
  auto phi = family_diffeos(spec)[0];
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  for (int i = 0; i < 100; ++i) {
    double x = u(rng), y = u(rng);
    double expected = 0.5 * std::pow(phi.eval(y) - phi.eval(x), 2);
    CHECK(S->value(Vec::Constant(1, x), Vec::Constant(1, y)) ==
          doctest::Approx(expected).epsilon(1e-14));
    CHECK(S->value(Vec::Constant(1, x), Vec::Constant(1, x)) == 0.0);
  }
  CHECK(check_periodicity(*S) <= 1e-12);
}

TEST_CASE("conjugated family: twist constant is (1-a)^2") {
  auto S = make_family(conjugated_1d(0.3));
  TwistEstimate est = check_uniform_twist(*S);
  CHECK(est.ok);
  CHECK(est.A == doctest::Approx(0.49).epsilon(1e-12));
}

TEST_CASE("perturbed cosine family formula") {
  FamilySpec spec{"perturbed_cosine", 1, Vec(), 0.1};
  auto S = make_family(spec);
  double x = 0.37, y = 0.81;
  double expected = 0.5 * (y - x) * (y - x) + 0.1 * std::cos(kTwoPi * x) / (kTwoPi * kTwoPi);
  CHECK(S->value(Vec::Constant(1, x), Vec::Constant(1, y)) == doctest::Approx(expected));
  CHECK(check_periodicity(*S) <= 1e-12);
  CHECK(check_uniform_twist(*S).A == doctest::Approx(1.0));
}

TEST_CASE("a non-periodic witness fails C1 and the twist sign check") {
  // S = x y: d12 = 1, so -sym(d12) = -1.
  CallbackGeneratingFunction S(1, [](const Vec& x, const Vec& y) { return x[0] * y[0]; });
  CHECK(check_periodicity(S, 500) > 0.1);
  TwistEstimate est = check_uniform_twist(S, 500);
  CHECK(est.A == doctest::Approx(-1.0).epsilon(1e-6));
  CHECK_FALSE(est.ok);
}

TEST_CASE("analytic derivatives of every family match finite differences") {
  check_derivatives(*make_family(integrable_1d()), 101);
  check_derivatives(*make_family(conjugated_1d(0.3)), 102);
  check_derivatives(*make_family({"perturbed_cosine", 1, Vec(), 0.1}), 103);
  check_derivatives(*make_family({"conjugated_integrable", 2, Vec::Constant(2, 0.25), 0.0}), 104);
}

TEST_CASE("integrable gradients cancel: d1 + d2 = 0") {
  auto S = make_family(integrable_1d());
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  for (int i = 0; i < 50; ++i) {
    Vec x = Vec::Constant(1, u(rng)), y = Vec::Constant(1, u(rng));
    CHECK(sup_norm(Vec(S->d1(x, y) + S->d2(x, y))) < 1e-15);
  }
}

TEST_CASE("family validation errors") {
  CHECK_THROWS_AS(make_family({"unknown", 1, Vec(), 0.0}), std::invalid_argument);
  CHECK_THROWS_AS(make_family({"conjugated_integrable", 1, Vec::Constant(1, 1.0), 0.0}),
                  std::invalid_argument);
  CHECK_THROWS_AS(make_family({"integrable", 0, Vec(), 0.0}), std::invalid_argument);
}

TEST_CASE("sine diffeo inverse") {
  SineDiffeo phi{0.3};
  for (double t : {-1.3, 0.0, 0.2, 0.5, 0.99, 7.6}) {
    CHECK(phi.inverse(phi.eval(t)) == doctest::Approx(t).epsilon(1e-12));
  }
  // Equivariance under integer shifts.
  CHECK(phi.eval(1.25) == doctest::Approx(phi.eval(0.25) + 1.0));
}

TEST_CASE("transformed generating function S0 shifts the fiber") {
  // For the integrable family with u = 0, p_inf = 1/3:
  // S0(x,y) = S - <p_inf, y - x>, so d1 S0 = d1 S + p_inf.
  auto S = make_family(integrable_1d());
  FourierMap u0(1, 2, 1);
  TransformedGeneratingFunction S0(S, u0, Vec::Constant(1, 1.0 / 3.0));
  Vec x = Vec::Constant(1, 0.2), y = Vec::Constant(1, 0.9);
  CHECK(S0.value(x, y) == doctest::Approx(S->value(x, y) - (0.9 - 0.2) / 3.0));
  CHECK(S0.d1(x, y)[0] == doctest::Approx(S->d1(x, y)[0] + 1.0 / 3.0));
  CHECK(S0.d2(x, y)[0] == doctest::Approx(S->d2(x, y)[0] - 1.0 / 3.0));
  CHECK(S0.d12(x, y)(0, 0) == doctest::Approx(S->d12(x, y)(0, 0)));
  CHECK(check_periodicity(S0) <= 1e-13);
}

TEST_CASE("torus diffeo: inverse fit and Newton polish") {
  // psi = phi^{-1} for the sine diffeo, represented by fitting psi - id.
  SineDiffeo phi{0.3};
  auto periodic = FourierMap::fit_function(
      [&](const Vec& t) { return Vec::Constant(1, phi.inverse(t[0]) - t[0]); }, 1, 1, 24);
  TorusDiffeo psi = TorusDiffeo::from_periodic(periodic);
  for (double t : {0.0, 0.21, 0.5, 0.93}) {
    Vec tv = Vec::Constant(1, t);
    CHECK(psi.apply(tv)[0] == doctest::Approx(phi.inverse(t)).epsilon(1e-10));
    CHECK(psi.apply_inverse(psi.apply(tv))[0] == doctest::Approx(t).epsilon(1e-11));
    // Degree one.
    CHECK(psi.apply(Vec::Constant(1, t + 1.0))[0] ==
          doctest::Approx(psi.apply(tv)[0] + 1.0).epsilon(1e-12));
  }
}

TEST_CASE("pulled-back generating function has consistent derivatives") {
  auto spec = conjugated_1d(0.3);
  auto S = make_family(integrable_1d());
  SineDiffeo phi = family_diffeos(spec)[0];
  auto periodic = FourierMap::fit_function(
      [&](const Vec& t) { return Vec::Constant(1, phi.eval(t[0]) - t[0]); }, 1, 1, 8);
  TorusDiffeo psi{periodic, FourierMap(1, 0, 1)};
  PulledBackGeneratingFunction S1(S, psi, 0.49);
  // S1(x,y) = |phi(y) - phi(x)|^2/2 equals the conjugated family.
  auto Sc = make_family(spec);
  Vec x = Vec::Constant(1, 0.15), y = Vec::Constant(1, 0.62);
  CHECK(S1.value(x, y) == doctest::Approx(Sc->value(x, y)).epsilon(1e-12));
  CHECK(S1.d1(x, y)[0] == doctest::Approx(Sc->d1(x, y)[0]).epsilon(1e-10));
  CHECK(S1.d11(x, y)(0, 0) == doctest::Approx(Sc->d11(x, y)(0, 0)).epsilon(1e-9));
  CHECK(S1.d12(x, y)(0, 0) == doctest::Approx(Sc->d12(x, y)(0, 0)).epsilon(1e-9));
  CHECK(S1.d22(x, y)(0, 0) == doctest::Approx(Sc->d22(x, y)(0, 0)).epsilon(1e-9));
  check_derivatives(S1, 105);
}

TEST_CASE("scaled generating function divides everything by eps") {
  auto S = make_family(integrable_1d());
  ScaledGeneratingFunction Se(S, 0.25);
  Vec x = Vec::Constant(1, 0.1), y = Vec::Constant(1, 0.4);
  CHECK(Se.value(x, y) == doctest::Approx(4.0 * S->value(x, y)));
  CHECK(Se.twist_constant() == doctest::Approx(4.0));
  CHECK_THROWS_AS(ScaledGeneratingFunction(S, 0.0), std::invalid_argument);
}
