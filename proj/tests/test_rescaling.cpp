#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <numbers>
#include <random>

#include "twistkam/rescaling.hpp"
#include "twistkam/variational.hpp"

using namespace twistkam;

namespace {

GenFunPtr integrable() { return make_family({"integrable", 1, Vec(), 0.0}); }
GenFunPtr conjugated(double a = 0.3) {
  return make_family({"conjugated_integrable", 1, Vec::Constant(1, a), 0.0});
}
Vec v1(double t) { return Vec::Constant(1, t); }

InvariantGraph graph31(const GenFunPtr& S, int grid = 64, int cutoff = 12) {
  return build_invariant_graph(S, 3, VecXi::Constant(1, 1), grid, {.fourier_cutoff = cutoff});
}

// Zero-section generating function S0 for (N, r) = (3, 1).
std::shared_ptr<TransformedGeneratingFunction> make_S0(const GenFunPtr& S,
                                                       const InvariantGraph& g) {
  return std::make_shared<TransformedGeneratingFunction>(S, g.u, g.p_inf);
}

// psi = phi^{-1} fitted, for building F1 in tests.
TorusDiffeo fitted_phi_inverse(double a, int cutoff = 32) {
  SineDiffeo phi{a};
  auto periodic = FourierMap::fit_function(
      [&](const Vec& t) { return Vec::Constant(1, phi.inverse(t[0]) - t[0]); }, 1, 1, cutoff);
  return TorusDiffeo::from_periodic(periodic, cutoff);
}

}  // namespace

TEST_CASE("two-path consistency: twist map of S/eps vs explicit conjugation") {
  auto S = conjugated();
  TwistMap F(S, 1e-13);
  for (double eps : {1.0, 0.25, 0.02}) {
    TwistMap Feps = rescale_map(S, eps, 1e-13);
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int i = 0; i < 40; ++i) {
      CotangentPoint z{v1(u(rng)), v1(2.0 * u(rng) - 1.0)};
      CotangentPoint a = Feps.forward(z);
      // R_eps^{-1} o F o R_eps by hand.
      CotangentPoint w = F.forward({z.x, eps * z.p});
      CHECK(sup_norm(Vec(a.x - w.x)) <= 1e-10);
      CHECK(sup_norm(Vec(a.p - w.p / eps)) <= 1e-10);
    }
  }
}

TEST_CASE("integrable rescaling: Phi_eps(x,p) = (x + eps p, p)") {
  auto S = integrable();
  TwistMap Feps = rescale_map(S, 0.1);
  CotangentPoint w = Feps.forward({v1(0.3), v1(0.5)});
  CHECK(w.x[0] == doctest::Approx(0.3 + 0.1 * 0.5).epsilon(1e-13));
  CHECK(w.p[0] == doctest::Approx(0.5).epsilon(1e-13));
}

TEST_CASE("eps = 1 reproduces F; eps <= 0 rejected") {
  auto S = conjugated();
  TwistMap F(S, 1e-13);
  TwistMap F1 = rescale_map(S, 1.0, 1e-13);
  CotangentPoint z{v1(0.4), v1(0.2)};
  CHECK(sup_norm(Vec(F.forward(z).x - F1.forward(z).x)) <= 1e-13);
  CHECK_THROWS_AS(rescale_map(S, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(rescale_map(S, -1.0), std::invalid_argument);
}

TEST_CASE("maps fixing the zero section: Phi_eps(x, 0) = (x, 0)") {
  auto S = conjugated();
  InvariantGraph g = graph31(S);
  auto S0 = make_S0(S, g);
  TwistMap F0(S0, 1e-13);
  Vec shift = Vec::Constant(1, 1.0);
  for (double eps : {0.5, 0.05}) {
    for (double x : {0.0, 0.37, 0.92}) {
      CotangentPoint w = rescaled_iterate(F0, eps, {v1(x), Vec::Zero(1)}, 3, shift);
      CHECK(std::fabs(w.x[0] - x) <= 1e-10);
      CHECK(std::fabs(w.p[0]) <= 1e-10);
    }
  }
}

TEST_CASE("euler defect: integrable is exact") {
  auto S = integrable();
  InvariantGraph g = graph31(S);
  auto S0 = make_S0(S, g);
  TwistMap F0(S0, 1e-14);
  MetricField B = MetricField::from_function(
      1, [](const Vec&) { return Mat::Constant(1, 1, 3.0); }, 17, 4);
  EulerDefectReport rep = euler_defect(F0, 3, VecXi::Constant(1, 1), B, {v1(0.2), v1(0.8)}, 1e-2);
  CHECK(rep.defect <= 1e-12);
  CHECK(rep.momentum_defect <= 1e-12);
}

TEST_CASE("euler defect: conjugated family has Richardson slope 2") {
  SineDiffeo phi{0.3};
  auto S = conjugated();
  InvariantGraph g = graph31(S);
  auto S0 = make_S0(S, g);
  TwistMap F0(S0, 1e-14);
  MetricField B = MetricField::from_function(
      1,
      [&](const Vec& x) {
        double d = phi.deriv(x[0]);
        return Mat::Constant(1, 1, 3.0 / (d * d));
      },
      129, 24);
  EulerDefectReport rep = euler_defect(F0, 3, VecXi::Constant(1, 1), B, {v1(0.37), v1(0.8)}, 1e-2);
  CHECK(rep.slope >= 1.9);
  CHECK(rep.slope <= 2.1);
  CHECK(rep.momentum_slope >= 1.9);
  CHECK(rep.momentum_slope <= 2.1);
}

TEST_CASE("flow convergence: constant metric is exact for every m") {
  auto S = integrable();
  InvariantGraph g = graph31(S);
  auto S0 = make_S0(S, g);
  TwistMap F0(S0, 1e-14);
  MetricField B = MetricField::from_function(
      1, [](const Vec&) { return Mat::Constant(1, 1, 3.0); }, 17, 4);
  std::vector<CotangentPoint> samples{{v1(0.2), v1(0.5)}, {v1(0.7), v1(-0.3)}};
  auto rows = flow_convergence(F0, 3, VecXi::Constant(1, 1), B, 1.0, {4, 8}, samples, 2048);
  for (const auto& row : rows) CHECK(row.c0_distance <= 1e-9);
}

TEST_CASE("flow convergence: conjugated family is first order in 1/m") {
  SineDiffeo phi{0.3};
  auto S = conjugated();
  InvariantGraph g = graph31(S, 128, 24);
  auto S0 = make_S0(S, g);
  TwistMap F0(S0, 1e-14);
  MetricField B = MetricField::from_function(
      1,
      [&](const Vec& x) {
        double d = phi.deriv(x[0]);
        return Mat::Constant(1, 1, 3.0 / (d * d));
      },
      129, 24);
  std::vector<CotangentPoint> samples{{v1(0.13), v1(0.6)}, {v1(0.59), v1(0.6)}};
  auto rows = flow_convergence(F0, 3, VecXi::Constant(1, 1), B, 1.0, {8, 16, 32, 64}, samples);
  for (size_t i = 0; i + 1 < rows.size(); ++i) {
    double ratio = rows[i].c0_distance / rows[i + 1].c0_distance;
    CHECK(ratio >= 1.7);
    CHECK(ratio <= 2.3);
    CHECK(rows[i + 1].c1_distance < rows[i].c1_distance);
  }
}

TEST_CASE("normal form: integrable is exact with infinite exponents") {
  auto S = integrable();
  InvariantGraph g = graph31(S);
  auto S0 = make_S0(S, g);
  TwistMap F1(S0, 1e-14);
  NormalFormReport rep = verify_normal_form(F1, 3, VecXi::Constant(1, 1));
  CHECK(rep.exact);
  CHECK(std::isinf(rep.q1));
  CHECK(std::isinf(rep.q2));
  CHECK(rep.B_bar_fit(0, 0) == doctest::Approx(3.0).epsilon(1e-12));
}

TEST_CASE("normal form: conjugated family flattens exactly (B_bar = 3)") {
  // After the exact chart this family is rigidly integrable, so the O(p^2)
  // and O(p^3) remainders vanish identically: the estimator must report the
  // exact sentinel rather than fitting a slope through rounding noise.
  auto S = conjugated();
  InvariantGraph g = graph31(S, 128, 24);
  auto S0 = make_S0(S, g);
  TorusDiffeo psi = fitted_phi_inverse(0.3);
  auto S1 = std::make_shared<PulledBackGeneratingFunction>(S0, psi, 0.49);
  TwistMap F1(S1, 1e-14);
  NormalFormReport rep = verify_normal_form(F1, 3, VecXi::Constant(1, 1));
  CHECK(rep.B_bar_fit(0, 0) == doctest::Approx(3.0).epsilon(1e-7));
  CHECK(rep.exact);
  CHECK(rep.q1 >= 1.9);  // inf sentinel
  CHECK(rep.q2 >= 2.9);
  CHECK(sup_norm(Mat(rep.B_bar_fit - rep.B_bar_fit.transpose())) <= 1e-8);
}

namespace {

// S(x,y) = |y-x|^2/2 + c cos(2 pi x) (y-x)^3 per axis: satisfies C1 and C2
// for small c, fixes the zero section with B = I, and carries genuine O(p^2)
// position and O(p^3) momentum remainders. Exercises the exponent estimator
// away from the exactly-flattenable families.
class CubicTermGF final : public GeneratingFunction {
 public:
  CubicTermGF(int d, double c) : d_(d), c_(c) {}
  int dim() const override { return d_; }
  double value(const Vec& x, const Vec& y) const override {
    double s = 0.0;
    for (int i = 0; i < d_; ++i) {
      double dd = y[i] - x[i];
      s += 0.5 * dd * dd + c_ * std::cos(2 * std::numbers::pi * x[i]) * dd * dd * dd;
    }
    return s;
  }
  Vec d1(const Vec& x, const Vec& y) const override {
    Vec g(d_);
    for (int i = 0; i < d_; ++i) {
      double dd = y[i] - x[i];
      double tp = 2 * std::numbers::pi;
      g[i] = -dd - c_ * tp * std::sin(tp * x[i]) * dd * dd * dd -
             3.0 * c_ * std::cos(tp * x[i]) * dd * dd;
    }
    return g;
  }
  Vec d2(const Vec& x, const Vec& y) const override {
    Vec g(d_);
    for (int i = 0; i < d_; ++i) {
      double dd = y[i] - x[i];
      g[i] = dd + 3.0 * c_ * std::cos(2 * std::numbers::pi * x[i]) * dd * dd;
    }
    return g;
  }
  Mat d11(const Vec& x, const Vec& y) const override {
    Mat m = Mat::Zero(d_, d_);
    double tp = 2 * std::numbers::pi;
    for (int i = 0; i < d_; ++i) {
      double dd = y[i] - x[i];
      m(i, i) = 1.0 - c_ * tp * tp * std::cos(tp * x[i]) * dd * dd * dd +
                6.0 * c_ * tp * std::sin(tp * x[i]) * dd * dd +
                6.0 * c_ * std::cos(tp * x[i]) * dd;
    }
    return m;
  }
  Mat d12(const Vec& x, const Vec& y) const override {
    Mat m = Mat::Zero(d_, d_);
    double tp = 2 * std::numbers::pi;
    for (int i = 0; i < d_; ++i) {
      double dd = y[i] - x[i];
      m(i, i) = -1.0 - 3.0 * c_ * tp * std::sin(tp * x[i]) * dd * dd -
                6.0 * c_ * std::cos(tp * x[i]) * dd;
    }
    return m;
  }
  Mat d22(const Vec& x, const Vec& y) const override {
    Mat m = Mat::Zero(d_, d_);
    for (int i = 0; i < d_; ++i)
      m(i, i) = 1.0 + 6.0 * c_ * std::cos(2 * std::numbers::pi * x[i]) * (y[i] - x[i]);
    return m;
  }
  double twist_constant() const override { return 0.5; }

 private:
  int d_;
  double c_;
};

}  // namespace

TEST_CASE("normal form estimator measures genuine quadratic/cubic remainders") {
  auto S = std::make_shared<CubicTermGF>(1, 0.3);
  TwistMap F(S, 1e-14);
  NormalFormReport rep = verify_normal_form(F, 1, VecXi::Zero(1));
  CHECK_FALSE(rep.exact);
  CHECK(rep.B_bar_fit(0, 0) == doctest::Approx(1.0).epsilon(1e-10));
  CHECK(rep.q1 >= 1.9);
  CHECK(rep.q1 <= 2.1);
  CHECK(rep.q2 >= 2.9);
  CHECK(rep.q2 <= 3.1);
}

TEST_CASE("normal form: 2d product family B_bar = diag(2, 2)") {
  SineDiffeo phi1{0.2}, phi2{0.3};
  FamilySpec spec{"conjugated_integrable", 2, (Vec(2) << 0.2, 0.3).finished(), 0.0};
  auto S = make_family(spec);
  VecXi r(2);
  r << 1, 0;
  InvariantGraph g = build_invariant_graph(S, 2, r, 33, {.fourier_cutoff = 8});
  auto S0 = std::make_shared<TransformedGeneratingFunction>(S, g.u, g.p_inf);
  auto periodic = FourierMap::fit_function(
      [&](const Vec& t) {
        Vec out(2);
        out << phi1.inverse(t[0]) - t[0], phi2.inverse(t[1]) - t[1];
        return out;
      },
      2, 2, 32);
  TorusDiffeo psi = TorusDiffeo::from_periodic(periodic, 32);
  auto S1 = std::make_shared<PulledBackGeneratingFunction>(S0, psi, 0.49);
  TwistMap F1(S1, 1e-13);
  NormalFormReport rep = verify_normal_form(F1, 2, r);
  CHECK(rep.B_bar_fit(0, 0) == doctest::Approx(2.0).epsilon(1e-6));
  CHECK(rep.B_bar_fit(1, 1) == doctest::Approx(2.0).epsilon(1e-6));
  CHECK(std::fabs(rep.B_bar_fit(0, 1)) <= 1e-7);
  CHECK(rep.q1 >= 1.9);
  CHECK(rep.q2 >= 2.9);
}
