#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <numbers>

#include "twistkam/conjugacy.hpp"

using namespace twistkam;

namespace {
constexpr double kTwoPi = 2.0 * std::numbers::pi;

GenFunPtr integrable() { return make_family({"integrable", 1, Vec(), 0.0}); }
GenFunPtr conjugated(double a = 0.3) {
  return make_family({"conjugated_integrable", 1, Vec::Constant(1, a), 0.0});
}
Vec v1(double t) { return Vec::Constant(1, t); }

InvariantGraph graph31(const GenFunPtr& S) {
  return build_invariant_graph(S, 3, VecXi::Constant(1, 1), 64, {.fourier_cutoff = 12});
}

}  // namespace

TEST_CASE("vertical transversality: integrable n = 5 gives sigma = 5") {
  TwistMap F(integrable());
  CHECK(vertical_transversality(F, {v1(0.3), v1(0.2)}, 5) == doctest::Approx(5.0).epsilon(1e-12));
  CHECK_THROWS_AS(vertical_transversality(F, {v1(0.3), v1(0.2)}, 0), std::invalid_argument);
}

TEST_CASE("conjugated family passes the scan; margins all positive") {
  TwistMap F(conjugated());
  ScanOptions so;
  so.x_grid = 12;
  so.p_grid = 7;
  so.p_center = v1(1.0 / 3.0);
  so.n_max = 20;
  ScanResult res = transversality_scan(F, so);
  CHECK(res.min_margin > 0.05);
  for (const auto& row : res.table) CHECK(row.back() > 0.0);
}

TEST_CASE("serial and parallel scans agree") {
  TwistMap F(conjugated());
  ScanOptions so;
  so.x_grid = 8;
  so.p_grid = 5;
  so.p_center = v1(1.0 / 3.0);
  so.n_max = 8;
  so.refine = false;
  ScanResult a = transversality_scan_serial(F, so);
  ScanResult b = transversality_scan_parallel(F, so);
  CHECK(a.min_margin == b.min_margin);
  CHECK(a.argmin_n == b.argmin_n);
}

TEST_CASE("strong perturbation is flagged with a conjugate-point witness") {
  // At (x,p) = (0,0) the standard-map differential satisfies DF^2 = -I for
  // eps = 2, so the b block of DF^2 degenerates there.
  TwistMap F(make_family({"perturbed_cosine", 1, Vec(), 2.0}));
  ScanOptions so;
  so.x_grid = 16;
  so.p_grid = 9;
  so.p_center = v1(1.0 / 3.0);
  so.p_window = 0.5;
  so.n_max = 12;
  ScanResult res = transversality_scan(F, so);
  CHECK(res.min_margin <= 1e-6);
}

TEST_CASE("monodromy: integrable B_3 = 3") {
  auto S = integrable();
  TwistMap F(S);
  InvariantGraph g = graph31(S);
  MonodromyReport rep = monodromy_B(F, g, v1(0.4), 3);
  CHECK(rep.B(0, 0) == doctest::Approx(3.0).epsilon(1e-12));
  CHECK(rep.symmetry_residual <= 1e-12);
  CHECK(rep.d_block_deviation <= 1e-12);
  CHECK(rep.smallest_eigenvalue > 0.0);
}

TEST_CASE("monodromy: conjugated B_3(x) = 3 / phi'(x)^2") {
  SineDiffeo phi{0.3};
  auto S = conjugated();
  TwistMap F(S, 1e-13);
  InvariantGraph g = graph31(S);
  for (double x : {0.0, 0.21, 0.5, 0.83}) {
    MonodromyReport rep = monodromy_B(F, g, v1(x), 3);
    double expected = 3.0 / (phi.deriv(x) * phi.deriv(x));
    CHECK(rep.B(0, 0) == doctest::Approx(expected).epsilon(1e-8));
    CHECK(rep.symmetry_residual <= 1e-8);
    CHECK(rep.d_block_deviation <= 1e-8);
    CHECK(rep.smallest_eigenvalue > 0.0);
  }
}

TEST_CASE("monodromy two-route cross-check against the zero-section map") {
  // Route 1: conjugate DF^N by the graph frame. Route 2: tangent product of
  // the twist map of S0 along its zero section.
  auto S = conjugated();
  TwistMap F(S, 1e-13);
  InvariantGraph g = graph31(S);
  auto S0 = std::make_shared<TransformedGeneratingFunction>(S, g.u, g.p_inf);
  TwistMap F0(S0, 1e-13);
  for (double x : {0.12, 0.5, 0.68}) {
    MonodromyReport rep = monodromy_B(F, g, v1(x), 3);
    TangentBlocks tb = F0.tangent_product({v1(x), Vec::Zero(1)}, 3);
    CHECK(rep.B(0, 0) == doctest::Approx(tb.b(0, 0)).epsilon(1e-9));
    CHECK(sup_norm(Mat(tb.a - Mat::Identity(1, 1))) <= 1e-9);
    CHECK(sup_norm(Mat(tb.d - Mat::Identity(1, 1))) <= 1e-9);
    CHECK(sup_norm(tb.c) <= 1e-9);
  }
}

TEST_CASE("B_{kN} = k B_N and the S_kN identities") {
  auto S = conjugated();
  InvariantGraph g = graph31(S);
  HessianIdentityReport rep = hessian_identities(S, g, v1(0.27), 3, 5);
  CHECK(rep.bkn_scaling_residual <= 1e-7);
  for (double r : rep.skn_identity_residual) CHECK(r <= 1e-6);
  for (double r : rep.action_fd_residual) CHECK(r <= 1e-5);
  CHECK(rep.symplectic_residual <= 1e-9);
  CHECK(rep.d11_min_eigenvalue > 0.0);
  CHECK(rep.d22_min_eigenvalue > 0.0);
}

TEST_CASE("integrable S_kN = 9 k^2 + 3 k") {
  auto S = integrable();
  InvariantGraph g = graph31(S);
  auto S0 = std::make_shared<TransformedGeneratingFunction>(S, g.u, g.p_inf);
  TwistMap F0(S0, 1e-13);
  for (int k = 1; k <= 5; ++k) {
    long n = 3L * k;
    Mat Bn = F0.tangent_product({v1(0.0), Vec::Zero(1)}, n).b;
    Mat Bn1 = F0.tangent_product({v1(0.0), Vec::Zero(1)}, n + 1).b;
    auto pts = F0.orbit({v1(0.0), Vec::Zero(1)}, n + 1);
    Mat Skn = -Bn.transpose() * S0->d12(pts[n].x, pts[n + 1].x) * Bn1;
    CHECK(Skn(0, 0) == doctest::Approx(9.0 * k * k + 3.0 * k).epsilon(1e-10));
  }
  HessianIdentityReport rep = hessian_identities(S, g, v1(0.0), 3, 5);
  for (double r : rep.skn_identity_residual) CHECK(r <= 1e-8);
}

TEST_CASE("metric field: serial/parallel sampling, SPD, fit accuracy") {
  SineDiffeo phi{0.3};
  auto S = conjugated();
  TwistMap F(S, 1e-13);
  InvariantGraph g = graph31(S);
  MetricField ms = metric_from_graph_serial(F, g, 3, 64, 12);
  MetricField mp = metric_from_graph_parallel(F, g, 3, 64, 12);
  for (size_t i = 0; i < ms.samples.size(); ++i)
    CHECK(sup_norm(Mat(ms.samples[i] - mp.samples[i])) == 0.0);
  CHECK(ms.min_eigenvalue > 0.0);
  CHECK(ms.sym_residual <= 1e-8);
  for (double x : {0.1, 0.47, 0.9})
    CHECK(ms.B_at(v1(x))(0, 0) ==
          doctest::Approx(3.0 / (phi.deriv(x) * phi.deriv(x))).epsilon(1e-8));
}

TEST_CASE("flat structure: integrable gives psi = id, B_bar = N") {
  auto S = integrable();
  TwistMap F(S);
  InvariantGraph g = graph31(S);
  MetricField metric = metric_from_graph(F, g, 3, 64, 12);
  FlatStructure flat = flat_structure(metric);
  CHECK(flat.B_bar(0, 0) == doctest::Approx(3.0).epsilon(1e-10));
  CHECK(flat.psi.periodic.sup_norm_estimate() <= 1e-10);
  CHECK(flat.conjugacy_residual <= 1e-9);
  CHECK(flat.min_jacobian_det > 0.0);
}

TEST_CASE("flat structure: conjugated gives B_bar = 3, psi = phi^{-1}") {
  SineDiffeo phi{0.3};
  auto S = conjugated();
  TwistMap F(S, 1e-13);
  InvariantGraph g = build_invariant_graph(S, 3, VecXi::Constant(1, 1), 128,
                                           {.fourier_cutoff = 24});
  MetricField metric = metric_from_graph(F, g, 3, 128, 24);
  FlatStructure flat = flat_structure(metric, {.psi_cutoff = 32});
  CHECK(flat.B_bar(0, 0) == doctest::Approx(3.0).epsilon(1e-8));
  double worst = 0.0;
  for (const auto& th : grid_nodes(1, 128))
    worst = std::max(worst, std::fabs(flat.psi.apply(th)[0] - phi.inverse(th[0])));
  CHECK(worst <= 1e-6);   // acceptance tolerance
  CHECK(worst <= 1e-9);   // actual accuracy of the closed form
  CHECK(flat.conjugacy_residual <= 1e-7);
  CHECK(flat.min_jacobian_det > 0.0);
  // mean-zero gauge
  VecXi zero = VecXi::Zero(1);
  CHECK(std::abs(flat.psi.periodic.coeff(zero, 0)) <= 1e-10);
}

TEST_CASE("flat structure: 2d product family") {
  SineDiffeo phi1{0.2}, phi2{0.3};
  FamilySpec spec{"conjugated_integrable", 2, (Vec(2) << 0.2, 0.3).finished(), 0.0};
  auto S = make_family(spec);
  TwistMap F(S, 1e-13);
  VecXi r(2);
  r << 1, 0;
  InvariantGraph g = build_invariant_graph(S, 2, r, 33, {.fourier_cutoff = 8});
  MetricField metric = metric_from_graph(F, g, 2, 49, 12);
  FlatStructure flat = flat_structure(metric, {.psi_cutoff = 12});
  CHECK(flat.B_bar(0, 0) == doctest::Approx(2.0).epsilon(1e-6));
  CHECK(flat.B_bar(1, 1) == doctest::Approx(2.0).epsilon(1e-6));
  CHECK(std::fabs(flat.B_bar(0, 1)) <= 1e-6);
  double worst = 0.0;
  for (const auto& th : grid_nodes(2, 24)) {
    Vec pa = flat.psi.apply(th);
    worst = std::max(worst, std::fabs(pa[0] - phi1.inverse(th[0])));
    worst = std::max(worst, std::fabs(pa[1] - phi2.inverse(th[1])));
  }
  CHECK(worst <= 1e-5);
  CHECK(flat.conjugacy_residual <= 1e-7);
}

TEST_CASE("jacobi probe: constant metric has margin at the first step") {
  MetricField B = MetricField::from_function(
      1, [](const Vec&) { return Mat::Constant(1, 1, 3.0); }, 17, 4);
  const double T = 2.0;
  const int steps = 200;
  JacobiProbeResult res = jacobi_conjugate_probe(B, v1(0.1), v1(0.7), T, steps);
  CHECK(res.min_margin == doctest::Approx((T / steps) * 3.0).epsilon(1e-9));
  CHECK(res.t_at_min == doctest::Approx(T / steps));
  CHECK_FALSE(res.degenerate);
}

TEST_CASE("jacobi probe: conjugated-family metric is conjugate-point free") {
  SineDiffeo phi{0.3};
  MetricField B = MetricField::from_function(
      1,
      [&](const Vec& x) {
        double d = phi.deriv(x[0]);
        return Mat::Constant(1, 1, 3.0 / (d * d));
      },
      65, 12);
  JacobiProbeResult res = jacobi_conjugate_probe(B, v1(0.2), v1(0.5), 3.0, 1000);
  CHECK(res.min_margin > 0.0);
  CHECK_FALSE(res.degenerate);
}

TEST_CASE("jacobi probe: a bumped 2d metric develops conjugate points") {
  // Conformal metric B = exp(2 eps cos(2 pi x1)) I2 has positive curvature
  // around x1 = 1/2; the vertical geodesic through it focuses in finite time.
  const double eps = 0.5;
  MetricField B = MetricField::from_function(
      2,
      [&](const Vec& x) {
        return Mat(std::exp(2.0 * eps * std::cos(kTwoPi * x[0])) * Mat::Identity(2, 2));
      },
      33, 8);
  Vec x0(2), p0(2);
  x0 << 0.5, 0.0;
  p0 << 0.0, 1.0;
  JacobiProbeResult res = jacobi_conjugate_probe(B, x0, p0, 4.0, 2000);
  CHECK(res.degenerate);
}

TEST_CASE("jacobi probe input validation") {
  MetricField B = MetricField::from_function(
      1, [](const Vec&) { return Mat::Constant(1, 1, 1.0); }, 9, 2);
  CHECK_THROWS(jacobi_conjugate_probe(B, v1(0.0), v1(1.0), -1.0, 100));
}
