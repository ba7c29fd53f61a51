#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "twistkam/variational.hpp"

using namespace twistkam;

namespace {

GenFunPtr integrable() { return make_family({"integrable", 1, Vec(), 0.0}); }
GenFunPtr conjugated(double a = 0.3) {
  return make_family({"conjugated_integrable", 1, Vec::Constant(1, a), 0.0});
}
Vec v1(double t) { return Vec::Constant(1, t); }

}  // namespace

TEST_CASE("integrable BVP is the straight line") {
  auto S = integrable();
  ExtremalSequence seq = extremal_bvp(*S, v1(0.0), v1(0.5), 5);
  for (int i = 0; i <= 5; ++i) CHECK(seq.points[i][0] == doctest::Approx(0.1 * i).epsilon(1e-12));
  CHECK(stationarity_residual(*S, seq.points) <= 1e-10);
}

TEST_CASE("conjugated BVP is the straight line pushed through the conjugacy") {
  SineDiffeo phi{0.3};
  auto S = conjugated();
  ExtremalSequence seq = extremal_bvp(*S, v1(0.0), v1(0.5), 5);
  double step = (phi.eval(0.5) - phi.eval(0.0)) / 5.0;
  for (int i = 0; i <= 5; ++i) {
    double expected = phi.inverse(phi.eval(0.0) + i * step);
    CHECK(seq.points[i][0] == doctest::Approx(expected).epsilon(1e-10));
  }
  CHECK(stationarity_residual(*S, seq.points) <= 1e-10);
  CHECK(seq.points.front()[0] == 0.0);
  CHECK(seq.points.back()[0] == 0.5);
}

TEST_CASE("the solution minimizes the action against random perturbations") {
  auto S = conjugated();
  ExtremalSequence seq = extremal_bvp(*S, v1(0.1), v1(0.9), 8);
  double base = action(*S, seq.points);
  std::mt19937_64 rng(97);
  std::uniform_real_distribution<double> u(-0.2, 0.2);
  for (int trial = 0; trial < 100; ++trial) {
    auto pts = seq.points;
    for (size_t i = 1; i + 1 < pts.size(); ++i) pts[i][0] += u(rng);
    CHECK(action(*S, pts) > base);
  }
}

TEST_CASE("interior hessian is positive definite at the solution") {
  auto S = conjugated();
  ExtremalSequence seq = extremal_bvp(*S, v1(0.0), v1(1.3), 7);
  Mat H = interior_hessian(*S, seq.points);
  Eigen::SelfAdjointEigenSolver<Mat> es(H);
  CHECK(es.eigenvalues().minCoeff() > 0.0);
}

TEST_CASE("multi-start uniqueness probe") {
  auto S = conjugated();
  ExtremalSequence ref = extremal_bvp(*S, v1(0.2), v1(0.7), 6);
  std::mt19937_64 rng(61);
  std::uniform_real_distribution<double> u(-0.4, 0.4);
  for (int trial = 0; trial < 10; ++trial) {
    std::vector<Vec> init = ref.points;
    for (size_t i = 1; i + 1 < init.size(); ++i) init[i][0] += u(rng);
    ExtremalSequence seq = extremal_bvp(*S, v1(0.2), v1(0.7), 6, 1e-12, 60, &init);
    double dev = 0.0;
    for (size_t i = 0; i < init.size(); ++i)
      dev = std::max(dev, std::fabs(seq.points[i][0] - ref.points[i][0]));
    CHECK(dev <= 1e-8);
  }
}

TEST_CASE("periodic orbit: integrable and conjugated oracles") {
  auto Si = integrable();
  VecXi r = VecXi::Constant(1, 1);
  ExtremalSequence seq = periodic_orbit(*Si, v1(0.2), 3, r);
  for (int i = 0; i <= 3; ++i) CHECK(seq.points[i][0] == doctest::Approx(0.2 + i / 3.0));
  Vec p0 = -Si->d1(seq.points[0], seq.points[1]);
  CHECK(p0[0] == doctest::Approx(1.0 / 3.0));

  SineDiffeo phi{0.3};
  auto Sc = conjugated();
  ExtremalSequence sc = periodic_orbit(*Sc, v1(0.2), 3, r);
  for (int i = 0; i <= 3; ++i)
    CHECK(sc.points[i][0] == doctest::Approx(phi.inverse(phi.eval(0.2) + i / 3.0)).epsilon(1e-10));
  Vec pc = -Sc->d1(sc.points[0], sc.points[1]);
  CHECK(pc[0] == doctest::Approx(phi.deriv(0.2) / 3.0).epsilon(1e-10));

  TwistMap F(Sc);
  CHECK(shift_periodicity_residual(F, sc, 3, r, 9) <= 1e-8);
}

TEST_CASE("serial and parallel graph sampling agree exactly") {
  auto S = conjugated();
  VecXi r = VecXi::Constant(1, 1);
  auto a = graph_momentum_samples_serial(*S, 3, r, 32);
  auto b = graph_momentum_samples_parallel(*S, 3, r, 32);
  REQUIRE(a.size() == b.size());
  for (size_t i = 0; i < a.size(); ++i) CHECK(sup_norm(Vec(a[i] - b[i])) == 0.0);
}

TEST_CASE("invariant graph: integrable") {
  auto S = integrable();
  VecXi r = VecXi::Constant(1, 1);
  InvariantGraph g = build_invariant_graph(S, 3, r, 64);
  CHECK(g.p_inf[0] == doctest::Approx(1.0 / 3.0).epsilon(1e-13));
  for (double x : {0.0, 0.31, 0.77})
    CHECK(g.p_at(v1(x))[0] == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
  CHECK(g.u.sup_norm_estimate() <= 1e-12);
  CHECK(g.invariance_residual <= 1e-10);
}

TEST_CASE("invariant graph: conjugated oracle p = phi'/3, u = (phi - id)/3") {
  SineDiffeo phi{0.3};
  auto S = conjugated();
  VecXi r = VecXi::Constant(1, 1);
  InvariantGraph g = build_invariant_graph(S, 3, r, 64, {.fourier_cutoff = 12});
  CHECK(g.p_inf[0] == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
  for (double x : {0.05, 0.33, 0.5, 0.91}) {
    CHECK(g.p_at(v1(x))[0] == doctest::Approx(phi.deriv(x) / 3.0).epsilon(1e-9));
    double u_expected = (phi.eval(x) - x) / 3.0;
    CHECK(g.u.eval(v1(x))[0] == doctest::Approx(u_expected).epsilon(1e-9));
  }
  CHECK(g.invariance_residual <= 1e-8);
  CHECK(g.fit_residual <= 1e-8);
  CHECK(g.curl_residual <= 1e-10);
}

TEST_CASE("invariant graph: 2d product family") {
  SineDiffeo phi1{0.2};
  FamilySpec spec{"conjugated_integrable", 2, (Vec(2) << 0.2, 0.3).finished(), 0.0};
  auto S = make_family(spec);
  VecXi r(2);
  r << 1, 0;
  InvariantGraph g = build_invariant_graph(S, 2, r, 24, {.fourier_cutoff = 5});
  Vec x(2);
  x << 0.3, 0.8;
  Vec p = g.p_at(x);
  CHECK(p[0] == doctest::Approx(phi1.deriv(0.3) / 2.0).epsilon(1e-8));
  CHECK(p[1] == doctest::Approx(0.0).epsilon(1e-9));
  CHECK(g.invariance_residual <= 1e-8);
  CHECK(g.curl_residual <= 1e-9);
}

TEST_CASE("degenerate graph N = 1, r = 0 is the fixed-point section") {
  auto S = integrable();
  InvariantGraph g = build_invariant_graph(S, 1, VecXi::Zero(1), 16);
  CHECK(g.p_inf[0] == doctest::Approx(0.0));
  CHECK(g.invariance_residual <= 1e-12);
}

TEST_CASE("graph construction fails loudly on a map with conjugate points") {
  auto S = make_family({"perturbed_cosine", 1, Vec(), 2.0});
  VecXi r = VecXi::Constant(1, 1);
  CHECK_THROWS(build_invariant_graph(S, 3, r, 32));
}

TEST_CASE("bvp input validation") {
  auto S = integrable();
  CHECK_THROWS_AS(extremal_bvp(*S, v1(0.0), v1(1.0), 0), std::invalid_argument);
  CHECK_THROWS_AS(periodic_orbit(*S, v1(0.0), 0, VecXi::Constant(1, 1)), std::invalid_argument);
}
