#include "twistkam/genfun.hpp"

#include <cmath>
#include <numbers>
#include <random>

namespace twistkam {

namespace {
constexpr double kTwoPi = 2.0 * std::numbers::pi;
}

double SineDiffeo::eval(double t) const { return t + a * std::sin(kTwoPi * t) / kTwoPi; }
double SineDiffeo::deriv(double t) const { return 1.0 + a * std::cos(kTwoPi * t); }
double SineDiffeo::deriv2(double t) const { return -a * kTwoPi * std::sin(kTwoPi * t); }

double SineDiffeo::inverse(double s) const {
  // phi - id is 1-periodic and |phi - id| <= |a|/(2 pi), so the preimage lies
  // in [s - 1, s + 1].
  double lo = s - 1.0, hi = s + 1.0;
  for (int i = 0; i < 60; ++i) {
    double mid = 0.5 * (lo + hi);
    (eval(mid) < s ? lo : hi) = mid;
  }
  double t = 0.5 * (lo + hi);
  for (int i = 0; i < 8; ++i) t -= (eval(t) - s) / deriv(t);
  return t;
}

namespace {

class IntegrableGF final : public GeneratingFunction {
 public:
  explicit IntegrableGF(int d) : d_(d) {}
  int dim() const override { return d_; }
  double value(const Vec& x, const Vec& y) const override { return 0.5 * (y - x).squaredNorm(); }
  Vec d1(const Vec& x, const Vec& y) const override { return x - y; }
  Vec d2(const Vec& x, const Vec& y) const override { return y - x; }
  Mat d11(const Vec&, const Vec&) const override { return Mat::Identity(d_, d_); }
  Mat d12(const Vec&, const Vec&) const override { return -Mat::Identity(d_, d_); }
  Mat d22(const Vec&, const Vec&) const override { return Mat::Identity(d_, d_); }
  double twist_constant() const override { return 1.0; }

 private:
  int d_;
};

class ConjugatedIntegrableGF final : public GeneratingFunction {
 public:
  explicit ConjugatedIntegrableGF(std::vector<SineDiffeo> phi) : phi_(std::move(phi)) {
    double amax = 0.0;
    for (const auto& f : phi_) amax = std::max(amax, std::fabs(f.a));
    A_ = (1.0 - amax) * (1.0 - amax);
  }
  int dim() const override { return static_cast<int>(phi_.size()); }
  double value(const Vec& x, const Vec& y) const override {
    double s = 0.0;
    for (int i = 0; i < dim(); ++i) {
      double di = phi_[i].eval(y[i]) - phi_[i].eval(x[i]);
      s += 0.5 * di * di;
    }
    return s;
  }
  Vec d1(const Vec& x, const Vec& y) const override {
    Vec g(dim());
    for (int i = 0; i < dim(); ++i)
      g[i] = -(phi_[i].eval(y[i]) - phi_[i].eval(x[i])) * phi_[i].deriv(x[i]);
    return g;
  }
  Vec d2(const Vec& x, const Vec& y) const override {
    Vec g(dim());
    for (int i = 0; i < dim(); ++i)
      g[i] = (phi_[i].eval(y[i]) - phi_[i].eval(x[i])) * phi_[i].deriv(y[i]);
    return g;
  }
  Mat d11(const Vec& x, const Vec& y) const override {
    Mat m = Mat::Zero(dim(), dim());
    for (int i = 0; i < dim(); ++i) {
      double di = phi_[i].eval(y[i]) - phi_[i].eval(x[i]);
      double dp = phi_[i].deriv(x[i]);
      m(i, i) = dp * dp - di * phi_[i].deriv2(x[i]);
    }
    return m;
  }
  Mat d12(const Vec& x, const Vec& y) const override {
    Mat m = Mat::Zero(dim(), dim());
    for (int i = 0; i < dim(); ++i) m(i, i) = -phi_[i].deriv(x[i]) * phi_[i].deriv(y[i]);
    return m;
  }
  Mat d22(const Vec& x, const Vec& y) const override {
    Mat m = Mat::Zero(dim(), dim());
    for (int i = 0; i < dim(); ++i) {
      double di = phi_[i].eval(y[i]) - phi_[i].eval(x[i]);
      double dp = phi_[i].deriv(y[i]);
      m(i, i) = dp * dp + di * phi_[i].deriv2(y[i]);
    }
    return m;
  }
  double twist_constant() const override { return A_; }

 private:
  std::vector<SineDiffeo> phi_;
  double A_;
};

class PerturbedCosineGF final : public GeneratingFunction {
 public:
  PerturbedCosineGF(int d, double eps) : d_(d), eps_(eps) {}
  int dim() const override { return d_; }
  double value(const Vec& x, const Vec& y) const override {
    double s = 0.5 * (y - x).squaredNorm();
    for (int i = 0; i < d_; ++i) s += eps_ * std::cos(kTwoPi * x[i]) / (kTwoPi * kTwoPi);
    return s;
  }
  Vec d1(const Vec& x, const Vec& y) const override {
    Vec g = x - y;
    for (int i = 0; i < d_; ++i) g[i] -= eps_ * std::sin(kTwoPi * x[i]) / kTwoPi;
    return g;
  }
  Vec d2(const Vec& x, const Vec& y) const override { return y - x; }
  Mat d11(const Vec& x, const Vec&) const override {
    Mat m = Mat::Identity(d_, d_);
    for (int i = 0; i < d_; ++i) m(i, i) -= eps_ * std::cos(kTwoPi * x[i]);
    return m;
  }
  Mat d12(const Vec&, const Vec&) const override { return -Mat::Identity(d_, d_); }
  Mat d22(const Vec&, const Vec&) const override { return Mat::Identity(d_, d_); }
  double twist_constant() const override { return 1.0; }

 private:
  int d_;
  double eps_;
};

Vec broadcast_amplitude(const FamilySpec& spec) {
  if (spec.amplitude.size() == spec.dim) return spec.amplitude;
  if (spec.amplitude.size() == 1) return Vec::Constant(spec.dim, spec.amplitude[0]);
  if (spec.amplitude.size() == 0) return Vec::Zero(spec.dim);
  throw std::invalid_argument("make_family: amplitude size must be 1 or dim");
}

}  // namespace

GenFunPtr make_family(const FamilySpec& spec) {
  if (spec.dim < 1) throw std::invalid_argument("make_family: dim must be >= 1");
  if (spec.name == "integrable") return std::make_shared<IntegrableGF>(spec.dim);
  if (spec.name == "conjugated_integrable") {
    Vec a = broadcast_amplitude(spec);
    if (a.cwiseAbs().maxCoeff() >= 1.0)
      throw std::invalid_argument("make_family: |a| >= 1, phi is not a diffeomorphism");
    std::vector<SineDiffeo> phi(spec.dim);
    for (int i = 0; i < spec.dim; ++i) phi[i].a = a[i];
    return std::make_shared<ConjugatedIntegrableGF>(std::move(phi));
  }
  if (spec.name == "perturbed_cosine") return std::make_shared<PerturbedCosineGF>(spec.dim, spec.epsilon);
  throw std::invalid_argument("make_family: unknown family '" + spec.name + "'");
}

std::vector<SineDiffeo> family_diffeos(const FamilySpec& spec) {
  if (spec.name != "conjugated_integrable")
    throw std::invalid_argument("family_diffeos: family has no conjugating diffeomorphism");
  Vec a = broadcast_amplitude(spec);
  std::vector<SineDiffeo> phi(spec.dim);
  for (int i = 0; i < spec.dim; ++i) phi[i].a = a[i];
  return phi;
}

double check_periodicity(const GeneratingFunction& S, int samples, int r_max, unsigned seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> ux(0.0, 1.0);
  std::uniform_real_distribution<double> uy(-2.0, 2.0);
  std::uniform_int_distribution<int> ur(-r_max, r_max);
  const int d = S.dim();
  double worst = 0.0;
  for (int s = 0; s < samples; ++s) {
    Vec x(d), y(d), r(d);
    for (int i = 0; i < d; ++i) {
      x[i] = ux(rng);
      y[i] = x[i] + uy(rng);
      r[i] = ur(rng);
    }
    worst = std::max(worst, std::fabs(S.value(x + r, y + r) - S.value(x, y)));
  }
  return worst;
}

TwistEstimate check_uniform_twist(const GeneratingFunction& S, int samples, unsigned seed) {
  const int d = S.dim();
  double A = std::numeric_limits<double>::infinity();
  auto probe = [&](const Vec& x, const Vec& y) {
    Mat m = -S.d12(x, y);
    Mat sym = 0.5 * (m + m.transpose());
    Eigen::SelfAdjointEigenSolver<Mat> es(sym);
    A = std::min(A, es.eigenvalues().minCoeff());
  };
  // Uniform grid over a fundamental box (even count per axis covers t = 1/2).
  int g = std::max(2, static_cast<int>(std::ceil(std::pow(static_cast<double>(samples), 1.0 / (2 * d)))));
  if (g % 2 == 1) ++g;
  std::vector<int> idx(2 * d, 0);
  for (;;) {
    Vec x(d), y(d);
    for (int i = 0; i < d; ++i) {
      x[i] = static_cast<double>(idx[i]) / g;
      y[i] = static_cast<double>(idx[d + i]) / g;
    }
    probe(x, y);
    int a = 0;
    while (a < 2 * d && ++idx[a] == g) idx[a++] = 0;
    if (a == 2 * d) break;
  }
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> ux(0.0, 1.0);
  std::uniform_real_distribution<double> uy(-2.0, 2.0);
  for (int s = 0; s < samples; ++s) {
    Vec x(d), y(d);
    for (int i = 0; i < d; ++i) {
      x[i] = ux(rng);
      y[i] = x[i] + uy(rng);
    }
    probe(x, y);
  }
  return {A, A > 0.0};
}

CallbackGeneratingFunction::CallbackGeneratingFunction(int dim, ValueFn value,
                                                       double twist_constant, double fd_step)
    : dim_(dim), value_(std::move(value)), twist_(twist_constant), h_(fd_step) {}

Vec CallbackGeneratingFunction::d1(const Vec& x, const Vec& y) const {
  Vec g(dim_);
  for (int i = 0; i < dim_; ++i) {
    Vec xp = x, xm = x;
    xp[i] += h_;
    xm[i] -= h_;
    g[i] = (value_(xp, y) - value_(xm, y)) / (2 * h_);
  }
  return g;
}

Vec CallbackGeneratingFunction::d2(const Vec& x, const Vec& y) const {
  Vec g(dim_);
  for (int i = 0; i < dim_; ++i) {
    Vec yp = y, ym = y;
    yp[i] += h_;
    ym[i] -= h_;
    g[i] = (value_(x, yp) - value_(x, ym)) / (2 * h_);
  }
  return g;
}

Mat CallbackGeneratingFunction::d11(const Vec& x, const Vec& y) const {
  Mat m(dim_, dim_);
  for (int j = 0; j < dim_; ++j) {
    Vec xp = x, xm = x;
    xp[j] += h_;
    xm[j] -= h_;
    m.col(j) = (d1(xp, y) - d1(xm, y)) / (2 * h_);
  }
  return 0.5 * (m + m.transpose());
}

Mat CallbackGeneratingFunction::d12(const Vec& x, const Vec& y) const {
  Mat m(dim_, dim_);
  for (int j = 0; j < dim_; ++j) {
    Vec yp = y, ym = y;
    yp[j] += h_;
    ym[j] -= h_;
    m.col(j) = (d1(x, yp) - d1(x, ym)) / (2 * h_);
  }
  return m;
}

Mat CallbackGeneratingFunction::d22(const Vec& x, const Vec& y) const {
  Mat m(dim_, dim_);
  for (int j = 0; j < dim_; ++j) {
    Vec yp = y, ym = y;
    yp[j] += h_;
    ym[j] -= h_;
    m.col(j) = (d2(x, yp) - d2(x, ym)) / (2 * h_);
  }
  return 0.5 * (m + m.transpose());
}

TransformedGeneratingFunction::TransformedGeneratingFunction(GenFunPtr base, FourierMap u, Vec p_inf)
    : base_(std::move(base)), u_(std::move(u)), p_inf_(std::move(p_inf)) {
  if (u_.arity() != 1 || u_.dim() != base_->dim())
    throw std::invalid_argument("TransformedGeneratingFunction: u must be scalar on T^d");
}

double TransformedGeneratingFunction::value(const Vec& x, const Vec& y) const {
  return base_->value(x, y) + u_.eval(x)[0] - u_.eval(y)[0] - p_inf_.dot(y - x);
}
Vec TransformedGeneratingFunction::d1(const Vec& x, const Vec& y) const {
  return base_->d1(x, y) + u_.jacobian(x).row(0).transpose() + p_inf_;
}
Vec TransformedGeneratingFunction::d2(const Vec& x, const Vec& y) const {
  return base_->d2(x, y) - u_.jacobian(y).row(0).transpose() - p_inf_;
}
Mat TransformedGeneratingFunction::d11(const Vec& x, const Vec& y) const {
  return base_->d11(x, y) + u_.hessian(x, 0);
}
Mat TransformedGeneratingFunction::d12(const Vec& x, const Vec& y) const {
  return base_->d12(x, y);
}
Mat TransformedGeneratingFunction::d22(const Vec& x, const Vec& y) const {
  return base_->d22(x, y) - u_.hessian(y, 0);
}

TorusDiffeo TorusDiffeo::identity(int dim) {
  return {FourierMap(dim, 0, dim), FourierMap(dim, 0, dim)};
}

Mat TorusDiffeo::jacobian(const Vec& x) const {
  return Mat::Identity(dim(), dim()) + periodic.jacobian(x);
}

Vec TorusDiffeo::apply_inverse(const Vec& y, double tol) const {
  // Seed from the fitted inverse, then Newton on psi(x) = y.
  Vec x = y + inv_periodic.eval(y);
  for (int it = 0; it < 30; ++it) {
    Vec r = apply(x) - y;
    if (sup_norm(r) <= tol) return x;
    x -= jacobian(x).partialPivLu().solve(r);
  }
  Vec r = apply(x) - y;
  if (sup_norm(r) > 1e-9)
    throw NewtonDivergence("TorusDiffeo::apply_inverse failed to converge");
  return x;
}

TorusDiffeo TorusDiffeo::from_periodic(const FourierMap& periodic, int inverse_cutoff,
                                       int inverse_grid) {
  const int d = periodic.dim();
  if (inverse_cutoff <= 0) inverse_cutoff = std::max(2 * periodic.cutoff(), 8);
  if (inverse_grid <= 0) inverse_grid = 4 * inverse_cutoff + 1;
  TorusDiffeo psi{periodic, FourierMap(d, 0, d)};

  auto inv_defect = [&psi](const Vec& y) {
    // Newton for psi(x) = y from x = y (degree one keeps the root nearby).
    Vec x = y;
    for (int it = 0; it < 60; ++it) {
      Vec r = psi.apply(x) - y;
      if (sup_norm(r) <= 1e-14) break;
      x -= psi.jacobian(x).partialPivLu().solve(r);
    }
    return Vec(x - y);
  };
  psi.inv_periodic = FourierMap::fit_function(inv_defect, d, d, inverse_cutoff, inverse_grid);
  return psi;
}

PulledBackGeneratingFunction::PulledBackGeneratingFunction(GenFunPtr base, TorusDiffeo psi,
                                                           double twist_constant)
    : base_(std::move(base)), psi_(std::move(psi)), twist_(twist_constant) {}

double PulledBackGeneratingFunction::value(const Vec& x, const Vec& y) const {
  return base_->value(psi_.apply(x), psi_.apply(y));
}
Vec PulledBackGeneratingFunction::d1(const Vec& x, const Vec& y) const {
  return psi_.jacobian(x).transpose() * base_->d1(psi_.apply(x), psi_.apply(y));
}
Vec PulledBackGeneratingFunction::d2(const Vec& x, const Vec& y) const {
  return psi_.jacobian(y).transpose() * base_->d2(psi_.apply(x), psi_.apply(y));
}
Mat PulledBackGeneratingFunction::d11(const Vec& x, const Vec& y) const {
  const Vec px = psi_.apply(x), py = psi_.apply(y);
  const Mat J = psi_.jacobian(x);
  Mat m = J.transpose() * base_->d11(px, py) * J;
  const Vec g = base_->d1(px, py);
  for (int c = 0; c < dim(); ++c) m += g[c] * psi_.hessian(x, c);
  return m;
}
Mat PulledBackGeneratingFunction::d12(const Vec& x, const Vec& y) const {
  return psi_.jacobian(x).transpose() * base_->d12(psi_.apply(x), psi_.apply(y)) * psi_.jacobian(y);
}
Mat PulledBackGeneratingFunction::d22(const Vec& x, const Vec& y) const {
  const Vec px = psi_.apply(x), py = psi_.apply(y);
  const Mat J = psi_.jacobian(y);
  Mat m = J.transpose() * base_->d22(px, py) * J;
  const Vec g = base_->d2(px, py);
  for (int c = 0; c < dim(); ++c) m += g[c] * psi_.hessian(y, c);
  return m;
}

ScaledGeneratingFunction::ScaledGeneratingFunction(GenFunPtr base, double eps)
    : base_(std::move(base)), eps_(eps) {
  if (!(eps > 0.0)) throw std::invalid_argument("ScaledGeneratingFunction: eps must be > 0");
}

}  // namespace twistkam
