#include "twistkam/fourier.hpp"

#include <numbers>

namespace twistkam {

namespace {
constexpr double kTwoPi = 2.0 * std::numbers::pi;

int ipow(int b, int e) {
  int r = 1;
  while (e-- > 0) r *= b;
  return r;
}
}  // namespace

FourierMap::FourierMap(int dim, int cutoff, int arity)
    : dim_(dim), cutoff_(cutoff), arity_(arity), mode_count_(ipow(2 * cutoff + 1, dim)) {
  if (dim < 1 || cutoff < 0 || arity < 1)
    throw std::invalid_argument("FourierMap: bad dimensions");
  coeffs_.assign(static_cast<size_t>(arity_) * mode_count_, {0.0, 0.0});
}

VecXi FourierMap::mode(int flat) const {
  VecXi k(dim_);
  int w = 2 * cutoff_ + 1;
  for (int a = dim_ - 1; a >= 0; --a) {
    k[a] = flat % w - cutoff_;
    flat /= w;
  }
  return k;
}

int FourierMap::mode_index(const VecXi& k) const {
  int w = 2 * cutoff_ + 1;
  int flat = 0;
  for (int a = 0; a < dim_; ++a) {
    if (k[a] < -cutoff_ || k[a] > cutoff_) throw std::out_of_range("FourierMap: mode outside cutoff");
    flat = flat * w + (k[a] + cutoff_);
  }
  return flat;
}

std::complex<double> FourierMap::coeff(const VecXi& k, int comp) const {
  return coeffs_[static_cast<size_t>(comp) * mode_count_ + mode_index(k)];
}

void FourierMap::set_coeff(const VecXi& k, int comp, std::complex<double> c) {
  coeffs_[static_cast<size_t>(comp) * mode_count_ + mode_index(k)] = c;
  coeffs_[static_cast<size_t>(comp) * mode_count_ + mode_index(-k)] = std::conj(c);
}

void FourierMap::enforce_conjugate_symmetry() {
  for (int comp = 0; comp < arity_; ++comp) {
    auto* c = coeffs_.data() + static_cast<size_t>(comp) * mode_count_;
    for (int f = 0; f < mode_count_; ++f) {
      int g = mode_count_ - 1 - f;  // index of -k in the row-major lattice
      if (g < f) break;
      std::complex<double> avg = 0.5 * (c[f] + std::conj(c[g]));
      c[f] = avg;
      c[g] = std::conj(avg);
    }
  }
}

std::vector<Vec> grid_nodes(int dim, int n) {
  std::vector<Vec> nodes(static_cast<size_t>(ipow(n, dim)), Vec(dim));
  for (size_t j = 0; j < nodes.size(); ++j) {
    size_t rem = j;
    for (int a = dim - 1; a >= 0; --a) {
      nodes[j][a] = static_cast<double>(rem % n) / n;
      rem /= n;
    }
  }
  return nodes;
}

FourierMap FourierMap::fit(const std::vector<Vec>& samples, int n, int dim, int cutoff) {
  if (n < 2 * cutoff + 1) throw std::invalid_argument("FourierMap::fit: cutoff too large for grid");
  const size_t node_count = static_cast<size_t>(ipow(n, dim));
  if (samples.size() != node_count) throw std::invalid_argument("FourierMap::fit: sample count mismatch");
  const int arity = static_cast<int>(samples[0].size());

  FourierMap f(dim, cutoff, arity);

  // 1-D DFT phase table exp(-2*pi*i*k*j/n), k = -M..M.
  const int w = 2 * cutoff + 1;
  std::vector<std::complex<double>> phase(static_cast<size_t>(w) * n);
  for (int k = -cutoff; k <= cutoff; ++k)
    for (int j = 0; j < n; ++j)
      phase[static_cast<size_t>(k + cutoff) * n + j] =
          std::polar(1.0, -kTwoPi * k * j / static_cast<double>(n));

  std::vector<int> digits(dim);
  for (int flat = 0; flat < f.mode_count_; ++flat) {
    int rem = flat;
    for (int a = dim - 1; a >= 0; --a) {
      digits[a] = rem % w;
      rem /= w;
    }
    CVec acc = CVec::Zero(arity);
    for (size_t node = 0; node < node_count; ++node) {
      size_t nrem = node;
      std::complex<double> ph(1.0, 0.0);
      for (int a = dim - 1; a >= 0; --a) {
        int j = static_cast<int>(nrem % n);
        nrem /= n;
        ph *= phase[static_cast<size_t>(digits[a]) * n + j];
      }
      for (int comp = 0; comp < arity; ++comp) acc[comp] += samples[node][comp] * ph;
    }
    for (int comp = 0; comp < arity; ++comp)
      f.coeffs_[static_cast<size_t>(comp) * f.mode_count_ + flat] = acc[comp] / static_cast<double>(node_count);
  }
  f.enforce_conjugate_symmetry();
  return f;
}

FourierMap FourierMap::fit_function(const std::function<Vec(const Vec&)>& fn, int dim,
                                    int arity, int cutoff, int nodes_per_axis) {
  int n = nodes_per_axis > 0 ? nodes_per_axis : 4 * cutoff + 1;
  auto nodes = grid_nodes(dim, n);
  std::vector<Vec> samples(nodes.size());
  for (size_t j = 0; j < nodes.size(); ++j) {
    samples[j] = fn(nodes[j]);
    if (static_cast<int>(samples[j].size()) != arity)
      throw std::invalid_argument("FourierMap::fit_function: arity mismatch");
  }
  return fit(samples, n, dim, cutoff);
}

CVec FourierMap::eval_complex(const Vec& theta) const {
  // Per-axis power tables exp(2*pi*i*k*theta_a); wrap first so large lifted
  // coordinates do not degrade the trig argument reduction.
  const int w = 2 * cutoff_ + 1;
  std::vector<std::complex<double>> pw(static_cast<size_t>(dim_) * w);
  for (int a = 0; a < dim_; ++a) {
    double t = wrap1(theta[a]);
    std::complex<double> base = std::polar(1.0, kTwoPi * t);
    pw[static_cast<size_t>(a) * w + cutoff_] = {1.0, 0.0};
    for (int k = 1; k <= cutoff_; ++k) {
      pw[static_cast<size_t>(a) * w + cutoff_ + k] = pw[static_cast<size_t>(a) * w + cutoff_ + k - 1] * base;
      pw[static_cast<size_t>(a) * w + cutoff_ - k] = std::conj(pw[static_cast<size_t>(a) * w + cutoff_ + k]);
    }
  }
  CVec out = CVec::Zero(arity_);
  std::vector<int> digits(dim_);
  for (int flat = 0; flat < mode_count_; ++flat) {
    int rem = flat;
    std::complex<double> ph(1.0, 0.0);
    for (int a = dim_ - 1; a >= 0; --a) {
      ph *= pw[static_cast<size_t>(a) * w + (rem % w)];
      rem /= w;
    }
    for (int comp = 0; comp < arity_; ++comp)
      out[comp] += coeffs_[static_cast<size_t>(comp) * mode_count_ + flat] * ph;
  }
  return out;
}

Vec FourierMap::eval(const Vec& theta) const { return eval_complex(theta).real(); }

Mat FourierMap::jacobian(const Vec& theta) const {
  const int w = 2 * cutoff_ + 1;
  std::vector<std::complex<double>> pw(static_cast<size_t>(dim_) * w);
  for (int a = 0; a < dim_; ++a) {
    double t = wrap1(theta[a]);
    std::complex<double> base = std::polar(1.0, kTwoPi * t);
    pw[static_cast<size_t>(a) * w + cutoff_] = {1.0, 0.0};
    for (int k = 1; k <= cutoff_; ++k) {
      pw[static_cast<size_t>(a) * w + cutoff_ + k] = pw[static_cast<size_t>(a) * w + cutoff_ + k - 1] * base;
      pw[static_cast<size_t>(a) * w + cutoff_ - k] = std::conj(pw[static_cast<size_t>(a) * w + cutoff_ + k]);
    }
  }
  Eigen::MatrixXcd jac = Eigen::MatrixXcd::Zero(arity_, dim_);
  for (int flat = 0; flat < mode_count_; ++flat) {
    int rem = flat;
    std::complex<double> ph(1.0, 0.0);
    VecXi k(dim_);
    for (int a = dim_ - 1; a >= 0; --a) {
      int dg = rem % w;
      rem /= w;
      k[a] = dg - cutoff_;
      ph *= pw[static_cast<size_t>(a) * w + dg];
    }
    for (int comp = 0; comp < arity_; ++comp) {
      std::complex<double> cph = coeffs_[static_cast<size_t>(comp) * mode_count_ + flat] * ph;
      for (int a = 0; a < dim_; ++a)
        jac(comp, a) += cph * std::complex<double>(0.0, kTwoPi * k[a]);
    }
  }
  return jac.real();
}

Mat FourierMap::hessian(const Vec& theta, int comp) const {
  const int w = 2 * cutoff_ + 1;
  Eigen::MatrixXcd h = Eigen::MatrixXcd::Zero(dim_, dim_);
  std::vector<std::complex<double>> pw(static_cast<size_t>(dim_) * w);
  for (int a = 0; a < dim_; ++a) {
    double t = wrap1(theta[a]);
    std::complex<double> base = std::polar(1.0, kTwoPi * t);
    pw[static_cast<size_t>(a) * w + cutoff_] = {1.0, 0.0};
    for (int k = 1; k <= cutoff_; ++k) {
      pw[static_cast<size_t>(a) * w + cutoff_ + k] = pw[static_cast<size_t>(a) * w + cutoff_ + k - 1] * base;
      pw[static_cast<size_t>(a) * w + cutoff_ - k] = std::conj(pw[static_cast<size_t>(a) * w + cutoff_ + k]);
    }
  }
  for (int flat = 0; flat < mode_count_; ++flat) {
    int rem = flat;
    std::complex<double> ph(1.0, 0.0);
    VecXi k(dim_);
    for (int a = dim_ - 1; a >= 0; --a) {
      int dg = rem % w;
      rem /= w;
      k[a] = dg - cutoff_;
      ph *= pw[static_cast<size_t>(a) * w + dg];
    }
    std::complex<double> cph = coeffs_[static_cast<size_t>(comp) * mode_count_ + flat] * ph;
    for (int a = 0; a < dim_; ++a)
      for (int b = 0; b < dim_; ++b)
        h(a, b) += cph * (-kTwoPi * kTwoPi * k[a] * k[b]);
  }
  return h.real();
}

double FourierMap::shell_max(int m) const {
  double s = 0.0;
  for (int flat = 0; flat < mode_count_; ++flat) {
    if (mode(flat).cwiseAbs().maxCoeff() != m) continue;
    for (int comp = 0; comp < arity_; ++comp)
      s = std::max(s, std::abs(coeffs_[static_cast<size_t>(comp) * mode_count_ + flat]));
  }
  return s;
}

double FourierMap::sup_norm_estimate(int n) const {
  if (n <= 0) n = std::max(64, 4 * cutoff_ + 1);
  double s = 0.0;
  for (const auto& node : grid_nodes(dim_, n)) s = std::max(s, sup_norm(eval(node)));
  return s;
}

FourierMap FourierMap::shifted(const Vec& shift) const {
  FourierMap g = *this;
  for (int flat = 0; flat < mode_count_; ++flat) {
    VecXi k = mode(flat);
    double phase = 0.0;
    for (int a = 0; a < dim_; ++a) phase += k[a] * shift[a];
    std::complex<double> fac = std::polar(1.0, kTwoPi * phase);
    for (int comp = 0; comp < arity_; ++comp)
      g.coeffs_[static_cast<size_t>(comp) * mode_count_ + flat] *= fac;
  }
  return g;
}

FourierMap& FourierMap::operator*=(double s) {
  for (auto& c : coeffs_) c *= s;
  return *this;
}

PotentialFit potential_from_gradient(const FourierMap& q) {
  if (q.arity() != q.dim()) throw std::invalid_argument("potential_from_gradient: arity != dim");
  FourierMap u(q.dim(), q.cutoff(), 1);
  double curl = 0.0, mean_res = 0.0;
  for (int flat = 0; flat < q.mode_count(); ++flat) {
    VecXi k = q.mode(flat);
    if (k.isZero()) {
      for (int j = 0; j < q.dim(); ++j) mean_res = std::max(mean_res, std::abs(q.coeff(k, j)));
      continue;
    }
    // Solve (2*pi*i*k_j) u_k = q_{k,j} in least squares over j.
    std::complex<double> num(0.0, 0.0);
    double den = 0.0;
    for (int j = 0; j < q.dim(); ++j) {
      std::complex<double> ik(0.0, kTwoPi * k[j]);
      num += std::conj(ik) * q.coeff(k, j);
      den += std::norm(ik);
    }
    std::complex<double> uk = num / den;
    u.set_coeff(k, 0, uk);
    for (int j = 0; j < q.dim(); ++j)
      curl = std::max(curl, std::abs(std::complex<double>(0.0, kTwoPi * k[j]) * uk - q.coeff(k, j)));
  }
  return {std::move(u), curl, mean_res};
}

}  // namespace twistkam
