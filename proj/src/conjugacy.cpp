#include "twistkam/conjugacy.hpp"

#include <omp.h>

#include <algorithm>
#include <numbers>
#include <sstream>

namespace twistkam {

namespace {
constexpr double kTwoPi = 2.0 * std::numbers::pi;

double smallest_singular_value(const Mat& m) {
  Eigen::JacobiSVD<Mat> svd(m);
  return svd.singularValues().minCoeff();
}

// Minimal Nelder-Mead for the scan refinement.
Vec nelder_mead(const std::function<double(const Vec&)>& f, const Vec& q0, double scale,
                int iters) {
  const int n = static_cast<int>(q0.size());
  std::vector<Vec> pts(n + 1, q0);
  std::vector<double> val(n + 1);
  for (int i = 1; i <= n; ++i) pts[i][i - 1] += scale;
  for (int i = 0; i <= n; ++i) val[i] = f(pts[i]);
  for (int it = 0; it < iters; ++it) {
    std::vector<int> ord(n + 1);
    for (int i = 0; i <= n; ++i) ord[i] = i;
    std::sort(ord.begin(), ord.end(), [&](int a, int b) { return val[a] < val[b]; });
    std::vector<Vec> sp(n + 1);
    std::vector<double> sv(n + 1);
    for (int i = 0; i <= n; ++i) {
      sp[i] = pts[ord[i]];
      sv[i] = val[ord[i]];
    }
    pts = sp;
    val = sv;
    Vec centroid = Vec::Zero(n);
    for (int i = 0; i < n; ++i) centroid += pts[i];
    centroid /= n;
    Vec refl = centroid + (centroid - pts[n]);
    double frefl = f(refl);
    if (frefl < val[0]) {
      Vec exp_ = centroid + 2.0 * (centroid - pts[n]);
      double fexp = f(exp_);
      if (fexp < frefl) {
        pts[n] = exp_;
        val[n] = fexp;
      } else {
        pts[n] = refl;
        val[n] = frefl;
      }
    } else if (frefl < val[n - 1]) {
      pts[n] = refl;
      val[n] = frefl;
    } else {
      Vec con = centroid + 0.5 * (pts[n] - centroid);
      double fcon = f(con);
      if (fcon < val[n]) {
        pts[n] = con;
        val[n] = fcon;
      } else {
        for (int i = 1; i <= n; ++i) {
          pts[i] = pts[0] + 0.5 * (pts[i] - pts[0]);
          val[i] = f(pts[i]);
        }
      }
    }
  }
  int best = 0;
  for (int i = 1; i <= n; ++i)
    if (val[i] < val[best]) best = i;
  return pts[best];
}

}  // namespace

double vertical_transversality(const TwistMap& map, const CotangentPoint& z, long n) {
  if (n == 0) throw std::invalid_argument("vertical_transversality: n must be nonzero");
  return smallest_singular_value(map.tangent_product(z, n).b);
}

namespace {

// Per-point minimum margin over the iterate range, walking the orbit once.
double point_margin(const TwistMap& map, const CotangentPoint& z, int n_min, int n_max,
                    long* argmin_n) {
  TangentBlocks acc = TangentBlocks::identity(map.dim());
  CotangentPoint w = z;
  double best = std::numeric_limits<double>::infinity();
  for (int n = 1; n <= n_max; ++n) {
    acc = map.tangent(w).compose_after(acc);
    w = map.forward(w);
    if (n < n_min) continue;
    double s = smallest_singular_value(acc.b);
    if (s < best) {
      best = s;
      if (argmin_n) *argmin_n = n;
    }
  }
  return best;
}

ScanResult scan_impl(const TwistMap& map, const ScanOptions& opts, bool parallel) {
  const int d = map.dim();
  Vec pc = opts.p_center.size() == d ? opts.p_center : Vec::Zero(d);
  auto xnodes = grid_nodes(d, opts.x_grid);
  auto pnodes = grid_nodes(d, opts.p_grid);
  const long total = static_cast<long>(xnodes.size() * pnodes.size());

  std::vector<std::vector<double>> table(total);
  std::vector<double> margins(total);
  std::vector<long> argn(total);
  std::string first_error;

  #pragma omp parallel for schedule(dynamic) if (parallel)
  for (long idx = 0; idx < total; ++idx) {
    try {
      const Vec& xb = xnodes[idx / pnodes.size()];
      // pnodes holds j/p_grid; recover the index and span [-w, w] inclusive.
      const Vec& punit = pnodes[idx % pnodes.size()];
      Vec p = pc;
      if (opts.p_grid > 1)
        for (int i = 0; i < d; ++i) {
          double jidx = std::round(punit[i] * opts.p_grid);
          p[i] += opts.p_window * (-1.0 + 2.0 * jidx / (opts.p_grid - 1.0));
        }
      long an = 0;
      double m = point_margin(map, {xb, p}, opts.n_min, opts.n_max, &an);
      margins[idx] = m;
      argn[idx] = an;
      std::vector<double> row;
      for (int i = 0; i < d; ++i) row.push_back(xb[i]);
      for (int i = 0; i < d; ++i) row.push_back(p[i]);
      row.push_back(static_cast<double>(an));
      row.push_back(m);
      table[idx] = std::move(row);
    } catch (const std::exception& e) {
      #pragma omp critical
      if (first_error.empty()) first_error = e.what();
      margins[idx] = std::numeric_limits<double>::infinity();
    }
  }
  if (!first_error.empty())
    throw NewtonDivergence("transversality_scan: " + first_error);

  long best = 0;
  for (long i = 1; i < total; ++i)
    if (margins[i] < margins[best]) best = i;

  ScanResult res;
  res.min_margin = margins[best];
  res.argmin_n = argn[best];
  const Vec& xb = xnodes[best / pnodes.size()];
  Vec p(d);
  for (int i = 0; i < d; ++i) p[i] = table[best][d + i];
  res.argmin = {xb, p};
  res.table = std::move(table);

  if (opts.refine && std::isfinite(res.min_margin)) {
    const long n_fixed = res.argmin_n;
    auto objective = [&](const Vec& q) {
      CotangentPoint z{q.head(d), q.tail(d)};
      try {
        return vertical_transversality(map, z, n_fixed);
      } catch (const std::exception&) {
        return std::numeric_limits<double>::infinity();
      }
    };
    Vec q0(2 * d);
    q0 << res.argmin.x, res.argmin.p;
    double scale = 0.5 / std::max(opts.x_grid, opts.p_grid);
    Vec qbest = nelder_mead(objective, q0, scale, 140);
    double refined = objective(qbest);
    if (refined < res.min_margin) {
      res.min_margin = refined;
      res.argmin = {qbest.head(d), qbest.tail(d)};
    }
  }
  return res;
}

}  // namespace

ScanResult transversality_scan_serial(const TwistMap& map, const ScanOptions& opts) {
  return scan_impl(map, opts, false);
}
ScanResult transversality_scan_parallel(const TwistMap& map, const ScanOptions& opts) {
  return scan_impl(map, opts, true);
}
ScanResult transversality_scan(const TwistMap& map, const ScanOptions& opts) {
  return scan_impl(map, opts, opts.parallel);
}

MonodromyReport monodromy_B(const TwistMap& map, const InvariantGraph& graph, const Vec& xbar,
                            int N, double d_block_tol) {
  CotangentPoint z = graph.point_at(xbar);
  TangentBlocks tb = map.tangent_product(z, N);
  Mat W = graph.d2u(xbar);
  MonodromyReport rep;
  rep.base_point = xbar;
  rep.N = N;
  rep.B = tb.b;
  Mat D_N = tb.d - W * tb.b;
  rep.d_block_deviation = sup_norm(Mat(D_N - Mat::Identity(map.dim(), map.dim())));
  rep.symmetry_residual = sup_norm(Mat(rep.B - rep.B.transpose()));
  Eigen::SelfAdjointEigenSolver<Mat> es(0.5 * (rep.B + rep.B.transpose()));
  rep.smallest_eigenvalue = es.eigenvalues().minCoeff();
  if (rep.d_block_deviation > d_block_tol) {
    std::ostringstream os;
    os << "monodromy_B: D block deviates from identity by " << rep.d_block_deviation
       << " (graph or orbit inaccurate)";
    throw std::runtime_error(os.str());
  }
  return rep;
}

Mat MetricField::B_at(const Vec& x) const {
  Vec e = B.eval(x);
  Mat m(d, d);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) m(i, j) = e[i * d + j];
  return 0.5 * (m + m.transpose());
}

Mat MetricField::dB_at(const Vec& x, int k) const {
  Mat jac = B.jacobian(x);  // (d*d) x d
  Mat m(d, d);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) m(i, j) = jac(i * d + j, k);
  return 0.5 * (m + m.transpose());
}

Mat MetricField::entry_hessian(const Vec& x, int i, int j) const {
  Mat h = 0.5 * (B.hessian(x, i * d + j) + B.hessian(x, j * d + i));
  return h;
}

MetricField MetricField::from_samples(std::vector<Mat> samples, int grid_n, int cutoff) {
  MetricField f;
  f.d = static_cast<int>(samples.front().rows());
  f.grid_n = grid_n;
  f.sym_residual = 0.0;
  f.min_eigenvalue = std::numeric_limits<double>::infinity();
  std::vector<Vec> flat(samples.size());
  for (size_t s = 0; s < samples.size(); ++s) {
    const Mat& m = samples[s];
    f.sym_residual = std::max(f.sym_residual, sup_norm(Mat(m - m.transpose())));
    Eigen::SelfAdjointEigenSolver<Mat> es(0.5 * (m + m.transpose()));
    f.min_eigenvalue = std::min(f.min_eigenvalue, es.eigenvalues().minCoeff());
    Vec v(f.d * f.d);
    for (int i = 0; i < f.d; ++i)
      for (int j = 0; j < f.d; ++j) v[i * f.d + j] = m(i, j);
    flat[s] = v;
  }
  f.B = FourierMap::fit(flat, grid_n, f.d, cutoff);
  f.samples = std::move(samples);
  return f;
}

MetricField MetricField::from_function(int d, const std::function<Mat(const Vec&)>& fn, int grid_n,
                                       int cutoff) {
  auto nodes = grid_nodes(d, grid_n);
  std::vector<Mat> samples(nodes.size());
  for (size_t j = 0; j < nodes.size(); ++j) samples[j] = fn(nodes[j]);
  return from_samples(std::move(samples), grid_n, cutoff);
}

namespace {

MetricField metric_impl(const TwistMap& map, const InvariantGraph& graph, int N, int grid_n,
                        int cutoff, bool parallel) {
  if (cutoff <= 0) cutoff = (grid_n - 1) / 4;
  auto nodes = grid_nodes(map.dim(), grid_n);
  std::vector<Mat> samples(nodes.size());
  std::string first_error;
  #pragma omp parallel for schedule(dynamic) if (parallel)
  for (long j = 0; j < static_cast<long>(nodes.size()); ++j) {
    try {
      samples[j] = monodromy_B(map, graph, nodes[j], N).B;
    } catch (const std::exception& e) {
      #pragma omp critical
      if (first_error.empty()) first_error = e.what();
      samples[j] = Mat::Identity(map.dim(), map.dim());
    }
  }
  if (!first_error.empty()) throw std::runtime_error("metric_from_graph: " + first_error);
  return MetricField::from_samples(std::move(samples), grid_n, cutoff);
}

}  // namespace

MetricField metric_from_graph_serial(const TwistMap& map, const InvariantGraph& graph, int N,
                                     int grid_n, int cutoff) {
  return metric_impl(map, graph, N, grid_n, cutoff, false);
}
MetricField metric_from_graph_parallel(const TwistMap& map, const InvariantGraph& graph, int N,
                                       int grid_n, int cutoff) {
  return metric_impl(map, graph, N, grid_n, cutoff, true);
}
MetricField metric_from_graph(const TwistMap& map, const InvariantGraph& graph, int N, int grid_n,
                              int cutoff, bool parallel) {
  return metric_impl(map, graph, N, grid_n, cutoff, parallel);
}

HessianIdentityReport hessian_identities(const GenFunPtr& S, const InvariantGraph& graph,
                                         const Vec& xbar, int N, int k_max, double fd_step) {
  const int d = S->dim();
  auto S0 = std::make_shared<TransformedGeneratingFunction>(S, graph.u, graph.p_inf);
  TwistMap F0(S0, 1e-14, 80);

  const long n_top = static_cast<long>(k_max) * N + 1;
  auto pts = F0.orbit({xbar, Vec::Zero(d)}, n_top);

  // Prefix products of the per-step blocks; B_n is the b block of the prefix.
  std::vector<TangentBlocks> prefix(static_cast<size_t>(n_top) + 1);
  prefix[0] = TangentBlocks::identity(d);
  for (long i = 0; i < n_top; ++i)
    prefix[i + 1] = twist_step_blocks(*S0, pts[i].x, pts[i + 1].x).compose_after(prefix[i]);

  HessianIdentityReport rep;
  const Mat d11 = S0->d11(pts[0].x, pts[1].x);
  const Mat d12 = S0->d12(pts[0].x, pts[1].x);
  const Mat d22 = S0->d22(pts[0].x, pts[1].x);
  rep.symplectic_residual =
      sup_norm(Mat(d11 * d12.inverse().transpose() * d22 * d12.inverse() - Mat::Identity(d, d)));

  rep.d11_min_eigenvalue = std::numeric_limits<double>::infinity();
  rep.d22_min_eigenvalue = std::numeric_limits<double>::infinity();
  for (int i = 0; i < N; ++i) {
    Mat a = S0->d11(pts[i].x, pts[i + 1].x);
    Mat b = S0->d22(pts[i].x, pts[i + 1].x);
    Eigen::SelfAdjointEigenSolver<Mat> ea(0.5 * (a + a.transpose()));
    Eigen::SelfAdjointEigenSolver<Mat> eb(0.5 * (b + b.transpose()));
    rep.d11_min_eigenvalue = std::min(rep.d11_min_eigenvalue, ea.eigenvalues().minCoeff());
    rep.d22_min_eigenvalue = std::min(rep.d22_min_eigenvalue, eb.eigenvalues().minCoeff());
  }

  const Mat B_N = prefix[N].b;
  for (int k = 1; k <= k_max; ++k) {
    const long n = static_cast<long>(k) * N;
    const Mat B_n = prefix[n].b;
    const Mat B_n1 = prefix[n + 1].b;
    const Mat d12_n = S0->d12(pts[n].x, pts[n + 1].x);
    const Mat S_kn = -B_n.transpose() * d12_n * B_n1;
    const Mat rhs = k * k * B_N * d11 * B_N + k * B_N;
    rep.skn_identity_residual.push_back(sup_norm(Mat(S_kn - rhs)));
    rep.bkn_scaling_residual =
        std::max(rep.bkn_scaling_residual, sup_norm(Mat(B_n - k * B_N)) / sup_norm(Mat(k * B_N)));

    // Finite-difference Hessian of the action functional A_n(p).
    const Vec x_last = pts[n + 1].x;
    auto A_n = [&](const Vec& p) {
      auto o = F0.orbit({pts[0].x, p}, n);
      double s = 0.0;
      for (long i = 0; i < n; ++i) s += S0->value(o[i].x, o[i + 1].x);
      s += S0->value(o[n].x, x_last);
      return s;
    };
    Mat fd(d, d);
    const double h = fd_step;
    for (int i = 0; i < d; ++i) {
      for (int j = 0; j <= i; ++j) {
        double v;
        if (i == j) {
          Vec pp = Vec::Zero(d), pm = Vec::Zero(d);
          pp[i] += h;
          pm[i] -= h;
          v = (A_n(pp) - 2.0 * A_n(Vec::Zero(d)) + A_n(pm)) / (h * h);
        } else {
          Vec a = Vec::Zero(d), b = Vec::Zero(d), c = Vec::Zero(d), e = Vec::Zero(d);
          a[i] += h; a[j] += h;
          b[i] += h; b[j] -= h;
          c[i] -= h; c[j] += h;
          e[i] -= h; e[j] -= h;
          v = (A_n(a) - A_n(b) - A_n(c) + A_n(e)) / (4.0 * h * h);
        }
        fd(i, j) = v;
        fd(j, i) = v;
      }
    }
    rep.action_fd_residual.push_back(sup_norm(Mat(fd - S_kn)));
  }
  return rep;
}

namespace {

// Closed-form flat structure on the circle.
FlatStructure flat_structure_1d(const MetricField& Bf, const FlatOptions& opts) {
  int cutoff = opts.psi_cutoff > 0 ? opts.psi_cutoff : std::max(Bf.B.cutoff(), 8);
  int n = opts.collocation_grid > 0 ? opts.collocation_grid : 4 * cutoff + 1;

  auto s_fn = [&](const Vec& x) {
    return Vec::Constant(1, 1.0 / std::sqrt(Bf.B_at(x)(0, 0)));
  };
  FourierMap s = FourierMap::fit_function(s_fn, 1, 1, cutoff, n);
  VecXi zero = VecXi::Zero(1);
  const double c = s.coeff(zero, 0).real();
  const double Bbar = 1.0 / (c * c);

  // psi^{-1}(x) = x + rho(x) with rho_k = s_k / (c 2 pi i k), rho_0 collecting
  // the constants so that psi^{-1}(0) = 0.
  FourierMap rho(1, cutoff, 1);
  std::complex<double> rho0(0.0, 0.0);
  for (int k = 1; k <= cutoff; ++k) {
    VecXi kk = VecXi::Constant(1, k);
    std::complex<double> rk = s.coeff(kk, 0) / (c * std::complex<double>(0.0, kTwoPi * k));
    rho.set_coeff(kk, 0, rk);
    rho0 -= 2.0 * rk.real();
  }
  rho.set_coeff(zero, 0, rho0);

  // Invert pointwise (monotone), fit psi - id, gauge-fix, refit the inverse.
  TorusDiffeo chi = TorusDiffeo::from_periodic(rho, cutoff, n);
  FourierMap psi_periodic = chi.inv_periodic;
  Vec t = Vec::Constant(1, -psi_periodic.coeff(zero, 0).real());
  psi_periodic = psi_periodic.shifted(t);
  psi_periodic.set_coeff(zero, 0, psi_periodic.coeff(zero, 0) + t[0]);
  TorusDiffeo psi = TorusDiffeo::from_periodic(psi_periodic, cutoff, n);

  FlatStructure out;
  out.B_bar = Mat::Constant(1, 1, Bbar);
  out.psi = psi;
  out.conjugacy_residual = 0.0;
  out.min_jacobian_det = std::numeric_limits<double>::infinity();
  for (const auto& node : grid_nodes(1, n)) {
    double dp = psi.jacobian(node)(0, 0);
    out.min_jacobian_det = std::min(out.min_jacobian_det, dp);
    double r = std::fabs(Bf.B_at(psi.apply(node))(0, 0) / (dp * dp) - Bbar);
    out.conjugacy_residual = std::max(out.conjugacy_residual, r);
  }
  return out;
}

// Collocation least squares for chi = psi^{-1} = id + rho and constant B_bar:
// Dchi(y) B(y) Dchi(y)^T = B_bar on the grid, Levenberg-damped.
FlatStructure flat_structure_nd(const MetricField& Bf, const FlatOptions& opts) {
  const int d = Bf.d;
  int cutoff = opts.psi_cutoff > 0 ? opts.psi_cutoff : std::max(Bf.B.cutoff(), 8);
  int n = opts.collocation_grid > 0 ? opts.collocation_grid : 2 * cutoff + 1;
  auto nodes = grid_nodes(d, n);
  const long node_count = static_cast<long>(nodes.size());
  const int tri = d * (d + 1) / 2;

  // Half lattice: first nonzero component positive.
  FourierMap probe(d, cutoff, 1);
  std::vector<VecXi> half;
  for (int flat = 0; flat < probe.mode_count(); ++flat) {
    VecXi k = probe.mode(flat);
    int lead = 0;
    for (int a = 0; a < d; ++a) {
      if (k[a] != 0) {
        lead = k[a];
        break;
      }
    }
    if (lead > 0) half.push_back(k);
  }
  const int dof_rho = static_cast<int>(half.size()) * 2 * d;
  const int dof = dof_rho + tri;

  // Precompute trig values and gradients per node and half mode.
  Mat cosv(node_count, half.size()), sinv(node_count, half.size());
  std::vector<Mat> grad_cos(half.size()), grad_sin(half.size());
  for (size_t m = 0; m < half.size(); ++m) {
    grad_cos[m] = Mat(node_count, d);
    grad_sin[m] = Mat(node_count, d);
    for (long j = 0; j < node_count; ++j) {
      double ph = kTwoPi * half[m].cast<double>().dot(nodes[j]);
      cosv(j, m) = std::cos(ph);
      sinv(j, m) = std::sin(ph);
      for (int a = 0; a < d; ++a) {
        grad_cos[m](j, a) = -kTwoPi * half[m][a] * sinv(j, m);
        grad_sin[m](j, a) = kTwoPi * half[m][a] * cosv(j, m);
      }
    }
  }
  std::vector<Mat> B_nodes(node_count);
  for (long j = 0; j < node_count; ++j) B_nodes[j] = Bf.B_at(nodes[j]);

  FourierMap rho(d, cutoff, d);
  Mat Bbar = Mat::Zero(d, d);
  for (long j = 0; j < node_count; ++j) Bbar += B_nodes[j];
  Bbar /= static_cast<double>(node_count);
  Bbar = 0.5 * (Bbar + Bbar.transpose());

  auto rho_jacobian_at = [&](long j) {
    Mat J = Mat::Zero(d, d);
    for (size_t m = 0; m < half.size(); ++m) {
      for (int comp = 0; comp < d; ++comp) {
        VecXi k = half[m];
        std::complex<double> cmode = rho.coeff(k, comp);
        // c e^{i th} + conj c e^{-i th} = A cos + B sin, A = 2 Re c, B = -2 Im c
        double A = 2.0 * cmode.real(), Bc = -2.0 * cmode.imag();
        for (int a = 0; a < d; ++a)
          J(comp, a) += A * grad_cos[m](j, a) + Bc * grad_sin[m](j, a);
      }
    }
    return J;
  };

  auto residual_vec = [&](Vec* out_sup) {
    Vec R(node_count * tri);
    double sup = 0.0;
    for (long j = 0; j < node_count; ++j) {
      Mat Dchi = Mat::Identity(d, d) + rho_jacobian_at(j);
      Mat res = Dchi * B_nodes[j] * Dchi.transpose() - Bbar;
      int t = 0;
      for (int a = 0; a < d; ++a)
        for (int b = a; b < d; ++b) {
          R[j * tri + t] = res(a, b);
          sup = std::max(sup, std::fabs(res(a, b)));
          ++t;
        }
    }
    if (out_sup) (*out_sup)[0] = sup;
    return R;
  };

  Vec supv(1);
  Vec R = residual_vec(&supv);
  double sup = supv[0];
  double lambda = 1e-3;
  int it = 0;
  for (; it < opts.max_iter && sup > opts.tol; ++it) {
    // Jacobian.
    Mat J = Mat::Zero(node_count * tri, dof);
    #pragma omp parallel for schedule(static)
    for (long j = 0; j < node_count; ++j) {
      Mat Dchi = Mat::Identity(d, d) + rho_jacobian_at(j);
      Mat DchiB = Dchi * B_nodes[j];
      for (size_t m = 0; m < half.size(); ++m) {
        for (int comp = 0; comp < d; ++comp) {
          for (int trig = 0; trig < 2; ++trig) {
            int col = static_cast<int>(m) * 2 * d + comp * 2 + trig;
            Vec gb(d);
            for (int a = 0; a < d; ++a)
              gb[a] = trig == 0 ? grad_cos[m](j, a) : grad_sin[m](j, a);
            // dDchi = e_comp gb^T ; dres = dDchi B Dchi^T + Dchi B dDchi^T
            Vec w = DchiB * gb;  // = Dchi B gb  -> row contribution
            int t = 0;
            for (int a = 0; a < d; ++a)
              for (int b = a; b < d; ++b) {
                double v = 0.0;
                if (a == comp) v += gb.dot(B_nodes[j] * Dchi.row(b).transpose());
                if (b == comp) v += w[a];
                J(j * tri + t, col) = v;
                ++t;
              }
          }
        }
      }
      int t = 0;
      for (int a = 0; a < d; ++a)
        for (int b = a; b < d; ++b) {
          J(j * tri + t, dof_rho + t) = -1.0;
          ++t;
        }
    }
    // Note: the B_bar columns use one DOF per upper-triangular entry; the
    // residual row (a,b) depends only on B_bar(a,b).

    Mat JtJ = J.transpose() * J;
    Vec Jtr = J.transpose() * R;
    for (int tries = 0; tries < 12; ++tries) {
      Mat A = JtJ;
      A.diagonal().array() += lambda * (JtJ.diagonal().array().abs() + 1e-12);
      Vec delta = -A.ldlt().solve(Jtr);
      // Apply.
      FourierMap rho_new = rho;
      Mat Bbar_new = Bbar;
      for (size_t m = 0; m < half.size(); ++m)
        for (int comp = 0; comp < d; ++comp) {
          int col = static_cast<int>(m) * 2 * d + comp * 2;
          std::complex<double> cur = rho_new.coeff(half[m], comp);
          double A2 = 2.0 * cur.real() + delta[col];
          double B2 = -2.0 * cur.imag() + delta[col + 1];
          rho_new.set_coeff(half[m], comp, {A2 / 2.0, -B2 / 2.0});
        }
      {
        int t = 0;
        for (int a = 0; a < d; ++a)
          for (int b = a; b < d; ++b) {
            Bbar_new(a, b) += delta[dof_rho + t];
            Bbar_new(b, a) = Bbar_new(a, b);
            ++t;
          }
      }
      std::swap(rho, rho_new);
      std::swap(Bbar, Bbar_new);
      Vec sup_new(1);
      Vec R_new = residual_vec(&sup_new);
      if (sup_new[0] < sup) {
        R = std::move(R_new);
        sup = sup_new[0];
        lambda = std::max(lambda / 3.0, 1e-14);
        break;
      }
      std::swap(rho, rho_new);  // revert
      std::swap(Bbar, Bbar_new);
      lambda *= 10.0;
      if (tries == 11)
        throw NewtonStagnation("flat_structure: Levenberg steps stopped improving; the metric"
                               " may not be flat at this resolution");
    }
  }
  if (sup > opts.tol && it == opts.max_iter)
    throw NewtonStagnation("flat_structure: collocation Newton did not converge");

  // chi = id + rho; psi = chi^{-1}, gauge mean(psi - id) = 0.
  TorusDiffeo chi = TorusDiffeo::from_periodic(rho, std::max(2 * cutoff, 8));
  FourierMap psi_periodic = chi.inv_periodic;
  VecXi zero = VecXi::Zero(d);
  Vec t(d);
  for (int a = 0; a < d; ++a) t[a] = -psi_periodic.coeff(zero, a).real();
  psi_periodic = psi_periodic.shifted(t);
  for (int a = 0; a < d; ++a)
    psi_periodic.set_coeff(zero, a, psi_periodic.coeff(zero, a) + t[a]);
  TorusDiffeo psi = TorusDiffeo::from_periodic(psi_periodic, std::max(2 * cutoff, 8));

  FlatStructure out;
  out.psi = psi;
  out.B_bar = Bbar;
  out.min_jacobian_det = std::numeric_limits<double>::infinity();
  out.conjugacy_residual = 0.0;
  int check_n = opts.collocation_grid > 0 ? opts.collocation_grid : 2 * cutoff + 1;
  for (const auto& node : grid_nodes(d, check_n)) {
    Mat Dp = psi.jacobian(node);
    out.min_jacobian_det = std::min(out.min_jacobian_det, Dp.determinant());
    Mat lhs = Dp.partialPivLu().solve(Bf.B_at(psi.apply(node)));
    lhs = Dp.transpose().partialPivLu().solve(lhs.transpose()).transpose();
    out.conjugacy_residual = std::max(out.conjugacy_residual, sup_norm(Mat(lhs - Bbar)));
  }
  return out;
}

}  // namespace

FlatStructure flat_structure(const MetricField& B, const FlatOptions& opts) {
  if (B.min_eigenvalue <= 0.0)
    throw std::invalid_argument("flat_structure: B is not positive definite on samples");
  return B.d == 1 ? flat_structure_1d(B, opts) : flat_structure_nd(B, opts);
}

JacobiProbeResult jacobi_conjugate_probe(const MetricField& Bf, const Vec& x0, const Vec& p0,
                                         double T, int steps, double threshold) {
  if (!(T > 0.0) || steps < 2) throw std::invalid_argument("jacobi_conjugate_probe: bad T/steps");
  const int d = Bf.d;
  const double h = T / steps;
  if (h <= 0.0 || !std::isfinite(h))
    throw std::underflow_error("jacobi_conjugate_probe: step underflow");

  // State: x (d), p (d), J (2d x d) column-major; J = d(x,p)/dp_0.
  const int nj = 2 * d * d;
  Vec y(2 * d + nj);
  y.head(d) = x0;
  y.segment(d, d) = p0;
  y.tail(nj).setZero();
  for (int c = 0; c < d; ++c) y[2 * d + c * 2 * d + d + c] = 1.0;  // dp block = I

  auto rhs = [&](const Vec& s) {
    Vec x = s.head(d), p = s.segment(d, d);
    Mat B = Bf.B_at(x);
    std::vector<Mat> dB(d);
    for (int k = 0; k < d; ++k) dB[k] = Bf.dB_at(x, k);

    Vec out(2 * d + nj);
    out.head(d) = B * p;
    for (int k = 0; k < d; ++k) out[d + k] = -0.5 * p.dot(dB[k] * p);

    // Variational matrix DX_H: rows (dx; dp), columns (x; p).
    Mat M = Mat::Zero(2 * d, 2 * d);
    for (int k = 0; k < d; ++k) M.block(0, k, d, 1) = dB[k] * p;
    M.block(0, d, d, d) = B;
    for (int k = 0; k < d; ++k)
      for (int l = 0; l < d; ++l) {
        double v = 0.0;  // d/dx_l [ -1/2 p^T (dB/dx_k) p ]
        for (int i = 0; i < d; ++i)
          for (int j = 0; j < d; ++j) v += p[i] * p[j] * Bf.entry_hessian(x, i, j)(k, l);
        M(d + k, l) = -0.5 * v;
        M(d + k, d + l) = -(dB[k] * p)[l];
      }
    for (int c = 0; c < d; ++c) {
      Eigen::Map<const Vec> col(s.data() + 2 * d + c * 2 * d, 2 * d);
      Eigen::Map<Vec> ocol(out.data() + 2 * d + c * 2 * d, 2 * d);
      ocol = M * col;
    }
    return out;
  };

  JacobiProbeResult res;
  res.threshold = threshold;
  res.min_margin = std::numeric_limits<double>::infinity();
  double prev_det = 0.0;
  for (int s = 1; s <= steps; ++s) {
    Vec k1 = rhs(y);
    Vec k2 = rhs(y + 0.5 * h * k1);
    Vec k3 = rhs(y + 0.5 * h * k2);
    Vec k4 = rhs(y + h * k3);
    y += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    Mat Jx(d, d);
    for (int c = 0; c < d; ++c)
      for (int rrow = 0; rrow < d; ++rrow) Jx(rrow, c) = y[2 * d + c * 2 * d + rrow];
    double sigma = smallest_singular_value(Jx);
    double det = Jx.determinant();
    if (sigma < res.min_margin) {
      res.min_margin = sigma;
      res.t_at_min = s * h;
    }
    if (s > 1 && ((det < 0.0) != (prev_det < 0.0))) res.degenerate = true;
    prev_det = det;
  }
  if (res.min_margin <= threshold) res.degenerate = true;
  return res;
}

}  // namespace twistkam
