#include "twistkam/variational.hpp"

#include <omp.h>

#include <sstream>

namespace twistkam {

double action(const GeneratingFunction& S, const std::vector<Vec>& points) {
  double s = 0.0;
  for (size_t i = 0; i + 1 < points.size(); ++i) s += S.value(points[i], points[i + 1]);
  return s;
}

double stationarity_residual(const GeneratingFunction& S, const std::vector<Vec>& points) {
  double worst = 0.0;
  for (size_t i = 1; i + 1 < points.size(); ++i)
    worst = std::max(worst, sup_norm(Vec(S.d2(points[i - 1], points[i]) + S.d1(points[i], points[i + 1]))));
  return worst;
}

Mat interior_hessian(const GeneratingFunction& S, const std::vector<Vec>& points) {
  const int d = S.dim();
  const int m = static_cast<int>(points.size()) - 2;
  Mat H = Mat::Zero(m * d, m * d);
  for (int i = 1; i <= m; ++i) {
    H.block((i - 1) * d, (i - 1) * d, d, d) =
        S.d22(points[i - 1], points[i]) + S.d11(points[i], points[i + 1]);
    if (i < m) {
      Mat off = S.d12(points[i], points[i + 1]);
      H.block((i - 1) * d, i * d, d, d) = off;
      H.block(i * d, (i - 1) * d, d, d) = off.transpose();
    }
  }
  return H;
}

namespace {

Vec stationarity_vector(const GeneratingFunction& S, const std::vector<Vec>& pts) {
  const int d = S.dim();
  const int m = static_cast<int>(pts.size()) - 2;
  Vec g(m * d);
  for (int i = 1; i <= m; ++i)
    g.segment((i - 1) * d, d) = S.d2(pts[i - 1], pts[i]) + S.d1(pts[i], pts[i + 1]);
  return g;
}

}  // namespace

ExtremalSequence extremal_bvp(const GeneratingFunction& S, const Vec& x, const Vec& y, int L,
                              double tol, int max_iter, const std::vector<Vec>* init) {
  if (L < 2) {
    if (L == 1) return {{x, y}};
    throw std::invalid_argument("extremal_bvp: L must be >= 1");
  }
  const int d = S.dim();
  std::vector<Vec> pts(static_cast<size_t>(L) + 1);
  if (init) {
    if (init->size() != pts.size()) throw std::invalid_argument("extremal_bvp: bad init length");
    pts = *init;
    pts.front() = x;
    pts.back() = y;
  } else {
    for (int i = 0; i <= L; ++i) pts[i] = x + (y - x) * (static_cast<double>(i) / L);
  }

  double res = sup_norm(stationarity_vector(S, pts));
  for (int it = 0; it < max_iter; ++it) {
    if (res <= tol) return {pts};
    Vec g = stationarity_vector(S, pts);
    Mat H = interior_hessian(S, pts);
    Vec step = -H.partialPivLu().solve(g);
    double lambda = 1.0;
    bool accepted = false;
    for (int h = 0; h < 40; ++h) {
      std::vector<Vec> cand = pts;
      for (int i = 1; i < L; ++i) cand[i] += lambda * step.segment((i - 1) * d, d);
      double cres = sup_norm(stationarity_vector(S, cand));
      if (cres < res || cres <= tol) {
        pts = std::move(cand);
        res = cres;
        accepted = true;
        break;
      }
      lambda *= 0.5;
    }
    if (!accepted) throw NewtonDivergence("extremal_bvp: damping exhausted");
  }
  if (res <= tol) return {pts};
  std::ostringstream os;
  os << "extremal_bvp: iteration cap hit, residual " << res;
  throw NewtonDivergence(os.str());
}

ExtremalSequence periodic_orbit(const GeneratingFunction& S, const Vec& x0, int N, const VecXi& r,
                                double tol) {
  if (N < 1) throw std::invalid_argument("periodic_orbit: N must be >= 1");
  Vec xN = x0 + r.cast<double>();
  return extremal_bvp(S, x0, xN, N, tol);
}

double shift_periodicity_residual(const TwistMap& map, const ExtremalSequence& seq, int N,
                                  const VecXi& r, int horizon) {
  const auto& S = map.generating_function();
  Vec p0 = -S.d1(seq.points[0], seq.points[1]);
  auto pts = map.orbit({seq.points[0], p0}, horizon + N);
  double worst = 0.0;
  for (int n = 0; n + N <= horizon + N; ++n)
    worst = std::max(worst, sup_norm(Vec(pts[n + N].x - pts[n].x - r.cast<double>())));
  return worst;
}

namespace {

Vec node_momentum(const GeneratingFunction& S, const Vec& node, int N, const VecXi& r, double tol) {
  ExtremalSequence seq = periodic_orbit(S, node, N, r, tol);
  return -S.d1(seq.points[0], seq.points[1]);
}

}  // namespace

std::vector<Vec> graph_momentum_samples_serial(const GeneratingFunction& S, int N, const VecXi& r,
                                               int grid_n, double tol) {
  auto nodes = grid_nodes(S.dim(), grid_n);
  std::vector<Vec> p(nodes.size());
  for (size_t j = 0; j < nodes.size(); ++j) p[j] = node_momentum(S, nodes[j], N, r, tol);
  return p;
}

std::vector<Vec> graph_momentum_samples_parallel(const GeneratingFunction& S, int N, const VecXi& r,
                                                 int grid_n, double tol) {
  auto nodes = grid_nodes(S.dim(), grid_n);
  std::vector<Vec> p(nodes.size());
  std::string first_error;
  #pragma omp parallel for schedule(dynamic)
  for (long j = 0; j < static_cast<long>(nodes.size()); ++j) {
    try {
      p[j] = node_momentum(S, nodes[j], N, r, tol);
    } catch (const std::exception& e) {
      #pragma omp critical
      if (first_error.empty()) first_error = e.what();
    }
  }
  if (!first_error.empty()) throw NewtonDivergence("graph sampling: " + first_error);
  return p;
}

InvariantGraph build_invariant_graph(const GenFunPtr& Sp, int N, const VecXi& r,
                                     int grid_n, const GraphOptions& opts) {
  const GeneratingFunction& S = *Sp;
  const int d = S.dim();
  if (r.size() != d) throw std::invalid_argument("build_invariant_graph: r has wrong dimension");
  InvariantGraph g;
  g.N = N;
  g.r = r;
  g.grid_n = grid_n;
  g.p_samples = opts.parallel
                    ? graph_momentum_samples_parallel(S, N, r, grid_n, opts.solver_tol)
                    : graph_momentum_samples_serial(S, N, r, grid_n, opts.solver_tol);

  // Gauge: p_inf is the grid mean, u the mean-zero potential of p - p_inf.
  Vec mean = Vec::Zero(d);
  for (const auto& p : g.p_samples) mean += p;
  mean /= static_cast<double>(g.p_samples.size());
  g.p_inf = mean;

  int cutoff = opts.fourier_cutoff > 0 ? opts.fourier_cutoff : (grid_n - 1) / 4;
  if (2 * cutoff + 1 > grid_n) throw std::invalid_argument("build_invariant_graph: grid too coarse");
  std::vector<Vec> centered(g.p_samples.size());
  for (size_t j = 0; j < centered.size(); ++j) centered[j] = g.p_samples[j] - mean;
  FourierMap q = FourierMap::fit(centered, grid_n, d, cutoff);
  PotentialFit pf = potential_from_gradient(q);
  g.u = std::move(pf.u);
  g.curl_residual = std::max(pf.curl_residual, pf.mean_residual);
  if (g.curl_residual > opts.curl_tol) {
    std::ostringstream os;
    os << "build_invariant_graph: momentum samples are not closed (curl residual "
       << g.curl_residual << " > " << opts.curl_tol
       << "); conjugate points or insufficient grid";
    throw std::runtime_error(os.str());
  }

  auto nodes = grid_nodes(d, grid_n);
  TwistMap map(Sp, opts.solver_tol);
  double fit_res = 0.0, inv_res = 0.0;
  std::string first_error;
  #pragma omp parallel for schedule(dynamic) reduction(max : fit_res, inv_res) if (opts.parallel)
  for (long j = 0; j < static_cast<long>(nodes.size()); ++j) {
    try {
      Vec p_fit = g.p_at(nodes[j]);
      fit_res = std::max(fit_res, sup_norm(Vec(p_fit - g.p_samples[j])));
      CotangentPoint w = map.forward({nodes[j], g.p_samples[j]});
      inv_res = std::max(inv_res, sup_norm(Vec(w.p - g.p_at(wrap(w.x)))));
    } catch (const std::exception& e) {
      #pragma omp critical
      if (first_error.empty()) first_error = e.what();
    }
  }
  if (!first_error.empty()) throw NewtonDivergence("build_invariant_graph: " + first_error);
  g.fit_residual = fit_res;
  g.invariance_residual = inv_res;

  if (opts.shift_check_stride > 0) {
    int horizon = opts.shift_check_horizon_mult * N;
    double worst = 0.0;
    #pragma omp parallel for schedule(dynamic) reduction(max : worst) if (opts.parallel)
    for (long j = 0; j < static_cast<long>(nodes.size()); j += opts.shift_check_stride) {
      try {
        ExtremalSequence seq = periodic_orbit(S, nodes[j], N, r, opts.solver_tol);
        worst = std::max(worst, shift_periodicity_residual(map, seq, N, r, horizon));
      } catch (const std::exception& e) {
        #pragma omp critical
        if (first_error.empty()) first_error = e.what();
      }
    }
    if (!first_error.empty()) throw NewtonDivergence("build_invariant_graph: " + first_error);
    if (worst > opts.shift_check_tol) {
      std::ostringstream os;
      os << "build_invariant_graph: shift periodicity violated (residual " << worst << ")";
      throw std::runtime_error(os.str());
    }
  }
  return g;
}

}  // namespace twistkam
