#include "twistkam/rescaling.hpp"

#include <random>

namespace twistkam {

TwistMap rescale_map(const GenFunPtr& S, double eps, double newton_tol) {
  return TwistMap(std::make_shared<ScaledGeneratingFunction>(S, eps), newton_tol);
}

CotangentPoint rescaled_iterate(const TwistMap& F, double eps, const CotangentPoint& z, long steps,
                                const Vec& shift) {
  if (!(eps > 0.0)) throw std::invalid_argument("rescaled_iterate: eps must be > 0");
  CotangentPoint w{z.x, eps * z.p};
  w = F.iterate(w, steps);
  return {w.x - shift, w.p / eps};
}

Vec hamiltonian_vector_field_packed(const MetricField& B, const Vec& x, const Vec& p) {
  const int d = B.d;
  Vec out(2 * d);
  out.head(d) = B.B_at(x) * p;
  for (int k = 0; k < d; ++k) out[d + k] = -0.5 * p.dot(B.dB_at(x, k) * p);
  return out;
}

Vec hamiltonian_vector_field(const MetricField& B, const CotangentPoint& z) {
  return hamiltonian_vector_field_packed(B, z.x, z.p);
}

CotangentPoint hamiltonian_flow(const MetricField& B, CotangentPoint z, double T, int steps) {
  const int d = B.d;
  Vec y(2 * d);
  y << z.x, z.p;
  const double h = T / steps;
  auto f = [&](const Vec& s) { return hamiltonian_vector_field_packed(B, s.head(d), s.tail(d)); };
  for (int s = 0; s < steps; ++s) {
    Vec k1 = f(y);
    Vec k2 = f(y + 0.5 * h * k1);
    Vec k3 = f(y + 0.5 * h * k2);
    Vec k4 = f(y + h * k3);
    y += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
  }
  return {y.head(d), y.tail(d)};
}

namespace {

Vec euler_defect_vec(const TwistMap& F, int N, const Vec& shift, const MetricField& B,
                     const CotangentPoint& z, double eps) {
  TwistMap Feps = rescale_map(F.generating_function_ptr(), eps, F.newton_tol());
  CotangentPoint w = Feps.iterate(z, N);
  Vec xh = hamiltonian_vector_field(B, z);
  Vec defect(2 * B.d);
  defect.head(B.d) = w.x - shift - z.x - eps * xh.head(B.d);
  defect.tail(B.d) = w.p - z.p - eps * xh.tail(B.d);
  return defect;
}

}  // namespace

EulerDefectReport euler_defect(const TwistMap& F_base, int N, const VecXi& r,
                               const MetricField& B, const CotangentPoint& z, double eps) {
  const int d = B.d;
  Vec shift = r.cast<double>();
  EulerDefectReport rep;
  Vec d1 = euler_defect_vec(F_base, N, shift, B, z, eps);
  Vec d2 = euler_defect_vec(F_base, N, shift, B, z, eps / 2.0);
  rep.defect = sup_norm(d1);
  rep.defect_half = sup_norm(d2);
  rep.slope = std::log2(rep.defect / rep.defect_half);

  // Momentum block against the explicit first-order correction.
  auto mom_defect = [&](double e) {
    TwistMap Fe = rescale_map(F_base.generating_function_ptr(), e, F_base.newton_tol());
    CotangentPoint w = Fe.iterate(z, N);
    Vec grad(d);
    for (int k = 0; k < d; ++k) grad[k] = z.p.dot(B.dB_at(z.x, k) * z.p);
    return Vec(w.p - z.p + (e / 2.0) * grad);
  };
  rep.momentum_defect = sup_norm(mom_defect(eps));
  rep.momentum_defect_half = sup_norm(mom_defect(eps / 2.0));
  rep.momentum_slope = std::log2(rep.momentum_defect / rep.momentum_defect_half);
  return rep;
}

std::vector<FlowConvergenceRow> flow_convergence(const TwistMap& F_base, int N, const VecXi& r,
                                                 const MetricField& B, double S_time,
                                                 const std::vector<int>& m_list,
                                                 const std::vector<CotangentPoint>& samples,
                                                 int flow_steps, double fd_step) {
  const int d = B.d;
  Vec shift = r.cast<double>();

  auto iterated = [&](const CotangentPoint& z, int m) {
    // (Phi_{S/m})^m with the per-application lift translation removed.
    double eps = S_time / m;
    TwistMap Fe = rescale_map(F_base.generating_function_ptr(), eps, F_base.newton_tol());
    CotangentPoint w{z.x, eps * z.p};
    for (int i = 0; i < m; ++i) {
      w = Fe.iterate(w, N);
      w.x -= shift;
    }
    return CotangentPoint{w.x, w.p / eps};
  };
  auto flow = [&](const CotangentPoint& z) { return hamiltonian_flow(B, z, S_time, flow_steps); };

  auto pack = [&](const CotangentPoint& z) {
    Vec v(2 * d);
    v << z.x, z.p;
    return v;
  };
  auto fd_jacobian = [&](const std::function<CotangentPoint(const CotangentPoint&)>& fn,
                         const CotangentPoint& z) {
    Mat J(2 * d, 2 * d);
    for (int c = 0; c < 2 * d; ++c) {
      CotangentPoint zp = z, zm = z;
      Vec vp = pack(z), vm = pack(z);
      vp[c] += fd_step;
      vm[c] -= fd_step;
      zp = {vp.head(d), vp.tail(d)};
      zm = {vm.head(d), vm.tail(d)};
      J.col(c) = (pack(fn(zp)) - pack(fn(zm))) / (2.0 * fd_step);
    }
    return J;
  };

  std::vector<FlowConvergenceRow> rows;
  for (int m : m_list) {
    FlowConvergenceRow row;
    row.m = m;
    for (const auto& z : samples) {
      CotangentPoint a = iterated(z, m);
      CotangentPoint b = flow(z);
      row.c0_distance = std::max(row.c0_distance,
                                 std::max(sup_norm(Vec(a.x - b.x)), sup_norm(Vec(a.p - b.p))));
      Mat Ja = fd_jacobian([&](const CotangentPoint& w) { return iterated(w, m); }, z);
      Mat Jb = fd_jacobian(flow, z);
      row.c1_distance = std::max(row.c1_distance, sup_norm(Mat(Ja - Jb)));
    }
    rows.push_back(row);
  }
  return rows;
}

NormalFormReport verify_normal_form(const TwistMap& F1, int N, const VecXi& r,
                                    const NormalFormOptions& opts) {
  const int d = F1.dim();
  Vec shift = r.cast<double>();
  std::mt19937_64 rng(opts.seed);
  std::uniform_real_distribution<double> uni(0.0, 1.0);

  std::vector<Vec> bases(opts.sample_count);
  for (auto& b : bases) {
    b = Vec(d);
    for (int i = 0; i < d; ++i) b[i] = uni(rng);
  }
  std::vector<Vec> dirs;
  for (int k = 0; k < opts.directions; ++k) {
    Vec v(d);
    double norm = 0.0;
    for (int i = 0; i < d; ++i) {
      v[i] = uni(rng) - 0.5;
      norm += v[i] * v[i];
    }
    dirs.push_back(v / std::sqrt(norm));
  }
  for (int i = 0; i < d; ++i) dirs.push_back(Vec::Unit(d, i));

  NormalFormReport rep;
  // First-order response: b block of D F1^N on the zero section.
  rep.B_bar_fit = Mat::Zero(d, d);
  std::vector<Mat> bs(bases.size());
  for (size_t i = 0; i < bases.size(); ++i) {
    bs[i] = F1.tangent_product({bases[i], Vec::Zero(d)}, N).b;
    rep.B_bar_fit += bs[i];
  }
  rep.B_bar_fit /= static_cast<double>(bases.size());
  for (const auto& b : bs)
    rep.B_bar_spread = std::max(rep.B_bar_spread, sup_norm(Mat(b - rep.B_bar_fit)));

  rep.scalings.resize(opts.scaling_count);
  for (int j = 0; j < opts.scaling_count; ++j)
    rep.scalings[j] = opts.lambda_max * std::pow(10.0, -static_cast<double>(j) / (opts.scaling_count - 1));

  for (double lam : rep.scalings) {
    double r1 = 0.0, r2 = 0.0;
    for (const auto& x : bases) {
      for (const auto& v : dirs) {
        CotangentPoint w = F1.iterate({x, lam * v}, N);
        r1 = std::max(r1, sup_norm(Vec(w.x - shift - x - lam * (rep.B_bar_fit * v))));
        r2 = std::max(r2, sup_norm(Vec(w.p - lam * v)));
      }
    }
    rep.position_residuals.push_back(r1);
    rep.momentum_residuals.push_back(r2);
  }

  auto fit_slope = [&](const std::vector<double>& res, double* out_reg) {
    // Least-squares slope of log res vs log lambda.
    int n = static_cast<int>(res.size());
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (int i = 0; i < n; ++i) {
      double X = std::log(rep.scalings[i]), Y = std::log(res[i]);
      sx += X;
      sy += Y;
      sxx += X * X;
      sxy += X * Y;
    }
    double slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    double icpt = (sy - slope * sx) / n;
    double reg = 0.0;
    for (int i = 0; i < n; ++i) {
      double X = std::log(rep.scalings[i]), Y = std::log(res[i]);
      reg = std::max(reg, std::fabs(Y - slope * X - icpt));
    }
    if (out_reg) *out_reg = reg;
    return slope;
  };

  double pmax = *std::max_element(rep.position_residuals.begin(), rep.position_residuals.end());
  double mmax = *std::max_element(rep.momentum_residuals.begin(), rep.momentum_residuals.end());
  if (pmax < opts.exact_cutoff && mmax < opts.exact_cutoff) {
    rep.exact = true;
    rep.q1 = std::numeric_limits<double>::infinity();
    rep.q2 = std::numeric_limits<double>::infinity();
  } else {
    rep.q1 = fit_slope(rep.position_residuals, &rep.q1_regression_residual);
    rep.q2 = fit_slope(rep.momentum_residuals, &rep.q2_regression_residual);
  }
  return rep;
}

}  // namespace twistkam
