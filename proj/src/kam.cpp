#include "twistkam/kam.hpp"

#include <omp.h>

#include <numbers>
#include <sstream>

namespace twistkam {

namespace {
constexpr double kTwoPi = 2.0 * std::numbers::pi;
}

DiophantineCheck check_strongly_diophantine(const Vec& omega, double gamma, double tau,
                                            int K_max) {
  if (K_max < 1) throw std::invalid_argument("check_strongly_diophantine: K_max must be >= 1");
  const int d = static_cast<int>(omega.size());
  DiophantineCheck best;
  best.margin = std::numeric_limits<double>::infinity();
  const int w = 2 * K_max + 1;
  long total = 1;
  for (int i = 0; i < d; ++i) total *= w;
  for (long flat = 0; flat < total; ++flat) {
    long rem = flat;
    VecXi k(d);
    for (int a = d - 1; a >= 0; --a) {
      k[a] = static_cast<int>(rem % w) - K_max;
      rem /= w;
    }
    if (k.isZero()) continue;
    double dot = k.cast<double>().dot(omega);
    long l = std::lround(-dot);
    double bracket = std::fabs(dot + l);
    double knorm = k.cwiseAbs().maxCoeff();
    double margin = bracket * std::pow(knorm, tau) / gamma;
    if (margin < best.margin) {
      best.margin = margin;
      best.argmin_k = k;
      best.argmin_l = l;
    }
  }
  return best;
}

double find_diophantine_gamma(const Vec& omega, double tau, int K_max) {
  DiophantineCheck c = check_strongly_diophantine(omega, 1.0, tau, K_max);
  return c.margin;
}

DiophantineVector DiophantineVector::verified(const Vec& omega, double gamma, double tau,
                                              int K_max) {
  DiophantineVector v{omega, gamma, tau, K_max, 0.0};
  v.worst_margin = check_strongly_diophantine(omega, gamma, tau, K_max).margin;
  if (v.worst_margin < 1.0) {
    std::ostringstream os;
    os << "DiophantineVector: strong bound fails at cutoff " << K_max << " (margin "
       << v.worst_margin << " < 1)";
    throw std::runtime_error(os.str());
  }
  return v;
}

Mat EmbeddedTorus::tangent(const Vec& theta) const {
  const int d = dim();
  Mat t(2 * d, d);
  t.topRows(d) = Mat::Identity(d, d) + u.jacobian(theta);
  t.bottomRows(d) = v.jacobian(theta);
  return t;
}

EmbeddedTorus EmbeddedTorus::flat(int dim, int cutoff, const Vec& beta, const Vec& c) {
  EmbeddedTorus t;
  t.beta = beta;
  t.c = c;
  t.u = FourierMap(dim, cutoff, dim);
  t.v = FourierMap(dim, cutoff, dim);
  return t;
}

EmbeddedTorus EmbeddedTorus::with_cutoff(int cutoff) const {
  EmbeddedTorus t = *this;
  t.u = FourierMap(u.dim(), cutoff, u.arity());
  t.v = FourierMap(v.dim(), cutoff, v.arity());
  int common = std::min(cutoff, u.cutoff());
  FourierMap probe(u.dim(), common, 1);
  for (int flat = 0; flat < probe.mode_count(); ++flat) {
    VecXi k = probe.mode(flat);
    for (int comp = 0; comp < u.arity(); ++comp) {
      t.u.set_coeff(k, comp, u.coeff(k, comp));
      t.v.set_coeff(k, comp, v.coeff(k, comp));
    }
  }
  return t;
}

namespace {

struct Basis {
  std::vector<VecXi> half;  // first nonzero component positive
  int d = 0;
  int node_count = 0;
  Mat cos_here, sin_here;    // node x mode, at theta_j
  Mat cos_there, sin_there;  // at theta_j + beta

  Basis(int d_, int cutoff, const std::vector<Vec>& nodes, const Vec& beta) : d(d_) {
    FourierMap probe(d, cutoff, 1);
    for (int flat = 0; flat < probe.mode_count(); ++flat) {
      VecXi k = probe.mode(flat);
      int lead = 0;
      for (int a = 0; a < d; ++a)
        if (k[a] != 0) {
          lead = k[a];
          break;
        }
      if (lead > 0) half.push_back(k);
    }
    node_count = static_cast<int>(nodes.size());
    cos_here = Mat(node_count, half.size());
    sin_here = Mat(node_count, half.size());
    cos_there = Mat(node_count, half.size());
    sin_there = Mat(node_count, half.size());
    for (int j = 0; j < node_count; ++j)
      for (size_t m = 0; m < half.size(); ++m) {
        double ph = kTwoPi * half[m].cast<double>().dot(nodes[j]);
        double pt = kTwoPi * half[m].cast<double>().dot(Vec(nodes[j] + beta));
        cos_here(j, m) = std::cos(ph);
        sin_here(j, m) = std::sin(ph);
        cos_there(j, m) = std::cos(pt);
        sin_there(j, m) = std::sin(pt);
      }
  }

  int mode_count() const { return static_cast<int>(half.size()); }
};

// Real DOF layout: [u (comp-major, per mode cos/sin) | v | c].
void apply_delta(EmbeddedTorus& t, const Basis& basis, const Vec& delta) {
  const int d = basis.d;
  const int per_field = basis.mode_count() * 2 * d;
  auto bump = [&](FourierMap& f, int base) {
    for (int m = 0; m < basis.mode_count(); ++m)
      for (int comp = 0; comp < d; ++comp) {
        int col = base + m * 2 * d + comp * 2;
        std::complex<double> cur = f.coeff(basis.half[m], comp);
        double A = 2.0 * cur.real() + delta[col];
        double B = -2.0 * cur.imag() + delta[col + 1];
        f.set_coeff(basis.half[m], comp, {A / 2.0, -B / 2.0});
      }
  };
  bump(t.u, 0);
  bump(t.v, per_field);
  t.c += delta.segment(2 * per_field, d);
}

double residual_sup(const Vec& R) { return R.size() ? R.cwiseAbs().maxCoeff() : 0.0; }

}  // namespace

double invariance_residual_serial(const TwistMap& Phi, const Vec& beta, const EmbeddedTorus& j,
                                  int grid_n) {
  auto nodes = grid_nodes(j.dim(), grid_n);
  double worst = 0.0;
  for (const auto& th : nodes) {
    CotangentPoint w = Phi.forward(j.at(th));
    CotangentPoint tgt = j.at(th + beta);
    worst = std::max(worst, std::max(sup_norm(Vec(w.x - tgt.x)), sup_norm(Vec(w.p - tgt.p))));
  }
  return worst;
}

double invariance_residual_parallel(const TwistMap& Phi, const Vec& beta, const EmbeddedTorus& j,
                                    int grid_n) {
  auto nodes = grid_nodes(j.dim(), grid_n);
  double worst = 0.0;
  std::string first_error;
  #pragma omp parallel for schedule(dynamic) reduction(max : worst)
  for (long i = 0; i < static_cast<long>(nodes.size()); ++i) {
    try {
      CotangentPoint w = Phi.forward(j.at(nodes[i]));
      CotangentPoint tgt = j.at(nodes[i] + beta);
      worst = std::max(worst, std::max(sup_norm(Vec(w.x - tgt.x)), sup_norm(Vec(w.p - tgt.p))));
    } catch (const std::exception& e) {
      #pragma omp critical
      if (first_error.empty()) first_error = e.what();
    }
  }
  if (!first_error.empty()) throw NewtonDivergence("invariance_residual: " + first_error);
  return worst;
}

SolveResult solve_invariance(const TwistMap& Phi, const Vec& beta, const EmbeddedTorus& init,
                             int modes, double tol, const SolveOptions& opts) {
  const int d = Phi.dim();
  SolveResult out;
  out.torus = init.with_cutoff(modes);
  out.torus.beta = beta;

  const int grid_n = opts.oversample * 2 * modes + 1;
  auto nodes = grid_nodes(d, grid_n);
  const long node_count = static_cast<long>(nodes.size());
  Basis basis(d, modes, nodes, beta);
  const int per_field = basis.mode_count() * 2 * d;
  const int dof = 2 * per_field + d;
  const long rows = node_count * 2 * d;
  if (rows < dof) throw std::invalid_argument("solve_invariance: grid under-determines the modes");

  auto eval_residual = [&](const EmbeddedTorus& t, std::vector<TangentBlocks>* tangents) {
    Vec R(rows);
    std::string first_error;
    #pragma omp parallel for schedule(dynamic) if (opts.parallel)
    for (long jn = 0; jn < node_count; ++jn) {
      try {
        CotangentPoint zj = t.at(nodes[jn]);
        CotangentPoint w = Phi.forward(zj);
        if (tangents) (*tangents)[jn] = Phi.tangent(zj);
        CotangentPoint tgt = t.at(nodes[jn] + beta);
        R.segment(jn * 2 * d, d) = w.x - tgt.x;
        R.segment(jn * 2 * d + d, d) = w.p - tgt.p;
      } catch (const std::exception& e) {
        #pragma omp critical
        if (first_error.empty()) first_error = e.what();
      }
    }
    if (!first_error.empty()) throw NewtonDivergence("solve_invariance: " + first_error);
    return R;
  };

  Vec R = eval_residual(out.torus, nullptr);
  double res = residual_sup(R);
  out.residual_history.push_back(res);

  for (int it = 0; it < opts.max_iter && res > tol; ++it) {
    std::vector<TangentBlocks> tangents(node_count);
    R = eval_residual(out.torus, &tangents);

    Mat J = Mat::Zero(rows, dof);
    #pragma omp parallel for schedule(static) if (opts.parallel)
    for (long jn = 0; jn < node_count; ++jn) {
      const Mat Mfull = tangents[jn].assemble();  // 2d x 2d
      for (int m = 0; m < basis.mode_count(); ++m) {
        const double bh_c = basis.cos_here(jn, m), bh_s = basis.sin_here(jn, m);
        const double bt_c = basis.cos_there(jn, m), bt_s = basis.sin_there(jn, m);
        for (int comp = 0; comp < d; ++comp) {
          // u columns: dj = (e_comp b, 0)
          for (int trig = 0; trig < 2; ++trig) {
            const double bh = trig == 0 ? bh_c : bh_s;
            const double bt = trig == 0 ? bt_c : bt_s;
            const int cu = m * 2 * d + comp * 2 + trig;
            const int cv = per_field + cu;
            for (int rrow = 0; rrow < 2 * d; ++rrow) {
              J(jn * 2 * d + rrow, cu) = Mfull(rrow, comp) * bh;
              J(jn * 2 * d + rrow, cv) = Mfull(rrow, d + comp) * bh;
            }
            J(jn * 2 * d + comp, cu) -= bt;
            J(jn * 2 * d + d + comp, cv) -= bt;
          }
        }
      }
      for (int comp = 0; comp < d; ++comp) {
        const int cc = 2 * per_field + comp;
        for (int rrow = 0; rrow < 2 * d; ++rrow)
          J(jn * 2 * d + rrow, cc) = Mfull(rrow, d + comp);
        J(jn * 2 * d + d + comp, cc) -= 1.0;
      }
    }

    // Condition estimate and least-squares step. Small systems get an exact
    // SVD; larger ones use normal equations (Eigen's GEMM runs parallel).
    double cond;
    Vec delta;
    if (dof <= opts.svd_cond_max_dof) {
      Eigen::BDCSVD<Mat> svd(J, Eigen::ComputeThinU | Eigen::ComputeThinV);
      cond = svd.singularValues()(0) / svd.singularValues()(svd.singularValues().size() - 1);
      delta = -svd.solve(R);
    } else {
      Mat JtJ = J.transpose() * J;
      Vec Jtr = J.transpose() * R;
      Eigen::SelfAdjointEigenSolver<Mat> es(JtJ, Eigen::EigenvaluesOnly);
      double lo = std::max(es.eigenvalues().minCoeff(), 1e-300);
      cond = std::sqrt(es.eigenvalues().maxCoeff() / lo);
      delta = -JtJ.ldlt().solve(Jtr);
    }
    out.condition_history.push_back(cond);
    if (cond > opts.cond_threshold) {
      std::ostringstream os;
      os << "solve_invariance: Newton system condition " << cond << " exceeds "
         << opts.cond_threshold << " (small divisors too strong for these modes)";
      throw IllConditioned(os.str());
    }

    double lambda = 1.0;
    bool accepted = false;
    for (int h = 0; h < 8; ++h) {
      EmbeddedTorus cand = out.torus;
      apply_delta(cand, basis, lambda * delta);
      Vec Rc = eval_residual(cand, nullptr);
      double rc = residual_sup(Rc);
      if (rc < res) {
        out.torus = std::move(cand);
        res = rc;
        accepted = true;
        break;
      }
      lambda *= 0.5;
    }
    if (!accepted) {
      if (res <= 10 * tol) break;  // already essentially converged
      throw NewtonStagnation("solve_invariance: residual not reduced");
    }
    out.residual_history.push_back(res);
  }
  out.converged = res <= tol;

  // Graph and Lagrangian diagnostics.
  out.torus.jacobian_min_det = std::numeric_limits<double>::infinity();
  out.torus.lagrangian_residual = 0.0;
  for (const auto& th : nodes) {
    Mat Du = Mat::Identity(d, d) + out.torus.u.jacobian(th);
    out.torus.jacobian_min_det = std::min(out.torus.jacobian_min_det, Du.determinant());
    if (d >= 2) {
      Mat Dv = out.torus.v.jacobian(th);
      for (int a = 0; a < d; ++a)
        for (int b = a + 1; b < d; ++b) {
          double om = Du.col(a).dot(Dv.col(b)) - Du.col(b).dot(Dv.col(a));
          out.torus.lagrangian_residual = std::max(out.torus.lagrangian_residual, std::fabs(om));
        }
    }
  }
  return out;
}

double SolveResult::quadratic_tail_constant() const {
  if (residual_history.size() < 3) return 0.0;
  size_t n = residual_history.size();
  double rk = residual_history[n - 2], rk1 = residual_history[n - 1];
  if (rk <= 0.0) return 0.0;
  return rk1 / (rk * rk);
}

JmResult construct_jm(const TwistMap& F1, int N, const VecXi& r, int m,
                      const DiophantineVector& omega, const Mat& Bbar, const JmOptions& opts,
                      const EmbeddedTorus* warm_start) {
  const int d = F1.dim();
  JmResult out;
  out.beta_m = r.cast<double>() / N + omega.omega / (static_cast<double>(N) * m);

  // Inherited strong bound: |k.beta_m + l| >= gamma / (N m |k|^tau).
  {
    DiophantineCheck c =
        check_strongly_diophantine(out.beta_m, omega.gamma / (static_cast<double>(N) * m),
                                   omega.tau, opts.margin_scan_K);
    out.inherited_margin = c.margin;
    if (c.margin < 1.0) {
      std::ostringstream os;
      os << "construct_jm: rotation beta_m fails the inherited Diophantine bound (margin "
         << c.margin << " at k = [" << c.argmin_k.transpose() << "])";
      throw std::runtime_error(os.str());
    }
  }

  EmbeddedTorus init =
      warm_start ? warm_start->with_cutoff(opts.modes)
                 : EmbeddedTorus::flat(d, opts.modes, out.beta_m,
                                       Bbar.partialPivLu().solve(omega.omega / m));
  init.beta = out.beta_m;
  out.solve = solve_invariance(F1, out.beta_m, init, opts.modes, opts.tol, opts.solver);
  if (!out.solve.converged)
    throw NewtonStagnation("construct_jm: invariance solve did not reach tolerance");
  out.torus = out.solve.torus;

  // Verify the m N-step relation F1^{Nm}(j(theta)) = j(theta + omega) + (m r, 0).
  const long nm = static_cast<long>(N) * m;
  double worst = 0.0;
  std::string first_error;
  auto thetas = grid_nodes(d, opts.mstep_samples);
  #pragma omp parallel for schedule(dynamic) reduction(max : worst) if (opts.solver.parallel)
  for (long s = 0; s < static_cast<long>(thetas.size()); ++s) {
    try {
      CotangentPoint w = F1.iterate(out.torus.at(thetas[s]), nm);
      CotangentPoint tgt = out.torus.at(thetas[s] + omega.omega);
      tgt.x += static_cast<double>(m) * r.cast<double>();
      worst = std::max(worst, std::max(sup_norm(Vec(w.x - tgt.x)), sup_norm(Vec(w.p - tgt.p))));
    } catch (const std::exception& e) {
      #pragma omp critical
      if (first_error.empty()) first_error = e.what();
    }
  }
  if (!first_error.empty()) throw NewtonDivergence("construct_jm: " + first_error);
  out.mstep_residual = worst;
  if (worst > 10.0 * opts.tol) {
    std::ostringstream os;
    os << "construct_jm: mN-step verification failed (residual " << worst << ")";
    throw std::runtime_error(os.str());
  }
  return out;
}

}  // namespace twistkam
