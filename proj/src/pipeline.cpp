#include "twistkam/pipeline.hpp"

#include <omp.h>

#include <filesystem>
#include <nlohmann/json.hpp>
#include <sstream>

#include "twistkam/io.hpp"

namespace twistkam {

namespace {

// Pinned stage tolerances.
constexpr double kGraphInvarianceTol = 1e-8;
constexpr double kTheoremTol = 1e-7;
constexpr double kCorollaryTol = 1e-7;
constexpr double kLemma4Tol = 1e-7;
constexpr double kFlatTol = 1e-7;
constexpr double kQ1Min = 1.9;
constexpr double kQ2Min = 2.9;

double set_distance(const CotangentPoint& a, const CotangentPoint& b) {
  return std::max(circle_dist(a.x, b.x), sup_norm(Vec(a.p - b.p)));
}

}  // namespace

CotangentPoint NormalFormChart::apply(const CotangentPoint& z) const {
  Vec X = z.x + psi.periodic.eval(z.x);
  Mat Dpsi = psi.jacobian(z.x);
  Vec P = graph.p_at(X) + Dpsi.transpose().partialPivLu().solve(z.p);
  return {X, P};
}

CotangentPoint NormalFormChart::apply_inverse(const CotangentPoint& z) const {
  Vec x = psi.apply_inverse(z.x);
  Mat Dpsi = psi.jacobian(x);
  Vec p = Dpsi.transpose() * (z.p - graph.p_at(z.x));
  return {x, p};
}

TwistMap build_normal_form_map(const GenFunPtr& S, const NormalFormChart& chart,
                               double newton_tol) {
  auto S0 = std::make_shared<TransformedGeneratingFunction>(S, chart.graph.u, chart.graph.p_inf);
  // Twist lower bound degrades by the squared smallest stretch of psi.
  double sigma_min = std::numeric_limits<double>::infinity();
  for (const auto& node : grid_nodes(S->dim(), 33)) {
    Eigen::JacobiSVD<Mat> svd(chart.psi.jacobian(node));
    sigma_min = std::min(sigma_min, svd.singularValues().minCoeff());
  }
  auto S1 = std::make_shared<PulledBackGeneratingFunction>(
      S0, chart.psi, S->twist_constant() * sigma_min * sigma_min);
  return TwistMap(S1, newton_tol);
}

RotationBookkeeping rotation_bookkeeping(const EmbeddedTorus& jm, const TwistMap& F1, int N,
                                         int m, const Vec& omega, const VecXi& r, int theta_grid,
                                         double tol) {
  const int d = F1.dim();
  auto thetas = grid_nodes(d, theta_grid);
  std::vector<Vec> displacements(thetas.size());
  std::string first_error;

  #pragma omp parallel for schedule(dynamic)
  for (long j = 0; j < static_cast<long>(thetas.size()); ++j) {
    try {
      CotangentPoint target = F1.forward(jm.at(thetas[j]));
      // Solve j(y) = target by Gauss-Newton; coarse rotation r/N seeds the lift.
      Vec y = thetas[j] + r.cast<double>() / N;
      for (int it = 0; it < 50; ++it) {
        CotangentPoint jy = jm.at(y);
        Vec res(2 * d);
        res << jy.x - target.x, jy.p - target.p;
        if (sup_norm(res) <= 1e-12) break;
        Mat J = jm.tangent(y);
        y -= (J.transpose() * J).ldlt().solve(J.transpose() * res);
      }
      displacements[j] = y - thetas[j];
    } catch (const std::exception& e) {
      #pragma omp critical
      if (first_error.empty()) first_error = e.what();
    }
  }
  if (!first_error.empty())
    throw std::runtime_error("rotation_bookkeeping: " + first_error);

  RotationBookkeeping out;
  Vec mean = Vec::Zero(d);
  for (const auto& dsp : displacements) mean += dsp;
  mean /= static_cast<double>(displacements.size());
  out.beta_measured = mean;
  for (const auto& dsp : displacements)
    out.translation_residual = std::max(out.translation_residual, sup_norm(Vec(dsp - mean)));

  Vec k_real = static_cast<double>(N) * m * mean - omega;
  out.k_m = VecXi(d);
  out.l_m = VecXi(d);
  for (int a = 0; a < d; ++a) {
    long k = std::lround(k_real[a]);
    out.integrality_residual = std::max(out.integrality_residual, std::fabs(k_real[a] - k));
    out.k_m[a] = static_cast<int>(k);
  }
  if (out.integrality_residual > tol) {
    std::ostringstream os;
    os << "rotation_bookkeeping: N m beta_m - omega is not integral (deviation "
       << out.integrality_residual << "); torus not invariant or rotation misidentified";
    throw std::runtime_error(os.str());
  }
  for (int a = 0; a < d; ++a) {
    if (out.k_m[a] != m * r[a]) {
      std::ostringstream os;
      os << "rotation_bookkeeping: k_m[" << a << "] = " << out.k_m[a] << " but m r = " << m * r[a];
      throw std::runtime_error(os.str());
    }
    out.l_m[a] = out.k_m[a] / m;
  }
  if (out.translation_residual > tol) {
    std::ostringstream os;
    os << "rotation_bookkeeping: alpha_{m,1} deviates from a rigid translation by "
       << out.translation_residual;
    throw std::runtime_error(os.str());
  }
  return out;
}

double check_corollary(const TorusDiffeo& psi, const TwistMap& F, const InvariantGraph& graph,
                       int N, const VecXi& r, int grid_n) {
  const int d = F.dim();
  Vec shift = r.cast<double>() / N;
  double worst = 0.0;
  std::string first_error;
  auto nodes = grid_nodes(d, grid_n);
  #pragma omp parallel for schedule(dynamic) reduction(max : worst)
  for (long j = 0; j < static_cast<long>(nodes.size()); ++j) {
    try {
      Vec x = psi.apply(nodes[j]);
      Vec fx = F.forward(graph.point_at(x)).x;
      Vec back = psi.apply_inverse(fx);
      worst = std::max(worst, circle_dist(back, Vec(nodes[j] + shift)));
    } catch (const std::exception& e) {
      #pragma omp critical
      if (first_error.empty()) first_error = e.what();
    }
  }
  if (!first_error.empty()) throw std::runtime_error("check_corollary: " + first_error);
  return worst;
}

namespace {

double hausdorff(const std::vector<CotangentPoint>& A, const std::vector<CotangentPoint>& B) {
  auto directed = [](const std::vector<CotangentPoint>& from,
                     const std::vector<CotangentPoint>& to) {
    double worst = 0.0;
    #pragma omp parallel for schedule(static) reduction(max : worst)
    for (long i = 0; i < static_cast<long>(from.size()); ++i) {
      double best = std::numeric_limits<double>::infinity();
      for (const auto& b : to) best = std::min(best, set_distance(from[i], b));
      worst = std::max(worst, best);
    }
    return worst;
  };
  return std::max(directed(A, B), directed(B, A));
}

double distance_to_torus(const EmbeddedTorus& jm, const CotangentPoint& w, int prefilter_n) {
  const int d = jm.dim();
  auto nodes = grid_nodes(d, prefilter_n);
  double best = std::numeric_limits<double>::infinity();
  Vec best_theta = nodes[0];
  for (const auto& th : nodes) {
    double dist = set_distance(jm.at(th), w);
    if (dist < best) {
      best = dist;
      best_theta = th;
    }
  }
  // Local Gauss-Newton on the squared Euclidean distance, lift chosen at the
  // prefilter minimizer.
  CotangentPoint j0 = jm.at(best_theta);
  Vec wx = w.x;
  for (int a = 0; a < d; ++a) wx[a] = j0.x[a] + (wrap1(w.x[a] - j0.x[a] + 0.5) - 0.5);
  Vec theta = best_theta;
  for (int it = 0; it < 12; ++it) {
    CotangentPoint jt = jm.at(theta);
    Vec res(2 * d);
    res << jt.x - wx, jt.p - w.p;
    Mat J = jm.tangent(theta);
    Vec step = (J.transpose() * J).ldlt().solve(J.transpose() * res);
    theta -= step;
    if (sup_norm(step) < 1e-13) break;
  }
  CotangentPoint jt = jm.at(theta);
  return std::min(best, std::max(sup_norm(Vec(jt.x - wx)), sup_norm(Vec(jt.p - w.p))));
}

}  // namespace

TheoremResiduals theorem_residuals(const TwistMap& F, const NormalFormChart& chart,
                                   const TwistMap& F1, const EmbeddedTorus& jm, int N,
                                   const VecXi& r, const Vec& omega, int m, int n_max,
                                   int theta_grid, bool parallel) {
  const int d = F.dim();
  Vec beta = r.cast<double>() / N + omega / (static_cast<double>(m) * N);
  const int n_top = std::min(static_cast<long>(N) * m, static_cast<long>(n_max));

  TheoremResiduals out;
  auto thetas = grid_nodes(d, theta_grid);
  double worst = 0.0, lemma4 = 0.0;
  std::string first_error;

  #pragma omp parallel for schedule(dynamic) reduction(max : worst, lemma4) if (parallel)
  for (long j = 0; j < static_cast<long>(thetas.size()); ++j) {
    try {
      const Vec& th = thetas[j];
      CotangentPoint z = chart.apply(jm.at(th));
      for (int n = 1; n <= n_top; ++n) {
        z = F.forward(z);
        CotangentPoint target = chart.apply(jm.at(Vec(th + n * beta)));
        worst = std::max(worst, set_distance(z, target));
      }
      // Lemma 4: F1(j(T^d)) stays on the set j(T^d).
      CotangentPoint w = F1.forward(jm.at(th));
      lemma4 = std::max(lemma4, distance_to_torus(jm, w, 4 * theta_grid));
    } catch (const std::exception& e) {
      #pragma omp critical
      if (first_error.empty()) first_error = e.what();
    }
  }
  if (!first_error.empty()) throw std::runtime_error("theorem_residuals: " + first_error);
  out.theorem_residual = worst;
  out.lemma4_residual = lemma4;

  // Hausdorff distance between T_m = G(j_m(T^d)) and the graph.
  int cloud_n = d == 1 ? 512 : 40;
  std::vector<CotangentPoint> Tm, G;
  for (const auto& th : grid_nodes(d, cloud_n)) {
    CotangentPoint z = chart.apply(jm.at(th));
    z.x = wrap(z.x);
    Tm.push_back(z);
    G.push_back(chart.graph.point_at(th));
  }
  out.hausdorff = hausdorff(Tm, G);
  return out;
}

namespace {

using nlohmann::json;

json report_to_json(const TheoremReport& rep) {
  json j;
  j["family"] = rep.family;
  j["dim"] = rep.dim;
  j["N"] = rep.N;
  j["r"] = rep.r;
  j["periodicity_residual"] = rep.periodicity_residual;
  j["twist_A"] = rep.twist_A;
  j["omega_margin"] = rep.omega_margin;
  j["scan_margin"] = rep.scan_margin;
  j["graph_invariance_residual"] = rep.graph_invariance_residual;
  j["graph_curl_residual"] = rep.graph_curl_residual;
  {
    json p = json::array();
    for (Eigen::Index a = 0; a < rep.p_inf.size(); ++a) p.push_back(rep.p_inf[a]);
    j["p_inf"] = p;
  }
  {
    json b = json::array();
    for (Eigen::Index a = 0; a < rep.B_bar.rows(); ++a) {
      json row = json::array();
      for (Eigen::Index c = 0; c < rep.B_bar.cols(); ++c) row.push_back(rep.B_bar(a, c));
      b.push_back(row);
    }
    j["B_bar"] = b;
  }
  j["flat_conjugacy_residual"] = rep.flat_conjugacy_residual;
  j["metric_min_eigenvalue"] = rep.metric_min_eigenvalue;
  j["monodromy_symmetry_residual"] = rep.monodromy_symmetry_residual;
  j["monodromy_d_deviation"] = rep.monodromy_d_deviation;
  j["q1"] = rep.q1;
  j["q2"] = rep.q2;
  j["normal_form_bbar_gap"] = rep.normal_form_bbar_gap;
  j["euler_slope"] = rep.euler_slope;
  j["euler_momentum_slope"] = rep.euler_momentum_slope;
  {
    json rows = json::array();
    for (const auto& row : rep.flow_rows)
      rows.push_back({{"m", row.m}, {"c0", row.c0_distance}, {"c1", row.c1_distance}});
    j["flow_convergence"] = rows;
  }
  {
    json recs = json::array();
    for (const auto& rec : rep.records) {
      json e;
      e["m"] = rec.m;
      json beta = json::array();
      for (Eigen::Index a = 0; a < rec.beta_m.size(); ++a) beta.push_back(rec.beta_m[a]);
      e["beta_m"] = beta;
      e["k_m"] = rec.k_m;
      e["l_m"] = rec.l_m;
      e["theorem_residual"] = rec.theorem_residual;
      e["n_checked"] = rec.n_checked;
      e["hausdorff"] = rec.hausdorff;
      e["psi_c0"] = rec.psi_c0;
      e["psi_c1"] = rec.psi_c1;
      e["u_norm"] = rec.u_norm;
      e["v_norm"] = rec.v_norm;
      e["lemma4_residual"] = rec.lemma4_residual;
      e["solver_residual"] = rec.solver_residual;
      e["condition"] = rec.condition;
      e["mstep_residual"] = rec.mstep_residual;
      e["translation_residual"] = rec.translation_residual;
      e["torus_min_jacobian"] = rec.torus_min_jacobian;
      recs.push_back(e);
    }
    j["records"] = recs;
  }
  j["corollary_residual"] = rep.corollary_residual;
  j["trends"] = {{"hausdorff_slope", rep.trends.hausdorff_slope},
                 {"hausdorff_decreasing", rep.trends.hausdorff_decreasing},
                 {"psi_converging", rep.trends.psi_converging},
                 {"u_norm_decreasing", rep.trends.u_norm_decreasing},
                 {"mv_norm_decreasing", rep.trends.mv_norm_decreasing}};
  j["pass"] = rep.pass;
  if (!rep.failure.empty()) j["failure"] = rep.failure;
  return j;
}

void persist_report(const TheoremReport& rep, const std::string& dir) {
  io::write_json_file(dir + "/report.json", report_to_json(rep));
}

}  // namespace

TheoremReport run_pipeline(const ExperimentConfig& cfg) {
  namespace fs = std::filesystem;
  fs::create_directories(cfg.output_dir);

  TheoremReport rep;
  rep.family = cfg.family.name;
  rep.dim = cfg.family.dim;
  rep.N = cfg.N;
  for (int a = 0; a < cfg.r.size(); ++a) rep.r.push_back(cfg.r[a]);

  std::string stage = "validate";
  try {
    // (0) Validate family and rotation vector.
    GenFunPtr S = make_family(cfg.family);
    rep.periodicity_residual = check_periodicity(*S, 2000, 2);
    if (rep.periodicity_residual > 1e-10)
      throw std::runtime_error("generating function violates periodicity (C1), residual " +
                               std::to_string(rep.periodicity_residual));
    TwistEstimate te = check_uniform_twist(*S, 4000);
    rep.twist_A = te.A;
    if (!te.ok) throw std::runtime_error("uniform twist condition (C2) fails, A <= 0");
    DiophantineCheck dioph = check_strongly_diophantine(cfg.omega, cfg.gamma, cfg.tau, cfg.K_max);
    rep.omega_margin = dioph.margin;
    if (dioph.margin < 1.0) {
      std::ostringstream os;
      os << "omega fails the strong Diophantine bound: margin " << dioph.margin << " at k = ["
         << dioph.argmin_k.transpose() << "]";
      throw std::runtime_error(os.str());
    }
    DiophantineVector omega{cfg.omega, cfg.gamma, cfg.tau, cfg.K_max, dioph.margin};

    TwistMap F(S, 1e-13);

    // (1) Conjugate-point scan, then the invariant graph.
    stage = "graph";
    {
      ScanOptions so;
      so.x_grid = cfg.scan_x_grid;
      so.p_grid = cfg.scan_p_grid;
      so.p_center = cfg.r.cast<double>() / cfg.N;
      so.p_window = cfg.scan_p_window;
      so.n_max = cfg.scan_n_max;
      so.parallel = cfg.parallel;
      ScanResult scan = transversality_scan(F, so);
      rep.scan_margin = scan.min_margin;
      {
        std::vector<std::string> header;
        for (int a = 0; a < cfg.family.dim; ++a) header.push_back("x" + std::to_string(a + 1));
        for (int a = 0; a < cfg.family.dim; ++a) header.push_back("p" + std::to_string(a + 1));
        header.push_back("n");
        header.push_back("margin");
        io::write_csv(cfg.output_dir + "/conjugate_scan.csv", header, scan.table);
      }
      if (scan.min_margin <= cfg.scan_margin) {
        std::ostringstream os;
        os << "vertical transversality fails: margin " << scan.min_margin << " <= "
           << cfg.scan_margin << " at x = [" << scan.argmin.x.transpose() << "], p = ["
           << scan.argmin.p.transpose() << "], n = " << scan.argmin_n
           << "; the map has conjugate points at sample resolution";
        throw std::runtime_error(os.str());
      }
    }

    GraphOptions gopts;
    gopts.fourier_cutoff = cfg.graph_cutoff;
    gopts.parallel = cfg.parallel;
    InvariantGraph graph = build_invariant_graph(S, cfg.N, cfg.r, cfg.graph_grid, gopts);
    rep.graph_invariance_residual = graph.invariance_residual;
    rep.graph_curl_residual = graph.curl_residual;
    rep.p_inf = graph.p_inf;
    io::write_json_file(cfg.output_dir + "/graph.json", io::graph_to_json(graph));
    io::write_graph_csv(cfg.output_dir + "/graph.csv", graph, cfg.graph_grid);
    if (graph.invariance_residual > kGraphInvarianceTol)
      throw std::runtime_error("graph invariance residual " +
                               std::to_string(graph.invariance_residual) + " exceeds 1e-8");

    // (2) Monodromy metric and flat structure.
    stage = "flat";
    MetricField metric = metric_from_graph(F, graph, cfg.N, cfg.metric_grid, cfg.metric_cutoff,
                                           cfg.parallel);
    rep.metric_min_eigenvalue = metric.min_eigenvalue;
    {
      MonodromyReport mono = monodromy_B(F, graph, Vec::Zero(cfg.family.dim), cfg.N);
      rep.monodromy_symmetry_residual = mono.symmetry_residual;
      rep.monodromy_d_deviation = mono.d_block_deviation;
    }
    FlatOptions fopts;
    fopts.psi_cutoff = cfg.flat_cutoff > 0 ? cfg.flat_cutoff : cfg.metric_cutoff;
    FlatStructure flat = flat_structure(metric, fopts);
    rep.B_bar = flat.B_bar;
    rep.flat_conjugacy_residual = flat.conjugacy_residual;
    io::write_json_file(cfg.output_dir + "/flat.json", io::flat_to_json(flat));
    if (flat.conjugacy_residual > kFlatTol)
      throw std::runtime_error("flat-structure conjugacy residual " +
                               std::to_string(flat.conjugacy_residual) + " exceeds 1e-7");

    // (3) Normal-form chart and F1.
    stage = "normal-form";
    NormalFormChart chart{graph, flat.psi};
    TwistMap F1 = build_normal_form_map(S, chart, 1e-13);

    NormalFormReport nf = verify_normal_form(F1, cfg.N, cfg.r);
    rep.q1 = nf.q1;
    rep.q2 = nf.q2;
    rep.normal_form_bbar_gap = sup_norm(Mat(nf.B_bar_fit - flat.B_bar));
    if (!nf.exact && (nf.q1 < kQ1Min || nf.q2 < kQ2Min)) {
      std::ostringstream os;
      os << "normal-form exponents too small: q1 = " << nf.q1 << ", q2 = " << nf.q2
         << " (wrong psi or conjugate points)";
      throw std::runtime_error(os.str());
    }

    {
      auto S0 = std::make_shared<TransformedGeneratingFunction>(S, graph.u, graph.p_inf);
      TwistMap F0(S0, 1e-13);
      Vec z0 = Vec::Constant(cfg.family.dim, 0.37);
      Vec p0 = Vec::Constant(cfg.family.dim, 0.8);
      EulerDefectReport ed = euler_defect(F0, cfg.N, cfg.r, metric, {z0, p0}, 1e-2);
      rep.euler_slope = ed.slope;
      rep.euler_momentum_slope = ed.momentum_slope;
      std::vector<CotangentPoint> samples;
      for (const auto& th : grid_nodes(cfg.family.dim, 2))
        samples.push_back({th, Vec::Constant(cfg.family.dim, 0.6)});
      rep.flow_rows = flow_convergence(F0, cfg.N, cfg.r, metric, 1.0, {8, 16, 32, 64}, samples);
    }

    // (4) KAM tori for each m.
    std::vector<EmbeddedTorus> tori;
    std::vector<std::pair<int, std::function<CotangentPoint(const Vec&)>>> embeddings;
    const EmbeddedTorus* warm = nullptr;
    for (int m : cfg.m_list) {
      stage = "kam m=" + std::to_string(m);
      JmOptions jopts;
      jopts.modes = cfg.modes;
      jopts.tol = cfg.tol;
      jopts.solver.parallel = cfg.parallel;
      JmResult jm;
      try {
        jm = construct_jm(F1, cfg.N, cfg.r, m, omega, flat.B_bar, jopts, nullptr);
      } catch (const std::exception&) {
        if (!warm) throw;
        jm = construct_jm(F1, cfg.N, cfg.r, m, omega, flat.B_bar, jopts, warm);
      }

      stage = "verify m=" + std::to_string(m);
      RotationBookkeeping rot =
          rotation_bookkeeping(jm.torus, F1, cfg.N, m, cfg.omega, cfg.r, 32);
      TheoremResiduals res = theorem_residuals(F, chart, F1, jm.torus, cfg.N, cfg.r, cfg.omega,
                                               m, cfg.n_max, cfg.theta_grid, cfg.parallel);

      MRecord rec;
      rec.m = m;
      rec.beta_m = jm.beta_m;
      for (int a = 0; a < cfg.family.dim; ++a) {
        rec.k_m.push_back(rot.k_m[a]);
        rec.l_m.push_back(rot.l_m[a]);
      }
      rec.theorem_residual = res.theorem_residual;
      rec.n_checked = static_cast<int>(std::min(static_cast<long>(cfg.N) * m,
                                                static_cast<long>(cfg.n_max)));
      rec.hausdorff = res.hausdorff;
      rec.lemma4_residual = res.lemma4_residual;
      rec.u_norm = jm.torus.u.sup_norm_estimate();
      rec.v_norm = jm.torus.v.sup_norm_estimate();
      rec.solver_residual = jm.solve.residual_history.back();
      rec.condition =
          jm.solve.condition_history.empty() ? 0.0 : jm.solve.condition_history.back();
      rec.mstep_residual = jm.mstep_residual;
      rec.translation_residual = rot.translation_residual;
      rec.torus_min_jacobian = jm.torus.jacobian_min_det;

      // psi_m(theta) = psi(theta + u_m(theta)) against psi_infinity = psi.
      {
        double c0 = 0.0, c1 = 0.0;
        for (const auto& th : grid_nodes(cfg.family.dim, 128)) {
          Vec shifted = th + jm.torus.u.eval(th);
          c0 = std::max(c0, circle_dist(flat.psi.apply(shifted), flat.psi.apply(th)));
          Mat Dm = flat.psi.jacobian(shifted) *
                   (Mat::Identity(cfg.family.dim, cfg.family.dim) + jm.torus.u.jacobian(th));
          c1 = std::max(c1, sup_norm(Mat(Dm - flat.psi.jacobian(th))));
        }
        rec.psi_c0 = c0;
        rec.psi_c1 = c1;
      }

      if (res.theorem_residual > kTheoremTol) {
        std::ostringstream os;
        os << "theorem-iii residual " << res.theorem_residual << " exceeds 1e-7 for m = " << m;
        throw std::runtime_error(os.str());
      }
      if (res.lemma4_residual > kLemma4Tol)
        throw std::runtime_error("Lemma 4 set-invariance residual exceeds 1e-7");

      io::write_json_file(cfg.output_dir + "/torus_m" + std::to_string(m) + ".json",
                          io::torus_to_json(jm.torus));
      auto embed = [chart, torus = jm.torus](const Vec& th) { return chart.apply(torus.at(th)); };
      io::write_torus_csv(cfg.output_dir + "/torus_m" + std::to_string(m) + ".csv",
                          cfg.family.dim, cfg.family.dim == 1 ? 512 : 48, [&](const Vec& th) {
                            CotangentPoint z = embed(th);
                            z.x = wrap(z.x);
                            return z;
                          });
      rep.records.push_back(rec);
      tori.push_back(jm.torus);
      warm = &tori.back();
      embeddings.emplace_back(m, embed);
    }

    // (5) Corollary and convergence trends.
    stage = "report";
    rep.corollary_residual = check_corollary(flat.psi, F, graph, cfg.N, cfg.r);
    if (rep.corollary_residual > kCorollaryTol)
      throw std::runtime_error("corollary residual " + std::to_string(rep.corollary_residual) +
                               " exceeds 1e-7");

    if (rep.records.size() >= 2) {
      auto& R = rep.records;
      rep.trends.hausdorff_decreasing = true;
      rep.trends.psi_converging = true;
      rep.trends.u_norm_decreasing = true;
      rep.trends.mv_norm_decreasing = true;
      for (size_t i = 1; i < R.size(); ++i) {
        rep.trends.hausdorff_decreasing &= R[i].hausdorff < R[i - 1].hausdorff;
        rep.trends.psi_converging &= R[i].psi_c0 <= R[i - 1].psi_c0 + 1e-12;
        rep.trends.u_norm_decreasing &= R[i].u_norm < R[i - 1].u_norm + 1e-14;
        rep.trends.mv_norm_decreasing &= R[i].m * R[i].v_norm < R[i - 1].m * R[i - 1].v_norm + 1e-14;
      }
      double sx = 0, sy = 0, sxx = 0, sxy = 0;
      for (const auto& rec : R) {
        double X = std::log(static_cast<double>(rec.m));
        double Y = std::log(std::max(rec.hausdorff, 1e-300));
        sx += X;
        sy += Y;
        sxx += X * X;
        sxy += X * Y;
      }
      double n = static_cast<double>(R.size());
      rep.trends.hausdorff_slope = -(n * sxy - sx * sy) / (n * sxx - sx * sx);
    }

    {
      std::vector<std::vector<double>> rows;
      for (const auto& rec : rep.records)
        rows.push_back({static_cast<double>(rec.m), rec.hausdorff, rec.psi_c0, rec.psi_c1,
                        rec.u_norm, rec.m * rec.v_norm, rec.theorem_residual});
      io::write_csv(cfg.output_dir + "/trends.csv",
                    {"m", "hausdorff", "psi_c0", "psi_c1", "u_norm", "m_v_norm",
                     "theorem_residual"},
                    rows);
    }
    if (cfg.family.dim == 1 && cfg.phase_svg)
      write_phase_svg(cfg.output_dir + "/phase.svg", F, graph, embeddings);

    rep.pass = true;
    if (rep.records.size() >= 3) {
      rep.pass &= rep.trends.hausdorff_slope >= 0.8 && rep.trends.hausdorff_slope <= 1.2;
      rep.pass &= rep.trends.u_norm_decreasing && rep.trends.mv_norm_decreasing;
      rep.pass &= rep.trends.hausdorff_decreasing;
    }
    persist_report(rep, cfg.output_dir);
    return rep;
  } catch (const std::exception& e) {
    rep.pass = false;
    rep.failure = "[stage " + stage + "] " + e.what();
    persist_report(rep, cfg.output_dir);
    throw StageError(stage, e.what());
  }
}

}  // namespace twistkam
