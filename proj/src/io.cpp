#include "twistkam/io.hpp"

#include <nlohmann/json.hpp>

#include <fstream>
#include <iomanip>

namespace twistkam::io {

namespace {

json vec_to_json(const Vec& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

Vec vec_from_json(const json& a) {
  Vec v(a.size());
  for (size_t i = 0; i < a.size(); ++i) v[i] = a[i].get<double>();
  return v;
}

json mat_to_json(const Mat& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json r = json::array();
    for (Eigen::Index jj = 0; jj < m.cols(); ++jj) r.push_back(m(i, jj));
    rows.push_back(r);
  }
  return rows;
}

Mat mat_from_json(const json& rows) {
  Mat m(rows.size(), rows.empty() ? 0 : rows[0].size());
  for (size_t i = 0; i < rows.size(); ++i)
    for (size_t jj = 0; jj < rows[i].size(); ++jj) m(i, jj) = rows[i][jj].get<double>();
  return m;
}

}  // namespace

json fourier_to_json(const FourierMap& f) {
  json j;
  j["dim"] = f.dim();
  j["cutoff"] = f.cutoff();
  j["arity"] = f.arity();
  json coeffs = json::array();
  for (int flat = 0; flat < f.mode_count(); ++flat) {
    VecXi k = f.mode(flat);
    for (int comp = 0; comp < f.arity(); ++comp) {
      auto c = f.coeff(k, comp);
      if (c == std::complex<double>(0.0, 0.0)) continue;
      json entry;
      entry["k"] = json::array();
      for (int a = 0; a < f.dim(); ++a) entry["k"].push_back(k[a]);
      entry["comp"] = comp;
      entry["re"] = c.real();
      entry["im"] = c.imag();
      coeffs.push_back(entry);
    }
  }
  j["coefficients"] = coeffs;
  return j;
}

FourierMap fourier_from_json(const json& j) {
  FourierMap f(j.at("dim").get<int>(), j.at("cutoff").get<int>(), j.at("arity").get<int>());
  for (const auto& entry : j.at("coefficients")) {
    VecXi k(f.dim());
    for (int a = 0; a < f.dim(); ++a) k[a] = entry.at("k")[a].get<int>();
    // set_coeff also writes conj at -k; entries come in conjugate pairs, so
    // the second write is idempotent.
    f.set_coeff(k, entry.at("comp").get<int>(),
                {entry.at("re").get<double>(), entry.at("im").get<double>()});
  }
  return f;
}

json graph_to_json(const InvariantGraph& g) {
  json j;
  j["N"] = g.N;
  j["r"] = json::array();
  for (int a = 0; a < g.r.size(); ++a) j["r"].push_back(g.r[a]);
  j["p_inf"] = vec_to_json(g.p_inf);
  j["u"] = fourier_to_json(g.u);
  j["grid_n"] = g.grid_n;
  j["curl_residual"] = g.curl_residual;
  j["fit_residual"] = g.fit_residual;
  j["invariance_residual"] = g.invariance_residual;
  return j;
}

InvariantGraph graph_from_json(const json& j) {
  InvariantGraph g;
  g.N = j.at("N").get<int>();
  g.r = VecXi(j.at("r").size());
  for (size_t a = 0; a < j.at("r").size(); ++a) g.r[a] = j.at("r")[a].get<int>();
  g.p_inf = vec_from_json(j.at("p_inf"));
  g.u = fourier_from_json(j.at("u"));
  g.grid_n = j.at("grid_n").get<int>();
  g.curl_residual = j.at("curl_residual").get<double>();
  g.fit_residual = j.at("fit_residual").get<double>();
  g.invariance_residual = j.at("invariance_residual").get<double>();
  return g;
}

json torus_to_json(const EmbeddedTorus& t) {
  json j;
  j["beta"] = vec_to_json(t.beta);
  j["c"] = vec_to_json(t.c);
  j["u"] = fourier_to_json(t.u);
  j["v"] = fourier_to_json(t.v);
  j["jacobian_min_det"] = t.jacobian_min_det;
  j["lagrangian_residual"] = t.lagrangian_residual;
  return j;
}

EmbeddedTorus torus_from_json(const json& j) {
  EmbeddedTorus t;
  t.beta = vec_from_json(j.at("beta"));
  t.c = vec_from_json(j.at("c"));
  t.u = fourier_from_json(j.at("u"));
  t.v = fourier_from_json(j.at("v"));
  t.jacobian_min_det = j.at("jacobian_min_det").get<double>();
  t.lagrangian_residual = j.at("lagrangian_residual").get<double>();
  return t;
}

json flat_to_json(const FlatStructure& f) {
  json j;
  j["psi_minus_id"] = fourier_to_json(f.psi.periodic);
  j["psi_inv_minus_id"] = fourier_to_json(f.psi.inv_periodic);
  j["B_bar"] = mat_to_json(f.B_bar);
  j["conjugacy_residual"] = f.conjugacy_residual;
  j["min_jacobian_det"] = f.min_jacobian_det;
  return j;
}

FlatStructure flat_from_json(const json& j) {
  FlatStructure f;
  f.psi.periodic = fourier_from_json(j.at("psi_minus_id"));
  f.psi.inv_periodic = fourier_from_json(j.at("psi_inv_minus_id"));
  f.B_bar = mat_from_json(j.at("B_bar"));
  f.conjugacy_residual = j.at("conjugacy_residual").get<double>();
  f.min_jacobian_det = j.at("min_jacobian_det").get<double>();
  return f;
}

void write_json_file(const std::string& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << j.dump(2) << "\n";
}

json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path);
  json j;
  in >> j;
  return j;
}

void write_csv(const std::string& path, const std::vector<std::string>& header,
               const std::vector<std::vector<double>>& rows) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  for (size_t i = 0; i < header.size(); ++i) out << (i ? "," : "") << header[i];
  out << "\n";
  out << std::setprecision(17);
  for (const auto& row : rows) {
    for (size_t i = 0; i < row.size(); ++i) out << (i ? "," : "") << row[i];
    out << "\n";
  }
}

void write_graph_csv(const std::string& path, const InvariantGraph& g, int grid_n) {
  const int d = g.dim();
  std::vector<std::string> header;
  for (int a = 0; a < d; ++a) header.push_back("theta" + std::to_string(a + 1));
  for (int a = 0; a < d; ++a) header.push_back("x" + std::to_string(a + 1));
  for (int a = 0; a < d; ++a) header.push_back("p" + std::to_string(a + 1));
  std::vector<std::vector<double>> rows;
  for (const auto& th : grid_nodes(d, grid_n)) {
    Vec p = g.p_at(th);
    std::vector<double> row;
    for (int a = 0; a < d; ++a) row.push_back(th[a]);
    for (int a = 0; a < d; ++a) row.push_back(th[a]);
    for (int a = 0; a < d; ++a) row.push_back(p[a]);
    rows.push_back(std::move(row));
  }
  write_csv(path, header, rows);
}

void write_torus_csv(const std::string& path, int dim, int grid_n,
                     const std::function<CotangentPoint(const Vec&)>& embed) {
  std::vector<std::string> header;
  for (int a = 0; a < dim; ++a) header.push_back("theta" + std::to_string(a + 1));
  for (int a = 0; a < dim; ++a) header.push_back("x" + std::to_string(a + 1));
  for (int a = 0; a < dim; ++a) header.push_back("p" + std::to_string(a + 1));
  std::vector<std::vector<double>> rows;
  for (const auto& th : grid_nodes(dim, grid_n)) {
    CotangentPoint z = embed(th);
    std::vector<double> row;
    for (int a = 0; a < dim; ++a) row.push_back(th[a]);
    for (int a = 0; a < dim; ++a) row.push_back(z.x[a]);
    for (int a = 0; a < dim; ++a) row.push_back(z.p[a]);
    rows.push_back(std::move(row));
  }
  write_csv(path, header, rows);
}

}  // namespace twistkam::io
