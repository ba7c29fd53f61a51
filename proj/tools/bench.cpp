// Timing comparison of the serial reference kernels against the OpenMP ones.
#include <omp.h>

#include <chrono>
#include <iostream>

#include "twistkam/conjugacy.hpp"
#include "twistkam/kam.hpp"
#include "twistkam/variational.hpp"

using namespace twistkam;
using clk = std::chrono::steady_clock;

namespace {

double ms_since(clk::time_point t0) {
  return std::chrono::duration<double, std::milli>(clk::now() - t0).count();
}

void report(const std::string& name, double serial_ms, double parallel_ms) {
  std::cout << name << ": serial " << serial_ms << " ms, openmp " << parallel_ms << " ms, speedup "
            << serial_ms / parallel_ms << "x\n";
}

}  // namespace

int main(int argc, char** argv) {
  int grid = argc > 1 ? std::atoi(argv[1]) : 256;
  std::cout << "threads: " << omp_get_max_threads() << ", grid: " << grid << "\n";

  FamilySpec spec;
  spec.name = "conjugated_integrable";
  spec.dim = 1;
  spec.amplitude = Vec::Constant(1, 0.3);
  GenFunPtr S = make_family(spec);
  TwistMap F(S, 1e-13);
  VecXi r = VecXi::Constant(1, 1);
  const int N = 3;

  {
    auto t0 = clk::now();
    auto a = graph_momentum_samples_serial(*S, N, r, grid);
    double ts = ms_since(t0);
    t0 = clk::now();
    auto b = graph_momentum_samples_parallel(*S, N, r, grid);
    double tp = ms_since(t0);
    double dev = 0.0;
    for (size_t i = 0; i < a.size(); ++i) dev = std::max(dev, sup_norm(Vec(a[i] - b[i])));
    report("graph momentum sampling", ts, tp);
    std::cout << "  max serial/parallel deviation: " << dev << "\n";
  }

  GraphOptions gopts;
  gopts.fourier_cutoff = 16;
  gopts.shift_check_stride = 0;
  InvariantGraph graph = build_invariant_graph(S, N, r, grid, gopts);

  {
    ScanOptions so;
    so.x_grid = 48;
    so.p_grid = 17;
    so.p_center = Vec::Constant(1, 1.0 / 3.0);
    so.n_max = 16;
    so.refine = false;
    auto t0 = clk::now();
    ScanResult rs = transversality_scan_serial(F, so);
    double ts = ms_since(t0);
    t0 = clk::now();
    ScanResult rp = transversality_scan_parallel(F, so);
    double tp = ms_since(t0);
    report("transversality scan", ts, tp);
    std::cout << "  margins agree to " << std::fabs(rs.min_margin - rp.min_margin) << "\n";
  }

  {
    auto t0 = clk::now();
    MetricField ms_ = metric_from_graph_serial(F, graph, N, grid, 16);
    double ts = ms_since(t0);
    t0 = clk::now();
    MetricField mp = metric_from_graph_parallel(F, graph, N, grid, 16);
    double tp = ms_since(t0);
    double dev = 0.0;
    for (size_t i = 0; i < ms_.samples.size(); ++i)
      dev = std::max(dev, sup_norm(Mat(ms_.samples[i] - mp.samples[i])));
    report("monodromy metric sampling", ts, tp);
    std::cout << "  max serial/parallel deviation: " << dev << "\n";
  }

  {
    EmbeddedTorus t = EmbeddedTorus::flat(1, 32, Vec::Constant(1, 0.61), Vec::Constant(1, 0.61));
    auto t0 = clk::now();
    double a = invariance_residual_serial(F, t.beta, t, grid * 4);
    double ts = ms_since(t0);
    t0 = clk::now();
    double b = invariance_residual_parallel(F, t.beta, t, grid * 4);
    double tp = ms_since(t0);
    report("invariance residual grid", ts, tp);
    std::cout << "  residuals agree to " << std::fabs(a - b) << "\n";
  }
  return 0;
}
