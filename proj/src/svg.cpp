#include "twistkam/pipeline.hpp"

#include <fstream>
#include <iomanip>

namespace twistkam {

namespace {

struct SvgCanvas {
  std::ofstream out;
  double x_lo, x_hi, y_lo, y_hi;
  static constexpr int W = 820, H = 620, ML = 60, MR = 20, MT = 20, MB = 50;

  SvgCanvas(const std::string& path, double x0, double x1, double y0, double y1)
      : out(path), x_lo(x0), x_hi(x1), y_lo(y0), y_hi(y1) {
    if (!out) throw std::runtime_error("cannot write " + path);
    out << std::setprecision(6);
    out << "<svg xmlns='http://www.w3.org/2000/svg' width='" << W << "' height='" << H << "'>\n";
    out << "<rect width='100%' height='100%' fill='white'/>\n";
  }

  double px(double x) const { return ML + (x - x_lo) / (x_hi - x_lo) * (W - ML - MR); }
  double py(double y) const { return H - MB - (y - y_lo) / (y_hi - y_lo) * (H - MT - MB); }

  void polyline(const std::vector<std::pair<double, double>>& pts, const std::string& color,
                double width) {
    if (pts.size() < 2) return;
    out << "<polyline fill='none' stroke='" << color << "' stroke-width='" << width
        << "' points='";
    for (const auto& [x, y] : pts) out << px(x) << "," << py(y) << " ";
    out << "'/>\n";
  }

  void dot(double x, double y, const std::string& color, double r) {
    out << "<circle cx='" << px(x) << "' cy='" << py(y) << "' r='" << r << "' fill='" << color
        << "'/>\n";
  }

  void text(double x, double y, const std::string& s, const std::string& color = "black") {
    out << "<text x='" << x << "' y='" << y << "' font-size='13' font-family='sans-serif' fill='"
        << color << "'>" << s << "</text>\n";
  }

  void axes() {
    out << "<line x1='" << ML << "' y1='" << H - MB << "' x2='" << W - MR << "' y2='" << H - MB
        << "' stroke='black'/>\n";
    out << "<line x1='" << ML << "' y1='" << MT << "' x2='" << ML << "' y2='" << H - MB
        << "' stroke='black'/>\n";
    for (int i = 0; i <= 4; ++i) {
      double x = x_lo + (x_hi - x_lo) * i / 4.0;
      double y = y_lo + (y_hi - y_lo) * i / 4.0;
      char buf[32];
      std::snprintf(buf, sizeof buf, "%.3g", x);
      text(px(x) - 10, H - MB + 20, buf);
      std::snprintf(buf, sizeof buf, "%.3g", y);
      text(8, py(y) + 4, buf);
    }
    text(W / 2 - 10, H - 12, "x");
    text(14, MT + 10, "p");
  }

  void finish() { out << "</svg>\n"; }
};

}  // namespace

void write_phase_svg(const std::string& path, const TwistMap& F, const InvariantGraph& graph,
                     const std::vector<std::pair<int, std::function<CotangentPoint(const Vec&)>>>&
                         torus_embeddings,
                     int samples) {
  if (graph.dim() != 1) return;  // portrait is d = 1 only

  auto curve_of = [&](const std::function<CotangentPoint(const Vec&)>& embed) {
    std::vector<std::vector<std::pair<double, double>>> segments(1);
    double prev_x = -10.0;
    for (int i = 0; i <= samples; ++i) {
      Vec th = Vec::Constant(1, static_cast<double>(i % samples) / samples);
      CotangentPoint z = embed(th);
      double x = wrap1(z.x[0]);
      if (!segments.back().empty() && std::fabs(x - prev_x) > 0.5)
        segments.emplace_back();  // wrap seam
      segments.back().emplace_back(x, z.p[0]);
      prev_x = x;
    }
    return segments;
  };

  auto graph_embed = [&](const Vec& th) { return graph.point_at(th); };
  std::vector<std::vector<std::vector<std::pair<double, double>>>> torus_curves;
  for (const auto& [m, embed] : torus_embeddings) torus_curves.push_back(curve_of(embed));
  auto graph_curve = curve_of(graph_embed);

  double p_lo = 1e300, p_hi = -1e300;
  auto scan_range = [&](const std::vector<std::vector<std::pair<double, double>>>& segs) {
    for (const auto& s : segs)
      for (const auto& [x, p] : s) {
        p_lo = std::min(p_lo, p);
        p_hi = std::max(p_hi, p);
      }
  };
  scan_range(graph_curve);
  for (const auto& c : torus_curves) scan_range(c);
  double pad = std::max(0.05 * (p_hi - p_lo), 0.02);
  p_lo -= pad;
  p_hi += pad;

  SvgCanvas svg(path, 0.0, 1.0, p_lo, p_hi);
  svg.axes();

  // Orbit dots from seeds bracketing the graph.
  for (double x0 : {0.15, 0.45, 0.8}) {
    for (double f : {0.85, 1.15}) {
      Vec xb = Vec::Constant(1, x0);
      CotangentPoint z{xb, graph.p_at(xb) * f};
      try {
        for (int i = 0; i < 350; ++i) {
          z = F.forward(z);
          double p = z.p[0];
          if (p > p_lo && p < p_hi) svg.dot(wrap1(z.x[0]), p, "#b0b0b0", 1.0);
        }
      } catch (const std::exception&) {
        // orbit escaped the window; plot what we have
      }
    }
  }

  const char* palette[] = {"#1f77b4", "#2ca02c", "#d62728", "#9467bd", "#ff7f0e"};
  for (size_t t = 0; t < torus_curves.size(); ++t)
    for (const auto& seg : torus_curves[t])
      svg.polyline(seg, palette[t % 5], 1.2);
  for (const auto& seg : graph_curve) svg.polyline(seg, "black", 2.0);

  double ly = 36;
  svg.text(SvgCanvas::ML + 10, ly, "graph G_{N,r}");
  for (size_t t = 0; t < torus_curves.size(); ++t) {
    ly += 16;
    svg.text(SvgCanvas::ML + 10, ly, "torus m = " + std::to_string(torus_embeddings[t].first),
             palette[t % 5]);
  }
  svg.finish();
}

}  // namespace twistkam
