#pragma once

// Minimal SVG output for trajectories, inevitable-state heat maps and
// (d, d_dot) phase plots. Plain rect/polyline/circle/text elements only.

#include "mindsis/sis.hpp"
#include "mindsis/sim.hpp"

#include <algorithm>
#include <cstdio>
#include <istream>
#include <ostream>
#include <string>
#include <vector>

namespace mindsis {
namespace svg {

inline std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3f", v);
  return buf;
}

// Maps a world rectangle onto the plot area, y up.
struct Frame {
  double x0, x1, y0, y1;
  double width = 480, height = 480, margin = 40;

  double px(double x) const { return margin + (x - x0) / (x1 - x0) * width; }
  double py(double y) const { return margin + (y1 - y) / (y1 - y0) * height; }
  double total_width() const { return width + 2 * margin; }
  double total_height() const { return height + 2 * margin; }
};

inline Frame fit(std::vector<double> xs, std::vector<double> ys) {
  if (xs.empty()) return {0, 1, 0, 1};
  auto [xl, xh] = std::minmax_element(xs.begin(), xs.end());
  auto [yl, yh] = std::minmax_element(ys.begin(), ys.end());
  double x0 = *xl, x1 = *xh, y0 = *yl, y1 = *yh;
  const double pad = 0.05 * std::max({x1 - x0, y1 - y0, 1e-6});
  return {x0 - pad, x1 + pad, y0 - pad, y1 + pad};
}

inline void header(std::ostream& out, const Frame& f, const std::string& title) {
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << num(f.total_width() + 90) << "\" height=\""
      << num(f.total_height()) << "\">\n";
  out << "<rect x=\"0\" y=\"0\" width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  out << "<text x=\"" << num(f.margin) << "\" y=\"20\" font-size=\"14\" font-family=\"sans-serif\">" << title << "</text>\n";
  out << "<rect x=\"" << num(f.margin) << "\" y=\"" << num(f.margin) << "\" width=\"" << num(f.width) << "\" height=\""
      << num(f.height) << "\" fill=\"none\" stroke=\"#888\"/>\n";
  // axis range labels
  out << "<text x=\"" << num(f.margin) << "\" y=\"" << num(f.margin + f.height + 16) << "\" font-size=\"10\">" << num(f.x0)
      << "</text>\n";
  out << "<text x=\"" << num(f.margin + f.width - 30) << "\" y=\"" << num(f.margin + f.height + 16) << "\" font-size=\"10\">"
      << num(f.x1) << "</text>\n";
  out << "<text x=\"2\" y=\"" << num(f.margin + f.height) << "\" font-size=\"10\">" << num(f.y0) << "</text>\n";
  out << "<text x=\"2\" y=\"" << num(f.margin + 10) << "\" font-size=\"10\">" << num(f.y1) << "</text>\n";
}

inline void polyline(std::ostream& out, const Frame& f, const std::vector<double>& xs, const std::vector<double>& ys,
                     const std::string& color, const std::string& extra = "") {
  out << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\"" << extra << " points=\"";
  for (std::size_t i = 0; i < xs.size(); ++i) out << (i ? " " : "") << num(f.px(xs[i])) << ',' << num(f.py(ys[i]));
  out << "\"/>\n";
}

// Heat colour: 0 -> white, 1 -> dark red.
inline std::string heat_color(double t) {
  t = std::clamp(t, 0.0, 1.0);
  const int r = static_cast<int>(255 - t * (255 - 110));
  const int g = static_cast<int>(255 - t * 255);
  const int b = static_cast<int>(255 - t * 255);
  char buf[8];
  std::snprintf(buf, sizeof buf, "#%02x%02x%02x", r, g, b);
  return buf;
}

}  // namespace svg

struct TrajectoryRow {
  int k = 0;
  double px = 0, py = 0, ref_px = 0, ref_py = 0, phi0 = 0, phi = 0;
  bool feasible = true;
};

inline std::vector<TrajectoryRow> read_trajectory_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line.rfind("k,px,py", 0) != 0) throw ParseError("trajectory: missing header");
  std::vector<TrajectoryRow> rows;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto c = detail::split_csv(line);
    if (c.size() != 17) throw ParseError("trajectory: line " + std::to_string(lineno) + " has " + std::to_string(c.size()) + " fields");
    try {
      TrajectoryRow r;
      r.k = std::stoi(c[0]);
      r.px = std::stod(c[1]);
      r.py = std::stod(c[2]);
      r.ref_px = std::stod(c[7]);
      r.ref_py = std::stod(c[8]);
      r.phi0 = std::stod(c[11]);
      r.phi = std::stod(c[12]);
      r.feasible = c[13] == "1";
      rows.push_back(r);
    } catch (const std::exception&) {
      throw ParseError("trajectory: bad number on line " + std::to_string(lineno));
    }
  }
  if (rows.empty()) throw ParseError("trajectory: no rows");
  return rows;
}

inline void svg_trajectory(const std::vector<TrajectoryRow>& rows, std::ostream& out) {
  std::vector<double> xs, ys, rx, ry, all_x, all_y;
  for (const auto& r : rows) {
    xs.push_back(r.px);
    ys.push_back(r.py);
    rx.push_back(r.ref_px);
    ry.push_back(r.ref_py);
  }
  all_x = xs;
  all_x.insert(all_x.end(), rx.begin(), rx.end());
  all_y = ys;
  all_y.insert(all_y.end(), ry.begin(), ry.end());
  const auto f = svg::fit(all_x, all_y);
  svg::header(out, f, "trajectory (blue) and reference (grey)");
  svg::polyline(out, f, rx, ry, "#999", " stroke-dasharray=\"4 3\"");
  svg::polyline(out, f, xs, ys, "#1f5fbf");
  for (const auto& r : rows)
    if (!r.feasible || r.phi0 > 0.0)
      out << "<circle cx=\"" << svg::num(f.px(r.px)) << "\" cy=\"" << svg::num(f.py(r.py)) << "\" r=\"3\" fill=\""
          << (r.phi0 > 0.0 ? "#c00" : "#f90") << "\"/>\n";
  out << "</svg>\n";
}

inline void svg_heat_map(const HeatMap& h, std::ostream& out) {
  svg::Frame f{h.x_lo, h.x_hi, h.y_lo, h.y_hi};
  svg::header(out, f, "inevitable states per cell");
  const int top = h.max_infeasible();
  const double cw = f.width / h.nx, ch = f.height / h.ny;
  for (int j = 0; j < h.ny; ++j)
    for (int i = 0; i < h.nx; ++i) {
      const int v = h.infeasible[static_cast<std::size_t>(j * h.nx + i)];
      out << "<rect x=\"" << svg::num(f.margin + i * cw) << "\" y=\"" << svg::num(f.margin + (h.ny - 1 - j) * ch)
          << "\" width=\"" << svg::num(cw) << "\" height=\"" << svg::num(ch) << "\" fill=\""
          << svg::heat_color(top > 0 ? static_cast<double>(v) / top : 0.0) << "\"/>\n";
    }
  // legend
  const double lx = f.margin + f.width + 20;
  for (int s = 0; s <= 10; ++s)
    out << "<rect class=\"legend\" x=\"" << svg::num(lx) << "\" y=\"" << svg::num(f.margin + (10 - s) * 20) << "\" width=\"16\" height=\"20\" fill=\""
        << svg::heat_color(s / 10.0) << "\"/>\n";
  out << "<text x=\"" << svg::num(lx + 20) << "\" y=\"" << svg::num(f.margin + 10) << "\" font-size=\"10\">" << top << "</text>\n";
  out << "<text x=\"" << svg::num(lx + 20) << "\" y=\"" << svg::num(f.margin + 220) << "\" font-size=\"10\">0</text>\n";
  out << "</svg>\n";
}

// Phase samples: distance and its rate to the nearest obstacle or target.
struct PhaseRow {
  int k = 0;
  double d = 0, d_dot = 0, phi = 0;
};

inline void write_phase_csv(const Trajectory& tr, const SafetyIndexSpec& scene, std::ostream& out) {
  out << "k,d,d_dot,phi\n";
  for (const auto& st : tr.steps) {
    const auto s = scene.advanced(st.k * tr.dt);
    const auto g = geometry(st.x, s.obstacles.front(), s.velocity);
    out << st.k << ',' << detail::fmt17(g.d) << ',' << detail::fmt17(g.d_dot) << ',' << detail::fmt17(phi(s, st.x)) << '\n';
  }
}

inline std::vector<PhaseRow> read_phase_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line.rfind("k,d,d_dot", 0) != 0) throw ParseError("phase: missing header");
  std::vector<PhaseRow> rows;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto c = detail::split_csv(line);
    if (c.size() != 4) throw ParseError("phase: line " + std::to_string(lineno) + " has " + std::to_string(c.size()) + " fields");
    try {
      rows.push_back({std::stoi(c[0]), std::stod(c[1]), std::stod(c[2]), std::stod(c[3])});
    } catch (const std::exception&) {
      throw ParseError("phase: bad number on line " + std::to_string(lineno));
    }
  }
  if (rows.empty()) throw ParseError("phase: no rows");
  return rows;
}

inline void svg_phase(const std::vector<PhaseRow>& rows, std::ostream& out) {
  std::vector<double> ds, rs;
  for (const auto& r : rows) {
    ds.push_back(r.d);
    rs.push_back(r.d_dot);
  }
  const auto f = svg::fit(ds, rs);
  svg::header(out, f, "phase plane: d (x) vs d_dot (y); red where phi > 0");
  svg::polyline(out, f, ds, rs, "#1f5fbf");
  for (const auto& r : rows)
    if (r.phi > 0.0)
      out << "<circle cx=\"" << svg::num(f.px(r.d)) << "\" cy=\"" << svg::num(f.py(r.d_dot)) << "\" r=\"2.5\" fill=\"#c00\"/>\n";
  out << "</svg>\n";
}

}  // namespace mindsis
