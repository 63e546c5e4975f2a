#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "polyseg/io/config.hpp"

namespace polyseg::io {

/// Shortest text that reads back to the same double.
inline std::string format_double(double x) {
  char buf[32];
  for (int prec = 15; prec <= 17; ++prec) {
    std::snprintf(buf, sizeof buf, "%.*g", prec, x);
    if (std::strtod(buf, nullptr) == x) break;
  }
  return buf;
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError("cannot write '" + path.string() + "'");
  out << text;
}

/// Columns t, w_1, ..., w_l on the grid nodes.
inline std::string profiles_csv(const Grid& grid, const std::vector<Profile>& profiles) {
  std::string s = "t";
  for (std::size_t i = 0; i < profiles.size(); ++i) s += ",w_" + std::to_string(i + 1);
  s += "\n";
  for (int j = 0; j < grid.M; ++j) {
    s += format_double(grid.nodes[j]);
    for (const auto& w : profiles) s += "," + format_double(w.values[j]);
    s += "\n";
  }
  return s;
}

/// Columns r, u_1, ..., u_l along a Euclidean ray.
inline std::string ray_csv(const std::vector<double>& radii, const std::vector<std::vector<double>>& values) {
  std::string s = "r";
  for (std::size_t i = 0; i < values.size(); ++i) s += ",u_" + std::to_string(i + 1);
  s += "\n";
  for (std::size_t k = 0; k < radii.size(); ++k) {
    s += format_double(radii[k]);
    for (const auto& v : values) s += "," + format_double(v[k]);
    s += "\n";
  }
  return s;
}

struct Series {
  std::string label;
  std::vector<double> x, y;
};

/// Static line plot. Fixed-precision coordinates and no metadata, so identical data
/// gives identical bytes.
inline std::string svg_plot(const std::string& title, const std::string& xlabel, const std::string& ylabel,
                            const std::vector<Series>& series) {
  constexpr double W = 640, H = 400, L = 70, R = 130, T = 40, B = 50;
  double x0 = INFINITY, x1 = -INFINITY, y0 = INFINITY, y1 = -INFINITY;
  for (const auto& s : series) {
    for (std::size_t k = 0; k < s.x.size(); ++k) {
      if (!std::isfinite(s.x[k]) || !std::isfinite(s.y[k])) continue;
      x0 = std::min(x0, s.x[k]);
      x1 = std::max(x1, s.x[k]);
      y0 = std::min(y0, s.y[k]);
      y1 = std::max(y1, s.y[k]);
    }
  }
  if (!(x1 > x0)) x1 = x0 + 1.0;
  if (!(y1 > y0)) {
    y0 -= 0.5;
    y1 += 0.5;
  }
  auto px = [&](double x) { return L + (x - x0) / (x1 - x0) * (W - L - R); };
  auto py = [&](double y) { return H - B - (y - y0) / (y1 - y0) * (H - T - B); };
  auto num = [](double v) {
    char b[32];
    std::snprintf(b, sizeof b, "%.2f", v);
    return std::string(b);
  };
  auto tick = [](double v) {
    char b[32];
    std::snprintf(b, sizeof b, "%.4g", v);
    return std::string(b);
  };
  static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"};

  std::string s = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"640\" height=\"400\" viewBox=\"0 0 640 400\">\n";
  s += "<rect width=\"640\" height=\"400\" fill=\"white\"/>\n";
  s += "<text x=\"" + num(W / 2) + "\" y=\"24\" text-anchor=\"middle\" font-size=\"15\">" + title + "</text>\n";
  s += "<rect x=\"" + num(L) + "\" y=\"" + num(T) + "\" width=\"" + num(W - L - R) + "\" height=\"" +
       num(H - T - B) + "\" fill=\"none\" stroke=\"black\"/>\n";
  for (int k = 0; k <= 4; ++k) {
    const double xv = x0 + (x1 - x0) * k / 4.0;
    const double yv = y0 + (y1 - y0) * k / 4.0;
    s += "<text x=\"" + num(px(xv)) + "\" y=\"" + num(H - B + 16) + "\" text-anchor=\"middle\" font-size=\"11\">" +
         tick(xv) + "</text>\n";
    s += "<text x=\"" + num(L - 6) + "\" y=\"" + num(py(yv) + 4) + "\" text-anchor=\"end\" font-size=\"11\">" +
         tick(yv) + "</text>\n";
  }
  s += "<text x=\"" + num(L + (W - L - R) / 2) + "\" y=\"" + num(H - 12) + "\" text-anchor=\"middle\" font-size=\"12\">" +
       xlabel + "</text>\n";
  s += "<text x=\"16\" y=\"" + num(T + (H - T - B) / 2) + "\" text-anchor=\"middle\" font-size=\"12\" transform=\"rotate(-90 16 " +
       num(T + (H - T - B) / 2) + ")\">" + ylabel + "</text>\n";
  for (std::size_t i = 0; i < series.size(); ++i) {
    const char* c = colors[i % 6];
    s += "<polyline fill=\"none\" stroke=\"" + std::string(c) + "\" stroke-width=\"1.5\" points=\"";
    for (std::size_t k = 0; k < series[i].x.size(); ++k) {
      if (!std::isfinite(series[i].x[k]) || !std::isfinite(series[i].y[k])) continue;
      s += num(px(series[i].x[k])) + "," + num(py(series[i].y[k])) + " ";
    }
    s += "\"/>\n";
    const double ly = T + 14 + 18 * static_cast<double>(i);
    s += "<line x1=\"" + num(W - R + 10) + "\" y1=\"" + num(ly) + "\" x2=\"" + num(W - R + 30) + "\" y2=\"" + num(ly) +
         "\" stroke=\"" + c + "\" stroke-width=\"2\"/>\n";
    s += "<text x=\"" + num(W - R + 36) + "\" y=\"" + num(ly + 4) + "\" font-size=\"11\">" + series[i].label + "</text>\n";
  }
  s += "</svg>\n";
  return s;
}

inline std::string profiles_svg(const std::string& title, const Grid& grid, const std::vector<Profile>& profiles) {
  std::vector<Series> series;
  std::vector<double> t(grid.nodes.data(), grid.nodes.data() + grid.M);
  for (std::size_t i = 0; i < profiles.size(); ++i) {
    const auto& v = profiles[i].values;
    series.push_back({"w_" + std::to_string(i + 1), t, std::vector<double>(v.data(), v.data() + v.size())});
  }
  return svg_plot(title, "t", "w(t)", series);
}

inline Json to_json(const Matrix& m) {
  Json rows = Json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    Json row = Json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(row);
  }
  return rows;
}

inline Json to_json(const EnergyReport& r) {
  return Json{{"energy", r.energy},
              {"norm_sq", r.norm_sq},
              {"nonlinear", r.nonlinear},
              {"overlap", to_json(r.overlap)},
              {"weighted_overlap", to_json(r.weighted_overlap)},
              {"nehari_residual", r.nehari_residual},
              {"gradient_norm", r.gradient_norm}};
}

inline Json to_json(const SignStats& s) {
  return Json{{"positive_fraction", s.positive_fraction},
              {"min", s.min_value},
              {"max", s.max_value},
              {"sign_changing", s.sign_changing}};
}

inline Json to_json(const OracleReport& r) {
  return Json{{"name", r.name},         {"pass", r.pass},         {"skipped", r.skipped},
              {"computed", r.computed}, {"reference", r.reference}, {"discrepancy", r.discrepancy},
              {"tolerance", r.tolerance}, {"samples", r.samples}, {"seed", r.seed},
              {"note", r.note}};
}

inline Json to_json(const Partition& p) { return Json(p.points); }

}  // namespace polyseg::io
