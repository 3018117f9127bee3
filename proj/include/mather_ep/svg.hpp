#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <optional>
#include <string>
#include <tuple>
#include <vector>

#include "mather_ep/core.hpp"
#include "mather_ep/torus_grid.hpp"

namespace mep {

struct PlotSeries {
  std::vector<double> x;
  std::vector<double> y;
  std::string label;
};

namespace detail {

constexpr double kCanvasW = 640.0;
constexpr double kCanvasH = 420.0;
constexpr double kLeft = 80.0;
constexpr double kRight = 20.0;
constexpr double kTop = 40.0;
constexpr double kBottom = 60.0;

inline std::string num(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", x);
  return buf;
}

inline std::string px(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", x);
  return buf;
}

inline std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    if (c == '<') out += "&lt;";
    else if (c == '>') out += "&gt;";
    else if (c == '&') out += "&amp;";
    else out += c;
  }
  return out;
}

inline std::pair<double, double> padded_range(double lo, double hi) {
  if (!(hi > lo)) {
    const double pad = std::max(1e-12, std::abs(lo) * 0.05 + 1e-3);
    return {lo - pad, hi + pad};
  }
  const double pad = 0.05 * (hi - lo);
  return {lo - pad, hi + pad};
}

inline std::string header(const std::string& title) {
  std::string s = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + num(kCanvasW) + "\" height=\"" +
                  num(kCanvasH) + "\" viewBox=\"0 0 " + num(kCanvasW) + " " + num(kCanvasH) + "\">\n";
  s += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  s += "<text x=\"" + px(kCanvasW / 2) + "\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"15\">" +
       escape(title) + "</text>\n";
  return s;
}

}  // namespace detail

/// Line plot with optional horizontal reference rule; fixed canvas, no
/// timestamps, so identical inputs give identical bytes.
inline std::string svg_line_plot(const std::string& title, const std::string& xlabel, const std::string& ylabel,
                                 const std::vector<PlotSeries>& series, std::optional<double> rule = {},
                                 bool log_x = false) {
  using namespace detail;
  auto tx = [&](double x) { return log_x ? std::log10(x) : x; };
  double xlo = kInf, xhi = -kInf, ylo = kInf, yhi = -kInf;
  for (const auto& s : series)
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (!std::isfinite(s.y[i]) || (log_x && !(s.x[i] > 0.0))) continue;
      xlo = std::min(xlo, tx(s.x[i]));
      xhi = std::max(xhi, tx(s.x[i]));
      ylo = std::min(ylo, s.y[i]);
      yhi = std::max(yhi, s.y[i]);
    }
  if (rule && std::isfinite(*rule)) {
    ylo = std::min(ylo, *rule);
    yhi = std::max(yhi, *rule);
  }
  if (!std::isfinite(xlo)) xlo = 0.0, xhi = 1.0;
  if (!std::isfinite(ylo)) ylo = 0.0, yhi = 1.0;
  std::tie(xlo, xhi) = padded_range(xlo, xhi);
  std::tie(ylo, yhi) = padded_range(ylo, yhi);
  const double w = kCanvasW - kLeft - kRight;
  const double h = kCanvasH - kTop - kBottom;
  auto sx = [&](double x) { return kLeft + (tx(x) - xlo) / (xhi - xlo) * w; };
  auto sy = [&](double y) { return kTop + (yhi - y) / (yhi - ylo) * h; };

  std::string s = header(title);
  s += "<rect x=\"" + px(kLeft) + "\" y=\"" + px(kTop) + "\" width=\"" + px(w) + "\" height=\"" + px(h) +
       "\" fill=\"none\" stroke=\"black\"/>\n";
  const char* font = "font-family=\"sans-serif\" font-size=\"11\"";
  s += "<text x=\"" + px(kLeft) + "\" y=\"" + px(kTop + h + 16) + "\" " + font + ">" +
       num(log_x ? std::pow(10.0, xlo) : xlo) + "</text>\n";
  s += "<text x=\"" + px(kLeft + w) + "\" y=\"" + px(kTop + h + 16) + "\" text-anchor=\"end\" " + font + ">" +
       num(log_x ? std::pow(10.0, xhi) : xhi) + "</text>\n";
  s += "<text x=\"" + px(kLeft - 6) + "\" y=\"" + px(kTop + h) + "\" text-anchor=\"end\" " + font + ">" + num(ylo) +
       "</text>\n";
  s += "<text x=\"" + px(kLeft - 6) + "\" y=\"" + px(kTop + 10) + "\" text-anchor=\"end\" " + font + ">" + num(yhi) +
       "</text>\n";
  s += "<text x=\"" + px(kLeft + w / 2) + "\" y=\"" + px(kCanvasH - 16) + "\" text-anchor=\"middle\" " + font + ">" +
       escape(xlabel) + (log_x ? " (log scale)" : "") + "</text>\n";
  s += "<text x=\"16\" y=\"" + px(kTop + h / 2) + "\" text-anchor=\"middle\" transform=\"rotate(-90 16 " +
       px(kTop + h / 2) + ")\" " + font + ">" + escape(ylabel) + "</text>\n";
  if (rule && std::isfinite(*rule))
    s += "<line class=\"bound\" x1=\"" + px(kLeft) + "\" y1=\"" + px(sy(*rule)) + "\" x2=\"" + px(kLeft + w) +
         "\" y2=\"" + px(sy(*rule)) + "\" stroke=\"firebrick\" stroke-dasharray=\"6 4\"/>\n";
  static const char* colors[] = {"steelblue", "darkorange", "seagreen", "purple"};
  for (std::size_t k = 0; k < series.size(); ++k) {
    const auto& ser = series[k];
    std::string pts;
    for (std::size_t i = 0; i < ser.x.size(); ++i) {
      if (!std::isfinite(ser.y[i]) || (log_x && !(ser.x[i] > 0.0))) continue;
      if (!pts.empty()) pts += " ";
      pts += px(sx(ser.x[i])) + "," + px(sy(ser.y[i]));
    }
    s += "<polyline fill=\"none\" stroke=\"" + std::string(colors[k % 4]) + "\" stroke-width=\"1.5\" points=\"" + pts +
         "\"/>\n";
    if (!ser.label.empty())
      s += "<text x=\"" + px(kLeft + w - 6) + "\" y=\"" + px(kTop + 14 + 14 * static_cast<double>(k)) +
           "\" text-anchor=\"end\" fill=\"" + colors[k % 4] + "\" " + font + ">" + escape(ser.label) + "</text>\n";
  }
  s += "</svg>\n";
  return s;
}

/// Raster of an M x M field, grey levels from min (dark) to max (light).
inline std::string svg_heatmap(const std::string& title, int m, const std::vector<double>& values) {
  using namespace detail;
  double lo = kInf, hi = -kInf;
  for (double v : values)
    if (std::isfinite(v)) lo = std::min(lo, v), hi = std::max(hi, v);
  if (!(hi > lo)) hi = lo + 1.0;
  const double size = std::min(kCanvasW - kLeft - kRight, kCanvasH - kTop - kBottom);
  const double cell = size / m;
  std::string s = header(title);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < m; ++j) {
      const double v = values[static_cast<std::size_t>(i) * m + j];
      const int g = std::isfinite(v) ? static_cast<int>(std::lround(255.0 * (v - lo) / (hi - lo))) : 0;
      // x_0 runs left to right, x_1 bottom to top
      s += "<rect x=\"" + px(kLeft + i * cell) + "\" y=\"" + px(kTop + (m - 1 - j) * cell) + "\" width=\"" +
           px(cell) + "\" height=\"" + px(cell) + "\" fill=\"rgb(" + std::to_string(g) + "," + std::to_string(g) +
           "," + std::to_string(g) + ")\"/>\n";
    }
  s += "<text x=\"" + px(kLeft + size + 8) + "\" y=\"" + px(kTop + 10) + "\" font-family=\"sans-serif\" font-size=\"11\">max " +
       num(hi) + "</text>\n";
  s += "<text x=\"" + px(kLeft + size + 8) + "\" y=\"" + px(kTop + size) +
       "\" font-family=\"sans-serif\" font-size=\"11\">min " + num(lo) + "</text>\n";
  s += "</svg>\n";
  return s;
}

/// N = 1: polyline of the M node values; N = 2: raster.
template <int N>
std::string svg_field(const std::string& title, const ScalarField<N>& f) {
  if constexpr (N == 1) {
    PlotSeries s;
    for (std::size_t i = 0; i < f.size(); ++i) {
      s.x.push_back(f.grid().node(i)[0]);
      s.y.push_back(f[i]);
    }
    return svg_line_plot(title, "x", "value", {s});
  } else {
    static_assert(N == 2, "field plots exist for N = 1 and N = 2");
    return svg_heatmap(title, f.grid().points_per_axis(), f.values());
  }
}

}  // namespace mep
