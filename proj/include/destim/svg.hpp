#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "destim/harness.hpp"

namespace destim {

// Minimal static SVG line charts for sweep output. Two kinds:
//   rate:  log10(mean_mse) against log10(n_ess), one series per (n, l)
//   phase: log2(mean_mse) against l, one series per (m, n)
struct SvgSeries {
  std::string label;
  std::vector<double> x, y;
};

inline std::string svg_line_chart(const std::string& title, const std::string& xlabel,
                                  const std::string& ylabel,
                                  const std::vector<SvgSeries>& series) {
  const int W = 720, Hgt = 480, ml = 70, mr = 160, mt = 40, mb = 50;
  double xmin = 1e300, xmax = -1e300, ymin = 1e300, ymax = -1e300;
  for (const auto& s : series)
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      xmin = std::min(xmin, s.x[i]);
      xmax = std::max(xmax, s.x[i]);
      ymin = std::min(ymin, s.y[i]);
      ymax = std::max(ymax, s.y[i]);
    }
  if (!(xmax >= xmin)) throw std::invalid_argument("svg_line_chart: no data");
  if (xmax == xmin) xmax = xmin + 1.0;
  if (ymax == ymin) ymax = ymin + 1.0;
  const double px = (W - ml - mr) / (xmax - xmin);
  const double py = (Hgt - mt - mb) / (ymax - ymin);
  auto X = [&](double x) { return ml + (x - xmin) * px; };
  auto Y = [&](double y) { return Hgt - mb - (y - ymin) * py; };

  static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                                 "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f"};
  std::string out;
  char buf[512];
  auto add = [&out, &buf](const char* fmt, auto... args) {
    std::snprintf(buf, sizeof(buf), fmt, args...);
    out += buf;
  };
  add("<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"%d\" height=\"%d\" "
      "font-family=\"sans-serif\" font-size=\"12\">\n",
      W, Hgt);
  add("<rect width=\"%d\" height=\"%d\" fill=\"white\"/>\n", W, Hgt);
  add("<text x=\"%d\" y=\"20\" font-size=\"15\">%s</text>\n", ml, title.c_str());

  // axes and ticks
  add("<line x1=\"%d\" y1=\"%d\" x2=\"%d\" y2=\"%d\" stroke=\"black\"/>\n", ml, Hgt - mb,
      W - mr, Hgt - mb);
  add("<line x1=\"%d\" y1=\"%d\" x2=\"%d\" y2=\"%d\" stroke=\"black\"/>\n", ml, mt, ml, Hgt - mb);
  for (int i = 0; i <= 5; ++i) {
    const double xv = xmin + (xmax - xmin) * i / 5.0;
    const double yv = ymin + (ymax - ymin) * i / 5.0;
    add("<line x1=\"%.1f\" y1=\"%d\" x2=\"%.1f\" y2=\"%d\" stroke=\"#ccc\"/>\n", X(xv), mt, X(xv),
        Hgt - mb);
    add("<text x=\"%.1f\" y=\"%d\" text-anchor=\"middle\">%.3g</text>\n", X(xv), Hgt - mb + 18, xv);
    add("<line x1=\"%d\" y1=\"%.1f\" x2=\"%d\" y2=\"%.1f\" stroke=\"#eee\"/>\n", ml, Y(yv), W - mr,
        Y(yv));
    add("<text x=\"%d\" y=\"%.1f\" text-anchor=\"end\">%.3g</text>\n", ml - 6, Y(yv) + 4, yv);
  }
  add("<text x=\"%d\" y=\"%d\" text-anchor=\"middle\">%s</text>\n", (ml + W - mr) / 2, Hgt - 10,
      xlabel.c_str());
  add("<text x=\"18\" y=\"%d\" transform=\"rotate(-90 18 %d)\" text-anchor=\"middle\">%s</text>\n",
      (mt + Hgt - mb) / 2, (mt + Hgt - mb) / 2, ylabel.c_str());

  for (std::size_t si = 0; si < series.size(); ++si) {
    const char* color = colors[si % 8];
    out += "<polyline fill=\"none\" stroke=\"";
    out += color;
    out += "\" stroke-width=\"1.5\" points=\"";
    for (std::size_t i = 0; i < series[si].x.size(); ++i)
      add("%.1f,%.1f ", X(series[si].x[i]), Y(series[si].y[i]));
    out += "\"/>\n";
    for (std::size_t i = 0; i < series[si].x.size(); ++i)
      add("<circle cx=\"%.1f\" cy=\"%.1f\" r=\"2.5\" fill=\"%s\"/>\n", X(series[si].x[i]),
          Y(series[si].y[i]), color);
    add("<text x=\"%d\" y=\"%.1f\" fill=\"%s\">%s</text>\n", W - mr + 10,
        mt + 16.0 * static_cast<double>(si + 1), color, series[si].label.c_str());
  }
  out += "</svg>\n";
  return out;
}

inline void write_rate_svg(const std::vector<RatePoint>& pts, const std::string& path) {
  std::map<std::string, SvgSeries> groups;
  for (const RatePoint& pt : pts) {
    if (!(pt.mean_mse > 0.0 && pt.n_ess > 0.0)) continue;
    char key[64];
    std::snprintf(key, sizeof(key), "n=%lld l=%d", pt.params.n, pt.params.l);
    SvgSeries& s = groups[key];
    s.label = key;
    s.x.push_back(std::log10(pt.n_ess));
    s.y.push_back(std::log10(pt.mean_mse));
  }
  std::vector<SvgSeries> series;
  for (auto& [k, s] : groups) series.push_back(std::move(s));
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path);
  out << svg_line_chart("mean L2 error vs effective sample size", "log10 n_ess",
                        "log10 mean mse", series);
}

inline void write_phase_svg(const std::vector<RatePoint>& pts, const std::string& path) {
  std::map<std::string, SvgSeries> groups;
  for (const RatePoint& pt : pts) {
    if (!(pt.mean_mse > 0.0)) continue;
    char key[64];
    std::snprintf(key, sizeof(key), "m=%lld n=%lld", pt.params.m, pt.params.n);
    SvgSeries& s = groups[key];
    s.label = key;
    s.x.push_back(static_cast<double>(pt.params.l));
    s.y.push_back(std::log2(pt.mean_mse));
  }
  std::vector<SvgSeries> series;
  for (auto& [k, s] : groups) series.push_back(std::move(s));
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path);
  out << svg_line_chart("mean L2 error vs bit budget", "l (bits per terminal)",
                        "log2 mean mse", series);
}

}  // namespace destim
