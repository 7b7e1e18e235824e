// Copyright NAPReS contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <napres/error.hpp>
#include <napres/reassign.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <ostream>
#include <string>

namespace napres {

struct PlotOptions {
  int width = 900;
  int height = 540;
  double floor_db = -60.0;  ///< points at or below this level are drawn palest
  double radius = 1.2;
  std::string title = "NAPReS";
};

/// Time-frequency scatter of a point cloud as SVG. Louder points are darker.
inline void write_scatter_svg(const ReassignedPointCloud& cloud, std::ostream& out,
                              const PlotOptions& opt = {}) {
  if (opt.width < 200 || opt.height < 150) throw Error("plot is too small");
  const double left = 70.0, right = 20.0, top = 36.0, bottom = 50.0;
  const double pw = opt.width - left - right;
  const double ph = opt.height - top - bottom;

  double t0 = 0.0, t1 = cloud.source_duration > 0.0 ? cloud.source_duration : 1.0;
  if (!cloud.points.empty()) {
    auto [lo, hi] = std::minmax_element(cloud.points.begin(), cloud.points.end(),
                                        [](const auto& a, const auto& b) { return a.t_sec < b.t_sec; });
    t0 = lo->t_sec;
    t1 = hi->t_sec > lo->t_sec ? hi->t_sec : lo->t_sec + 1e-3;
  }
  const double f0 = cloud.prune.f_min, f1 = cloud.prune.f_max;
  auto sx = [&](double t) { return left + (t - t0) / (t1 - t0) * pw; };
  auto sy = [&](double f) { return top + (1.0 - (f - f0) / (f1 - f0)) * ph; };

  char buf[160];
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << opt.width << "\" height=\""
      << opt.height << "\" viewBox=\"0 0 " << opt.width << ' ' << opt.height << "\">\n"
      << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
      << "<text x=\"" << opt.width / 2 << "\" y=\"22\" text-anchor=\"middle\" "
      << "font-family=\"sans-serif\" font-size=\"15\">" << opt.title << " (J=" << cloud.averaged_count
      << ", " << cloud.points.size() << " points)</text>\n";
  std::snprintf(buf, sizeof buf,
                "<rect x=\"%.1f\" y=\"%.1f\" width=\"%.1f\" height=\"%.1f\" fill=\"none\" stroke=\"black\"/>\n",
                left, top, pw, ph);
  out << buf;

  for (int i = 0; i <= 5; ++i) {
    const double f = f0 + (f1 - f0) * i / 5.0;
    std::snprintf(buf, sizeof buf,
                  "<text x=\"%.1f\" y=\"%.1f\" text-anchor=\"end\" font-family=\"sans-serif\" "
                  "font-size=\"11\">%.0f</text>\n",
                  left - 6.0, sy(f) + 4.0, f);
    out << buf;
    const double t = t0 + (t1 - t0) * i / 5.0;
    std::snprintf(buf, sizeof buf,
                  "<text x=\"%.1f\" y=\"%.1f\" text-anchor=\"middle\" font-family=\"sans-serif\" "
                  "font-size=\"11\">%.4f</text>\n",
                  sx(t), top + ph + 16.0, t);
    out << buf;
  }
  out << "<text x=\"" << left + pw / 2 << "\" y=\"" << opt.height - 10
      << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">time (s)</text>\n"
      << "<text x=\"16\" y=\"" << top + ph / 2 << "\" transform=\"rotate(-90 16 " << top + ph / 2
      << ")\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">frequency (Hz)</text>\n";

  out << "<g fill=\"black\">\n";
  for (const ReassignedPoint& p : cloud.points) {
    const double level = std::clamp(1.0 - p.mag_db / opt.floor_db, 0.0, 1.0);
    const double opacity = 0.05 + 0.95 * level;
    std::snprintf(buf, sizeof buf, "<circle cx=\"%.2f\" cy=\"%.2f\" r=\"%.2f\" fill-opacity=\"%.3f\"/>\n",
                  sx(p.t_sec), sy(p.f_hz), opt.radius, opacity);
    out << buf;
  }
  out << "</g>\n</svg>\n";
}

inline void write_scatter_svg(const ReassignedPointCloud& cloud, const std::string& path,
                              const PlotOptions& opt = {}) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error("cannot open " + path + " for writing");
  write_scatter_svg(cloud, f, opt);
  if (!f) throw Error("failed writing " + path);
}

}  // namespace napres
