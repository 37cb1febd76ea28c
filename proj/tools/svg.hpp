#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <string>
#include <vector>

#include "rst/errors.hpp"

// Minimal static SVG line charts for band and study output.
namespace rstcli {

struct Series {
  std::vector<double> x, y;
  std::string color = "#1f77b4";
  double width = 1.5;
  bool dashed = false;
};

inline void write_svg_chart(const std::string& path, const std::vector<Series>& series,
                            const std::string& title) {
  const int w = 720, h = 480, margin = 50;
  double xmin = 1e300, xmax = -1e300, ymin = 1e300, ymax = -1e300;
  for (const auto& s : series) {
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) continue;
      xmin = std::min(xmin, s.x[i]);
      xmax = std::max(xmax, s.x[i]);
      ymin = std::min(ymin, s.y[i]);
      ymax = std::max(ymax, s.y[i]);
    }
  }
  if (!(xmin < xmax)) {
    xmin -= 0.5;
    xmax += 0.5;
  }
  if (!(ymin < ymax)) {
    ymin -= 0.5;
    ymax += 0.5;
  }
  const double ypad = 0.05 * (ymax - ymin);
  ymin -= ypad;
  ymax += ypad;
  auto px = [&](double x) { return margin + (x - xmin) / (xmax - xmin) * (w - 2 * margin); };
  auto py = [&](double y) { return h - margin - (y - ymin) / (ymax - ymin) * (h - 2 * margin); };

  std::ofstream out(path);
  if (!out) throw rst::InvalidArgument("cannot open plot file '" + path + "'");
  out << "<svg xmlns='http://www.w3.org/2000/svg' width='" << w << "' height='" << h
      << "' viewBox='0 0 " << w << " " << h << "'>\n";
  out << "<rect width='100%' height='100%' fill='white'/>\n";
  out << "<text x='" << w / 2 << "' y='24' text-anchor='middle' font-family='sans-serif' "
         "font-size='15'>"
      << title << "</text>\n";
  // axes
  out << "<line x1='" << margin << "' y1='" << h - margin << "' x2='" << w - margin
      << "' y2='" << h - margin << "' stroke='black'/>\n";
  out << "<line x1='" << margin << "' y1='" << margin << "' x2='" << margin << "' y2='"
      << h - margin << "' stroke='black'/>\n";
  for (int k = 0; k <= 4; ++k) {
    const double xv = xmin + (xmax - xmin) * k / 4;
    const double yv = ymin + (ymax - ymin) * k / 4;
    out << "<text x='" << px(xv) << "' y='" << h - margin + 18
        << "' text-anchor='middle' font-family='sans-serif' font-size='11'>" << xv
        << "</text>\n";
    out << "<text x='" << margin - 6 << "' y='" << py(yv) + 4
        << "' text-anchor='end' font-family='sans-serif' font-size='11'>" << yv
        << "</text>\n";
  }
  for (const auto& s : series) {
    out << "<polyline fill='none' stroke='" << s.color << "' stroke-width='" << s.width
        << "'";
    if (s.dashed) out << " stroke-dasharray='6,4'";
    out << " points='";
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (!std::isfinite(s.y[i])) continue;
      out << px(s.x[i]) << "," << py(s.y[i]) << " ";
    }
    out << "'/>\n";
  }
  out << "</svg>\n";
}

}  // namespace rstcli
