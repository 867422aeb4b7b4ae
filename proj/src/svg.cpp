#include "fednmap/svg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace fednmap {

namespace {

const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c",
                          "#9467bd", "#ff7f0e", "#8c564b"};

std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return buf;
}

struct Frame {
  double x0, y0, w, h;       // outer panel box
  double left, right, top, bottom;  // margins inside the box
};

// Renders one chart into the given frame of an existing <svg> document.
void render_panel(std::ostringstream& svg, const Frame& f,
                  const std::string& title, const std::string& x_label,
                  const std::string& y_label,
                  const std::vector<SvgSeries>& series, bool log_y,
                  bool legend) {
  double xmin = std::numeric_limits<double>::infinity(), xmax = -xmin;
  double ymin = xmin, ymax = -xmin;
  for (const auto& s : series) {
    for (std::size_t k = 0; k < s.xs.size(); ++k) {
      double y = s.ys[k];
      if (log_y && !(y > 0)) continue;
      xmin = std::min(xmin, s.xs[k]);
      xmax = std::max(xmax, s.xs[k]);
      ymin = std::min(ymin, y);
      ymax = std::max(ymax, y);
    }
  }
  if (!(xmin <= xmax)) {  // nothing plottable
    xmin = 0;
    xmax = 1;
    ymin = log_y ? 0.1 : 0;
    ymax = 1;
  }
  if (xmin == xmax) xmax = xmin + 1;
  if (ymin == ymax) {
    ymax = log_y ? ymin * 10 : ymin + 1;
    if (log_y && ymin == 0) ymin = 0.1;
  }

  const double plot_l = f.x0 + f.left, plot_r = f.x0 + f.w - f.right;
  const double plot_t = f.y0 + f.top, plot_b = f.y0 + f.h - f.bottom;
  double ly_min = log_y ? std::log10(ymin) : ymin;
  double ly_max = log_y ? std::log10(ymax) : ymax;
  auto px = [&](double x) {
    return plot_l + (x - xmin) / (xmax - xmin) * (plot_r - plot_l);
  };
  auto py = [&](double y) {
    double v = log_y ? std::log10(y) : y;
    return plot_b - (v - ly_min) / (ly_max - ly_min) * (plot_b - plot_t);
  };

  svg << "<text x=\"" << num(f.x0 + f.w / 2) << "\" y=\"" << num(f.y0 + 18)
      << "\" text-anchor=\"middle\" font-family=\"sans-serif\" "
         "font-size=\"13\">"
      << title << "</text>\n";
  svg << "<line x1=\"" << num(plot_l) << "\" y1=\"" << num(plot_t)
      << "\" x2=\"" << num(plot_l) << "\" y2=\"" << num(plot_b)
      << "\" stroke=\"black\" stroke-width=\"1\"/>\n";
  svg << "<line x1=\"" << num(plot_l) << "\" y1=\"" << num(plot_b)
      << "\" x2=\"" << num(plot_r) << "\" y2=\"" << num(plot_b)
      << "\" stroke=\"black\" stroke-width=\"1\"/>\n";

  for (int k = 0; k <= 4; ++k) {
    double x = xmin + (xmax - xmin) * k / 4.0;
    double sx = px(x);
    svg << "<line x1=\"" << num(sx) << "\" y1=\"" << num(plot_b) << "\" x2=\""
        << num(sx) << "\" y2=\"" << num(plot_b + 5)
        << "\" stroke=\"black\"/>\n";
    svg << "<text x=\"" << num(sx) << "\" y=\"" << num(plot_b + 18)
        << "\" text-anchor=\"middle\" font-family=\"sans-serif\" "
           "font-size=\"10\">"
        << num(x) << "</text>\n";
  }
  if (log_y) {
    int d0 = static_cast<int>(std::ceil(ly_min - 1e-9));
    int d1 = static_cast<int>(std::floor(ly_max + 1e-9));
    for (int d = d0; d <= d1; ++d) {
      double sy = py(std::pow(10.0, d));
      svg << "<line x1=\"" << num(plot_l - 5) << "\" y1=\"" << num(sy)
          << "\" x2=\"" << num(plot_r) << "\" y2=\"" << num(sy)
          << "\" stroke=\"#dddddd\"/>\n";
      svg << "<text x=\"" << num(plot_l - 8) << "\" y=\"" << num(sy + 4)
          << "\" text-anchor=\"end\" font-family=\"sans-serif\" "
             "font-size=\"10\">1e"
          << d << "</text>\n";
    }
  } else {
    for (int k = 0; k <= 4; ++k) {
      double y = ymin + (ymax - ymin) * k / 4.0;
      double sy = py(y);
      svg << "<line x1=\"" << num(plot_l - 5) << "\" y1=\"" << num(sy)
          << "\" x2=\"" << num(plot_r) << "\" y2=\"" << num(sy)
          << "\" stroke=\"#dddddd\"/>\n";
      svg << "<text x=\"" << num(plot_l - 8) << "\" y=\"" << num(sy + 4)
          << "\" text-anchor=\"end\" font-family=\"sans-serif\" "
             "font-size=\"10\">"
          << num(y) << "</text>\n";
    }
  }

  svg << "<text x=\"" << num((plot_l + plot_r) / 2) << "\" y=\""
      << num(f.y0 + f.h - 10)
      << "\" text-anchor=\"middle\" font-family=\"sans-serif\" "
         "font-size=\"11\">"
      << x_label << "</text>\n";
  svg << "<text x=\"" << num(f.x0 + 16) << "\" y=\""
      << num((plot_t + plot_b) / 2)
      << "\" text-anchor=\"middle\" font-family=\"sans-serif\" "
         "font-size=\"11\" transform=\"rotate(-90 "
      << num(f.x0 + 16) << " " << num((plot_t + plot_b) / 2) << ")\">"
      << y_label << "</text>\n";

  for (std::size_t s = 0; s < series.size(); ++s) {
    const char* color = kPalette[s % (sizeof(kPalette) / sizeof(*kPalette))];
    std::ostringstream pts;
    for (std::size_t k = 0; k < series[s].xs.size(); ++k) {
      double y = series[s].ys[k];
      if (log_y && !(y > 0)) continue;
      pts << num(px(series[s].xs[k])) << ',' << num(py(y)) << ' ';
    }
    svg << "<polyline fill=\"none\" stroke=\"" << color
        << "\" stroke-width=\"1.5\" points=\"" << pts.str() << "\"/>\n";
    if (legend) {
      double ly = plot_t + 8 + static_cast<double>(s) * 16;
      svg << "<line x1=\"" << num(plot_r - 140) << "\" y1=\"" << num(ly)
          << "\" x2=\"" << num(plot_r - 118) << "\" y2=\"" << num(ly)
          << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n";
      svg << "<text x=\"" << num(plot_r - 112) << "\" y=\"" << num(ly + 4)
          << "\" font-family=\"sans-serif\" font-size=\"10\">"
          << series[s].label << "</text>\n";
    }
  }
}

std::string document(double width, double height, const std::string& body) {
  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << num(width)
      << "\" height=\"" << num(height) << "\" viewBox=\"0 0 " << num(width)
      << " " << num(height) << "\">\n";
  svg << "<rect width=\"" << num(width) << "\" height=\"" << num(height)
      << "\" fill=\"white\"/>\n";
  svg << body << "</svg>\n";
  return svg.str();
}

}  // namespace

std::string line_chart_svg(const std::string& title,
                           const std::string& x_label,
                           const std::string& y_label,
                           const std::vector<SvgSeries>& series, bool log_y) {
  std::ostringstream body;
  Frame f{0, 0, 720, 480, 80, 30, 42, 56};
  render_panel(body, f, title, x_label, y_label, series, log_y, true);
  return document(720, 480, body.str());
}

std::string small_multiples_svg(const std::vector<SvgPanel>& panels,
                                const std::string& x_label,
                                const std::string& y_label, bool log_y) {
  const double pw = 340, ph = 300;
  std::ostringstream body;
  for (std::size_t k = 0; k < panels.size(); ++k) {
    Frame f{static_cast<double>(k) * pw, 0, pw, ph, 64, 18, 30, 46};
    render_panel(body, f, panels[k].title, x_label, y_label,
                 panels[k].series, log_y, true);
  }
  double width = pw * std::max<std::size_t>(panels.size(), 1);
  return document(width, ph, body.str());
}

void write_svg_file(const std::string& path, const std::string& svg) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << svg;
}

}  // namespace fednmap
