#pragma once

#include <string>
#include <vector>

namespace fednmap {

struct SvgSeries {
  std::string label;
  std::vector<double> xs;
  std::vector<double> ys;
};

/// Deterministic byte-for-byte line chart (fixed layout, fixed number
/// formatting). With log_y, nonpositive samples are dropped from the plot.
std::string line_chart_svg(const std::string& title,
                           const std::string& x_label,
                           const std::string& y_label,
                           const std::vector<SvgSeries>& series, bool log_y);

struct SvgPanel {
  std::string title;
  std::vector<SvgSeries> series;
};

/// One mini chart per panel, laid out in a row; same determinism contract.
std::string small_multiples_svg(const std::vector<SvgPanel>& panels,
                                const std::string& x_label,
                                const std::string& y_label, bool log_y);

void write_svg_file(const std::string& path, const std::string& svg);

}  // namespace fednmap
