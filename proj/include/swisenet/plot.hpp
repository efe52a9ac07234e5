#pragma once

#include <string>
#include <vector>

namespace swisenet {

struct PlotSeries {
  std::string name;
  std::string color;  // any SVG color
  std::vector<double> x;
  std::vector<double> y;
};

/// Standalone SVG line chart with axes, ticks and a legend. The y axis
/// spans [y_min, y_max]; the x axis spans the data.
std::string line_chart_svg(const std::string& title, const std::string& x_label, const std::string& y_label,
                           const std::vector<PlotSeries>& series, double y_min = 0.0, double y_max = 1.0);

}  // namespace swisenet
