#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace darkhash {

struct Series {
  std::string name;
  std::vector<double> x;
  std::vector<double> y;
};

struct PlotSpec {
  std::string title;
  std::string x_label;
  std::string y_label;
  // Axis ranges; equal bounds mean "fit to the data".
  double x_min = 0.0, x_max = 0.0;
  double y_min = 0.0, y_max = 0.0;
  // Categorical x axis: points are spaced evenly and labelled with these.
  std::vector<std::string> x_ticks;
};

// Polyline chart with markers and a legend.
std::string line_plot_svg(const PlotSpec& spec, const std::vector<Series>& series);

// Overlaid histograms sharing one set of bins.
std::string histogram_svg(const PlotSpec& spec, const std::vector<Series>& samples, int bins);

void write_text(const std::filesystem::path& path, const std::string& text);

}  // namespace darkhash
