#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace vat::plot {

struct Series {
  std::string name;
  std::vector<double> xs;
  std::vector<double> ys;
};

// Minimal self-contained SVG scatter/line plot: axes, ticks, one polyline
// with markers per series. Enough for the sweep figures; not a charting
// library.
void write_svg(const std::filesystem::path& path, const std::string& title,
               const std::string& x_label, const std::string& y_label,
               const std::vector<Series>& series, int width = 640, int height = 440);

}  // namespace vat::plot
