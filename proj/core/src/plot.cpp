#include "vat/plot.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace vat::plot {

namespace {

constexpr const char* kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e"};

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(4);
  os << v;
  return os.str();
}

}  // namespace

void write_svg(const std::filesystem::path& path, const std::string& title,
               const std::string& x_label, const std::string& y_label,
               const std::vector<Series>& series, int width, int height) {
  if (series.empty()) {
    throw std::invalid_argument("write_svg: no series");
  }
  double x_min = std::numeric_limits<double>::infinity(), x_max = -x_min;
  double y_min = x_min, y_max = -x_min;
  for (const auto& s : series) {
    if (s.xs.size() != s.ys.size() || s.xs.empty()) {
      throw std::invalid_argument("write_svg: series '" + s.name + "' malformed");
    }
    for (double v : s.xs) { x_min = std::min(x_min, v); x_max = std::max(x_max, v); }
    for (double v : s.ys) { y_min = std::min(y_min, v); y_max = std::max(y_max, v); }
  }
  // Pad degenerate ranges so a flat series still renders mid-plot.
  if (x_max - x_min < 1e-12) { x_min -= 0.5; x_max += 0.5; }
  if (y_max - y_min < 1e-12) { y_min -= 0.5; y_max += 0.5; }
  const double mx = (x_max - x_min) * 0.06, my = (y_max - y_min) * 0.08;
  x_min -= mx; x_max += mx; y_min -= my; y_max += my;

  const double left = 64, right = 16, top = 36, bottom = 48;
  const double pw = width - left - right, ph = height - top - bottom;
  auto px = [&](double x) { return left + (x - x_min) / (x_max - x_min) * pw; };
  auto py = [&](double y) { return top + (y_max - y) / (y_max - y_min) * ph; };

  std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) {
    throw std::runtime_error("write_svg: cannot open " + path.string());
  }
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\""
      << height << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  out << "<text x=\"" << width / 2 << "\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">"
      << title << "</text>\n";

  // Axes with four ticks per side.
  out << "<line x1=\"" << left << "\" y1=\"" << top + ph << "\" x2=\"" << left + pw << "\" y2=\""
      << top + ph << "\" stroke=\"black\"/>\n";
  out << "<line x1=\"" << left << "\" y1=\"" << top << "\" x2=\"" << left << "\" y2=\""
      << top + ph << "\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 4; ++i) {
    const double xv = x_min + (x_max - x_min) * i / 4.0;
    const double yv = y_min + (y_max - y_min) * i / 4.0;
    out << "<line x1=\"" << px(xv) << "\" y1=\"" << top + ph << "\" x2=\"" << px(xv) << "\" y2=\""
        << top + ph + 4 << "\" stroke=\"black\"/>\n";
    out << "<text x=\"" << px(xv) << "\" y=\"" << top + ph + 18
        << "\" text-anchor=\"middle\">" << fmt(xv) << "</text>\n";
    out << "<line x1=\"" << left - 4 << "\" y1=\"" << py(yv) << "\" x2=\"" << left << "\" y2=\""
        << py(yv) << "\" stroke=\"black\"/>\n";
    out << "<text x=\"" << left - 8 << "\" y=\"" << py(yv) + 4
        << "\" text-anchor=\"end\">" << fmt(yv) << "</text>\n";
  }
  out << "<text x=\"" << left + pw / 2 << "\" y=\"" << height - 10
      << "\" text-anchor=\"middle\">" << x_label << "</text>\n";
  out << "<text x=\"14\" y=\"" << top + ph / 2 << "\" text-anchor=\"middle\" transform=\"rotate(-90 14 "
      << top + ph / 2 << ")\">" << y_label << "</text>\n";

  for (size_t si = 0; si < series.size(); ++si) {
    const auto& s = series[si];
    const char* color = kColors[si % (sizeof(kColors) / sizeof(kColors[0]))];
    out << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
    for (size_t i = 0; i < s.xs.size(); ++i) {
      out << px(s.xs[i]) << ',' << py(s.ys[i]) << ' ';
    }
    out << "\"/>\n";
    for (size_t i = 0; i < s.xs.size(); ++i) {
      out << "<circle cx=\"" << px(s.xs[i]) << "\" cy=\"" << py(s.ys[i])
          << "\" r=\"3\" fill=\"" << color << "\"/>\n";
    }
    out << "<text x=\"" << left + pw - 6 << "\" y=\"" << top + 16 + 16 * si
        << "\" text-anchor=\"end\" fill=\"" << color << "\">" << s.name << "</text>\n";
  }
  out << "</svg>\n";
}

}  // namespace vat::plot
