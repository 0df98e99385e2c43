#include "darkhash/plots.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <sstream>

#include "darkhash/errors.hpp"

namespace darkhash {

namespace {

constexpr double kWidth = 640, kHeight = 420;
constexpr double kLeft = 64, kRight = 150, kTop = 40, kBottom = 56;
constexpr std::array<const char*, 6> kPalette{"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"};

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string num(double v) {
  std::ostringstream s;
  s.precision(4);
  s << v;
  return s.str();
}

struct Frame {
  double x0, x1, y0, y1;
  double px(double x) const { return kLeft + (x - x0) / (x1 - x0) * (kWidth - kLeft - kRight); }
  double py(double y) const { return kHeight - kBottom - (y - y0) / (y1 - y0) * (kHeight - kTop - kBottom); }
};

void widen(double& lo, double& hi) {
  if (hi - lo < 1e-12) {
    lo -= 0.5;
    hi += 0.5;
  }
}

void axes(std::ostringstream& svg, const PlotSpec& spec, const Frame& f, bool numeric_x) {
  svg << "<text x=\"" << kWidth / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">" << escape(spec.title)
      << "</text>\n";
  svg << "<rect x=\"" << kLeft << "\" y=\"" << kTop << "\" width=\"" << kWidth - kLeft - kRight << "\" height=\""
      << kHeight - kTop - kBottom << "\" fill=\"none\" stroke=\"#333\"/>\n";
  for (int i = 0; i <= 5; ++i) {
    const double yv = f.y0 + (f.y1 - f.y0) * i / 5.0;
    svg << "<text x=\"" << kLeft - 6 << "\" y=\"" << f.py(yv) + 4 << "\" text-anchor=\"end\" font-size=\"11\">"
        << num(yv) << "</text>\n";
    if (numeric_x) {
      const double xv = f.x0 + (f.x1 - f.x0) * i / 5.0;
      svg << "<text x=\"" << f.px(xv) << "\" y=\"" << kHeight - kBottom + 16
          << "\" text-anchor=\"middle\" font-size=\"11\">" << num(xv) << "</text>\n";
    }
  }
  svg << "<text x=\"" << (kLeft + kWidth - kRight) / 2 << "\" y=\"" << kHeight - 14
      << "\" text-anchor=\"middle\" font-size=\"13\">" << escape(spec.x_label) << "</text>\n";
  svg << "<text x=\"16\" y=\"" << (kTop + kHeight - kBottom) / 2 << "\" text-anchor=\"middle\" font-size=\"13\" "
      << "transform=\"rotate(-90 16 " << (kTop + kHeight - kBottom) / 2 << ")\">" << escape(spec.y_label)
      << "</text>\n";
}

void legend(std::ostringstream& svg, const std::vector<Series>& series) {
  for (std::size_t i = 0; i < series.size(); ++i) {
    const double y = kTop + 14 + 18.0 * static_cast<double>(i);
    const double x = kWidth - kRight + 12;
    svg << "<rect x=\"" << x << "\" y=\"" << y - 9 << "\" width=\"12\" height=\"10\" fill=\""
        << kPalette[i % kPalette.size()] << "\"/>\n";
    svg << "<text x=\"" << x + 18 << "\" y=\"" << y << "\" font-size=\"12\">" << escape(series[i].name)
        << "</text>\n";
  }
}

std::string open_svg() {
  std::ostringstream s;
  s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\"" << kHeight
    << "\" font-family=\"sans-serif\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  return s.str();
}

}  // namespace

std::string line_plot_svg(const PlotSpec& spec, const std::vector<Series>& series) {
  const bool categorical = !spec.x_ticks.empty();
  Frame f{spec.x_min, spec.x_max, spec.y_min, spec.y_max};
  if (f.x0 == f.x1 || f.y0 == f.y1) {
    double xlo = INFINITY, xhi = -INFINITY, ylo = INFINITY, yhi = -INFINITY;
    for (const auto& s : series) {
      for (double v : s.x) xlo = std::min(xlo, v), xhi = std::max(xhi, v);
      for (double v : s.y) {
        if (std::isfinite(v)) ylo = std::min(ylo, v), yhi = std::max(yhi, v);
      }
    }
    if (!std::isfinite(xlo)) xlo = 0, xhi = 1;
    if (!std::isfinite(ylo)) ylo = 0, yhi = 1;
    if (f.x0 == f.x1) f.x0 = xlo, f.x1 = xhi;
    if (f.y0 == f.y1) f.y0 = ylo, f.y1 = yhi;
  }
  if (categorical) f.x0 = -0.5, f.x1 = static_cast<double>(spec.x_ticks.size()) - 0.5;
  widen(f.x0, f.x1);
  widen(f.y0, f.y1);

  std::ostringstream svg;
  svg << open_svg();
  axes(svg, spec, f, !categorical);
  for (std::size_t i = 0; i < spec.x_ticks.size(); ++i) {
    svg << "<text x=\"" << f.px(static_cast<double>(i)) << "\" y=\"" << kHeight - kBottom + 16
        << "\" text-anchor=\"middle\" font-size=\"11\">" << escape(spec.x_ticks[i]) << "</text>\n";
  }
  for (std::size_t i = 0; i < series.size(); ++i) {
    const auto& s = series[i];
    if (s.x.size() != s.y.size()) throw DimensionError("plot series '" + s.name + "' has mismatched x and y");
    const char* color = kPalette[i % kPalette.size()];
    svg << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\" points=\"";
    for (std::size_t k = 0; k < s.x.size(); ++k) {
      if (std::isfinite(s.y[k])) svg << f.px(s.x[k]) << ',' << f.py(s.y[k]) << ' ';
    }
    svg << "\"/>\n";
    for (std::size_t k = 0; k < s.x.size(); ++k) {
      if (!std::isfinite(s.y[k])) continue;
      svg << "<circle cx=\"" << f.px(s.x[k]) << "\" cy=\"" << f.py(s.y[k]) << "\" r=\"3\" fill=\"" << color
          << "\"/>\n";
    }
  }
  legend(svg, series);
  svg << "</svg>\n";
  return svg.str();
}

std::string histogram_svg(const PlotSpec& spec, const std::vector<Series>& samples, int bins) {
  if (bins < 1) throw InvalidInputError("histogram needs at least one bin");
  double lo = spec.x_min, hi = spec.x_max;
  if (lo == hi) {
    lo = INFINITY;
    hi = -INFINITY;
    for (const auto& s : samples) {
      for (double v : s.y) lo = std::min(lo, v), hi = std::max(hi, v);
    }
    if (!std::isfinite(lo)) lo = 0, hi = 1;
  }
  widen(lo, hi);
  const double width = (hi - lo) / bins;

  std::vector<std::vector<double>> freq;
  double peak = 0.0;
  for (const auto& s : samples) {
    std::vector<double> h(static_cast<std::size_t>(bins), 0.0);
    for (double v : s.y) {
      auto b = static_cast<long>(std::floor((v - lo) / width));
      b = std::clamp(b, 0L, static_cast<long>(bins) - 1);
      h[static_cast<std::size_t>(b)] += 1.0;
    }
    for (auto& c : h) {
      c /= std::max<std::size_t>(1, s.y.size());
      peak = std::max(peak, c);
    }
    freq.push_back(std::move(h));
  }

  Frame f{lo, hi, 0.0, peak > 0 ? peak * 1.05 : 1.0};
  std::ostringstream svg;
  svg << open_svg();
  axes(svg, spec, f, true);
  for (std::size_t i = 0; i < freq.size(); ++i) {
    for (int b = 0; b < bins; ++b) {
      const double v = freq[i][static_cast<std::size_t>(b)];
      if (v <= 0) continue;
      const double x0 = f.px(lo + b * width), x1 = f.px(lo + (b + 1) * width);
      svg << "<rect x=\"" << x0 << "\" y=\"" << f.py(v) << "\" width=\"" << x1 - x0 << "\" height=\""
          << f.py(0) - f.py(v) << "\" fill=\"" << kPalette[i % kPalette.size()] << "\" fill-opacity=\"0.45\"/>\n";
    }
  }
  legend(svg, samples);
  svg << "</svg>\n";
  return svg.str();
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << text;
  if (!out) throw Error("failed writing " + path.string());
}

}  // namespace darkhash
