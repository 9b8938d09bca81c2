#include "crowdsig/svg.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>

#include "crowdsig/error.hpp"

namespace crowdsig {

namespace {

constexpr std::array<const char*, 8> kPalette = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e",
                                                 "#9467bd", "#8c564b", "#e377c2", "#17becf"};

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  return buf;
}

std::string tick_label(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.4g", v);
  return buf;
}

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

// Plot-area mapping with a margin for axes and legend.
struct Frame {
  double left = 70, right = 160, top = 40, bottom = 50;
  double width, height;
  double x0, x1, y0, y1;

  Frame(const SvgStyle& s, double xmin, double xmax, double ymin, double ymax)
      : width(s.width), height(s.height), x0(xmin), x1(xmax), y0(ymin), y1(ymax) {
    if (x1 <= x0) x1 = x0 + 1.0;
    if (y1 <= y0) {
      const double pad = std::abs(y0) > 0 ? std::abs(y0) * 0.1 : 1.0;
      y0 -= pad;
      y1 += pad;
    }
  }
  double px(double x) const { return left + (x - x0) / (x1 - x0) * (width - left - right); }
  double py(double y) const { return height - bottom - (y - y0) / (y1 - y0) * (height - top - bottom); }
};

void open_svg(std::ostringstream& o, const SvgStyle& s) {
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << s.width << "\" height=\""
    << s.height << "\" viewBox=\"0 0 " << s.width << ' ' << s.height
    << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  o << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  if (!s.title.empty())
    o << "<text x=\"" << s.width / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">"
      << escape(s.title) << "</text>\n";
}

void axes(std::ostringstream& o, const Frame& f, const SvgStyle& s, bool integer_x) {
  const double xa = f.left, xb = f.width - f.right;
  const double ya = f.height - f.bottom, yb = f.top;
  o << "<g stroke=\"black\" stroke-width=\"1\">\n"
    << "<line x1=\"" << num(xa) << "\" y1=\"" << num(ya) << "\" x2=\"" << num(xb) << "\" y2=\""
    << num(ya) << "\"/>\n"
    << "<line x1=\"" << num(xa) << "\" y1=\"" << num(ya) << "\" x2=\"" << num(xa) << "\" y2=\""
    << num(yb) << "\"/>\n</g>\n";
  constexpr int kTicks = 5;
  for (int i = 0; i <= kTicks; ++i) {
    const double y = f.y0 + (f.y1 - f.y0) * i / kTicks;
    o << "<line x1=\"" << num(xa - 4) << "\" y1=\"" << num(f.py(y)) << "\" x2=\"" << num(xa)
      << "\" y2=\"" << num(f.py(y)) << "\" stroke=\"black\"/>\n"
      << "<text x=\"" << num(xa - 6) << "\" y=\"" << num(f.py(y) + 4)
      << "\" text-anchor=\"end\">" << tick_label(y) << "</text>\n";
  }
  const double span = f.x1 - f.x0;
  const double step = integer_x ? std::max(1.0, std::ceil(span / 10.0)) : span / kTicks;
  for (double x = f.x0; x <= f.x1 + 1e-9; x += step)
    o << "<line x1=\"" << num(f.px(x)) << "\" y1=\"" << num(ya) << "\" x2=\"" << num(f.px(x))
      << "\" y2=\"" << num(ya + 4) << "\" stroke=\"black\"/>\n"
      << "<text x=\"" << num(f.px(x)) << "\" y=\"" << num(ya + 18)
      << "\" text-anchor=\"middle\">" << tick_label(x) << "</text>\n";
  o << "<text x=\"" << num((xa + xb) / 2) << "\" y=\"" << num(f.height - 10)
    << "\" text-anchor=\"middle\">" << escape(s.x_label) << "</text>\n";
  if (!s.y_label.empty())
    o << "<text transform=\"translate(16," << num((ya + yb) / 2)
      << ") rotate(-90)\" text-anchor=\"middle\">" << escape(s.y_label) << "</text>\n";
}

void legend_entry(std::ostringstream& o, const Frame& f, int row, const std::string& color,
                  const std::string& label, bool swatch) {
  const double x = f.width - f.right + 15;
  const double y = f.top + 10 + row * 18;
  if (swatch)
    o << "<rect x=\"" << num(x) << "\" y=\"" << num(y - 9) << "\" width=\"14\" height=\"10\" fill=\""
      << color << "\" stroke=\"#444\"/>\n";
  else
    o << "<line x1=\"" << num(x) << "\" y1=\"" << num(y - 4) << "\" x2=\"" << num(x + 14)
      << "\" y2=\"" << num(y - 4) << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n";
  o << "<text x=\"" << num(x + 20) << "\" y=\"" << num(y) << "\">" << escape(label)
    << "</text>\n";
}

}  // namespace

std::string render_svg(const std::vector<SignaturePlot>& plots, const SvgStyle& style) {
  double xmin = std::numeric_limits<double>::infinity(), xmax = -xmin;
  double ymin = xmin, ymax = -xmin;
  std::size_t total = 0;
  for (const auto& p : plots)
    for (const auto& pt : p.points) {
      ++total;
      xmin = std::min<double>(xmin, pt.k);
      xmax = std::max<double>(xmax, pt.k);
      ymin = std::min({ymin, pt.value, pt.min.value_or(pt.value)});
      ymax = std::max({ymax, pt.value, pt.max.value_or(pt.value)});
    }
  if (total == 0) throw Error(Errc::empty_result, "nothing to plot");
  ymin = std::min(ymin, 0.0);

  SvgStyle s = style;
  if (s.y_label.empty() && !plots.empty()) s.y_label = std::string(to_string(plots.front().kind));
  const Frame f(s, xmin, xmax, ymin, ymax);
  std::ostringstream o;
  open_svg(o, s);
  axes(o, f, s, true);

  for (std::size_t idx = 0; idx < plots.size(); ++idx) {
    const auto& plot = plots[idx];
    const std::string color = kPalette[idx % kPalette.size()];
    auto polyline = [&](auto getter, const char* dash) {
      o << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"" << (dash ? 1 : 2)
        << "\"" << (dash ? std::string(" stroke-dasharray=\"") + dash + "\"" : std::string())
        << " points=\"";
      for (const auto& pt : plot.points) o << num(f.px(pt.k)) << ',' << num(f.py(getter(pt))) << ' ';
      o << "\"/>\n";
    };
    if (plot.points.size() > 1) polyline([](const SignaturePoint& p) { return p.value; }, nullptr);
    const bool envelope = std::all_of(plot.points.begin(), plot.points.end(),
                                      [](const SignaturePoint& p) { return p.min && p.max; });
    if (envelope && plot.points.size() > 1) {
      polyline([](const SignaturePoint& p) { return *p.min; }, "4 3");
      polyline([](const SignaturePoint& p) { return *p.max; }, "4 3");
    }
    for (const auto& pt : plot.points)
      o << "<circle cx=\"" << num(f.px(pt.k)) << "\" cy=\"" << num(f.py(pt.value))
        << "\" r=\"2.5\" fill=\"" << color << "\"/>\n";
    std::string label = plot.label.empty() ? std::string(to_string(plot.method)) : plot.label;
    legend_entry(o, f, static_cast<int>(idx), color, label, false);
  }
  o << "</svg>\n";
  return o.str();
}

std::string render_svg(const DistributionPlot& plot, const SvgStyle& style) {
  if (plot.boxes.empty()) throw Error(Errc::empty_result, "nothing to plot");
  double ymax = 0.0;
  double ymin = 0.0;
  for (const auto& b : plot.boxes) {
    ymax = std::max(ymax, b.upper_whisker);
    if (!b.outliers.empty()) ymax = std::max(ymax, b.outliers.back());
    ymin = std::min(ymin, b.lower_whisker);
  }
  SvgStyle s = style;
  if (s.y_label.empty()) s.y_label = "squared error / median at k=1";
  const Frame f(s, plot.boxes.front().k - 0.5, plot.boxes.back().k + 0.5, ymin, ymax);
  std::ostringstream o;
  open_svg(o, s);
  axes(o, f, s, true);
  const double half = 0.3 * (f.px(1.0) - f.px(0.0));
  for (const auto& b : plot.boxes) {
    const double cx = f.px(b.k);
    o << "<g stroke=\"#1f77b4\" fill=\"none\">\n"
      << "<line x1=\"" << num(cx) << "\" y1=\"" << num(f.py(b.lower_whisker)) << "\" x2=\""
      << num(cx) << "\" y2=\"" << num(f.py(b.q1)) << "\"/>\n"
      << "<line x1=\"" << num(cx) << "\" y1=\"" << num(f.py(b.q3)) << "\" x2=\"" << num(cx)
      << "\" y2=\"" << num(f.py(b.upper_whisker)) << "\"/>\n"
      << "<rect x=\"" << num(cx - half) << "\" y=\"" << num(f.py(b.q3)) << "\" width=\""
      << num(2 * half) << "\" height=\"" << num(f.py(b.q1) - f.py(b.q3))
      << "\" fill=\"#cfe2f3\"/>\n"
      << "<line x1=\"" << num(cx - half) << "\" y1=\"" << num(f.py(b.median)) << "\" x2=\""
      << num(cx + half) << "\" y2=\"" << num(f.py(b.median))
      << "\" stroke=\"#d62728\" stroke-width=\"2\"/>\n";
    for (double w : {b.lower_whisker, b.upper_whisker})
      o << "<line x1=\"" << num(cx - half / 2) << "\" y1=\"" << num(f.py(w)) << "\" x2=\""
        << num(cx + half / 2) << "\" y2=\"" << num(f.py(w)) << "\"/>\n";
    o << "</g>\n";
    const std::size_t m = b.outliers.size();
    const std::size_t shown = std::min(m, s.max_outliers_per_box);
    for (std::size_t i = 0; i < shown; ++i) {
      const std::size_t idx = shown == 1 ? 0 : i * (m - 1) / (shown - 1);
      o << "<circle cx=\"" << num(cx) << "\" cy=\"" << num(f.py(b.outliers[idx]))
        << "\" r=\"1.5\" fill=\"none\" stroke=\"#555\"/>\n";
    }
  }
  o << "</svg>\n";
  return o.str();
}

std::string render_svg(const DeviationGrid& grid, const SvgStyle& style) {
  if (grid.n == 0 || grid.cells.empty()) throw Error(Errc::empty_result, "nothing to plot");
  static constexpr std::array<const char*, 4> kBinColors = {"#ffffff", "#f4b6b6", "#e06666",
                                                            "#990000"};
  static constexpr std::array<const char*, 4> kBinLabels = {"<10%", "10-20%", "20-30%", ">30%"};
  SvgStyle s = style;
  const double area = std::min(s.width - 200.0, s.height - 80.0);
  const double cell = area / static_cast<double>(grid.n);
  const double x0 = 50, y0 = 50;
  std::ostringstream o;
  open_svg(o, s);
  auto label = [&](std::size_t i) {
    return std::to_string(grid.ids.empty() ? static_cast<int>(i + 1) : grid.ids[i]);
  };
  for (std::size_t i = 0; i < grid.n; ++i) {
    o << "<text x=\"" << num(x0 - 6) << "\" y=\"" << num(y0 + (i + 0.5) * cell + 4)
      << "\" text-anchor=\"end\">" << label(i) << "</text>\n";
    o << "<text x=\"" << num(x0 + (i + 0.5) * cell) << "\" y=\"" << num(y0 - 6)
      << "\" text-anchor=\"middle\">" << label(i) << "</text>\n";
  }
  for (const auto& c : grid.cells) {
    const auto bin = static_cast<std::size_t>(c.bin);
    o << "<rect x=\"" << num(x0 + c.col * cell) << "\" y=\"" << num(y0 + c.row * cell)
      << "\" width=\"" << num(cell) << "\" height=\"" << num(cell) << "\" fill=\""
      << kBinColors[bin] << "\" stroke=\"#888\"/>\n";
    if (cell >= 28)
      o << "<text x=\"" << num(x0 + (c.col + 0.5) * cell) << "\" y=\""
        << num(y0 + (c.row + 0.5) * cell + 4) << "\" text-anchor=\"middle\" font-size=\"9\""
        << (bin == 3 ? " fill=\"white\"" : "") << ">" << num(c.deviation_pct) << "</text>\n";
  }
  for (std::size_t b = 0; b < kBinColors.size(); ++b) {
    const double lx = x0 + grid.n * cell + 25;
    const double ly = y0 + 10 + b * 20;
    o << "<rect x=\"" << num(lx) << "\" y=\"" << num(ly - 10) << "\" width=\"14\" height=\"12\" fill=\""
      << kBinColors[b] << "\" stroke=\"#444\"/>\n"
      << "<text x=\"" << num(lx + 20) << "\" y=\"" << num(ly) << "\">" << kBinLabels[b]
      << "</text>\n";
  }
  o << "</svg>\n";
  return o.str();
}

}  // namespace crowdsig
