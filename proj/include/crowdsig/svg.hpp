#pragma once

#include <string>
#include <vector>

#include "crowdsig/factor.hpp"
#include "crowdsig/sigplot.hpp"

namespace crowdsig {

struct SvgStyle {
  int width = 720;
  int height = 480;
  std::string title;
  std::string x_label = "k";
  std::string y_label;
  std::size_t max_outliers_per_box = 200;  // evenly thinned beyond this
};

/// One polyline per plot (x = k); min/max envelopes drawn dashed when present.
std::string render_svg(const std::vector<SignaturePlot>& plots, const SvgStyle& style = {});
std::string render_svg(const DistributionPlot& plot, const SvgStyle& style = {});
std::string render_svg(const DeviationGrid& grid, const SvgStyle& style = {});

}  // namespace crowdsig
