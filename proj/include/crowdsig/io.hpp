#pragma once

// CSV / JSON serialization of panels, plots, estimates and grids. Every double
// is written in its shortest round-trip decimal form.

#include <istream>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "crowdsig/estimator.hpp"
#include "crowdsig/factor.hpp"
#include "crowdsig/panel.hpp"
#include "crowdsig/sigplot.hpp"

namespace crowdsig {

std::string format_double(double value);

// Long format: period,forecaster_id,error (present cells only).
void write_panel_csv(std::ostream& out, const ErrorPanel& panel);
nlohmann::json panel_metadata(const ErrorPanel& panel, const std::string& units = "percent");

/// Rebuilds a panel. With the metadata sidecar the forecaster order, the
/// period list, horizon and variable are restored exactly; without it ids
/// and periods are sorted ascending.
ErrorPanel read_panel_csv(std::istream& in,
                          const std::optional<nlohmann::json>& metadata = std::nullopt);

// k,value,min,max,replications,excluded
void write_plot_csv(std::ostream& out, const SignaturePlot& plot);
nlohmann::json plot_json(const SignaturePlot& plot);
SignaturePlot read_plot_csv(std::istream& in, PlotKind kind = PlotKind::mse,
                            PlotMethod method = PlotMethod::exact);

// k,q1,median,q3,lo,hi,outliers (outliers ';'-separated)
void write_distribution_csv(std::ostream& out, const DistributionPlot& plot);
nlohmann::json distribution_json(const DistributionPlot& plot);

nlohmann::json estimate_json(const MatchEstimate& estimate);

// row_id,col_id,value,deviation_pct,bin
void write_grid_csv(std::ostream& out, const DeviationGrid& grid);

// period,respondents
void write_participation_csv(std::ostream& out, const PanelSummary& summary);
nlohmann::json participation_json(const PanelSummary& summary);

/// Square numeric matrix, one row per line; a non-numeric first row is
/// treated as a header and skipped.
Eigen::MatrixXd read_matrix_csv(std::istream& in, char delimiter = ',');

/// Moments view of a population covariance matrix (all pairs present,
/// counts set to 1).
CovarianceSummary moments_from_matrix(const Eigen::MatrixXd& sigma);

}  // namespace crowdsig
