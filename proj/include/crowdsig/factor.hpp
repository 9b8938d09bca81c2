#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "crowdsig/panel.hpp"

namespace crowdsig {

/// Population moments implied by the single-factor model
/// e_it = delta_i z_t + w_it, z_t = phi z_{t-1} + v_t.
struct ImpliedMoments {
  double factor_variance = 0.0;     // sigma_v^2 / (1 - phi^2)
  std::vector<double> variances;    // delta_i^2 var(z) + sigma_wi^2
  Eigen::MatrixXd covariances;      // delta_i delta_j var(z) off the diagonal
  Eigen::MatrixXd correlations;     // unit diagonal
};

ImpliedMoments implied_moments(const FactorParams& params);

struct RestrictionCheck {
  bool weak = false;    // sigma_wi^2 / delta_i^2 common across i
  bool strong = false;  // delta_i and sigma_wi^2 each common across i
};

/// (max - min) / max of |values|; 0 for an all-zero vector.
double relative_spread(const std::vector<double>& values);

/// Throws Errc::domain when some loading is zero (weak ratio undefined).
RestrictionCheck check_restrictions(const FactorParams& params, double tol = 1e-9);

enum class DeviationBin { under10, b10to20, b20to30, over30 };

std::string_view to_string(DeviationBin bin) noexcept;
DeviationBin bin_for(double deviation_pct) noexcept;

struct DeviationCell {
  std::size_t row = 0;
  std::size_t col = 0;
  double value = 0.0;
  double deviation_pct = 0.0;  // signed, 100 (value - median) / |median|
  DeviationBin bin = DeviationBin::under10;
};

/// Percent deviations of each variance from the median variance and of each
/// covariance from the median covariance (heatmap cells).
struct DeviationGrid {
  std::size_t n = 0;
  std::vector<int> ids;  // forecaster labels for rows/cols, may be empty
  double median_variance = 0.0;
  double median_covariance = 0.0;
  std::vector<DeviationCell> cells;  // full symmetric grid, row-major

  const DeviationCell& at(std::size_t row, std::size_t col) const {
    return cells[row * n + col];
  }
};

/// Median with the even-count convention of averaging the two central values.
double median(std::vector<double> values);

DeviationGrid deviation_grid(const CovarianceSummary& moments, std::vector<int> ids = {});

}  // namespace crowdsig
