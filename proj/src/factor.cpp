#include "crowdsig/factor.hpp"

#include <algorithm>
#include <cmath>

#include "crowdsig/error.hpp"

namespace crowdsig {

ImpliedMoments implied_moments(const FactorParams& params) {
  params.validate();
  const std::size_t n = params.loadings.size();
  const auto nn = static_cast<Eigen::Index>(n);
  ImpliedMoments m;
  m.factor_variance = params.shock_variance / (1.0 - params.phi * params.phi);
  m.variances.resize(n);
  for (std::size_t i = 0; i < n; ++i)
    m.variances[i] =
        params.loadings[i] * params.loadings[i] * m.factor_variance + params.idio_variances[i];

  m.covariances.resize(nn, nn);
  m.correlations.resize(nn, nn);
  for (Eigen::Index i = 0; i < nn; ++i) {
    const auto ui = static_cast<std::size_t>(i);
    for (Eigen::Index j = 0; j < nn; ++j) {
      const auto uj = static_cast<std::size_t>(j);
      if (i == j) {
        m.covariances(i, j) = m.variances[ui];
        m.correlations(i, j) = 1.0;
        continue;
      }
      const double cov = params.loadings[ui] * params.loadings[uj] * m.factor_variance;
      m.covariances(i, j) = cov;
      const double denom = std::sqrt(m.variances[ui]) * std::sqrt(m.variances[uj]);
      m.correlations(i, j) = denom > 0.0 ? cov / denom : 0.0;
    }
  }
  return m;
}

double relative_spread(const std::vector<double>& values) {
  if (values.empty()) return 0.0;
  const double top = std::abs(*std::max_element(
      values.begin(), values.end(), [](double a, double b) { return std::abs(a) < std::abs(b); }));
  if (top == 0.0) return 0.0;
  const auto [mn, mx] = std::minmax_element(values.begin(), values.end());
  return (*mx - *mn) / top;
}

RestrictionCheck check_restrictions(const FactorParams& params, double tol) {
  params.validate();
  std::vector<double> ratios;
  for (std::size_t i = 0; i < params.loadings.size(); ++i) {
    const double d = params.loadings[i];
    if (d == 0.0)
      throw Error(Errc::domain, "weak restriction undefined: loading " + std::to_string(i + 1) +
                                    " is zero");
    ratios.push_back(params.idio_variances[i] / (d * d));
  }
  RestrictionCheck out;
  out.weak = relative_spread(ratios) <= tol;
  out.strong = relative_spread(params.loadings) <= tol &&
               relative_spread(params.idio_variances) <= tol;
  // equal loadings and equal idiosyncratic variances imply equal ratios
  out.weak = out.weak || out.strong;
  return out;
}

std::string_view to_string(DeviationBin bin) noexcept {
  switch (bin) {
    case DeviationBin::under10: return "under10";
    case DeviationBin::b10to20: return "b10to20";
    case DeviationBin::b20to30: return "b20to30";
    case DeviationBin::over30: return "over30";
  }
  return "?";
}

DeviationBin bin_for(double deviation_pct) noexcept {
  const double a = std::abs(deviation_pct);
  if (a < 10.0) return DeviationBin::under10;
  if (a < 20.0) return DeviationBin::b10to20;
  if (a < 30.0) return DeviationBin::b20to30;
  return DeviationBin::over30;
}

double median(std::vector<double> values) {
  if (values.empty()) throw Error(Errc::empty_result, "median of an empty set");
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  return n % 2 == 1 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

DeviationGrid deviation_grid(const CovarianceSummary& moments, std::vector<int> ids) {
  const std::size_t n = moments.size();
  if (n < 2) throw Error(Errc::range, "deviation grid needs N >= 2");
  if (!moments.complete())
    throw Error(Errc::incomplete_moments, "deviation grid needs every pairwise covariance");
  if (!ids.empty() && ids.size() != n) throw Error(Errc::schema, "id labels do not match N");

  std::vector<double> covs;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      covs.push_back(moments.covariances(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)));

  DeviationGrid grid;
  grid.n = n;
  grid.ids = std::move(ids);
  grid.median_variance = median(moments.variances);
  grid.median_covariance = median(covs);
  if (grid.median_variance == 0.0 || grid.median_covariance == 0.0)
    throw Error(Errc::degenerate, "class median is zero; percent deviations undefined");

  grid.cells.reserve(n * n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      DeviationCell c;
      c.row = i;
      c.col = j;
      c.value = moments.covariances(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
      const double med = i == j ? grid.median_variance : grid.median_covariance;
      c.deviation_pct = 100.0 * (c.value - med) / std::abs(med);
      c.bin = bin_for(c.deviation_pct);
      grid.cells.push_back(c);
    }
  return grid;
}

}  // namespace crowdsig
