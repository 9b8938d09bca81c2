#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "crowdsig/panel.hpp"

namespace crowdsig {

enum class PlotKind { mse, mse_ratio, dmse, dmse_ratio };
enum class PlotMethod { exact, monte_carlo, closed_form, model };

std::string_view to_string(PlotKind kind) noexcept;
std::string_view to_string(PlotMethod method) noexcept;
PlotKind parse_plot_kind(std::string_view text);
PlotMethod parse_plot_method(std::string_view text);

struct SignaturePoint {
  int k = 1;
  double value = 0.0;
  std::optional<double> min;
  std::optional<double> max;
  std::optional<std::size_t> replications;  // Monte Carlo draws that contributed
  std::size_t excluded = 0;                 // (replication, period) pairs skipped
};

/// Crowd size signature plot: a statistic of the k-average forecast error as
/// a function of crowd size k.
struct SignaturePlot {
  PlotKind kind = PlotKind::mse;
  PlotMethod method = PlotMethod::exact;
  std::vector<SignaturePoint> points;  // k strictly increasing
  bool approximate = false;  // built from pairwise-complete moments of an unbalanced panel
  std::string label;         // free-form series name, e.g. "growth h=1"

  std::size_t size() const noexcept { return points.size(); }
  /// Value at crowd size k; throws Errc::range when absent.
  double at(int k) const;
  std::vector<double> values() const;

  /// Throws Errc::schema if an invariant of the plot kind is violated.
  void validate() const;
};

enum class GroupMode { per_period, fixed_group };

std::string_view to_string(GroupMode mode) noexcept;
GroupMode parse_group_mode(std::string_view text);

struct MonteCarloConfig {
  std::size_t replications = 30000;  // B
  std::uint64_t seed = 20240101;
  GroupMode group_mode = GroupMode::per_period;
  int k_max = 20;
  /// fixed_group: a forecaster is a candidate when present in at least this
  /// fraction of periods.
  double membership_fraction = 1.0;
  unsigned threads = 0;  // 0 = CROWDSIG_THREADS / hardware
};

struct BoxStats {
  int k = 1;
  std::size_t count = 0;
  double q1 = 0.0;
  double median = 0.0;
  double q3 = 0.0;
  double lower_whisker = 0.0;
  double upper_whisker = 0.0;
  std::vector<double> outliers;  // ascending
};

/// Boxplots of pooled squared k-average errors, scaled by the k = 1 median.
struct DistributionPlot {
  double scale = 1.0;  // divisor applied to every statistic
  std::vector<BoxStats> boxes;
  std::string label;
};

/// Exact enumeration of all C(N, k) groups; balanced panels only.
SignaturePlot mse_exact(const ErrorPanel& panel, int k_max);

/// Largest C(N, k) mse_exact accepts.
inline constexpr double kMaxExactGroups = 1e6;

/// Random-group approximation (per-period redraws or fixed groups).
SignaturePlot mse_monte_carlo(const ErrorPanel& panel, const MonteCarloConfig& config);

/// (sigma_bar^2 / k)(1 + (k-1) rho_bar) from averaged moments.
SignaturePlot mse_closed_form(const CovarianceSummary& moments, int k_max);

SignaturePlot to_ratio(const SignaturePlot& plot);
SignaturePlot to_dmse(const SignaturePlot& plot, bool as_ratio);

DistributionPlot squared_error_distribution(const ErrorPanel& panel,
                                            const MonteCarloConfig& config);

/// Quantile with linear interpolation at positions (i-1)/(n-1) of the sorted
/// sample (i = 1..n).
double quantile_sorted(std::span<const double> sorted, double p);

/// Box statistics of an unsorted sample (Tukey fences at 1.5 IQR).
BoxStats box_stats(std::vector<double> sample, int k = 1);

}  // namespace crowdsig
