#pragma once

#include <compare>
#include <cstddef>
#include <cstdint>
#include <istream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace crowdsig {

/// Calendar quarter. Ordered chronologically.
struct Quarter {
  int year = 0;
  int quarter = 1;  // 1..4

  /// Months-free linear index: year * 4 + (quarter - 1).
  constexpr std::int64_t ordinal() const noexcept {
    return static_cast<std::int64_t>(year) * 4 + (quarter - 1);
  }
  static constexpr Quarter from_ordinal(std::int64_t ord) noexcept {
    const auto y = ord >= 0 ? ord / 4 : (ord - 3) / 4;
    return Quarter{static_cast<int>(y), static_cast<int>(ord - y * 4) + 1};
  }
  constexpr Quarter shifted(std::int64_t quarters) const noexcept {
    return from_ordinal(ordinal() + quarters);
  }

  /// "1990Q2"
  std::string str() const;
  /// Accepts "1990Q2" or "1990:2".
  static Quarter parse(const std::string& text);

  friend constexpr auto operator<=>(const Quarter& a, const Quarter& b) noexcept {
    return a.ordinal() <=> b.ordinal();
  }
  friend constexpr bool operator==(const Quarter&, const Quarter&) = default;
};

/// Column layout of an SPF-style level file.
///
/// Level columns are named `<level_prefix><position>` for position
/// 1..level_count. Position p forecasts the quarter
/// `survey + first_position_offset + (p - 1)`; with the default offset of -1
/// position 1 is the quarter preceding the survey.
struct ColumnLayout {
  std::string year_column = "YEAR";
  std::string quarter_column = "QUARTER";
  std::string id_column = "ID";
  std::string level_prefix;  // empty: use the variable name
  int level_count = 6;
  int first_position_offset = -1;
  char delimiter = ',';
};

struct LevelRecord {
  Quarter survey;
  int forecaster_id = 0;
  std::vector<std::optional<double>> levels;  // index 0 = position 1
};

struct LevelPanel {
  std::string variable;
  ColumnLayout layout;
  std::vector<LevelRecord> records;

  int positions() const noexcept { return layout.level_count; }
};

/// Annualized growth forecasts for one horizon.
struct GrowthRecord {
  Quarter survey;
  Quarter target;
  int forecaster_id = 0;
  std::optional<double> value;
};

struct GrowthForecasts {
  std::string variable;
  int horizon = 1;
  std::vector<GrowthRecord> records;
};

using RealizationSeries = std::map<Quarter, double>;

struct RealizationLayout {
  std::string year_column = "YEAR";
  std::string quarter_column = "QUARTER";
  std::string value_column = "VALUE";
  char delimiter = ',';
};

/// N forecasters x T periods of forecast errors with a missingness mask.
///
/// Immutable after construction; safe to share between threads.
class ErrorPanel {
 public:
  ErrorPanel() = default;

  /// Validates: N, T >= 1; periods strictly increasing; every forecaster has
  /// at least one present cell. `values` is row-major N x T; absent cells are
  /// ignored and stored as 0.
  ErrorPanel(std::vector<int> forecaster_ids, std::vector<Quarter> periods,
             std::vector<double> values, std::vector<std::uint8_t> present,
             int horizon = 0, std::string variable = {});

  /// Balanced panel from an N x T matrix.
  static ErrorPanel balanced(const Eigen::MatrixXd& errors,
                             std::vector<int> forecaster_ids = {},
                             std::vector<Quarter> periods = {}, int horizon = 0,
                             std::string variable = {});

  std::size_t forecasters() const noexcept { return ids_.size(); }
  std::size_t periods() const noexcept { return periods_.size(); }
  const std::vector<int>& ids() const noexcept { return ids_; }
  const std::vector<Quarter>& period_ids() const noexcept { return periods_; }
  int horizon() const noexcept { return horizon_; }
  const std::string& variable() const noexcept { return variable_; }

  bool present(std::size_t i, std::size_t t) const noexcept {
    return present_[i * periods_.size() + t] != 0;
  }
  double value(std::size_t i, std::size_t t) const noexcept {
    return values_[i * periods_.size() + t];
  }
  std::optional<double> at(std::size_t i, std::size_t t) const noexcept {
    if (!present(i, t)) return std::nullopt;
    return value(i, t);
  }

  bool is_balanced() const noexcept;
  std::size_t missing_cells() const noexcept;

  /// Indices of forecasters present in period t, ascending.
  std::vector<std::size_t> respondents(std::size_t t) const;

  /// Balanced panels only.
  Eigen::MatrixXd matrix() const;

  /// Same panel restricted to the given period columns (in that order,
  /// duplicates allowed). Used by the bootstrap; period ids are renumbered
  /// consecutively from the first kept period, and forecasters left with no
  /// observations are dropped.
  ErrorPanel resample_periods(const std::vector<std::size_t>& columns) const;

  /// Multiplies every present error by `factor`.
  ErrorPanel scaled(double factor) const;

  friend bool operator==(const ErrorPanel&, const ErrorPanel&) = default;

 private:
  std::vector<int> ids_;
  std::vector<Quarter> periods_;
  std::vector<double> values_;
  std::vector<std::uint8_t> present_;
  int horizon_ = 0;
  std::string variable_;
};

/// Uncentered time-average second moments.
struct CovarianceSummary {
  std::vector<double> variances;          // sigma_i^2
  std::vector<std::size_t> variance_counts;
  Eigen::MatrixXd covariances;            // c_ij, symmetric; diagonal = variances
  Eigen::Matrix<std::size_t, Eigen::Dynamic, Eigen::Dynamic> pair_counts;

  std::size_t size() const noexcept { return variances.size(); }
  bool pair_present(std::size_t i, std::size_t j) const noexcept {
    return pair_counts(static_cast<Eigen::Index>(i),
                       static_cast<Eigen::Index>(j)) > 0;
  }
  bool complete() const noexcept;
  /// True when all pair and variance counts coincide (balanced input).
  bool uniform_counts() const noexcept;
};

struct PanelSummary {
  std::vector<Quarter> periods;
  std::vector<std::size_t> respondents;  // per period
  std::vector<std::size_t> tenure;       // per forecaster, in quarters
  double tenure_mean = 0.0;
  std::size_t tenure_min = 0;
  std::size_t tenure_max = 0;
};

struct FactorParams {
  std::vector<double> loadings;             // delta_i
  double phi = 0.0;                         // AR(1) coefficient of the factor
  double shock_variance = 1.0;              // sigma_v^2
  std::vector<double> idio_variances;       // sigma_wi^2

  /// Throws Errc::stationarity / Errc::domain.
  void validate() const;
};

struct PeriodWindow {
  Quarter first;
  Quarter last;
};

LevelPanel load_spf_levels(std::istream& source, const std::string& variable,
                           ColumnLayout layout = {});

RealizationSeries load_realizations(std::istream& source,
                                    const RealizationLayout& layout = {});

/// Annualized quarter-on-quarter growth, 100((f_target / f_base)^4 - 1), from
/// level positions (h, h+1).
GrowthForecasts levels_to_growth(const LevelPanel& panel, int h);

/// Errors are forecast minus realization.
ErrorPanel compute_errors(const GrowthForecasts& forecasts,
                          const RealizationSeries& realized);

PanelSummary participation_summary(const ErrorPanel& panel);

/// Sub-panel of forecasters fully present on the window, sorted by ascending
/// sample error variance (ties by id).
ErrorPanel extract_balanced(const ErrorPanel& panel, const PeriodWindow& window,
                            const std::optional<std::vector<int>>& required_ids = {});

/// Gaussian draws with covariance sigma2 * R(rho), balanced, ids 1..N,
/// periods starting 2000Q1.
ErrorPanel simulate_equicorrelated(std::size_t n, std::size_t t, double rho,
                                   double sigma2, std::uint64_t seed);

/// e_it = delta_i z_t + w_it with z an AR(1) started from its stationary law.
ErrorPanel simulate_factor(const FactorParams& params, std::size_t t,
                           std::uint64_t seed);

CovarianceSummary sample_moments(const ErrorPanel& panel);

}  // namespace crowdsig
