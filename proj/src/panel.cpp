#include "crowdsig/panel.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <set>
#include <sstream>
#include <tuple>
#include <unordered_map>

#include "crowdsig/error.hpp"
#include "crowdsig/rng.hpp"
#include "text.hpp"

namespace crowdsig {

std::string Quarter::str() const {
  return std::to_string(year) + "Q" + std::to_string(quarter);
}

Quarter Quarter::parse(const std::string& text) {
  const auto s = detail::upper(detail::trim(text));
  const auto sep = s.find_first_of("Q:");
  if (sep == std::string::npos || sep == 0)
    throw Error(Errc::parse, "invalid quarter '" + text + "'");
  const auto year = detail::parse_integer(std::string_view(s).substr(0, sep));
  const auto q = detail::parse_integer(std::string_view(s).substr(sep + 1));
  if (!year || !q || *q < 1 || *q > 4)
    throw Error(Errc::parse, "invalid quarter '" + text + "'");
  return Quarter{static_cast<int>(*year), static_cast<int>(*q)};
}

// ---------------------------------------------------------------------------
// ErrorPanel

ErrorPanel::ErrorPanel(std::vector<int> forecaster_ids, std::vector<Quarter> periods,
                       std::vector<double> values, std::vector<std::uint8_t> present,
                       int horizon, std::string variable)
    : ids_(std::move(forecaster_ids)),
      periods_(std::move(periods)),
      values_(std::move(values)),
      present_(std::move(present)),
      horizon_(horizon),
      variable_(std::move(variable)) {
  const std::size_t n = ids_.size();
  const std::size_t t = periods_.size();
  if (n == 0 || t == 0)
    throw Error(Errc::empty_panel, "error panel needs at least one forecaster and one period");
  if (values_.size() != n * t || present_.size() != n * t)
    throw Error(Errc::schema, "error panel storage does not match N x T");
  for (std::size_t j = 1; j < t; ++j)
    if (!(periods_[j - 1] < periods_[j]))
      throw Error(Errc::schema, "period ids must be strictly increasing");
  for (std::size_t i = 0; i < n; ++i) {
    bool any = false;
    for (std::size_t j = 0; j < t; ++j) {
      auto& cell = values_[i * t + j];
      if (present_[i * t + j]) {
        if (!std::isfinite(cell))
          throw Error(Errc::schema, "non-finite error for forecaster " + std::to_string(ids_[i]));
        any = true;
      } else {
        cell = 0.0;
      }
    }
    if (!any)
      throw Error(Errc::empty_panel,
                  "forecaster " + std::to_string(ids_[i]) + " has no observations");
  }
}

ErrorPanel ErrorPanel::balanced(const Eigen::MatrixXd& errors,
                                std::vector<int> forecaster_ids,
                                std::vector<Quarter> periods, int horizon,
                                std::string variable) {
  const auto n = static_cast<std::size_t>(errors.rows());
  const auto t = static_cast<std::size_t>(errors.cols());
  if (forecaster_ids.empty()) {
    forecaster_ids.resize(n);
    std::iota(forecaster_ids.begin(), forecaster_ids.end(), 1);
  }
  if (periods.empty()) {
    const Quarter start{2000, 1};
    for (std::size_t j = 0; j < t; ++j)
      periods.push_back(start.shifted(static_cast<std::int64_t>(j)));
  }
  if (forecaster_ids.size() != n || periods.size() != t)
    throw Error(Errc::schema, "id/period labels do not match matrix shape");
  std::vector<double> values(n * t);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < t; ++j)
      values[i * t + j] = errors(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
  return ErrorPanel(std::move(forecaster_ids), std::move(periods), std::move(values),
                    std::vector<std::uint8_t>(n * t, 1), horizon, std::move(variable));
}

bool ErrorPanel::is_balanced() const noexcept { return missing_cells() == 0; }

std::size_t ErrorPanel::missing_cells() const noexcept {
  return static_cast<std::size_t>(std::count(present_.begin(), present_.end(), 0));
}

std::vector<std::size_t> ErrorPanel::respondents(std::size_t t) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < ids_.size(); ++i)
    if (present(i, t)) out.push_back(i);
  return out;
}

Eigen::MatrixXd ErrorPanel::matrix() const {
  if (!is_balanced()) throw Error(Errc::unsupported, "panel is not balanced");
  const auto n = static_cast<Eigen::Index>(ids_.size());
  const auto t = static_cast<Eigen::Index>(periods_.size());
  Eigen::MatrixXd m(n, t);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < t; ++j)
      m(i, j) = values_[static_cast<std::size_t>(i * t + j)];
  return m;
}

ErrorPanel ErrorPanel::resample_periods(const std::vector<std::size_t>& columns) const {
  const std::size_t n = ids_.size();
  const std::size_t t_old = periods_.size();
  const std::size_t t_new = columns.size();
  std::vector<int> ids;
  std::vector<double> values;
  std::vector<std::uint8_t> mask;
  for (std::size_t i = 0; i < n; ++i) {
    bool any = false;
    for (auto c : columns) any = any || present_[i * t_old + c];
    if (!any) continue;
    ids.push_back(ids_[i]);
    for (auto c : columns) {
      values.push_back(values_[i * t_old + c]);
      mask.push_back(present_[i * t_old + c]);
    }
  }
  std::vector<Quarter> periods;
  periods.reserve(t_new);
  const Quarter start = columns.empty() ? Quarter{} : periods_[columns.front()];
  for (std::size_t j = 0; j < t_new; ++j)
    periods.push_back(start.shifted(static_cast<std::int64_t>(j)));
  return ErrorPanel(std::move(ids), std::move(periods), std::move(values), std::move(mask),
                    horizon_, variable_);
}

ErrorPanel ErrorPanel::scaled(double factor) const {
  auto values = values_;
  for (auto& v : values) v *= factor;
  return ErrorPanel(ids_, periods_, std::move(values), present_, horizon_, variable_);
}

bool CovarianceSummary::complete() const noexcept {
  for (Eigen::Index i = 0; i < pair_counts.rows(); ++i)
    for (Eigen::Index j = 0; j < pair_counts.cols(); ++j)
      if (pair_counts(i, j) == 0) return false;
  return true;
}

bool CovarianceSummary::uniform_counts() const noexcept {
  if (pair_counts.size() == 0) return true;
  const auto ref = pair_counts(0, 0);
  for (Eigen::Index i = 0; i < pair_counts.rows(); ++i)
    for (Eigen::Index j = 0; j < pair_counts.cols(); ++j)
      if (pair_counts(i, j) != ref) return false;
  return true;
}

void FactorParams::validate() const {
  if (!(std::abs(phi) < 1.0))
    throw Error(Errc::stationarity, "factor AR coefficient must satisfy |phi| < 1");
  if (!(shock_variance > 0.0))
    throw Error(Errc::domain, "factor shock variance must be positive");
  if (loadings.empty() || loadings.size() != idio_variances.size())
    throw Error(Errc::domain, "loadings and idiosyncratic variances must have equal, nonzero length");
  for (double v : idio_variances)
    if (!(v >= 0.0)) throw Error(Errc::domain, "idiosyncratic variances must be nonnegative");
}

// ---------------------------------------------------------------------------
// Ingest

namespace {

std::size_t require_column(const std::vector<std::string>& header, const std::string& name,
                           const std::string& what) {
  const auto want = detail::upper(name);
  for (std::size_t c = 0; c < header.size(); ++c)
    if (detail::upper(header[c]) == want) return c;
  throw Error(Errc::schema, what + ": missing required column '" + name + "'");
}

}  // namespace

LevelPanel load_spf_levels(std::istream& source, const std::string& variable,
                           ColumnLayout layout) {
  if (layout.level_prefix.empty()) layout.level_prefix = variable;
  if (layout.level_count < 2)
    throw Error(Errc::schema, "level layout needs at least two positions");

  std::string line;
  if (!std::getline(source, line))
    throw Error(Errc::schema, "level file: empty input, header row required");
  const auto header = detail::split_fields(line, layout.delimiter);
  const auto year_col = require_column(header, layout.year_column, "level file");
  const auto quarter_col = require_column(header, layout.quarter_column, "level file");
  const auto id_col = require_column(header, layout.id_column, "level file");
  std::vector<std::size_t> level_cols;
  for (int p = 1; p <= layout.level_count; ++p)
    level_cols.push_back(
        require_column(header, layout.level_prefix + std::to_string(p), "level file"));

  LevelPanel panel{variable, layout, {}};
  std::map<std::tuple<int, int, int>, std::size_t> seen;  // key -> row number
  std::size_t row = 1;
  while (std::getline(source, line)) {
    ++row;
    if (detail::trim(line).empty()) continue;
    const auto fields = detail::split_fields(line, layout.delimiter);
    auto cell = [&](std::size_t c) -> std::string_view {
      return c < fields.size() ? std::string_view(fields[c]) : std::string_view{};
    };
    const auto year = detail::parse_integer(cell(year_col));
    const auto quarter = detail::parse_integer(cell(quarter_col));
    const auto id = detail::parse_integer(cell(id_col));
    if (!year || !quarter || !id)
      throw Error(Errc::parse, "level file row " + std::to_string(row) +
                                   ": unparseable year/quarter/id");
    if (*quarter < 1 || *quarter > 4)
      throw Error(Errc::parse, "level file row " + std::to_string(row) +
                                   ": quarter must be 1..4");
    const auto key = std::make_tuple(static_cast<int>(*year), static_cast<int>(*quarter),
                                     static_cast<int>(*id));
    if (auto [it, inserted] = seen.emplace(key, row); !inserted)
      throw Error(Errc::duplicate_key,
                  "level file: duplicate key (" + std::to_string(*year) + ", Q" +
                      std::to_string(*quarter) + ", id " + std::to_string(*id) +
                      ") on rows " + std::to_string(it->second) + " and " +
                      std::to_string(row));
    LevelRecord rec;
    rec.survey = Quarter{static_cast<int>(*year), static_cast<int>(*quarter)};
    rec.forecaster_id = static_cast<int>(*id);
    for (auto c : level_cols) rec.levels.push_back(detail::parse_number(cell(c)));
    panel.records.push_back(std::move(rec));
  }
  return panel;
}

RealizationSeries load_realizations(std::istream& source, const RealizationLayout& layout) {
  std::string line;
  if (!std::getline(source, line))
    throw Error(Errc::schema, "realization file: empty input, header row required");
  const auto header = detail::split_fields(line, layout.delimiter);
  const auto year_col = require_column(header, layout.year_column, "realization file");
  const auto quarter_col = require_column(header, layout.quarter_column, "realization file");
  const auto value_col = require_column(header, layout.value_column, "realization file");

  RealizationSeries out;
  std::size_t row = 1;
  while (std::getline(source, line)) {
    ++row;
    if (detail::trim(line).empty()) continue;
    const auto fields = detail::split_fields(line, layout.delimiter);
    auto cell = [&](std::size_t c) -> std::string_view {
      return c < fields.size() ? std::string_view(fields[c]) : std::string_view{};
    };
    const auto year = detail::parse_integer(cell(year_col));
    const auto quarter = detail::parse_integer(cell(quarter_col));
    if (!year || !quarter || *quarter < 1 || *quarter > 4)
      throw Error(Errc::parse, "realization file row " + std::to_string(row) +
                                   ": unparseable year/quarter");
    const auto value = detail::parse_number(cell(value_col));
    if (!value) continue;
    const Quarter q{static_cast<int>(*year), static_cast<int>(*quarter)};
    if (!out.emplace(q, *value).second)
      throw Error(Errc::duplicate_key, "realization file row " + std::to_string(row) +
                                           ": second value for " + q.str());
  }
  return out;
}

GrowthForecasts levels_to_growth(const LevelPanel& panel, int h) {
  if (h < 1 || h > panel.positions() - 1)
    throw Error(Errc::range, "horizon " + std::to_string(h) + " outside 1.." +
                                 std::to_string(panel.positions() - 1));
  GrowthForecasts out{panel.variable, h, {}};
  out.records.reserve(panel.records.size());
  const auto base_pos = static_cast<std::size_t>(h - 1);  // position h
  for (const auto& rec : panel.records) {
    GrowthRecord g;
    g.survey = rec.survey;
    g.target = rec.survey.shifted(panel.layout.first_position_offset + h);
    g.forecaster_id = rec.forecaster_id;
    const auto& base = rec.levels[base_pos];
    const auto& target = rec.levels[base_pos + 1];
    if (base && target && *base > 0.0)
      g.value = 100.0 * (std::pow(*target / *base, 4.0) - 1.0);
    out.records.push_back(g);
  }
  return out;
}

ErrorPanel compute_errors(const GrowthForecasts& forecasts, const RealizationSeries& realized) {
  // (target, id) -> error; the survey quarter determines the target uniquely
  // for a fixed horizon, so keys cannot collide unless the input had duplicates.
  std::map<std::pair<Quarter, int>, double> cells;
  std::set<Quarter> periods;
  std::set<int> ids;
  for (const auto& rec : forecasts.records) {
    if (!rec.value) continue;
    const auto it = realized.find(rec.target);
    if (it == realized.end()) continue;
    const double error = *rec.value - it->second;
    if (!cells.emplace(std::make_pair(rec.target, rec.forecaster_id), error).second)
      throw Error(Errc::duplicate_key, "two forecasts from id " +
                                           std::to_string(rec.forecaster_id) +
                                           " for target " + rec.target.str());
    periods.insert(rec.target);
    ids.insert(rec.forecaster_id);
  }
  if (cells.empty())
    throw Error(Errc::empty_panel,
                "no forecast target period has both a forecast and a realization");

  std::vector<Quarter> period_ids(periods.begin(), periods.end());
  std::vector<int> id_list(ids.begin(), ids.end());
  std::unordered_map<int, std::size_t> row_of;
  for (std::size_t i = 0; i < id_list.size(); ++i) row_of[id_list[i]] = i;
  std::map<Quarter, std::size_t> col_of;
  for (std::size_t j = 0; j < period_ids.size(); ++j) col_of[period_ids[j]] = j;

  const std::size_t t = period_ids.size();
  std::vector<double> values(id_list.size() * t, 0.0);
  std::vector<std::uint8_t> mask(id_list.size() * t, 0);
  for (const auto& [key, err] : cells) {
    const auto idx = row_of[key.second] * t + col_of[key.first];
    values[idx] = err;
    mask[idx] = 1;
  }
  return ErrorPanel(std::move(id_list), std::move(period_ids), std::move(values),
                    std::move(mask), forecasts.horizon, forecasts.variable);
}

PanelSummary participation_summary(const ErrorPanel& panel) {
  PanelSummary s;
  s.periods = panel.period_ids();
  const std::size_t n = panel.forecasters();
  const std::size_t t = panel.periods();
  s.respondents.assign(t, 0);
  s.tenure.assign(n, 0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < t; ++j)
      if (panel.present(i, j)) {
        ++s.respondents[j];
        ++s.tenure[i];
      }
  s.tenure_min = *std::min_element(s.tenure.begin(), s.tenure.end());
  s.tenure_max = *std::max_element(s.tenure.begin(), s.tenure.end());
  s.tenure_mean = static_cast<double>(std::accumulate(s.tenure.begin(), s.tenure.end(),
                                                      std::size_t{0})) /
                  static_cast<double>(n);
  return s;
}

ErrorPanel extract_balanced(const ErrorPanel& panel, const PeriodWindow& window,
                            const std::optional<std::vector<int>>& required_ids) {
  const auto& periods = panel.period_ids();
  if (window.last < window.first || window.first < periods.front() ||
      periods.back() < window.last)
    throw Error(Errc::range, "window " + window.first.str() + "-" + window.last.str() +
                                 " is not within the panel's periods");
  std::vector<std::size_t> cols;
  for (std::size_t j = 0; j < periods.size(); ++j)
    if (!(periods[j] < window.first) && !(window.last < periods[j])) cols.push_back(j);
  if (cols.empty()) throw Error(Errc::empty_result, "window contains no panel periods");

  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < panel.forecasters(); ++i) {
    if (required_ids && std::find(required_ids->begin(), required_ids->end(),
                                  panel.ids()[i]) == required_ids->end())
      continue;
    const bool full = std::all_of(cols.begin(), cols.end(),
                                  [&](std::size_t j) { return panel.present(i, j); });
    if (full) {
      rows.push_back(i);
    } else if (required_ids) {
      throw Error(Errc::empty_result, "forecaster " + std::to_string(panel.ids()[i]) +
                                          " is not fully present on the window");
    }
  }
  if (required_ids && rows.size() != required_ids->size())
    throw Error(Errc::empty_result, "some required forecaster ids are not in the panel");
  if (rows.empty())
    throw Error(Errc::empty_result, "no forecaster is fully present on the window");

  std::vector<std::pair<double, std::size_t>> order;
  for (auto i : rows) {
    double ss = 0.0;
    for (auto j : cols) ss += panel.value(i, j) * panel.value(i, j);
    order.emplace_back(ss / static_cast<double>(cols.size()), i);
  }
  std::stable_sort(order.begin(), order.end(), [&](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first < b.first;
    return panel.ids()[a.second] < panel.ids()[b.second];
  });

  std::vector<int> ids;
  std::vector<double> values;
  for (const auto& [var, i] : order) {
    ids.push_back(panel.ids()[i]);
    for (auto j : cols) values.push_back(panel.value(i, j));
  }
  std::vector<Quarter> kept;
  for (auto j : cols) kept.push_back(periods[j]);
  std::vector<std::uint8_t> mask(values.size(), 1);
  return ErrorPanel(std::move(ids), std::move(kept), std::move(values), std::move(mask),
                    panel.horizon(), panel.variable());
}

// ---------------------------------------------------------------------------
// Simulation

ErrorPanel simulate_equicorrelated(std::size_t n, std::size_t t, double rho, double sigma2,
                                   std::uint64_t seed) {
  if (n == 0 || t == 0) throw Error(Errc::domain, "N and T must be positive");
  if (!(sigma2 > 0.0)) throw Error(Errc::domain, "sigma^2 must be positive");
  const double lower = n > 1 ? -1.0 / static_cast<double>(n - 1) : -1.0;
  if (!(rho > lower && rho < 1.0))
    throw Error(Errc::domain, "rho = " + std::to_string(rho) + " outside (" +
                                  std::to_string(lower) +
                                  ", 1): the equicorrelation matrix is positive "
                                  "definite only on that interval");

  // Symmetric square root of R = (1-rho) I + rho 11':
  //   S = a I + b 11',  a = sqrt(1-rho),  b = (sqrt(1+(N-1)rho) - a) / N.
  const double nd = static_cast<double>(n);
  const double a = std::sqrt(1.0 - rho);
  const double b = (std::sqrt(1.0 + (nd - 1.0) * rho) - a) / nd;
  const double scale = std::sqrt(sigma2);

  std::vector<double> values(n * t);
  std::vector<double> z(n);
  for (std::size_t j = 0; j < t; ++j) {
    Stream stream(seed, j, 0x51u);
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      z[i] = stream.normal();
      total += z[i];
    }
    for (std::size_t i = 0; i < n; ++i) values[i * t + j] = scale * (a * z[i] + b * total);
  }
  std::vector<int> ids(n);
  std::iota(ids.begin(), ids.end(), 1);
  std::vector<Quarter> periods;
  for (std::size_t j = 0; j < t; ++j)
    periods.push_back(Quarter{2000, 1}.shifted(static_cast<std::int64_t>(j)));
  return ErrorPanel(std::move(ids), std::move(periods), std::move(values),
                    std::vector<std::uint8_t>(n * t, 1), 0, "simulated");
}

ErrorPanel simulate_factor(const FactorParams& params, std::size_t t, std::uint64_t seed) {
  params.validate();
  if (t == 0) throw Error(Errc::domain, "T must be positive");
  const std::size_t n = params.loadings.size();
  const double sd_v = std::sqrt(params.shock_variance);
  const double sd_z0 = std::sqrt(params.shock_variance / (1.0 - params.phi * params.phi));

  std::vector<double> values(n * t);
  double z = 0.0;
  for (std::size_t j = 0; j < t; ++j) {
    Stream factor_stream(seed, j, 0xf1u);
    z = j == 0 ? sd_z0 * factor_stream.normal() : params.phi * z + sd_v * factor_stream.normal();
    Stream idio_stream(seed, j, 0xf2u);
    for (std::size_t i = 0; i < n; ++i)
      values[i * t + j] =
          params.loadings[i] * z + std::sqrt(params.idio_variances[i]) * idio_stream.normal();
  }
  std::vector<int> ids(n);
  std::iota(ids.begin(), ids.end(), 1);
  std::vector<Quarter> periods;
  for (std::size_t j = 0; j < t; ++j)
    periods.push_back(Quarter{2000, 1}.shifted(static_cast<std::int64_t>(j)));
  return ErrorPanel(std::move(ids), std::move(periods), std::move(values),
                    std::vector<std::uint8_t>(n * t, 1), 0, "simulated");
}

CovarianceSummary sample_moments(const ErrorPanel& panel) {
  const std::size_t n = panel.forecasters();
  const std::size_t t = panel.periods();
  CovarianceSummary s;
  s.variances.assign(n, 0.0);
  s.variance_counts.assign(n, 0);
  s.covariances = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  s.pair_counts.setZero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));

  for (std::size_t i = 0; i < n; ++i) {
    const auto ii = static_cast<Eigen::Index>(i);
    for (std::size_t k = i; k < n; ++k) {
      const auto kk = static_cast<Eigen::Index>(k);
      double sum = 0.0;
      std::size_t count = 0;
      for (std::size_t j = 0; j < t; ++j)
        if (panel.present(i, j) && panel.present(k, j)) {
          sum += panel.value(i, j) * panel.value(k, j);
          ++count;
        }
      const double avg = count > 0 ? sum / static_cast<double>(count) : 0.0;
      s.covariances(ii, kk) = s.covariances(kk, ii) = avg;
      s.pair_counts(ii, kk) = s.pair_counts(kk, ii) = count;
    }
    s.variances[i] = s.covariances(ii, ii);
    s.variance_counts[i] = s.pair_counts(ii, ii);
  }
  return s;
}

}  // namespace crowdsig
