#include "crowdsig/sigplot.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>

#include "crowdsig/error.hpp"
#include "crowdsig/parallel.hpp"
#include "crowdsig/rng.hpp"

namespace crowdsig {

std::string_view to_string(PlotKind kind) noexcept {
  switch (kind) {
    case PlotKind::mse: return "mse";
    case PlotKind::mse_ratio: return "mse_ratio";
    case PlotKind::dmse: return "dmse";
    case PlotKind::dmse_ratio: return "dmse_ratio";
  }
  return "?";
}

std::string_view to_string(PlotMethod method) noexcept {
  switch (method) {
    case PlotMethod::exact: return "exact";
    case PlotMethod::monte_carlo: return "monte_carlo";
    case PlotMethod::closed_form: return "closed_form";
    case PlotMethod::model: return "model";
  }
  return "?";
}

std::string_view to_string(GroupMode mode) noexcept {
  return mode == GroupMode::per_period ? "per_period" : "fixed_group";
}

PlotKind parse_plot_kind(std::string_view text) {
  for (auto kind : {PlotKind::mse, PlotKind::mse_ratio, PlotKind::dmse, PlotKind::dmse_ratio})
    if (to_string(kind) == text) return kind;
  throw Error(Errc::parse, "unknown plot kind '" + std::string(text) + "'");
}

PlotMethod parse_plot_method(std::string_view text) {
  for (auto m : {PlotMethod::exact, PlotMethod::monte_carlo, PlotMethod::closed_form,
                 PlotMethod::model})
    if (to_string(m) == text) return m;
  throw Error(Errc::parse, "unknown plot method '" + std::string(text) + "'");
}

GroupMode parse_group_mode(std::string_view text) {
  if (text == "per_period") return GroupMode::per_period;
  if (text == "fixed_group") return GroupMode::fixed_group;
  throw Error(Errc::parse, "unknown group mode '" + std::string(text) + "'");
}

double SignaturePlot::at(int k) const {
  for (const auto& p : points)
    if (p.k == k) return p.value;
  throw Error(Errc::range, "plot has no value at k = " + std::to_string(k));
}

std::vector<double> SignaturePlot::values() const {
  std::vector<double> out;
  out.reserve(points.size());
  for (const auto& p : points) out.push_back(p.value);
  return out;
}

void SignaturePlot::validate() const {
  if (points.empty()) throw Error(Errc::schema, "signature plot is empty");
  if (points.front().k < 1) throw Error(Errc::schema, "crowd sizes start at 1");
  for (std::size_t i = 1; i < points.size(); ++i)
    if (points[i].k <= points[i - 1].k)
      throw Error(Errc::schema, "crowd sizes must be strictly increasing");
  for (const auto& p : points) {
    if (kind == PlotKind::mse && p.value < 0.0)
      throw Error(Errc::schema, "negative MSE at k = " + std::to_string(p.k));
    if (p.min && *p.min > p.value) throw Error(Errc::schema, "min exceeds value");
    if (p.max && *p.max < p.value) throw Error(Errc::schema, "max below value");
  }
  if (kind == PlotKind::mse_ratio && points.front().k == 1 && points.front().value != 1.0)
    throw Error(Errc::schema, "ratio plot must equal 1 at k = 1");
}

namespace {

double binomial(std::size_t n, std::size_t k) {
  if (k > n) return 0.0;
  k = std::min(k, n - k);
  double r = 1.0;
  for (std::size_t i = 1; i <= k; ++i)
    r = r * static_cast<double>(n - k + i) / static_cast<double>(i);
  return std::round(r);
}

void check_k_max(int k_max, std::size_t n) {
  if (k_max < 1 || static_cast<std::size_t>(k_max) > n)
    throw Error(Errc::range, "k_max = " + std::to_string(k_max) + " must lie in 1.." +
                                 std::to_string(n));
}

// Depth-first enumeration of all k-subsets; `partial` holds the running
// per-period error sums for the current prefix.
struct Enumerator {
  const Eigen::MatrixXd& errors;
  std::size_t k;
  double sum = 0.0;
  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();

  void run(std::size_t start, std::size_t depth, const Eigen::RowVectorXd& partial) {
    const auto n = static_cast<std::size_t>(errors.rows());
    const double t = static_cast<double>(errors.cols());
    const double kk = static_cast<double>(k);
    for (std::size_t i = start; i + (k - depth) <= n; ++i) {
      Eigen::RowVectorXd next = partial + errors.row(static_cast<Eigen::Index>(i));
      if (depth + 1 == k) {
        const double mse = (next.array() / kk).square().sum() / t;
        sum += mse;
        lo = std::min(lo, mse);
        hi = std::max(hi, mse);
      } else {
        run(i + 1, depth + 1, next);
      }
    }
  }
};

}  // namespace

SignaturePlot mse_exact(const ErrorPanel& panel, int k_max) {
  if (!panel.is_balanced())
    throw Error(Errc::unsupported,
                "exact enumeration requires a balanced panel; use Monte Carlo instead");
  const std::size_t n = panel.forecasters();
  check_k_max(k_max, n);
  for (int k = 1; k <= k_max; ++k)
    if (binomial(n, static_cast<std::size_t>(k)) > kMaxExactGroups)
      throw Error(Errc::size_limit,
                  "C(" + std::to_string(n) + ", " + std::to_string(k) +
                      ") exceeds 1e6 groups; use Monte Carlo instead");

  const Eigen::MatrixXd errors = panel.matrix();
  SignaturePlot plot{PlotKind::mse, PlotMethod::exact, {}, false, panel.variable()};
  for (int k = 1; k <= k_max; ++k) {
    Enumerator e{errors, static_cast<std::size_t>(k)};
    e.run(0, 0, Eigen::RowVectorXd::Zero(errors.cols()));
    const double groups = binomial(n, static_cast<std::size_t>(k));
    SignaturePoint p;
    p.k = k;
    p.value = e.sum / groups;
    p.min = std::min(e.lo, p.value);
    p.max = std::max(e.hi, p.value);
    plot.points.push_back(p);
  }
  return plot;
}

namespace {

// Random-group engine shared by the Monte Carlo MSE and the distribution
// plot. For replication b it calls visit(t, means) once per period, where
// means[k-1] is the error of a uniformly random k-average for every feasible
// k. All k share one random permutation prefix per (replication, period) draw;
// each prefix of a uniform random permutation is itself a uniform k-subset.
class GroupSampler {
 public:
  GroupSampler(const ErrorPanel& panel, const MonteCarloConfig& config)
      : panel_(panel), config_(config) {
    if (config.replications < 1) throw Error(Errc::range, "Monte Carlo needs B >= 1");
    if (config.k_max < 1) throw Error(Errc::range, "k_max must be >= 1");
    const std::size_t t = panel.periods();
    const auto k_max = static_cast<std::size_t>(config.k_max);
    if (config.group_mode == GroupMode::per_period) {
      std::size_t widest = 0;
      for (std::size_t j = 0; j < t; ++j) {
        respondents_.push_back(panel.respondents(j));
        widest = std::max(widest, respondents_.back().size());
      }
      if (k_max > widest)
        throw Error(Errc::range, "k_max = " + std::to_string(k_max) +
                                     " exceeds the largest per-period respondent count " +
                                     std::to_string(widest));
    } else {
      if (!(config.membership_fraction > 0.0 && config.membership_fraction <= 1.0))
        throw Error(Errc::range, "membership fraction must lie in (0, 1]");
      const double need = config.membership_fraction * static_cast<double>(t);
      for (std::size_t i = 0; i < panel.forecasters(); ++i) {
        std::size_t count = 0;
        for (std::size_t j = 0; j < t; ++j) count += panel.present(i, j) ? 1 : 0;
        if (static_cast<double>(count) >= need - 1e-9) candidates_.push_back(i);
      }
      if (k_max > candidates_.size())
        throw Error(Errc::range, "k_max = " + std::to_string(k_max) + " exceeds the " +
                                     std::to_string(candidates_.size()) +
                                     " forecasters meeting the fixed-group membership rule");
    }
  }

  template <typename Visit>
  void replicate(std::size_t b, Visit&& visit) const {
    const std::size_t t = panel_.periods();
    const auto k_max = static_cast<std::size_t>(config_.k_max);
    std::vector<std::size_t> pool;
    std::vector<double> means(k_max);
    if (config_.group_mode == GroupMode::per_period) {
      for (std::size_t j = 0; j < t; ++j) {
        pool = respondents_[j];
        const std::size_t m = std::min(k_max, pool.size());
        Stream stream(config_.seed, b, j);
        double sum = 0.0;
        for (std::size_t k = 0; k < m; ++k) {
          const auto pick = k + stream.below(pool.size() - k);
          std::swap(pool[k], pool[pick]);
          sum += panel_.value(pool[k], j);
          means[k] = sum / static_cast<double>(k + 1);
        }
        visit(j, std::span<const double>(means.data(), m));
      }
    } else {
      pool = candidates_;
      Stream stream(config_.seed, b, ~std::uint64_t{0});
      for (std::size_t k = 0; k < k_max; ++k) {
        const auto pick = k + stream.below(pool.size() - k);
        std::swap(pool[k], pool[pick]);
      }
      for (std::size_t j = 0; j < t; ++j) {
        double sum = 0.0;
        std::size_t m = 0;
        for (; m < k_max && panel_.present(pool[m], j); ++m) {
          sum += panel_.value(pool[m], j);
          means[m] = sum / static_cast<double>(m + 1);
        }
        visit(j, std::span<const double>(means.data(), m));
      }
    }
  }

 private:
  const ErrorPanel& panel_;
  const MonteCarloConfig& config_;
  std::vector<std::vector<std::size_t>> respondents_;
  std::vector<std::size_t> candidates_;
};

}  // namespace

SignaturePlot mse_monte_carlo(const ErrorPanel& panel, const MonteCarloConfig& config) {
  const GroupSampler sampler(panel, config);
  const std::size_t b_count = config.replications;
  const auto k_max = static_cast<std::size_t>(config.k_max);
  const std::size_t t = panel.periods();

  // Per-replication MSE*_T(k); NaN marks a replication with no feasible period.
  std::vector<double> rep_mse(b_count * k_max, std::numeric_limits<double>::quiet_NaN());
  std::vector<std::size_t> rep_excluded(b_count * k_max, 0);

  parallel_for(b_count, config.threads, [&](std::size_t b) {
    std::vector<double> acc(k_max, 0.0);
    std::vector<std::size_t> used(k_max, 0);
    sampler.replicate(b, [&](std::size_t, std::span<const double> means) {
      for (std::size_t k = 0; k < means.size(); ++k) {
        acc[k] += means[k] * means[k];
        ++used[k];
      }
    });
    for (std::size_t k = 0; k < k_max; ++k) {
      rep_excluded[b * k_max + k] = t - used[k];
      if (used[k] > 0) rep_mse[b * k_max + k] = acc[k] / static_cast<double>(used[k]);
    }
  });

  SignaturePlot plot{PlotKind::mse, PlotMethod::monte_carlo, {}, !panel.is_balanced(),
                     panel.variable()};
  for (std::size_t k = 0; k < k_max; ++k) {
    double sum = 0.0;
    double lo = std::numeric_limits<double>::infinity();
    double hi = -std::numeric_limits<double>::infinity();
    std::size_t reps = 0;
    std::size_t excluded = 0;
    for (std::size_t b = 0; b < b_count; ++b) {
      excluded += rep_excluded[b * k_max + k];
      const double v = rep_mse[b * k_max + k];
      if (std::isnan(v)) continue;
      sum += v;
      lo = std::min(lo, v);
      hi = std::max(hi, v);
      ++reps;
    }
    if (reps == 0)
      throw Error(Errc::no_feasible_periods,
                  "no feasible period for k = " + std::to_string(k + 1));
    SignaturePoint p;
    p.k = static_cast<int>(k + 1);
    p.value = sum / static_cast<double>(reps);
    p.min = std::min(lo, p.value);
    p.max = std::max(hi, p.value);
    p.replications = reps;
    p.excluded = excluded;
    plot.points.push_back(p);
  }
  return plot;
}

SignaturePlot mse_closed_form(const CovarianceSummary& moments, int k_max) {
  const std::size_t n = moments.size();
  if (n == 0) throw Error(Errc::incomplete_moments, "no moments supplied");
  check_k_max(k_max, n);
  if (!moments.complete())
    throw Error(Errc::incomplete_moments,
                "some forecaster pairs never overlap; pairwise covariance missing");

  const double sigma_bar =
      std::accumulate(moments.variances.begin(), moments.variances.end(), 0.0) /
      static_cast<double>(n);
  double c_sum = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      c_sum += moments.covariances(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
  const double pairs = static_cast<double>(n) * static_cast<double>(n - 1) / 2.0;
  const double c_bar = n > 1 ? c_sum / pairs : 0.0;

  SignaturePlot plot{PlotKind::mse, PlotMethod::closed_form, {}, !moments.uniform_counts(), {}};
  for (int k = 1; k <= k_max; ++k) {
    // sigma_bar/k (1 + (k-1) c_bar/sigma_bar), written to survive sigma_bar = 0
    const double kd = static_cast<double>(k);
    plot.points.push_back(SignaturePoint{k, (sigma_bar + (kd - 1.0) * c_bar) / kd});
  }
  return plot;
}

SignaturePlot to_ratio(const SignaturePlot& plot) {
  if (plot.kind == PlotKind::mse_ratio || plot.kind == PlotKind::dmse_ratio) return plot;
  if (plot.kind != PlotKind::mse)
    throw Error(Errc::unsupported, "ratio transform expects an MSE plot");
  if (plot.points.empty() || plot.points.front().k != 1)
    throw Error(Errc::range, "ratio transform needs the k = 1 benchmark");
  const double base = plot.points.front().value;
  if (!(base > 0.0))
    throw Error(Errc::degenerate, "k = 1 benchmark MSE is zero; ratio undefined");
  SignaturePlot out = plot;
  out.kind = PlotKind::mse_ratio;
  for (auto& p : out.points) {
    p.value /= base;
    if (p.min) *p.min /= base;
    if (p.max) *p.max /= base;
  }
  out.points.front().value = 1.0;
  return out;
}

SignaturePlot to_dmse(const SignaturePlot& plot, bool as_ratio) {
  if (plot.kind != PlotKind::mse)
    throw Error(Errc::unsupported, "DMSE transform expects an MSE plot");
  if (plot.points.size() < 2)
    throw Error(Errc::range, "DMSE needs at least two consecutive crowd sizes");
  for (std::size_t i = 1; i < plot.points.size(); ++i)
    if (plot.points[i].k != plot.points[i - 1].k + 1)
      throw Error(Errc::range, "DMSE needs consecutive crowd sizes");

  SignaturePlot out{as_ratio ? PlotKind::dmse_ratio : PlotKind::dmse, plot.method, {},
                    plot.approximate, plot.label};
  for (std::size_t i = 0; i + 1 < plot.points.size(); ++i) {
    SignaturePoint p;
    p.k = plot.points[i].k;
    p.value = plot.points[i].value - plot.points[i + 1].value;
    p.replications = plot.points[i].replications;
    out.points.push_back(p);
  }
  if (as_ratio) {
    if (out.points.front().k != 1)
      throw Error(Errc::range, "DMSE ratio needs the k = 1 benchmark");
    const double base = out.points.front().value;
    if (base == 0.0)
      throw Error(Errc::degenerate, "DMSE(1) is zero; DMSE ratio undefined");
    for (auto& p : out.points) p.value /= base;
    out.points.front().value = 1.0;
  }
  return out;
}

double quantile_sorted(std::span<const double> sorted, double p) {
  if (sorted.empty()) throw Error(Errc::empty_result, "quantile of an empty sample");
  if (sorted.size() == 1) return sorted.front();
  const double h = p * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(h));
  if (lo + 1 >= sorted.size()) return sorted.back();
  const double frac = h - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[lo + 1] - sorted[lo]);
}

BoxStats box_stats(std::vector<double> sample, int k) {
  if (sample.empty()) throw Error(Errc::empty_result, "box statistics of an empty sample");
  std::sort(sample.begin(), sample.end());
  BoxStats s;
  s.k = k;
  s.count = sample.size();
  s.q1 = quantile_sorted(sample, 0.25);
  s.median = quantile_sorted(sample, 0.5);
  s.q3 = quantile_sorted(sample, 0.75);
  const double iqr = s.q3 - s.q1;
  const double lo_fence = s.q1 - 1.5 * iqr;
  const double hi_fence = s.q3 + 1.5 * iqr;
  // whiskers sit on the most extreme observations inside the fences
  const auto first_in = std::lower_bound(sample.begin(), sample.end(), lo_fence);
  const auto last_in = std::upper_bound(sample.begin(), sample.end(), hi_fence);
  s.lower_whisker = std::min(*first_in, s.q1);
  s.upper_whisker = std::max(*std::prev(last_in), s.q3);
  s.outliers.assign(sample.begin(), first_in);
  s.outliers.insert(s.outliers.end(), last_in, sample.end());
  return s;
}

DistributionPlot squared_error_distribution(const ErrorPanel& panel,
                                            const MonteCarloConfig& config) {
  const GroupSampler sampler(panel, config);
  const std::size_t b_count = config.replications;
  const std::size_t t = panel.periods();
  const auto k_max = static_cast<std::size_t>(config.k_max);

  // Pooled sample for a batch of crowd sizes at a time, bounded in memory.
  constexpr std::size_t kBudget = std::size_t{1} << 25;  // doubles
  const std::size_t per_k = b_count * t;
  const std::size_t batch = std::max<std::size_t>(1, kBudget / std::max<std::size_t>(per_k, 1));

  DistributionPlot out;
  out.label = panel.variable();
  for (std::size_t k0 = 0; k0 < k_max; k0 += batch) {
    const std::size_t k1 = std::min(k_max, k0 + batch);
    const double nan = std::numeric_limits<double>::quiet_NaN();
    std::vector<std::vector<double>> pooled(k1 - k0, std::vector<double>(per_k, nan));
    parallel_for(b_count, config.threads, [&](std::size_t b) {
      sampler.replicate(b, [&](std::size_t j, std::span<const double> means) {
        for (std::size_t k = k0; k < std::min(k1, means.size()); ++k)
          pooled[k - k0][b * t + j] = means[k] * means[k];
      });
    });
    for (std::size_t k = k0; k < k1; ++k) {
      auto& sample = pooled[k - k0];
      std::erase_if(sample, [](double v) { return std::isnan(v); });
      if (sample.empty())
        throw Error(Errc::no_feasible_periods,
                    "no feasible period for k = " + std::to_string(k + 1));
      out.boxes.push_back(box_stats(std::move(sample), static_cast<int>(k + 1)));
    }
  }

  out.scale = out.boxes.front().median;
  if (!(out.scale > 0.0))
    throw Error(Errc::degenerate, "median squared error at k = 1 is zero; cannot scale");
  for (auto& box : out.boxes) {
    box.q1 /= out.scale;
    box.median /= out.scale;
    box.q3 /= out.scale;
    box.lower_whisker /= out.scale;
    box.upper_whisker /= out.scale;
    for (auto& v : box.outliers) v /= out.scale;
  }
  out.boxes.front().median = 1.0;
  return out;
}

}  // namespace crowdsig
