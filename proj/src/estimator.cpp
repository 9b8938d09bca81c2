#include "crowdsig/estimator.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "crowdsig/equicorr.hpp"
#include "crowdsig/error.hpp"
#include "crowdsig/parallel.hpp"
#include "crowdsig/rng.hpp"

namespace crowdsig {

std::string_view to_string(EstimatorMethod method) noexcept {
  return method == EstimatorMethod::numeric_profile ? "numeric_profile" : "closed_form";
}

EstimatorMethod parse_estimator_method(std::string_view text) {
  if (text == "numeric_profile" || text == "numeric") return EstimatorMethod::numeric_profile;
  if (text == "closed_form") return EstimatorMethod::closed_form;
  throw Error(Errc::parse, "unknown estimator '" + std::string(text) + "'");
}

ProfileCoefficients ProfileCoefficients::from_plot(const SignaturePlot& plot) {
  ProfileCoefficients c;
  for (const auto& p : plot.points) {
    const double k = p.k;
    c.c1 += p.value / k;
    c.c2 += 1.0 / (k * k);
    c.c3 += (k - 1.0) / (k * k);
  }
  return c;
}

namespace {

void check_mse_plot(const SignaturePlot& plot) {
  if (plot.kind != PlotKind::mse)
    throw Error(Errc::unsupported, "the matching estimator fits MSE signature plots");
  if (plot.points.empty()) throw Error(Errc::degenerate, "signature plot is empty");
}

// Sum of squared residuals / count, without domain checks.
double raw_q(const SignaturePlot& plot, double rho, double sigma2) {
  double ss = 0.0;
  for (const auto& p : plot.points) {
    const double k = p.k;
    const double r = p.value - sigma2 * (1.0 + (k - 1.0) * rho) / k;
    ss += r * r;
  }
  return ss / static_cast<double>(plot.points.size());
}

// d/d rho of Q(rho, profile_sigma2(rho)).
double profile_slope(const SignaturePlot& plot, const ProfileCoefficients& c, double rho) {
  const double denom = c.c2 + c.c3 * rho;
  const double s = c.c1 / denom;
  const double ds = -c.c1 * c.c3 / (denom * denom);
  double g = 0.0;
  for (const auto& p : plot.points) {
    const double k = p.k;
    const double a = (1.0 + (k - 1.0) * rho) / k;
    const double da = (k - 1.0) / k;
    const double r = p.value - s * a;
    g -= r * (ds * a + s * da);
  }
  return 2.0 * g / static_cast<double>(plot.points.size());
}

}  // namespace

double objective_q(const SignaturePlot& plot, double rho, double sigma2) {
  check_mse_plot(plot);
  if (!(sigma2 > 0.0)) throw Error(Errc::domain, "sigma^2 must be positive");
  if (!(rho < 1.0)) throw Error(Errc::domain, "rho must be below 1");
  const int k_top = plot.points.back().k;
  if (!(rho > rho_lower_bound(static_cast<std::size_t>(std::max(k_top, 2)))))
    throw Error(Errc::domain, "rho outside the positive-definite interval");
  return raw_q(plot, rho, sigma2);
}

double profile_sigma2(const ProfileCoefficients& coeffs, double rho) {
  const double denom = coeffs.c2 + coeffs.c3 * rho;
  if (!(denom > 0.0))
    throw Error(Errc::domain, "profile relation undefined: c2 + c3 rho <= 0");
  return coeffs.c1 / denom;
}

double profile_objective(const SignaturePlot& plot, const ProfileCoefficients& coeffs,
                         double rho) {
  return raw_q(plot, rho, profile_sigma2(coeffs, rho));
}

MatchEstimate matching_estimate(const SignaturePlot& plot, std::size_t n) {
  check_mse_plot(plot);
  plot.validate();
  if (n < 2) throw Error(Errc::degenerate, "matching needs N >= 2");
  if (plot.points.size() < 2)
    throw Error(Errc::degenerate, "matching needs at least two crowd sizes; rho is unidentified");
  if (static_cast<std::size_t>(plot.points.back().k) > n)
    throw Error(Errc::range, "plot crowd sizes exceed N");
  for (const auto& p : plot.points)
    if (!(p.value > 0.0))
      throw Error(Errc::degenerate, "signature plot values must be positive");

  const auto coeffs = ProfileCoefficients::from_plot(plot);
  constexpr double kEps = 1e-9;
  const double lo = rho_lower_bound(n) + kEps;
  const double hi = 1.0 - kEps;
  auto q = [&](double r) { return profile_objective(plot, coeffs, r); };

  // Coarse grid guards against multiple local minima.
  constexpr int kGrid = 200;
  int best = 0;
  double best_q = std::numeric_limits<double>::infinity();
  for (int i = 0; i <= kGrid; ++i) {
    const double r = lo + (hi - lo) * i / kGrid;
    const double v = q(r);
    if (v < best_q) {
      best_q = v;
      best = i;
    }
  }
  double a = lo + (hi - lo) * std::max(best - 1, 0) / kGrid;
  double b = lo + (hi - lo) * std::min(best + 1, kGrid) / kGrid;

  // Golden-section refinement.
  const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
  double x1 = b - inv_phi * (b - a);
  double x2 = a + inv_phi * (b - a);
  double f1 = q(x1);
  double f2 = q(x2);
  for (int it = 0; it < 200 && (b - a) > 1e-12; ++it) {
    if (f1 <= f2) {
      b = x2;
      x2 = x1;
      f2 = f1;
      x1 = b - inv_phi * (b - a);
      f1 = q(x1);
    } else {
      a = x1;
      x1 = x2;
      f1 = f2;
      x2 = a + inv_phi * (b - a);
      f2 = q(x2);
    }
  }
  double rho = f1 <= f2 ? x1 : x2;

  // Bisection on the slope sign once the flat bottom limits golden section.
  constexpr double kWidth = 1e-8;
  double left = std::max(lo, rho - kWidth);
  double right = std::min(hi, rho + kWidth);
  double g_left = profile_slope(plot, coeffs, left);
  const double g_right = profile_slope(plot, coeffs, right);
  if (g_left < 0.0 && g_right > 0.0) {
    for (int it = 0; it < 100 && right - left > 1e-15; ++it) {
      const double mid = 0.5 * (left + right);
      const double g = profile_slope(plot, coeffs, mid);
      if (g == 0.0) {
        left = right = mid;
        break;
      }
      if ((g < 0.0) == (g_left < 0.0)) {
        left = mid;
        g_left = g;
      } else {
        right = mid;
      }
    }
    const double candidate = 0.5 * (left + right);
    if (q(candidate) <= q(rho)) rho = candidate;
  }

  MatchEstimate est;
  est.method = EstimatorMethod::numeric_profile;
  est.n = n;
  est.rho = rho;
  est.sigma2 = profile_sigma2(coeffs, rho);
  est.q = q(rho);
  const double edge = 1e-7;
  est.at_boundary = (rho - lo) < edge || (hi - rho) < edge;
  est.valid = !est.at_boundary && rho_in_domain(rho, n) && est.sigma2 > 0.0;
  return est;
}

MatchEstimate closed_form_estimate(const CovarianceSummary& moments) {
  const std::size_t n = moments.size();
  if (n < 2) throw Error(Errc::degenerate, "closed-form estimate needs N >= 2");
  if (!moments.complete())
    throw Error(Errc::incomplete_moments,
                "some forecaster pairs never overlap; pairwise covariance missing");
  const double sigma2 =
      std::accumulate(moments.variances.begin(), moments.variances.end(), 0.0) /
      static_cast<double>(n);
  if (!(sigma2 > 0.0)) throw Error(Errc::degenerate, "mean error variance is zero");
  double c_sum = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      c_sum += moments.covariances(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
  const double c_bar = c_sum / (static_cast<double>(n) * static_cast<double>(n - 1) / 2.0);

  MatchEstimate est;
  est.method = EstimatorMethod::closed_form;
  est.n = n;
  est.sigma2 = sigma2;
  est.rho = c_bar / sigma2;
  est.valid = rho_in_domain(est.rho, n);
  est.q = raw_q(mse_closed_form(moments, static_cast<int>(n)), est.rho, est.sigma2);
  return est;
}

SignaturePlot default_fit_plot(const ErrorPanel& panel, int k_max) {
  const int top = std::min<int>(k_max, static_cast<int>(panel.forecasters()));
  auto plot = mse_closed_form(sample_moments(panel), top);
  plot.label = panel.variable();
  return plot;
}

BootstrapResult bootstrap_se(const ErrorPanel& panel, EstimatorMethod method,
                             const BootstrapConfig& config) {
  const std::size_t t = panel.periods();
  if (config.replicates < 2) throw Error(Errc::range, "bootstrap needs B_boot >= 2");
  if (t < 2) throw Error(Errc::range, "bootstrap needs T >= 2");
  if (config.block_length < 1 || config.block_length > t)
    throw Error(Errc::range, "block length must lie in 1..T");

  const std::size_t reps = config.replicates;
  const double nan = std::numeric_limits<double>::quiet_NaN();
  std::vector<double> rho(reps, nan);
  std::vector<double> sigma2(reps, nan);
  const PlotBuilder builder = config.plot_builder ? config.plot_builder : default_fit_plot;

  parallel_for(reps, config.threads, [&](std::size_t r) {
    Stream stream(config.seed, r, 0xb007u);
    std::vector<std::size_t> cols;
    cols.reserve(t);
    const std::size_t len = config.block_length;
    while (cols.size() < t) {
      const std::size_t start = stream.below(t - len + 1);
      for (std::size_t j = 0; j < len && cols.size() < t; ++j) cols.push_back(start + j);
    }
    try {
      const ErrorPanel sample = panel.resample_periods(cols);
      MatchEstimate est;
      if (method == EstimatorMethod::closed_form) {
        est = closed_form_estimate(sample_moments(sample));
      } else {
        est = matching_estimate(builder(sample, config.k_max), sample.forecasters());
      }
      if (est.valid) {
        rho[r] = est.rho;
        sigma2[r] = est.sigma2;
      }
    } catch (const Error&) {
      // counted as invalid below
    }
  });

  BootstrapResult out;
  // Welford: identical draws give an exact zero.
  double m_rho = 0.0, s_rho = 0.0, m_sig = 0.0, s_sig = 0.0;
  for (std::size_t r = 0; r < reps; ++r) {
    if (std::isnan(rho[r])) {
      ++out.invalid_replicates;
      continue;
    }
    ++out.valid_replicates;
    out.rho_draws.push_back(rho[r]);
    out.sigma2_draws.push_back(sigma2[r]);
    const double count = static_cast<double>(out.valid_replicates);
    const double d_rho = rho[r] - m_rho;
    m_rho += d_rho / count;
    s_rho += d_rho * (rho[r] - m_rho);
    const double d_sig = sigma2[r] - m_sig;
    m_sig += d_sig / count;
    s_sig += d_sig * (sigma2[r] - m_sig);
  }
  if (out.valid_replicates == 0)
    throw Error(Errc::degenerate, "every bootstrap replicate was invalid");
  if (out.valid_replicates > 1) {
    const double dof = static_cast<double>(out.valid_replicates - 1);
    out.se_rho = std::sqrt(s_rho / dof);
    out.se_sigma2 = std::sqrt(s_sig / dof);
  }
  return out;
}

}  // namespace crowdsig
