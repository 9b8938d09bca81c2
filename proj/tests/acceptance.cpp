// Acceptance suite: one PASS / FAIL / SKIP line per criterion, nonzero exit on
// any FAIL. Set CROWDSIG_SPF_DIR to a directory holding RGDP.csv, PGDP.csv,
// realized_RGDP.csv and realized_PGDP.csv to run the data-contingent check.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "crowdsig/equicorr.hpp"
#include "crowdsig/error.hpp"
#include "crowdsig/estimator.hpp"
#include "crowdsig/factor.hpp"
#include "crowdsig/panel.hpp"
#include "crowdsig/rng.hpp"
#include "crowdsig/sigplot.hpp"
#include "oracle.hpp"

using namespace crowdsig;

namespace {

enum class Outcome { pass, fail, skip };

struct Verdict {
  Outcome outcome = Outcome::pass;
  std::string detail;
};

int failures = 0;

void report(const std::string& name, const std::function<Verdict()>& check) {
  const auto start = std::chrono::steady_clock::now();
  Verdict v;
  try {
    v = check();
  } catch (const std::exception& e) {
    v = {Outcome::fail, std::string("exception: ") + e.what()};
  }
  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  const char* tag = v.outcome == Outcome::pass ? "PASS" : v.outcome == Outcome::fail ? "FAIL" : "SKIP";
  if (v.outcome == Outcome::fail) ++failures;
  std::printf("%s  %-28s %s (%.2fs)\n", tag, name.c_str(), v.detail.c_str(), secs);
  std::fflush(stdout);
}

std::string fmt(const char* f, double a, double b = 0.0) {
  char buf[160];
  std::snprintf(buf, sizeof buf, f, a, b);
  return buf;
}

double rel(double a, double b) { return std::abs(a - b) / std::max(std::abs(b), 1e-300); }

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

Verdict exact_identity() {
  const auto t0 = std::chrono::steady_clock::now();
  Stream rng(2024);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const int n = 2 + static_cast<int>(rng.below(7));
    const int t = 2 + static_cast<int>(rng.below(49));
    const auto panel = ErrorPanel::balanced(oracle::random_errors(n, t, trial, rng));
    const auto exact = mse_exact(panel, n);
    const auto closed = mse_closed_form(sample_moments(panel), n);
    for (int k = 1; k <= n; ++k) worst = std::max(worst, rel(exact.at(k), closed.at(k)));
  }
  const double secs = seconds_since(t0);
  const bool ok = worst <= 1e-12 && secs < 10.0;
  return {ok ? Outcome::pass : Outcome::fail,
          fmt("max rel dev %.2e (tol 1e-12), %.2fs (limit 10s)", worst, secs)};
}

Verdict mc_convergence() {
  const auto panel = simulate_equicorrelated(40, 160, 0.5, 1.0, 6);
  MonteCarloConfig cfg;
  cfg.replications = 30000;
  cfg.k_max = 20;
  cfg.threads = 1;
  const auto t0 = std::chrono::steady_clock::now();
  const auto mc = mse_monte_carlo(panel, cfg);
  const double secs = seconds_since(t0);
  const auto closed = mse_closed_form(sample_moments(panel), 20);
  double worst = 0.0;
  for (int k = 1; k <= 20; ++k) worst = std::max(worst, rel(mc.at(k), closed.at(k)));
  const bool ok = worst < 0.01 && secs < 60.0;
  return {ok ? Outcome::pass : Outcome::fail,
          fmt("max rel dev %.4f (tol 0.01), %.2fs single-threaded (limit 60s)", worst, secs)};
}

Verdict table_identities() {
  struct Row {
    int k;
    double rho;
    double expected;
  };
  const Row rows[] = {{5, 0.801, 0.841}, {15, 0.801, 0.815}, {5, 0.580, 0.664}, {15, 0.580, 0.608}};
  bool ok = true;
  std::string detail;
  for (const auto& r : rows) {
    const double got = model_mse_ratio(r.k, r.rho);
    const bool hit = std::abs(got - r.expected) <= 0.0005;
    ok = ok && hit;
    char buf[96];
    std::snprintf(buf, sizeof buf, "%sR(%d,%.3f)=%.6f vs %.3f%s", detail.empty() ? "" : "; ", r.k,
                  r.rho, got, r.expected, hit ? "" : " MISS");
    detail += buf;
  }
  return {ok ? Outcome::pass : Outcome::fail, detail + " (tol 0.0005)"};
}

Verdict dmse_ratio_exact() {
  Stream rng(77);
  double worst = 0.0;
  double k10 = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    const int n = 12 + static_cast<int>(rng.below(20));
    const auto panel = ErrorPanel::balanced(oracle::random_errors(n, 30, trial, rng));
    const auto dr = to_dmse(mse_closed_form(sample_moments(panel), n), true);
    for (const auto& p : dr.points)
      worst = std::max(worst, std::abs(p.value - 2.0 / (p.k * (p.k + 1.0))));
    k10 = dr.at(10);
  }
  const bool ok = worst < 1e-14 && std::abs(k10 - 0.0182) < 5e-5;
  return {ok ? Outcome::pass : Outcome::fail,
          fmt("max abs dev %.2e, DMSE_R(10) = %.6f", worst, k10)};
}

Verdict estimator_recovery() {
  double worst_rho = 0.0, worst_s2 = 0.0, worst_gap = 0.0;
  std::uint64_t seed = 300;
  for (double rho : {0.2, 0.5, 0.8})
    for (double s2 : {1.0, 18.6}) {
      const auto panel = simulate_equicorrelated(40, 10000, rho, s2, ++seed);
      const auto closed = closed_form_estimate(sample_moments(panel));
      const auto numeric = matching_estimate(mse_closed_form(sample_moments(panel), 20), 40);
      for (const auto& e : {closed, numeric}) {
        worst_rho = std::max(worst_rho, std::abs(e.rho - rho));
        worst_s2 = std::max(worst_s2, std::abs(e.sigma2 / s2 - 1.0));
      }
      worst_gap = std::max({worst_gap, std::abs(closed.rho - numeric.rho),
                            std::abs(closed.sigma2 - numeric.sigma2)});
    }
  const bool ok = worst_rho < 0.02 && worst_s2 < 0.03 && worst_gap < 1e-6;
  char buf[160];
  std::snprintf(buf, sizeof buf, "max |drho| %.4f (<0.02), max |s2 ratio-1| %.4f (<0.03), method gap %.1e (<1e-6)",
                worst_rho, worst_s2, worst_gap);
  return {ok ? Outcome::pass : Outcome::fail, buf};
}

Verdict weight_optimality() {
  double eq_dev = 0.0;
  for (std::size_t n = 2; n <= 30; ++n)
    for (double rho : {-0.5 / n, 0.0, 0.3, 0.9}) {
      const auto w = optimal_weights(build_equicorr_matrix(n, {rho, 2.5}));
      eq_dev = std::max(eq_dev, (w.array() - 1.0 / n).abs().maxCoeff());
    }

  Stream rng(55);
  double weak_dev = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 2 + rng.below(9);
    std::vector<double> sd(n);
    for (auto& s : sd) s = 0.3 + 2.5 * rng.uniform_open();
    const double lo = rho_lower_bound(n);
    const double rho = lo + (0.95 - lo) * (0.05 + 0.9 * rng.uniform_open());
    const auto a = weak_equicorr_weights(sd, rho);
    const auto b = optimal_weights(weak_equicorr_matrix(sd, rho));
    weak_dev = std::max(weak_dev, (a - b).cwiseAbs().maxCoeff());
  }

  std::size_t beaten = 0;
  for (int trial = 0; trial < 10; ++trial) {
    const int n = 2 + static_cast<int>(rng.below(8));
    const auto s = oracle::random_spd(n, rng);
    const auto w = optimal_weights(s);
    const double best = w.dot(s * w);
    for (int draw = 0; draw < 1000; ++draw) {
      Eigen::VectorXd v(n);
      for (int i = 0; i < n; ++i) v(i) = rng.normal();
      v /= v.sum();
      if (v.dot(s * v) < best * (1.0 - 1e-12)) ++beaten;
    }
  }
  const bool ok = eq_dev <= 1e-12 && weak_dev <= 1e-12 && beaten == 0;
  char buf[160];
  std::snprintf(buf, sizeof buf, "equal-weight dev %.1e, weak vs DRD dev %.1e (tol 1e-12), %zu of 10000 random draws beat w*",
                eq_dev, weak_dev, beaten);
  return {ok ? Outcome::pass : Outcome::fail, buf};
}

Verdict inverse_identity() {
  double worst = 0.0;
  for (std::size_t n = 2; n <= 50; ++n) {
    const double lo = rho_lower_bound(n);
    for (int g = 1; g < 20; ++g) {
      const double rho = lo + (0.99 - lo) * g / 20.0;
      const auto r = build_equicorr_matrix(n, {rho, 1.0});
      worst = std::max(worst, (r * invert_equicorr(n, rho) - Eigen::MatrixXd::Identity(n, n))
                                  .cwiseAbs()
                                  .maxCoeff());
    }
  }
  return {worst < 1e-12 ? Outcome::pass : Outcome::fail,
          fmt("max |R Rinv - I| %.2e over N=2..50 x 19 rho (tol 1e-12)", worst)};
}

Verdict zero_collapse() {
  bool exact = true;
  for (int k = 1; k <= 100; ++k)
    for (double s2 : {0.5, 1.0, 3.0, 18.6}) {
      exact = exact && model_mse(k, {0.0, s2}) == s2 / k;
      exact = exact && model_dmse(k, {0.0, s2}) == s2 / (k * (k + 1.0));
      exact = exact && model_mse_ratio(k, 0.0) == 1.0 / k;
    }
  return {exact ? Outcome::pass : Outcome::fail, "k = 1..100, four variances, bitwise equality"};
}

Verdict factor_restrictions() {
  // strong: common loading and idiosyncratic variance
  const FactorParams strong{{1.5, 1.5, 1.5, 1.5, 1.5}, 0.6, 0.8, {2.0, 2.0, 2.0, 2.0, 2.0}};
  // weak: idio / loading^2 common (= 0.5), loadings differ
  const FactorParams weak{{0.5, 1.0, 2.0, 3.0}, 0.3, 1.2, {0.125, 0.5, 2.0, 4.5}};
  const auto sim = simulate_factor(strong, 50, 9);  // exercises the generator on the same params
  const auto ms = implied_moments(strong);
  const auto mw = implied_moments(weak);

  auto off_diagonal_spread = [](const Eigen::MatrixXd& c) {
    double lo = 1e300, hi = -1e300;
    for (Eigen::Index i = 0; i < c.rows(); ++i)
      for (Eigen::Index j = 0; j < c.cols(); ++j)
        if (i != j) {
          lo = std::min(lo, c(i, j));
          hi = std::max(hi, c(i, j));
        }
    return hi - lo;
  };
  const double s_corr = off_diagonal_spread(ms.correlations);
  const double s_var = relative_spread(ms.variances);
  const double w_corr = off_diagonal_spread(mw.correlations);
  const double w_var = relative_spread(mw.variances);
  const auto cs = check_restrictions(strong);
  const auto cw = check_restrictions(weak);
  const bool ok = sim.forecasters() == 5 && s_corr == 0.0 && s_var == 0.0 && w_corr < 1e-15 &&
                  w_var > 0.1 && cs.strong && cs.weak && cw.weak && !cw.strong;
  char buf[200];
  std::snprintf(buf, sizeof buf,
                "strong: corr spread %.1e, var spread %.1e; weak: corr spread %.1e, var spread %.3f",
                s_corr, s_var, w_corr, w_var);
  return {ok ? Outcome::pass : Outcome::fail, buf};
}

// Published targets: sigma2, se_sigma2, rho, se_rho for h = 1..4.
struct TableColumn {
  double sigma2, se_sigma2, rho, se_rho;
};
const TableColumn kGrowth[4] = {{18.562, 0.606, 0.801, 0.036},
                                {21.170, 0.546, 0.843, 0.028},
                                {22.713, 0.589, 0.842, 0.028},
                                {23.275, 0.646, 0.831, 0.030}};
const TableColumn kInflation[4] = {{3.662, 0.253, 0.580, 0.082},
                                   {4.343, 0.255, 0.644, 0.068},
                                   {5.123, 0.295, 0.650, 0.066},
                                   {6.094, 0.370, 0.630, 0.071}};

Verdict spf_reproduction() {
  const char* root = std::getenv("CROWDSIG_SPF_DIR");
  if (!root || !*root) return {Outcome::skip, "CROWDSIG_SPF_DIR not set; SPF micro-data absent"};
  namespace fs = std::filesystem;
  const PeriodWindow sample{Quarter{1968, 4}, Quarter{2023, 2}};
  const std::size_t boot = std::getenv("CROWDSIG_SPF_BOOT")
                               ? std::strtoull(std::getenv("CROWDSIG_SPF_BOOT"), nullptr, 10)
                               : 1000;
  bool ok = true;
  std::string detail;
  for (const std::string var : {"RGDP", "PGDP"}) {
    std::ifstream lv(fs::path(root) / (var + ".csv"));
    std::ifstream rv(fs::path(root) / ("realized_" + var + ".csv"));
    if (!lv || !rv) return {Outcome::skip, "missing " + var + " level or realization file"};
    auto levels = load_spf_levels(lv, var);
    std::erase_if(levels.records, [&](const LevelRecord& r) {
      return r.survey < sample.first || sample.last < r.survey;
    });
    const auto realized = load_realizations(rv);
    const auto& table = var == "RGDP" ? kGrowth : kInflation;
    for (int h = 1; h <= 4; ++h) {
      const auto panel = compute_errors(levels_to_growth(levels, h), realized);
      std::size_t n = 0;
      for (std::size_t t = 0; t < panel.periods(); ++t) n = std::max(n, panel.respondents(t).size());
      MonteCarloConfig mc;
      mc.k_max = static_cast<int>(std::min<std::size_t>(20, n));
      auto est = matching_estimate(mse_monte_carlo(panel, mc), n);
      BootstrapConfig bc;
      bc.replicates = boot;
      bc.k_max = mc.k_max;
      bc.plot_builder = [mc](const ErrorPanel& p, int k) {
        auto cfg = mc;
        cfg.replications = 200;
        cfg.k_max = k;
        return mse_monte_carlo(p, cfg);
      };
      const auto se = bootstrap_se(panel, EstimatorMethod::numeric_profile, bc);
      const auto& want = table[h - 1];
      const bool hit = std::abs(est.rho - want.rho) <= 0.02 && rel(est.sigma2, want.sigma2) <= 0.02 &&
                       rel(se.se_rho, want.se_rho) <= 0.30 && rel(se.se_sigma2, want.se_sigma2) <= 0.30;
      ok = ok && hit;
      char buf[200];
      std::snprintf(buf, sizeof buf, "%s%s h=%d rho %.3f (%.3f) s2 %.3f (%.3f) se %.3f/%.3f%s",
                    detail.empty() ? "" : "; ", var.c_str(), h, est.rho, want.rho, est.sigma2,
                    want.sigma2, se.se_rho, se.se_sigma2, hit ? "" : " MISS");
      detail += buf;
    }
  }
  return {ok ? Outcome::pass : Outcome::fail, detail};
}

Verdict determinism() {
  const auto panel = simulate_equicorrelated(25, 80, 0.4, 2.0, 12);
  // unbalanced copy: drop a diagonal band of cells
  std::vector<std::uint8_t> mask(25 * 80, 1);
  std::vector<double> values(25 * 80);
  std::vector<int> ids;
  for (std::size_t i = 0; i < 25; ++i) {
    ids.push_back(static_cast<int>(i + 1));
    for (std::size_t t = 0; t < 80; ++t) {
      values[i * 80 + t] = panel.value(i, t);
      if ((i + t) % 7 == 0) mask[i * 80 + t] = 0;
    }
  }
  const ErrorPanel holes(ids, panel.period_ids(), values, mask);

  auto mc_run = [&](const ErrorPanel& p, unsigned threads, GroupMode mode) {
    MonteCarloConfig cfg;
    cfg.replications = 3000;
    cfg.threads = threads;
    cfg.group_mode = mode;
    cfg.membership_fraction = 0.8;
    return mse_monte_carlo(p, cfg);
  };
  auto dist_run = [&](unsigned threads) {
    MonteCarloConfig cfg;
    cfg.replications = 300;
    cfg.threads = threads;
    return squared_error_distribution(holes, cfg);
  };
  auto boot_run = [&](unsigned threads, EstimatorMethod m) {
    BootstrapConfig bc;
    bc.replicates = 200;
    bc.threads = threads;
    bc.block_length = 3;
    return bootstrap_se(panel, m, bc);
  };
  auto same_plot = [](const SignaturePlot& a, const SignaturePlot& b) {
    if (a.size() != b.size()) return false;
    for (std::size_t i = 0; i < a.size(); ++i)
      if (a.points[i].value != b.points[i].value || a.points[i].min != b.points[i].min ||
          a.points[i].max != b.points[i].max || a.points[i].excluded != b.points[i].excluded)
        return false;
    return true;
  };

  int comparisons = 0;
  bool ok = true;
  for (const ErrorPanel* p : {&panel, &holes})
    for (auto mode : {GroupMode::per_period, GroupMode::fixed_group}) {
      const auto ref = mc_run(*p, 1, mode);
      for (unsigned th : {1u, 2u, 4u, 7u}) {
        ok = ok && same_plot(ref, mc_run(*p, th, mode));
        ++comparisons;
      }
    }
  const auto dref = dist_run(1);
  for (unsigned th : {2u, 5u}) {
    const auto d = dist_run(th);
    bool same = d.scale == dref.scale && d.boxes.size() == dref.boxes.size();
    for (std::size_t i = 0; same && i < d.boxes.size(); ++i)
      same = d.boxes[i].median == dref.boxes[i].median && d.boxes[i].q1 == dref.boxes[i].q1 &&
             d.boxes[i].q3 == dref.boxes[i].q3 && d.boxes[i].outliers == dref.boxes[i].outliers;
    ok = ok && same;
    ++comparisons;
  }
  for (auto m : {EstimatorMethod::numeric_profile, EstimatorMethod::closed_form}) {
    const auto ref = boot_run(1, m);
    for (unsigned th : {1u, 3u, 4u}) {
      const auto b = boot_run(th, m);
      ok = ok && b.se_rho == ref.se_rho && b.se_sigma2 == ref.se_sigma2 &&
           b.rho_draws == ref.rho_draws && b.sigma2_draws == ref.sigma2_draws;
      ++comparisons;
    }
  }
  return {ok ? Outcome::pass : Outcome::fail,
          fmt("%.0f bitwise comparisons across thread counts 1..7", comparisons)};
}

}  // namespace

int main() {
  report("exact_closed_form_identity", exact_identity);
  report("monte_carlo_convergence", mc_convergence);
  report("ratio_formula_identities", table_identities);
  report("dmse_ratio_exactness", dmse_ratio_exact);
  report("estimator_recovery", estimator_recovery);
  report("weight_optimality", weight_optimality);
  report("inverse_identity", inverse_identity);
  report("zero_correlation_collapse", zero_collapse);
  report("factor_restrictions", factor_restrictions);
  report("spf_data_reproduction", spf_reproduction);
  report("determinism", determinism);
  std::printf("%d criterion(s) failed\n", failures);
  return failures == 0 ? 0 : 1;
}
