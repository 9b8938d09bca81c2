#include <catch_amalgamated.hpp>

#include <cmath>
#include <functional>

#include "crowdsig/equicorr.hpp"
#include "crowdsig/error.hpp"
#include "crowdsig/estimator.hpp"
#include "crowdsig/rng.hpp"
#include "oracle.hpp"

using namespace crowdsig;
using Catch::Approx;

namespace {

Errc code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected crowdsig::Error");
  return Errc::io;
}

SignaturePlot mse_plot(std::vector<std::pair<int, double>> pts) {
  SignaturePlot p;
  for (auto [k, v] : pts) p.points.push_back(SignaturePoint{k, v});
  return p;
}

ErrorPanel toy_panel() {
  Eigen::MatrixXd e(3, 2);
  e << 1, -1,
       1, 1,
       -1, 1;
  return ErrorPanel::balanced(e);
}

// Direct evaluation of the squared-residual mean, independent of the library.
double naive_q(const SignaturePlot& plot, double rho, double s2) {
  double s = 0.0;
  for (const auto& p : plot.points) {
    const double m = s2 / p.k * (1.0 + (p.k - 1.0) * rho);
    s += (p.value - m) * (p.value - m);
  }
  return s / static_cast<double>(plot.size());
}

}  // namespace

TEST_CASE("profile coefficients by hand", "[estimator]") {
  const auto plot = mse_plot({{1, 2.0}, {2, 1.5}});
  const auto c = ProfileCoefficients::from_plot(plot);
  CHECK(c.c1 == 2.75);
  CHECK(c.c2 == 1.25);
  CHECK(c.c3 == 0.25);
  CHECK(profile_sigma2(c, 0.5) == 2.0);

  const auto one = ProfileCoefficients::from_plot(mse_plot({{1, 3.0}}));
  CHECK(one.c3 == 0.0);
  CHECK(profile_sigma2(one, -0.9) == profile_sigma2(one, 0.9));

  CHECK(code_of([] { profile_sigma2({1.0, 1.0, 2.0}, -0.5); }) == Errc::domain);
}

TEST_CASE("profile sigma^2 decreases in rho", "[estimator][property]") {
  const ProfileCoefficients c{3.0, 1.5, 0.7};
  double prev = profile_sigma2(c, -0.9);
  for (int i = 1; i < 100; ++i) {
    const double next = profile_sigma2(c, -0.9 + 1.89 * i / 99.0);
    CHECK(next < prev);
    prev = next;
  }
}

TEST_CASE("objective Q", "[estimator]") {
  const auto plot = model_plot({0.6, 4.0}, 20);
  CHECK(objective_q(plot, 0.6, 4.0) == Approx(0.0).margin(1e-28));
  CHECK(objective_q(plot, 0.5, 3.0) == Approx(naive_q(plot, 0.5, 3.0)).epsilon(1e-14));
  CHECK(objective_q(plot, 0.5, 3.0) > 0.0);
  CHECK(code_of([&] { objective_q(plot, 1.0, 1.0); }) == Errc::domain);
  CHECK(code_of([&] { objective_q(plot, 0.2, 0.0); }) == Errc::domain);
  CHECK(code_of([&] { objective_q(plot, -0.2, 1.0); }) == Errc::domain);  // below -1/19
}

TEST_CASE("matching estimate recovers an exact model curve", "[estimator]") {
  auto plot = model_plot({0.6, 4.0}, 20);
  plot.kind = PlotKind::mse;
  const auto est = matching_estimate(plot, 20);
  CHECK(std::abs(est.rho - 0.6) < 1e-8);
  CHECK(std::abs(est.sigma2 - 4.0) < 1e-8);
  CHECK(est.valid);
  CHECK_FALSE(est.at_boundary);
  CHECK(est.q < 1e-20);

  for (double rho : {-0.02, 0.0, 0.2, 0.8, 0.95}) {
    const auto e = matching_estimate(model_plot({rho, 18.6}, 20), 40);
    CHECK(std::abs(e.rho - rho) < 1e-8);
    CHECK(std::abs(e.sigma2 - 18.6) < 1e-7);
  }
}

TEST_CASE("matching estimate input checks", "[estimator]") {
  CHECK(code_of([] { matching_estimate(mse_plot({{1, 1.0}}), 5); }) == Errc::degenerate);
  CHECK(code_of([] { matching_estimate(mse_plot({{1, 1.0}, {2, 0.0}}), 5); }) ==
        Errc::degenerate);
  CHECK(code_of([] { matching_estimate(mse_plot({{1, 1.0}, {2, 0.6}}), 1); }) ==
        Errc::degenerate);
  CHECK(code_of([] { matching_estimate(mse_plot({{1, 1.0}, {2, 0.6}, {3, 0.5}}), 2); }) ==
        Errc::range);
  auto r = to_ratio(mse_plot({{1, 1.0}, {2, 0.6}}));
  CHECK(code_of([&] { matching_estimate(r, 4); }) == Errc::unsupported);
}

TEST_CASE("boundary solutions are flagged", "[estimator]") {
  // MSE rising with k has its best fit at rho -> 1
  const auto est = matching_estimate(mse_plot({{1, 1.0}, {2, 1.2}, {3, 1.4}}), 3);
  CHECK(est.at_boundary);
  CHECK_FALSE(est.valid);
}

TEST_CASE("closed-form estimate", "[estimator]") {
  const auto toy = closed_form_estimate(sample_moments(toy_panel()));
  CHECK(toy.sigma2 == 1.0);
  CHECK(toy.rho == Approx(-1.0 / 3.0).epsilon(1e-15));
  CHECK(toy.valid);
  CHECK(toy.method == EstimatorMethod::closed_form);

  // two perfectly negatively correlated series: rho = -1 sits on the N = 2 bound
  Eigen::MatrixXd e(2, 4);
  e << 1, -1, 2, -2,
       -1, 1, -2, 2;
  const auto neg = closed_form_estimate(sample_moments(ErrorPanel::balanced(e)));
  CHECK(neg.rho == -1.0);
  CHECK(neg.sigma2 == 2.5);
  CHECK_FALSE(neg.valid);

  // exact equicorrelated moments
  CovarianceSummary m;
  m.variances.assign(4, 3.0);
  m.variance_counts.assign(4, 5);
  m.covariances = Eigen::MatrixXd::Constant(4, 4, 1.2);
  m.covariances.diagonal().setConstant(3.0);
  m.pair_counts = Eigen::Matrix<std::size_t, Eigen::Dynamic, Eigen::Dynamic>::Constant(4, 4, 5);
  const auto eq = closed_form_estimate(m);
  CHECK(eq.rho == Approx(0.4).epsilon(1e-15));
  CHECK(eq.sigma2 == 3.0);
  CHECK(eq.q < 1e-28);

  m.pair_counts(0, 3) = m.pair_counts(3, 0) = 0;
  CHECK(code_of([&] { closed_form_estimate(m); }) == Errc::incomplete_moments);
}

TEST_CASE("both estimators agree on balanced panels", "[estimator][property]") {
  Stream rng(404);
  for (int trial = 0; trial < 50; ++trial) {
    const int n = 3 + static_cast<int>(rng.below(25));
    const int t = 5 + static_cast<int>(rng.below(60));
    const auto panel = ErrorPanel::balanced(oracle::random_errors(n, t, trial, rng));
    const auto m = sample_moments(panel);
    const auto plot = mse_closed_form(m, n);
    const auto cf = closed_form_estimate(m);
    const auto num = matching_estimate(plot, static_cast<std::size_t>(n));
    CHECK(std::abs(num.rho - cf.rho) < 1e-6);
    CHECK(std::abs(num.sigma2 - cf.sigma2) < 1e-6 * std::max(1.0, cf.sigma2));
    const double scale = plot.at(1) * plot.at(1);
    CHECK(naive_q(plot, cf.rho, cf.sigma2) / scale < 1e-18);
  }
}

TEST_CASE("estimators are scale equivariant", "[estimator][property]") {
  Stream rng(55);
  for (int trial = 0; trial < 20; ++trial) {
    const int n = 3 + static_cast<int>(rng.below(10));
    const auto panel = ErrorPanel::balanced(oracle::random_errors(n, 30, trial, rng));
    const double c = 0.1 + 10.0 * rng.uniform_open();
    const auto scaled = panel.scaled(c);
    const auto a = closed_form_estimate(sample_moments(panel));
    const auto b = closed_form_estimate(sample_moments(scaled));
    CHECK(b.rho == Approx(a.rho).epsilon(1e-12).margin(1e-14));
    CHECK(b.sigma2 == Approx(c * c * a.sigma2).epsilon(1e-12));
    const auto na = matching_estimate(default_fit_plot(panel, n), n);
    const auto nb = matching_estimate(default_fit_plot(scaled, n), n);
    CHECK(std::abs(na.rho - nb.rho) < 1e-7);
    CHECK(nb.sigma2 == Approx(c * c * na.sigma2).epsilon(1e-6));
  }
}

TEST_CASE("matching estimate is the global profile minimizer", "[estimator][property]") {
  Stream rng(8);
  for (int trial = 0; trial < 5; ++trial) {
    const std::size_t n = 40;
    const auto panel = simulate_equicorrelated(n, 60, 0.3 + 0.1 * trial, 2.0, 100 + trial);
    MonteCarloConfig cfg;
    cfg.replications = 300;
    cfg.seed = 9 + trial;
    const auto plot = mse_monte_carlo(panel, cfg);  // noisy, not exactly on a model curve
    const auto est = matching_estimate(plot, n);
    const auto c = ProfileCoefficients::from_plot(plot);
    const double lo = rho_lower_bound(n);
    for (int i = 0; i < 1000; ++i) {
      const double rho = lo + (1.0 - lo) * rng.uniform_open();
      CHECK(est.q <= objective_q(plot, rho, profile_sigma2(c, rho)) * (1.0 + 1e-12));
    }
  }
}

TEST_CASE("matching estimate is consistent on simulated panels", "[estimator]") {
  const auto panel = simulate_equicorrelated(40, 10000, 0.5, 1.0, 77);
  const auto est = matching_estimate(default_fit_plot(panel, 20), 40);
  CHECK(std::abs(est.rho - 0.5) < 0.02);
  CHECK(std::abs(est.sigma2 - 1.0) < 0.03);
}

TEST_CASE("bootstrap standard errors", "[estimator][bootstrap]") {
  // all periods identical: every resample is the same panel
  Eigen::MatrixXd e(3, 6);
  for (int j = 0; j < 6; ++j) e.col(j) << 1.0, 0.5, -0.2;
  const auto flat = ErrorPanel::balanced(e);
  BootstrapConfig cfg;
  cfg.replicates = 50;
  for (auto method : {EstimatorMethod::closed_form, EstimatorMethod::numeric_profile}) {
    const auto r = bootstrap_se(flat, method, cfg);
    CHECK(r.se_rho == 0.0);
    CHECK(r.se_sigma2 == 0.0);
  }

  const auto panel = simulate_equicorrelated(10, 80, 0.4, 2.0, 3);
  cfg.replicates = 200;
  const auto a = bootstrap_se(panel, EstimatorMethod::closed_form, cfg);
  const auto b = bootstrap_se(panel, EstimatorMethod::closed_form, cfg);
  CHECK(a.se_rho == b.se_rho);
  CHECK(a.se_sigma2 == b.se_sigma2);
  CHECK(a.se_rho > 0.0);
  CHECK(a.valid_replicates + a.invalid_replicates == 200);

  cfg.threads = 1;
  const auto c1 = bootstrap_se(panel, EstimatorMethod::numeric_profile, cfg);
  cfg.threads = 5;
  const auto c5 = bootstrap_se(panel, EstimatorMethod::numeric_profile, cfg);
  CHECK(c1.se_rho == c5.se_rho);
  CHECK(c1.rho_draws == c5.rho_draws);
  // numeric fit on the closed-form plot reproduces the closed-form draws
  CHECK(std::abs(c1.se_rho - a.se_rho) < 1e-6);

  cfg.block_length = 4;
  const auto blocks = bootstrap_se(panel, EstimatorMethod::closed_form, cfg);
  CHECK(blocks.se_rho > 0.0);

  cfg.replicates = 1;
  CHECK(code_of([&] { bootstrap_se(panel, EstimatorMethod::closed_form, cfg); }) == Errc::range);
}

TEST_CASE("bootstrap standard error tracks the sampling spread", "[estimator][bootstrap]") {
  // compare with the spread of estimates over independent panels
  std::vector<double> rhos;
  for (std::uint64_t s = 0; s < 200; ++s)
    rhos.push_back(closed_form_estimate(sample_moments(simulate_equicorrelated(8, 120, 0.5, 1.0, 1000 + s))).rho);
  double mean = 0.0;
  for (double r : rhos) mean += r / rhos.size();
  double var = 0.0;
  for (double r : rhos) var += (r - mean) * (r - mean) / (rhos.size() - 1);
  const double truth = std::sqrt(var);

  BootstrapConfig cfg;
  cfg.replicates = 400;
  const auto b =
      bootstrap_se(simulate_equicorrelated(8, 120, 0.5, 1.0, 4242), EstimatorMethod::closed_form, cfg);
  CHECK(b.se_rho > 0.5 * truth);
  CHECK(b.se_rho < 2.0 * truth);
}

TEST_CASE("bootstrap with only invalid replicates errors", "[estimator][bootstrap]") {
  Eigen::MatrixXd e(2, 4);
  e << 1, -1, 2, -2,
       -1, 1, -2, 2;
  BootstrapConfig cfg;
  cfg.replicates = 20;
  CHECK(code_of([&] {
          bootstrap_se(ErrorPanel::balanced(e), EstimatorMethod::closed_form, cfg);
        }) == Errc::degenerate);
}
