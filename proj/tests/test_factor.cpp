#include <catch_amalgamated.hpp>

#include <cmath>
#include <functional>

#include "crowdsig/error.hpp"
#include "crowdsig/factor.hpp"
#include "crowdsig/rng.hpp"

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

CovarianceSummary summary_from(const Eigen::MatrixXd& c) {
  CovarianceSummary m;
  const auto n = c.rows();
  for (Eigen::Index i = 0; i < n; ++i) m.variances.push_back(c(i, i));
  m.variance_counts.assign(static_cast<std::size_t>(n), 1);
  m.covariances = c;
  m.pair_counts = Eigen::Matrix<std::size_t, Eigen::Dynamic, Eigen::Dynamic>::Ones(n, n);
  return m;
}

FactorParams random_params(Stream& rng, std::size_t n) {
  FactorParams p;
  p.phi = 1.8 * rng.uniform_open() - 0.9;
  p.shock_variance = 0.1 + 2.0 * rng.uniform_open();
  for (std::size_t i = 0; i < n; ++i) {
    p.loadings.push_back(0.1 + 2.0 * rng.uniform_open());
    p.idio_variances.push_back(0.05 + 3.0 * rng.uniform_open());
  }
  return p;
}

}  // namespace

TEST_CASE("implied moments of the unit model", "[factor]") {
  const FactorParams p{{1.0, 1.0, 1.0}, 0.0, 1.0, {1.0, 1.0, 1.0}};
  const auto m = implied_moments(p);
  CHECK(m.factor_variance == 1.0);
  for (double v : m.variances) CHECK(v == 2.0);
  CHECK(m.correlations(0, 2) == Approx(0.5).epsilon(1e-15));
  CHECK(m.correlations(1, 1) == 1.0);
  CHECK(m.covariances(0, 1) == 1.0);
}

TEST_CASE("implied moments limits", "[factor]") {
  const auto none = implied_moments({{0.0, 0.0}, 0.5, 1.0, {2.0, 3.0}});
  CHECK(none.variances == std::vector<double>{2.0, 3.0});
  CHECK(none.correlations(0, 1) == 0.0);

  const auto pure = implied_moments({{1.0, 2.0}, 0.3, 1.0, {1e-12, 1e-12}});
  CHECK(pure.correlations(0, 1) == Approx(1.0).epsilon(1e-9));

  // var z = 1 / (1 - 0.64)
  const auto ar = implied_moments({{1.0}, 0.8, 1.0, {0.0}});
  CHECK(ar.factor_variance == Approx(1.0 / 0.36));

  CHECK(code_of([] { implied_moments({{1.0}, 1.0, 1.0, {1.0}}); }) == Errc::stationarity);
  CHECK(code_of([] { implied_moments({{1.0}, -1.2, 1.0, {1.0}}); }) == Errc::stationarity);
  CHECK(code_of([] { implied_moments({{1.0}, 0.0, 0.0, {1.0}}); }) == Errc::domain);
  CHECK(code_of([] { implied_moments({{1.0}, 0.0, 1.0, {-1.0}}); }) == Errc::domain);
}

TEST_CASE("implied moment invariants", "[factor][property]") {
  Stream rng(3);
  for (int trial = 0; trial < 200; ++trial) {
    const auto p = random_params(rng, 2 + rng.below(8));
    const auto m = implied_moments(p);
    const auto n = static_cast<Eigen::Index>(p.loadings.size());
    for (Eigen::Index i = 0; i < n; ++i) {
      CHECK(m.variances[static_cast<std::size_t>(i)] >= p.idio_variances[static_cast<std::size_t>(i)]);
      CHECK(m.correlations(i, i) == 1.0);
      for (Eigen::Index j = 0; j < n; ++j)
        if (i != j) {
          CHECK(m.correlations(i, j) >= 0.0);
          CHECK(m.correlations(i, j) < 1.0);
        }
    }

    // joint rescaling of loadings and idiosyncratic standard deviations
    const double c = 0.1 + 5.0 * rng.uniform_open();
    auto q = p;
    for (auto& d : q.loadings) d *= c;
    for (auto& w : q.idio_variances) w *= c * c;
    CHECK((implied_moments(q).correlations - m.correlations).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("restriction checks", "[factor]") {
  CHECK(check_restrictions({{1.5, 1.5, 1.5}, 0.2, 1.0, {0.7, 0.7, 0.7}}).strong);
  const auto weak = check_restrictions({{1.0, 2.0}, 0.0, 1.0, {1.0, 4.0}});
  CHECK(weak.weak);
  CHECK_FALSE(weak.strong);
  const auto neither = check_restrictions({{1.0, 2.0}, 0.0, 1.0, {1.0, 1.0}});
  CHECK_FALSE(neither.weak);
  CHECK_FALSE(neither.strong);
  CHECK(code_of([] { check_restrictions({{1.0, 0.0}, 0.0, 1.0, {1.0, 1.0}}); }) == Errc::domain);

  // descriptive tolerance
  const FactorParams near{{1.0, 1.01}, 0.0, 1.0, {1.0, 1.0}};
  CHECK_FALSE(check_restrictions(near).strong);
  CHECK(check_restrictions(near, 0.05).strong);
  CHECK(relative_spread({2.0, 1.0}) == 0.5);
  CHECK(relative_spread({0.0, 0.0}) == 0.0);
}

TEST_CASE("restrictions imply equicorrelation", "[factor][property]") {
  Stream rng(9);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 2 + rng.below(10);
    auto p = random_params(rng, n);

    // weak: sigma_wi^2 = r delta_i^2
    const double r = 0.1 + 2.0 * rng.uniform_open();
    for (std::size_t i = 0; i < n; ++i) p.idio_variances[i] = r * p.loadings[i] * p.loadings[i];
    const auto rw = check_restrictions(p);
    CHECK(rw.weak);
    const auto mw = implied_moments(p);
    for (Eigen::Index i = 0; i < static_cast<Eigen::Index>(n); ++i)
      for (Eigen::Index j = i + 1; j < static_cast<Eigen::Index>(n); ++j)
        CHECK(mw.correlations(i, j) == Approx(mw.correlations(0, 1)).epsilon(1e-12));

    // strong: common loading and common idiosyncratic variance
    std::fill(p.loadings.begin(), p.loadings.end(), p.loadings[0]);
    std::fill(p.idio_variances.begin(), p.idio_variances.end(), p.idio_variances[0]);
    const auto rs = check_restrictions(p);
    CHECK(rs.strong);
    CHECK(rs.weak);
    const auto ms = implied_moments(p);
    for (std::size_t i = 0; i < n; ++i) CHECK(ms.variances[i] == ms.variances[0]);
    for (Eigen::Index i = 0; i < static_cast<Eigen::Index>(n); ++i)
      for (Eigen::Index j = i + 1; j < static_cast<Eigen::Index>(n); ++j)
        CHECK(ms.correlations(i, j) == ms.correlations(0, 1));
  }
}

TEST_CASE("deviation bins", "[factor]") {
  CHECK(bin_for(0.0) == DeviationBin::under10);
  CHECK(bin_for(-2.2) == DeviationBin::under10);
  CHECK(bin_for(9.999) == DeviationBin::under10);
  CHECK(bin_for(10.0) == DeviationBin::b10to20);
  CHECK(bin_for(-15.0) == DeviationBin::b10to20);
  CHECK(bin_for(25.0) == DeviationBin::b20to30);
  CHECK(bin_for(30.0) == DeviationBin::over30);
  CHECK(bin_for(35.0) == DeviationBin::over30);
  CHECK(bin_for(-80.0) == DeviationBin::over30);
  CHECK(to_string(DeviationBin::b20to30) == "b20to30");
}

TEST_CASE("median convention", "[factor]") {
  CHECK(median({3.0, 1.0, 2.0}) == 2.0);
  CHECK(median({4.0, 1.0, 2.0, 3.0}) == 2.5);
  CHECK(code_of([] { median({}); }) == Errc::empty_result);
}

TEST_CASE("deviation grid", "[factor]") {
  Eigen::MatrixXd c(3, 3);
  c << 10.0, 2.0, 3.0,
       2.0, 9.78, 4.0,
       3.0, 4.0, 13.5;
  const auto g = deviation_grid(summary_from(c), {101, 102, 103});
  CHECK(g.median_variance == 10.0);
  CHECK(g.median_covariance == 3.0);
  CHECK(g.at(0, 0).deviation_pct == 0.0);
  CHECK(g.at(1, 1).deviation_pct == Approx(-2.2));
  CHECK(g.at(1, 1).bin == DeviationBin::under10);
  CHECK(g.at(2, 2).deviation_pct == Approx(35.0));
  CHECK(g.at(2, 2).bin == DeviationBin::over30);
  CHECK(g.at(0, 2).deviation_pct == 0.0);
  CHECK(g.at(0, 1).deviation_pct == Approx(-100.0 / 3.0));
  CHECK(g.at(1, 0).deviation_pct == g.at(0, 1).deviation_pct);
  CHECK(g.cells.size() == 9);

  Eigen::MatrixXd z(2, 2);
  z << 1.0, 0.0, 0.0, 1.0;
  CHECK(code_of([&] { deviation_grid(summary_from(z)); }) == Errc::degenerate);
  CHECK(code_of([&] { deviation_grid(summary_from(c), {1}); }) == Errc::schema);
}

TEST_CASE("deviation grid bins are scale invariant", "[factor][property]") {
  Stream rng(21);
  for (int trial = 0; trial < 100; ++trial) {
    const auto n = static_cast<Eigen::Index>(2 + rng.below(8));
    Eigen::MatrixXd a(n, n);
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = 0; j < n; ++j) a(i, j) = rng.normal();
    const Eigen::MatrixXd c = a * a.transpose() + 0.5 * Eigen::MatrixXd::Ones(n, n);
    const double s = 0.01 + 100.0 * rng.uniform_open();
    const auto g1 = deviation_grid(summary_from(c));
    const auto g2 = deviation_grid(summary_from(s * c));
    for (std::size_t k = 0; k < g1.cells.size(); ++k) {
      CHECK(g1.cells[k].deviation_pct == Approx(g2.cells[k].deviation_pct).margin(1e-9));
      // bins only flip for deviations sitting on a threshold up to rounding
      const double d = std::abs(g1.cells[k].deviation_pct);
      const bool on_edge = std::abs(d - 10) < 1e-9 || std::abs(d - 20) < 1e-9 ||
                           std::abs(d - 30) < 1e-9;
      if (!on_edge) CHECK(g1.cells[k].bin == g2.cells[k].bin);
    }
  }
}
