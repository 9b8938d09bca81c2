#include "crowdsig/equicorr.hpp"

#include <cmath>
#include <string>

#include <Eigen/Cholesky>

#include "crowdsig/error.hpp"

namespace crowdsig {

double rho_lower_bound(std::size_t n) {
  if (n <= 1) return -1.0;
  return -1.0 / static_cast<double>(n - 1);
}

bool rho_in_domain(double rho, std::size_t n) noexcept {
  const double lower = n <= 1 ? -1.0 : -1.0 / static_cast<double>(n - 1);
  return rho > lower && rho < 1.0;
}

void EquicorrParams::validate(std::size_t n) const {
  if (!(sigma2 > 0.0)) throw Error(Errc::domain, "sigma^2 must be positive");
  if (!rho_in_domain(rho, n))
    throw Error(Errc::domain, "rho = " + std::to_string(rho) + " outside (" +
                                  std::to_string(rho_lower_bound(n)) + ", 1) for N = " +
                                  std::to_string(n) +
                                  "; R is positive definite only on that interval");
}

namespace {
void check_k(int k) {
  if (k < 1) throw Error(Errc::range, "crowd size k must be >= 1");
}
}  // namespace

double model_mse(int k, const EquicorrParams& params) {
  check_k(k);
  if (!(params.sigma2 > 0.0) || !(params.rho < 1.0))
    throw Error(Errc::domain, "model MSE needs sigma^2 > 0 and rho < 1");
  const double kd = k;
  return params.sigma2 / kd * (1.0 + (kd - 1.0) * params.rho);
}

double model_mse_ratio(int k, double rho) {
  check_k(k);
  if (!(rho < 1.0)) throw Error(Errc::domain, "ratio curve needs rho < 1");
  const double kd = k;
  return (1.0 + (kd - 1.0) * rho) / kd;
}

double model_dmse(int k, const EquicorrParams& params) {
  check_k(k);
  const double kd = k;
  return params.sigma2 * (1.0 - params.rho) / (kd * (kd + 1.0));
}

double model_dmse_ratio(int k) {
  check_k(k);
  const double kd = k;
  return 2.0 / (kd * (kd + 1.0));
}

SignaturePlot model_plot(const EquicorrParams& params, int k_max, PlotKind kind) {
  if (k_max < 1) throw Error(Errc::range, "k_max must be >= 1");
  SignaturePlot plot{kind, PlotMethod::model, {}, false, {}};
  const int last = (kind == PlotKind::dmse || kind == PlotKind::dmse_ratio) ? k_max - 1 : k_max;
  for (int k = 1; k <= last; ++k) {
    double v = 0.0;
    switch (kind) {
      case PlotKind::mse: v = model_mse(k, params); break;
      case PlotKind::mse_ratio: v = model_mse_ratio(k, params.rho); break;
      case PlotKind::dmse: v = model_dmse(k, params); break;
      case PlotKind::dmse_ratio: v = model_dmse_ratio(k); break;
    }
    plot.points.push_back(SignaturePoint{k, v});
  }
  return plot;
}

Eigen::MatrixXd build_equicorr_matrix(std::size_t n, const EquicorrParams& params) {
  params.validate(n);
  const auto nn = static_cast<Eigen::Index>(n);
  Eigen::MatrixXd m = Eigen::MatrixXd::Constant(nn, nn, params.rho * params.sigma2);
  m.diagonal().setConstant(params.sigma2);
  return m;
}

Eigen::MatrixXd invert_equicorr(std::size_t n, double rho) {
  if (n == 0) throw Error(Errc::domain, "dimension must be positive");
  if (!rho_in_domain(rho, n))
    throw Error(Errc::domain, "rho = " + std::to_string(rho) + " outside (" +
                                  std::to_string(rho_lower_bound(n)) + ", 1)");
  const auto nn = static_cast<Eigen::Index>(n);
  const double nd = static_cast<double>(n);
  const double off = -rho / ((1.0 - rho) * (1.0 + (nd - 1.0) * rho));
  Eigen::MatrixXd inv = Eigen::MatrixXd::Constant(nn, nn, off);
  inv.diagonal().array() += 1.0 / (1.0 - rho);
  return inv;
}

Eigen::VectorXd optimal_weights(const Eigen::MatrixXd& sigma) {
  if (sigma.rows() == 0 || sigma.rows() != sigma.cols())
    throw Error(Errc::linalg, "covariance matrix must be square and nonempty");
  const double scale = sigma.cwiseAbs().maxCoeff();
  if (!((sigma - sigma.transpose()).cwiseAbs().maxCoeff() <= 1e-12 * scale))
    throw Error(Errc::linalg, "covariance matrix is not symmetric");
  Eigen::LLT<Eigen::MatrixXd> llt(sigma);
  if (llt.info() != Eigen::Success)
    throw Error(Errc::linalg, "covariance matrix is not positive definite");
  const Eigen::VectorXd x = llt.solve(Eigen::VectorXd::Ones(sigma.rows()));
  const double denom = x.sum();
  if (!(denom > 0.0) || !x.allFinite())
    throw Error(Errc::linalg, "covariance matrix is numerically singular");
  return x / denom;
}

Eigen::MatrixXd weak_equicorr_matrix(std::span<const double> std_devs, double rho) {
  const std::size_t n = std_devs.size();
  if (n == 0) throw Error(Errc::domain, "need at least one standard deviation");
  if (!rho_in_domain(rho, n))
    throw Error(Errc::domain, "rho = " + std::to_string(rho) + " outside (" +
                                  std::to_string(rho_lower_bound(n)) + ", 1)");
  const auto nn = static_cast<Eigen::Index>(n);
  Eigen::MatrixXd m(nn, nn);
  for (Eigen::Index i = 0; i < nn; ++i)
    for (Eigen::Index j = 0; j < nn; ++j)
      m(i, j) = (i == j ? 1.0 : rho) * std_devs[static_cast<std::size_t>(i)] *
                std_devs[static_cast<std::size_t>(j)];
  return m;
}

Eigen::VectorXd weak_equicorr_weights(std::span<const double> std_devs, double rho) {
  const std::size_t n = std_devs.size();
  if (n == 0) throw Error(Errc::domain, "need at least one standard deviation");
  for (double s : std_devs)
    if (!(s > 0.0)) throw Error(Errc::domain, "standard deviations must be positive");
  if (!rho_in_domain(rho, n))
    throw Error(Errc::domain, "rho = " + std::to_string(rho) + " outside (" +
                                  std::to_string(rho_lower_bound(n)) + ", 1)");

  // lambda_i ∝ (1 + rho(N-2)) / sigma_i^2 - rho / sigma_i * sum_{j != i} 1/sigma_j
  const double nd = static_cast<double>(n);
  double inv_sum = 0.0;
  for (double s : std_devs) inv_sum += 1.0 / s;
  Eigen::VectorXd w(static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) {
    const double inv = 1.0 / std_devs[i];
    w(static_cast<Eigen::Index>(i)) =
        (1.0 + rho * (nd - 2.0)) * inv * inv - rho * inv * (inv_sum - inv);
  }
  return w / w.sum();
}

}  // namespace crowdsig
