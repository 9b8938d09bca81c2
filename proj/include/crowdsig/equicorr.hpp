#pragma once

// Closed-form analytics of the equicorrelation model Sigma = sigma^2 R, where
// R has unit diagonal and common off-diagonal rho.
//
// Weak equicorrelation keeps the common correlation but lets variances
// differ. Written with the standard-deviation matrix D = diag(sigma_i) its
// covariance is Sigma = D R D, i.e. off-diagonal entries rho sigma_i sigma_j.
// (A display that puts a bare rho off the diagonal next to heterogeneous
// variances describes a different matrix; the weight formula below is the one
// that follows from D R D.)

#include <cstddef>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "crowdsig/sigplot.hpp"

namespace crowdsig {

struct EquicorrParams {
  double rho = 0.0;
  double sigma2 = 1.0;

  /// Throws Errc::domain unless sigma2 > 0 and rho in (-1/(N-1), 1).
  void validate(std::size_t n) const;
};

/// Open lower bound of the positive-definite rho interval, -1/(N-1).
double rho_lower_bound(std::size_t n);
bool rho_in_domain(double rho, std::size_t n) noexcept;

/// (sigma^2 / k)(1 + (k-1) rho)
double model_mse(int k, const EquicorrParams& params);
/// (1 + (k-1) rho) / k
double model_mse_ratio(int k, double rho);
/// sigma^2 (1 - rho) / (k (k+1))
double model_dmse(int k, const EquicorrParams& params);
/// 2 / (k (k+1))
double model_dmse_ratio(int k);

/// Model curve for k = 1..k_max with method tag "model".
SignaturePlot model_plot(const EquicorrParams& params, int k_max,
                         PlotKind kind = PlotKind::mse);

Eigen::MatrixXd build_equicorr_matrix(std::size_t n, const EquicorrParams& params);

/// R^{-1} = I/(1-rho) - rho 11' / ((1-rho)(1+(N-1)rho)).
Eigen::MatrixXd invert_equicorr(std::size_t n, double rho);

/// lambda* = Sigma^{-1} 1 / (1' Sigma^{-1} 1), solved by Cholesky.
/// Throws Errc::linalg when Sigma is not symmetric positive definite.
Eigen::VectorXd optimal_weights(const Eigen::MatrixXd& sigma);

/// Analytic optimal weights under weak equicorrelation (Sigma = D R D).
Eigen::VectorXd weak_equicorr_weights(std::span<const double> std_devs, double rho);

/// D R D for the given standard deviations.
Eigen::MatrixXd weak_equicorr_matrix(std::span<const double> std_devs, double rho);

}  // namespace crowdsig
