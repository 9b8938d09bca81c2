#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <string_view>
#include <vector>

#include "crowdsig/panel.hpp"
#include "crowdsig/sigplot.hpp"

namespace crowdsig {

enum class EstimatorMethod { numeric_profile, closed_form };

std::string_view to_string(EstimatorMethod method) noexcept;
EstimatorMethod parse_estimator_method(std::string_view text);

struct MatchEstimate {
  double rho = 0.0;
  double sigma2 = 0.0;
  double q = 0.0;  // objective at the estimate
  EstimatorMethod method = EstimatorMethod::numeric_profile;
  std::size_t n = 0;       // cross-section size defining the rho domain
  bool valid = false;      // rho strictly inside (-1/(N-1), 1) and sigma2 > 0
  bool at_boundary = false;
  std::optional<double> se_rho;
  std::optional<double> se_sigma2;
  std::size_t invalid_replicates = 0;
};

/// Coefficients of the profile relation sigma^2 = c1 / (c2 + c3 rho).
struct ProfileCoefficients {
  double c1 = 0.0;  // sum_k MSE(k) / k
  double c2 = 0.0;  // sum_k 1 / k^2
  double c3 = 0.0;  // sum_k (k-1) / k^2

  static ProfileCoefficients from_plot(const SignaturePlot& plot);
};

/// Mean squared gap between the plot and the model curve over the plot's k grid.
double objective_q(const SignaturePlot& plot, double rho, double sigma2);

double profile_sigma2(const ProfileCoefficients& coeffs, double rho);

/// Q(rho, profile_sigma2(rho)).
double profile_objective(const SignaturePlot& plot, const ProfileCoefficients& coeffs,
                         double rho);

/// Grid-guarded golden-section search over rho in (-1/(N-1), 1) with sigma^2
/// profiled out.
MatchEstimate matching_estimate(const SignaturePlot& plot, std::size_t n);

/// sigma^2 = mean variance, rho = mean pairwise covariance / sigma^2.
MatchEstimate closed_form_estimate(const CovarianceSummary& moments);

/// Builds the signature plot the numeric estimator fits on each bootstrap
/// replicate. The default is the closed-form plot of the replicate's moments
/// (identical to exact enumeration on balanced panels).
using PlotBuilder = std::function<SignaturePlot(const ErrorPanel&, int k_max)>;

struct BootstrapConfig {
  std::size_t replicates = 1000;
  std::uint64_t seed = 20240102;
  std::size_t block_length = 1;  // 1 = iid resampling of periods
  int k_max = 20;                // crowd sizes in the fitted plot (capped at N)
  unsigned threads = 0;
  PlotBuilder plot_builder;      // empty = closed-form plot
};

struct BootstrapResult {
  double se_rho = 0.0;
  double se_sigma2 = 0.0;
  std::size_t valid_replicates = 0;
  std::size_t invalid_replicates = 0;
  std::vector<double> rho_draws;     // valid replicates, replicate order
  std::vector<double> sigma2_draws;
};

/// Standard errors by resampling periods with replacement.
BootstrapResult bootstrap_se(const ErrorPanel& panel, EstimatorMethod method,
                             const BootstrapConfig& config);

/// Plot fitted by the numeric estimator inside the bootstrap: closed form of
/// the sample moments over k = 1..min(k_max, N).
SignaturePlot default_fit_plot(const ErrorPanel& panel, int k_max);

}  // namespace crowdsig
