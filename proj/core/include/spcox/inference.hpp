#pragma once

#include <Eigen/Dense>
#include <limits>

#include "spcox/model.hpp"
#include "spcox/solver.hpp"

namespace spcox {

enum class CovarianceKind { Sandwich, GaussianError };

struct DebiasConfig {
  double eta = 0.0;  // 0 requests the default 0.1 * sqrt(log p / n)
  CovarianceKind covariance = CovarianceKind::Sandwich;
  double level = 0.95;
  double eta_growth = 2.0;  // multiplier applied when a row is infeasible
  int max_eta_growths = 10;

  double resolved_eta(int n, int p) const;
  void validate() const;
};

/// (1/n) X^T diag(mu_hat) X.
Eigen::MatrixXd empirical_hessian(const Dataset& d, const ParamVector& theta_hat);

/// (2/n) sum_i x_i x_i^T [ (y_i - mu_i)^2 + (mu_i - mean(mu))^2 ].
Eigen::MatrixXd sandwich_covariance(const Dataset& d, const ParamVector& theta_hat);

/// Moment estimate of exp(sigma^2) - 1 under an independent Gaussian error
/// field; summands optionally floored at zero.
double zeta_hat(const Dataset& d, const ParamVector& theta_hat, bool positive_part);

/// (1/n) sum_i x_i x_i^T [ m_i + zeta * m_i^2 ].
Eigen::MatrixXd gaussian_error_covariance(const Dataset& d, const ParamVector& theta_hat,
                                          double zeta);

struct DebiasRows {
  Eigen::MatrixXd M;      // p x p, row j minimizes m Sigma m^T
  double eta_used = 0.0;  // largest eta any row needed
};

/// Per-coordinate program: minimize m Sigma m^T subject to
/// ||H m^T - e_j||_inf <= eta, solved through its l1-penalized concave dual
/// by deterministic cyclic coordinate ascent. Rows that are infeasible at
/// eta retry with eta * eta_growth, up to max_eta_growths times.
DebiasRows solve_debias_rows(const Eigen::MatrixXd& H, const Eigen::MatrixXd& Sigma,
                             const DebiasConfig& cfg, int threads = 1);

struct InferenceResult {
  Eigen::VectorXd beta_hat;   // penalized estimate
  Eigen::VectorXd b_hat;      // de-biased estimate
  Eigen::VectorXd sigma_hat;  // sqrt of diag(M Sigma M^T)
  Eigen::VectorXd ci_lower, ci_upper;
  Eigen::VectorXd z_scores, p_values;
  Eigen::MatrixXd M;
  double eta_used = 0.0;
  CovarianceKind covariance = CovarianceKind::Sandwich;
  double level = 0.95;
  double zeta = std::numeric_limits<double>::quiet_NaN();  // set under GaussianError
};

/// b_hat = beta_hat + (1/n) M X^T (y - mu_hat); normal-reference intervals
/// b_j +/- q * sigma_j / sqrt(n). Rejects non-converged fits unless forced.
InferenceResult debias_and_intervals(const Dataset& d, const FitResult& fit,
                                     const DebiasConfig& cfg, bool force = false,
                                     int threads = 1);

}  // namespace spcox
