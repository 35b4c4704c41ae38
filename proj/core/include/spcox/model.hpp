#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

namespace spcox {

/// Bound on the linear predictor inside exp(); keeps zero-count regions
/// from driving baselines to -inf.
inline constexpr double kLinkBound = 30.0;

/// Observed counts, exposure and covariates per region.
struct Dataset {
  Eigen::VectorXd y;           // counts, integral and >= 0
  Eigen::VectorXd offset;      // P_i > 0
  Eigen::VectorXd area;        // |Omega_i| > 0
  Eigen::VectorXd log_offset;  // cached log(P_i)
  Eigen::MatrixXd X;           // n x p
  std::vector<std::string> region_ids;       // may be empty for synthetic data
  std::vector<std::string> covariate_names;  // may be empty

  int n() const { return static_cast<int>(y.size()); }
  int p() const { return static_cast<int>(X.cols()); }

  Dataset subset(const std::vector<int>& keep) const;
};

/// Validates invariants (integral nonnegative counts, positive exposure,
/// matching row counts) and caches log offsets.
Dataset make_dataset(Eigen::VectorXd y, Eigen::VectorXd offset, Eigen::VectorXd area,
                     Eigen::MatrixXd X,
                     std::vector<std::string> region_ids = {},
                     std::vector<std::string> covariate_names = {});

/// Discretized baselines plus covariate effects.
struct ParamVector {
  Eigen::VectorXd alpha;  // n baselines
  Eigen::VectorXd beta;   // p effects

  int size() const { return static_cast<int>(alpha.size() + beta.size()); }
};

struct FittedMeans {
  Eigen::VectorXd mu;  // |Omega_i| P_i exp(alpha_i + X_i beta)
};

/// alpha + X beta, unclamped.
Eigen::VectorXd linear_predictor(const Dataset& d, const ParamVector& theta);

/// Expected counts; the linear predictor is clamped to [-kLinkBound, kLinkBound]
/// inside exp. Throws NumericalError if the result is non-finite.
FittedMeans predicted_mean(const Dataset& d, const ParamVector& theta);

/// Poisson log-likelihood without the -sum(log y!) constant:
///   sum_i y_i (log P_i + alpha_i + X_i beta) - sum_i mu_i.
double loglik(const Dataset& d, const ParamVector& theta);

/// (y - mu, X^T (y - mu)).
ParamVector grad_loglik(const Dataset& d, const ParamVector& theta);

/// -grad^2_beta loglik = X^T diag(mu) X, unnormalized.
Eigen::MatrixXd hessian_beta(const Dataset& d, const ParamVector& theta);

/// grad^2_{beta,alpha} loglik = -X^T diag(mu), p x n.
Eigen::MatrixXd hessian_cross(const Dataset& d, const ParamVector& theta);

}  // namespace spcox
