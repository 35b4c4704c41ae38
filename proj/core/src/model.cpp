#include "spcox/model.hpp"

#include <cmath>

#include "spcox/errors.hpp"

namespace spcox {

namespace {

void check_dims(const Dataset& d, const ParamVector& theta) {
  if (theta.alpha.size() != d.y.size())
    throw ValidationError("parameter/baseline dimension mismatch");
  if (theta.beta.size() != d.X.cols())
    throw ValidationError("parameter/covariate dimension mismatch");
}

}  // namespace

Dataset Dataset::subset(const std::vector<int>& keep) const {
  const int m = static_cast<int>(keep.size());
  Dataset out;
  out.y.resize(m);
  out.offset.resize(m);
  out.area.resize(m);
  out.log_offset.resize(m);
  out.X.resize(m, X.cols());
  for (int k = 0; k < m; ++k) {
    const int i = keep[static_cast<std::size_t>(k)];
    out.y[k] = y[i];
    out.offset[k] = offset[i];
    out.area[k] = area[i];
    out.log_offset[k] = log_offset[i];
    out.X.row(k) = X.row(i);
    if (!region_ids.empty()) out.region_ids.push_back(region_ids[static_cast<std::size_t>(i)]);
  }
  out.covariate_names = covariate_names;
  return out;
}

Dataset make_dataset(Eigen::VectorXd y, Eigen::VectorXd offset, Eigen::VectorXd area,
                     Eigen::MatrixXd X, std::vector<std::string> region_ids,
                     std::vector<std::string> covariate_names) {
  const auto n = y.size();
  if (offset.size() != n || area.size() != n || X.rows() != n)
    throw ValidationError("dataset arrays must share the region count");
  if (!region_ids.empty() && static_cast<Eigen::Index>(region_ids.size()) != n)
    throw ValidationError("region id list does not match the region count");
  for (Eigen::Index i = 0; i < n; ++i) {
    if (!std::isfinite(y[i]) || y[i] < 0.0 || std::floor(y[i]) != y[i])
      throw ValidationError("counts must be nonnegative integers");
    if (!(offset[i] > 0.0) || !std::isfinite(offset[i]))
      throw ValidationError("offsets must be strictly positive");
    if (!(area[i] > 0.0) || !std::isfinite(area[i]))
      throw ValidationError("areas must be strictly positive");
  }
  if (!X.allFinite()) throw ValidationError("covariates must be finite");

  Dataset d;
  d.y = std::move(y);
  d.offset = std::move(offset);
  d.area = std::move(area);
  d.log_offset = d.offset.array().log();
  d.X = std::move(X);
  d.region_ids = std::move(region_ids);
  d.covariate_names = std::move(covariate_names);
  return d;
}

Eigen::VectorXd linear_predictor(const Dataset& d, const ParamVector& theta) {
  check_dims(d, theta);
  if (theta.beta.size() == 0) return theta.alpha;
  return theta.alpha + d.X * theta.beta;
}

FittedMeans predicted_mean(const Dataset& d, const ParamVector& theta) {
  Eigen::VectorXd eta = linear_predictor(d, theta);
  FittedMeans f;
  f.mu = d.area.array() * d.offset.array() *
         eta.array().min(kLinkBound).max(-kLinkBound).exp();
  if (!f.mu.allFinite())
    throw NumericalError("predicted mean overflowed; inputs are malformed");
  return f;
}

double loglik(const Dataset& d, const ParamVector& theta) {
  Eigen::VectorXd eta = linear_predictor(d, theta);
  const double linear = d.y.dot(d.log_offset + eta);
  const double mass = (d.area.array() * d.offset.array() *
                       eta.array().min(kLinkBound).max(-kLinkBound).exp())
                          .sum();
  return linear - mass;
}

ParamVector grad_loglik(const Dataset& d, const ParamVector& theta) {
  const Eigen::VectorXd residual = d.y - predicted_mean(d, theta).mu;
  ParamVector g;
  g.alpha = residual;
  g.beta = d.X.transpose() * residual;
  return g;
}

Eigen::MatrixXd hessian_beta(const Dataset& d, const ParamVector& theta) {
  const Eigen::VectorXd mu = predicted_mean(d, theta).mu;
  return d.X.transpose() * mu.asDiagonal() * d.X;
}

Eigen::MatrixXd hessian_cross(const Dataset& d, const ParamVector& theta) {
  const Eigen::VectorXd mu = predicted_mean(d, theta).mu;
  return -(d.X.transpose() * mu.asDiagonal());
}

}  // namespace spcox
