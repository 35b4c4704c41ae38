#include "spcox/penalties.hpp"

#include <cmath>

#include "spcox/errors.hpp"

namespace spcox {

double PenaltyConfig::resolved_xi(int edge_count) const {
  if (xi > 0.0) return xi;
  // 1e-2 total gap budget spread over the edges.
  return edge_count > 0 ? 1e-2 / static_cast<double>(edge_count) : 1e-2;
}

void PenaltyConfig::validate() const {
  if (gamma < 0.0 || !std::isfinite(gamma))
    throw ValidationError("gamma must be nonnegative and finite");
  if (tau < 0.0 || !std::isfinite(tau))
    throw ValidationError("tau must be nonnegative and finite");
  if (xi < 0.0 || !std::isfinite(xi)) throw ValidationError("xi must be nonnegative");
  if (delta < 0.0 || !std::isfinite(delta)) throw ValidationError("delta must be nonnegative");
}

double soft_threshold(double x, double t) {
  if (t < 0.0) throw ValidationError("soft_threshold: threshold must be nonnegative");
  const double mag = std::abs(x) - t;
  return mag > 0.0 ? (x > 0.0 ? mag : -mag) : 0.0;
}

Eigen::VectorXd soft_threshold(const Eigen::VectorXd& x, double t) {
  if (t < 0.0) throw ValidationError("soft_threshold: threshold must be nonnegative");
  return x.unaryExpr([t](double v) {
    const double mag = std::abs(v) - t;
    return mag > 0.0 ? (v > 0.0 ? mag : -mag) : 0.0;
  });
}

Eigen::VectorXd linf_project(Eigen::VectorXd z) {
  return z.array().min(1.0).max(-1.0).matrix();
}

PenaltyValueGrad l2_fusion(const Eigen::VectorXd& alpha, const IncidenceMatrix& B,
                           const PenaltyConfig& cfg) {
  if (B.mat.cols() != alpha.size()) throw ValidationError("l2_fusion: shape mismatch");
  const Eigen::VectorXd edge_diff = B.mat * alpha;
  PenaltyValueGrad out;
  out.value = 0.5 * edge_diff.squaredNorm() + 0.5 * cfg.delta * alpha.squaredNorm();
  out.grad = B.mat.transpose() * edge_diff + cfg.delta * alpha;
  return out;
}

PenaltyValueGrad smoothed_l1_fusion(const Eigen::VectorXd& alpha, const IncidenceMatrix& B,
                                    const PenaltyConfig& cfg) {
  if (B.mat.cols() != alpha.size()) throw ValidationError("smoothed_l1_fusion: shape mismatch");
  const double xi = cfg.resolved_xi(static_cast<int>(B.mat.rows()));
  if (!(xi > 0.0)) throw ValidationError("smoothed_l1_fusion: xi must be positive");
  const Eigen::VectorXd z = cfg.gamma * (B.mat * alpha);
  PenaltyValueGrad out;
  double value = 0.0;
  for (Eigen::Index k = 0; k < z.size(); ++k) {
    const double a = std::abs(z[k]);
    value += a <= xi ? z[k] * z[k] / (2.0 * xi) : a - xi / 2.0;
  }
  out.value = value;
  out.grad = cfg.gamma * (B.mat.transpose() * linf_project(z / xi));
  return out;
}

}  // namespace spcox
