#pragma once

#include <Eigen/Dense>

#include "spcox/region_graph.hpp"

namespace spcox {

enum class FusionKind { L1Smoothed, L2 };

struct PenaltyConfig {
  double gamma = 0.0;  // fusion strength
  double tau = 0.0;    // sparsity strength on beta
  FusionKind fusion = FusionKind::L2;
  double xi = 0.0;     // smoothing parameter; 0 requests the default 1e-2/|E|
  double delta = kDefaultLaplacianRidge;  // L2 fusion ridge

  double resolved_xi(int edge_count) const;
  void validate() const;
};

/// sign(x) * max(|x| - t, 0).
double soft_threshold(double x, double t);
Eigen::VectorXd soft_threshold(const Eigen::VectorXd& x, double t);

/// Elementwise clip to [-1, 1].
Eigen::VectorXd linf_project(Eigen::VectorXd z);

struct PenaltyValueGrad {
  double value = 0.0;
  Eigen::VectorXd grad;
};

/// value = 1/2 a^T (B^T B + delta I) a, grad = (B^T B + delta I) a.
/// Unscaled; callers multiply by gamma.
PenaltyValueGrad l2_fusion(const Eigen::VectorXd& alpha, const IncidenceMatrix& B,
                           const PenaltyConfig& cfg);

/// Smooth surrogate of gamma * ||B a||_1. With z = gamma * B a the value is the
/// elementwise Huber sum q(z_k) = z^2/(2 xi) for |z| <= xi, |z| - xi/2 beyond,
/// and the gradient is gamma * B^T clip(z / xi). Includes the gamma factor.
PenaltyValueGrad smoothed_l1_fusion(const Eigen::VectorXd& alpha, const IncidenceMatrix& B,
                                    const PenaltyConfig& cfg);

}  // namespace spcox
