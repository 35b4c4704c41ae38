#pragma once

#include <Eigen/Dense>
#include <vector>

#include "spcox/region_graph.hpp"

namespace spcox {

/// Harmonic extension of fitted baselines to the complement of train_idx:
/// alpha_test = -L22^{-1} L21 alpha_train on the partitioned Laplacian.
/// Test components with no edge into the training set predict exactly 0.
/// Throws NumericalError when a coupled block is singular at delta = 0.
Eigen::VectorXd cohesion_predict(const LaplacianMatrix& L,
                                 const std::vector<int>& train_idx,
                                 const Eigen::VectorXd& alpha_train);

}  // namespace spcox
