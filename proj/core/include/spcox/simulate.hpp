#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <memory>
#include <vector>

#include "spcox/inference.hpp"
#include "spcox/model.hpp"
#include "spcox/region_graph.hpp"

namespace spcox {

/// Synthetic-data design: [0,m]^2 split into m^2 unit cells, deterministic
/// baseline sqrt(s1^2+s2^2)/(4m), a structured exponential-covariance field
/// plus heteroskedastic cell-level noise, uniform covariates, Poisson counts.
struct Scenario {
  int m = 10;
  int p = 10;
  Eigen::VectorXd beta_true;    // empty requests default_beta_pattern(p)
  double baseline_scale = 1.0;  // multiplies the deterministic baseline
  double grf_range = 0.0;       // 0 requests 0.2 * m
  double grf_variance = 1.0;
  int fine_grid = 0;           // 0 requests the least multiple of m >= 60
  double invgamma_shape = 2.0;
  double invgamma_rate = 1.0;
  double offset = 2.0;
  std::uint64_t seed = 1;
  bool structured = true;    // include the Gaussian random field
  bool unstructured = true;  // include the cell-level heteroskedastic noise

  int cells() const { return m * m; }
  int resolved_fine_grid() const;
  double resolved_range() const { return grf_range > 0.0 ? grf_range : 0.2 * m; }
  Eigen::VectorXd resolved_beta() const;
  void validate() const;
};

/// beta_1 = beta_2 = -1, beta_3 = beta_4 = 1, rest zero (five of each when
/// p >= 100), truncated to p entries.
Eigen::VectorXd default_beta_pattern(int p);

/// Unweighted 4-neighbour lattice over m x m unit cells, row-major ids.
RegionGraph lattice_graph(int m);

/// Zero-mean Gaussian field with covariance sigma2 * exp(-dist/range), drawn
/// by dense Cholesky; adds a 1e-10 jitter once if the factorization fails.
class GrfSampler {
 public:
  GrfSampler(const std::vector<Eigen::Vector2d>& points, double range, double variance);
  Eigen::VectorXd draw(std::uint64_t seed) const;
  int size() const { return static_cast<int>(chol_.rows()); }

 private:
  Eigen::MatrixXd chol_;  // lower Cholesky factor of the covariance
};

Eigen::VectorXd sample_grf(const std::vector<Eigen::Vector2d>& points, double range,
                           double variance, std::uint64_t seed);

struct Replicate {
  Dataset data;
  RegionGraph graph;
  Eigen::VectorXd lambda;                  // realized conditional means per cell
  Eigen::VectorXd eps_structured;          // fine grid, row-major
  Eigen::VectorXd eps_unstructured;        // fine grid, row-major
  Eigen::VectorXd unstructured_variance;   // fine grid, row-major
  std::uint64_t seed = 0;
};

/// Caches the scenario-level covariance factorization so replicates are cheap.
class ReplicateGenerator {
 public:
  explicit ReplicateGenerator(Scenario sc);
  Replicate generate(std::uint64_t rep_seed) const;
  const Scenario& scenario() const { return scenario_; }

 private:
  Scenario scenario_;
  RegionGraph graph_;
  Eigen::VectorXd baseline_fine_;  // alpha0 at fine-cell midpoints
  std::vector<int> fine_to_cell_;
  std::shared_ptr<const GrfSampler> grf_;
};

Replicate generate_replicate(const Scenario& sc, std::uint64_t rep_seed);

/// Conditionally-Poisson counts given a frozen intensity; the sampling stage
/// used inside generate_replicate.
Eigen::VectorXd draw_poisson_counts(const Eigen::VectorXd& lambda, std::uint64_t seed);

struct ReplicateMetrics {
  double coverage = 0.0;     // CI coverage averaged over all coordinates
  double type1_error = 0.0;  // rejection rate on null coordinates
  double power = 0.0;        // rejection rate on non-null coordinates
  Eigen::VectorXd mean_error;  // per-coordinate mean of b_hat - beta_true
  Eigen::VectorXd error_q05;
  Eigen::VectorXd error_q95;
};

ReplicateMetrics evaluate_replicates(const std::vector<InferenceResult>& results,
                                     const Eigen::VectorXd& beta_true);

}  // namespace spcox
