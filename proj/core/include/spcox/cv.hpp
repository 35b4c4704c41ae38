#pragma once

#include <cstdint>
#include <vector>

#include "spcox/model.hpp"
#include "spcox/penalties.hpp"
#include "spcox/region_graph.hpp"
#include "spcox/solver.hpp"

namespace spcox {

struct FoldPlan {
  int k = 0;
  std::vector<int> assignment;  // region -> fold id in [0, k)
  std::uint64_t seed = 0;
};

/// Seeded uniform assignment of regions to k folds, balanced within one region.
FoldPlan make_folds(const RegionGraph& g, int k, std::uint64_t seed);

enum class CvScoreKind { SquaredError, Deviance };

struct CvOptions {
  CvScoreKind score = CvScoreKind::SquaredError;
  double predict_delta = 0.0;  // ridge used for held-out baseline prediction
  int threads = 1;
};

/// Mean held-out score over folds: fit on the fold complement, cohesion-predict
/// the held-out baselines, score counts against the implied means. A fold whose
/// fit diverges contributes +inf rather than raising.
double cv_score(const Dataset& d, const RegionGraph& g, const PenaltyConfig& pcfg,
                const SolverConfig& scfg, const FoldPlan& plan, const CvOptions& opts = {});

struct TuningGrid {
  std::vector<double> gamma_values;
  std::vector<double> tau_values;
  FusionKind fusion = FusionKind::L2;
};

struct TuneResult {
  double gamma_star = 0.0;
  double tau_star = 0.0;
  Eigen::MatrixXd scores;  // gamma index x tau index, mean CV score
};

/// Grid search minimizing the mean CV score; ties break toward larger tau,
/// then larger gamma. Throws NumericalError when every cell is infinite.
TuneResult tune(const Dataset& d, const RegionGraph& g, const TuningGrid& grid,
                const PenaltyConfig& base_pcfg, const SolverConfig& scfg,
                const FoldPlan& plan, const CvOptions& opts = {});

}  // namespace spcox
