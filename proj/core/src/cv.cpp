#include "spcox/cv.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include "spcox/errors.hpp"
#include "spcox/parallel.hpp"
#include "spcox/predict.hpp"
#include "spcox/rng.hpp"

namespace spcox {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

struct FoldSplit {
  std::vector<int> train;
  std::vector<int> test;
};

FoldSplit split_for_fold(const FoldPlan& plan, int fold) {
  FoldSplit s;
  for (int i = 0; i < static_cast<int>(plan.assignment.size()); ++i) {
    if (plan.assignment[i] == fold)
      s.test.push_back(i);
    else
      s.train.push_back(i);
  }
  return s;
}

double heldout_score(const Dataset& d, const std::vector<int>& test,
                     const Eigen::VectorXd& alpha_test, const Eigen::VectorXd& beta,
                     CvScoreKind kind) {
  double acc = 0.0;
  for (int k = 0; k < static_cast<int>(test.size()); ++k) {
    const int i = test[k];
    const double eta =
        std::clamp(alpha_test[k] + d.X.row(i).dot(beta), -kLinkBound, kLinkBound);
    const double mu = d.area[i] * d.offset[i] * std::exp(eta);
    const double y = d.y[i];
    if (kind == CvScoreKind::SquaredError) {
      acc += (y - mu) * (y - mu);
    } else {
      const double dev = y > 0.0 ? y * std::log(y / mu) - (y - mu) : mu;
      acc += 2.0 * dev;
    }
  }
  return acc / static_cast<double>(test.size());
}

// Score one fold at one penalty setting; warm-started by the caller.
double fold_cell_score(const Dataset& d, const RegionGraph& g, const LaplacianMatrix& L,
                       const FoldSplit& split, const PenaltyConfig& pcfg,
                       SolverConfig scfg, const CvOptions& opts, ParamVector* warm) {
  const Dataset train_data = d.subset(split.train);
  const RegionGraph train_graph = induced_subgraph(g, split.train);
  if (warm && warm->alpha.size() == train_data.n()) {
    scfg.init = InitKind::Warm;
    scfg.warm_start = *warm;
  }
  FitResult fr;
  try {
    fr = fit(train_data, train_graph, pcfg, scfg);
  } catch (const NumericalError&) {
    return kInf;
  }
  if (fr.diverged || fr.objective_trace.empty() || !std::isfinite(fr.objective()))
    return kInf;
  if (warm) *warm = fr.theta;
  try {
    const Eigen::VectorXd alpha_test = cohesion_predict(L, split.train, fr.theta.alpha);
    return heldout_score(d, split.test, alpha_test, fr.theta.beta, opts.score);
  } catch (const NumericalError&) {
    return kInf;
  }
}

}  // namespace

FoldPlan make_folds(const RegionGraph& g, int k, std::uint64_t seed) {
  if (k < 2 || k > g.n) throw ValidationError("fold count must lie in [2, n]");
  std::vector<int> order(g.n);
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng = make_rng(seed, 0x666f6c64ULL);  // "fold" stream
  std::shuffle(order.begin(), order.end(), rng);
  FoldPlan plan;
  plan.k = k;
  plan.seed = seed;
  plan.assignment.assign(g.n, 0);
  for (int i = 0; i < g.n; ++i) plan.assignment[order[i]] = i % k;
  return plan;
}

double cv_score(const Dataset& d, const RegionGraph& g, const PenaltyConfig& pcfg,
                const SolverConfig& scfg, const FoldPlan& plan, const CvOptions& opts) {
  if (static_cast<int>(plan.assignment.size()) != d.n())
    throw ValidationError("fold plan does not match the dataset");
  const LaplacianMatrix L = laplacian(g, opts.predict_delta);
  std::vector<double> scores(plan.k, kInf);
  parallel_for(plan.k, opts.threads, [&](int fold) {
    const FoldSplit split = split_for_fold(plan, fold);
    scores[fold] = fold_cell_score(d, g, L, split, pcfg, scfg, opts, nullptr);
  });
  return std::accumulate(scores.begin(), scores.end(), 0.0) / plan.k;
}

TuneResult tune(const Dataset& d, const RegionGraph& g, const TuningGrid& grid,
                const PenaltyConfig& base_pcfg, const SolverConfig& scfg,
                const FoldPlan& plan, const CvOptions& opts) {
  if (grid.gamma_values.empty() || grid.tau_values.empty())
    throw ValidationError("tuning grid must be nonempty");
  if (static_cast<int>(plan.assignment.size()) != d.n())
    throw ValidationError("fold plan does not match the dataset");

  const int ng = static_cast<int>(grid.gamma_values.size());
  const int nt = static_cast<int>(grid.tau_values.size());
  const LaplacianMatrix L = laplacian(g, opts.predict_delta);

  // fold x cell score table; cells within a fold run in grid order and reuse
  // the previous solution as a warm start.
  Eigen::MatrixXd per_fold(plan.k, ng * nt);
  parallel_for(plan.k, opts.threads, [&](int fold) {
    const FoldSplit split = split_for_fold(plan, fold);
    ParamVector warm;
    for (int a = 0; a < ng; ++a) {
      for (int b = 0; b < nt; ++b) {
        PenaltyConfig pcfg = base_pcfg;
        pcfg.fusion = grid.fusion;
        pcfg.gamma = grid.gamma_values[a];
        pcfg.tau = grid.tau_values[b];
        per_fold(fold, a * nt + b) =
            fold_cell_score(d, g, L, split, pcfg, scfg, opts, &warm);
      }
    }
  });

  TuneResult result;
  result.scores.resize(ng, nt);
  bool any_finite = false;
  int best_a = -1, best_b = -1;
  for (int a = 0; a < ng; ++a) {
    for (int b = 0; b < nt; ++b) {
      const double s = per_fold.col(a * nt + b).mean();
      result.scores(a, b) = s;
      if (!std::isfinite(s)) continue;
      any_finite = true;
      bool better = best_a < 0 || s < result.scores(best_a, best_b);
      if (!better && s == result.scores(best_a, best_b)) {
        // prefer stronger regularization on ties: larger tau, then larger gamma
        better = grid.tau_values[b] > grid.tau_values[best_b] ||
                 (grid.tau_values[b] == grid.tau_values[best_b] &&
                  grid.gamma_values[a] > grid.gamma_values[best_a]);
      }
      if (better) {
        best_a = a;
        best_b = b;
      }
    }
  }
  if (!any_finite) throw NumericalError("all tuning-grid cells failed to fit");
  result.gamma_star = grid.gamma_values[best_a];
  result.tau_star = grid.tau_values[best_b];
  return result;
}

}  // namespace spcox
