#pragma once

#include <vector>

#include "spcox/model.hpp"
#include "spcox/penalties.hpp"
#include "spcox/region_graph.hpp"

namespace spcox {

enum class InitKind { DataDriven, Zero, Warm };

struct SolverConfig {
  double tol = 1e-7;       // relative objective tolerance
  int max_iter = 5000;
  double armijo_a = 1e-4;  // sufficient-decrease constant
  double backtrack_b = 0.5;
  bool block_alternating = false;
  InitKind init = InitKind::DataDriven;
  ParamVector warm_start;          // used when init == Warm
  bool paper_line_search = false;  // literal shrink test -a * ||theta||^2

  void validate() const;
};

struct FitResult {
  ParamVector theta;
  std::vector<double> objective_trace;  // f(theta) per accepted step, starting at init
  int iterations = 0;
  bool converged = false;
  bool diverged = false;
  PenaltyConfig penalty;  // config echo
  SolverConfig solver;

  double objective() const { return objective_trace.empty() ? 0.0 : objective_trace.back(); }
};

/// Full objective -loglik + fusion + tau * ||beta||_1. The smoothed fusion
/// value is used under FusionKind::L1Smoothed.
double objective(const Dataset& d, const ParamVector& theta, const IncidenceMatrix& B,
                 const PenaltyConfig& pcfg);

/// Proximal gradient descent with backtracking line search. Gradient steps
/// act on (alpha, beta) jointly; the soft-threshold prox with step-scaled
/// threshold applies to the beta block only.
FitResult fit(const Dataset& d, const RegionGraph& g, const PenaltyConfig& pcfg,
              const SolverConfig& scfg);

/// Alternates proximal-gradient sweeps on alpha (beta fixed) and beta
/// (alpha fixed) until the joint convergence criterion holds.
FitResult fit_block_alternating(const Dataset& d, const RegionGraph& g,
                                const PenaltyConfig& pcfg, const SolverConfig& scfg);

}  // namespace spcox
