#include "spcox/solver.hpp"

#include <cmath>
#include <limits>

#include "spcox/errors.hpp"

namespace spcox {

namespace {

constexpr int kMaxBacktracks = 60;

double fusion_value(const Eigen::VectorXd& alpha, const IncidenceMatrix& B,
                    const PenaltyConfig& pcfg) {
  if (pcfg.gamma == 0.0) return 0.0;
  if (pcfg.fusion == FusionKind::L2) return pcfg.gamma * l2_fusion(alpha, B, pcfg).value;
  return smoothed_l1_fusion(alpha, B, pcfg).value;
}

Eigen::VectorXd fusion_grad(const Eigen::VectorXd& alpha, const IncidenceMatrix& B,
                            const PenaltyConfig& pcfg) {
  if (pcfg.gamma == 0.0) return Eigen::VectorXd::Zero(alpha.size());
  if (pcfg.fusion == FusionKind::L2) return pcfg.gamma * l2_fusion(alpha, B, pcfg).grad;
  return smoothed_l1_fusion(alpha, B, pcfg).grad;
}

// Smooth part of the objective: -loglik + fusion.
double smooth_value(const Dataset& d, const ParamVector& theta, const IncidenceMatrix& B,
                    const PenaltyConfig& pcfg) {
  return -loglik(d, theta) + fusion_value(theta.alpha, B, pcfg);
}

ParamVector smooth_grad(const Dataset& d, const ParamVector& theta, const IncidenceMatrix& B,
                        const PenaltyConfig& pcfg) {
  ParamVector g = grad_loglik(d, theta);
  g.alpha = -g.alpha + fusion_grad(theta.alpha, B, pcfg);
  g.beta = -g.beta;
  return g;
}

Eigen::VectorXd clamp_alpha(Eigen::VectorXd a) {
  return a.array().min(kLinkBound).max(-kLinkBound).matrix();
}

ParamVector initial_point(const Dataset& d, const SolverConfig& scfg) {
  ParamVector theta;
  switch (scfg.init) {
    case InitKind::Zero:
      theta.alpha = Eigen::VectorXd::Zero(d.n());
      theta.beta = Eigen::VectorXd::Zero(d.p());
      return theta;
    case InitKind::Warm:
      if (scfg.warm_start.alpha.size() != d.n() || scfg.warm_start.beta.size() != d.p())
        throw ValidationError("warm start dimensions do not match the data");
      theta = scfg.warm_start;
      theta.alpha = clamp_alpha(theta.alpha);
      return theta;
    case InitKind::DataDriven:
      theta.alpha = clamp_alpha(((d.y.array() + 0.5) / (d.area.array() * d.offset.array()))
                                    .log()
                                    .matrix());
      theta.beta = Eigen::VectorXd::Zero(d.p());
      return theta;
  }
  throw ValidationError("unknown initialization");
}

struct StepKernel {
  const Dataset& d;
  const IncidenceMatrix& B;
  const PenaltyConfig& pcfg;
  const SolverConfig& scfg;

  double full_value(const ParamVector& theta) const {
    return smooth_value(d, theta, B, pcfg) + pcfg.tau * theta.beta.lpNorm<1>();
  }

  // Prox-gradient fixed-point residual at unit step; ~0 at a solution.
  double fixed_point_residual(const ParamVector& theta, const ParamVector& grad) const {
    const Eigen::VectorXd alpha_next = clamp_alpha(theta.alpha - grad.alpha);
    const Eigen::VectorXd beta_next = soft_threshold(theta.beta - grad.beta, pcfg.tau);
    double r = (theta.alpha - alpha_next).lpNorm<Eigen::Infinity>();
    if (theta.beta.size() > 0)
      r = std::max(r, (theta.beta - beta_next).lpNorm<Eigen::Infinity>());
    return r;
  }

  // One backtracked proximal step along the given gradient block(s); inactive
  // blocks carry a zero gradient. Returns false when no acceptable step
  // exists within the backtracking budget.
  bool take_step(ParamVector& theta, double& f_value, double smooth_cur,
                 const ParamVector& grad, bool prox_beta) const {
    const double gnorm2 = grad.alpha.squaredNorm() + grad.beta.squaredNorm();
    double step = 1.0;
    for (int bt = 0; bt < kMaxBacktracks; ++bt, step *= scfg.backtrack_b) {
      ParamVector plain;
      plain.alpha = theta.alpha - step * grad.alpha;
      plain.beta = theta.beta - step * grad.beta;
      double smooth_plain;
      try {
        smooth_plain = smooth_value(d, plain, B, pcfg);
      } catch (const NumericalError&) {
        continue;
      }
      const bool decrease_ok =
          scfg.paper_line_search
              ? smooth_plain - smooth_cur <
                    -scfg.armijo_a * (theta.alpha.squaredNorm() + theta.beta.squaredNorm())
              : smooth_plain - smooth_cur <= -scfg.armijo_a * step * gnorm2;
      if (!decrease_ok) continue;

      ParamVector cand;
      cand.alpha = clamp_alpha(std::move(plain.alpha));
      cand.beta = prox_beta ? soft_threshold(plain.beta, step * pcfg.tau) : std::move(plain.beta);
      double f_cand;
      try {
        f_cand = full_value(cand);
      } catch (const NumericalError&) {
        continue;
      }
      // Prox and clamp sit outside the line-search test; keep the trace monotone.
      if (f_cand > f_value + 1e-12 * std::max(1.0, std::abs(f_value))) continue;
      theta = std::move(cand);
      f_value = f_cand;
      return true;
    }
    return false;
  }
};

void validate_fit_inputs(const Dataset& d, const RegionGraph& g, const PenaltyConfig& pcfg,
                         const SolverConfig& scfg) {
  pcfg.validate();
  scfg.validate();
  if (g.n != d.n()) throw ValidationError("graph and dataset disagree on the region count");
}

}  // namespace

void SolverConfig::validate() const {
  if (!(tol > 0.0)) throw ValidationError("tol must be positive");
  if (max_iter < 1) throw ValidationError("max_iter must be at least 1");
  if (!(armijo_a > 0.0)) throw ValidationError("line-search constant a must be positive");
  if (!(backtrack_b > 0.0 && backtrack_b < 1.0))
    throw ValidationError("line-search shrink factor b must lie in (0,1)");
}

double objective(const Dataset& d, const ParamVector& theta, const IncidenceMatrix& B,
                 const PenaltyConfig& pcfg) {
  pcfg.validate();
  return smooth_value(d, theta, B, pcfg) + pcfg.tau * theta.beta.lpNorm<1>();
}

FitResult fit(const Dataset& d, const RegionGraph& g, const PenaltyConfig& pcfg,
              const SolverConfig& scfg) {
  if (scfg.block_alternating) return fit_block_alternating(d, g, pcfg, scfg);
  validate_fit_inputs(d, g, pcfg, scfg);

  const IncidenceMatrix B = incidence(g);
  StepKernel kernel{d, B, pcfg, scfg};

  FitResult result;
  result.penalty = pcfg;
  result.solver = scfg;
  result.theta = initial_point(d, scfg);

  double f;
  try {
    f = kernel.full_value(result.theta);
  } catch (const NumericalError&) {
    result.diverged = true;
    return result;
  }
  if (!std::isfinite(f)) {
    result.diverged = true;
    return result;
  }
  result.objective_trace.push_back(f);

  for (int t = 0; t < scfg.max_iter; ++t) {
    const double smooth_cur = f - pcfg.tau * result.theta.beta.lpNorm<1>();
    const ParamVector grad = smooth_grad(d, result.theta, B, pcfg);
    const double f_prev = f;
    if (!kernel.take_step(result.theta, f, smooth_cur, grad, /*prox_beta=*/true)) {
      // Backtracking hit the numerical floor; accept as converged only at a
      // prox fixed point.
      const double scale = std::max(1.0, result.theta.alpha.lpNorm<Eigen::Infinity>());
      result.converged = kernel.fixed_point_residual(result.theta, grad) <= 1e-8 * scale;
      break;
    }
    result.objective_trace.push_back(f);
    result.iterations = t + 1;
    if (!std::isfinite(f)) {
      result.diverged = true;
      return result;
    }
    if (std::abs(f - f_prev) < scfg.tol * std::abs(f_prev)) {
      result.converged = true;
      break;
    }
  }
  return result;
}

FitResult fit_block_alternating(const Dataset& d, const RegionGraph& g,
                                const PenaltyConfig& pcfg, const SolverConfig& scfg) {
  validate_fit_inputs(d, g, pcfg, scfg);

  const IncidenceMatrix B = incidence(g);
  StepKernel kernel{d, B, pcfg, scfg};

  FitResult result;
  result.penalty = pcfg;
  result.solver = scfg;
  result.solver.block_alternating = true;
  result.theta = initial_point(d, scfg);

  double f;
  try {
    f = kernel.full_value(result.theta);
  } catch (const NumericalError&) {
    result.diverged = true;
    return result;
  }
  result.objective_trace.push_back(f);

  for (int t = 0; t < scfg.max_iter; ++t) {
    const double f_prev = f;
    bool moved = false;

    {  // alpha sweep, beta fixed
      const double smooth_cur = f - pcfg.tau * result.theta.beta.lpNorm<1>();
      ParamVector grad = smooth_grad(d, result.theta, B, pcfg);
      grad.beta.setZero();
      if (kernel.take_step(result.theta, f, smooth_cur, grad, /*prox_beta=*/false)) {
        result.objective_trace.push_back(f);
        moved = true;
      }
    }
    if (d.p() > 0) {  // beta sweep, alpha fixed
      const double smooth_cur = f - pcfg.tau * result.theta.beta.lpNorm<1>();
      ParamVector grad = smooth_grad(d, result.theta, B, pcfg);
      grad.alpha.setZero();
      if (kernel.take_step(result.theta, f, smooth_cur, grad, /*prox_beta=*/true)) {
        result.objective_trace.push_back(f);
        moved = true;
      }
    }

    result.iterations = t + 1;
    if (!std::isfinite(f)) {
      result.diverged = true;
      return result;
    }
    if (std::abs(f - f_prev) < scfg.tol * std::abs(f_prev)) {
      result.converged = true;
      break;
    }
    if (!moved) {
      const ParamVector grad = smooth_grad(d, result.theta, B, pcfg);
      const double scale = std::max(1.0, result.theta.alpha.lpNorm<Eigen::Infinity>());
      result.converged = kernel.fixed_point_residual(result.theta, grad) <= 1e-8 * scale;
      break;
    }
  }
  return result;
}

}  // namespace spcox
