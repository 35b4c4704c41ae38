// Independent test oracles: finite differences, a minimum-norm damped Newton
// fit for the unpenalized Poisson model, and an active-set enumeration solver
// for the small de-biasing programs. None of these share code with the
// implementation paths they check.
#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <functional>
#include <limits>
#include <vector>

#include "spcox/model.hpp"

namespace spcox::testing {

/// Central finite differences of f at x.
inline Eigen::VectorXd fd_gradient(const std::function<double(const Eigen::VectorXd&)>& f,
                                   const Eigen::VectorXd& x, double h = 1e-6) {
  Eigen::VectorXd g(x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    Eigen::VectorXd hi = x, lo = x;
    hi[i] += h;
    lo[i] -= h;
    g[i] = (f(hi) - f(lo)) / (2.0 * h);
  }
  return g;
}

/// Unpenalized Poisson maximum likelihood on (alpha, beta) jointly by damped
/// Newton ascent with minimum-norm directions. The model is over-parametrized
/// (alpha+X*beta only identifies n of n+p directions), so iterates stay in the
/// affine subspace init + range([I X]^T); starting from the same point as the
/// solver under test makes the limits comparable coordinate-wise.
inline ParamVector newton_poisson_fit(const Dataset& d, const ParamVector& init,
                                      int max_iter = 300, double grad_tol = 1e-11) {
  const int n = d.n();
  const int p = d.p();
  ParamVector theta = init;

  auto loglik_at = [&](const ParamVector& th) {
    const Eigen::VectorXd eta = th.alpha + (p > 0 ? (d.X * th.beta).eval()
                                                  : Eigen::VectorXd::Zero(n));
    return d.y.dot(d.log_offset + eta) -
           (d.area.array() * d.offset.array() * eta.array().exp()).sum();
  };

  double value = loglik_at(theta);
  for (int it = 0; it < max_iter; ++it) {
    const Eigen::VectorXd eta =
        theta.alpha + (p > 0 ? (d.X * theta.beta).eval() : Eigen::VectorXd::Zero(n));
    const Eigen::VectorXd mu =
        d.area.array() * d.offset.array() * eta.array().exp();
    Eigen::VectorXd grad(n + p);
    grad.head(n) = d.y - mu;
    if (p > 0) grad.tail(p) = d.X.transpose() * (d.y - mu);
    if (grad.lpNorm<Eigen::Infinity>() < grad_tol) break;

    Eigen::MatrixXd hess(n + p, n + p);
    hess.setZero();
    hess.topLeftCorner(n, n) = mu.asDiagonal();
    if (p > 0) {
      const Eigen::MatrixXd cross = mu.asDiagonal() * d.X;
      hess.topRightCorner(n, p) = cross;
      hess.bottomLeftCorner(p, n) = cross.transpose();
      hess.bottomRightCorner(p, p) = d.X.transpose() * cross;
    }
    const Eigen::VectorXd dir =
        hess.completeOrthogonalDecomposition().solve(grad);  // min-norm ascent

    double step = 1.0;
    bool ok = false;
    for (int half = 0; half < 60; ++half, step *= 0.5) {
      ParamVector cand;
      cand.alpha = theta.alpha + step * dir.head(n);
      cand.beta = theta.beta + step * dir.tail(p);
      const double cand_value = loglik_at(cand);
      if (std::isfinite(cand_value) && cand_value >= value - 1e-14 * std::abs(value)) {
        theta = std::move(cand);
        value = cand_value;
        ok = true;
        break;
      }
    }
    if (!ok) break;
  }
  return theta;
}

/// Exact solver for min m' Sigma m s.t. ||H m - e_j||_inf <= eta with small p:
/// enumerates every active set and sign pattern, solves the KKT equality
/// system, and keeps the best feasible candidate.
inline double debias_row_bruteforce(const Eigen::MatrixXd& H, const Eigen::MatrixXd& Sigma,
                                    int j, double eta, Eigen::VectorXd* arg_out = nullptr) {
  const int p = static_cast<int>(H.rows());
  Eigen::VectorXd e = Eigen::VectorXd::Zero(p);
  e[j] = 1.0;

  double best = std::numeric_limits<double>::infinity();
  Eigen::VectorXd best_m;
  for (int mask = 0; mask < (1 << p); ++mask) {
    std::vector<int> active;
    for (int k = 0; k < p; ++k)
      if (mask & (1 << k)) active.push_back(k);
    const int a = static_cast<int>(active.size());
    for (int signs = 0; signs < (1 << std::max(a, 1)) && (a > 0 || signs == 0); ++signs) {
      Eigen::MatrixXd kkt(p + a, p + a);
      kkt.setZero();
      kkt.topLeftCorner(p, p) = 2.0 * Sigma;
      Eigen::VectorXd rhs = Eigen::VectorXd::Zero(p + a);
      for (int r = 0; r < a; ++r) {
        const double sign = (signs & (1 << r)) ? 1.0 : -1.0;
        kkt.block(p + r, 0, 1, p) = H.row(active[r]);
        kkt.block(0, p + r, p, 1) = H.row(active[r]).transpose();
        rhs[p + r] = e[active[r]] + sign * eta;
      }
      const Eigen::FullPivLU<Eigen::MatrixXd> lu(kkt);
      if (!lu.isInvertible()) continue;
      const Eigen::VectorXd sol = lu.solve(rhs);
      const Eigen::VectorXd m = sol.head(p);
      if (((H * m - e).cwiseAbs().array() > eta + 1e-9).any()) continue;
      const double obj = m.dot(Sigma * m);
      if (obj < best) {
        best = obj;
        best_m = m;
      }
    }
  }
  if (arg_out) *arg_out = best_m;
  return best;
}

}  // namespace spcox::testing
