#include "spcox/inference.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "spcox/errors.hpp"
#include "spcox/parallel.hpp"
#include "spcox/penalties.hpp"
#include "spcox/stats.hpp"

namespace spcox {

namespace {

constexpr double kDualToleranceIncrease = 1e-10;
constexpr double kFeasibilitySlack = 1e-8;
constexpr double kDualBlowup = 1e13;

// Invertible H: substitute w = H m - e_j, so the program becomes
//   min (w + e_j)^T G (w + e_j)  over  ||w||_inf <= eta,   G = H^{-1} Sigma H^{-1}.
// Every iterate is exactly feasible. Projected cyclic coordinate descent
// warm-starts an active-set polish that finishes the box QP exactly.
struct RowBoxSolver {
  const Eigen::MatrixXd& G;
  const Eigen::FullPivLU<Eigen::MatrixXd>& h_lu;

  Eigen::VectorXd solve(int j, double eta) const {
    const int p = static_cast<int>(G.rows());
    Eigen::VectorXd e = Eigen::VectorXd::Zero(p);
    e[j] = 1.0;
    Eigen::VectorXd w = (-e).cwiseMax(-eta).cwiseMin(eta);
    Eigen::VectorXd r = G * (w + e);  // half-gradient

    for (int sweep = 0; sweep < 100; ++sweep) {
      double moved = 0.0;
      for (int k = 0; k < p; ++k) {
        if (G(k, k) <= 0.0) continue;
        const double cand =
            std::clamp(w[k] - r[k] / G(k, k), -eta, eta);
        if (cand != w[k]) {
          r += G.col(k) * (cand - w[k]);
          moved = std::max(moved, std::abs(cand - w[k]));
          w[k] = cand;
        }
      }
      if (moved <= 1e-14 * eta) break;
    }

    // Active-set polish: exact equality solves on the free coordinates.
    // status: -1 fixed at -eta, +1 fixed at +eta, 0 free.
    std::vector<int> status(p, 0);
    for (int k = 0; k < p; ++k)
      if (w[k] == eta)
        status[k] = 1;
      else if (w[k] == -eta)
        status[k] = -1;

    const int max_rounds = 20 * p + 40;
    for (int round = 0; round < max_rounds; ++round) {
      std::vector<int> free_idx;
      for (int k = 0; k < p; ++k)
        if (status[k] == 0) free_idx.push_back(k);
      const int nf = static_cast<int>(free_idx.size());

      bool advanced = false;
      if (nf > 0) {
        Eigen::MatrixXd Gff(nf, nf);
        Eigen::VectorXd rhs(nf);
        Eigen::VectorXd fixed_term = Eigen::VectorXd::Zero(p);
        for (int k = 0; k < p; ++k)
          if (status[k] != 0) fixed_term[k] = w[k] + e[k];
        const Eigen::VectorXd coupling = G * fixed_term;
        for (int a = 0; a < nf; ++a) {
          rhs[a] = -coupling[free_idx[a]];
          for (int b = 0; b < nf; ++b) Gff(a, b) = G(free_idx[a], free_idx[b]);
        }
        const Eigen::VectorXd sol = Gff.ldlt().solve(rhs);  // w_F + e_F
        Eigen::VectorXd target = w;
        for (int a = 0; a < nf; ++a) target[free_idx[a]] = sol[a] - e[free_idx[a]];

        // step toward the equality solution until a bound blocks
        double step = 1.0;
        int blocker = -1;
        for (int a = 0; a < nf; ++a) {
          const int k = free_idx[a];
          const double delta = target[k] - w[k];
          if (delta > 0.0 && target[k] > eta) {
            const double t = (eta - w[k]) / delta;
            if (t < step) {
              step = t;
              blocker = k;
            }
          } else if (delta < 0.0 && target[k] < -eta) {
            const double t = (-eta - w[k]) / delta;
            if (t < step) {
              step = t;
              blocker = k;
            }
          }
        }
        if (step > 0.0) {
          for (int a = 0; a < nf; ++a) {
            const int k = free_idx[a];
            w[k] = w[k] + step * (target[k] - w[k]);
          }
          advanced = true;
        }
        if (blocker >= 0) {
          w[blocker] = w[blocker] > 0.0 ? eta : -eta;
          status[blocker] = w[blocker] > 0.0 ? 1 : -1;
          continue;  // resolve with the updated working set
        }
        for (int a = 0; a < nf; ++a)
          w[free_idx[a]] = std::clamp(target[free_idx[a]], -eta, eta);
      }

      // KKT multipliers on the bound coordinates; release the worst violator
      const Eigen::VectorXd grad = 2.0 * (G * (w + e));
      const double scale = std::max(1.0, grad.lpNorm<Eigen::Infinity>());
      int worst = -1;
      double worst_violation = 1e-11 * scale;
      for (int k = 0; k < p; ++k) {
        if (status[k] == 1 && grad[k] > worst_violation) {
          worst = k;
          worst_violation = grad[k];
        } else if (status[k] == -1 && -grad[k] > worst_violation) {
          worst = k;
          worst_violation = -grad[k];
        }
      }
      if (worst < 0) break;  // optimal
      status[worst] = 0;
      (void)advanced;
    }

    return h_lu.solve(w + e);
  }
};

// Rank-deficient H: solve the l1-penalized concave dual
//   max g(u) = -1/4 u^T Q u - u^T e_j - eta ||u||_1,  Q = H Sigma^{-1} H,
// by cyclic coordinate ascent, recovering m = -1/2 Sigma^{-1} H u. An
// unbounded dual signals an infeasible row at this eta.
struct RowDualSolver {
  const Eigen::MatrixXd& Q;
  const Eigen::LDLT<Eigen::MatrixXd>& sigma_ldlt;
  const Eigen::MatrixXd& H;

  bool solve(int j, double eta, Eigen::VectorXd& m_out) const {
    const int p = static_cast<int>(Q.rows());
    Eigen::VectorXd u = Eigen::VectorXd::Zero(p);
    Eigen::VectorXd r = Eigen::VectorXd::Zero(p);  // Q u
    double dual = 0.0;
    const long max_sweeps = 200000L;
    for (long sweep = 0; sweep < max_sweeps; ++sweep) {
      for (int k = 0; k < p; ++k) {
        const double qkk = Q(k, k);
        const double r_excl = r[k] - qkk * u[k];
        const double b = 0.5 * r_excl + (k == j ? 1.0 : 0.0);
        double u_new;
        if (qkk > 1e-300) {
          u_new = soft_threshold(-b, eta) / (0.5 * qkk);
        } else {
          // Linear coordinate: bounded only when the slope is inside [-eta, eta].
          if (std::abs(b) > eta * (1.0 + 1e-12) + 1e-300) return false;
          u_new = 0.0;
        }
        if (u_new != u[k]) {
          r += Q.col(k) * (u_new - u[k]);
          u[k] = u_new;
        }
      }
      if (u.lpNorm<Eigen::Infinity>() > kDualBlowup) return false;
      const double dual_new = -0.25 * u.dot(r) - u[j] - eta * u.lpNorm<1>();
      if (sweep > 0 && dual_new - dual < kDualToleranceIncrease) {
        dual = dual_new;
        break;
      }
      dual = dual_new;
    }
    m_out = -0.5 * sigma_ldlt.solve(H * u);
    return true;
  }
};

}  // namespace

double DebiasConfig::resolved_eta(int n, int p) const {
  if (eta > 0.0) return eta;
  const double v = 0.1 * std::sqrt(std::log(static_cast<double>(p)) / n);
  return std::max(v, 1e-6);  // log(1) = 0 would give an invalid zero tolerance
}

void DebiasConfig::validate() const {
  if (eta < 0.0 || !std::isfinite(eta)) throw ValidationError("eta must be nonnegative");
  if (!(level > 0.0 && level < 1.0)) throw ValidationError("level must lie in (0,1)");
  if (!(eta_growth > 1.0)) throw ValidationError("eta_growth must exceed 1");
  if (max_eta_growths < 0) throw ValidationError("max_eta_growths must be nonnegative");
}

Eigen::MatrixXd empirical_hessian(const Dataset& d, const ParamVector& theta_hat) {
  return hessian_beta(d, theta_hat) / static_cast<double>(d.n());
}

Eigen::MatrixXd sandwich_covariance(const Dataset& d, const ParamVector& theta_hat) {
  const Eigen::VectorXd mu = predicted_mean(d, theta_hat).mu;
  const double mu_bar = mu.mean();
  const Eigen::ArrayXd w =
      (d.y - mu).array().square() + (mu.array() - mu_bar).square();
  return (2.0 / d.n()) * (d.X.transpose() * w.matrix().asDiagonal() * d.X);
}

double zeta_hat(const Dataset& d, const ParamVector& theta_hat, bool positive_part) {
  const Eigen::VectorXd m = predicted_mean(d, theta_hat).mu;
  double acc = 0.0;
  for (int i = 0; i < d.n(); ++i) {
    const double resid = d.y[i] - m[i];
    double term = (resid * resid - m[i]) / (m[i] * m[i]);
    if (positive_part && term < 0.0) term = 0.0;
    acc += term;
  }
  return acc / d.n();
}

Eigen::MatrixXd gaussian_error_covariance(const Dataset& d, const ParamVector& theta_hat,
                                          double zeta) {
  if (zeta < 0.0 || !std::isfinite(zeta))
    throw ValidationError("zeta must be nonnegative");
  const Eigen::VectorXd m = predicted_mean(d, theta_hat).mu;
  const Eigen::ArrayXd w = m.array() + zeta * m.array().square();
  return (d.X.transpose() * w.matrix().asDiagonal() * d.X) / static_cast<double>(d.n());
}

DebiasRows solve_debias_rows(const Eigen::MatrixXd& H, const Eigen::MatrixXd& Sigma,
                             const DebiasConfig& cfg, int threads) {
  cfg.validate();
  const int p = static_cast<int>(H.rows());
  if (H.cols() != p || Sigma.rows() != p || Sigma.cols() != p)
    throw ValidationError("solve_debias_rows: H and Sigma must be square and conformable");
  if (!(cfg.eta > 0.0)) throw ValidationError("solve_debias_rows: eta must be positive");

  const double ridge = 1e-10 * std::max(1.0, Sigma.diagonal().maxCoeff());
  Eigen::MatrixXd sigma_reg = Sigma;
  sigma_reg.diagonal().array() += ridge;
  Eigen::LDLT<Eigen::MatrixXd> sigma_ldlt(sigma_reg);
  if (sigma_ldlt.info() != Eigen::Success)
    throw NumericalError("solve_debias_rows: covariance factorization failed");
  const Eigen::MatrixXd Q = H * sigma_ldlt.solve(H);

  Eigen::FullPivLU<Eigen::MatrixXd> h_lu(H);
  const bool h_invertible = h_lu.isInvertible();
  Eigen::MatrixXd G;
  if (h_invertible) {
    const Eigen::MatrixXd half = h_lu.solve(sigma_reg);  // H^{-1} Sigma
    G = h_lu.solve(half.transpose());                    // H^{-1} Sigma H^{-1}
    G = 0.5 * (G + G.transpose()).eval();
  }

  RowBoxSolver box_solver{G, h_lu};
  RowDualSolver dual_solver{Q, sigma_ldlt, H};
  DebiasRows out;
  out.M = Eigen::MatrixXd::Zero(p, p);
  std::vector<double> row_eta(static_cast<std::size_t>(p), 0.0);
  std::vector<char> failed(static_cast<std::size_t>(p), 0);

  parallel_for(p, threads, [&](int j) {
    double eta = cfg.eta;
    for (int attempt = 0; attempt <= cfg.max_eta_growths; ++attempt) {
      Eigen::VectorXd m;
      bool solved = false;
      if (h_invertible) {
        m = box_solver.solve(j, eta);
        solved = m.allFinite();
      } else {
        solved = dual_solver.solve(j, eta, m);
      }
      if (solved) {
        Eigen::VectorXd slack = H * m;
        slack[j] -= 1.0;
        if (slack.lpNorm<Eigen::Infinity>() <= eta + kFeasibilitySlack) {
          out.M.row(j) = m.transpose();
          row_eta[static_cast<std::size_t>(j)] = eta;
          return;
        }
      }
      eta *= cfg.eta_growth;
    }
    failed[static_cast<std::size_t>(j)] = 1;
  });

  std::string failed_list;
  for (int j = 0; j < p; ++j)
    if (failed[static_cast<std::size_t>(j)])
      failed_list += (failed_list.empty() ? "" : ", ") + std::to_string(j);
  if (!failed_list.empty())
    throw NumericalError("de-biasing program infeasible after eta growth for coordinates: " +
                         failed_list);

  out.eta_used = *std::max_element(row_eta.begin(), row_eta.end());
  return out;
}

InferenceResult debias_and_intervals(const Dataset& d, const FitResult& fit,
                                     const DebiasConfig& cfg, bool force, int threads) {
  cfg.validate();
  if (fit.diverged) throw NumericalError("cannot run inference on a diverged fit");
  if (!fit.converged && !force)
    throw ValidationError("fit did not converge; rerun with more iterations or force");
  const int n = d.n();
  const int p = d.p();
  if (p == 0) throw ValidationError("inference requires at least one covariate");

  const ParamVector& theta = fit.theta;
  const Eigen::VectorXd mu = predicted_mean(d, theta).mu;
  const Eigen::MatrixXd H = empirical_hessian(d, theta);

  InferenceResult res;
  res.covariance = cfg.covariance;
  res.level = cfg.level;
  Eigen::MatrixXd Sigma;
  if (cfg.covariance == CovarianceKind::Sandwich) {
    Sigma = sandwich_covariance(d, theta);
  } else {
    res.zeta = zeta_hat(d, theta, /*positive_part=*/true);
    Sigma = gaussian_error_covariance(d, theta, res.zeta);
  }

  DebiasConfig solve_cfg = cfg;
  solve_cfg.eta = cfg.resolved_eta(n, p);
  const DebiasRows rows = solve_debias_rows(H, Sigma, solve_cfg, threads);
  res.M = rows.M;
  res.eta_used = rows.eta_used;

  res.beta_hat = theta.beta;
  res.b_hat = theta.beta + (rows.M * (d.X.transpose() * (d.y - mu))) / static_cast<double>(n);

  const Eigen::MatrixXd cov = rows.M * Sigma * rows.M.transpose();
  res.sigma_hat = cov.diagonal().array().max(0.0).sqrt();

  const double q = normal_quantile(1.0 - (1.0 - cfg.level) / 2.0);
  const double root_n = std::sqrt(static_cast<double>(n));
  res.ci_lower.resize(p);
  res.ci_upper.resize(p);
  res.z_scores.resize(p);
  res.p_values.resize(p);
  for (int j = 0; j < p; ++j) {
    const double half = q * res.sigma_hat[j] / root_n;
    res.ci_lower[j] = res.b_hat[j] - half;
    res.ci_upper[j] = res.b_hat[j] + half;
    if (res.sigma_hat[j] > 0.0) {
      res.z_scores[j] = root_n * res.b_hat[j] / res.sigma_hat[j];
    } else {
      res.z_scores[j] = res.b_hat[j] == 0.0
                            ? 0.0
                            : std::copysign(std::numeric_limits<double>::infinity(),
                                            res.b_hat[j]);
    }
    res.p_values[j] = two_sided_p_value(res.z_scores[j]);
  }
  return res;
}

}  // namespace spcox
