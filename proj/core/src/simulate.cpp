#include "spcox/simulate.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <random>
#include <string>

#include "spcox/errors.hpp"
#include "spcox/rng.hpp"

namespace spcox {

namespace {

// Substream ids inside one replicate.
enum Stream : std::uint64_t {
  kStreamGrf = 1,
  kStreamVariances = 2,
  kStreamNoise = 3,
  kStreamCovariates = 4,
  kStreamCounts = 5,
};

constexpr int kMaxGrfPoints = 6000;       // dense factorization bound
constexpr double kPoissonNormalCutoff = 1e9;

std::string cell_id(int index) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "c%06d", index);
  return buf;
}

}  // namespace

int Scenario::resolved_fine_grid() const {
  if (fine_grid > 0) return fine_grid;
  const int q = (60 + m - 1) / m;  // least multiple of m at least 60
  return std::max(m, q * m);
}

Eigen::VectorXd Scenario::resolved_beta() const {
  return beta_true.size() > 0 ? beta_true : default_beta_pattern(p);
}

void Scenario::validate() const {
  if (m < 2) throw ValidationError("scenario: m must be at least 2");
  if (p < 1) throw ValidationError("scenario: p must be at least 1");
  if (!(offset > 0.0)) throw ValidationError("scenario: offset must be positive");
  if (baseline_scale < 0.0 || !std::isfinite(baseline_scale))
    throw ValidationError("scenario: baseline_scale must be nonnegative");
  if (grf_variance < 0.0) throw ValidationError("scenario: grf_variance must be nonnegative");
  if (!(invgamma_shape > 0.0) || !(invgamma_rate > 0.0))
    throw ValidationError("scenario: inverse-gamma parameters must be positive");
  const int f = resolved_fine_grid();
  if (f < m) throw ValidationError("scenario: fine grid must be at least as fine as unit cells");
  if (f % m != 0)
    throw ValidationError("scenario: fine grid must subdivide unit cells exactly");
  if (structured && grf_variance > 0.0 && f * f > kMaxGrfPoints)
    throw ValidationError(
        "scenario: structured field needs a dense factorization over the fine grid; "
        "reduce fine_grid or disable the structured component");
  if (beta_true.size() > 0 && beta_true.size() != p)
    throw ValidationError("scenario: beta_true length must equal p");
}

Eigen::VectorXd default_beta_pattern(int p) {
  Eigen::VectorXd beta = Eigen::VectorXd::Zero(p);
  const int block = p >= 100 ? 5 : 2;
  for (int j = 0; j < std::min(block, p); ++j) beta[j] = -1.0;
  for (int j = block; j < std::min(2 * block, p); ++j) beta[j] = 1.0;
  return beta;
}

RegionGraph lattice_graph(int m) {
  std::vector<std::string> ids;
  ids.reserve(m * m);
  for (int i = 0; i < m * m; ++i) ids.push_back(cell_id(i));
  std::vector<EdgeSpec> edges;
  for (int r = 0; r < m; ++r) {
    for (int c = 0; c < m; ++c) {
      const int v = r * m + c;
      if (c + 1 < m) edges.push_back({ids[v], ids[v + 1], 1.0});
      if (r + 1 < m) edges.push_back({ids[v], ids[v + m], 1.0});
    }
  }
  return build_graph(edges, ids);
}

GrfSampler::GrfSampler(const std::vector<Eigen::Vector2d>& points, double range,
                       double variance) {
  const int n = static_cast<int>(points.size());
  if (n > kMaxGrfPoints)
    throw ValidationError("sample_grf: too many points for dense factorization");
  if (!(range > 0.0)) throw ValidationError("sample_grf: range must be positive");
  if (!(variance > 0.0)) throw ValidationError("sample_grf: variance must be positive");

  Eigen::MatrixXd cov(n, n);
  for (int i = 0; i < n; ++i) {
    cov(i, i) = variance;
    for (int j = 0; j < i; ++j) {
      const double v = variance * std::exp(-(points[i] - points[j]).norm() / range);
      cov(i, j) = v;
      cov(j, i) = v;
    }
  }
  Eigen::LLT<Eigen::MatrixXd> llt(cov);
  if (llt.info() != Eigen::Success) {
    cov.diagonal().array() += 1e-10;  // one jitter retry
    llt.compute(cov);
    if (llt.info() != Eigen::Success)
      throw NumericalError("sample_grf: covariance factorization failed");
  }
  chol_ = llt.matrixL();
}

Eigen::VectorXd GrfSampler::draw(std::uint64_t seed) const {
  std::mt19937_64 rng = make_rng(seed, kStreamGrf);
  std::normal_distribution<double> gauss(0.0, 1.0);
  Eigen::VectorXd z(size());
  for (int i = 0; i < size(); ++i) z[i] = gauss(rng);
  return chol_ * z;
}

Eigen::VectorXd sample_grf(const std::vector<Eigen::Vector2d>& points, double range,
                           double variance, std::uint64_t seed) {
  return GrfSampler(points, range, variance).draw(seed);
}

Eigen::VectorXd draw_poisson_counts(const Eigen::VectorXd& lambda, std::uint64_t seed) {
  std::mt19937_64 rng = make_rng(seed, kStreamCounts);
  Eigen::VectorXd y(lambda.size());
  for (Eigen::Index i = 0; i < lambda.size(); ++i) {
    const double lam = lambda[i];
    if (!(lam > 0.0) || !std::isfinite(lam))
      throw NumericalError("draw_poisson_counts: intensity must be positive and finite");
    if (lam < kPoissonNormalCutoff) {
      std::poisson_distribution<long long> pois(lam);
      y[i] = static_cast<double>(pois(rng));
    } else {
      // Normal approximation keeps huge heavy-tail draws from overflowing
      // the integer sampler; indistinguishable at this magnitude.
      std::normal_distribution<double> gauss(lam, std::sqrt(lam));
      y[i] = std::max(0.0, std::round(gauss(rng)));
    }
  }
  return y;
}

ReplicateGenerator::ReplicateGenerator(Scenario sc) : scenario_(std::move(sc)) {
  scenario_.validate();
  const int m = scenario_.m;
  const int f = scenario_.resolved_fine_grid();
  const double h = static_cast<double>(m) / f;
  const int q = f / m;

  graph_ = lattice_graph(m);
  baseline_fine_.resize(f * f);
  fine_to_cell_.resize(f * f);
  std::vector<Eigen::Vector2d> midpoints;
  midpoints.reserve(f * f);
  for (int r = 0; r < f; ++r) {
    for (int c = 0; c < f; ++c) {
      const Eigen::Vector2d s((c + 0.5) * h, (r + 0.5) * h);
      midpoints.push_back(s);
      baseline_fine_[r * f + c] = scenario_.baseline_scale * s.norm() / (4.0 * m);
      fine_to_cell_[r * f + c] = (r / q) * m + (c / q);
    }
  }
  if (scenario_.structured && scenario_.grf_variance > 0.0)
    grf_ = std::make_shared<const GrfSampler>(midpoints, scenario_.resolved_range(),
                                              scenario_.grf_variance);
}

Replicate ReplicateGenerator::generate(std::uint64_t rep_seed) const {
  const Scenario& sc = scenario_;
  const int n = sc.cells();
  const int f = sc.resolved_fine_grid();
  const int nf = f * f;
  const double fine_area = static_cast<double>(sc.m) * sc.m / nf;

  Replicate rep;
  rep.seed = rep_seed;
  rep.graph = graph_;

  rep.eps_structured =
      grf_ ? grf_->draw(rep_seed) : Eigen::VectorXd::Zero(nf);

  rep.unstructured_variance = Eigen::VectorXd::Zero(nf);
  rep.eps_unstructured = Eigen::VectorXd::Zero(nf);
  if (sc.unstructured) {
    std::mt19937_64 var_rng = make_rng(rep_seed, kStreamVariances);
    std::gamma_distribution<double> gamma(sc.invgamma_shape, 1.0 / sc.invgamma_rate);
    for (int u = 0; u < nf; ++u)
      rep.unstructured_variance[u] = 1.0 / gamma(var_rng);  // inverse gamma, rate form
    std::mt19937_64 noise_rng = make_rng(rep_seed, kStreamNoise);
    std::normal_distribution<double> gauss(0.0, 1.0);
    for (int u = 0; u < nf; ++u)
      rep.eps_unstructured[u] =
          std::sqrt(rep.unstructured_variance[u]) * gauss(noise_rng);
  }

  std::mt19937_64 cov_rng = make_rng(rep_seed, kStreamCovariates);
  std::uniform_real_distribution<double> unif(-0.5, 0.5);
  Eigen::MatrixXd X(n, sc.p);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < sc.p; ++j) X(i, j) = unif(cov_rng);

  // Midpoint quadrature of the conditional intensity over each unit cell.
  Eigen::VectorXd mass = Eigen::VectorXd::Zero(n);
  for (int u = 0; u < nf; ++u)
    mass[fine_to_cell_[u]] +=
        std::exp(baseline_fine_[u] + rep.eps_structured[u] + rep.eps_unstructured[u]) *
        fine_area;

  const Eigen::VectorXd beta = sc.resolved_beta();
  rep.lambda.resize(n);
  for (int i = 0; i < n; ++i)
    rep.lambda[i] = sc.offset * std::exp(X.row(i).dot(beta)) * mass[i];
  if (!rep.lambda.allFinite())
    throw NumericalError("generate_replicate: intensity overflowed");

  const Eigen::VectorXd y = draw_poisson_counts(rep.lambda, rep_seed);

  std::vector<std::string> names;
  names.reserve(sc.p);
  for (int j = 0; j < sc.p; ++j) names.push_back("x" + std::to_string(j + 1));
  rep.data = make_dataset(y, Eigen::VectorXd::Constant(n, sc.offset),
                          Eigen::VectorXd::Ones(n), std::move(X), graph_.region_ids,
                          std::move(names));
  return rep;
}

Replicate generate_replicate(const Scenario& sc, std::uint64_t rep_seed) {
  return ReplicateGenerator(sc).generate(rep_seed);
}

namespace {

double quantile_type7(std::vector<double> v, double q) {
  std::sort(v.begin(), v.end());
  const double pos = q * (static_cast<double>(v.size()) - 1.0);
  const std::size_t lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = static_cast<std::size_t>(std::ceil(pos));
  const double frac = pos - static_cast<double>(lo);
  return v[lo] * (1.0 - frac) + v[hi] * frac;
}

}  // namespace

ReplicateMetrics evaluate_replicates(const std::vector<InferenceResult>& results,
                                     const Eigen::VectorXd& beta_true) {
  if (results.empty()) throw ValidationError("evaluate_replicates: no replicates");
  const int p = static_cast<int>(beta_true.size());
  for (const auto& r : results)
    if (r.b_hat.size() != p)
      throw ValidationError("evaluate_replicates: replicate dimension mismatch");

  ReplicateMetrics m;
  m.mean_error.resize(p);
  m.error_q05.resize(p);
  m.error_q95.resize(p);

  long covered = 0, total = 0;
  long reject_null = 0, total_null = 0;
  long reject_signal = 0, total_signal = 0;
  for (int j = 0; j < p; ++j) {
    std::vector<double> errors;
    errors.reserve(results.size());
    double err_sum = 0.0;
    for (const auto& r : results) {
      const double alpha_sig = 1.0 - r.level;
      ++total;
      if (r.ci_lower[j] <= beta_true[j] && beta_true[j] <= r.ci_upper[j]) ++covered;
      const bool reject = r.p_values[j] < alpha_sig;
      if (beta_true[j] == 0.0) {
        ++total_null;
        if (reject) ++reject_null;
      } else {
        ++total_signal;
        if (reject) ++reject_signal;
      }
      const double err = r.b_hat[j] - beta_true[j];
      errors.push_back(err);
      err_sum += err;
    }
    m.mean_error[j] = err_sum / static_cast<double>(results.size());
    m.error_q05[j] = quantile_type7(errors, 0.05);
    m.error_q95[j] = quantile_type7(std::move(errors), 0.95);
  }
  m.coverage = static_cast<double>(covered) / static_cast<double>(total);
  m.type1_error = total_null > 0
                      ? static_cast<double>(reject_null) / static_cast<double>(total_null)
                      : 0.0;
  m.power = total_signal > 0
                ? static_cast<double>(reject_signal) / static_cast<double>(total_signal)
                : 0.0;
  return m;
}

}  // namespace spcox
