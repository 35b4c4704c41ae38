#include <doctest.h>

#include <cmath>
#include <random>

#include "spcox/errors.hpp"
#include "spcox/rng.hpp"
#include "spcox/simulate.hpp"

using namespace spcox;

namespace {

double sample_mean(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

double sample_var(const std::vector<double>& v) {
  const double m = sample_mean(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return s / static_cast<double>(v.size() - 1);
}

}  // namespace

TEST_CASE("scenario validation and resolution") {
  Scenario sc;
  sc.m = 10;
  CHECK(sc.resolved_fine_grid() == 60);
  sc.m = 7;
  CHECK(sc.resolved_fine_grid() == 63);  // least multiple of m at least 60
  CHECK(sc.resolved_range() == doctest::Approx(1.4));

  sc.fine_grid = 64;  // not a multiple of 7
  CHECK_THROWS_AS(sc.validate(), ValidationError);
  sc.fine_grid = 0;
  sc.m = 1;
  CHECK_THROWS_AS(sc.validate(), ValidationError);
  sc.m = 10;
  sc.beta_true = Eigen::VectorXd::Zero(3);  // p defaults to 10
  CHECK_THROWS_AS(sc.validate(), ValidationError);
}

TEST_CASE("default beta pattern follows the two-block layout") {
  const Eigen::VectorXd b10 = default_beta_pattern(10);
  CHECK(b10[0] == -1.0);
  CHECK(b10[1] == -1.0);
  CHECK(b10[2] == 1.0);
  CHECK(b10[3] == 1.0);
  CHECK(b10.tail(6).cwiseAbs().maxCoeff() == 0.0);
  const Eigen::VectorXd b100 = default_beta_pattern(100);
  CHECK(b100.head(5).maxCoeff() == -1.0);
  CHECK(b100.segment(5, 5).minCoeff() == 1.0);
  CHECK(b100.tail(90).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("lattice graph has 4-neighbour structure") {
  const RegionGraph g = lattice_graph(5);
  CHECK(g.n == 25);
  CHECK(g.edge_count() == 2 * 5 * 4);  // 2 m (m-1)
  for (const Edge& e : g.edges) CHECK(e.weight == 1.0);
}

TEST_CASE("exponential covariance sampler moments") {
  const double variance = 1.3, range = 2.0;
  const std::vector<Eigen::Vector2d> pts = {{0.0, 0.0}, {2.0, 0.0}};
  const GrfSampler sampler(pts, range, variance);

  const int draws = 2000;
  std::vector<double> a(draws), b(draws);
  for (int r = 0; r < draws; ++r) {
    const Eigen::VectorXd z = sampler.draw(derive_seed(77, r));
    a[r] = z[0];
    b[r] = z[1];
  }
  const double expected_cov = variance * std::exp(-1.0);  // dist/range = 1

  // mean ~ N(0, var/n); covariance entries within 3 standard errors
  CHECK(std::abs(sample_mean(a)) <= 3.0 * std::sqrt(variance / draws));
  const double var_se = variance * std::sqrt(2.0 / (draws - 1));
  CHECK(std::abs(sample_var(a) - variance) <= 3.0 * var_se);

  double cov = 0.0;
  const double ma = sample_mean(a), mb = sample_mean(b);
  for (int r = 0; r < draws; ++r) cov += (a[r] - ma) * (b[r] - mb);
  cov /= draws - 1;
  const double cov_se =
      std::sqrt((variance * variance + expected_cov * expected_cov) / draws);
  CHECK(std::abs(cov - expected_cov) <= 3.0 * cov_se);

  CHECK_THROWS_AS(GrfSampler(pts, -1.0, 1.0), ValidationError);
  CHECK_THROWS_AS(GrfSampler(std::vector<Eigen::Vector2d>(6001), 1.0, 1.0),
                  ValidationError);
}

TEST_CASE("flat scenario gives constant intensity equal to the offset") {
  Scenario sc;
  sc.m = 4;
  sc.p = 2;
  sc.beta_true = Eigen::VectorXd::Zero(2);
  sc.baseline_scale = 0.0;
  sc.structured = false;
  sc.unstructured = false;
  sc.offset = 2.0;
  const Replicate rep = generate_replicate(sc, 99);
  CHECK((rep.lambda.array() - 2.0).abs().maxCoeff() <= 1e-12);
  CHECK(rep.data.y.size() == 16);
  CHECK(rep.data.offset[0] == 2.0);
  CHECK(rep.data.area[0] == 1.0);
}

TEST_CASE("default scenario wires the documented pattern") {
  Scenario sc;  // m = 10, p = 10
  const Replicate rep = generate_replicate(sc, 1);
  CHECK(rep.data.n() == 100);
  CHECK(rep.data.p() == 10);
  const Eigen::VectorXd beta = sc.resolved_beta();
  CHECK(beta[0] == -1.0);
  CHECK(beta[3] == 1.0);
  CHECK(rep.lambda.minCoeff() > 0.0);
  CHECK(rep.data.X.cwiseAbs().maxCoeff() <= 0.5);
  // heteroskedastic cell noise: variances differ across the fine grid
  CHECK(rep.unstructured_variance.maxCoeff() >
        rep.unstructured_variance.minCoeff() + 1e-6);
}

TEST_CASE("replicates are deterministic given scenario and seed") {
  Scenario sc;
  sc.m = 5;
  sc.p = 3;
  sc.seed = 4;
  const ReplicateGenerator gen(sc);
  const Replicate a = gen.generate(123);
  const Replicate b = gen.generate(123);
  CHECK((a.data.y - b.data.y).cwiseAbs().maxCoeff() == 0.0);
  CHECK((a.data.X - b.data.X).cwiseAbs().maxCoeff() == 0.0);
  CHECK((a.lambda - b.lambda).cwiseAbs().maxCoeff() == 0.0);
  CHECK((a.eps_structured - b.eps_structured).cwiseAbs().maxCoeff() == 0.0);
  CHECK((a.eps_unstructured - b.eps_unstructured).cwiseAbs().maxCoeff() == 0.0);
  const Replicate c = gen.generate(124);
  CHECK((a.data.y - c.data.y).cwiseAbs().maxCoeff() > 0.0);
}

TEST_CASE("counts are conditionally Poisson given the latent field") {
  Scenario sc;
  sc.m = 3;
  sc.p = 1;
  sc.beta_true = Eigen::VectorXd::Zero(1);
  const Replicate rep = generate_replicate(sc, 5);
  const double lam = rep.lambda[4];

  const int draws = 2000;
  std::vector<double> y(draws);
  for (int r = 0; r < draws; ++r)
    y[r] = draw_poisson_counts(rep.lambda, derive_seed(900, r))[4];

  const double se_mean = std::sqrt(lam / draws);
  CHECK(std::abs(sample_mean(y) - lam) <= 3.0 * se_mean);
  // Var(sample variance) ~ (mu4 - sigma^4)/n with Poisson mu4 = lam(1+3lam)
  const double mu4 = lam * (1.0 + 3.0 * lam);
  const double se_var = std::sqrt((mu4 - lam * lam) / draws) + 1e-9;
  CHECK(std::abs(sample_var(y) - lam) <= 3.0 * se_var);
}

TEST_CASE("replicate cell means match an independent latent-field oracle") {
  Scenario sc;
  sc.m = 4;
  sc.p = 2;
  sc.beta_true = Eigen::VectorXd::Zero(2);
  sc.beta_true[0] = 0.5;
  sc.seed = 31;
  const ReplicateGenerator gen(sc);
  const int cell = 5;  // fixed unit cell

  const int reps = 500;
  std::vector<double> counts(reps);
  for (int r = 0; r < reps; ++r)
    counts[r] = gen.generate(derive_seed(sc.seed, r)).data.y[cell];

  // independent path: exact marginal of the structured field on this cell's
  // fine midpoints plus fresh heteroskedastic noise and covariates
  const int f = sc.resolved_fine_grid();
  const int q = f / sc.m;
  const double h = static_cast<double>(sc.m) / f;
  const int cr = (cell / sc.m) * q, cc = (cell % sc.m) * q;
  std::vector<Eigen::Vector2d> pts;
  std::vector<double> base;
  for (int r = 0; r < q; ++r)
    for (int c = 0; c < q; ++c) {
      const Eigen::Vector2d s((cc + c + 0.5) * h, (cr + r + 0.5) * h);
      pts.push_back(s);
      base.push_back(s.norm() / (4.0 * sc.m));
    }
  const GrfSampler marginal(pts, sc.resolved_range(), sc.grf_variance);

  const int oracle_draws = 4000;
  std::mt19937_64 rng(424242);
  std::gamma_distribution<double> gamma_dist(sc.invgamma_shape, 1.0 / sc.invgamma_rate);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> unif(-0.5, 0.5);
  std::vector<double> lam(oracle_draws);
  for (int t = 0; t < oracle_draws; ++t) {
    const Eigen::VectorXd grf = marginal.draw(derive_seed(171717, t));
    double mass = 0.0;
    for (std::size_t u = 0; u < pts.size(); ++u) {
      const double v = 1.0 / gamma_dist(rng);
      mass += std::exp(base[u] + grf[u] + std::sqrt(v) * gauss(rng)) * h * h;
    }
    double xb = 0.0;
    for (int j = 0; j < sc.p; ++j) xb += unif(rng) * sc.beta_true[j];
    lam[t] = sc.offset * std::exp(xb) * mass;
  }

  const double se = std::sqrt(sample_var(counts) / reps + sample_var(lam) / oracle_draws);
  CHECK(std::abs(sample_mean(counts) - sample_mean(lam)) <= 3.0 * se);
}

TEST_CASE("evaluate_replicates closed-form confusion") {
  auto mk = [](std::vector<double> b_hat, std::vector<double> lo, std::vector<double> hi,
               std::vector<double> pv) {
    InferenceResult r;
    const int p = static_cast<int>(b_hat.size());
    r.b_hat = Eigen::Map<Eigen::VectorXd>(b_hat.data(), p);
    r.beta_hat = r.b_hat;
    r.ci_lower = Eigen::Map<Eigen::VectorXd>(lo.data(), p);
    r.ci_upper = Eigen::Map<Eigen::VectorXd>(hi.data(), p);
    r.p_values = Eigen::Map<Eigen::VectorXd>(pv.data(), p);
    r.z_scores = Eigen::VectorXd::Zero(p);
    r.sigma_hat = Eigen::VectorXd::Ones(p);
    r.level = 0.95;
    return r;
  };
  Eigen::VectorXd truth(2);
  truth << 1.0, 0.0;

  // single replicate covering everything
  const auto all_cover = mk({1.0, 0.0}, {0.5, -0.5}, {1.5, 0.5}, {0.01, 0.5});
  const ReplicateMetrics m1 = evaluate_replicates({all_cover}, truth);
  CHECK(m1.coverage == 1.0);
  CHECK(m1.power == 1.0);       // signal coordinate rejected
  CHECK(m1.type1_error == 0.0);  // null coordinate not rejected

  // p-values all 1: nothing rejected
  const auto none = mk({1.0, 0.0}, {0.5, -0.5}, {1.5, 0.5}, {1.0, 1.0});
  const ReplicateMetrics m2 = evaluate_replicates({none}, truth);
  CHECK(m2.type1_error == 0.0);
  CHECK(m2.power == 0.0);

  // hand-computed confusion over three replicates
  const auto r1 = mk({1.2, 0.1}, {0.8, -0.2}, {1.6, 0.4}, {0.01, 0.20});
  const auto r2 = mk({0.4, 0.3}, {0.1, 0.25}, {0.7, 0.35}, {0.04, 0.01});
  const auto r3 = mk({1.0, -0.1}, {0.9, -0.3}, {1.1, 0.1}, {0.60, 0.90});
  const ReplicateMetrics m3 = evaluate_replicates({r1, r2, r3}, truth);
  // coverage: r1 covers both, r2 covers neither, r3 covers both -> 4/6
  CHECK(m3.coverage == doctest::Approx(4.0 / 6.0));
  // signal coordinate rejected in r1, r2 -> power 2/3
  CHECK(m3.power == doctest::Approx(2.0 / 3.0));
  // null coordinate rejected in r2 only -> type I 1/3
  CHECK(m3.type1_error == doctest::Approx(1.0 / 3.0));
  // element-wise error summaries for the signal coordinate
  CHECK(m3.mean_error[0] == doctest::Approx((0.2 - 0.6 + 0.0) / 3.0));

  CHECK_THROWS_AS(evaluate_replicates({}, truth), ValidationError);
}
