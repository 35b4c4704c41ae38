#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "spcox/errors.hpp"
#include "spcox/solver.hpp"
#include "support/instances.hpp"
#include "support/oracles.hpp"

using namespace spcox;

namespace {

Dataset single_region(double y, double exposure) {
  return make_dataset(Eigen::VectorXd::Constant(1, y), Eigen::VectorXd::Constant(1, exposure),
                      Eigen::VectorXd::Ones(1), Eigen::MatrixXd::Zero(1, 0));
}

RegionGraph loner() { return build_graph({}, {"only"}); }

// KKT residuals for the beta block at the returned solution.
void check_beta_kkt(const Dataset& d, const FitResult& fr, const PenaltyConfig& pcfg,
                    const IncidenceMatrix& B) {
  const Eigen::VectorXd grad_neg_ll = -grad_loglik(d, fr.theta).beta;
  const double f_scale = std::max(1.0, std::abs(fr.objective()));
  for (int j = 0; j < d.p(); ++j) {
    if (fr.theta.beta[j] != 0.0) {
      const double resid =
          grad_neg_ll[j] + pcfg.tau * (fr.theta.beta[j] > 0 ? 1.0 : -1.0);
      CHECK(std::abs(resid) <= 1e-3 * f_scale);
    } else {
      CHECK(std::abs(grad_neg_ll[j]) <= pcfg.tau + 1e-3);
    }
  }
  (void)B;
}

}  // namespace

TEST_CASE("objective recomposes from its parts") {
  const Dataset d = single_region(0, 1.0);
  const RegionGraph g = loner();
  const IncidenceMatrix B = incidence(g);
  PenaltyConfig pcfg;
  pcfg.delta = 0.0;
  ParamVector theta;
  theta.alpha = Eigen::VectorXd::Zero(1);
  theta.beta.resize(0);
  CHECK(objective(d, theta, B, pcfg) == doctest::Approx(1.0));  // -loglik = e^0

  // additive sparsity term
  const auto inst = testing::random_instance(5, 2, 19);
  const IncidenceMatrix Bi = incidence(inst.graph);
  ParamVector th = testing::random_theta(5, 2, 3);
  PenaltyConfig with_tau;
  with_tau.tau = 2.0;
  with_tau.delta = 0.0;
  PenaltyConfig no_tau = with_tau;
  no_tau.tau = 0.0;
  CHECK(objective(inst.data, th, Bi, with_tau) ==
        doctest::Approx(objective(inst.data, th, Bi, no_tau) + 2.0 * th.beta.lpNorm<1>()));

  // recomposition against independently computed pieces
  PenaltyConfig full;
  full.gamma = 1.3;
  full.tau = 0.7;
  full.fusion = FusionKind::L2;
  full.delta = 0.05;
  const double expected = -loglik(inst.data, th) +
                          full.gamma * l2_fusion(th.alpha, Bi, full).value +
                          full.tau * th.beta.lpNorm<1>();
  CHECK(objective(inst.data, th, Bi, full) == doctest::Approx(expected));
}

TEST_CASE("single-region fit recovers the closed-form rate") {
  const Dataset d = single_region(4, 2.0);  // MLE: log(4/2)
  PenaltyConfig pcfg;
  SolverConfig scfg;
  const FitResult fr = fit(d, loner(), pcfg, scfg);
  CHECK(fr.converged);
  CHECK(std::abs(fr.theta.alpha[0] - std::log(2.0)) <= 1e-4);
}

TEST_CASE("huge tau zeroes the effects exactly") {
  const auto inst = testing::random_instance(6, 3, 23, 1);
  PenaltyConfig pcfg;
  pcfg.tau = 1e6;
  SolverConfig scfg;
  const FitResult fr = fit(inst.data, inst.graph, pcfg, scfg);
  CHECK(fr.theta.beta.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("strong fusion equalizes twin regions") {
  const RegionGraph g = build_graph({{"a", "b", 1.0}}, {"a", "b"});
  const Dataset d = make_dataset((Eigen::VectorXd(2) << 6, 2).finished(),
                                 Eigen::VectorXd::Ones(2), Eigen::VectorXd::Ones(2),
                                 Eigen::MatrixXd::Zero(2, 0));
  PenaltyConfig pcfg;
  pcfg.gamma = 1e4;
  pcfg.fusion = FusionKind::L2;
  pcfg.delta = 0.0;
  SolverConfig scfg;
  scfg.max_iter = 20000;
  const FitResult fr = fit(d, g, pcfg, scfg);
  CHECK(std::abs(fr.theta.alpha[0] - fr.theta.alpha[1]) <= 1e-3);
}

TEST_CASE("objective trace is monotone") {
  for (std::uint64_t seed : {1ULL, 2ULL, 3ULL}) {
    const auto inst = testing::random_instance(10, 3, seed);
    PenaltyConfig pcfg;
    pcfg.gamma = 1.0;
    pcfg.tau = 0.2;
    pcfg.fusion = seed % 2 ? FusionKind::L2 : FusionKind::L1Smoothed;
    const FitResult fr = fit(inst.data, inst.graph, pcfg, SolverConfig{});
    for (std::size_t t = 1; t < fr.objective_trace.size(); ++t)
      CHECK(fr.objective_trace[t] <=
            fr.objective_trace[t - 1] +
                1e-10 * std::max(1.0, std::abs(fr.objective_trace[t - 1])));
  }
}

TEST_CASE("joint fit matches the min-norm Newton oracle without penalties") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const int n = 5 + static_cast<int>(seed % 3);
    const int p = 2;
    const auto inst = testing::random_instance(n, p, 500 + seed, 1);
    PenaltyConfig pcfg;
    pcfg.gamma = 0.0;
    pcfg.tau = 0.0;
    SolverConfig scfg;
    scfg.tol = 1e-12;
    scfg.max_iter = 200000;
    const FitResult fr = fit(inst.data, inst.graph, pcfg, scfg);

    ParamVector init;
    init.alpha = ((inst.data.y.array() + 0.5) /
                  (inst.data.area.array() * inst.data.offset.array()))
                     .log()
                     .matrix();
    init.beta = Eigen::VectorXd::Zero(p);
    const ParamVector oracle = testing::newton_poisson_fit(inst.data, init);

    CHECK((fr.theta.alpha - oracle.alpha).lpNorm<Eigen::Infinity>() <= 1e-4);
    CHECK((fr.theta.beta - oracle.beta).lpNorm<Eigen::Infinity>() <= 1e-4);
  }
}

TEST_CASE("beta KKT conditions hold at the returned solution") {
  for (std::uint64_t seed = 0; seed < 6; ++seed) {
    const int n = 8 + static_cast<int>(seed % 5);
    const int p = 3;
    const auto inst = testing::random_instance(n, p, 700 + seed, 1);
    PenaltyConfig pcfg;
    pcfg.gamma = 0.5;
    pcfg.tau = 0.4;
    pcfg.fusion = seed % 2 ? FusionKind::L2 : FusionKind::L1Smoothed;
    SolverConfig scfg;
    scfg.tol = 1e-12;  // the objective-change rule certifies KKT only when tight
    scfg.max_iter = 300000;
    const FitResult fr = fit(inst.data, inst.graph, pcfg, scfg);
    check_beta_kkt(inst.data, fr, pcfg, incidence(inst.graph));
  }
}

TEST_CASE("solution is invariant to region permutation") {
  const auto inst = testing::random_instance(9, 2, 37, 1);
  PenaltyConfig pcfg;
  pcfg.gamma = 0.8;
  pcfg.tau = 0.1;
  SolverConfig scfg;
  scfg.tol = 1e-10;
  scfg.max_iter = 50000;
  const FitResult base = fit(inst.data, inst.graph, pcfg, scfg);

  // permute regions and rebuild the graph with permuted ids
  const int n = inst.data.n();
  std::vector<int> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  std::mt19937_64 rng(99);
  std::shuffle(perm.begin(), perm.end(), rng);

  std::vector<int> inv(n);
  for (int i = 0; i < n; ++i) inv[perm[i]] = i;

  Eigen::VectorXd y(n), offset(n), area(n);
  Eigen::MatrixXd X(n, inst.data.p());
  std::vector<std::string> ids(n);
  for (int i = 0; i < n; ++i) {
    y[i] = inst.data.y[perm[i]];
    offset[i] = inst.data.offset[perm[i]];
    area[i] = inst.data.area[perm[i]];
    X.row(i) = inst.data.X.row(perm[i]);
    ids[i] = inst.graph.region_ids[perm[i]];
  }
  std::vector<EdgeSpec> edges;
  for (const Edge& e : inst.graph.edges)
    edges.push_back({inst.graph.region_ids[e.i], inst.graph.region_ids[e.j], e.weight});
  const RegionGraph pg = build_graph(edges, ids);
  const Dataset pd = make_dataset(y, offset, area, X, ids, {});
  const FitResult permuted = fit(pd, pg, pcfg, scfg);

  CHECK((permuted.theta.beta - base.theta.beta).lpNorm<Eigen::Infinity>() <= 1e-6);
  for (int i = 0; i < n; ++i)
    CHECK(std::abs(permuted.theta.alpha[i] - base.theta.alpha[perm[i]]) <= 1e-6);
}

TEST_CASE("block-alternating variant tracks the joint solver") {
  // closed-form single region
  const Dataset d1 = single_region(4, 2.0);
  SolverConfig scfg;
  const FitResult b1 = fit_block_alternating(d1, loner(), PenaltyConfig{}, scfg);
  CHECK(std::abs(b1.theta.alpha[0] - std::log(2.0)) <= 1e-4);

  // huge tau still zeroes effects
  const auto inst = testing::random_instance(6, 3, 23, 1);
  PenaltyConfig big_tau;
  big_tau.tau = 1e6;
  const FitResult b2 = fit_block_alternating(inst.data, inst.graph, big_tau, scfg);
  CHECK(b2.theta.beta.cwiseAbs().maxCoeff() == 0.0);

  // twin regions equalized under strong fusion
  const RegionGraph twins = build_graph({{"a", "b", 1.0}}, {"a", "b"});
  const Dataset dtwin = make_dataset((Eigen::VectorXd(2) << 6, 2).finished(),
                                     Eigen::VectorXd::Ones(2), Eigen::VectorXd::Ones(2),
                                     Eigen::MatrixXd::Zero(2, 0));
  PenaltyConfig strong;
  strong.gamma = 1e4;
  strong.fusion = FusionKind::L2;
  strong.delta = 0.0;
  SolverConfig long_run;
  long_run.max_iter = 20000;
  const FitResult b3 = fit_block_alternating(dtwin, twins, strong, long_run);
  CHECK(std::abs(b3.theta.alpha[0] - b3.theta.alpha[1]) <= 1e-3);

  // agreement with the joint path on a penalized instance
  PenaltyConfig pcfg;
  pcfg.gamma = 0.5;
  pcfg.tau = 0.2;
  SolverConfig tight;
  tight.tol = 1e-11;
  tight.max_iter = 200000;
  const FitResult joint = fit(inst.data, inst.graph, pcfg, tight);
  const FitResult blocks = fit_block_alternating(inst.data, inst.graph, pcfg, tight);
  CHECK((joint.theta.alpha - blocks.theta.alpha).lpNorm<Eigen::Infinity>() <= 1e-3);
  CHECK((joint.theta.beta - blocks.theta.beta).lpNorm<Eigen::Infinity>() <= 1e-3);

  // p = 0 reduces to baseline-only descent and matches the Newton oracle in theta
  const auto inst0 = testing::random_instance(7, 0, 41, 1);
  SolverConfig tight0 = tight;
  const FitResult b0 = fit_block_alternating(inst0.data, inst0.graph, PenaltyConfig{}, tight0);
  ParamVector init0;
  init0.alpha = ((inst0.data.y.array() + 0.5) /
                 (inst0.data.area.array() * inst0.data.offset.array()))
                    .log()
                    .matrix();
  init0.beta.resize(0);
  const ParamVector oracle0 = testing::newton_poisson_fit(inst0.data, init0);
  CHECK((b0.theta.alpha - oracle0.alpha).lpNorm<Eigen::Infinity>() <= 1e-4);

  // with covariates the unpenalized optimum is a manifold; block sweeps land on
  // it too, so compare the identifiable fit rather than raw coordinates
  PenaltyConfig none;
  none.delta = 0.0;
  const FitResult bj = fit_block_alternating(inst.data, inst.graph, none, tight);
  ParamVector initj;
  initj.alpha = ((inst.data.y.array() + 0.5) /
                 (inst.data.area.array() * inst.data.offset.array()))
                    .log()
                    .matrix();
  initj.beta = Eigen::VectorXd::Zero(inst.data.p());
  const ParamVector oraclej = testing::newton_poisson_fit(inst.data, initj);
  const Eigen::VectorXd eta_block = linear_predictor(inst.data, bj.theta);
  const Eigen::VectorXd eta_oracle = linear_predictor(inst.data, oraclej);
  CHECK((eta_block - eta_oracle).lpNorm<Eigen::Infinity>() <= 1e-4);
  CHECK(std::abs(loglik(inst.data, bj.theta) - loglik(inst.data, oraclej)) <= 1e-4);
}

TEST_CASE("paper line search variant still descends") {
  const auto inst = testing::random_instance(6, 2, 61, 1);
  PenaltyConfig pcfg;
  pcfg.gamma = 0.3;
  pcfg.tau = 0.1;
  SolverConfig scfg;
  scfg.paper_line_search = true;
  const FitResult fr = fit(inst.data, inst.graph, pcfg, scfg);
  CHECK_FALSE(fr.diverged);
  for (std::size_t t = 1; t < fr.objective_trace.size(); ++t)
    CHECK(fr.objective_trace[t] <=
          fr.objective_trace[t - 1] +
              1e-10 * std::max(1.0, std::abs(fr.objective_trace[t - 1])));
}

TEST_CASE("config validation and dimension checks") {
  const auto inst = testing::random_instance(4, 1, 8);
  SolverConfig bad;
  bad.tol = 0.0;
  CHECK_THROWS_AS(fit(inst.data, inst.graph, PenaltyConfig{}, bad), ValidationError);
  bad = SolverConfig{};
  bad.backtrack_b = 1.0;
  CHECK_THROWS_AS(fit(inst.data, inst.graph, PenaltyConfig{}, bad), ValidationError);

  const RegionGraph wrong = build_graph({}, {"x", "y"});
  CHECK_THROWS_AS(fit(inst.data, wrong, PenaltyConfig{}, SolverConfig{}), ValidationError);
}
