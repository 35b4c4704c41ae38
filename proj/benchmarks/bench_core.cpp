#include <benchmark/benchmark.h>

#include <random>

#include "spcox/inference.hpp"
#include "spcox/predict.hpp"
#include "spcox/rng.hpp"
#include "spcox/simulate.hpp"
#include "spcox/solver.hpp"

using namespace spcox;

namespace {

Eigen::MatrixXd random_spd(int p, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  Eigen::MatrixXd A(p, p);
  for (int i = 0; i < p; ++i)
    for (int j = 0; j < p; ++j) A(i, j) = gauss(rng);
  return A * A.transpose() + 0.5 * Eigen::MatrixXd::Identity(p, p);
}

void BM_LatticeLaplacian(benchmark::State& state) {
  const int m = static_cast<int>(state.range(0));
  const RegionGraph g = lattice_graph(m);
  for (auto _ : state) {
    benchmark::DoNotOptimize(laplacian(g, 1e-3));
  }
  state.SetLabel(std::to_string(m * m) + " regions");
}
BENCHMARK(BM_LatticeLaplacian)->Arg(30)->Arg(100);

void BM_GenerateReplicate(benchmark::State& state) {
  Scenario sc;
  sc.m = static_cast<int>(state.range(0));
  sc.p = 10;
  const ReplicateGenerator gen(sc);  // covariance factorization amortized here
  std::uint64_t r = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(gen.generate(derive_seed(1, r++)));
  }
}
BENCHMARK(BM_GenerateReplicate)->Arg(10)->Unit(benchmark::kMillisecond);

void BM_Fit(benchmark::State& state) {
  Scenario sc;
  sc.m = static_cast<int>(state.range(0));
  sc.p = 10;
  const Replicate rep = generate_replicate(sc, 7);
  PenaltyConfig pcfg;
  pcfg.fusion = FusionKind::L2;
  pcfg.gamma = 2.0;
  pcfg.tau = 0.05;
  SolverConfig scfg;
  scfg.tol = 1e-6;
  scfg.max_iter = 20000;
  for (auto _ : state) {
    benchmark::DoNotOptimize(fit(rep.data, rep.graph, pcfg, scfg));
  }
}
BENCHMARK(BM_Fit)->Arg(10)->Arg(20)->Unit(benchmark::kMillisecond);

void BM_DebiasRows(benchmark::State& state) {
  const int p = static_cast<int>(state.range(0));
  const Eigen::MatrixXd H = random_spd(p, 11);
  const Eigen::MatrixXd S = random_spd(p, 13);
  DebiasConfig cfg;
  cfg.eta = 0.05;
  for (auto _ : state) {
    benchmark::DoNotOptimize(solve_debias_rows(H, S, cfg));
  }
}
BENCHMARK(BM_DebiasRows)->Arg(10)->Arg(50)->Unit(benchmark::kMillisecond);

void BM_CohesionPredict(benchmark::State& state) {
  const int m = static_cast<int>(state.range(0));
  const RegionGraph g = lattice_graph(m);
  const LaplacianMatrix L = laplacian(g, 1e-3);
  const int n1 = g.n * 4 / 5;
  std::vector<int> train(n1);
  for (int i = 0; i < n1; ++i) train[i] = i;
  Eigen::VectorXd alpha = Eigen::VectorXd::LinSpaced(n1, -1.0, 1.0);
  for (auto _ : state) {
    benchmark::DoNotOptimize(cohesion_predict(L, train, alpha));
  }
}
BENCHMARK(BM_CohesionPredict)->Arg(30)->Arg(60)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
