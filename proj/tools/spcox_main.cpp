// spcox: penalized Poisson regression for region-count data on a graph.
// Subcommands: simulate, fit, infer, cv, predict, bench.
// Exit codes: 0 success, 1 validation error, 2 numerical failure.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "spcox/cv.hpp"
#include "spcox/errors.hpp"
#include "spcox/inference.hpp"
#include "spcox/io.hpp"
#include "spcox/model.hpp"
#include "spcox/parallel.hpp"
#include "spcox/predict.hpp"
#include "spcox/rng.hpp"
#include "spcox/simulate.hpp"
#include "spcox/solver.hpp"
#include "spcox/version.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace spcox;

namespace {

struct Stopwatch {
  std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  }
};

struct DataArgs {
  std::string regions, covariates, edges;

  void attach(CLI::App* cmd) {
    cmd->add_option("--regions", regions, "regions CSV (region_id,area,offset,count)")
        ->required();
    cmd->add_option("--covariates", covariates, "covariates CSV (region_id,x1,...)")
        ->required();
    cmd->add_option("--edges", edges, "edges CSV (region_i,region_j[,weight])")->required();
  }
  std::vector<std::string> inputs() const { return {regions, covariates, edges}; }
};

struct FitArgs {
  double gamma = 0.0, tau = 0.0, xi = 0.0, delta = kDefaultLaplacianRidge;
  std::string fusion = "l2";
  double tol = 1e-7;
  int max_iter = 5000;
  bool block_alternating = false;
  bool paper_line_search = false;
  std::string init = "data";
  bool standardize = false;

  void attach(CLI::App* cmd, bool with_penalty = true) {
    if (with_penalty) {
      cmd->add_option("--gamma", gamma, "fusion penalty strength");
      cmd->add_option("--tau", tau, "sparsity penalty strength");
      cmd->add_option("--fusion", fusion, "fusion penalty kind: l1|l2")
          ->check(CLI::IsMember({"l1", "l2"}));
      cmd->add_option("--xi", xi, "smoothing parameter for l1 fusion (0 = auto)");
      cmd->add_option("--delta", delta, "Laplacian ridge for l2 fusion");
    }
    cmd->add_option("--tol", tol, "relative objective tolerance");
    cmd->add_option("--max-iter", max_iter, "iteration cap");
    cmd->add_flag("--block-alternating", block_alternating,
                  "alternate baseline and effect sweeps");
    cmd->add_flag("--paper-line-search", paper_line_search,
                  "use the non-scaled sufficient-decrease test");
    cmd->add_option("--init", init, "initialization: data|zero")
        ->check(CLI::IsMember({"data", "zero"}));
    cmd->add_flag("--standardize", standardize,
                  "standardize covariates before fitting and invert on output");
  }

  PenaltyConfig penalty() const {
    PenaltyConfig p;
    p.gamma = gamma;
    p.tau = tau;
    p.fusion = fusion == "l1" ? FusionKind::L1Smoothed : FusionKind::L2;
    p.xi = xi;
    p.delta = delta;
    return p;
  }
  SolverConfig solver() const {
    SolverConfig s;
    s.tol = tol;
    s.max_iter = max_iter;
    s.block_alternating = block_alternating;
    s.paper_line_search = paper_line_search;
    s.init = init == "zero" ? InitKind::Zero : InitKind::DataDriven;
    return s;
  }
  json config_json() const {
    return json{{"gamma", gamma},     {"tau", tau},
                {"fusion", fusion},   {"xi", xi},
                {"delta", delta},     {"tol", tol},
                {"max_iter", max_iter}, {"block_alternating", block_alternating},
                {"init", init},       {"standardize", standardize}};
  }
};

struct Standardizer {
  Eigen::VectorXd mean, sd;

  static Standardizer fit(const Eigen::MatrixXd& X) {
    Standardizer s;
    const int p = static_cast<int>(X.cols());
    s.mean.resize(p);
    s.sd.resize(p);
    for (int j = 0; j < p; ++j) {
      s.mean[j] = X.col(j).mean();
      const double var =
          (X.col(j).array() - s.mean[j]).square().sum() / std::max<int>(1, X.rows() - 1);
      s.sd[j] = std::sqrt(var);
      if (!(s.sd[j] > 0.0))
        throw ValidationError("cannot standardize constant covariate column " +
                              std::to_string(j + 1));
    }
    return s;
  }

  Eigen::MatrixXd apply(const Eigen::MatrixXd& X) const {
    return (X.rowwise() - mean.transpose()).array().rowwise() / sd.transpose().array();
  }

  // Map a fit on standardized covariates back to the original scale.
  void invert(ParamVector& theta) const {
    double shift = 0.0;
    for (int j = 0; j < theta.beta.size(); ++j) {
      shift += mean[j] * theta.beta[j] / sd[j];
      theta.beta[j] /= sd[j];
    }
    theta.alpha.array() -= shift;
  }
};

Dataset standardized_copy(const Dataset& d, const Standardizer& s) {
  return make_dataset(d.y, d.offset, d.area, s.apply(d.X), d.region_ids, d.covariate_names);
}

void emit_manifest(const std::string& command, const std::vector<std::string>& inputs,
                   const json& config, std::uint64_t seed, double seconds,
                   const fs::path& results_path) {
  RunManifest m;
  m.command = command;
  m.inputs = inputs;
  m.config_json = config.dump();
  m.seed = seed;
  m.duration_seconds = seconds;
  const fs::path where = fs::is_directory(results_path)
                             ? results_path / "manifest.json"
                             : fs::path(results_path.string() + ".manifest.json");
  write_manifest(m, where);
}

StoredFit run_fit(const Dataset& d, const RegionGraph& g, const FitArgs& args) {
  StoredFit sf;
  sf.region_ids = g.region_ids;
  sf.beta_names = d.covariate_names;
  if (args.standardize && d.p() > 0) {
    const Standardizer std_ = Standardizer::fit(d.X);
    sf.fit = fit(standardized_copy(d, std_), g, args.penalty(), args.solver());
    std_.invert(sf.fit.theta);
  } else {
    sf.fit = fit(d, g, args.penalty(), args.solver());
  }
  if (sf.fit.diverged) throw NumericalError("fit diverged: objective became non-finite");
  return sf;
}

void check_fit_matches(const StoredFit& sf, const LoadedData& loaded) {
  if (sf.region_ids != loaded.graph.region_ids)
    throw ValidationError("fit and data disagree on the region set");
  if (sf.beta_names != loaded.data.covariate_names)
    throw ValidationError("fit and data disagree on the covariate names");
}

int cmd_simulate(const std::string& scenario_path, const std::string& out_dir,
                 std::optional<std::uint64_t> seed_override) {
  Stopwatch timer;
  Scenario sc = scenario_from_json(read_text_file(scenario_path));
  if (seed_override) sc.seed = *seed_override;
  const Replicate rep = generate_replicate(sc, derive_seed(sc.seed, 0));
  fs::create_directories(out_dir);
  write_replicate(rep, out_dir);
  emit_manifest("simulate", {scenario_path}, json::parse(scenario_to_json(sc)), sc.seed,
                timer.seconds(), out_dir);
  std::cout << "wrote replicate to " << out_dir << "\n";
  return 0;
}

int cmd_fit(const DataArgs& data_args, const FitArgs& fit_args, const std::string& out,
            std::uint64_t seed) {
  Stopwatch timer;
  const LoadedData loaded = load_dataset(data_args.regions, data_args.covariates,
                                         data_args.edges);
  const StoredFit sf = run_fit(loaded.data, loaded.graph, fit_args);
  write_text_file(out, fit_to_json(sf));
  emit_manifest("fit", data_args.inputs(), fit_args.config_json(), seed, timer.seconds(),
                out);
  if (!sf.fit.converged)
    std::cerr << "warning: fit stopped at max_iter without meeting the tolerance\n";
  std::cout << "fit written to " << out << " (objective " << sf.fit.objective() << ", "
            << sf.fit.iterations << " iterations)\n";
  return 0;
}

int cmd_infer(const DataArgs& data_args, const std::string& fit_path, const std::string& out,
              double eta, const std::string& covariance, double level, bool force,
              int threads, std::uint64_t seed) {
  Stopwatch timer;
  const LoadedData loaded = load_dataset(data_args.regions, data_args.covariates,
                                         data_args.edges);
  const StoredFit sf = fit_from_json(read_text_file(fit_path));
  check_fit_matches(sf, loaded);

  DebiasConfig cfg;
  cfg.eta = eta;
  cfg.covariance =
      covariance == "gaussian" ? CovarianceKind::GaussianError : CovarianceKind::Sandwich;
  cfg.level = level;
  const InferenceResult res =
      debias_and_intervals(loaded.data, sf.fit, cfg, force, threads);
  write_text_file(out, inference_to_json(res, sf.beta_names));

  json config{{"eta", eta},   {"eta_used", res.eta_used}, {"covariance", covariance},
              {"level", level}, {"force", force},         {"fit", fit_path}};
  auto inputs = data_args.inputs();
  inputs.push_back(fit_path);
  emit_manifest("infer", inputs, config, seed, timer.seconds(), out);
  std::cout << "inference written to " << out << "\n";
  return 0;
}

int cmd_cv(const DataArgs& data_args, const FitArgs& fit_args, const std::string& grid_path,
           const std::string& out, int threads, std::optional<std::uint64_t> seed_override) {
  Stopwatch timer;
  LoadedData loaded = load_dataset(data_args.regions, data_args.covariates, data_args.edges);
  GridSpec spec = grid_from_json(read_text_file(grid_path));
  if (seed_override) spec.seed = *seed_override;

  Dataset* d = &loaded.data;
  Dataset standardized;
  std::optional<Standardizer> std_;
  if (fit_args.standardize && loaded.data.p() > 0) {
    std_ = Standardizer::fit(loaded.data.X);
    standardized = standardized_copy(loaded.data, *std_);
    d = &standardized;
  }

  const FoldPlan plan = make_folds(loaded.graph, spec.k, spec.seed);
  CvOptions opts;
  opts.threads = threads;
  const TuneResult tuned =
      tune(*d, loaded.graph, spec.grid, fit_args.penalty(), fit_args.solver(), plan, opts);

  FitArgs final_args = fit_args;
  final_args.gamma = tuned.gamma_star;
  final_args.tau = tuned.tau_star;
  final_args.fusion = spec.grid.fusion == FusionKind::L1Smoothed ? "l1" : "l2";
  const StoredFit refit = run_fit(loaded.data, loaded.graph, final_args);

  json scores = json::array();
  for (std::size_t a = 0; a < spec.grid.gamma_values.size(); ++a)
    for (std::size_t b = 0; b < spec.grid.tau_values.size(); ++b) {
      const double s = tuned.scores(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b));
      scores.push_back(json{{"gamma", spec.grid.gamma_values[a]},
                            {"tau", spec.grid.tau_values[b]},
                            {"score", std::isfinite(s) ? json(s) : json(nullptr)}});
    }
  json j;
  j["gamma_star"] = tuned.gamma_star;
  j["tau_star"] = tuned.tau_star;
  j["fusion"] = final_args.fusion;
  j["k"] = plan.k;
  j["seed"] = plan.seed;
  j["scores"] = scores;
  j["fit"] = json::parse(fit_to_json(refit));
  write_text_file(out, j.dump(2) + "\n");

  json config = fit_args.config_json();
  config["grid"] = json::parse(read_text_file(grid_path));
  auto inputs = data_args.inputs();
  inputs.push_back(grid_path);
  emit_manifest("cv", inputs, config, spec.seed, timer.seconds(), out);
  std::cout << "selected gamma=" << tuned.gamma_star << " tau=" << tuned.tau_star
            << "; results written to " << out << "\n";
  return 0;
}

int cmd_predict(const DataArgs& data_args, const std::string& fit_path,
                const std::string& out, double delta, std::uint64_t seed) {
  Stopwatch timer;
  const LoadedData loaded = load_dataset(data_args.regions, data_args.covariates,
                                         data_args.edges);
  const StoredFit sf = fit_from_json(read_text_file(fit_path));

  // Training regions are the fit's; everything else in the files is predicted.
  std::vector<int> train_idx;
  std::vector<char> is_train(loaded.graph.region_ids.size(), 0);
  {
    std::size_t hit = 0;
    std::unordered_map<std::string, int> pos;
    for (int i = 0; i < loaded.graph.n; ++i) pos[loaded.graph.region_ids[i]] = i;
    for (const std::string& id : sf.region_ids) {
      auto it = pos.find(id);
      if (it == pos.end())
        throw ValidationError("fit region " + id + " missing from the extended data");
      train_idx.push_back(it->second);
      is_train[it->second] = 1;
      ++hit;
    }
    if (hit == loaded.graph.region_ids.size())
      throw ValidationError("no new regions to predict");
  }
  std::sort(train_idx.begin(), train_idx.end());

  // alpha_train must follow the sorted train order.
  Eigen::VectorXd alpha_train(train_idx.size());
  {
    std::unordered_map<std::string, double> alpha_by_id;
    for (std::size_t k = 0; k < sf.region_ids.size(); ++k)
      alpha_by_id[sf.region_ids[k]] = sf.fit.theta.alpha[static_cast<Eigen::Index>(k)];
    for (std::size_t k = 0; k < train_idx.size(); ++k)
      alpha_train[static_cast<Eigen::Index>(k)] =
          alpha_by_id[loaded.graph.region_ids[train_idx[k]]];
  }

  const LaplacianMatrix L = laplacian(loaded.graph, delta);
  const Eigen::VectorXd alpha_test = cohesion_predict(L, train_idx, alpha_train);

  json rows = json::array();
  int t = 0;
  for (int i = 0; i < loaded.graph.n; ++i) {
    if (is_train[i]) continue;
    const double eta = std::clamp(
        alpha_test[t] + loaded.data.X.row(i).dot(sf.fit.theta.beta), -kLinkBound, kLinkBound);
    const double mu = loaded.data.area[i] * loaded.data.offset[i] * std::exp(eta);
    rows.push_back(json{{"region_id", loaded.graph.region_ids[i]},
                        {"alpha_hat", alpha_test[t]},
                        {"mu_hat", mu}});
    ++t;
  }
  json j;
  j["delta"] = delta;
  j["regions"] = rows;
  write_text_file(out, j.dump(2) + "\n");

  auto inputs = data_args.inputs();
  inputs.push_back(fit_path);
  emit_manifest("predict", inputs, json{{"delta", delta}, {"fit", fit_path}}, seed,
                timer.seconds(), out);
  std::cout << "predicted " << rows.size() << " regions; written to " << out << "\n";
  return 0;
}

int cmd_bench(const std::string& scenario_path, int replicates, const std::string& out,
              const std::string& grid_path, const FitArgs& fit_args, double eta,
              const std::string& covariance, double level, int threads,
              std::optional<std::uint64_t> seed_override) {
  Stopwatch timer;
  if (replicates < 1) throw ValidationError("bench requires at least one replicate");
  Scenario sc = scenario_from_json(read_text_file(scenario_path));
  if (seed_override) sc.seed = *seed_override;

  std::optional<GridSpec> grid;
  if (!grid_path.empty()) grid = grid_from_json(read_text_file(grid_path));

  const ReplicateGenerator gen(sc);
  DebiasConfig dcfg;
  dcfg.eta = eta;
  dcfg.covariance =
      covariance == "gaussian" ? CovarianceKind::GaussianError : CovarianceKind::Sandwich;
  dcfg.level = level;

  std::vector<InferenceResult> results(replicates);
  parallel_for(replicates, threads, [&](int r) {
    const Replicate rep = gen.generate(derive_seed(sc.seed, static_cast<std::uint64_t>(r)));
    FitArgs args = fit_args;
    if (grid) {
      const FoldPlan plan =
          make_folds(rep.graph, grid->k, derive_seed(grid->seed, static_cast<std::uint64_t>(r)));
      const TuneResult tuned = tune(rep.data, rep.graph, grid->grid, fit_args.penalty(),
                                    fit_args.solver(), plan, CvOptions{});
      args.gamma = tuned.gamma_star;
      args.tau = tuned.tau_star;
      args.fusion = grid->grid.fusion == FusionKind::L1Smoothed ? "l1" : "l2";
    }
    const StoredFit sf = run_fit(rep.data, rep.graph, args);
    results[r] = debias_and_intervals(rep.data, sf.fit, dcfg, /*force=*/true);
  });

  const Eigen::VectorXd beta_true = sc.resolved_beta();
  const ReplicateMetrics metrics = evaluate_replicates(results, beta_true);

  std::string csv = "m,n,p,replicates,coverage,type1_error,power\n";
  csv += std::to_string(sc.m) + "," + std::to_string(sc.cells()) + "," +
         std::to_string(sc.p) + "," + std::to_string(replicates) + "," +
         format_double(metrics.coverage) + "," + format_double(metrics.type1_error) + "," +
         format_double(metrics.power) + "\n";
  write_text_file(out, csv);

  std::string elem = "coordinate,beta_true,mean_error,error_q05,error_q95\n";
  for (int j = 0; j < beta_true.size(); ++j)
    elem += std::to_string(j + 1) + "," + format_double(beta_true[j]) + "," +
            format_double(metrics.mean_error[j]) + "," +
            format_double(metrics.error_q05[j]) + "," +
            format_double(metrics.error_q95[j]) + "\n";
  const fs::path elem_path = fs::path(out).replace_extension(".elementwise.csv");
  write_text_file(elem_path, elem);

  json config = fit_args.config_json();
  config["replicates"] = replicates;
  config["eta"] = eta;
  config["covariance"] = covariance;
  config["level"] = level;
  config["scenario"] = json::parse(scenario_to_json(sc));
  if (grid) config["grid"] = json::parse(read_text_file(grid_path));
  emit_manifest("bench", {scenario_path}, config, sc.seed, timer.seconds(), out);
  std::cout << "coverage " << metrics.coverage << ", type I " << metrics.type1_error
            << ", power " << metrics.power << "; table written to " << out << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Penalized Poisson fitting, inference, prediction and simulation "
               "for region-count data on a graph"};
  app.set_version_flag("--version", std::string(kVersion));
  app.require_subcommand(1);

  int threads = 0;  // 0 = hardware concurrency
  app.add_option("--threads", threads, "worker threads (0 = auto)");

  // simulate
  auto* sim = app.add_subcommand("simulate", "generate one synthetic replicate");
  std::string sim_scenario, sim_out = "replicate";
  std::optional<std::uint64_t> sim_seed;
  sim->add_option("--scenario", sim_scenario, "scenario JSON")->required();
  sim->add_option("--out", sim_out, "output directory");
  sim->add_option("--seed", sim_seed, "override the scenario seed");

  // fit
  auto* fit_cmd = app.add_subcommand("fit", "penalized maximum-likelihood fit");
  DataArgs fit_data;
  FitArgs fit_args;
  std::string fit_out = "fit.json";
  std::uint64_t fit_seed = 1;
  fit_data.attach(fit_cmd);
  fit_args.attach(fit_cmd);
  fit_cmd->add_option("--out", fit_out, "output JSON");
  fit_cmd->add_option("--seed", fit_seed, "seed recorded in the manifest");

  // infer
  auto* infer_cmd = app.add_subcommand("infer", "de-biased intervals for effects");
  DataArgs infer_data;
  std::string infer_fit, infer_out = "inference.json", infer_cov = "sandwich";
  double infer_eta = 0.0, infer_level = 0.95;
  bool infer_force = false;
  std::uint64_t infer_seed = 1;
  infer_data.attach(infer_cmd);
  infer_cmd->add_option("--fit", infer_fit, "fit JSON")->required();
  infer_cmd->add_option("--out", infer_out, "output JSON");
  infer_cmd->add_option("--eta", infer_eta, "constraint tolerance (0 = default rate)");
  infer_cmd->add_option("--covariance", infer_cov, "sandwich|gaussian")
      ->check(CLI::IsMember({"sandwich", "gaussian"}));
  infer_cmd->add_option("--level", infer_level, "confidence level");
  infer_cmd->add_flag("--force", infer_force, "run even if the fit did not converge");
  infer_cmd->add_option("--seed", infer_seed, "seed recorded in the manifest");

  // cv
  auto* cv_cmd = app.add_subcommand("cv", "tune (gamma, tau) by k-fold CV and refit");
  DataArgs cv_data;
  FitArgs cv_args;
  std::string cv_grid, cv_out = "cv.json";
  std::optional<std::uint64_t> cv_seed;
  cv_data.attach(cv_cmd);
  cv_args.attach(cv_cmd, /*with_penalty=*/false);
  cv_cmd->add_option("--grid", cv_grid, "grid JSON {gamma, tau, fusion, k, seed}")
      ->required();
  cv_cmd->add_option("--out", cv_out, "output JSON");
  cv_cmd->add_option("--seed", cv_seed, "override the grid fold seed");

  // predict
  auto* pred_cmd = app.add_subcommand("predict", "baselines and means for new regions");
  DataArgs pred_data;
  std::string pred_fit, pred_out = "prediction.json";
  double pred_delta = 0.0;
  std::uint64_t pred_seed = 1;
  pred_data.attach(pred_cmd);
  pred_cmd->add_option("--fit", pred_fit, "fit JSON")->required();
  pred_cmd->add_option("--out", pred_out, "output JSON");
  pred_cmd->add_option("--delta", pred_delta, "Laplacian ridge for the prediction solve");
  pred_cmd->add_option("--seed", pred_seed, "seed recorded in the manifest");

  // bench
  auto* bench_cmd = app.add_subcommand(
      "bench", "replicate study: coverage, type I error and power table");
  std::string bench_scenario, bench_out = "bench.csv", bench_grid;
  std::string bench_cov = "sandwich";
  int bench_reps = 0;
  double bench_eta = 0.0, bench_level = 0.95;
  FitArgs bench_args;
  std::optional<std::uint64_t> bench_seed;
  bench_cmd->add_option("--scenario", bench_scenario, "scenario JSON")->required();
  bench_cmd->add_option("--replicates", bench_reps, "replicate count")->required();
  bench_cmd->add_option("--out", bench_out, "output CSV");
  bench_cmd->add_option("--grid", bench_grid, "grid JSON for per-replicate CV tuning");
  bench_args.attach(bench_cmd);
  bench_cmd->add_option("--eta", bench_eta, "constraint tolerance (0 = default rate)");
  bench_cmd->add_option("--covariance", bench_cov, "sandwich|gaussian")
      ->check(CLI::IsMember({"sandwich", "gaussian"}));
  bench_cmd->add_option("--level", bench_level, "confidence level");
  bench_cmd->add_option("--seed", bench_seed, "override the scenario seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (sim->parsed()) return cmd_simulate(sim_scenario, sim_out, sim_seed);
    if (fit_cmd->parsed()) return cmd_fit(fit_data, fit_args, fit_out, fit_seed);
    if (infer_cmd->parsed())
      return cmd_infer(infer_data, infer_fit, infer_out, infer_eta, infer_cov, infer_level,
                       infer_force, threads, infer_seed);
    if (cv_cmd->parsed()) return cmd_cv(cv_data, cv_args, cv_grid, cv_out, threads, cv_seed);
    if (pred_cmd->parsed())
      return cmd_predict(pred_data, pred_fit, pred_out, pred_delta, pred_seed);
    if (bench_cmd->parsed())
      return cmd_bench(bench_scenario, bench_reps, bench_out, bench_grid, bench_args,
                       bench_eta, bench_cov, bench_level, threads, bench_seed);
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
