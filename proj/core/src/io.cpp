#include "spcox/io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include <json.hpp>

#include "spcox/errors.hpp"
#include "spcox/version.hpp"

namespace spcox {

using nlohmann::json;

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      fields.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(ch);
    }
  }
  fields.push_back(cur);
  return fields;
}

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  std::string file;
};

CsvTable read_csv(const std::filesystem::path& path) {
  std::string text = read_text_file(path);
  if (text.size() >= 3 && static_cast<unsigned char>(text[0]) == 0xEF &&
      static_cast<unsigned char>(text[1]) == 0xBB &&
      static_cast<unsigned char>(text[2]) == 0xBF)
    text.erase(0, 3);  // UTF-8 BOM

  CsvTable table;
  table.file = path.string();
  std::istringstream in(text);
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() && in.eof()) break;
    if (first) {
      table.header = split_csv_line(line);
      first = false;
    } else if (!line.empty()) {
      table.rows.push_back(split_csv_line(line));
    }
  }
  if (first) throw ValidationError(table.file + ": missing header");
  return table;
}

double parse_double(const std::string& s, const std::string& context) {
  double value = 0.0;
  const char* begin = s.data();
  const char* end = begin + s.size();
  auto [ptr, ec] = std::from_chars(begin, end, value);
  if (ec != std::errc() || ptr != end)
    throw ValidationError(context + ": malformed number '" + s + "'");
  return value;
}

void require_header(const CsvTable& t, const std::vector<std::string>& expected) {
  if (t.header.size() < expected.size())
    throw ValidationError(t.file + ": header must start with the documented columns");
  for (std::size_t i = 0; i < expected.size(); ++i)
    if (t.header[i] != expected[i])
      throw ValidationError(t.file + ": expected header column '" + expected[i] +
                            "', found '" + t.header[i] + "'");
}

json penalty_to_json(const PenaltyConfig& p) {
  return json{{"gamma", p.gamma},
              {"tau", p.tau},
              {"fusion", p.fusion == FusionKind::L2 ? "l2" : "l1"},
              {"xi", p.xi},
              {"delta", p.delta}};
}

PenaltyConfig penalty_from_json(const json& j) {
  PenaltyConfig p;
  p.gamma = j.at("gamma").get<double>();
  p.tau = j.at("tau").get<double>();
  const std::string fusion = j.at("fusion").get<std::string>();
  if (fusion == "l2")
    p.fusion = FusionKind::L2;
  else if (fusion == "l1")
    p.fusion = FusionKind::L1Smoothed;
  else
    throw ValidationError("fusion must be 'l1' or 'l2'");
  p.xi = j.value("xi", 0.0);
  p.delta = j.value("delta", kDefaultLaplacianRidge);
  return p;
}

json solver_to_json(const SolverConfig& s) {
  const char* init = s.init == InitKind::Zero     ? "zero"
                     : s.init == InitKind::Warm ? "warm"
                                                  : "data";
  return json{{"tol", s.tol},
              {"max_iter", s.max_iter},
              {"a", s.armijo_a},
              {"b", s.backtrack_b},
              {"block_alternating", s.block_alternating},
              {"init", init}};
}

std::vector<double> to_std(const Eigen::VectorXd& v) {
  return std::vector<double>(v.data(), v.data() + v.size());
}

Eigen::VectorXd from_std(const std::vector<double>& v) {
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

}  // namespace

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open file: " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_text_file(const std::filesystem::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError("cannot write file: " + path.string());
  out << content;
  if (!out) throw ValidationError("write failed: " + path.string());
}

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

LoadedData load_dataset(const std::filesystem::path& regions_csv,
                        const std::filesystem::path& covariates_csv,
                        const std::filesystem::path& edges_csv) {
  const CsvTable regions = read_csv(regions_csv);
  require_header(regions, {"region_id", "area", "offset", "count"});

  struct RegionRow {
    double area, offset, count;
  };
  std::map<std::string, RegionRow> by_id;  // ordered: lexicographic region order
  for (const auto& row : regions.rows) {
    if (row.size() != 4)
      throw ValidationError(regions.file + ": each row needs 4 fields");
    const std::string& id = row[0];
    RegionRow r;
    r.area = parse_double(row[1], regions.file + " area of " + id);
    r.offset = parse_double(row[2], regions.file + " offset of " + id);
    r.count = parse_double(row[3], regions.file + " count of " + id);
    if (std::floor(r.count) != r.count)
      throw ValidationError(regions.file + ": non-integer count '" + row[3] +
                            "' for region " + id);
    if (!by_id.emplace(id, r).second)
      throw ValidationError(regions.file + ": duplicate region id " + id);
  }
  if (by_id.empty()) throw ValidationError(regions.file + ": no regions");

  const CsvTable covs = read_csv(covariates_csv);
  require_header(covs, {"region_id"});
  const int p = static_cast<int>(covs.header.size()) - 1;
  if (p < 0) throw ValidationError(covs.file + ": header must name covariates");
  std::map<std::string, std::vector<double>> cov_rows;
  for (const auto& row : covs.rows) {
    if (static_cast<int>(row.size()) != p + 1)
      throw ValidationError(covs.file + ": row for " + row[0] + " has wrong arity");
    if (by_id.find(row[0]) == by_id.end())
      throw ValidationError(covs.file + ": covariates reference unknown region " + row[0]);
    std::vector<double> vals(p);
    for (int j = 0; j < p; ++j)
      vals[j] = parse_double(row[j + 1], covs.file + " " + covs.header[j + 1] + " of " + row[0]);
    if (!cov_rows.emplace(row[0], std::move(vals)).second)
      throw ValidationError(covs.file + ": duplicate covariate row for region " + row[0]);
  }
  for (const auto& [id, unused] : by_id)
    if (cov_rows.find(id) == cov_rows.end())
      throw ValidationError(covs.file + ": missing covariates for region " + id);

  const int n = static_cast<int>(by_id.size());
  Eigen::VectorXd y(n), offset(n), area(n);
  Eigen::MatrixXd X(n, p);
  std::vector<std::string> ids;
  ids.reserve(n);
  int i = 0;
  for (const auto& [id, r] : by_id) {
    ids.push_back(id);
    y[i] = r.count;
    offset[i] = r.offset;
    area[i] = r.area;
    const auto& vals = cov_rows[id];
    for (int j = 0; j < p; ++j) X(i, j) = vals[j];
    ++i;
  }
  std::vector<std::string> names(covs.header.begin() + 1, covs.header.end());

  const CsvTable edges = read_csv(edges_csv);
  require_header(edges, {"region_i", "region_j"});
  if (edges.header.size() > 3 ||
      (edges.header.size() == 3 && edges.header[2] != "weight"))
    throw ValidationError(edges.file + ": header must be region_i,region_j[,weight]");
  std::vector<EdgeSpec> specs;
  specs.reserve(edges.rows.size());
  for (const auto& row : edges.rows) {
    if (row.size() != 2 && row.size() != 3)
      throw ValidationError(edges.file + ": each row needs 2 or 3 fields");
    EdgeSpec e;
    e.a = row[0];
    e.b = row[1];
    e.weight = (row.size() == 3 && !row[2].empty())
                   ? parse_double(row[2], edges.file + " weight")
                   : 1.0;
    specs.push_back(std::move(e));
  }

  LoadedData out;
  out.graph = build_graph(specs, ids);
  out.data = make_dataset(std::move(y), std::move(offset), std::move(area), std::move(X),
                          std::move(ids), std::move(names));
  return out;
}

void write_dataset_csv(const Dataset& d, const RegionGraph& g,
                       const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  {
    std::string out = "region_id,area,offset,count\n";
    for (int i = 0; i < d.n(); ++i) {
      char count[32];
      std::snprintf(count, sizeof(count), "%.0f", d.y[i]);
      out += d.region_ids[i] + "," + format_double(d.area[i]) + "," +
             format_double(d.offset[i]) + "," + count + "\n";
    }
    write_text_file(dir / "regions.csv", out);
  }
  {
    std::string out = "region_id";
    for (int j = 0; j < d.p(); ++j)
      out += "," + (j < static_cast<int>(d.covariate_names.size())
                        ? d.covariate_names[j]
                        : "x" + std::to_string(j + 1));
    out += "\n";
    for (int i = 0; i < d.n(); ++i) {
      out += d.region_ids[i];
      for (int j = 0; j < d.p(); ++j) out += "," + format_double(d.X(i, j));
      out += "\n";
    }
    write_text_file(dir / "covariates.csv", out);
  }
  {
    std::string out = "region_i,region_j,weight\n";
    for (const Edge& e : g.edges)
      out += g.region_ids[e.i] + "," + g.region_ids[e.j] + "," +
             format_double(e.weight) + "\n";
    write_text_file(dir / "edges.csv", out);
  }
}

void write_replicate(const Replicate& rep, const std::filesystem::path& dir) {
  write_dataset_csv(rep.data, rep.graph, dir);
  json latent;
  latent["seed"] = rep.seed;
  latent["lambda"] = to_std(rep.lambda);
  latent["eps_structured"] = to_std(rep.eps_structured);
  latent["eps_unstructured"] = to_std(rep.eps_unstructured);
  latent["unstructured_variance"] = to_std(rep.unstructured_variance);
  write_text_file(dir / "latent.json", latent.dump(2) + "\n");
}

std::string fit_to_json(const StoredFit& sf) {
  json j;
  j["alpha"] = to_std(sf.fit.theta.alpha);
  j["beta"] = to_std(sf.fit.theta.beta);
  j["region_ids"] = sf.region_ids;
  j["beta_names"] = sf.beta_names;
  j["converged"] = sf.fit.converged;
  j["diverged"] = sf.fit.diverged;
  j["iterations"] = sf.fit.iterations;
  j["objective"] = sf.fit.objective();
  j["objective_trace"] = sf.fit.objective_trace;
  j["penalty"] = penalty_to_json(sf.fit.penalty);
  j["solver"] = solver_to_json(sf.fit.solver);
  return j.dump(2) + "\n";
}

StoredFit fit_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ValidationError(std::string("fit JSON parse error: ") + e.what());
  }
  StoredFit sf;
  try {
    sf.fit.theta.alpha = from_std(j.at("alpha").get<std::vector<double>>());
    sf.fit.theta.beta = from_std(j.at("beta").get<std::vector<double>>());
    sf.region_ids = j.at("region_ids").get<std::vector<std::string>>();
    sf.beta_names = j.at("beta_names").get<std::vector<std::string>>();
    sf.fit.converged = j.at("converged").get<bool>();
    sf.fit.diverged = j.value("diverged", false);
    sf.fit.iterations = j.value("iterations", 0);
    sf.fit.objective_trace = j.value("objective_trace", std::vector<double>{});
    if (j.contains("penalty")) sf.fit.penalty = penalty_from_json(j["penalty"]);
    if (j.contains("solver")) {
      const json& s = j["solver"];
      sf.fit.solver.tol = s.value("tol", sf.fit.solver.tol);
      sf.fit.solver.max_iter = s.value("max_iter", sf.fit.solver.max_iter);
      sf.fit.solver.armijo_a = s.value("a", sf.fit.solver.armijo_a);
      sf.fit.solver.backtrack_b = s.value("b", sf.fit.solver.backtrack_b);
      sf.fit.solver.block_alternating = s.value("block_alternating", false);
    }
  } catch (const json::exception& e) {
    throw ValidationError(std::string("fit JSON malformed: ") + e.what());
  }
  return sf;
}

std::string inference_to_json(const InferenceResult& res,
                              const std::vector<std::string>& beta_names) {
  const int p = static_cast<int>(res.b_hat.size());
  json coords = json::array();
  for (int j = 0; j < p; ++j) {
    coords.push_back(json{
        {"name", j < static_cast<int>(beta_names.size()) ? beta_names[j]
                                                         : "x" + std::to_string(j + 1)},
        {"beta_hat", res.beta_hat[j]},
        {"b_hat", res.b_hat[j]},
        {"sigma_hat", res.sigma_hat[j]},
        {"ci_lower", res.ci_lower[j]},
        {"ci_upper", res.ci_upper[j]},
        {"z", res.z_scores[j]},
        {"p_value", res.p_values[j]},
    });
  }
  json j;
  j["coordinates"] = coords;
  j["eta_used"] = res.eta_used;
  j["covariance_kind"] =
      res.covariance == CovarianceKind::Sandwich ? "sandwich" : "gaussian";
  j["level"] = res.level;
  if (std::isnan(res.zeta))
    j["zeta_hat"] = nullptr;
  else
    j["zeta_hat"] = res.zeta;
  return j.dump(2) + "\n";
}

GridSpec grid_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ValidationError(std::string("grid JSON parse error: ") + e.what());
  }
  GridSpec spec;
  try {
    spec.grid.gamma_values = j.at("gamma").get<std::vector<double>>();
    spec.grid.tau_values = j.at("tau").get<std::vector<double>>();
    const std::string fusion = j.value("fusion", "l2");
    if (fusion == "l1")
      spec.grid.fusion = FusionKind::L1Smoothed;
    else if (fusion == "l2")
      spec.grid.fusion = FusionKind::L2;
    else
      throw ValidationError("grid fusion must be 'l1' or 'l2'");
    spec.k = j.value("k", 5);
    spec.seed = j.value("seed", std::uint64_t{1});
  } catch (const json::exception& e) {
    throw ValidationError(std::string("grid JSON malformed: ") + e.what());
  }
  return spec;
}

Scenario scenario_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ValidationError(std::string("scenario JSON parse error: ") + e.what());
  }
  Scenario sc;
  try {
    sc.m = j.at("m").get<int>();
    sc.p = j.at("p").get<int>();
    if (j.contains("beta") && !j["beta"].is_null())
      sc.beta_true = from_std(j["beta"].get<std::vector<double>>());
    sc.baseline_scale = j.value("baseline_scale", 1.0);
    sc.grf_range = j.value("grf_range", 0.0);
    sc.grf_variance = j.value("grf_variance", 1.0);
    sc.fine_grid = j.value("fine_grid", 0);
    sc.invgamma_shape = j.value("invgamma_shape", 2.0);
    sc.invgamma_rate = j.value("invgamma_rate", 1.0);
    sc.offset = j.value("offset", 2.0);
    sc.seed = j.value("seed", std::uint64_t{1});
    sc.structured = j.value("structured", true);
    sc.unstructured = j.value("unstructured", true);
  } catch (const json::exception& e) {
    throw ValidationError(std::string("scenario JSON malformed: ") + e.what());
  }
  sc.validate();
  return sc;
}

std::string scenario_to_json(const Scenario& sc) {
  json j;
  j["m"] = sc.m;
  j["p"] = sc.p;
  j["beta"] = to_std(sc.resolved_beta());
  j["baseline_scale"] = sc.baseline_scale;
  j["grf_range"] = sc.resolved_range();
  j["grf_variance"] = sc.grf_variance;
  j["fine_grid"] = sc.resolved_fine_grid();
  j["invgamma_shape"] = sc.invgamma_shape;
  j["invgamma_rate"] = sc.invgamma_rate;
  j["offset"] = sc.offset;
  j["seed"] = sc.seed;
  j["structured"] = sc.structured;
  j["unstructured"] = sc.unstructured;
  return j.dump(2) + "\n";
}

std::string manifest_to_json(const RunManifest& m) {
  json j;
  j["command"] = m.command;
  j["inputs"] = m.inputs;
  try {
    j["config"] = json::parse(m.config_json);
  } catch (const json::exception&) {
    j["config"] = m.config_json;
  }
  j["seed"] = m.seed;
  j["version"] = m.version.empty() ? kVersion : m.version;
  j["duration_seconds"] = m.duration_seconds;
  return j.dump(2) + "\n";
}

void write_manifest(const RunManifest& m, const std::filesystem::path& path) {
  write_text_file(path, manifest_to_json(m));
}

}  // namespace spcox
