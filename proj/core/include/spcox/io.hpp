#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "spcox/cv.hpp"
#include "spcox/inference.hpp"
#include "spcox/model.hpp"
#include "spcox/region_graph.hpp"
#include "spcox/simulate.hpp"
#include "spcox/solver.hpp"

namespace spcox {

struct LoadedData {
  Dataset data;
  RegionGraph graph;
};

/// Reads the three-file dataset. Regions are ordered lexicographically by id;
/// all files must agree on the region set. CSV headers are mandatory:
///   regions:    region_id,area,offset,count
///   covariates: region_id,<name1>,...,<namep>
///   edges:      region_i,region_j[,weight]
LoadedData load_dataset(const std::filesystem::path& regions_csv,
                        const std::filesystem::path& covariates_csv,
                        const std::filesystem::path& edges_csv);

/// Writes regions.csv, covariates.csv and edges.csv into dir.
void write_dataset_csv(const Dataset& d, const RegionGraph& g,
                       const std::filesystem::path& dir);

/// write_dataset_csv plus the latent-field sidecar latent.json.
void write_replicate(const Replicate& rep, const std::filesystem::path& dir);

/// 17 significant digits; round-trips doubles exactly.
std::string format_double(double v);

/// Fit parameters together with the names needed to reapply them to data.
struct StoredFit {
  FitResult fit;
  std::vector<std::string> region_ids;
  std::vector<std::string> beta_names;
};

std::string fit_to_json(const StoredFit& sf);
StoredFit fit_from_json(const std::string& text);

std::string inference_to_json(const InferenceResult& res,
                              const std::vector<std::string>& beta_names);

/// Tuning-grid config: {"gamma": [...], "tau": [...], "fusion": "l1"|"l2",
/// "k": 5, "seed": 1}.
struct GridSpec {
  TuningGrid grid;
  int k = 5;
  std::uint64_t seed = 1;
};
GridSpec grid_from_json(const std::string& text);

Scenario scenario_from_json(const std::string& text);
std::string scenario_to_json(const Scenario& sc);

/// Every CLI run emits exactly one manifest alongside its results.
struct RunManifest {
  std::string command;
  std::vector<std::string> inputs;
  std::string config_json = "{}";  // effective configuration echo
  std::uint64_t seed = 0;
  std::string version;  // defaults to the library version when empty
  double duration_seconds = 0.0;
};
std::string manifest_to_json(const RunManifest& m);
void write_manifest(const RunManifest& m, const std::filesystem::path& path);

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, const std::string& content);

}  // namespace spcox
