#pragma once

#include <Eigen/Sparse>
#include <string>
#include <vector>

namespace spcox {

/// Ridge added to the Laplacian when a regularized solve is requested
/// without an explicit value.
inline constexpr double kDefaultLaplacianRidge = 1e-3;

struct Edge {
  int i = 0;  // i < j always
  int j = 0;
  double weight = 1.0;
};

/// Named edge as it appears in input files, before index resolution.
struct EdgeSpec {
  std::string a;
  std::string b;
  double weight = 1.0;
};

/// Undirected weighted adjacency over the regions of a partition.
/// Immutable after build_graph; safe to share across concurrent fits.
struct RegionGraph {
  int n = 0;
  std::vector<Edge> edges;  // canonical: i < j, sorted by (i, j), no duplicates
  std::vector<std::string> region_ids;

  int edge_count() const { return static_cast<int>(edges.size()); }
};

/// Validates and canonicalizes an edge list against the region id list.
/// Throws ValidationError on unknown ids, self-loops, duplicate edges
/// (in either orientation) and non-positive weights.
RegionGraph build_graph(const std::vector<EdgeSpec>& edge_list,
                        std::vector<std::string> region_ids);

/// Subgraph on the given (sorted, distinct) region indices, reindexed.
RegionGraph induced_subgraph(const RegionGraph& g, const std::vector<int>& keep);

/// Signed edge incidence: row k of edge (i,j) holds +sqrt(w) at i, -sqrt(w) at j.
struct IncidenceMatrix {
  Eigen::SparseMatrix<double> mat;  // |E| x n
};

struct LaplacianMatrix {
  Eigen::SparseMatrix<double> mat;  // n x n symmetric
  double delta = 0.0;
};

IncidenceMatrix incidence(const RegionGraph& g);

/// L + delta*I with L = D - W; equals B^T B + delta*I.
LaplacianMatrix laplacian(const RegionGraph& g, double delta = 0.0);

struct LaplacianBlocks {
  Eigen::SparseMatrix<double> L11, L12, L21, L22;
  std::vector<int> train;  // sorted
  std::vector<int> test;   // sorted complement
  double delta = 0.0;
};

/// Splits L into train/test blocks; test = complement of train_idx.
LaplacianBlocks partition_laplacian(const LaplacianMatrix& L,
                                    const std::vector<int>& train_idx);

}  // namespace spcox
