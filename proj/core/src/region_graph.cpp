#include "spcox/region_graph.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <tuple>
#include <unordered_map>

#include "spcox/errors.hpp"

namespace spcox {

RegionGraph build_graph(const std::vector<EdgeSpec>& edge_list,
                        std::vector<std::string> region_ids) {
  std::unordered_map<std::string, int> index;
  index.reserve(region_ids.size());
  for (std::size_t k = 0; k < region_ids.size(); ++k) {
    auto [it, inserted] = index.emplace(region_ids[k], static_cast<int>(k));
    if (!inserted) throw ValidationError("duplicate region id: " + region_ids[k]);
  }

  RegionGraph g;
  g.n = static_cast<int>(region_ids.size());
  g.region_ids = std::move(region_ids);

  std::set<std::pair<int, int>> seen;
  g.edges.reserve(edge_list.size());
  for (const auto& e : edge_list) {
    auto ia = index.find(e.a);
    if (ia == index.end()) throw ValidationError("edge endpoint not a known region: " + e.a);
    auto ib = index.find(e.b);
    if (ib == index.end()) throw ValidationError("edge endpoint not a known region: " + e.b);
    int i = ia->second, j = ib->second;
    if (i == j) throw ValidationError("self-loop on region: " + e.a);
    if (i > j) std::swap(i, j);
    if (!(e.weight > 0.0) || !std::isfinite(e.weight))
      throw ValidationError("edge (" + e.a + "," + e.b + ") has non-positive weight");
    if (!seen.insert({i, j}).second)
      throw ValidationError("duplicate edge between " + e.a + " and " + e.b);
    g.edges.push_back({i, j, e.weight});
  }
  std::sort(g.edges.begin(), g.edges.end(),
            [](const Edge& a, const Edge& b) { return std::tie(a.i, a.j) < std::tie(b.i, b.j); });
  return g;
}

RegionGraph induced_subgraph(const RegionGraph& g, const std::vector<int>& keep) {
  std::vector<int> pos(g.n, -1);
  for (std::size_t k = 0; k < keep.size(); ++k) {
    int v = keep[k];
    if (v < 0 || v >= g.n) throw ValidationError("induced_subgraph: index out of range");
    if (pos[v] != -1) throw ValidationError("induced_subgraph: duplicate index");
    pos[v] = static_cast<int>(k);
  }
  RegionGraph sub;
  sub.n = static_cast<int>(keep.size());
  sub.region_ids.reserve(keep.size());
  for (int v : keep) sub.region_ids.push_back(g.region_ids[v]);
  for (const Edge& e : g.edges) {
    if (pos[e.i] >= 0 && pos[e.j] >= 0) {
      int i = pos[e.i], j = pos[e.j];
      if (i > j) std::swap(i, j);
      sub.edges.push_back({i, j, e.weight});
    }
  }
  std::sort(sub.edges.begin(), sub.edges.end(),
            [](const Edge& a, const Edge& b) { return std::tie(a.i, a.j) < std::tie(b.i, b.j); });
  return sub;
}

IncidenceMatrix incidence(const RegionGraph& g) {
  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(2 * g.edges.size());
  for (std::size_t k = 0; k < g.edges.size(); ++k) {
    const Edge& e = g.edges[k];
    const double s = std::sqrt(e.weight);
    trip.emplace_back(static_cast<int>(k), e.i, s);
    trip.emplace_back(static_cast<int>(k), e.j, -s);
  }
  IncidenceMatrix B;
  B.mat.resize(static_cast<int>(g.edges.size()), g.n);
  B.mat.setFromTriplets(trip.begin(), trip.end());
  return B;
}

LaplacianMatrix laplacian(const RegionGraph& g, double delta) {
  if (delta < 0.0 || !std::isfinite(delta))
    throw ValidationError("laplacian: delta must be nonnegative and finite");
  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(4 * g.edges.size() + static_cast<std::size_t>(g.n));
  std::vector<double> degree(static_cast<std::size_t>(g.n), 0.0);
  for (const Edge& e : g.edges) {
    degree[static_cast<std::size_t>(e.i)] += e.weight;
    degree[static_cast<std::size_t>(e.j)] += e.weight;
    trip.emplace_back(e.i, e.j, -e.weight);
    trip.emplace_back(e.j, e.i, -e.weight);
  }
  for (int v = 0; v < g.n; ++v)
    trip.emplace_back(v, v, degree[static_cast<std::size_t>(v)] + delta);
  LaplacianMatrix L;
  L.delta = delta;
  L.mat.resize(g.n, g.n);
  L.mat.setFromTriplets(trip.begin(), trip.end());
  return L;
}

LaplacianBlocks partition_laplacian(const LaplacianMatrix& L,
                                    const std::vector<int>& train_idx) {
  const int n = static_cast<int>(L.mat.rows());
  std::vector<char> in_train(static_cast<std::size_t>(n), 0);
  for (int v : train_idx) {
    if (v < 0 || v >= n) throw ValidationError("partition_laplacian: index out of range");
    if (in_train[static_cast<std::size_t>(v)])
      throw ValidationError("partition_laplacian: duplicate train index");
    in_train[static_cast<std::size_t>(v)] = 1;
  }

  LaplacianBlocks blocks;
  blocks.delta = L.delta;
  std::vector<int> pos(static_cast<std::size_t>(n), -1);
  for (int v = 0; v < n; ++v) {
    if (in_train[static_cast<std::size_t>(v)]) {
      pos[static_cast<std::size_t>(v)] = static_cast<int>(blocks.train.size());
      blocks.train.push_back(v);
    } else {
      pos[static_cast<std::size_t>(v)] = static_cast<int>(blocks.test.size());
      blocks.test.push_back(v);
    }
  }
  const int n1 = static_cast<int>(blocks.train.size());
  const int n2 = static_cast<int>(blocks.test.size());
  if (n1 == 0) throw ValidationError("partition_laplacian: empty training set");
  if (n2 == 0) throw ValidationError("partition_laplacian: empty test set");

  std::vector<Eigen::Triplet<double>> t11, t12, t21, t22;
  for (int col = 0; col < n; ++col) {
    for (Eigen::SparseMatrix<double>::InnerIterator it(L.mat, col); it; ++it) {
      const int r = static_cast<int>(it.row());
      const int c = col;
      const bool rt = in_train[static_cast<std::size_t>(r)];
      const bool ct = in_train[static_cast<std::size_t>(c)];
      const int rp = pos[static_cast<std::size_t>(r)];
      const int cp = pos[static_cast<std::size_t>(c)];
      if (rt && ct)
        t11.emplace_back(rp, cp, it.value());
      else if (rt && !ct)
        t12.emplace_back(rp, cp, it.value());
      else if (!rt && ct)
        t21.emplace_back(rp, cp, it.value());
      else
        t22.emplace_back(rp, cp, it.value());
    }
  }
  blocks.L11.resize(n1, n1);
  blocks.L12.resize(n1, n2);
  blocks.L21.resize(n2, n1);
  blocks.L22.resize(n2, n2);
  blocks.L11.setFromTriplets(t11.begin(), t11.end());
  blocks.L12.setFromTriplets(t12.begin(), t12.end());
  blocks.L21.setFromTriplets(t21.begin(), t21.end());
  blocks.L22.setFromTriplets(t22.begin(), t22.end());
  return blocks;
}

}  // namespace spcox
