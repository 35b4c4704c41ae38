#include "spcox/predict.hpp"

#include <Eigen/IterativeLinearSolvers>
#include <Eigen/SparseCholesky>
#include <numeric>

#include "spcox/errors.hpp"

namespace spcox {

namespace {

// Direct factorization below this size, conjugate gradient above.
constexpr int kDirectSolveLimit = 10000;

Eigen::VectorXd solve_spd(const Eigen::SparseMatrix<double>& A, const Eigen::VectorXd& rhs) {
  if (A.rows() <= kDirectSolveLimit) {
    Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt(A);
    if (ldlt.info() != Eigen::Success)
      throw NumericalError("cohesion_predict: singular test block; retry with delta > 0");
    Eigen::VectorXd x = ldlt.solve(rhs);
    if (!x.allFinite())
      throw NumericalError("cohesion_predict: singular test block; retry with delta > 0");
    return x;
  }
  Eigen::ConjugateGradient<Eigen::SparseMatrix<double>, Eigen::Lower | Eigen::Upper> cg(A);
  cg.setTolerance(1e-12);
  Eigen::VectorXd x = cg.solve(rhs);
  if (cg.info() != Eigen::Success)
    throw NumericalError("cohesion_predict: iterative solve failed; retry with delta > 0");
  return x;
}

struct UnionFind {
  std::vector<int> parent;
  explicit UnionFind(int n) : parent(n) { std::iota(parent.begin(), parent.end(), 0); }
  int find(int v) {
    while (parent[v] != v) {
      parent[v] = parent[parent[v]];
      v = parent[v];
    }
    return v;
  }
  void unite(int a, int b) { parent[find(a)] = find(b); }
};

}  // namespace

Eigen::VectorXd cohesion_predict(const LaplacianMatrix& L, const std::vector<int>& train_idx,
                                 const Eigen::VectorXd& alpha_train) {
  const LaplacianBlocks blk = partition_laplacian(L, train_idx);
  if (alpha_train.size() != static_cast<Eigen::Index>(blk.train.size()))
    throw ValidationError("cohesion_predict: alpha_train does not match the training set");
  const int n1 = static_cast<int>(blk.train.size());
  const int n2 = static_cast<int>(blk.test.size());
  const Eigen::VectorXd rhs = -(blk.L21 * alpha_train);

  if (blk.delta > 0.0) return solve_spd(blk.L22, rhs);

  // delta = 0: handle test components separately so blocks detached from the
  // training set predict exactly zero instead of hitting a singular solve.
  UnionFind uf(n2);
  for (int col = 0; col < n2; ++col)
    for (Eigen::SparseMatrix<double>::InnerIterator it(blk.L22, col); it; ++it)
      if (it.row() != col && it.value() != 0.0) uf.unite(static_cast<int>(it.row()), col);

  std::vector<char> coupled(n2, 0);
  for (int col = 0; col < n1; ++col)
    for (Eigen::SparseMatrix<double>::InnerIterator it(blk.L21, col); it; ++it)
      if (it.value() != 0.0) coupled[uf.find(static_cast<int>(it.row()))] = 1;

  std::vector<std::vector<int>> components(n2);
  for (int v = 0; v < n2; ++v) components[uf.find(v)].push_back(v);

  Eigen::VectorXd alpha_test = Eigen::VectorXd::Zero(n2);
  std::vector<int> pos(n2, -1);
  for (int root = 0; root < n2; ++root) {
    const auto& members = components[root];
    if (members.empty() || !coupled[root]) continue;
    const int sz = static_cast<int>(members.size());
    for (int k = 0; k < sz; ++k) pos[members[k]] = k;
    Eigen::VectorXd sub_rhs(sz);
    std::vector<Eigen::Triplet<double>> trip;
    for (int k = 0; k < sz; ++k) {
      sub_rhs[k] = rhs[members[k]];
      for (Eigen::SparseMatrix<double>::InnerIterator it(blk.L22, members[k]); it; ++it) {
        const int rp = pos[it.row()];
        if (rp >= 0) trip.emplace_back(rp, k, it.value());
      }
    }
    Eigen::SparseMatrix<double> sub(sz, sz);
    sub.setFromTriplets(trip.begin(), trip.end());
    const Eigen::VectorXd x = solve_spd(sub, sub_rhs);
    for (int k = 0; k < sz; ++k) {
      alpha_test[members[k]] = x[k];
      pos[members[k]] = -1;
    }
  }
  return alpha_test;
}

}  // namespace spcox
