#pragma once

#include <Eigen/Dense>
#include <Eigen/SparseCore>
#include <string>
#include <vector>

#include "kfh/forest.hpp"
#include "kfh/graph.hpp"

namespace kfh {

/// Feature aggregation rule used throughout a hierarchy.
enum class AggMode { Mean, Sum };

inline std::string to_string(AggMode m) { return m == AggMode::Mean ? "mean" : "sum"; }

inline AggMode agg_mode_from_string(const std::string& s) {
  if (s == "mean") return AggMode::Mean;
  if (s == "sum") return AggMode::Sum;
  throw std::invalid_argument("unknown aggregation mode: " + s);
}

/// Coarse-by-fine nonnegative matrix realizing a coarse-graining step.
/// Hard partitions give 0/1 membership rows (scaled to row-stochastic in
/// mean mode); compositions across non-consecutive levels may carry soft
/// values in [0, 1]. Stored sparse by row.
class PartitionMatrix {
 public:
  using Sparse = Eigen::SparseMatrix<double, Eigen::RowMajor>;

  PartitionMatrix() = default;

  /// Hard membership matrix of a partition. Mean mode scales each row by
  /// the inverse component size so that apply() computes component means.
  static PartitionMatrix hard(const Partition& p, int n_fine, AggMode mode) {
    detail::require(p.node_count() == n_fine, "partition does not cover all fine nodes");
    detail::require(p.k >= 1, "partition must have at least one component");
    std::vector<int> sizes(p.k, 0);
    for (int v = 0; v < n_fine; ++v) {
      detail::require(p.assignment[v] >= 0 && p.assignment[v] < p.k, "component index out of range");
      ++sizes[p.assignment[v]];
    }
    for (int c = 0; c < p.k; ++c) detail::require(sizes[c] > 0, "empty component in partition");
    std::vector<Eigen::Triplet<double>> trips;
    trips.reserve(n_fine);
    for (int v = 0; v < n_fine; ++v) {
      const int c = p.assignment[v];
      trips.emplace_back(c, v, mode == AggMode::Mean ? 1.0 / sizes[c] : 1.0);
    }
    return from_triplets(p.k, n_fine, trips);
  }

  static PartitionMatrix identity(int n) {
    Partition p;
    p.k = n;
    p.assignment.resize(n);
    for (int v = 0; v < n; ++v) p.assignment[v] = v;
    return hard(p, n, AggMode::Mean);
  }

  /// Build from (row, col, value) triplets. Every fine node (column) must
  /// contribute somewhere and entries must be nonnegative and finite.
  static PartitionMatrix from_triplets(int rows, int cols, const std::vector<Eigen::Triplet<double>>& trips) {
    detail::require(rows >= 1 && cols >= 1, "partition matrix must be nonempty");
    PartitionMatrix p;
    p.mat_.resize(rows, cols);
    p.mat_.setFromTriplets(trips.begin(), trips.end());
    p.mat_.prune(0.0, 0.0);
    p.mat_.makeCompressed();
    std::vector<char> col_nonzero(cols, 0);
    for (int r = 0; r < p.mat_.outerSize(); ++r) {
      for (Sparse::InnerIterator it(p.mat_, r); it; ++it) {
        detail::require(std::isfinite(it.value()) && it.value() >= 0.0,
                        "partition matrix entries must be finite and nonnegative");
        col_nonzero[it.col()] = 1;
      }
    }
    for (int c = 0; c < cols; ++c)
      detail::require(col_nonzero[c] == 1, "fine node " + std::to_string(c) + " contributes to no coarse node");
    return p;
  }

  int rows() const { return static_cast<int>(mat_.rows()); }
  int cols() const { return static_cast<int>(mat_.cols()); }
  const Sparse& matrix() const { return mat_; }
  Matrix dense() const { return Matrix(mat_); }

  /// P * H (fine-level rows in, coarse-level rows out).
  Matrix apply(const Matrix& h) const {
    detail::require(h.rows() == cols(), "row count of H must equal fine node count");
    return mat_ * h;
  }

  /// P^T * H.
  Matrix apply_transpose(const Matrix& h) const {
    detail::require(h.rows() == rows(), "row count of H must equal coarse node count");
    return mat_.transpose() * h;
  }

 private:
  Sparse mat_;
};

/// Right inverse P^T (P P^T)^{-1}; satisfies P * right_inverse(P) = I.
/// P P^T is diagonal for hard partitions; rejects the degenerate soft
/// matrices for which it is singular.
inline Matrix right_inverse(const PartitionMatrix& p) {
  const Matrix dense = p.dense();
  const Matrix gram = dense * dense.transpose();
  Eigen::FullPivLU<Matrix> lu(gram);
  detail::require(lu.isInvertible(), "right inverse undefined: P P^T is singular");
  return dense.transpose() * lu.inverse();
}

/// Project fine-level features or embeddings to the coarse level: P * H.
inline Matrix project_features(const PartitionMatrix& p, const Matrix& h) { return p.apply(h); }

/// Level-i to level-j partition matrix P^(i,j) = P^(0,j) (P^(0,i))^-R.
/// Both inputs must map from the same original graph. Entries may be
/// soft values; negligible numerical noise (|x| < 1e-12) is pruned.
inline PartitionMatrix compose_partitions(const PartitionMatrix& p_0i, const PartitionMatrix& p_0j) {
  detail::require(p_0i.cols() == p_0j.cols(),
                  "compose_partitions requires both matrices to map from the same fine level");
  const Matrix composed = p_0j.dense() * right_inverse(p_0i);
  std::vector<Eigen::Triplet<double>> trips;
  for (int r = 0; r < composed.rows(); ++r) {
    for (int c = 0; c < composed.cols(); ++c) {
      const double x = composed(r, c);
      if (std::abs(x) > 1e-12) trips.emplace_back(r, c, x);
    }
  }
  return PartitionMatrix::from_triplets(static_cast<int>(composed.rows()), static_cast<int>(composed.cols()),
                                        trips);
}

}  // namespace kfh
