#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace kfh {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Dense symmetric real matrix. Symmetry is validated by the operations
/// that require it rather than enforced by the type.
using SymmetricMatrix = Eigen::MatrixXd;

/// Undirected edge in canonical orientation (u < v).
struct Edge {
  int u = 0;
  int v = 0;
};

namespace detail {
inline void require(bool cond, const std::string& msg) {
  if (!cond) throw std::invalid_argument(msg);
}
}  // namespace detail

/// Immutable attributed undirected graph.
///
/// Storage is CSR adjacency (both directions of every undirected edge)
/// plus the canonical edge list sorted lexicographically with u < v.
/// Row k of the edge-feature matrix belongs to edges()[k]. Construction
/// canonicalizes and validates; afterwards the graph never changes, so
/// instances are safe to share across threads.
class Graph {
 public:
  Graph() = default;

  /// Validating constructor. Node count is taken from the feature matrix.
  /// Rejects self-loops, duplicate edges (in either orientation), index
  /// range errors, feature row-count mismatches and non-finite features.
  static Graph build(std::vector<std::pair<int, int>> edge_list, Matrix node_features,
                     std::optional<Matrix> edge_features = std::nullopt,
                     std::optional<int> label = std::nullopt) {
    Graph g;
    const int n = static_cast<int>(node_features.rows());
    detail::require(n >= 1, "graph must have at least one node");
    detail::require(node_features.allFinite(), "node features must be finite");

    for (auto& [a, b] : edge_list) {
      detail::require(a >= 0 && a < n && b >= 0 && b < n,
                      "edge endpoint out of range: (" + std::to_string(a) + "," + std::to_string(b) + ")");
      detail::require(a != b, "self-loop rejected at node " + std::to_string(a));
      if (a > b) std::swap(a, b);
    }
    const std::size_t m_in = edge_list.size();
    // Keep the caller's edge order: edge-feature row k corresponds to
    // input edge k, so sort an index permutation instead of the list.
    std::vector<int> order(m_in);
    for (std::size_t k = 0; k < m_in; ++k) order[k] = static_cast<int>(k);
    std::sort(order.begin(), order.end(), [&](int a, int b) {
      return edge_list[a] < edge_list[b];
    });
    for (std::size_t k = 1; k < m_in; ++k) {
      detail::require(edge_list[order[k - 1]] != edge_list[order[k]],
                      "duplicate edge rejected: (" + std::to_string(edge_list[order[k]].first) + "," +
                          std::to_string(edge_list[order[k]].second) + ")");
    }
    const int m = static_cast<int>(m_in);

    if (edge_features.has_value()) {
      detail::require(edge_features->rows() == m, "edge feature row count must equal edge count");
      detail::require(edge_features->allFinite(), "edge features must be finite");
    }

    g.n_ = n;
    g.edges_.resize(m_in);
    g.edge_features_.resize(m, edge_features ? edge_features->cols() : 0);
    for (int k = 0; k < m; ++k) {
      g.edges_[k] = Edge{edge_list[order[k]].first, edge_list[order[k]].second};
      if (edge_features) g.edge_features_.row(k) = edge_features->row(order[k]);
    }
    g.node_features_ = std::move(node_features);
    g.label_ = label;
    g.build_csr();
    return g;
  }

  int node_count() const { return n_; }
  int edge_count() const { return static_cast<int>(edges_.size()); }
  int degree(int v) const { return offsets_[v + 1] - offsets_[v]; }
  double mean_degree() const { return n_ == 0 ? 0.0 : 2.0 * edge_count() / n_; }

  std::span<const int> neighbors(int v) const {
    return {neighbors_.data() + offsets_[v], neighbors_.data() + offsets_[v + 1]};
  }
  /// Edge ids parallel to neighbors(v): incident_edge_ids(v)[i] is the
  /// canonical index of the undirected edge {v, neighbors(v)[i]}.
  std::span<const int> incident_edge_ids(int v) const {
    return {edge_ids_.data() + offsets_[v], edge_ids_.data() + offsets_[v + 1]};
  }

  const std::vector<Edge>& edges() const { return edges_; }
  const Matrix& node_features() const { return node_features_; }
  const Matrix& edge_features() const { return edge_features_; }
  int feature_dim() const { return static_cast<int>(node_features_.cols()); }
  int edge_feature_dim() const { return static_cast<int>(edge_features_.cols()); }
  std::optional<int> label() const { return label_; }

  bool has_edge(int a, int b) const {
    auto nb = neighbors(a);
    return std::binary_search(nb.begin(), nb.end(), b);
  }

 private:
  void build_csr() {
    offsets_.assign(n_ + 1, 0);
    for (const Edge& e : edges_) {
      ++offsets_[e.u + 1];
      ++offsets_[e.v + 1];
    }
    for (int v = 0; v < n_; ++v) offsets_[v + 1] += offsets_[v];
    neighbors_.resize(2 * edges_.size());
    edge_ids_.resize(2 * edges_.size());
    std::vector<int> cursor(offsets_.begin(), offsets_.end() - 1);
    // Edges are sorted, so per-node neighbor lists come out sorted for the
    // u side; the v side needs one extra sort pass below.
    for (int k = 0; k < static_cast<int>(edges_.size()); ++k) {
      const Edge& e = edges_[k];
      neighbors_[cursor[e.u]] = e.v;
      edge_ids_[cursor[e.u]++] = k;
      neighbors_[cursor[e.v]] = e.u;
      edge_ids_[cursor[e.v]++] = k;
    }
    for (int v = 0; v < n_; ++v) {
      const int lo = offsets_[v], hi = offsets_[v + 1];
      std::vector<std::pair<int, int>> tmp;
      tmp.reserve(hi - lo);
      for (int i = lo; i < hi; ++i) tmp.emplace_back(neighbors_[i], edge_ids_[i]);
      std::sort(tmp.begin(), tmp.end());
      for (int i = lo; i < hi; ++i) {
        neighbors_[i] = tmp[i - lo].first;
        edge_ids_[i] = tmp[i - lo].second;
      }
    }
  }

  int n_ = 0;
  std::vector<Edge> edges_;
  std::vector<int> offsets_;
  std::vector<int> neighbors_;
  std::vector<int> edge_ids_;
  Matrix node_features_;
  Matrix edge_features_;
  std::optional<int> label_;
};

/// Unnormalised Laplacian L = D - A. Entries are integer-valued, so row
/// sums are exactly zero.
inline SymmetricMatrix laplacian(const Graph& g) {
  const int n = g.node_count();
  SymmetricMatrix l = SymmetricMatrix::Zero(n, n);
  for (const Edge& e : g.edges()) {
    l(e.u, e.u) += 1.0;
    l(e.v, e.v) += 1.0;
    l(e.u, e.v) -= 1.0;
    l(e.v, e.u) -= 1.0;
  }
  return l;
}

/// Line graph: one node per undirected edge of g, adjacent when the
/// corresponding edges share an endpoint. Node features of the result
/// are g's edge features (zero-width when g has none).
inline Graph line_graph(const Graph& g) {
  detail::require(g.edge_count() >= 1, "line graph requires at least one edge");
  std::vector<std::pair<int, int>> edges;
  for (int v = 0; v < g.node_count(); ++v) {
    auto ids = g.incident_edge_ids(v);
    for (std::size_t a = 0; a < ids.size(); ++a)
      for (std::size_t b = a + 1; b < ids.size(); ++b)
        edges.emplace_back(ids[a], ids[b]);
  }
  // Two simple-graph edges share at most one endpoint, so no duplicates
  // can arise from the per-vertex pair loops.
  return Graph::build(std::move(edges), g.edge_features());
}

/// Number of connected components (BFS; independent of any spectral code).
inline int component_count(const Graph& g) {
  const int n = g.node_count();
  std::vector<int> comp(n, -1);
  std::vector<int> queue;
  int k = 0;
  for (int s = 0; s < n; ++s) {
    if (comp[s] >= 0) continue;
    comp[s] = k;
    queue.assign(1, s);
    while (!queue.empty()) {
      int u = queue.back();
      queue.pop_back();
      for (int w : g.neighbors(u)) {
        if (comp[w] < 0) {
          comp[w] = k;
          queue.push_back(w);
        }
      }
    }
    ++k;
  }
  return k;
}

}  // namespace kfh
