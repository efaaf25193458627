#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <utility>
#include <vector>

#include "kfh/forest.hpp"
#include "kfh/graph.hpp"
#include "kfh/partition_matrix.hpp"

namespace kfh {

/// Multi-resolution hierarchy for a strictly decreasing q sequence.
/// levels[l] is the coarsening of the input graph under q_sequence[l]
/// (the input graph itself when q_1 = +inf). base_partitions[l] maps the
/// original graph to level l; step_partitions[l] maps level l to level
/// l+1 and satisfies step[l] * base[l] = base[l+1] by construction.
struct Hierarchy {
  std::vector<double> q_sequence;
  AggMode agg_mode = AggMode::Mean;
  std::vector<Graph> levels;
  std::vector<PartitionMatrix> base_partitions;
  std::vector<PartitionMatrix> step_partitions;

  int level_count() const { return static_cast<int>(levels.size()); }
};

/// Coarsen a graph under a partition: one supernode per component,
/// features aggregated with P, a coarse edge wherever a fine edge
/// crosses two components (each crossing undirected edge counted once,
/// parallel crossings merged, intra-component edges dropped).
inline std::pair<Graph, PartitionMatrix> coarsen(const Graph& g, const Partition& p, AggMode mode) {
  detail::require(p.node_count() == g.node_count(), "partition does not match graph");
  PartitionMatrix pm = PartitionMatrix::hard(p, g.node_count(), mode);
  Matrix coarse_x = pm.apply(g.node_features());

  // Group crossing edges by coarse pair; map iteration gives canonical order.
  std::map<std::pair<int, int>, std::vector<int>> crossing;
  for (int e = 0; e < g.edge_count(); ++e) {
    int a = p.assignment[g.edges()[e].u];
    int b = p.assignment[g.edges()[e].v];
    if (a == b) continue;
    if (a > b) std::swap(a, b);
    crossing[{a, b}].push_back(e);
  }
  std::vector<std::pair<int, int>> coarse_edges;
  Matrix coarse_xe(static_cast<int>(crossing.size()), g.edge_feature_dim());
  int k = 0;
  for (const auto& [pair_ab, fine_ids] : crossing) {
    coarse_edges.push_back(pair_ab);
    if (g.edge_feature_dim() > 0) {
      Eigen::RowVectorXd acc = Eigen::RowVectorXd::Zero(g.edge_feature_dim());
      for (int e : fine_ids) acc += g.edge_features().row(e);
      if (mode == AggMode::Mean) acc /= static_cast<double>(fine_ids.size());
      coarse_xe.row(k) = acc;
    }
    ++k;
  }
  Graph coarse =
      Graph::build(std::move(coarse_edges), std::move(coarse_x), std::move(coarse_xe), g.label());
  return {std::move(coarse), std::move(pm)};
}

namespace detail {

/// Finest partition that is coarser than both arguments (lattice join):
/// blocks of `a` are merged whenever some block of `b` links them.
/// Components are renumbered by first node occurrence.
inline Partition join_partitions(const Partition& a, const Partition& b) {
  const int n = a.node_count();
  detail::require(b.node_count() == n, "partition size mismatch");
  Dsu dsu(n);
  std::vector<int> first_of_a(a.k, -1), first_of_b(b.k, -1);
  for (int v = 0; v < n; ++v) {
    int& fa = first_of_a[a.assignment[v]];
    if (fa < 0) fa = v; else dsu.unite(fa, v);
    int& fb = first_of_b[b.assignment[v]];
    if (fb < 0) fb = v; else dsu.unite(fb, v);
  }
  Partition out;
  out.assignment.assign(n, -1);
  std::vector<int> label_of_root(n, -1);
  int next_label = 0;
  for (int v = 0; v < n; ++v) {
    int r = dsu.find(v);
    if (label_of_root[r] < 0) label_of_root[r] = next_label++;
    out.assignment[v] = label_of_root[r];
  }
  out.k = next_label;
  return out;
}

}  // namespace detail

/// Build the full hierarchy for a strictly decreasing q sequence
/// (q_1 = +inf permitted: that level is the original graph under the
/// identity partition). The forest chain is refined with reboot on the
/// original graph; each level's partition is the join of the refined
/// forest's components with the previous level's partition, which keeps
/// the chain nested so the composition identity
/// step[l] * base[l] = base[l+1] holds exactly. Supernode and coarse-edge
/// features are always aggregated from the original graph.
inline Hierarchy build_hierarchy(const Graph& g, const std::vector<double>& q_sequence, AggMode mode,
                                 std::uint64_t seed) {
  detail::require(!q_sequence.empty(), "q sequence must be nonempty");
  for (std::size_t i = 0; i < q_sequence.size(); ++i) {
    detail::require(q_sequence[i] > 0.0, "q values must be positive");
    if (i > 0)
      detail::require(q_sequence[i] < q_sequence[i - 1], "q sequence must be strictly decreasing");
  }

  Hierarchy h;
  h.q_sequence = q_sequence;
  h.agg_mode = mode;

  std::uint64_t seed_state = seed;
  RootedForest forest = sample_forest(g, q_sequence[0], splitmix64(seed_state));
  Partition level_partition = components(forest);
  for (std::size_t l = 0; l < q_sequence.size(); ++l) {
    if (l > 0) {
      forest = reboot(g, forest, q_sequence[l], splitmix64(seed_state));
      level_partition = detail::join_partitions(level_partition, components(forest));
    }
    auto [coarse, base] = coarsen(g, level_partition, mode);
    h.levels.push_back(std::move(coarse));
    h.base_partitions.push_back(std::move(base));
    if (l > 0)
      h.step_partitions.push_back(compose_partitions(h.base_partitions[l - 1], h.base_partitions[l]));
  }
  return h;
}

}  // namespace kfh
