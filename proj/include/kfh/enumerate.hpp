#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "kfh/forest.hpp"
#include "kfh/graph.hpp"

namespace kfh {

/// Exact P_q over all rooted spanning forests of a tiny graph.
struct ForestDistribution {
  std::vector<std::pair<RootedForest, double>> support;
  double q = 0.0;

  double mean_root_count() const {
    double s = 0.0;
    for (const auto& [f, prob] : support) s += prob * static_cast<double>(f.roots.size());
    return s;
  }
};

namespace detail {

/// Orient the chosen tree edges toward the given roots.
inline std::vector<int> orient_to_roots(const Graph& g, const std::vector<int>& chosen_edges,
                                        const std::vector<int>& roots) {
  const int n = g.node_count();
  std::vector<std::vector<int>> adj(n);
  for (int e : chosen_edges) {
    adj[g.edges()[e].u].push_back(g.edges()[e].v);
    adj[g.edges()[e].v].push_back(g.edges()[e].u);
  }
  std::vector<int> parent(n, RootedForest::kRoot);
  std::vector<char> seen(n, 0);
  std::vector<int> stack;
  for (int r : roots) {
    seen[r] = 1;
    stack.push_back(r);
    while (!stack.empty()) {
      int u = stack.back();
      stack.pop_back();
      for (int w : adj[u]) {
        if (!seen[w]) {
          seen[w] = 1;
          parent[w] = u;
          stack.push_back(w);
        }
      }
    }
  }
  return parent;
}

}  // namespace detail

/// Brute-force oracle for P_q: enumerate every acyclic edge subset, every
/// way of rooting its trees, weight each rooted forest by the P_q product
/// and normalize (log-space for stability). Guarded to n <= 10.
inline ForestDistribution enumerate_forests(const Graph& g, double q) {
  detail::require(q > 0.0 && !std::isinf(q), "enumerate_forests requires finite q > 0");
  detail::require(g.node_count() <= 10, "enumeration guard: graph too large (n > 10)");
  const int n = g.node_count();
  const int m = g.edge_count();

  ForestDistribution dist;
  dist.q = q;
  std::vector<double> log_weights;

  std::vector<int> chosen;
  auto emit = [&]() {
    // Components of the chosen acyclic subset.
    detail::Dsu dsu(n);
    for (int e : chosen) dsu.unite(g.edges()[e].u, g.edges()[e].v);
    std::vector<std::vector<int>> comp_nodes;
    std::vector<int> comp_of(n, -1);
    for (int v = 0; v < n; ++v) {
      int r = dsu.find(v);
      if (comp_of[r] < 0) {
        comp_of[r] = static_cast<int>(comp_nodes.size());
        comp_nodes.emplace_back();
      }
      comp_nodes[comp_of[r]].push_back(v);
    }
    // Odometer over one root choice per component.
    const int k = static_cast<int>(comp_nodes.size());
    std::vector<int> pick(k, 0);
    for (;;) {
      std::vector<int> roots(k);
      for (int c = 0; c < k; ++c) roots[c] = comp_nodes[c][pick[c]];
      std::sort(roots.begin(), roots.end());
      RootedForest f;
      f.q = q;
      f.parent = detail::orient_to_roots(g, chosen, roots);
      f.roots = roots;
      log_weights.push_back(forest_log_weight(g, q, f));
      dist.support.emplace_back(std::move(f), 0.0);
      int c = 0;
      while (c < k && ++pick[c] == static_cast<int>(comp_nodes[c].size())) pick[c++] = 0;
      if (c == k) break;
    }
  };

  // Depth-first over edges, pruning subsets that would close a cycle.
  auto recurse = [&](auto&& self, int e, detail::Dsu dsu) -> void {
    if (e == m) {
      emit();
      return;
    }
    self(self, e + 1, dsu);
    detail::Dsu with = dsu;
    if (with.unite(g.edges()[e].u, g.edges()[e].v)) {
      chosen.push_back(e);
      self(self, e + 1, std::move(with));
      chosen.pop_back();
    }
  };
  recurse(recurse, 0, detail::Dsu(n));

  const double max_log = *std::max_element(log_weights.begin(), log_weights.end());
  double total = 0.0;
  for (double lw : log_weights) total += std::exp(lw - max_log);
  for (std::size_t i = 0; i < dist.support.size(); ++i)
    dist.support[i].second = std::exp(log_weights[i] - max_log) / total;
  return dist;
}

}  // namespace kfh
