#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

#include "kfh/graph.hpp"
#include "kfh/rng.hpp"

namespace kfh {

/// Rooted spanning forest: parent pointer per node (kRoot marks a root).
/// Every parent edge is an edge of the source graph and parent chains
/// terminate at roots.
struct RootedForest {
  static constexpr int kRoot = -1;

  std::vector<int> parent;
  std::vector<int> roots;  // ascending node ids
  double q = 0.0;          // resolution parameter used (may be +inf)

  int node_count() const { return static_cast<int>(parent.size()); }
  bool is_root(int v) const { return parent[v] == kRoot; }
};

/// Disjoint node partition with component ids 0..k-1.
struct Partition {
  std::vector<int> assignment;
  int k = 0;

  int node_count() const { return static_cast<int>(assignment.size()); }
};

namespace detail {

struct Dsu {
  std::vector<int> parent;
  explicit Dsu(int n) : parent(n) {
    for (int v = 0; v < n; ++v) parent[v] = v;
  }
  int find(int v) {
    while (parent[v] != v) v = parent[v] = parent[parent[v]];
    return v;
  }
  bool unite(int a, int b) {
    a = find(a);
    b = find(b);
    if (a == b) return false;
    parent[b] = a;
    return true;
  }
};

/// One step of the q-walk at node u: new root with probability
/// q/(q+d_u), otherwise a uniformly random neighbour. Returns kRoot or
/// the neighbour id. d_u == 0 always yields a root.
inline int walk_step(const Graph& g, int u, double q, Pcg32& rng) {
  const int d = g.degree(u);
  if (d == 0) return RootedForest::kRoot;
  if (rng.uniform() < q / (q + d)) return RootedForest::kRoot;
  auto nb = g.neighbors(u);
  return nb[rng.uniform_below(static_cast<std::uint32_t>(d))];
}

inline std::vector<int> collect_roots(const std::vector<int>& parent) {
  std::vector<int> roots;
  for (int v = 0; v < static_cast<int>(parent.size()); ++v)
    if (parent[v] == RootedForest::kRoot) roots.push_back(v);
  return roots;
}

/// Remove every directed cycle from the functional graph `arrow` by
/// redrawing the arrows of cycle nodes from the q-walk distribution
/// until none remain (Propp-Wilson cycle popping). Nodes verified to
/// reach a root are never touched again.
inline void pop_cycles(const Graph& g, std::vector<int>& arrow, double q, Pcg32& rng) {
  const int n = g.node_count();
  std::vector<char> settled(n, 0);
  std::vector<char> on_path(n, 0);
  std::vector<int> path;
  for (int s = 0; s < n; ++s) {
    if (settled[s]) continue;
    for (;;) {
      path.clear();
      int u = s;
      int cycle_entry = -1;
      while (u != RootedForest::kRoot && !settled[u]) {
        if (on_path[u]) {
          cycle_entry = u;
          break;
        }
        on_path[u] = 1;
        path.push_back(u);
        u = arrow[u];
      }
      if (cycle_entry < 0) {
        // Chain reached a root or settled territory: freeze it.
        for (int v : path) {
          settled[v] = 1;
          on_path[v] = 0;
        }
        break;
      }
      // Redraw every node on the detected cycle, clear marks, retry.
      std::size_t start = 0;
      while (path[start] != cycle_entry) ++start;
      for (std::size_t i = start; i < path.size(); ++i) arrow[path[i]] = walk_step(g, path[i], q, rng);
      for (int v : path) on_path[v] = 0;
    }
  }
}

}  // namespace detail

/// Sample a rooted spanning forest from the Kirchhoff Forest
/// distribution P_q via Wilson's algorithm with restarts: a loop-erased
/// random walk is started from each still-unvisited node in ascending
/// order; at each visited node it either terminates at a new root with
/// probability q/(q+d_v) or moves to a uniform neighbour. q = +inf is a
/// sentinel for the all-roots forest (identity partition).
inline RootedForest sample_forest(const Graph& g, double q, std::uint64_t seed) {
  detail::require(q > 0.0, "sample_forest requires q > 0");
  const int n = g.node_count();
  RootedForest f;
  f.q = q;
  f.parent.assign(n, RootedForest::kRoot);
  if (std::isinf(q)) {
    f.roots = detail::collect_roots(f.parent);
    return f;
  }
  Pcg32 rng = Pcg32::from_stream(seed, 0);
  std::vector<char> in_forest(n, 0);
  std::vector<int> next(n, RootedForest::kRoot);
  for (int s = 0; s < n; ++s) {
    int u = s;
    while (!in_forest[u]) {
      int step = detail::walk_step(g, u, q, rng);
      next[u] = step;
      if (step == RootedForest::kRoot) {
        in_forest[u] = 1;
        break;
      }
      u = step;
    }
    // Retrace from s: the surviving next-pointers are the loop-erased path.
    u = s;
    while (!in_forest[u]) {
      in_forest[u] = 1;
      u = next[u];
    }
  }
  f.parent = std::move(next);
  f.roots = detail::collect_roots(f.parent);
  return f;
}

/// Refine a forest sampled at q into one distributed as P_{q'} for
/// q' < q without resampling from scratch. Each root is independently
/// retained with probability q'/q; a demoted root resumes the walk by
/// redrawing its arrow from the q'-walk step distribution, and any
/// directed cycles this creates are popped with further q'-redraws.
/// The output is exactly P_{q'}-distributed (checked against the
/// enumeration oracle in tests).
inline RootedForest reboot(const Graph& g, const RootedForest& f, double q_prime, std::uint64_t seed) {
  detail::require(q_prime > 0.0, "reboot requires q' > 0");
  detail::require(q_prime < f.q, "reboot requires q' < q");
  const int n = g.node_count();
  detail::require(n == f.node_count(), "forest does not match graph");
  Pcg32 rng = Pcg32::from_stream(seed, 0);

  std::vector<int> arrow = f.parent;
  const double keep = std::isinf(f.q) ? 0.0 : q_prime / f.q;
  for (int r : f.roots) {
    if (rng.uniform() >= keep) arrow[r] = detail::walk_step(g, r, q_prime, rng);
  }
  detail::pop_cycles(g, arrow, q_prime, rng);

  RootedForest out;
  out.q = q_prime;
  out.parent = std::move(arrow);
  out.roots = detail::collect_roots(out.parent);
  return out;
}

/// Forest components: every node gets the component id of its root.
/// Components are numbered by ascending root id.
inline Partition components(const RootedForest& f) {
  const int n = f.node_count();
  Partition p;
  p.k = static_cast<int>(f.roots.size());
  p.assignment.assign(n, -1);
  std::vector<int> root_comp(n, -1);
  for (int i = 0; i < p.k; ++i) root_comp[f.roots[i]] = i;
  std::vector<int> chain;
  for (int s = 0; s < n; ++s) {
    if (p.assignment[s] >= 0) continue;
    chain.clear();
    int u = s;
    while (p.assignment[u] < 0 && !f.is_root(u)) {
      chain.push_back(u);
      u = f.parent[u];
    }
    const int comp = f.is_root(u) ? root_comp[u] : p.assignment[u];
    detail::require(comp >= 0, "invalid forest: parent chain does not reach a root");
    for (int v : chain) p.assignment[v] = comp;
    p.assignment[s] = comp;
    if (f.is_root(u)) p.assignment[u] = comp;
  }
  return p;
}

/// Log of the unnormalised P_q weight of a forest:
///   prod_v (q/(q+d_v))^{delta_v}  *  prod_{(c,p) in F} 1/(q+d_c)
/// with the edge factor taken at the child's degree. Rejects forests
/// containing non-edges or cycles.
inline double forest_log_weight(const Graph& g, double q, const RootedForest& f) {
  detail::require(q > 0.0 && !std::isinf(q), "forest weight requires finite q > 0");
  const int n = g.node_count();
  detail::require(n == f.node_count(), "forest does not match graph");
  // Validate acyclicity by chasing parents with a step budget.
  for (int s = 0; s < n; ++s) {
    int u = s;
    int steps = 0;
    while (!f.is_root(u)) {
      detail::require(++steps <= n, "invalid forest: cycle detected");
      u = f.parent[u];
    }
  }
  double log_w = 0.0;
  for (int v = 0; v < n; ++v) {
    if (f.is_root(v)) {
      log_w += std::log(q) - std::log(q + g.degree(v));
    } else {
      detail::require(g.has_edge(v, f.parent[v]), "invalid forest: parent edge not in graph");
      log_w -= std::log(q + g.degree(v));
    }
  }
  return log_w;
}

/// exp(forest_log_weight); underflows to 0 only for graphs far above the
/// sizes the enumeration oracle handles.
inline double forest_weight(const Graph& g, double q, const RootedForest& f) {
  return std::exp(forest_log_weight(g, q, f));
}

}  // namespace kfh
