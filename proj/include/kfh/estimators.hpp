#pragma once

#include <cmath>
#include <iostream>
#include <string>

#include "kfh/graph.hpp"
#include "kfh/spectral.hpp"

namespace kfh {

enum class NodeEstimateMode { Degree, Spectral };

/// Expected coarse node (root) count under P_q. Degree mode is the
/// closed-form approximation sum_v q/(q+d_v); spectral mode is the exact
/// expectation sum_i q/(q+mu_i) = tr K(q) over Laplacian eigenvalues.
inline double expected_coarse_nodes(const Graph& g, double q, NodeEstimateMode mode) {
  detail::require(q > 0.0, "expected_coarse_nodes requires q > 0");
  if (std::isinf(q)) return static_cast<double>(g.node_count());
  double sum = 0.0;
  if (mode == NodeEstimateMode::Degree) {
    for (int v = 0; v < g.node_count(); ++v) sum += q / (q + g.degree(v));
  } else {
    const EigenDecomposition eig = eig_sym(laplacian(g));
    for (int i = 0; i < eig.eigenvalues.size(); ++i) sum += q / (q + std::max(0.0, eig.eigenvalues[i]));
  }
  return sum;
}

/// Per-edge cut probability estimate 2q / (2q + d_i + d_j).
inline double cut_probability(int d_i, int d_j, double q) {
  detail::require(q > 0.0, "cut_probability requires q > 0");
  detail::require(d_i >= 1 && d_j >= 1, "cut_probability requires degrees >= 1");
  if (std::isinf(q)) return 1.0;
  return 2.0 * q / (2.0 * q + d_i + d_j);
}

/// Expected coarse edge count: sum of cut probabilities over undirected
/// edges.
inline double expected_coarse_edges(const Graph& g, double q) {
  detail::require(q > 0.0, "expected_coarse_edges requires q > 0");
  double sum = 0.0;
  for (const Edge& e : g.edges()) sum += cut_probability(g.degree(e.u), g.degree(e.v), q);
  return sum;
}

/// Reduction ratio r(q) = q / (q + mean degree). Edgeless graphs have
/// mean degree 0, giving r = 1 (warned, since coarsening then does
/// nothing).
inline double reduction_ratio(const Graph& g, double q) {
  detail::require(q > 0.0, "reduction_ratio requires q > 0");
  if (g.edge_count() == 0) {
    std::cerr << "reduction_ratio: edgeless graph has mean degree 0; r = 1\n";
    return 1.0;
  }
  if (std::isinf(q)) return 1.0;
  return q / (q + g.mean_degree());
}

struct CostParams {
  long long n = 1, m = 1;
  long long f_v = 1, f_e = 0;
  long long o = 1;    // hidden width
  long long t = 1;    // message passing layers per level
  long long mlp = 1;  // linear maps inside each message layer (M)
  long long n_q = 1;  // resolution levels
  double q = 1.0;
  double d_bar = 0.0;
};

/// Abstract multiply-accumulate counts for one SHAKE forward pass,
/// scaled by the reduction ratio r(q) = q/(q + d_bar) and the number of
/// resolution levels.
struct CostEstimate {
  double embedding_cost = 0.0;
  double message_passing_cost = 0.0;
  double pooling_cost = 0.0;
  double total_cost = 0.0;
  double r = 1.0;
  std::string dominant;
  CostParams params;
};

inline CostEstimate cost_model(const CostParams& p) {
  detail::require(p.n >= 1 && p.m >= 1 && p.f_v >= 1 && p.o >= 1 && p.t >= 1 && p.n_q >= 1,
                  "cost_model counts must be >= 1");
  detail::require(p.f_e >= 0 && p.mlp >= 0, "cost_model requires f_e >= 0 and M >= 0");
  detail::require(p.q > 0.0 && p.d_bar >= 0.0, "cost_model requires q > 0 and d_bar >= 0");
  CostEstimate c;
  c.params = p;
  c.r = std::isinf(p.q) ? 1.0 : p.q / (p.q + p.d_bar);
  const double n = static_cast<double>(p.n), m = static_cast<double>(p.m);
  const double o = static_cast<double>(p.o);
  c.embedding_cost = c.r * (n * p.f_v * o + m * p.f_e * o);
  c.message_passing_cost = p.t * c.r * (m * o + n * p.mlp * o * o);
  c.pooling_cost = c.r * n * o;
  c.total_cost = p.n_q * (c.embedding_cost + c.message_passing_cost + c.pooling_cost);
  c.dominant = "message_passing";
  if (c.embedding_cost > c.message_passing_cost && c.embedding_cost >= c.pooling_cost)
    c.dominant = "embedding";
  else if (c.pooling_cost > c.message_passing_cost && c.pooling_cost > c.embedding_cost)
    c.dominant = "pooling";
  return c;
}

}  // namespace kfh
