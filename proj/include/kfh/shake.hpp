#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "kfh/graph.hpp"
#include "kfh/hierarchy.hpp"
#include "kfh/rng.hpp"

namespace kfh {

/// Node/edge embedding block, stored row-major: one contiguous row per
/// node or edge, which keeps neighbourhood aggregation cache-friendly.
using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Affine map y = x W + b with W stored input-by-output.
struct LinearMap {
  Matrix w;
  Vector b;
};

/// One message passing layer: an M-deep MLP applied to the aggregated
/// neighbourhood signal, ReLU between internal maps, identity after the
/// last.
struct MessageLayer {
  std::vector<LinearMap> mlp;
};

struct ModelConfig {
  int f_v = 1;
  int f_e = 0;
  int o = 16;   // shared latent width
  int o_y = 2;  // classes
  std::vector<int> layers_per_level{2};
  int linear_per_layer = 1;  // M, linear maps per message layer
  int mlp_layers = 0;        // readout depth; 0 = single o -> o_y map
};

/// All trainable parameters. levels[i][t] is message layer t at
/// resolution level i; the readout ends in an o -> o_y map. The edge
/// encoder exists only when f_e > 0 (otherwise edge embeddings are
/// zero), and it is shared across levels: coarser levels re-encode their
/// aggregated edge features with it.
struct ModelParams {
  ModelConfig config;
  LinearMap node_encoder;
  std::optional<LinearMap> edge_encoder;
  std::vector<std::vector<MessageLayer>> levels;
  std::vector<LinearMap> readout;

  static ModelParams init(const ModelConfig& cfg, std::uint64_t seed);
};

/// Node and edge embeddings at one hierarchy level.
struct LevelState {
  int level = 0;
  RowMatrix h_v;  // n_l x o
  RowMatrix h_e;  // m_l x o
};

struct LabeledHierarchy {
  Hierarchy hierarchy;
  int label = 0;
};
using HierarchyDataset = std::vector<LabeledHierarchy>;

namespace shake_detail {

inline LinearMap init_linear(int in, int out, Pcg32& rng) {
  LinearMap l;
  l.w.resize(in, out);
  l.b.resize(out);
  const double bound = 1.0 / std::sqrt(static_cast<double>(std::max(in, 1)));
  for (int r = 0; r < in; ++r)
    for (int c = 0; c < out; ++c) l.w(r, c) = (2.0 * rng.uniform() - 1.0) * bound;
  for (int c = 0; c < out; ++c) l.b[c] = (2.0 * rng.uniform() - 1.0) * bound;
  return l;
}

template <class Derived>
inline RowMatrix linear_apply(const LinearMap& l, const Eigen::MatrixBase<Derived>& x) {
  detail::require(x.cols() == l.w.rows(), "linear map input width mismatch");
  return (x * l.w).rowwise() + l.b.transpose();
}

/// agg_i = h_i + sum_{j in N(i)} (h_j + e_ij); isolated nodes keep h_i.
inline RowMatrix aggregate(const Graph& g, const RowMatrix& h, const RowMatrix& he) {
  RowMatrix agg = h;
  for (int i = 0; i < g.node_count(); ++i) {
    auto nb = g.neighbors(i);
    auto ids = g.incident_edge_ids(i);
    for (std::size_t t = 0; t < nb.size(); ++t) {
      agg.row(i) += h.row(nb[t]);
      agg.row(i) += he.row(ids[t]);
    }
  }
  return agg;
}

inline void aggregate_backward(const Graph& g, const RowMatrix& dagg, RowMatrix& dh, RowMatrix& dhe) {
  dh = dagg;
  for (int i = 0; i < g.node_count(); ++i) {
    auto nb = g.neighbors(i);
    auto ids = g.incident_edge_ids(i);
    for (std::size_t t = 0; t < nb.size(); ++t) {
      dh.row(nb[t]) += dagg.row(i);
      dhe.row(ids[t]) += dagg.row(i);
    }
  }
}

struct MlpTrace {
  std::vector<RowMatrix> inputs;  // z_t fed into map t
  std::vector<RowMatrix> pre;     // y_t = z_t W_t + b_t
};

/// Stack of linear maps with ReLU between them and identity after the
/// last. Used both for message layer MLPs and for the readout.
inline RowMatrix mlp_forward(const std::vector<LinearMap>& maps, RowMatrix x, MlpTrace* trace) {
  const int depth = static_cast<int>(maps.size());
  for (int t = 0; t < depth; ++t) {
    if (trace) trace->inputs.push_back(x);
    RowMatrix y = linear_apply(maps[t], x);
    if (trace) trace->pre.push_back(y);
    x = (t + 1 < depth) ? y.cwiseMax(0.0).eval() : std::move(y);
  }
  return x;
}

/// Returns the gradient w.r.t. the stack input; accumulates parameter
/// gradients into `grads` (parallel to `maps`).
inline RowMatrix mlp_backward(const std::vector<LinearMap>& maps, const MlpTrace& trace, RowMatrix dout,
                              std::vector<LinearMap>& grads) {
  for (int t = static_cast<int>(maps.size()) - 1; t >= 0; --t) {
    if (t + 1 < static_cast<int>(maps.size()))
      dout = dout.cwiseProduct((trace.pre[t].array() > 0.0).cast<double>().matrix());
    grads[t].w += trace.inputs[t].transpose() * dout;
    grads[t].b += dout.colwise().sum().transpose();
    dout = (dout * maps[t].w.transpose()).eval();
  }
  return dout;
}

struct LayerTrace {
  MlpTrace mlp;
};

struct LevelTrace {
  RowMatrix he;
  std::vector<LayerTrace> layers;
};

struct ForwardTrace {
  std::vector<LevelTrace> levels;
  int last_n = 0;
  MlpTrace readout;
  Vector logits;
};

inline void check_model_matches(const Hierarchy& h, const ModelParams& p) {
  detail::require(static_cast<int>(p.levels.size()) == h.level_count(),
                  "model level count does not match hierarchy");
  detail::require(h.levels[0].feature_dim() == p.config.f_v, "node feature width mismatch");
  for (const Graph& g : h.levels)
    detail::require(g.edge_feature_dim() == p.config.f_e, "edge feature width mismatch");
}

inline RowMatrix edge_embeddings(const Graph& g, const ModelParams& p) {
  if (p.edge_encoder) return linear_apply(*p.edge_encoder, g.edge_features());
  return RowMatrix::Zero(g.edge_count(), p.config.o);
}

inline RowMatrix partition_apply(const PartitionMatrix& pm, const RowMatrix& h) {
  detail::require(h.rows() == pm.cols(), "row count of H must equal fine node count");
  return pm.matrix() * h;
}

inline RowMatrix partition_apply_transpose(const PartitionMatrix& pm, const RowMatrix& h) {
  detail::require(h.rows() == pm.rows(), "row count of H must equal coarse node count");
  return pm.matrix().transpose() * h;
}

inline Vector forward_traced(const Hierarchy& h, const ModelParams& p, ForwardTrace& trace) {
  check_model_matches(h, p);
  const int n_levels = h.level_count();
  RowMatrix hv = linear_apply(p.node_encoder, h.levels[0].node_features());
  trace.levels.resize(n_levels);
  for (int l = 0; l < n_levels; ++l) {
    const Graph& g = h.levels[l];
    trace.levels[l].he = edge_embeddings(g, p);
    for (const MessageLayer& layer : p.levels[l]) {
      LayerTrace& lt = trace.levels[l].layers.emplace_back();
      RowMatrix agg = aggregate(g, hv, trace.levels[l].he);
      hv = mlp_forward(layer.mlp, std::move(agg), &lt.mlp);
    }
    if (l + 1 < n_levels) hv = partition_apply(h.step_partitions[l], hv);
  }
  trace.last_n = static_cast<int>(hv.rows());
  RowMatrix pooled = hv.colwise().mean();
  RowMatrix logits_row = mlp_forward(p.readout, std::move(pooled), &trace.readout);
  trace.logits = logits_row.row(0).transpose();
  return trace.logits;
}

inline void backward_traced(const Hierarchy& h, const ModelParams& p, const ForwardTrace& trace,
                            const Vector& dlogits, ModelParams& grads) {
  RowMatrix dout = dlogits.transpose();
  RowMatrix dpool = mlp_backward(p.readout, trace.readout, std::move(dout), grads.readout);
  const int n_levels = h.level_count();
  RowMatrix dhv =
      RowMatrix::Ones(trace.last_n, 1) * (dpool / static_cast<double>(trace.last_n));
  for (int l = n_levels - 1; l >= 0; --l) {
    const Graph& g = h.levels[l];
    if (l + 1 < n_levels) dhv = partition_apply_transpose(h.step_partitions[l], dhv);
    RowMatrix dhe = RowMatrix::Zero(g.edge_count(), p.config.o);
    for (int t = static_cast<int>(p.levels[l].size()) - 1; t >= 0; --t) {
      RowMatrix dagg = mlp_backward(p.levels[l][t].mlp, trace.levels[l].layers[t].mlp, std::move(dhv),
                                    grads.levels[l][t].mlp);
      aggregate_backward(g, dagg, dhv, dhe);
    }
    if (grads.edge_encoder && g.edge_count() > 0) {
      grads.edge_encoder->w += g.edge_features().transpose() * dhe;
      grads.edge_encoder->b += dhe.colwise().sum().transpose();
    }
  }
  grads.node_encoder.w += h.levels[0].node_features().transpose() * dhv;
  grads.node_encoder.b += dhv.colwise().sum().transpose();
}

}  // namespace shake_detail

inline ModelParams ModelParams::init(const ModelConfig& cfg, std::uint64_t seed) {
  detail::require(cfg.f_v >= 1 && cfg.f_e >= 0, "feature widths must be valid");
  detail::require(cfg.o >= 1 && cfg.o_y >= 2, "latent width must be >= 1 and classes >= 2");
  detail::require(!cfg.layers_per_level.empty(), "at least one resolution level required");
  for (int li : cfg.layers_per_level) detail::require(li >= 0, "layer counts must be nonnegative");
  detail::require(cfg.linear_per_layer >= 1, "each message layer needs at least one linear map");
  detail::require(cfg.mlp_layers >= 0, "readout depth must be nonnegative");

  Pcg32 rng = Pcg32::from_stream(seed, 0);
  ModelParams p;
  p.config = cfg;
  p.node_encoder = shake_detail::init_linear(cfg.f_v, cfg.o, rng);
  if (cfg.f_e > 0) p.edge_encoder = shake_detail::init_linear(cfg.f_e, cfg.o, rng);
  for (int li : cfg.layers_per_level) {
    std::vector<MessageLayer>& level = p.levels.emplace_back();
    for (int t = 0; t < li; ++t) {
      MessageLayer& layer = level.emplace_back();
      for (int k = 0; k < cfg.linear_per_layer; ++k)
        layer.mlp.push_back(shake_detail::init_linear(cfg.o, cfg.o, rng));
    }
  }
  if (cfg.mlp_layers == 0) {
    p.readout.push_back(shake_detail::init_linear(cfg.o, cfg.o_y, rng));
  } else {
    for (int k = 0; k + 1 < cfg.mlp_layers; ++k)
      p.readout.push_back(shake_detail::init_linear(cfg.o, cfg.o, rng));
    p.readout.push_back(shake_detail::init_linear(cfg.o, cfg.o_y, rng));
  }
  return p;
}

/// Flat view of one parameter tensor; is_bias marks bias vectors so
/// weight decay can skip them.
struct TensorView {
  double* data = nullptr;
  std::ptrdiff_t size = 0;
  bool is_bias = false;
};

inline std::vector<TensorView> tensors_of(ModelParams& p) {
  std::vector<TensorView> out;
  auto add = [&out](LinearMap& l) {
    out.push_back({l.w.data(), l.w.size(), false});
    out.push_back({l.b.data(), l.b.size(), true});
  };
  add(p.node_encoder);
  if (p.edge_encoder) add(*p.edge_encoder);
  for (auto& level : p.levels)
    for (auto& layer : level)
      for (auto& lin : layer.mlp) add(lin);
  for (auto& lin : p.readout) add(lin);
  return out;
}

inline std::size_t parameter_count(const ModelParams& p) {
  std::size_t n = 0;
  for (const TensorView& t : tensors_of(const_cast<ModelParams&>(p))) n += t.size;
  return n;
}

inline ModelParams zeros_like(const ModelParams& p) {
  ModelParams z = p;
  for (TensorView t : tensors_of(z)) std::fill(t.data, t.data + t.size, 0.0);
  return z;
}

/// Level-0 encoding: H_v = NodeEncoder(X_v), H_e = EdgeEncoder(X_e)
/// (all-zero edge embeddings when the graph carries no edge features).
inline LevelState encode(const Graph& g_level, const ModelParams& p) {
  detail::require(g_level.feature_dim() == p.config.f_v, "node feature width mismatch");
  detail::require(g_level.edge_feature_dim() == p.config.f_e, "edge feature width mismatch");
  LevelState s;
  s.h_v = shake_detail::linear_apply(p.node_encoder, g_level.node_features());
  s.h_e = shake_detail::edge_embeddings(g_level, p);
  return s;
}

/// One message passing step; edge embeddings pass through unchanged.
inline LevelState message_layer(const Graph& g_level, const LevelState& state, const MessageLayer& layer) {
  detail::require(state.h_v.rows() == g_level.node_count(), "state does not match level graph");
  detail::require(state.h_e.rows() == g_level.edge_count(), "edge state does not match level graph");
  LevelState out = state;
  out.h_v = shake_detail::mlp_forward(layer.mlp, shake_detail::aggregate(g_level, state.h_v, state.h_e),
                                      nullptr);
  return out;
}

/// Move node embeddings one level coarser (H_v <- P H_v); edge
/// embeddings are re-encoded from the next level's aggregated edge
/// features.
inline LevelState propagate_level(const PartitionMatrix& p_step, const LevelState& state,
                                  const Graph& next_graph, const ModelParams& params) {
  detail::require(p_step.cols() == state.h_v.rows(), "partition matrix does not match current level");
  detail::require(p_step.rows() == next_graph.node_count(), "partition matrix does not match next level");
  LevelState out;
  out.level = state.level + 1;
  out.h_v = shake_detail::partition_apply(p_step, state.h_v);
  out.h_e = shake_detail::edge_embeddings(next_graph, params);
  return out;
}

/// Full forward pass: encode, per-level message passing, partition
/// propagation, global mean pool, readout. Returns raw class logits.
inline Vector forward(const Hierarchy& h, const ModelParams& p) {
  shake_detail::ForwardTrace trace;
  return shake_detail::forward_traced(h, p, trace);
}

struct LossGrad {
  double loss = 0.0;
  double accuracy = 0.0;
  ModelParams grads;
};

/// Mean softmax cross-entropy over the batch plus gradients for every
/// parameter, via reverse-mode differentiation of the forward pass.
inline LossGrad loss_and_grad(const HierarchyDataset& data, std::span<const int> batch,
                              const ModelParams& p) {
  detail::require(!batch.empty(), "batch must be nonempty");
  LossGrad out;
  out.grads = zeros_like(p);
  const double inv = 1.0 / static_cast<double>(batch.size());
  int correct = 0;
  for (int idx : batch) {
    const LabeledHierarchy& item = data[idx];
    detail::require(item.label >= 0 && item.label < p.config.o_y, "label out of range");
    shake_detail::ForwardTrace trace;
    Vector logits = shake_detail::forward_traced(item.hierarchy, p, trace);
    const double zmax = logits.maxCoeff();
    Vector shifted = (logits.array() - zmax).exp();
    const double denom = shifted.sum();
    out.loss += inv * (std::log(denom) + zmax - logits[item.label]);
    Vector dlogits = shifted / denom;
    dlogits[item.label] -= 1.0;
    dlogits *= inv;
    int argmax = 0;
    logits.maxCoeff(&argmax);
    correct += (argmax == item.label);
    shake_detail::backward_traced(item.hierarchy, p, trace, dlogits, out.grads);
  }
  out.accuracy = static_cast<double>(correct) / static_cast<double>(batch.size());
  return out;
}

}  // namespace kfh
