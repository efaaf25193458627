#include "kfh/shake.hpp"

#include <gtest/gtest.h>

#include "test_util.hpp"

namespace kfh {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

Hierarchy single_level(const Graph& g) { return build_hierarchy(g, {kInf}, AggMode::Mean, 1); }

ModelParams zero_params(const ModelConfig& cfg) { return zeros_like(ModelParams::init(cfg, 1)); }

TEST(Encode, ZeroParametersGiveZeroEmbeddings) {
  Pcg32 rng(1, 0);
  Graph g = testing::random_graph(6, 0.5, 3, rng, 2);
  ModelConfig cfg;
  cfg.f_v = 3;
  cfg.f_e = 2;
  cfg.o = 4;
  LevelState s = encode(g, zero_params(cfg));
  EXPECT_EQ(s.h_v.rows(), 6);
  EXPECT_DOUBLE_EQ(s.h_v.cwiseAbs().maxCoeff(), 0.0);
  EXPECT_DOUBLE_EQ(s.h_e.cwiseAbs().maxCoeff(), 0.0);
}

TEST(Encode, IdentityEncoderPassesFeatures) {
  Pcg32 rng(2, 0);
  Graph g = testing::random_graph(5, 0.6, 3, rng);
  ModelConfig cfg;
  cfg.f_v = 3;
  cfg.o = 3;
  ModelParams p = zero_params(cfg);
  p.node_encoder.w = Matrix::Identity(3, 3);
  LevelState s = encode(g, p);
  EXPECT_TRUE(s.h_v.isApprox(g.node_features()));
}

TEST(Encode, NoEdgeFeaturesGiveZeroEdgeEmbeddings) {
  Graph g = testing::triangle();
  ModelConfig cfg;
  cfg.f_v = 1;
  cfg.o = 5;
  ModelParams p = ModelParams::init(cfg, 3);
  EXPECT_FALSE(p.edge_encoder.has_value());
  LevelState s = encode(g, p);
  EXPECT_EQ(s.h_e.rows(), 3);
  EXPECT_EQ(s.h_e.cols(), 5);
  EXPECT_DOUBLE_EQ(s.h_e.cwiseAbs().maxCoeff(), 0.0);
}

TEST(Encode, RejectsWidthMismatch) {
  Graph g = testing::triangle();  // f_v = 1
  ModelConfig cfg;
  cfg.f_v = 2;
  EXPECT_THROW(encode(g, ModelParams::init(cfg, 1)), std::invalid_argument);
}

MessageLayer identity_layer(int o) {
  MessageLayer layer;
  LinearMap lin;
  lin.w = Matrix::Identity(o, o);
  lin.b = Vector::Zero(o);
  layer.mlp.push_back(std::move(lin));
  return layer;
}

TEST(MessageLayer, IsolatedNodeKeepsEmbedding) {
  Graph g = Graph::build({{0, 1}}, testing::ones_features(3));  // node 2 isolated
  ModelConfig cfg;
  cfg.o = 2;
  LevelState s;
  s.h_v = Matrix::Zero(3, 2);
  s.h_v << 1, 2, 3, 4, 5, 6;
  s.h_e = Matrix::Zero(1, 2);
  LevelState out = message_layer(g, s, identity_layer(2));
  EXPECT_DOUBLE_EQ(out.h_v(2, 0), 5.0);
  EXPECT_DOUBLE_EQ(out.h_v(2, 1), 6.0);
}

TEST(MessageLayer, ZeroWeightsGiveZeroOutput) {
  Graph g = testing::triangle();
  LevelState s;
  s.h_v = Matrix::Random(3, 4);
  s.h_e = Matrix::Random(3, 4);
  MessageLayer layer;
  layer.mlp.push_back({Matrix::Zero(4, 4), Vector::Zero(4)});
  LevelState out = message_layer(g, s, layer);
  EXPECT_DOUBLE_EQ(out.h_v.cwiseAbs().maxCoeff(), 0.0);
  // Edge embeddings pass through unchanged.
  EXPECT_TRUE(out.h_e.isApprox(s.h_e));
}

TEST(MessageLayer, K2SumAggregation) {
  Graph g = testing::k2();
  LevelState s;
  s.h_v = Matrix::Zero(2, 2);
  s.h_v << 1, 2, 10, 20;
  s.h_e = Matrix::Zero(1, 2);
  LevelState out = message_layer(g, s, identity_layer(2));
  EXPECT_DOUBLE_EQ(out.h_v(0, 0), 11.0);
  EXPECT_DOUBLE_EQ(out.h_v(0, 1), 22.0);
  EXPECT_DOUBLE_EQ(out.h_v(1, 0), 11.0);
  EXPECT_DOUBLE_EQ(out.h_v(1, 1), 22.0);
}

TEST(MessageLayer, EdgeEmbeddingsEnterAggregation) {
  Graph g = testing::k2();
  LevelState s;
  s.h_v = Matrix::Zero(2, 1);
  s.h_e = Matrix::Constant(1, 1, 7.0);
  LevelState out = message_layer(g, s, identity_layer(1));
  EXPECT_DOUBLE_EQ(out.h_v(0, 0), 7.0);
  EXPECT_DOUBLE_EQ(out.h_v(1, 0), 7.0);
}

TEST(PropagateLevel, IdentityKeepsEmbeddings) {
  Graph g = testing::triangle();
  ModelConfig cfg;
  cfg.o = 3;
  ModelParams p = zero_params(cfg);
  LevelState s;
  s.h_v = Matrix::Random(3, 3);
  s.h_e = Matrix::Zero(3, 3);
  LevelState out = propagate_level(PartitionMatrix::identity(3), s, g, p);
  EXPECT_TRUE(out.h_v.isApprox(s.h_v));
  EXPECT_EQ(out.level, s.level + 1);
}

TEST(PropagateLevel, MeanRowArithmetic) {
  // Row [1/2, 1/2, 0] averages the first two embeddings; node 2 maps to
  // its own supernode so every fine node stays covered.
  Graph coarse = Graph::build({}, testing::ones_features(2));
  ModelConfig cfg;
  cfg.o = 1;
  PartitionMatrix pm =
      PartitionMatrix::from_triplets(2, 3, {{0, 0, 0.5}, {0, 1, 0.5}, {1, 2, 1.0}});
  LevelState s;
  s.h_v = Matrix::Zero(3, 1);
  s.h_v << 2, 4, 9;
  s.h_e = Matrix::Zero(0, 1);
  LevelState out = propagate_level(pm, s, coarse, zero_params(cfg));
  EXPECT_DOUBLE_EQ(out.h_v(0, 0), 3.0);
  EXPECT_DOUBLE_EQ(out.h_v(1, 0), 9.0);
}

TEST(PropagateLevel, RejectsDimensionMismatch) {
  Graph coarse = Graph::build({}, testing::ones_features(2));
  LevelState s;
  s.h_v = Matrix::Zero(3, 1);
  s.h_e = Matrix::Zero(0, 1);
  ModelConfig cfg;
  cfg.o = 1;
  EXPECT_THROW(propagate_level(PartitionMatrix::identity(3), s, coarse, zero_params(cfg)),
               std::invalid_argument);
}

TEST(Forward, AllZeroParametersYieldFinalBias) {
  Pcg32 rng(5, 0);
  Graph g = testing::random_graph(8, 0.4, 2, rng);
  Hierarchy h = single_level(g);
  ModelConfig cfg;
  cfg.f_v = 2;
  cfg.o = 4;
  cfg.o_y = 3;
  cfg.layers_per_level = {2};
  ModelParams p = zero_params(cfg);
  p.readout.back().b << 0.3, -0.7, 1.5;
  Vector logits = forward(h, p);
  EXPECT_NEAR(logits[0], 0.3, 1e-15);
  EXPECT_NEAR(logits[1], -0.7, 1e-15);
  EXPECT_NEAR(logits[2], 1.5, 1e-15);
}

TEST(Forward, RejectsLevelCountMismatch) {
  Graph g = testing::triangle();
  Hierarchy h = single_level(g);
  ModelConfig cfg;
  cfg.layers_per_level = {1, 1};  // two levels vs one in the hierarchy
  EXPECT_THROW(forward(h, ModelParams::init(cfg, 1)), std::invalid_argument);
}

// Independent flat reference: plain loops, no Eigen expressions shared
// with the implementation path.
std::vector<double> flat_gnn_reference(const Graph& g, const ModelParams& p) {
  const int n = g.node_count(), o = p.config.o;
  std::vector<std::vector<double>> h(n, std::vector<double>(o, 0.0));
  for (int v = 0; v < n; ++v)
    for (int c = 0; c < o; ++c) {
      double acc = p.node_encoder.b[c];
      for (int f = 0; f < p.config.f_v; ++f) acc += g.node_features()(v, f) * p.node_encoder.w(f, c);
      h[v][c] = acc;
    }
  for (const MessageLayer& layer : p.levels[0]) {
    std::vector<std::vector<double>> agg = h;
    for (int v = 0; v < n; ++v)
      for (int u : g.neighbors(v))
        for (int c = 0; c < o; ++c) agg[v][c] += h[u][c];  // no edge features in this reference
    for (const LinearMap& lin : layer.mlp) {
      std::vector<std::vector<double>> next(n, std::vector<double>(o, 0.0));
      for (int v = 0; v < n; ++v)
        for (int c = 0; c < o; ++c) {
          double acc = lin.b[c];
          for (int d = 0; d < o; ++d) acc += agg[v][d] * lin.w(d, c);
          next[v][c] = acc;
        }
      const bool last = &lin == &layer.mlp.back();
      if (!last)
        for (auto& row : next)
          for (double& x : row) x = std::max(0.0, x);
      agg = std::move(next);
    }
    h = std::move(agg);
  }
  std::vector<double> pooled(o, 0.0);
  for (int v = 0; v < n; ++v)
    for (int c = 0; c < o; ++c) pooled[c] += h[v][c] / n;
  std::vector<double> cur = pooled;
  for (const LinearMap& lin : p.readout) {
    std::vector<double> next(lin.w.cols(), 0.0);
    for (int c = 0; c < lin.w.cols(); ++c) {
      double acc = lin.b[c];
      for (int d = 0; d < lin.w.rows(); ++d) acc += cur[d] * lin.w(d, c);
      next[c] = acc;
    }
    const bool last = &lin == &p.readout.back();
    if (!last)
      for (double& x : next) x = std::max(0.0, x);
    cur = std::move(next);
  }
  return cur;
}

TEST(Forward, SingleLevelMatchesFlatReference) {
  Pcg32 rng(7, 0);
  for (int trial = 0; trial < 5; ++trial) {
    Graph g = testing::random_graph(10, 0.4, 3, rng);
    Hierarchy h = single_level(g);
    ModelConfig cfg;
    cfg.f_v = 3;
    cfg.o = 6;
    cfg.o_y = 2;
    cfg.layers_per_level = {3};
    cfg.linear_per_layer = 2;
    cfg.mlp_layers = 2;
    ModelParams p = ModelParams::init(cfg, 100 + trial);
    Vector logits = forward(h, p);
    std::vector<double> ref = flat_gnn_reference(g, p);
    for (int c = 0; c < cfg.o_y; ++c) EXPECT_NEAR(logits[c], ref[c], 1e-10);
  }
}

TEST(Forward, PermutationInvariance) {
  Pcg32 rng(11, 0);
  Graph g = testing::random_graph(9, 0.45, 2, rng);
  ModelConfig cfg;
  cfg.f_v = 2;
  cfg.o = 5;
  cfg.layers_per_level = {2};
  cfg.linear_per_layer = 2;
  ModelParams p = ModelParams::init(cfg, 3);
  Vector base = forward(single_level(g), p);

  // Apply a fixed permutation to the node order and rebuild.
  std::vector<int> perm(g.node_count());
  for (int i = 0; i < g.node_count(); ++i) perm[i] = i;
  Pcg32 prng(13, 0);
  prng.shuffle(perm);
  std::vector<std::pair<int, int>> edges;
  for (const Edge& e : g.edges()) edges.emplace_back(perm[e.u], perm[e.v]);
  Matrix x(g.node_count(), 2);
  for (int v = 0; v < g.node_count(); ++v) x.row(perm[v]) = g.node_features().row(v);
  Graph pg = Graph::build(std::move(edges), std::move(x));
  Vector permuted = forward(single_level(pg), p);
  EXPECT_LE((base - permuted).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(Forward, GlobalMeanPoolOfIdenticalRowsIsExact) {
  // All-identical node features, zero message layers: pooled value is the
  // encoder output row exactly, so logits equal readout(bias-free row).
  Graph g = Graph::build({{0, 1}, {1, 2}, {0, 2}}, Matrix::Constant(3, 2, 1.5));
  Hierarchy h = single_level(g);
  ModelConfig cfg;
  cfg.f_v = 2;
  cfg.o = 3;
  cfg.layers_per_level = {0};
  ModelParams p = ModelParams::init(cfg, 9);
  shake_detail::ForwardTrace trace;
  shake_detail::forward_traced(h, p, trace);
  LevelState s = encode(g, p);
  Vector pooled_expected = s.h_v.row(0).transpose();
  Matrix pooled = s.h_v.colwise().mean();
  EXPECT_TRUE(pooled.row(0).transpose() == pooled_expected);
}

// forward() must agree with chaining the public per-level operations.
TEST(Forward, MatchesManualOpChain) {
  Pcg32 rng(41, 0);
  Graph g = testing::random_graph(12, 0.4, 2, rng, 2);
  Hierarchy h = build_hierarchy(g, {kInf, 1.0}, AggMode::Mean, 6);
  ModelConfig cfg;
  cfg.f_v = 2;
  cfg.f_e = 2;
  cfg.o = 5;
  cfg.o_y = 3;
  cfg.layers_per_level = {2, 1};
  cfg.linear_per_layer = 2;
  cfg.mlp_layers = 2;
  ModelParams p = ModelParams::init(cfg, 8);

  LevelState s = encode(h.levels[0], p);
  for (const MessageLayer& layer : p.levels[0]) s = message_layer(h.levels[0], s, layer);
  s = propagate_level(h.step_partitions[0], s, h.levels[1], p);
  for (const MessageLayer& layer : p.levels[1]) s = message_layer(h.levels[1], s, layer);
  RowMatrix pooled = s.h_v.colwise().mean();
  RowMatrix logits_row = shake_detail::mlp_forward(p.readout, pooled, nullptr);

  Vector fused = forward(h, p);
  EXPECT_LE((fused.transpose() - logits_row.row(0)).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(LossAndGrad, UniformLogitsGiveLogTwo) {
  Graph g = testing::triangle();
  HierarchyDataset data;
  data.push_back({single_level(g), 0});
  ModelConfig cfg;
  cfg.o_y = 2;
  ModelParams p = zero_params(cfg);  // logits = readout bias = (0, 0)
  const std::vector<int> idx{0};
  LossGrad lg = loss_and_grad(data, idx, p);
  EXPECT_NEAR(lg.loss, std::log(2.0), 1e-12);
}

TEST(LossAndGrad, FinalBiasGradientClosedForm) {
  Pcg32 rng(17, 0);
  HierarchyDataset data;
  data.push_back({single_level(testing::random_graph(6, 0.5, 1, rng)), 0});
  data.push_back({single_level(testing::random_graph(7, 0.5, 1, rng)), 1});
  ModelConfig cfg;
  cfg.o_y = 2;
  cfg.layers_per_level = {1};
  ModelParams p = ModelParams::init(cfg, 21);
  const std::vector<int> idx{0, 1};
  LossGrad lg = loss_and_grad(data, idx, p);
  // grad of final bias = mean(softmax - onehot).
  Vector expected = Vector::Zero(2);
  for (int i = 0; i < 2; ++i) {
    Vector logits = forward(data[i].hierarchy, p);
    Vector soft = (logits.array() - logits.maxCoeff()).exp();
    soft /= soft.sum();
    soft[data[i].label] -= 1.0;
    expected += soft / 2.0;
  }
  EXPECT_LE((lg.grads.readout.back().b - expected).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(LossAndGrad, RejectsBadLabel) {
  HierarchyDataset data;
  data.push_back({single_level(testing::triangle()), 5});
  ModelConfig cfg;
  ModelParams p = ModelParams::init(cfg, 1);
  const std::vector<int> idx{0};
  EXPECT_THROW(loss_and_grad(data, idx, p), std::invalid_argument);
}

double batch_loss(const HierarchyDataset& data, const std::vector<int>& idx, const ModelParams& p) {
  double loss = 0.0;
  for (int i : idx) {
    Vector logits = forward(data[i].hierarchy, p);
    const double zmax = logits.maxCoeff();
    loss += std::log((logits.array() - zmax).exp().sum()) + zmax - logits[data[i].label];
  }
  return loss / idx.size();
}

void gradient_check(const ModelConfig& cfg, bool with_edge_features, std::uint64_t seed) {
  Pcg32 rng(seed, 0);
  HierarchyDataset data;
  for (int i = 0; i < 2; ++i) {
    Graph g = testing::random_graph(6 + i, 0.5, cfg.f_v, rng, with_edge_features ? cfg.f_e : 0);
    data.push_back({build_hierarchy(g, {std::numeric_limits<double>::infinity(), 1.0}, AggMode::Mean,
                                    seed + i),
                    i % cfg.o_y});
  }
  ModelParams p = ModelParams::init(cfg, seed);
  const std::vector<int> idx{0, 1};
  LossGrad lg = loss_and_grad(data, idx, p);
  std::vector<TensorView> tensors = tensors_of(p);
  std::vector<TensorView> gtensors = tensors_of(lg.grads);
  const double eps = 1e-5;
  double max_rel = 0.0;
  for (std::size_t k = 0; k < tensors.size(); ++k) {
    for (std::ptrdiff_t i = 0; i < tensors[k].size; ++i) {
      double& theta = tensors[k].data[i];
      const double saved = theta;
      theta = saved + eps;
      const double up = batch_loss(data, idx, p);
      theta = saved - eps;
      const double down = batch_loss(data, idx, p);
      theta = saved;
      const double fd = (up - down) / (2.0 * eps);
      const double an = gtensors[k].data[i];
      const double rel = std::abs(fd - an) / std::max({std::abs(fd), std::abs(an), 1e-6});
      max_rel = std::max(max_rel, rel);
    }
  }
  EXPECT_LT(max_rel, 1e-4);
}

TEST(GradientCheck, TwoLevelNoEdgeFeatures) {
  ModelConfig cfg;
  cfg.f_v = 2;
  cfg.o = 4;
  cfg.o_y = 2;
  cfg.layers_per_level = {2, 1};
  cfg.linear_per_layer = 2;
  cfg.mlp_layers = 2;
  gradient_check(cfg, false, 31);
}

TEST(GradientCheck, TwoLevelWithEdgeFeatures) {
  ModelConfig cfg;
  cfg.f_v = 2;
  cfg.f_e = 2;
  cfg.o = 4;
  cfg.o_y = 2;
  cfg.layers_per_level = {1, 2};
  cfg.linear_per_layer = 1;
  cfg.mlp_layers = 0;
  gradient_check(cfg, true, 37);
}

}  // namespace
}  // namespace kfh
