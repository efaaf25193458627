#include "kfh/io.hpp"

#include <gtest/gtest.h>

#include "kfh/synthetic.hpp"
#include "test_util.hpp"

namespace kfh {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Round-trip property on random attributed graphs.
TEST(GraphJson, RoundTrip) {
  Pcg32 rng(3, 0);
  for (int trial = 0; trial < 10; ++trial) {
    Graph g = testing::random_graph(12, 0.3, 3, rng, trial % 2 ? 2 : 0);
    Graph back = io::graph_from_json(io::graph_to_json(g));
    EXPECT_EQ(back.node_count(), g.node_count());
    EXPECT_EQ(back.edge_count(), g.edge_count());
    EXPECT_TRUE(back.node_features() == g.node_features());
    EXPECT_TRUE(back.edge_features() == g.edge_features());
    EXPECT_EQ(back.label(), g.label());
    for (int e = 0; e < g.edge_count(); ++e) {
      EXPECT_EQ(back.edges()[e].u, g.edges()[e].u);
      EXPECT_EQ(back.edges()[e].v, g.edges()[e].v);
    }
  }
}

TEST(GraphJson, NullFieldsAndLabel) {
  Graph g = Graph::build({{0, 1}}, Matrix::Ones(2, 1), std::nullopt, 3);
  io::json j = io::graph_to_json(g);
  EXPECT_TRUE(j.at("edge_features").is_null());
  EXPECT_EQ(j.at("label").get<int>(), 3);
  Graph back = io::graph_from_json(j);
  EXPECT_EQ(back.edge_feature_dim(), 0);
  EXPECT_EQ(*back.label(), 3);
}

TEST(GraphJson, RejectsMalformed) {
  EXPECT_THROW(io::graph_from_json(io::json{{"n", 2}}), std::invalid_argument);
  io::json bad{{"n", 2}, {"edges", {{0, 1, 2}}}, {"node_features", {{1.0}, {1.0}}}};
  EXPECT_THROW(io::graph_from_json(bad), std::invalid_argument);
}

TEST(EdgeListText, ParsesWithDefaultFeature) {
  Graph g = io::graph_from_edge_list_text("0 1\n1 2\n3 0\n");
  EXPECT_EQ(g.node_count(), 4);
  EXPECT_EQ(g.edge_count(), 3);
  EXPECT_EQ(g.feature_dim(), 1);
  EXPECT_DOUBLE_EQ(g.node_features()(2, 0), 1.0);
  EXPECT_THROW(io::graph_from_edge_list_text("0 1 2"), std::invalid_argument);
}

TEST(ForestJson, RoundTripWithInfinity) {
  Graph g = testing::star4();
  for (double q : {1.5, kInf}) {
    RootedForest f = sample_forest(g, q, 9);
    RootedForest back = io::forest_from_json(io::forest_to_json(f));
    EXPECT_EQ(back.parent, f.parent);
    EXPECT_EQ(back.roots, f.roots);
    EXPECT_EQ(std::isinf(back.q), std::isinf(f.q));
  }
}

TEST(HierarchyJson, RoundTrip) {
  Pcg32 rng(7, 0);
  Graph g = testing::random_graph(14, 0.3, 2, rng);
  Hierarchy h = build_hierarchy(g, {kInf, 1.5}, AggMode::Mean, 11);
  Hierarchy back = io::hierarchy_from_json(io::hierarchy_to_json(h));
  ASSERT_EQ(back.level_count(), h.level_count());
  EXPECT_EQ(back.agg_mode, h.agg_mode);
  EXPECT_TRUE(std::isinf(back.q_sequence[0]));
  EXPECT_DOUBLE_EQ(back.q_sequence[1], 1.5);
  for (int l = 0; l < h.level_count(); ++l) {
    EXPECT_EQ(back.levels[l].node_count(), h.levels[l].node_count());
    EXPECT_TRUE(back.base_partitions[l].dense() == h.base_partitions[l].dense());
  }
  for (std::size_t l = 0; l < h.step_partitions.size(); ++l)
    EXPECT_TRUE(back.step_partitions[l].dense() == h.step_partitions[l].dense());
}

TEST(CheckpointJson, RoundTripExact) {
  ModelConfig cfg;
  cfg.f_v = 2;
  cfg.f_e = 1;
  cfg.o = 5;
  cfg.o_y = 3;
  cfg.layers_per_level = {2, 1};
  cfg.linear_per_layer = 2;
  cfg.mlp_layers = 2;
  io::Checkpoint ck{ModelParams::init(cfg, 77), {kInf, 2.0}, AggMode::Sum, 123};
  io::Checkpoint back = io::checkpoint_from_json(io::checkpoint_to_json(ck));
  EXPECT_EQ(back.hierarchy_seed, 123u);
  EXPECT_EQ(back.agg_mode, AggMode::Sum);
  std::vector<TensorView> a = tensors_of(ck.params), b = tensors_of(back.params);
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t k = 0; k < a.size(); ++k) {
    ASSERT_EQ(a[k].size, b[k].size);
    for (std::ptrdiff_t i = 0; i < a[k].size; ++i) EXPECT_EQ(a[k].data[i], b[k].data[i]);
  }
}

TEST(Csv, QCurveAndMetricsShapes) {
  Graph g = testing::triangle();
  QCurve c = select_q(g, log_grid(0.1, 10, 5), 1.0);
  std::string csv = io::qcurve_to_csv(c);
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 6);  // header + 5 rows
  EXPECT_TRUE(csv.starts_with("q,recon_node,dir_node,recon_edge,dir_edge,df_node,df_edge,J\n"));

  std::vector<EpochMetrics> hist(2);
  hist[0].epoch = 1;
  hist[1].epoch = 2;
  std::string mcsv = io::metrics_to_csv(hist);
  EXPECT_TRUE(mcsv.starts_with("epoch,train_loss,train_acc,val_loss,val_acc,wall_seconds\n"));
  EXPECT_EQ(std::count(mcsv.begin(), mcsv.end(), '\n'), 3);
}

TEST(JsonDocuments, SingleAndJsonl) {
  EXPECT_EQ(io::parse_json_documents("{\"a\": 1}").size(), 1u);
  EXPECT_EQ(io::parse_json_documents("{\"a\": 1}\n{\"a\": 2}\n").size(), 2u);
  EXPECT_THROW(io::parse_json_documents("not json"), std::runtime_error);
}

TEST(AtomicWrite, WritesAndReplaces) {
  const std::filesystem::path p = std::filesystem::temp_directory_path() / "kfh_io_test.json";
  io::write_file_atomic(p, "one");
  io::write_file_atomic(p, "two");
  EXPECT_EQ(io::read_file(p), "two");
  std::filesystem::remove(p);
}

TEST(DatasetJsonl, ByteIdenticalRerun) {
  auto render = [] {
    std::vector<Graph> graphs = gen_synthetic(SyntheticTask::CycleVsTree, 8, 6, 12, 4);
    std::ostringstream os;
    for (const Graph& g : graphs) os << io::graph_to_json(g).dump() << '\n';
    return os.str();
  };
  EXPECT_EQ(render(), render());
}

}  // namespace
}  // namespace kfh
