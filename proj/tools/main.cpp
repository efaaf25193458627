// kfh: Kirchhoff-Forest hierarchies command line.
//
// Subcommands: gen-data, sample-forest, hierarchy, select-q, estimate,
// train, eval. All outputs are JSON/CSV, written atomically, and every
// run drops a manifest (command, options, seed, version) next to its
// outputs. Exit codes: 0 success, 1 usage error, 2 data/validation
// error.

#include <CLI11.hpp>
#include <iostream>
#include <pmmintrin.h>
#include <xmmintrin.h>

#include "kfh/estimators.hpp"
#include "kfh/io.hpp"
#include "kfh/synthetic.hpp"
#include "kfh/version.hpp"

namespace {

using kfh::io::json;

struct ManifestWriter {
  std::string command;
  json options = json::object();
  std::uint64_t seed = 0;

  void set(const std::string& key, const json& value) { options[key] = value; }

  void write(const std::filesystem::path& near) const {
    json m{{"command", command}, {"options", options}, {"seed", seed}, {"version", kfh::kVersion}};
    std::filesystem::path path = near;
    if (std::filesystem::is_directory(near))
      path = near / "manifest.json";
    else
      path = near.string() + ".manifest.json";
    kfh::io::write_file_atomic(path, m.dump(2) + "\n");
  }
};

std::vector<json> load_documents(const std::string& path) {
  return kfh::io::parse_json_documents(kfh::io::read_file(path));
}

bool is_edge_list_path(const std::string& path) {
  return path.size() > 4 && path.substr(path.size() - 4) == ".txt";
}

kfh::Graph load_single_graph(const std::string& path) {
  if (is_edge_list_path(path)) return kfh::io::graph_from_edge_list_text(kfh::io::read_file(path));
  std::vector<json> docs = load_documents(path);
  kfh::detail::require(docs.size() == 1, "expected a single graph in " + path);
  return kfh::io::graph_from_json(docs[0]);
}

/// Graphs from a .txt edge list, a single graph JSON, or a .jsonl dataset.
std::vector<kfh::Graph> load_graphs(const std::string& path) {
  if (is_edge_list_path(path)) return {load_single_graph(path)};
  std::vector<json> docs = load_documents(path);
  std::vector<kfh::Graph> graphs;
  graphs.reserve(docs.size());
  for (const json& d : docs) graphs.push_back(kfh::io::graph_from_json(d));
  return graphs;
}

/// A dataset file holds either graphs or prebuilt hierarchy bundles.
struct LoadedData {
  std::vector<kfh::Graph> graphs;          // when the file held graphs
  kfh::HierarchyDataset hierarchies;       // always filled for train/eval
  bool prebuilt = false;
};

LoadedData load_dataset(const std::string& path, const std::vector<double>& q_sequence,
                        kfh::AggMode agg, std::uint64_t hierarchy_seed, bool build) {
  LoadedData out;
  std::vector<json> docs = load_documents(path);
  for (const json& d : docs) {
    if (d.contains("levels")) {
      kfh::Hierarchy h = kfh::io::hierarchy_from_json(d);
      kfh::detail::require(h.levels[0].label().has_value(), "hierarchy bundle is missing a label");
      const int label = *h.levels[0].label();
      out.hierarchies.push_back({std::move(h), label});
      out.prebuilt = true;
    } else {
      out.graphs.push_back(kfh::io::graph_from_json(d));
    }
  }
  kfh::detail::require(out.graphs.empty() || out.hierarchies.empty(),
                       "dataset mixes graphs and hierarchy bundles");
  if (!out.graphs.empty() && build) {
    for (std::size_t i = 0; i < out.graphs.size(); ++i) {
      const kfh::Graph& g = out.graphs[i];
      kfh::detail::require(g.label().has_value(), "graph " + std::to_string(i) + " has no label");
      out.hierarchies.push_back(
          {kfh::build_hierarchy(g, q_sequence, agg, kfh::derive_seed(hierarchy_seed, i)), *g.label()});
    }
  }
  return out;
}

std::vector<int> parse_int_list(const std::string& csv) {
  std::vector<int> out;
  std::stringstream ss(csv);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(std::stoi(item));
  kfh::detail::require(!out.empty(), "empty list");
  return out;
}

int run_gen_data(const std::string& task, int n_graphs, int min_nodes, int max_nodes,
                 std::uint64_t seed, const std::string& out_path) {
  std::vector<kfh::Graph> graphs =
      kfh::gen_synthetic(kfh::synthetic_task_from_string(task), n_graphs, min_nodes, max_nodes, seed);
  std::ostringstream os;
  for (const kfh::Graph& g : graphs) os << kfh::io::graph_to_json(g).dump() << '\n';
  kfh::io::write_file_atomic(out_path, os.str());
  ManifestWriter m{"gen-data"};
  m.seed = seed;
  m.set("task", task);
  m.set("n_graphs", n_graphs);
  m.set("min_nodes", min_nodes);
  m.set("max_nodes", max_nodes);
  m.set("out", out_path);
  m.write(out_path);
  std::cout << "wrote " << graphs.size() << " graphs to " << out_path << "\n";
  return 0;
}

int run_sample_forest(const std::string& input, const std::string& q_str, std::uint64_t seed,
                      const std::string& out_path) {
  kfh::Graph g = load_single_graph(input);
  kfh::RootedForest f = kfh::sample_forest(g, kfh::io::parse_q(q_str), seed);
  kfh::io::write_file_atomic(out_path, kfh::io::forest_to_json(f).dump(2) + "\n");
  ManifestWriter m{"sample-forest"};
  m.seed = seed;
  m.set("input", input);
  m.set("q", q_str);
  m.set("out", out_path);
  m.write(out_path);
  std::cout << "sampled forest with " << f.roots.size() << " roots -> " << out_path << "\n";
  return 0;
}

int run_hierarchy(const std::string& input, const std::string& q_csv, const std::string& agg_str,
                  std::uint64_t seed, const std::string& out_path) {
  const std::vector<double> q_sequence = kfh::io::parse_q_list(q_csv);
  const kfh::AggMode agg = kfh::agg_mode_from_string(agg_str);
  const std::vector<kfh::Graph> graphs = load_graphs(input);
  std::ostringstream os;
  for (std::size_t i = 0; i < graphs.size(); ++i) {
    os << kfh::io::hierarchy_to_json(
              kfh::build_hierarchy(graphs[i], q_sequence, agg, kfh::derive_seed(seed, i)))
              .dump()
       << '\n';
  }
  kfh::io::write_file_atomic(out_path, os.str());
  ManifestWriter m{"hierarchy"};
  m.seed = seed;
  m.set("input", input);
  m.set("q", q_csv);
  m.set("agg", agg_str);
  m.set("out", out_path);
  m.write(out_path);
  std::cout << "wrote " << graphs.size() << " hierarchies to " << out_path << "\n";
  return 0;
}

int run_select_q(const std::string& input, double phi, double grid_min, double grid_max,
                 int grid_points, const std::string& out_path, std::string summary_path) {
  const std::vector<double> grid = kfh::log_grid(grid_min, grid_max, grid_points);
  const std::vector<kfh::Graph> graphs = load_graphs(input);
  kfh::QCurve curve =
      graphs.size() == 1 ? kfh::select_q(graphs[0], grid, phi) : kfh::select_q_dataset(graphs, grid, phi);
  kfh::io::write_file_atomic(out_path, kfh::io::qcurve_to_csv(curve));
  if (summary_path.empty()) summary_path = out_path + ".summary.json";
  json summary{{"q_star", curve.q_star}, {"phi", phi}, {"grid", grid}};
  kfh::io::write_file_atomic(summary_path, summary.dump(2) + "\n");
  ManifestWriter m{"select-q"};
  m.set("input", input);
  m.set("phi", phi);
  m.set("grid_min", grid_min);
  m.set("grid_max", grid_max);
  m.set("grid_points", grid_points);
  m.set("out", out_path);
  m.set("summary", summary_path);
  m.write(out_path);
  std::cout << "q_star = " << curve.q_star << " over " << graphs.size() << " graph(s) -> " << out_path
            << "\n";
  return 0;
}

int run_estimate(const std::string& input, const std::string& q_str, int hidden, int layers, int linear,
                 int levels, const std::string& out_path) {
  kfh::Graph g = load_single_graph(input);
  const double q = kfh::io::parse_q(q_str);
  kfh::CostParams cp;
  cp.n = g.node_count();
  cp.m = std::max(1, g.edge_count());
  cp.f_v = g.feature_dim();
  cp.f_e = g.edge_feature_dim();
  cp.o = hidden;
  cp.t = layers;
  cp.mlp = linear;
  cp.n_q = levels;
  cp.q = q;
  cp.d_bar = g.mean_degree();
  kfh::CostEstimate cost = kfh::cost_model(cp);
  json report{
      {"expected_nodes_degree", kfh::expected_coarse_nodes(g, q, kfh::NodeEstimateMode::Degree)},
      {"expected_nodes_spectral", kfh::expected_coarse_nodes(g, q, kfh::NodeEstimateMode::Spectral)},
      {"expected_edges", kfh::expected_coarse_edges(g, q)},
      {"r", kfh::reduction_ratio(g, q)},
      {"cost",
       {{"embedding", cost.embedding_cost},
        {"message_passing", cost.message_passing_cost},
        {"pooling", cost.pooling_cost},
        {"total", cost.total_cost},
        {"dominant", cost.dominant}}}};
  const std::string text = report.dump(2) + "\n";
  if (out_path.empty()) {
    std::cout << text;
  } else {
    kfh::io::write_file_atomic(out_path, text);
    ManifestWriter m{"estimate"};
    m.set("input", input);
    m.set("q", q_str);
    m.set("out", out_path);
    m.write(out_path);
  }
  return 0;
}

struct TrainCliOptions {
  std::string data;
  std::string q_csv = "inf";
  std::string agg = "mean";
  std::uint64_t hierarchy_seed = 42;
  std::string layers_csv = "2";
  int mlp_layers = 0;
  int linear_per_layer = 1;
  int hidden = 64;
  kfh::TrainConfig cfg;
  std::string optimizer = "adamw";
  double val_frac = 0.2, test_frac = 0.2;
  std::string out_dir;
};

int run_train(const TrainCliOptions& opt) {
  const std::vector<double> q_sequence = kfh::io::parse_q_list(opt.q_csv);
  const kfh::AggMode agg = kfh::agg_mode_from_string(opt.agg);
  LoadedData data = load_dataset(opt.data, q_sequence, agg, opt.hierarchy_seed, true);
  const kfh::HierarchyDataset& ds = data.hierarchies;
  kfh::detail::require(!ds.empty(), "dataset is empty");

  kfh::ModelConfig mc;
  mc.f_v = ds[0].hierarchy.levels[0].feature_dim();
  mc.f_e = ds[0].hierarchy.levels[0].edge_feature_dim();
  mc.layers_per_level = parse_int_list(opt.layers_csv);
  mc.linear_per_layer = opt.linear_per_layer;
  mc.mlp_layers = opt.mlp_layers;
  mc.o = opt.hidden;
  int max_label = 1;
  for (const kfh::LabeledHierarchy& lh : ds) max_label = std::max(max_label, lh.label);
  mc.o_y = max_label + 1;
  kfh::detail::require(static_cast<int>(mc.layers_per_level.size()) == ds[0].hierarchy.level_count(),
                       "--layers must list one layer count per hierarchy level");

  kfh::TrainConfig cfg = opt.cfg;
  cfg.optimizer = kfh::optimizer_from_string(opt.optimizer);
  kfh::SplitIndices split =
      kfh::make_split(static_cast<int>(ds.size()), opt.val_frac, opt.test_frac, cfg.seed);
  kfh::ModelParams p0 = kfh::ModelParams::init(mc, cfg.seed);
  kfh::TrainResult result = kfh::train(ds, split, cfg, p0);

  std::filesystem::create_directories(opt.out_dir);
  const std::filesystem::path dir(opt.out_dir);
  kfh::io::Checkpoint ck{std::move(result.params),
                         data.prebuilt ? ds[0].hierarchy.q_sequence : q_sequence,
                         data.prebuilt ? ds[0].hierarchy.agg_mode : agg, opt.hierarchy_seed};
  kfh::io::write_file_atomic(dir / "checkpoint.json", kfh::io::checkpoint_to_json(ck).dump() + "\n");
  kfh::io::write_file_atomic(dir / "metrics.csv", kfh::io::metrics_to_csv(result.history));
  json summary{{"test_loss", result.test_loss},
               {"test_acc", result.test_acc},
               {"best_epoch", result.best_epoch},
               {"best_val_loss", result.best_val_loss},
               {"epochs_run", result.history.size()},
               {"parameter_count", kfh::parameter_count(ck.params)},
               {"n_train", split.train.size()},
               {"n_val", split.val.size()},
               {"n_test", split.test.size()}};
  kfh::io::write_file_atomic(dir / "summary.json", summary.dump(2) + "\n");
  ManifestWriter m{"train"};
  m.seed = cfg.seed;
  m.set("data", opt.data);
  m.set("q", opt.q_csv);
  m.set("agg", opt.agg);
  m.set("hierarchy_seed", opt.hierarchy_seed);
  m.set("layers", opt.layers_csv);
  m.set("mlp_layers", opt.mlp_layers);
  m.set("linear_per_layer", opt.linear_per_layer);
  m.set("hidden", opt.hidden);
  m.set("batch", cfg.batch_size);
  m.set("lr", cfg.learning_rate);
  m.set("wd", cfg.weight_decay);
  m.set("epochs", cfg.max_epochs);
  m.set("patience", cfg.early_stop_patience);
  m.set("min_delta", cfg.early_stop_min_delta);
  m.set("optimizer", opt.optimizer);
  m.set("val_frac", opt.val_frac);
  m.set("test_frac", opt.test_frac);
  m.set("out", opt.out_dir);
  m.write(dir);
  std::cout << "test_acc " << result.test_acc << " after " << result.history.size() << " epochs -> "
            << opt.out_dir << "\n";
  return 0;
}

int run_eval(const std::string& data_path, const std::string& checkpoint_path,
             const std::string& out_path) {
  kfh::io::Checkpoint ck =
      kfh::io::checkpoint_from_json(json::parse(kfh::io::read_file(checkpoint_path)));
  LoadedData data = load_dataset(data_path, ck.q_sequence, ck.agg_mode, ck.hierarchy_seed, true);
  kfh::detail::require(!data.hierarchies.empty(), "dataset is empty");
  std::vector<int> all(data.hierarchies.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = static_cast<int>(i);
  auto [loss, acc] = kfh::evaluate(data.hierarchies, all, ck.params);
  json report{{"loss", loss}, {"accuracy", acc}, {"count", all.size()}};
  const std::string text = report.dump(2) + "\n";
  if (out_path.empty()) {
    std::cout << text;
  } else {
    kfh::io::write_file_atomic(out_path, text);
    ManifestWriter m{"eval"};
    m.set("data", data_path);
    m.set("checkpoint", checkpoint_path);
    m.set("out", out_path);
    m.write(out_path);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  // Saturated training pushes softmax tails into denormal range; flushing
  // them keeps wall-clock timings meaningful.
  _MM_SET_FLUSH_ZERO_MODE(_MM_FLUSH_ZERO_ON);
  _MM_SET_DENORMALS_ZERO_MODE(_MM_DENORMALS_ZERO_ON);

  CLI::App app{"Kirchhoff-Forest multi-resolution graph toolkit"};
  app.require_subcommand(1);

  // gen-data
  std::string task = "community-count", out_path, input;
  int n_graphs = 400, min_nodes = 30, max_nodes = 120;
  std::uint64_t seed = 42;
  CLI::App* gen = app.add_subcommand("gen-data", "Generate a synthetic labeled dataset (JSON lines)");
  gen->add_option("--task", task, "cycle-vs-tree | community-count")->capture_default_str();
  gen->add_option("--n-graphs", n_graphs)->capture_default_str();
  gen->add_option("--min-nodes", min_nodes)->capture_default_str();
  gen->add_option("--max-nodes", max_nodes)->capture_default_str();
  gen->add_option("--seed", seed)->capture_default_str();
  gen->add_option("--out", out_path)->required();

  // sample-forest
  std::string q_str = "1.0";
  CLI::App* sf = app.add_subcommand("sample-forest", "Sample a rooted spanning forest at resolution q");
  sf->add_option("--input", input, "graph JSON or edge-list .txt")->required();
  sf->add_option("--q", q_str, "positive real or 'inf'")->capture_default_str();
  sf->add_option("--seed", seed)->capture_default_str();
  sf->add_option("--out", out_path)->required();

  // hierarchy
  std::string q_csv = "inf,2.0", agg = "mean";
  CLI::App* hier = app.add_subcommand("hierarchy", "Build multi-resolution hierarchies");
  hier->add_option("--input", input, "graph JSON or dataset .jsonl")->required();
  hier->add_option("--q", q_csv, "strictly decreasing q list, e.g. inf,2.0")->capture_default_str();
  hier->add_option("--agg", agg, "mean | sum")->capture_default_str();
  hier->add_option("--seed", seed)->capture_default_str();
  hier->add_option("--out", out_path)->required();

  // select-q
  double phi = 1.0, grid_min = 1e-2, grid_max = 1e3;
  int grid_points = 61;
  std::string summary_path;
  CLI::App* sq = app.add_subcommand("select-q", "Evaluate J(q) over a grid and pick the minimizer");
  sq->add_option("--input", input, "graph JSON or dataset .jsonl")->required();
  sq->add_option("--phi", phi, "complexity trade-off weight")->capture_default_str();
  sq->add_option("--grid-min", grid_min)->capture_default_str();
  sq->add_option("--grid-max", grid_max)->capture_default_str();
  sq->add_option("--grid-points", grid_points)->capture_default_str();
  sq->add_option("--out", out_path, "curve CSV path")->required();
  sq->add_option("--summary", summary_path, "summary JSON path (default <out>.summary.json)");

  // estimate
  int est_hidden = 64, est_layers = 4, est_linear = 2, est_levels = 2;
  CLI::App* est = app.add_subcommand("estimate", "Expected coarse sizes, reduction ratio, cost model");
  est->add_option("--input", input)->required();
  est->add_option("--q", q_str)->required();
  est->add_option("--hidden", est_hidden)->capture_default_str();
  est->add_option("--layers", est_layers, "message passing layers per level")->capture_default_str();
  est->add_option("--linear-per-layer", est_linear)->capture_default_str();
  est->add_option("--levels", est_levels, "resolution levels N_q")->capture_default_str();
  est->add_option("--out", out_path, "report path (default stdout)");

  // train
  TrainCliOptions topt;
  CLI::App* tr = app.add_subcommand("train", "Train the sequential multi-resolution classifier");
  tr->add_option("--data", topt.data, "graphs .jsonl or prebuilt hierarchies .jsonl")->required();
  tr->add_option("--q", topt.q_csv, "q sequence for inline hierarchy building")->capture_default_str();
  tr->add_option("--agg", topt.agg)->capture_default_str();
  tr->add_option("--hierarchy-seed", topt.hierarchy_seed)->capture_default_str();
  tr->add_option("--layers", topt.layers_csv, "message layers per q value, e.g. 4,2")
      ->capture_default_str();
  tr->add_option("--mlp-layers", topt.mlp_layers, "readout depth")->capture_default_str();
  tr->add_option("--linear-per-layer", topt.linear_per_layer)->capture_default_str();
  tr->add_option("--hidden", topt.hidden)->capture_default_str();
  tr->add_option("--batch", topt.cfg.batch_size)->capture_default_str();
  tr->add_option("--lr", topt.cfg.learning_rate)->capture_default_str();
  tr->add_option("--wd", topt.cfg.weight_decay)->capture_default_str();
  tr->add_option("--seed", topt.cfg.seed)->capture_default_str();
  tr->add_option("--epochs", topt.cfg.max_epochs)->capture_default_str();
  tr->add_option("--patience", topt.cfg.early_stop_patience)->capture_default_str();
  tr->add_option("--min-delta", topt.cfg.early_stop_min_delta)->capture_default_str();
  tr->add_option("--optimizer", topt.optimizer, "adamw | sgd-momentum")->capture_default_str();
  tr->add_option("--val-frac", topt.val_frac)->capture_default_str();
  tr->add_option("--test-frac", topt.test_frac)->capture_default_str();
  tr->add_option("--out", topt.out_dir, "run directory")->required();

  // eval
  std::string checkpoint_path;
  CLI::App* ev = app.add_subcommand("eval", "Evaluate a checkpoint on a dataset");
  ev->add_option("--data", input)->required();
  ev->add_option("--checkpoint", checkpoint_path)->required();
  ev->add_option("--out", out_path, "report path (default stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  try {
    if (gen->parsed()) return run_gen_data(task, n_graphs, min_nodes, max_nodes, seed, out_path);
    if (sf->parsed()) return run_sample_forest(input, q_str, seed, out_path);
    if (hier->parsed()) return run_hierarchy(input, q_csv, agg, seed, out_path);
    if (sq->parsed())
      return run_select_q(input, phi, grid_min, grid_max, grid_points, out_path, summary_path);
    if (est->parsed())
      return run_estimate(input, q_str, est_hidden, est_layers, est_linear, est_levels, out_path);
    if (tr->parsed()) return run_train(topt);
    if (ev->parsed()) return run_eval(input, checkpoint_path, out_path);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}
