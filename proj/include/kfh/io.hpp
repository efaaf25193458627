#pragma once

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <json.hpp>
#include <sstream>
#include <string>
#include <vector>

#include "kfh/graph.hpp"
#include "kfh/hierarchy.hpp"
#include "kfh/shake.hpp"
#include "kfh/spectral.hpp"
#include "kfh/train.hpp"

namespace kfh::io {

using json = nlohmann::json;

inline json q_to_json(double q) {
  if (std::isinf(q)) return json("inf");
  return json(q);
}

inline double q_from_json(const json& j) {
  if (j.is_string()) {
    detail::require(j.get<std::string>() == "inf", "q must be a positive number or \"inf\"");
    return std::numeric_limits<double>::infinity();
  }
  detail::require(j.is_number(), "q must be a positive number or \"inf\"");
  return j.get<double>();
}

inline double parse_q(const std::string& s) {
  if (s == "inf" || s == "INF" || s == "Inf") return std::numeric_limits<double>::infinity();
  std::size_t used = 0;
  const double q = std::stod(s, &used);
  detail::require(used == s.size(), "could not parse q value: " + s);
  return q;
}

inline std::vector<double> parse_q_list(const std::string& csv) {
  std::vector<double> out;
  std::stringstream ss(csv);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(parse_q(item));
  detail::require(!out.empty(), "empty q list");
  return out;
}

inline json matrix_to_json(const Matrix& m) {
  json rows = json::array();
  for (int r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (int c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

inline Matrix matrix_from_json(const json& j, int expected_rows) {
  detail::require(j.is_array(), "matrix must be an array of rows");
  const int rows = static_cast<int>(j.size());
  detail::require(expected_rows < 0 || rows == expected_rows, "matrix row count mismatch");
  int cols = rows > 0 ? static_cast<int>(j[0].size()) : 0;
  Matrix m(rows, cols);
  for (int r = 0; r < rows; ++r) {
    detail::require(static_cast<int>(j[r].size()) == cols, "ragged matrix rows");
    for (int c = 0; c < cols; ++c) m(r, c) = j[r][c].get<double>();
  }
  return m;
}

/// Graph JSON: {"n", "edges", "node_features", "edge_features", "label"}.
/// edge_features / label are null when absent; edge-feature row k belongs
/// to edges[k].
inline json graph_to_json(const Graph& g) {
  json j;
  j["n"] = g.node_count();
  json edges = json::array();
  for (const Edge& e : g.edges()) edges.push_back(json::array({e.u, e.v}));
  j["edges"] = std::move(edges);
  j["node_features"] = matrix_to_json(g.node_features());
  j["edge_features"] = g.edge_feature_dim() > 0 ? matrix_to_json(g.edge_features()) : json(nullptr);
  j["label"] = g.label() ? json(*g.label()) : json(nullptr);
  return j;
}

inline Graph graph_from_json(const json& j) {
  detail::require(j.is_object() && j.contains("n") && j.contains("edges") && j.contains("node_features"),
                  "graph JSON needs n, edges and node_features");
  const int n = j.at("n").get<int>();
  std::vector<std::pair<int, int>> edges;
  for (const json& e : j.at("edges")) {
    detail::require(e.is_array() && e.size() == 2, "each edge must be a pair");
    edges.emplace_back(e[0].get<int>(), e[1].get<int>());
  }
  Matrix x = matrix_from_json(j.at("node_features"), n);
  std::optional<Matrix> xe;
  if (j.contains("edge_features") && !j.at("edge_features").is_null())
    xe = matrix_from_json(j.at("edge_features"), static_cast<int>(edges.size()));
  std::optional<int> label;
  if (j.contains("label") && !j.at("label").is_null()) label = j.at("label").get<int>();
  return Graph::build(std::move(edges), std::move(x), std::move(xe), label);
}

/// Whitespace-separated edge-list text: pairs of node indices. Nodes get
/// a single constant feature 1.0.
inline Graph graph_from_edge_list_text(const std::string& text) {
  std::istringstream in(text);
  std::vector<std::pair<int, int>> edges;
  long long a = 0, b = 0;
  int max_node = -1;
  while (in >> a) {
    detail::require(static_cast<bool>(in >> b), "edge list has an odd number of node indices");
    detail::require(a >= 0 && b >= 0, "edge list indices must be nonnegative");
    edges.emplace_back(static_cast<int>(a), static_cast<int>(b));
    max_node = std::max(max_node, static_cast<int>(std::max(a, b)));
  }
  detail::require(max_node >= 0, "edge list is empty");
  return Graph::build(std::move(edges), Matrix::Ones(max_node + 1, 1));
}

/// Forest JSON: {"q": real|"inf", "parents": [int|null, ...]} with null
/// marking roots.
inline json forest_to_json(const RootedForest& f) {
  json parents = json::array();
  for (int v = 0; v < f.node_count(); ++v)
    parents.push_back(f.is_root(v) ? json(nullptr) : json(f.parent[v]));
  return json{{"q", q_to_json(f.q)}, {"parents", std::move(parents)}};
}

inline RootedForest forest_from_json(const json& j) {
  RootedForest f;
  f.q = q_from_json(j.at("q"));
  for (const json& p : j.at("parents"))
    f.parent.push_back(p.is_null() ? RootedForest::kRoot : p.get<int>());
  for (int v = 0; v < f.node_count(); ++v)
    if (f.is_root(v)) f.roots.push_back(v);
  detail::require(!f.parent.empty(), "forest has no nodes");
  return f;
}

/// Sparse triplet encoding {"rows", "cols", "triplets": [[r,c,val],...]}.
inline json partition_matrix_to_json(const PartitionMatrix& p) {
  json trips = json::array();
  const auto& m = p.matrix();
  for (int r = 0; r < m.outerSize(); ++r)
    for (PartitionMatrix::Sparse::InnerIterator it(m, r); it; ++it)
      trips.push_back(json::array({static_cast<int>(it.row()), static_cast<int>(it.col()), it.value()}));
  return json{{"rows", p.rows()}, {"cols", p.cols()}, {"triplets", std::move(trips)}};
}

inline PartitionMatrix partition_matrix_from_json(const json& j) {
  std::vector<Eigen::Triplet<double>> trips;
  for (const json& t : j.at("triplets")) {
    detail::require(t.is_array() && t.size() == 3, "triplet must be [row, col, value]");
    trips.emplace_back(t[0].get<int>(), t[1].get<int>(), t[2].get<double>());
  }
  return PartitionMatrix::from_triplets(j.at("rows").get<int>(), j.at("cols").get<int>(), trips);
}

/// Hierarchy bundle: q sequence, aggregation mode, per-level graphs and
/// the base/step partition matrices.
inline json hierarchy_to_json(const Hierarchy& h) {
  json j;
  j["format"] = "kfh-hierarchy-v1";
  json qs = json::array();
  for (double q : h.q_sequence) qs.push_back(q_to_json(q));
  j["q_sequence"] = std::move(qs);
  j["agg_mode"] = to_string(h.agg_mode);
  json levels = json::array();
  for (const Graph& g : h.levels) levels.push_back(graph_to_json(g));
  j["levels"] = std::move(levels);
  json bases = json::array();
  for (const PartitionMatrix& p : h.base_partitions) bases.push_back(partition_matrix_to_json(p));
  j["base_partitions"] = std::move(bases);
  json steps = json::array();
  for (const PartitionMatrix& p : h.step_partitions) steps.push_back(partition_matrix_to_json(p));
  j["step_partitions"] = std::move(steps);
  return j;
}

inline Hierarchy hierarchy_from_json(const json& j) {
  Hierarchy h;
  for (const json& q : j.at("q_sequence")) h.q_sequence.push_back(q_from_json(q));
  h.agg_mode = agg_mode_from_string(j.at("agg_mode").get<std::string>());
  for (const json& g : j.at("levels")) h.levels.push_back(graph_from_json(g));
  for (const json& p : j.at("base_partitions")) h.base_partitions.push_back(partition_matrix_from_json(p));
  for (const json& p : j.at("step_partitions")) h.step_partitions.push_back(partition_matrix_from_json(p));
  detail::require(h.levels.size() == h.q_sequence.size(), "level count does not match q sequence");
  detail::require(h.step_partitions.size() + 1 == h.levels.size() || h.levels.empty(),
                  "step partition count must be levels - 1");
  return h;
}

/// Linear maps in checkpoints: flat row-major weight array plus shape.
inline json linear_to_json(const LinearMap& l) {
  json w = json::array();
  for (int r = 0; r < l.w.rows(); ++r)
    for (int c = 0; c < l.w.cols(); ++c) w.push_back(l.w(r, c));
  json b = json::array();
  for (int i = 0; i < l.b.size(); ++i) b.push_back(l.b[i]);
  return json{{"in", l.w.rows()}, {"out", l.w.cols()}, {"w", std::move(w)}, {"b", std::move(b)}};
}

inline LinearMap linear_from_json(const json& j) {
  LinearMap l;
  const int in = j.at("in").get<int>(), out = j.at("out").get<int>();
  detail::require(static_cast<int>(j.at("w").size()) == in * out, "weight array size mismatch");
  detail::require(static_cast<int>(j.at("b").size()) == out, "bias array size mismatch");
  l.w.resize(in, out);
  for (int r = 0; r < in; ++r)
    for (int c = 0; c < out; ++c) l.w(r, c) = j.at("w")[r * out + c].get<double>();
  l.b.resize(out);
  for (int i = 0; i < out; ++i) l.b[i] = j.at("b")[i].get<double>();
  return l;
}

struct Checkpoint {
  ModelParams params;
  std::vector<double> q_sequence;
  AggMode agg_mode = AggMode::Mean;
  std::uint64_t hierarchy_seed = 0;
};

inline json checkpoint_to_json(const Checkpoint& ck) {
  const ModelConfig& cfg = ck.params.config;
  json j;
  j["format"] = "kfh-checkpoint-v1";
  j["config"] = json{{"f_v", cfg.f_v},
                     {"f_e", cfg.f_e},
                     {"o", cfg.o},
                     {"o_y", cfg.o_y},
                     {"layers_per_level", cfg.layers_per_level},
                     {"linear_per_layer", cfg.linear_per_layer},
                     {"mlp_layers", cfg.mlp_layers}};
  json qs = json::array();
  for (double q : ck.q_sequence) qs.push_back(q_to_json(q));
  j["q_sequence"] = std::move(qs);
  j["agg_mode"] = to_string(ck.agg_mode);
  j["hierarchy_seed"] = ck.hierarchy_seed;
  json params;
  params["node_encoder"] = linear_to_json(ck.params.node_encoder);
  params["edge_encoder"] = ck.params.edge_encoder ? linear_to_json(*ck.params.edge_encoder) : json(nullptr);
  json levels = json::array();
  for (const auto& level : ck.params.levels) {
    json layers = json::array();
    for (const MessageLayer& layer : level) {
      json mlp = json::array();
      for (const LinearMap& lin : layer.mlp) mlp.push_back(linear_to_json(lin));
      layers.push_back(json{{"mlp", std::move(mlp)}});
    }
    levels.push_back(std::move(layers));
  }
  params["levels"] = std::move(levels);
  json readout = json::array();
  for (const LinearMap& lin : ck.params.readout) readout.push_back(linear_to_json(lin));
  params["readout"] = std::move(readout);
  j["params"] = std::move(params);
  return j;
}

inline Checkpoint checkpoint_from_json(const json& j) {
  detail::require(j.at("format").get<std::string>() == "kfh-checkpoint-v1", "unknown checkpoint format");
  Checkpoint ck;
  const json& c = j.at("config");
  ModelConfig cfg;
  cfg.f_v = c.at("f_v").get<int>();
  cfg.f_e = c.at("f_e").get<int>();
  cfg.o = c.at("o").get<int>();
  cfg.o_y = c.at("o_y").get<int>();
  cfg.layers_per_level = c.at("layers_per_level").get<std::vector<int>>();
  cfg.linear_per_layer = c.at("linear_per_layer").get<int>();
  cfg.mlp_layers = c.at("mlp_layers").get<int>();
  ck.params.config = cfg;
  const json& p = j.at("params");
  ck.params.node_encoder = linear_from_json(p.at("node_encoder"));
  if (!p.at("edge_encoder").is_null()) ck.params.edge_encoder = linear_from_json(p.at("edge_encoder"));
  for (const json& level : p.at("levels")) {
    std::vector<MessageLayer>& lv = ck.params.levels.emplace_back();
    for (const json& layer : level) {
      MessageLayer& ml = lv.emplace_back();
      for (const json& lin : layer.at("mlp")) ml.mlp.push_back(linear_from_json(lin));
    }
  }
  for (const json& lin : p.at("readout")) ck.params.readout.push_back(linear_from_json(lin));
  for (const json& q : j.at("q_sequence")) ck.q_sequence.push_back(q_from_json(q));
  ck.agg_mode = agg_mode_from_string(j.at("agg_mode").get<std::string>());
  ck.hierarchy_seed = j.at("hierarchy_seed").get<std::uint64_t>();
  return ck;
}

inline std::string format_double(double x) {
  std::ostringstream os;
  os << std::setprecision(17) << x;
  return os.str();
}

/// Columns behind the q-choice curves: one row per grid point.
inline std::string qcurve_to_csv(const QCurve& c) {
  std::ostringstream os;
  os << "q,recon_node,dir_node,recon_edge,dir_edge,df_node,df_edge,J\n";
  for (const QCurvePoint& pt : c.points) {
    os << format_double(pt.q) << ',' << format_double(pt.recon_node) << ',' << format_double(pt.dir_node)
       << ',' << format_double(pt.recon_edge) << ',' << format_double(pt.dir_edge) << ','
       << format_double(pt.df_node) << ',' << format_double(pt.df_edge) << ',' << format_double(pt.j)
       << '\n';
  }
  return os.str();
}

inline std::string metrics_to_csv(const std::vector<EpochMetrics>& history) {
  std::ostringstream os;
  os << "epoch,train_loss,train_acc,val_loss,val_acc,wall_seconds\n";
  for (const EpochMetrics& em : history) {
    os << em.epoch << ',' << format_double(em.train_loss) << ',' << format_double(em.train_acc) << ','
       << format_double(em.val_loss) << ',' << format_double(em.val_acc) << ','
       << format_double(em.wall_seconds) << '\n';
  }
  return os.str();
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// Write-then-rename so readers never observe a half-written file.
inline void write_file_atomic(const std::filesystem::path& path, const std::string& content) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    out << content;
  }
  std::filesystem::rename(tmp, path);
}

/// Parse a file that is either one JSON document or JSON-lines.
inline std::vector<json> parse_json_documents(const std::string& text) {
  try {
    json whole = json::parse(text);
    return {std::move(whole)};
  } catch (const json::parse_error&) {
    std::vector<json> docs;
    std::istringstream in(text);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
      try {
        docs.push_back(json::parse(line));
      } catch (const json::parse_error& e) {
        throw std::runtime_error("line " + std::to_string(lineno) + ": " + e.what());
      }
    }
    detail::require(!docs.empty(), "no JSON documents found");
    return docs;
  }
}

}  // namespace kfh::io
