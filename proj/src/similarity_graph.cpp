#include "cadd/similarity_graph.hpp"

#include <algorithm>
#include <cstdio>
#include <limits>
#include <numeric>
#include <random>
#include <stdexcept>

#include "cadd/clustering.hpp"

namespace cadd {

namespace {

using nlohmann::json;

json matrix_to_json(const Eigen::MatrixXd& m) {
  json rows = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

Eigen::MatrixXd matrix_from_json(const json& j, const char* what) {
  if (!j.is_array()) throw std::invalid_argument(std::string("graph: '") + what + "' must be an array of rows");
  const auto rows = static_cast<Eigen::Index>(j.size());
  const auto cols = rows ? static_cast<Eigen::Index>(j[0].size()) : 0;
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    if (static_cast<Eigen::Index>(j[r].size()) != cols)
      throw std::invalid_argument(std::string("graph: ragged matrix '") + what + "'");
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = j[r][c].get<double>();
  }
  return m;
}

int sample_index(const Eigen::VectorXd& weights, Rng& rng) {
  std::discrete_distribution<int> dist(weights.data(), weights.data() + weights.size());
  return dist(rng);
}

struct Fnv1a {
  std::uint64_t h = 1469598103934665603ull;
  void add(const void* data, std::size_t n) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= p[i];
      h *= 1099511628211ull;
    }
  }
};

}  // namespace

void GraphConfig::validate() const {
  if (local_clusters < 1) throw std::invalid_argument("graph: local_clusters must be >= 1");
  if (global_clusters < 1) throw std::invalid_argument("graph: global_clusters must be >= 1");
  if (!(lambda >= 0.0)) throw std::invalid_argument("graph: lambda must be >= 0");
  if (feature_size < 2) throw std::invalid_argument("graph: feature_size must be >= 2");
}

json GraphConfig::to_json() const {
  return {{"local_clusters", local_clusters}, {"global_clusters", global_clusters}, {"lambda", lambda},
          {"feature_kind", to_string(feature_kind)}, {"feature_size", feature_size}, {"seed", seed}};
}

GraphConfig GraphConfig::from_json(const json& j) {
  GraphConfig c;
  for (const auto& [key, value] : j.items()) {
    if (key == "local_clusters") c.local_clusters = value.get<int>();
    else if (key == "global_clusters") c.global_clusters = value.get<int>();
    else if (key == "lambda") c.lambda = value.get<double>();
    else if (key == "feature_kind") c.feature_kind = feature_kind_from_string(value.get<std::string>());
    else if (key == "feature_size") c.feature_size = value.get<int>();
    else if (key == "seed") c.seed = value.get<std::uint64_t>();
    else throw std::invalid_argument("graph config: unknown key '" + key + "'");
  }
  c.validate();
  return c;
}

SequenceCentroids local_centroids(const Eigen::MatrixXd& frame_features, int n_local, std::uint64_t seed) {
  if (frame_features.rows() == 0) throw std::invalid_argument("local_centroids: sequence has no frames");
  SequenceCentroids out;
  const int rows = static_cast<int>(frame_features.rows());
  if (rows >= n_local) {
    out.centroids = kmeans(frame_features, n_local, seed).centroids;
    return out;
  }
  // Too few frames: cluster what exists, then repeat centroids cyclically.
  out.padded = true;
  const Eigen::MatrixXd base = kmeans(frame_features, rows, seed).centroids;
  out.centroids.resize(n_local, frame_features.cols());
  for (int i = 0; i < n_local; ++i) out.centroids.row(i) = base.row(i % rows);
  return out;
}

double dissimilarity_weight(const Eigen::MatrixXd& ci, const Eigen::MatrixXd& cj) {
  if (ci.cols() != cj.cols()) throw std::invalid_argument("dissimilarity_weight: feature dimensions differ");
  if (ci.rows() == 0 || cj.rows() == 0) throw std::invalid_argument("dissimilarity_weight: empty centroid set");
  Eigen::MatrixXd cost(ci.rows(), cj.rows());
  for (Eigen::Index a = 0; a < ci.rows(); ++a)
    for (Eigen::Index b = 0; b < cj.rows(); ++b) cost(a, b) = (ci.row(a) - cj.row(b)).norm();
  const Assignment asg = min_cost_assignment(cost);
  const double n_p = static_cast<double>(std::min(ci.rows(), cj.rows()));
  return asg.total_cost / (n_p * static_cast<double>(ci.cols()));
}

double similarity_weight(const Eigen::VectorXd& hi, const Eigen::VectorXd& hj) {
  if (hi.size() != hj.size()) throw std::invalid_argument("similarity_weight: histogram lengths differ");
  for (const auto* h : {&hi, &hj})
    if ((h->array() < 0.0).any() || std::abs(h->sum() - 1.0) > 1e-9)
      throw std::invalid_argument("similarity_weight: histograms must be non-negative and sum to 1");
  return hi.cwiseMin(hj).sum();
}

int SimilarityGraph::index_of(const std::string& id) const {
  const auto it = std::find(node_ids.begin(), node_ids.end(), id);
  return it == node_ids.end() ? -1 : static_cast<int>(it - node_ids.begin());
}

json SimilarityGraph::to_json() const {
  return {{"format", "cadd-similarity-graph"},
          {"version", 1},
          {"node_ids", node_ids},
          {"config", config.to_json()},
          {"effective_global_clusters", effective_global_clusters},
          {"global_clusters_clamped", global_clusters_clamped},
          {"confidence_degenerate", confidence_degenerate},
          {"padded_nodes", padded_nodes},
          {"dataset_hash", dataset_hash},
          {"w_plus", matrix_to_json(w_plus)},
          {"w_minus", matrix_to_json(w_minus)},
          {"weights", matrix_to_json(weights)},
          {"confidence", matrix_to_json(confidence)},
          {"histograms", matrix_to_json(histograms)}};
}

SimilarityGraph SimilarityGraph::from_json(const json& j) {
  if (j.value("format", std::string()) != "cadd-similarity-graph")
    throw std::invalid_argument("graph: not a similarity graph file");
  SimilarityGraph g;
  g.node_ids = j.at("node_ids").get<std::vector<std::string>>();
  g.config = GraphConfig::from_json(j.at("config"));
  g.effective_global_clusters = j.at("effective_global_clusters").get<int>();
  g.global_clusters_clamped = j.at("global_clusters_clamped").get<bool>();
  g.confidence_degenerate = j.at("confidence_degenerate").get<bool>();
  g.padded_nodes = j.at("padded_nodes").get<std::vector<std::string>>();
  g.dataset_hash = j.at("dataset_hash").get<std::string>();
  g.w_plus = matrix_from_json(j.at("w_plus"), "w_plus");
  g.w_minus = matrix_from_json(j.at("w_minus"), "w_minus");
  g.weights = matrix_from_json(j.at("weights"), "weights");
  g.confidence = matrix_from_json(j.at("confidence"), "confidence");
  g.histograms = matrix_from_json(j.at("histograms"), "histograms");
  const auto n = static_cast<Eigen::Index>(g.node_ids.size());
  for (const auto* m : {&g.w_plus, &g.w_minus, &g.weights, &g.confidence})
    if (m->rows() != n || m->cols() != n) throw std::invalid_argument("graph: matrix size does not match node count");
  return g;
}

SimilarityGraph build_graph_from_features(const std::vector<std::string>& ids,
                                          const std::vector<Eigen::MatrixXd>& features, const GraphConfig& config) {
  config.validate();
  if (ids.size() != features.size()) throw std::invalid_argument("build_graph: ids and features differ in length");
  if (ids.empty()) throw std::invalid_argument("build_graph: no sequences");
  const auto n = static_cast<Eigen::Index>(ids.size());
  const Eigen::Index dim = features[0].cols();

  SimilarityGraph g;
  g.node_ids = ids;
  g.config = config;

  std::vector<SequenceCentroids> local;
  local.reserve(ids.size());
  Eigen::Index total_frames = 0;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (features[i].cols() != dim) throw std::invalid_argument("build_graph: feature dimensions differ across sequences");
    local.push_back(local_centroids(features[i], config.local_clusters, config.seed));
    if (local.back().padded) g.padded_nodes.push_back(ids[i]);
    total_frames += features[i].rows();
  }

  // Global clusters over every frame of every sequence.
  Eigen::MatrixXd all(total_frames, dim);
  Eigen::Index row = 0;
  for (const auto& f : features) {
    all.middleRows(row, f.rows()) = f;
    row += f.rows();
  }
  g.effective_global_clusters = config.global_clusters;
  if (config.global_clusters > total_frames) {
    g.effective_global_clusters = static_cast<int>(total_frames);
    g.global_clusters_clamped = true;
  }
  const KMeansResult global = kmeans(all, g.effective_global_clusters, config.seed ^ 0x9e3779b97f4a7c15ull);
  g.histograms = Eigen::MatrixXd::Zero(n, g.effective_global_clusters);
  row = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const Eigen::Index frames = features[static_cast<std::size_t>(i)].rows();
    for (Eigen::Index f = 0; f < frames; ++f) g.histograms(i, global.assignments[static_cast<std::size_t>(row + f)]) += 1.0;
    g.histograms.row(i) /= static_cast<double>(frames);
    row += frames;
  }

  g.w_plus = Eigen::MatrixXd::Zero(n, n);
  g.w_minus = Eigen::MatrixXd::Zero(n, n);
  g.weights = Eigen::MatrixXd::Zero(n, n);
  g.confidence = Eigen::MatrixXd::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = i + 1; j < n; ++j) {
      const double wm = dissimilarity_weight(local[static_cast<std::size_t>(i)].centroids,
                                             local[static_cast<std::size_t>(j)].centroids);
      const double wp = similarity_weight(g.histograms.row(i).transpose(), g.histograms.row(j).transpose());
      g.w_minus(i, j) = g.w_minus(j, i) = wm;
      g.w_plus(i, j) = g.w_plus(j, i) = wp;
      g.weights(i, j) = g.weights(j, i) = edge_weight(wp, wm, config.lambda);
    }

  if (n > 1) {
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = 0; j < n; ++j)
        if (i != j) {
          lo = std::min(lo, g.w_minus(i, j));
          hi = std::max(hi, g.w_minus(i, j));
        }
    g.confidence_degenerate = !(hi > lo);
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = 0; j < n; ++j)
        if (i != j) g.confidence(i, j) = g.confidence_degenerate ? 1.0 : (g.w_minus(i, j) - lo) / (hi - lo);
  }
  return g;
}

SimilarityGraph build_graph(const Dataset& dataset, const GraphConfig& config, const FeatureExtractor& extractor) {
  std::vector<std::string> ids;
  for (const auto& s : dataset.sequences) ids.push_back(s.sequence_id);
  SimilarityGraph g = build_graph_from_features(ids, sequence_features(dataset, extractor), config);
  g.dataset_hash = dataset_hash(dataset);
  return g;
}

TransitionRow transition_distribution(const SimilarityGraph& graph, int node) {
  const auto n = static_cast<Eigen::Index>(graph.size());
  if (node < 0 || node >= n) throw std::out_of_range("transition_distribution: node out of range");
  TransitionRow row;
  row.probabilities = graph.weights.row(node).transpose();
  row.probabilities[node] = 0.0;
  const double total = row.probabilities.sum();
  if (total > 0.0) {
    row.probabilities /= total;
  } else {
    row.uniform_fallback = true;
    row.probabilities.setConstant(n > 1 ? 1.0 / static_cast<double>(n - 1) : 1.0);
    if (n > 1) row.probabilities[node] = 0.0;
  }
  return row;
}

int sample_positive(const SimilarityGraph& graph, int anchor, Rng& rng) {
  if (graph.size() == 1) return anchor;
  return sample_index(transition_distribution(graph, anchor).probabilities, rng);
}

Eigen::VectorXd negative_distribution(const SimilarityGraph& graph, int anchor) {
  const auto n = static_cast<Eigen::Index>(graph.size());
  if (n < 2) throw std::invalid_argument("negative sampling needs at least two nodes");
  const TransitionRow row = transition_distribution(graph, anchor);
  Eigen::VectorXd w = (1.0 - row.probabilities.array()).max(0.0).matrix();
  w[anchor] = 0.0;
  if (!(w.sum() > 0.0)) {
    w.setConstant(1.0);
    w[anchor] = 0.0;
  }
  return w / w.sum();
}

NegativeSample sample_negative(const SimilarityGraph& graph, int anchor, Rng& rng) {
  NegativeSample s;
  s.node = sample_index(negative_distribution(graph, anchor), rng);
  s.confidence = graph.confidence(anchor, s.node);
  return s;
}

std::string dataset_hash(const Dataset& dataset) {
  Fnv1a h;
  for (const auto& s : dataset.sequences) {
    h.add(s.sequence_id.data(), s.sequence_id.size());
    for (const auto& f : s.frames) {
      h.add(&f.frame_id, sizeof(f.frame_id));
      h.add(f.rgb.data(), f.rgb.size());
      h.add(f.depth.data(), f.depth.size() * sizeof(float));
      h.add(f.mask.data(), f.mask.size());
    }
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h.h));
  return buf;
}

}  // namespace cadd
