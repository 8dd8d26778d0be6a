#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <nlohmann/json.hpp>

#include "cadd/dataset.hpp"
#include "cadd/features.hpp"
#include "cadd/geometry.hpp"

namespace cadd {

struct GraphConfig {
  int local_clusters = 5;     // N_l
  int global_clusters = 300;  // N_g, clamped to the total frame count
  double lambda = 0.1;
  FeatureKind feature_kind = FeatureKind::raw_image;
  int feature_size = 16;
  std::uint64_t seed = 0;

  void validate() const;
  nlohmann::json to_json() const;
  static GraphConfig from_json(const nlohmann::json& j);
};

/// Local k-means centroids of one sequence's frame features.
struct SequenceCentroids {
  Eigen::MatrixXd centroids;  // N_l x d
  bool padded = false;        // fewer frames than N_l; frames were repeated
};

SequenceCentroids local_centroids(const Eigen::MatrixXd& frame_features, int n_local, std::uint64_t seed);

/// W-: optimal one-to-one centroid matching cost, divided by N_p * N_d.
double dissimilarity_weight(const Eigen::MatrixXd& centroids_i, const Eigen::MatrixXd& centroids_j);

/// W+: histogram intersection of two normalized global-cluster occupancy histograms.
double similarity_weight(const Eigen::VectorXd& hist_i, const Eigen::VectorXd& hist_j);

/// W = max(lambda * W+ - W-, 0).
inline double edge_weight(double w_plus, double w_minus, double lambda) {
  const double w = lambda * w_plus - w_minus;
  return w > 0.0 ? w : 0.0;
}

struct SimilarityGraph {
  std::vector<std::string> node_ids;
  Eigen::MatrixXd w_plus;
  Eigen::MatrixXd w_minus;
  Eigen::MatrixXd weights;
  Eigen::MatrixXd confidence;  // normalized W- in [0, 1]
  Eigen::MatrixXd histograms;  // nodes x N_g_effective
  GraphConfig config;
  int effective_global_clusters = 0;
  bool global_clusters_clamped = false;
  bool confidence_degenerate = false;  // all off-diagonal W- equal; c set to 1
  std::vector<std::string> padded_nodes;
  std::string dataset_hash;

  std::size_t size() const { return node_ids.size(); }
  int index_of(const std::string& id) const;  // -1 when absent
  nlohmann::json to_json() const;
  static SimilarityGraph from_json(const nlohmann::json& j);
};

/// Graph from per-sequence feature matrices (rows = frames).
SimilarityGraph build_graph_from_features(const std::vector<std::string>& ids,
                                          const std::vector<Eigen::MatrixXd>& features, const GraphConfig& config);

SimilarityGraph build_graph(const Dataset& dataset, const GraphConfig& config, const FeatureExtractor& extractor);

struct TransitionRow {
  Eigen::VectorXd probabilities;
  bool uniform_fallback = false;  // node had no positive edges
};

/// Row-normalized edge weights out of `node`.
TransitionRow transition_distribution(const SimilarityGraph& graph, int node);

/// Positive node sampled proportionally to the transition row.
int sample_positive(const SimilarityGraph& graph, int anchor, Rng& rng);

struct NegativeSample {
  int node = -1;
  double confidence = 0.0;
};

/// Negative node sampled proportionally to 1 - p_t over the other nodes, with its confidence.
NegativeSample sample_negative(const SimilarityGraph& graph, int anchor, Rng& rng);

/// Negative sampling weights 1 - p_t (zero on the anchor); uniform when they sum to zero.
Eigen::VectorXd negative_distribution(const SimilarityGraph& graph, int anchor);

/// FNV-1a digest over sequence ids and frame contents, hex encoded.
std::string dataset_hash(const Dataset& dataset);

}  // namespace cadd
