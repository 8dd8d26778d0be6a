#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include <Eigen/Core>
#include <nlohmann/json.hpp>

#include "cadd/nn.hpp"
#include "cadd/optimizer.hpp"
#include "cadd/similarity_graph.hpp"

namespace cadd {

/// Two-layer perceptron: Linear -> ReLU -> Linear (output left linear).
class ProjectionNetwork {
 public:
  ProjectionNetwork() = default;
  ProjectionNetwork(int input_dim, int hidden_dim, int output_dim, std::uint64_t seed);

  int input_dim() const { return input_dim_; }
  int hidden_dim() const { return hidden_dim_; }
  int output_dim() const { return output_dim_; }

  struct Cache {
    Eigen::VectorXd input;
    Eigen::VectorXd hidden_pre;
  };

  Eigen::VectorXd forward(const Eigen::VectorXd& x, Cache* cache = nullptr) const;
  /// Accumulates parameter gradients for one sample.
  void backward(const Eigen::VectorXd& grad_out, const Cache& cache);

  std::vector<nn::Parameter*> parameters() { return {&w1_, &b1_, &w2_, &b2_}; }
  nlohmann::json to_json() const;
  static ProjectionNetwork from_json(const nlohmann::json& j);

 private:
  int input_dim_ = 0;
  int hidden_dim_ = 0;
  int output_dim_ = 0;
  nn::Parameter w1_, b1_, w2_, b2_;  // row-major weights [out][in]
};

struct ProjectionTrainConfig {
  int steps = 500;
  int hidden_dim = 64;
  int output_dim = 16;
  double margin = 0.5;
  OptimizerConfig optimizer;
  std::uint64_t seed = 0;
};

struct ProjectionTrainResult {
  ProjectionNetwork network;
  std::vector<double> losses;
};

/// Triplet training: anchor sequence uniform, positive from the transition row,
/// negative by 1 - p_t with its confidence; one random frame per sequence.
/// Throws std::runtime_error on a non-finite loss.
ProjectionTrainResult train_projection(const SimilarityGraph& graph, const std::vector<Eigen::MatrixXd>& features,
                                       const ProjectionTrainConfig& config);

struct ClassModel {
  Eigen::MatrixXd centroids;  // K x output_dim

  int k() const { return static_cast<int>(centroids.rows()); }
  nlohmann::json to_json() const;
  static ClassModel from_json(const nlohmann::json& j);
};

/// k-means over projected training features. Throws for K < 2 or K above the sample count.
ClassModel fit_classes(const ProjectionNetwork& net, const std::vector<Eigen::MatrixXd>& features, int k,
                       std::uint64_t seed);

/// Nearest class centroid of the projected feature; ties go to the lowest index.
int assign_class(const ProjectionNetwork& net, const ClassModel& classes, const Eigen::VectorXd& feature);

/// Class label of (sequence index, frame index).
using FrameClassifier = std::function<int(std::size_t sequence, std::size_t frame)>;

/// Precomputed labels for every frame of `features`.
FrameClassifier table_classifier(std::vector<std::vector<int>> labels);

std::vector<std::vector<int>> classify_frames(const ProjectionNetwork& net, const ClassModel& classes,
                                              const std::vector<Eigen::MatrixXd>& features);

}  // namespace cadd
