#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "cadd/config.hpp"
#include "cadd/dataset.hpp"
#include "cadd/descriptor_model.hpp"
#include "cadd/evaluation.hpp"
#include "cadd/similarity_graph.hpp"

namespace cadd {

/// Request failure carrying the HTTP status to report.
class ServiceError : public std::runtime_error {
 public:
  ServiceError(int status, const std::string& message) : std::runtime_error(message), status_(status) {}
  int status() const { return status_; }

 private:
  int status_;
};

struct NamedModel {
  std::string name;
  Checkpoint checkpoint;
};

struct FrameRef {
  std::string sequence;
  int frame = 0;
};

struct MatchReply {
  Pixel pixel;
  double distance = 0.0;
  std::string heatmap_id;
  double heatmap_min = 0.0;
  double heatmap_max = 0.0;
};

/// Heatmap as 8-bit gray: the minimum distance maps to 0, every other value to
/// 1 + floor(254 * (d - min) / (max - min)).
Image<std::uint8_t> encode_heatmap(const Image<float>& distances);

class InferenceService {
 public:
  /// Models are loaded before construction and never change afterwards.
  InferenceService(Dataset dataset, std::vector<NamedModel> models, std::optional<SimilarityGraph> graph,
                   ServiceConfig config);
  ~InferenceService();
  InferenceService(const InferenceService&) = delete;
  InferenceService& operator=(const InferenceService&) = delete;

  const Dataset& dataset() const;
  std::vector<std::string> model_names() const;

  /// Cached dense descriptors of a frame. Throws ServiceError(404) for unknown ids.
  std::shared_ptr<const DescriptorImage> descriptors(const std::string& model, const FrameRef& frame) const;
  Eigen::VectorXd query_descriptor(const std::string& model, const FrameRef& frame, const Pixel& p) const;
  MatchReply match(const std::string& model, const FrameRef& source, const Pixel& p, const FrameRef& target) const;
  Image<float> heatmap(const std::string& id) const;

  std::size_t cache_size() const;
  std::size_t cache_hits() const;

  /// Binds and serves on a background thread; returns the bound port (port 0 picks a free one).
  /// Throws std::runtime_error when the port cannot be bound.
  int start(const std::string& host, int port);
  /// Blocks until stop() is called.
  void wait();
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

/// Frames reachable from the service: dataset sequences plus `composites` seeded
/// two-object scenes in a "composites" sequence.
Dataset service_dataset(Dataset dataset, int composites, std::uint64_t seed);

}  // namespace cadd
