#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <memory>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <nlohmann/json.hpp>

#include "cadd/dataset.hpp"
#include "cadd/descriptor_model.hpp"

namespace cadd {

struct MatchResult {
  Pixel pixel;
  double distance = 0.0;
};

/// Exhaustive nearest descriptor (L2), optionally restricted to a mask. Ties go to the
/// lowest row-major index. Throws std::invalid_argument when nothing is eligible.
MatchResult best_match(const Eigen::VectorXd& query, const DescriptorImage& target, const MaskImage* mask = nullptr);

/// L2 distance from `query` to every target pixel.
Image<float> distance_heatmap(const Eigen::VectorXd& query, const DescriptorImage& target);

using DescriptorFn = std::function<DescriptorImage(const RgbImage&)>;

DescriptorFn model_descriptor_fn(std::shared_ptr<const DescriptorModel> model);

/// Hand-crafted baseline: oriented-gradient histograms pooled at the pixel and on a ring
/// around it, L2-normalized per pixel. Carries no semantic information.
DescriptorFn gradient_histogram_descriptor_fn(int ring_radius = 4, int bins = 8);

/// Empirical CDF of normalized transfer errors.
struct CdfResult {
  std::vector<double> errors;  // sorted ascending
  std::size_t excluded = 0;    // landmarks missing in the target frame

  double fraction_within(double t) const;
  /// Area under the CDF over [0, cutoff], divided by cutoff.
  double auc(double cutoff = 0.2) const;
  nlohmann::json to_json(double cutoff = 0.2) const;
};

struct KeypointPair {
  std::string query_sequence;
  const Frame* query = nullptr;
  std::string target_sequence;
  const Frame* target = nullptr;
};

/// For each landmark labeled in both frames: best match of the query descriptor in the
/// target, error = pixel distance to the labeled target pixel / target image diagonal.
CdfResult keypoint_transfer_errors(const DescriptorFn& descriptors, const KeypointAnnotations& annotations,
                                   const std::vector<KeypointPair>& pairs);

/// Pairs of distinct frames of the same sequence.
std::vector<KeypointPair> make_keypoint_pairs(const Dataset& dataset, int pairs_per_sequence, std::uint64_t seed);

struct CompositeCase {
  CompositeFrame composite;
  std::vector<std::string> source_labels;  // label of each placement source
  const Frame* query = nullptr;
  std::string query_sequence;
  std::string query_label;
  std::vector<Pixel> query_pixels;
};

struct CompositeOptions {
  int cases = 40;
  int queries_per_case = 16;
  /// Same-label object in the composite is the query's own instance (another view)
  /// rather than a different instance of the category.
  bool same_instance = false;
  std::uint64_t seed = 0;
};

/// Two-object scenes on a random background, one object of the query's category and one
/// of another category, side by side on a canvas twice the frame width.
std::vector<CompositeCase> make_composite_cases(const Dataset& dataset, const CompositeOptions& options);

struct OnObjectResult {
  std::size_t correct = 0;
  std::size_t wrong_object = 0;
  std::size_t background = 0;
  double rate() const {
    const std::size_t n = correct + wrong_object + background;
    return n ? static_cast<double>(correct) / static_cast<double>(n) : 0.0;
  }
  nlohmann::json to_json() const;
};

OnObjectResult on_object_match_rate(const DescriptorFn& descriptors, const std::vector<CompositeCase>& cases);

/// Best accuracy over one-to-one mappings of predicted clusters onto true classes.
double clustering_accuracy(const std::vector<int>& predicted, const std::vector<int>& truth);

/// CSV rows: sequence_id, frame_id, u, v, category, d0..d{D-1}.
void export_descriptor_samples(const DescriptorFn& descriptors, const Dataset& dataset, int pixels_per_frame,
                               int frames_per_sequence, std::uint64_t seed, std::ostream& out);

struct ModelMetrics {
  std::string name;
  CdfResult transfer;
  OnObjectResult on_object;
  nlohmann::json to_json() const;
};

ModelMetrics evaluate_descriptors(const std::string& name, const DescriptorFn& descriptors, const Dataset& dataset,
                                  const std::vector<KeypointPair>& pairs, const std::vector<CompositeCase>& cases);

}  // namespace cadd
