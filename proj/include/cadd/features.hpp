#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "cadd/dataset.hpp"
#include "cadd/descriptor_model.hpp"

namespace cadd {

enum class FeatureKind { raw_image, pretrained_backbone, masked_descriptor };

std::string to_string(FeatureKind kind);
FeatureKind feature_kind_from_string(const std::string& name);

/// Frozen image encoder for the pretrained_backbone kind; receives the mask-tight crop
/// resized to the target size.
using ImageEncoder = std::function<Eigen::VectorXd(const RgbImage& crop)>;

/// Encoder built from a trained descriptor network: dense descriptors of the crop,
/// average-pooled over a 4 x 4 grid.
ImageEncoder descriptor_grid_encoder(std::shared_ptr<const DescriptorModel> model);

struct FeatureExtractor {
  FeatureKind kind = FeatureKind::raw_image;
  int target_size = 16;
  std::shared_ptr<const DescriptorModel> model;  // masked_descriptor
  ImageEncoder encoder;                          // pretrained_backbone

  /// Throws std::invalid_argument for an empty mask or a missing model/encoder.
  Eigen::VectorXd operator()(const Frame& frame) const;
  int dimension(int descriptor_dim = 0) const;
};

struct BoundingBox {
  int u0 = 0, v0 = 0, u1 = 0, v1 = 0;  // inclusive
  int width() const { return u1 - u0 + 1; }
  int height() const { return v1 - v0 + 1; }
};

/// Tight box around the mask; throws on an empty mask.
BoundingBox mask_bounds(const MaskImage& mask);

/// Bilinear resize of the box region to size x size (all channels).
template <typename T>
Image<float> resize_region(const Image<T>& img, const BoundingBox& box, int size);

/// Feature matrix per sequence (rows = frames), in dataset order.
std::vector<Eigen::MatrixXd> sequence_features(const Dataset& dataset, const FeatureExtractor& extractor);

}  // namespace cadd
