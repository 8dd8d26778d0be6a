#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <nlohmann/json.hpp>

#include "cadd/dataset.hpp"
#include "cadd/nn.hpp"

namespace cadd {

/// Dense H x W x D descriptor field.
struct DescriptorImage {
  Image<float> values;  // D channels, interleaved
  int source_frame_id = -1;
  bool padded = false;  // input was padded up to the backbone stride

  int width() const { return values.width(); }
  int height() const { return values.height(); }
  int dim() const { return values.channels(); }
  const float* at(int u, int v) const { return &values(u, v, 0); }
};

/// Exact descriptor slice at an integer pixel. Throws std::out_of_range outside the image.
Eigen::VectorXd descriptor_at(const DescriptorImage& d, const Pixel& p);

enum class Backbone { small_fcn, resnet34_s8 };

struct ModelConfig {
  int descriptor_dim = 5;
  Backbone backbone = Backbone::small_fcn;
  std::vector<int> widths = {32, 64, 64, 64};  // small_fcn block widths, or resnet stage widths
  std::string upsampling = "bilinear";
  std::uint64_t init_seed = 1;

  static ModelConfig resnet34_s8(int base_width = 64);
  int stride() const;
  void validate() const;
  nlohmann::json to_json() const;
  static ModelConfig from_json(const nlohmann::json& j);
};

/// Gradient tape for one forward pass in training mode.
struct ForwardTape {
  std::vector<nn::LayerCache> caches;
  int input_height = 0;
  int input_width = 0;
  int padded_height = 0;
  int padded_width = 0;
};

class DescriptorModel {
 public:
  explicit DescriptorModel(const ModelConfig& config);
  DescriptorModel(const DescriptorModel&) = delete;
  DescriptorModel& operator=(const DescriptorModel&) = delete;

  const ModelConfig& config() const { return config_; }

  /// Inference when tape is null. Throws std::runtime_error on non-finite output.
  DescriptorImage forward(const RgbImage& rgb, ForwardTape* tape = nullptr) const;
  /// grad holds d(loss)/d(descriptor) in the same H x W x D layout as the forward output.
  void backward(const Image<float>& grad, const ForwardTape& tape);

  std::vector<nn::Parameter*> parameters() { return net_.parameters(); }
  std::vector<const nn::Parameter*> parameters() const;
  std::size_t parameter_count() const;
  void zero_grad();
  std::vector<std::string> describe() const;

 private:
  ModelConfig config_;
  nn::Sequential net_;
};

nn::Tensor normalize_input(const RgbImage& rgb, int padded_width, int padded_height);

/// Trained projection network and class clusters, stored alongside DON weights for DON+Hard.
struct HardClassifierState {
  nlohmann::json projection;  // serialized ProjectionNetwork
  nlohmann::json classes;     // serialized ClassModel
  std::string feature_kind;
  int feature_size = 16;
};

struct Checkpoint {
  static constexpr int kSchemaVersion = 1;

  ModelConfig config;
  std::shared_ptr<DescriptorModel> model;
  nlohmann::json metadata = nlohmann::json::object();  // variant, steps, seeds, train config
  std::optional<HardClassifierState> classifier;
};

/// Binary archive: magic, schema version, JSON header, raw float32 parameters.
void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace cadd
