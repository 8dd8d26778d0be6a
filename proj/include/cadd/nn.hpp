#pragma once

#include <cstdint>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace cadd::nn {

/// Float storage aligned for Eigen so vectorized reductions sum in a fixed order.
using FloatBuffer = std::vector<float, Eigen::aligned_allocator<float>>;

/// Single-image activation in channel-major (C, H, W) layout.
struct Tensor {
  int channels = 0;
  int height = 0;
  int width = 0;
  FloatBuffer data;

  Tensor() = default;
  Tensor(int c, int h, int w, float fill = 0.0f)
      : channels(c), height(h), width(w), data(static_cast<std::size_t>(c) * h * w, fill) {}

  std::size_t plane() const { return static_cast<std::size_t>(height) * width; }
  float& at(int c, int y, int x) { return data[c * plane() + static_cast<std::size_t>(y) * width + x]; }
  float at(int c, int y, int x) const { return data[c * plane() + static_cast<std::size_t>(y) * width + x]; }
  bool same_shape(const Tensor& o) const { return channels == o.channels && height == o.height && width == o.width; }
};

struct Parameter {
  std::string name;
  std::vector<int> shape;
  FloatBuffer value;
  FloatBuffer grad;

  std::size_t size() const { return value.size(); }
  void zero_grad() { std::fill(grad.begin(), grad.end(), 0.0f); }
};

/// Per-call activations a layer needs for its backward pass.
struct LayerCache {
  Tensor input;
  Tensor output;
  FloatBuffer buffer;
  std::vector<LayerCache> children;
};

class Layer {
 public:
  virtual ~Layer() = default;
  /// `cache` may be null in inference mode.
  virtual Tensor forward(const Tensor& in, LayerCache* cache) const = 0;
  /// Accumulates parameter gradients and returns d(loss)/d(input).
  virtual Tensor backward(const Tensor& grad_out, const LayerCache& cache) = 0;
  virtual std::vector<Parameter*> parameters() { return {}; }
  virtual std::string describe() const = 0;
};

class Conv2d final : public Layer {
 public:
  Conv2d(std::string name, int in_channels, int out_channels, int kernel, int stride, int padding);

  Tensor forward(const Tensor& in, LayerCache* cache) const override;
  Tensor backward(const Tensor& grad_out, const LayerCache& cache) override;
  std::vector<Parameter*> parameters() override { return {&weight_, &bias_}; }
  std::string describe() const override;

  void init_he(std::mt19937_64& rng);
  int out_size(int in) const { return (in + 2 * padding_ - kernel_) / stride_ + 1; }

 private:
  void im2col(const Tensor& in, int out_h, int out_w, FloatBuffer& cols) const;

  int in_channels_;
  int out_channels_;
  int kernel_;
  int stride_;
  int padding_;
  Parameter weight_;  // [out][in * k * k]
  Parameter bias_;
};

class Relu final : public Layer {
 public:
  Tensor forward(const Tensor& in, LayerCache* cache) const override;
  Tensor backward(const Tensor& grad_out, const LayerCache& cache) override;
  std::string describe() const override { return "relu"; }
};

/// Bilinear resize by an integer factor with half-pixel centers (align_corners = false).
class BilinearUpsample final : public Layer {
 public:
  explicit BilinearUpsample(int factor) : factor_(factor) {}
  Tensor forward(const Tensor& in, LayerCache* cache) const override;
  Tensor backward(const Tensor& grad_out, const LayerCache& cache) override;
  std::string describe() const override { return "upsample_x" + std::to_string(factor_); }

 private:
  int factor_;
};

/// Two 3x3 convolutions with a projection shortcut when the shape changes.
class ResidualBlock final : public Layer {
 public:
  ResidualBlock(const std::string& name, int in_channels, int out_channels, int stride);
  Tensor forward(const Tensor& in, LayerCache* cache) const override;
  Tensor backward(const Tensor& grad_out, const LayerCache& cache) override;
  std::vector<Parameter*> parameters() override;
  std::string describe() const override;
  void init_he(std::mt19937_64& rng);

 private:
  Conv2d conv1_;
  Conv2d conv2_;
  std::unique_ptr<Conv2d> shortcut_;
};

class Sequential {
 public:
  void add(std::unique_ptr<Layer> layer) { layers_.push_back(std::move(layer)); }
  Tensor forward(const Tensor& in, std::vector<LayerCache>* caches) const;
  Tensor backward(const Tensor& grad_out, const std::vector<LayerCache>& caches);
  std::vector<Parameter*> parameters();
  const std::vector<std::unique_ptr<Layer>>& layers() const { return layers_; }

 private:
  std::vector<std::unique_ptr<Layer>> layers_;
};

}  // namespace cadd::nn
