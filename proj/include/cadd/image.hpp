#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace cadd {

/// Interleaved raster: element (x, y, c) lives at ((y * width) + x) * channels + c.
template <typename T>
class Image {
 public:
  Image() = default;
  Image(int width, int height, int channels = 1, T fill = T{})
      : width_(width), height_(height), channels_(channels),
        data_(static_cast<std::size_t>(width) * height * channels, fill) {
    if (width < 0 || height < 0 || channels <= 0)
      throw std::invalid_argument("Image: invalid dimensions");
  }

  int width() const { return width_; }
  int height() const { return height_; }
  int channels() const { return channels_; }
  bool empty() const { return data_.empty(); }
  std::size_t size() const { return data_.size(); }
  std::size_t pixel_count() const { return static_cast<std::size_t>(width_) * height_; }

  bool in_bounds(int x, int y) const { return x >= 0 && y >= 0 && x < width_ && y < height_; }
  bool same_shape(int w, int h) const { return w == width_ && h == height_; }
  template <typename U>
  bool same_shape(const Image<U>& other) const {
    return other.width() == width_ && other.height() == height_;
  }

  T& operator()(int x, int y, int c = 0) { return data_[index(x, y, c)]; }
  const T& operator()(int x, int y, int c = 0) const { return data_[index(x, y, c)]; }

  T& at(int x, int y, int c = 0) {
    check(x, y, c);
    return data_[index(x, y, c)];
  }
  const T& at(int x, int y, int c = 0) const {
    check(x, y, c);
    return data_[index(x, y, c)];
  }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }
  std::vector<T>& values() { return data_; }
  const std::vector<T>& values() const { return data_; }

  bool operator==(const Image& other) const = default;

 private:
  std::size_t index(int x, int y, int c) const {
    return (static_cast<std::size_t>(y) * width_ + x) * channels_ + c;
  }
  void check(int x, int y, int c) const {
    if (!in_bounds(x, y) || c < 0 || c >= channels_)
      throw std::out_of_range("Image: pixel (" + std::to_string(x) + "," + std::to_string(y) +
                              ") channel " + std::to_string(c) + " out of range");
  }

  int width_ = 0;
  int height_ = 0;
  int channels_ = 1;
  std::vector<T> data_;
};

using RgbImage = Image<std::uint8_t>;     // 3 channels
using DepthImage = Image<float>;          // meters, 0 = invalid
using MaskImage = Image<std::uint8_t>;    // 0 / 1
using LabelImage = Image<std::int32_t>;   // -1 = none

/// Bilinear sample of a channel at real coordinates; coordinates are clamped to the raster.
template <typename T>
double sample_bilinear(const Image<T>& img, double x, double y, int c) {
  const double fx = std::min(std::max(x, 0.0), static_cast<double>(img.width() - 1));
  const double fy = std::min(std::max(y, 0.0), static_cast<double>(img.height() - 1));
  const int x0 = static_cast<int>(fx);
  const int y0 = static_cast<int>(fy);
  const int x1 = std::min(x0 + 1, img.width() - 1);
  const int y1 = std::min(y0 + 1, img.height() - 1);
  const double ax = fx - x0;
  const double ay = fy - y0;
  const double top = (1.0 - ax) * img(x0, y0, c) + ax * img(x1, y0, c);
  const double bottom = (1.0 - ax) * img(x0, y1, c) + ax * img(x1, y1, c);
  return (1.0 - ay) * top + ay * bottom;
}

}  // namespace cadd
