#include "cadd/nn.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace cadd::nn {
namespace {

using RowMatrix = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMatrix = Eigen::Map<RowMatrix>;
using ConstMapMatrix = Eigen::Map<const RowMatrix>;

Parameter make_param(std::string name, std::vector<int> shape) {
  std::size_t n = 1;
  for (int s : shape) n *= static_cast<std::size_t>(s);
  return {std::move(name), std::move(shape), FloatBuffer(n, 0.0f), FloatBuffer(n, 0.0f)};
}

struct Taps {
  int i0, i1;
  float w0, w1;
};

std::vector<Taps> upsample_taps(int in_size, int factor) {
  std::vector<Taps> taps(static_cast<std::size_t>(in_size) * factor);
  for (int o = 0; o < in_size * factor; ++o) {
    double src = (o + 0.5) / factor - 0.5;
    src = std::clamp(src, 0.0, static_cast<double>(in_size - 1));
    const int i0 = static_cast<int>(std::floor(src));
    const int i1 = std::min(i0 + 1, in_size - 1);
    const auto w1 = static_cast<float>(src - i0);
    taps[static_cast<std::size_t>(o)] = {i0, i1, 1.0f - w1, w1};
  }
  return taps;
}

}  // namespace

// ---------------------------------------------------------------------------
// Conv2d

Conv2d::Conv2d(std::string name, int in_channels, int out_channels, int kernel, int stride, int padding)
    : in_channels_(in_channels), out_channels_(out_channels), kernel_(kernel), stride_(stride), padding_(padding),
      weight_(make_param(name + ".weight", {out_channels, in_channels, kernel, kernel})),
      bias_(make_param(name + ".bias", {out_channels})) {
  if (in_channels <= 0 || out_channels <= 0 || kernel <= 0 || stride <= 0 || padding < 0)
    throw std::invalid_argument("Conv2d: invalid geometry");
}

void Conv2d::init_he(std::mt19937_64& rng) {
  const double fan_in = static_cast<double>(in_channels_) * kernel_ * kernel_;
  std::normal_distribution<double> d(0.0, std::sqrt(2.0 / fan_in));
  for (auto& w : weight_.value) w = static_cast<float>(d(rng));
  std::fill(bias_.value.begin(), bias_.value.end(), 0.0f);
}

std::string Conv2d::describe() const {
  return weight_.name.substr(0, weight_.name.size() - 7) + ": conv" + std::to_string(kernel_) + "x" +
         std::to_string(kernel_) + " " + std::to_string(in_channels_) + "->" + std::to_string(out_channels_) +
         " stride " + std::to_string(stride_);
}

void Conv2d::im2col(const Tensor& in, int out_h, int out_w, FloatBuffer& cols) const {
  const std::size_t p_count = static_cast<std::size_t>(out_h) * out_w;
  cols.assign(static_cast<std::size_t>(in_channels_) * kernel_ * kernel_ * p_count, 0.0f);
  std::size_t row = 0;
  for (int c = 0; c < in_channels_; ++c) {
    const float* plane = in.data.data() + c * in.plane();
    for (int ky = 0; ky < kernel_; ++ky) {
      for (int kx = 0; kx < kernel_; ++kx, ++row) {
        float* dst = cols.data() + row * p_count;
        for (int oy = 0; oy < out_h; ++oy) {
          const int iy = oy * stride_ - padding_ + ky;
          if (iy < 0 || iy >= in.height) continue;
          const float* src_row = plane + static_cast<std::size_t>(iy) * in.width;
          float* dst_row = dst + static_cast<std::size_t>(oy) * out_w;
          for (int ox = 0; ox < out_w; ++ox) {
            const int ix = ox * stride_ - padding_ + kx;
            if (ix >= 0 && ix < in.width) dst_row[ox] = src_row[ix];
          }
        }
      }
    }
  }
}

Tensor Conv2d::forward(const Tensor& in, LayerCache* cache) const {
  if (in.channels != in_channels_)
    throw std::invalid_argument("Conv2d " + weight_.name + ": expected " + std::to_string(in_channels_) +
                                " input channels, got " + std::to_string(in.channels));
  const int oh = out_size(in.height);
  const int ow = out_size(in.width);
  if (oh <= 0 || ow <= 0) throw std::invalid_argument("Conv2d: input too small");
  const int p_count = oh * ow;
  const int k_count = in_channels_ * kernel_ * kernel_;

  FloatBuffer local;
  FloatBuffer& cols = cache ? cache->buffer : local;
  im2col(in, oh, ow, cols);

  Tensor out(out_channels_, oh, ow);
  MapMatrix y(out.data.data(), out_channels_, p_count);
  const ConstMapMatrix w(weight_.value.data(), out_channels_, k_count);
  const ConstMapMatrix x(cols.data(), k_count, p_count);
  y.noalias() = w * x;
  for (int o = 0; o < out_channels_; ++o) y.row(o).array() += bias_.value[static_cast<std::size_t>(o)];
  if (cache) {
    cache->input = Tensor(in.channels, in.height, in.width);  // shape only; cols hold the data
    cache->input.data.clear();
  }
  return out;
}

Tensor Conv2d::backward(const Tensor& grad_out, const LayerCache& cache) {
  const int oh = grad_out.height;
  const int ow = grad_out.width;
  const int p_count = oh * ow;
  const int k_count = in_channels_ * kernel_ * kernel_;
  const ConstMapMatrix gy(grad_out.data.data(), out_channels_, p_count);
  const ConstMapMatrix x(cache.buffer.data(), k_count, p_count);

  MapMatrix gw(weight_.grad.data(), out_channels_, k_count);
  gw.noalias() += gy * x.transpose();
  for (int o = 0; o < out_channels_; ++o) bias_.grad[static_cast<std::size_t>(o)] += gy.row(o).sum();

  const ConstMapMatrix w(weight_.value.data(), out_channels_, k_count);
  RowMatrix gcols = w.transpose() * gy;

  Tensor grad_in(in_channels_, cache.input.height, cache.input.width);
  std::size_t row = 0;
  for (int c = 0; c < in_channels_; ++c) {
    float* plane = grad_in.data.data() + c * grad_in.plane();
    for (int ky = 0; ky < kernel_; ++ky) {
      for (int kx = 0; kx < kernel_; ++kx, ++row) {
        const float* src = gcols.data() + row * static_cast<std::size_t>(p_count);
        for (int oy = 0; oy < oh; ++oy) {
          const int iy = oy * stride_ - padding_ + ky;
          if (iy < 0 || iy >= grad_in.height) continue;
          float* dst_row = plane + static_cast<std::size_t>(iy) * grad_in.width;
          const float* src_row = src + static_cast<std::size_t>(oy) * ow;
          for (int ox = 0; ox < ow; ++ox) {
            const int ix = ox * stride_ - padding_ + kx;
            if (ix >= 0 && ix < grad_in.width) dst_row[ix] += src_row[ox];
          }
        }
      }
    }
  }
  return grad_in;
}

// ---------------------------------------------------------------------------
// Relu

Tensor Relu::forward(const Tensor& in, LayerCache* cache) const {
  Tensor out = in;
  for (auto& v : out.data) v = std::max(v, 0.0f);
  if (cache) cache->output = out;
  return out;
}

Tensor Relu::backward(const Tensor& grad_out, const LayerCache& cache) {
  Tensor g = grad_out;
  for (std::size_t i = 0; i < g.data.size(); ++i)
    if (cache.output.data[i] <= 0.0f) g.data[i] = 0.0f;
  return g;
}

// ---------------------------------------------------------------------------
// BilinearUpsample

Tensor BilinearUpsample::forward(const Tensor& in, LayerCache* cache) const {
  const auto ty = upsample_taps(in.height, factor_);
  const auto tx = upsample_taps(in.width, factor_);
  Tensor out(in.channels, in.height * factor_, in.width * factor_);
  for (int c = 0; c < in.channels; ++c)
    for (int y = 0; y < out.height; ++y) {
      const Taps& a = ty[static_cast<std::size_t>(y)];
      for (int x = 0; x < out.width; ++x) {
        const Taps& b = tx[static_cast<std::size_t>(x)];
        out.at(c, y, x) = a.w0 * (b.w0 * in.at(c, a.i0, b.i0) + b.w1 * in.at(c, a.i0, b.i1)) +
                          a.w1 * (b.w0 * in.at(c, a.i1, b.i0) + b.w1 * in.at(c, a.i1, b.i1));
      }
    }
  if (cache) {
    cache->input = Tensor(in.channels, in.height, in.width);
    cache->input.data.clear();
  }
  return out;
}

Tensor BilinearUpsample::backward(const Tensor& grad_out, const LayerCache& cache) {
  const int h = cache.input.height;
  const int w = cache.input.width;
  const auto ty = upsample_taps(h, factor_);
  const auto tx = upsample_taps(w, factor_);
  Tensor g(grad_out.channels, h, w);
  for (int c = 0; c < grad_out.channels; ++c)
    for (int y = 0; y < grad_out.height; ++y) {
      const Taps& a = ty[static_cast<std::size_t>(y)];
      for (int x = 0; x < grad_out.width; ++x) {
        const Taps& b = tx[static_cast<std::size_t>(x)];
        const float v = grad_out.at(c, y, x);
        g.at(c, a.i0, b.i0) += a.w0 * b.w0 * v;
        g.at(c, a.i0, b.i1) += a.w0 * b.w1 * v;
        g.at(c, a.i1, b.i0) += a.w1 * b.w0 * v;
        g.at(c, a.i1, b.i1) += a.w1 * b.w1 * v;
      }
    }
  return g;
}

// ---------------------------------------------------------------------------
// ResidualBlock

ResidualBlock::ResidualBlock(const std::string& name, int in_channels, int out_channels, int stride)
    : conv1_(name + ".conv1", in_channels, out_channels, 3, stride, 1),
      conv2_(name + ".conv2", out_channels, out_channels, 3, 1, 1) {
  if (stride != 1 || in_channels != out_channels)
    shortcut_ = std::make_unique<Conv2d>(name + ".shortcut", in_channels, out_channels, 1, stride, 0);
}

void ResidualBlock::init_he(std::mt19937_64& rng) {
  conv1_.init_he(rng);
  conv2_.init_he(rng);
  // Down-weight the residual branch so deep stacks start close to the identity.
  for (auto* p : conv2_.parameters())
    for (auto& v : p->value) v *= 0.1f;
  if (shortcut_) shortcut_->init_he(rng);
}

std::vector<Parameter*> ResidualBlock::parameters() {
  std::vector<Parameter*> out = conv1_.parameters();
  for (auto* p : conv2_.parameters()) out.push_back(p);
  if (shortcut_)
    for (auto* p : shortcut_->parameters()) out.push_back(p);
  return out;
}

std::string ResidualBlock::describe() const {
  return "residual[" + conv1_.describe() + " | " + conv2_.describe() + (shortcut_ ? " | projection]" : "]");
}

Tensor ResidualBlock::forward(const Tensor& in, LayerCache* cache) const {
  LayerCache* c1 = nullptr;
  LayerCache* c2 = nullptr;
  LayerCache* cs = nullptr;
  if (cache) {
    cache->children.assign(3, LayerCache{});
    c1 = &cache->children[0];
    c2 = &cache->children[1];
    cs = &cache->children[2];
  }
  Tensor h = conv1_.forward(in, c1);
  for (auto& v : h.data) v = std::max(v, 0.0f);
  if (c1) c1->output = h;
  Tensor out = conv2_.forward(h, c2);
  const Tensor skip = shortcut_ ? shortcut_->forward(in, cs) : in;
  for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] = std::max(out.data[i] + skip.data[i], 0.0f);
  if (cache) cache->output = out;
  return out;
}

Tensor ResidualBlock::backward(const Tensor& grad_out, const LayerCache& cache) {
  Tensor g = grad_out;
  for (std::size_t i = 0; i < g.data.size(); ++i)
    if (cache.output.data[i] <= 0.0f) g.data[i] = 0.0f;
  Tensor gh = conv2_.backward(g, cache.children[1]);
  const Tensor& h = cache.children[0].output;
  for (std::size_t i = 0; i < gh.data.size(); ++i)
    if (h.data[i] <= 0.0f) gh.data[i] = 0.0f;
  Tensor gx = conv1_.backward(gh, cache.children[0]);
  if (shortcut_) {
    const Tensor gs = shortcut_->backward(g, cache.children[2]);
    for (std::size_t i = 0; i < gx.data.size(); ++i) gx.data[i] += gs.data[i];
  } else {
    for (std::size_t i = 0; i < gx.data.size(); ++i) gx.data[i] += g.data[i];
  }
  return gx;
}

// ---------------------------------------------------------------------------
// Sequential

Tensor Sequential::forward(const Tensor& in, std::vector<LayerCache>* caches) const {
  if (caches) caches->assign(layers_.size(), LayerCache{});
  Tensor x = in;
  for (std::size_t i = 0; i < layers_.size(); ++i) x = layers_[i]->forward(x, caches ? &(*caches)[i] : nullptr);
  return x;
}

Tensor Sequential::backward(const Tensor& grad_out, const std::vector<LayerCache>& caches) {
  Tensor g = grad_out;
  for (std::size_t i = layers_.size(); i-- > 0;) g = layers_[i]->backward(g, caches[i]);
  return g;
}

std::vector<Parameter*> Sequential::parameters() {
  std::vector<Parameter*> out;
  for (auto& l : layers_)
    for (auto* p : l->parameters()) out.push_back(p);
  return out;
}

}  // namespace cadd::nn
