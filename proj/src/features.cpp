#include "cadd/features.hpp"

#include <algorithm>
#include <stdexcept>

namespace cadd {

std::string to_string(FeatureKind kind) {
  switch (kind) {
    case FeatureKind::raw_image: return "raw_image";
    case FeatureKind::pretrained_backbone: return "pretrained_backbone";
    case FeatureKind::masked_descriptor: return "masked_descriptor";
  }
  return "unknown";
}

FeatureKind feature_kind_from_string(const std::string& name) {
  if (name == "raw_image") return FeatureKind::raw_image;
  if (name == "pretrained_backbone") return FeatureKind::pretrained_backbone;
  if (name == "masked_descriptor") return FeatureKind::masked_descriptor;
  throw std::invalid_argument("unknown feature kind '" + name + "'");
}

BoundingBox mask_bounds(const MaskImage& mask) {
  BoundingBox b{mask.width(), mask.height(), -1, -1};
  for (int v = 0; v < mask.height(); ++v)
    for (int u = 0; u < mask.width(); ++u)
      if (mask(u, v)) {
        b.u0 = std::min(b.u0, u);
        b.v0 = std::min(b.v0, v);
        b.u1 = std::max(b.u1, u);
        b.v1 = std::max(b.v1, v);
      }
  if (b.u1 < 0) throw std::invalid_argument("feature extraction: frame has an empty mask");
  return b;
}

template <typename T>
Image<float> resize_region(const Image<T>& img, const BoundingBox& box, int size) {
  Image<float> out(size, size, img.channels());
  const double sx = static_cast<double>(box.width()) / size;
  const double sy = static_cast<double>(box.height()) / size;
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x) {
      const double u = box.u0 + (x + 0.5) * sx - 0.5;
      const double v = box.v0 + (y + 0.5) * sy - 0.5;
      for (int c = 0; c < img.channels(); ++c)
        out(x, y, c) = static_cast<float>(sample_bilinear(img, std::clamp(u, double(box.u0), double(box.u1)),
                                                          std::clamp(v, double(box.v0), double(box.v1)), c));
    }
  return out;
}

template Image<float> resize_region(const Image<std::uint8_t>&, const BoundingBox&, int);
template Image<float> resize_region(const Image<float>&, const BoundingBox&, int);

ImageEncoder descriptor_grid_encoder(std::shared_ptr<const DescriptorModel> model) {
  return [model](const RgbImage& crop) {
    const DescriptorImage d = model->forward(crop);
    constexpr int kGrid = 4;
    Eigen::VectorXd out = Eigen::VectorXd::Zero(kGrid * kGrid * d.dim());
    for (int gy = 0; gy < kGrid; ++gy)
      for (int gx = 0; gx < kGrid; ++gx) {
        const int u0 = gx * d.width() / kGrid, u1 = (gx + 1) * d.width() / kGrid;
        const int v0 = gy * d.height() / kGrid, v1 = (gy + 1) * d.height() / kGrid;
        const double n = std::max(1, (u1 - u0) * (v1 - v0));
        for (int v = v0; v < v1; ++v)
          for (int u = u0; u < u1; ++u)
            for (int c = 0; c < d.dim(); ++c) out[(gy * kGrid + gx) * d.dim() + c] += d.values(u, v, c) / n;
      }
    return out;
  };
}

Eigen::VectorXd FeatureExtractor::operator()(const Frame& frame) const {
  const BoundingBox box = mask_bounds(frame.mask);
  switch (kind) {
    case FeatureKind::raw_image: {
      const Image<float> crop = resize_region(frame.rgb, box, target_size);
      Eigen::VectorXd out(static_cast<Eigen::Index>(crop.size()));
      for (std::size_t i = 0; i < crop.size(); ++i) out[static_cast<Eigen::Index>(i)] = crop.values()[i] / 255.0;
      return out;
    }
    case FeatureKind::pretrained_backbone: {
      if (!encoder) throw std::invalid_argument("feature extraction: no pretrained encoder configured");
      const Image<float> crop = resize_region(frame.rgb, box, target_size * 4);
      RgbImage rgb(crop.width(), crop.height(), 3);
      for (std::size_t i = 0; i < crop.size(); ++i)
        rgb.values()[i] = static_cast<std::uint8_t>(std::clamp(crop.values()[i] + 0.5f, 0.0f, 255.0f));
      return encoder(rgb);
    }
    case FeatureKind::masked_descriptor: {
      if (!model) throw std::invalid_argument("feature extraction: masked_descriptor needs a descriptor model");
      DescriptorImage d = model->forward(frame.rgb);
      for (int v = 0; v < d.height(); ++v)
        for (int u = 0; u < d.width(); ++u)
          if (!frame.mask(u, v))
            for (int c = 0; c < d.dim(); ++c) d.values(u, v, c) = 0.0f;
      const Image<float> crop = resize_region(d.values, box, target_size);
      Eigen::VectorXd out(static_cast<Eigen::Index>(crop.size()));
      for (std::size_t i = 0; i < crop.size(); ++i) out[static_cast<Eigen::Index>(i)] = crop.values()[i];
      return out;
    }
  }
  throw std::logic_error("unreachable feature kind");
}

int FeatureExtractor::dimension(int descriptor_dim) const {
  switch (kind) {
    case FeatureKind::raw_image: return 3 * target_size * target_size;
    case FeatureKind::masked_descriptor: return descriptor_dim * target_size * target_size;
    default: return -1;
  }
}

std::vector<Eigen::MatrixXd> sequence_features(const Dataset& dataset, const FeatureExtractor& extractor) {
  std::vector<Eigen::MatrixXd> out;
  out.reserve(dataset.sequences.size());
  for (const auto& seq : dataset.sequences) {
    Eigen::MatrixXd m;
    for (std::size_t f = 0; f < seq.frames.size(); ++f) {
      const Eigen::VectorXd x = extractor(seq.frames[f]);
      if (f == 0) m.resize(static_cast<Eigen::Index>(seq.frames.size()), x.size());
      m.row(static_cast<Eigen::Index>(f)) = x.transpose();
    }
    out.push_back(std::move(m));
  }
  return out;
}

}  // namespace cadd
