#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "cadd/dataset.hpp"

namespace cadd {

using Rng = std::mt19937_64;

Vec3 unproject(const PixelF& p, double depth, const CameraIntrinsics& k, const CameraPose& pose);
inline Vec3 unproject(const Pixel& p, double depth, const CameraIntrinsics& k, const CameraPose& pose) {
  return unproject(PixelF{static_cast<double>(p.u), static_cast<double>(p.v)}, depth, k, pose);
}

struct Projection {
  PixelF pixel;
  double depth = 0.0;  // camera-frame z
};

/// Throws std::domain_error when the point is not in front of the camera.
Projection project(const Vec3& world_point, const CameraIntrinsics& k, const CameraPose& pose);

enum class PairKind { match, non_match };
enum class NonMatchMode { anywhere, on_object };

struct MatchBatch {
  std::vector<Pixel> pixels_a;
  std::vector<Pixel> pixels_b;
  std::vector<PixelF> reprojected_b;  // matches only: real-valued reprojection of pixels_a
  PairKind kind = PairKind::match;
  bool fell_back_to_anywhere = false;

  std::size_t size() const { return pixels_a.size(); }
  bool empty() const { return pixels_a.empty(); }
};

/// Matches sampled without replacement over the mask pixels of `a` whose
/// reprojection lands in-bounds on the mask of `b` at a consistent depth.
MatchBatch find_matches(const Frame& a, const Frame& b, std::size_t n_matches, double depth_tolerance, Rng& rng);

/// Every eligible match pixel of `a`, in row-major order.
MatchBatch all_matches(const Frame& a, const Frame& b, double depth_tolerance);

/// Random pixel pairs. When exclusion_radius > 0 and a's true correspondence in b is
/// computable, pixel_b stays at least that far from it.
MatchBatch sample_nonmatches(const Frame& a, const Frame& b, std::size_t n, NonMatchMode mode,
                             double exclusion_radius, Rng& rng);

struct AugmentationSpec {
  bool background_randomization = false;
  double brightness = 0.0;  // multiplicative jitter half-range, e.g. 0.2 -> [0.8, 1.2]
  double contrast = 0.0;
  double saturation = 0.0;
  double hue = 0.0;         // hue rotation half-range in turns
  double scale_min = 1.0;   // zoom factor range; 1 keeps geometry
  double scale_max = 1.0;
  double min_visible_mask = 0.5;
  std::uint64_t seed = 0;

  static AugmentationSpec identity() { return {}; }
  static AugmentationSpec training_default();
  void validate() const;
  bool geometric() const { return scale_min != 1.0 || scale_max != 1.0; }
};

/// Augmented pixel = scale * (original - origin).
struct PixelRemap {
  double scale = 1.0;
  double origin_u = 0.0;
  double origin_v = 0.0;

  PixelF forward(const PixelF& p) const { return {scale * (p.u - origin_u), scale * (p.v - origin_v)}; }
  PixelF inverse(const PixelF& p) const { return {p.u / scale + origin_u, p.v / scale + origin_v}; }
  bool is_identity() const { return scale == 1.0 && origin_u == 0.0 && origin_v == 0.0; }
};

struct AugmentedImage {
  RgbImage rgb;
  PixelRemap remap;
};

/// Throws std::runtime_error if no crop keeping min_visible_mask of the mask is found in 10 tries.
AugmentedImage apply_augmentations(const Frame& frame, const AugmentationSpec& spec, Rng& rng);

/// Smooth two-color gradient with per-pixel noise, used for background randomization.
RgbImage random_background(int width, int height, Rng& rng);

/// Moves aligned pixel pairs into augmented coordinates, dropping pairs that leave either image.
void transport_pairs(MatchBatch& batch, const PixelRemap& remap_a, const PixelRemap& remap_b, int width, int height);

}  // namespace cadd
