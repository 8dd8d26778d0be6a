#include "cadd/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <optional>
#include <stdexcept>

namespace cadd {
namespace {

constexpr std::size_t kMinMaskPixels = 10;
constexpr int kExclusionAttempts = 50;

std::vector<Pixel> mask_pixels(const MaskImage& mask) {
  std::vector<Pixel> out;
  for (int v = 0; v < mask.height(); ++v)
    for (int u = 0; u < mask.width(); ++u)
      if (mask(u, v)) out.push_back({u, v});
  return out;
}

// Depth of `f` at a real pixel position: bilinear when the four neighbours are valid
// object pixels, nearest otherwise. Returns 0 when unavailable.
double depth_at(const Frame& f, const PixelF& p) {
  const int u0 = static_cast<int>(std::floor(p.u));
  const int v0 = static_cast<int>(std::floor(p.v));
  bool all_valid = f.depth.in_bounds(u0, v0) && f.depth.in_bounds(u0 + 1, v0 + 1);
  if (all_valid) {
    for (int dv = 0; dv <= 1 && all_valid; ++dv)
      for (int du = 0; du <= 1 && all_valid; ++du)
        all_valid = f.depth(u0 + du, v0 + dv) > 0.0f && f.mask(u0 + du, v0 + dv);
  }
  if (all_valid) return sample_bilinear(f.depth, p.u, p.v, 0);
  const Pixel r = p.rounded();
  if (!f.depth.in_bounds(r.u, r.v)) return 0.0;
  return f.depth(r.u, r.v);
}

// Where pixel `p` of `a` appears in `b`: through its surface point when a has depth
// there, otherwise through the viewing direction (a point at infinity).
std::optional<PixelF> correspondence(const Frame& a, const Frame& b, const Pixel& p) {
  if (!a.geometry_valid || !b.geometry_valid) return std::nullopt;
  const double z = a.depth(p.u, p.v);
  Vec3 cam_b;
  if (z > 0.0) {
    cam_b = b.pose.to_camera(unproject(p, z, a.intrinsics, a.pose));
  } else {
    const Vec3 ray((p.u - a.intrinsics.cx) / a.intrinsics.fx, (p.v - a.intrinsics.cy) / a.intrinsics.fy, 1.0);
    cam_b = b.pose.rotation().transpose() * (a.pose.rotation() * ray);
  }
  if (cam_b.z() <= 1e-9) return std::nullopt;
  return PixelF{b.intrinsics.fx * cam_b.x() / cam_b.z() + b.intrinsics.cx,
                b.intrinsics.fy * cam_b.y() / cam_b.z() + b.intrinsics.cy};
}

Pixel uniform_pixel(int width, int height, Rng& rng) {
  std::uniform_int_distribution<int> du(0, width - 1);
  std::uniform_int_distribution<int> dv(0, height - 1);
  const int u = du(rng);
  const int v = dv(rng);
  return {u, v};
}

Pixel pick(const std::vector<Pixel>& pool, Rng& rng) {
  std::uniform_int_distribution<std::size_t> d(0, pool.size() - 1);
  return pool[d(rng)];
}

std::uint8_t to_byte(double x) { return static_cast<std::uint8_t>(std::lround(std::clamp(x, 0.0, 255.0))); }

}  // namespace

RgbImage random_background(int width, int height, Rng& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  Vec3 c0(unit(rng), unit(rng), unit(rng));
  Vec3 c1(unit(rng), unit(rng), unit(rng));
  const double fx = 0.5 + 4.0 * unit(rng);
  const double fy = 0.5 + 4.0 * unit(rng);
  const double ph = unit(rng) * 2.0 * std::numbers::pi;
  const double noise = 0.25 * unit(rng);
  RgbImage bg(width, height, 3);
  for (int v = 0; v < height; ++v) {
    for (int u = 0; u < width; ++u) {
      const double t = 0.5 + 0.5 * std::sin(2.0 * std::numbers::pi * (fx * u / width + fy * v / height) + ph);
      const Vec3 c = (1.0 - t) * c0 + t * c1;
      for (int ch = 0; ch < 3; ++ch) bg(u, v, ch) = to_byte(255.0 * (c[ch] + noise * (unit(rng) - 0.5)));
    }
  }
  return bg;
}

Vec3 unproject(const PixelF& p, double depth, const CameraIntrinsics& k, const CameraPose& pose) {
  if (!(depth > 0.0) || !std::isfinite(depth)) throw std::domain_error("unproject: invalid depth");
  const Vec3 cam((p.u - k.cx) / k.fx * depth, (p.v - k.cy) / k.fy * depth, depth);
  return pose.to_world(cam);
}

Projection project(const Vec3& world_point, const CameraIntrinsics& k, const CameraPose& pose) {
  const Vec3 cam = pose.to_camera(world_point);
  if (!(cam.z() > 0.0)) throw std::domain_error("project: point is behind the camera");
  return {{k.fx * cam.x() / cam.z() + k.cx, k.fy * cam.y() / cam.z() + k.cy}, cam.z()};
}

MatchBatch all_matches(const Frame& a, const Frame& b, double depth_tolerance) {
  if (!a.geometry_valid || !b.geometry_valid)
    throw std::invalid_argument("find_matches: frames need valid depth and pose");
  MatchBatch out;
  out.kind = PairKind::match;
  for (int v = 0; v < a.height(); ++v) {
    for (int u = 0; u < a.width(); ++u) {
      if (!a.mask(u, v)) continue;
      const double z = a.depth(u, v);
      if (z <= 0.0) continue;
      const Vec3 cam_b = b.pose.to_camera(unproject(Pixel{u, v}, z, a.intrinsics, a.pose));
      if (cam_b.z() <= 0.0) continue;
      const PixelF pf{b.intrinsics.fx * cam_b.x() / cam_b.z() + b.intrinsics.cx,
                      b.intrinsics.fy * cam_b.y() / cam_b.z() + b.intrinsics.cy};
      const Pixel pb = pf.rounded();
      if (!b.mask.in_bounds(pb.u, pb.v) || !b.mask(pb.u, pb.v)) continue;
      const double zb = depth_at(b, pf);
      if (zb <= 0.0 || std::abs(cam_b.z() - zb) > depth_tolerance) continue;
      out.pixels_a.push_back({u, v});
      out.pixels_b.push_back(pb);
      out.reprojected_b.push_back(pf);
    }
  }
  return out;
}

MatchBatch find_matches(const Frame& a, const Frame& b, std::size_t n_matches, double depth_tolerance, Rng& rng) {
  MatchBatch all = all_matches(a, b, depth_tolerance);
  const std::size_t n = all.size();
  const std::size_t take = std::min(n, n_matches);
  // Partial Fisher-Yates: the first `take` slots form a uniform sample without replacement.
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  for (std::size_t i = 0; i < take; ++i) {
    std::uniform_int_distribution<std::size_t> d(i, n - 1);
    std::swap(order[i], order[d(rng)]);
  }
  MatchBatch out;
  out.kind = PairKind::match;
  out.pixels_a.reserve(take);
  for (std::size_t i = 0; i < take; ++i) {
    out.pixels_a.push_back(all.pixels_a[order[i]]);
    out.pixels_b.push_back(all.pixels_b[order[i]]);
    out.reprojected_b.push_back(all.reprojected_b[order[i]]);
  }
  return out;
}

MatchBatch sample_nonmatches(const Frame& a, const Frame& b, std::size_t n, NonMatchMode mode,
                             double exclusion_radius, Rng& rng) {
  MatchBatch out;
  out.kind = PairKind::non_match;
  std::vector<Pixel> pool_a;
  std::vector<Pixel> pool_b;
  if (mode == NonMatchMode::on_object) {
    pool_a = mask_pixels(a.mask);
    pool_b = mask_pixels(b.mask);
    if (pool_a.size() < kMinMaskPixels || pool_b.size() < kMinMaskPixels) {
      out.fell_back_to_anywhere = true;
      pool_a.clear();
      pool_b.clear();
    }
  }
  const bool anywhere = pool_a.empty();
  const double r2 = exclusion_radius * exclusion_radius;
  out.pixels_a.reserve(n);
  out.pixels_b.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const Pixel pa = anywhere ? uniform_pixel(a.width(), a.height(), rng) : pick(pool_a, rng);
    std::optional<PixelF> corr;
    if (exclusion_radius > 0.0) corr = correspondence(a, b, pa);
    for (int attempt = 0; attempt < kExclusionAttempts; ++attempt) {
      const Pixel pb = anywhere ? uniform_pixel(b.width(), b.height(), rng) : pick(pool_b, rng);
      if (corr) {
        const double du = pb.u - corr->u;
        const double dv = pb.v - corr->v;
        if (du * du + dv * dv < r2) continue;
      }
      out.pixels_a.push_back(pa);
      out.pixels_b.push_back(pb);
      break;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Augmentation

AugmentationSpec AugmentationSpec::training_default() {
  AugmentationSpec s;
  s.background_randomization = true;
  s.brightness = 0.2;
  s.contrast = 0.2;
  s.saturation = 0.2;
  s.hue = 0.03;
  s.scale_min = 1.0;
  s.scale_max = 1.25;
  return s;
}

void AugmentationSpec::validate() const {
  if (brightness < 0 || contrast < 0 || saturation < 0 || hue < 0 || brightness >= 1 || contrast >= 1 || saturation >= 1)
    throw std::invalid_argument("AugmentationSpec: jitter ranges must lie in [0, 1)");
  if (!(scale_min > 0) || scale_max < scale_min) throw std::invalid_argument("AugmentationSpec: invalid scale range");
  if (!(min_visible_mask > 0) || min_visible_mask > 1)
    throw std::invalid_argument("AugmentationSpec: min_visible_mask must lie in (0, 1]");
}

AugmentedImage apply_augmentations(const Frame& frame, const AugmentationSpec& spec, Rng& rng) {
  spec.validate();
  const int w = frame.width();
  const int h = frame.height();
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto jitter = [&](double range) { return 1.0 + range * (2.0 * unit(rng) - 1.0); };

  AugmentedImage out{frame.rgb, {}};
  RgbImage background;
  if (spec.background_randomization) {
    background = random_background(w, h, rng);
    for (int v = 0; v < h; ++v)
      for (int u = 0; u < w; ++u)
        if (!frame.mask(u, v))
          for (int c = 0; c < 3; ++c) out.rgb(u, v, c) = background(u, v, c);
  }

  if (spec.geometric()) {
    const std::size_t mask_total = frame.mask_count();
    bool accepted = false;
    for (int attempt = 0; attempt < 10 && !accepted; ++attempt) {
      const double s = spec.scale_min + unit(rng) * (spec.scale_max - spec.scale_min);
      const double span_u = w - w / s;
      const double span_v = h - h / s;
      PixelRemap remap{s, std::min(0.0, span_u) + unit(rng) * std::abs(span_u),
                       std::min(0.0, span_v) + unit(rng) * std::abs(span_v)};
      std::size_t visible = 0;
      for (int v = 0; v < h; ++v)
        for (int u = 0; u < w; ++u) {
          if (!frame.mask(u, v)) continue;
          const Pixel p = remap.forward({static_cast<double>(u), static_cast<double>(v)}).rounded();
          if (p.u >= 0 && p.v >= 0 && p.u < w && p.v < h) ++visible;
        }
      if (mask_total == 0 || static_cast<double>(visible) >= spec.min_visible_mask * static_cast<double>(mask_total)) {
        out.remap = remap;
        accepted = true;
      }
    }
    if (!accepted) throw std::runtime_error("apply_augmentations: no crop keeps enough of the object mask visible");

    const RgbImage src = out.rgb;
    for (int v = 0; v < h; ++v) {
      for (int u = 0; u < w; ++u) {
        const PixelF q = out.remap.inverse({static_cast<double>(u), static_cast<double>(v)});
        const bool inside = q.u >= -0.5 && q.v >= -0.5 && q.u <= w - 0.5 && q.v <= h - 0.5;
        for (int c = 0; c < 3; ++c) {
          if (inside) out.rgb(u, v, c) = to_byte(sample_bilinear(src, q.u, q.v, c));
          else out.rgb(u, v, c) = background.empty() ? 0 : background(u, v, c);
        }
      }
    }
  }

  const bool color = spec.brightness > 0 || spec.contrast > 0 || spec.saturation > 0 || spec.hue > 0;
  if (color) {
    const double b = jitter(spec.brightness);
    const double ct = jitter(spec.contrast);
    const double sat = jitter(spec.saturation);
    const double angle = spec.hue * (2.0 * unit(rng) - 1.0) * 2.0 * std::numbers::pi;
    double mean = 0.0;
    for (const auto x : out.rgb.values()) mean += x;
    mean /= static_cast<double>(out.rgb.size());
    const double cos_a = std::cos(angle);
    const double sin_a = std::sin(angle);
    for (int v = 0; v < h; ++v) {
      for (int u = 0; u < w; ++u) {
        Vec3 px(out.rgb(u, v, 0), out.rgb(u, v, 1), out.rgb(u, v, 2));
        px *= b;
        px = (px.array() - mean) * ct + mean;
        const double gray = 0.299 * px[0] + 0.587 * px[1] + 0.114 * px[2];
        px = (px.array() - gray) * sat + gray;
        if (angle != 0.0) {
          // Rotate chroma in YIQ space.
          const double y = 0.299 * px[0] + 0.587 * px[1] + 0.114 * px[2];
          const double i = 0.596 * px[0] - 0.274 * px[1] - 0.322 * px[2];
          const double q = 0.211 * px[0] - 0.523 * px[1] + 0.312 * px[2];
          const double i2 = i * cos_a - q * sin_a;
          const double q2 = i * sin_a + q * cos_a;
          px = Vec3(y + 0.956 * i2 + 0.621 * q2, y - 0.272 * i2 - 0.647 * q2, y - 1.106 * i2 + 1.703 * q2);
        }
        for (int c = 0; c < 3; ++c) out.rgb(u, v, c) = to_byte(px[c]);
      }
    }
  }
  return out;
}

void transport_pairs(MatchBatch& batch, const PixelRemap& remap_a, const PixelRemap& remap_b, int width, int height) {
  if (remap_a.is_identity() && remap_b.is_identity()) return;
  MatchBatch out;
  out.kind = batch.kind;
  out.fell_back_to_anywhere = batch.fell_back_to_anywhere;
  const bool has_reproj = batch.reprojected_b.size() == batch.size();
  auto inside = [&](const Pixel& p) { return p.u >= 0 && p.v >= 0 && p.u < width && p.v < height; };
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const auto& a = batch.pixels_a[i];
    const auto& b = batch.pixels_b[i];
    const Pixel pa = remap_a.forward({static_cast<double>(a.u), static_cast<double>(a.v)}).rounded();
    const PixelF fb = has_reproj ? remap_b.forward(batch.reprojected_b[i])
                                 : remap_b.forward({static_cast<double>(b.u), static_cast<double>(b.v)});
    const Pixel pb = fb.rounded();
    if (!inside(pa) || !inside(pb)) continue;
    out.pixels_a.push_back(pa);
    out.pixels_b.push_back(pb);
    if (has_reproj) out.reprojected_b.push_back(fb);
  }
  batch = std::move(out);
}

}  // namespace cadd
