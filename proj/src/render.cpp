#include "cadd/render.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

namespace cadd {
namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

constexpr std::array<double, 6> kFaceBrightness = {1.0, 0.82, 0.92, 0.72, 1.08, 0.64};

Vec3 face_normal(int face) {
  Vec3 n = Vec3::Zero();
  n[face / 2] = (face % 2 == 0) ? 1.0 : -1.0;
  return n;
}

// Axes spanning a face, in (s, t) order.
std::pair<int, int> face_axes(int face) {
  switch (face / 2) {
    case 0: return {1, 2};
    case 1: return {0, 2};
    default: return {0, 1};
  }
}

double smooth_noise(std::uint64_t seed, int face, double s, double t) {
  constexpr int kGrid = 6;
  const double gx = s * kGrid;
  const double gy = t * kGrid;
  const int x0 = static_cast<int>(std::floor(gx));
  const int y0 = static_cast<int>(std::floor(gy));
  const double ax = gx - x0;
  const double ay = gy - y0;
  auto at = [&](int x, int y) { return hash_noise(seed, face * 1000 + x, y); };
  const double top = (1 - ax) * at(x0, y0) + ax * at(x0 + 1, y0);
  const double bottom = (1 - ax) * at(x0, y0 + 1) + ax * at(x0 + 1, y0 + 1);
  return (1 - ay) * top + ay * bottom;
}

double pattern_value(const BoxTexture& tex, double s, double t) {
  constexpr double kTau = 2.0 * std::numbers::pi;
  switch (tex.pattern) {
    case 1: {
      const auto cs = static_cast<long>(std::floor(tex.frequency * s + tex.phase));
      const auto ct = static_cast<long>(std::floor(tex.frequency * t));
      return ((cs + ct) % 2 == 0) ? 1.0 : 0.0;
    }
    case 2: {
      const double r = std::hypot(s - 0.5, t - 0.5);
      return 0.5 + 0.5 * std::sin(kTau * (tex.frequency * r + tex.phase));
    }
    default: return 0.5 + 0.5 * std::sin(kTau * (tex.frequency * s + tex.phase));
  }
}

}  // namespace

double hash_noise(std::uint64_t seed, std::int64_t a, std::int64_t b, std::int64_t c) {
  std::uint64_t h = splitmix64(seed);
  h = splitmix64(h ^ static_cast<std::uint64_t>(a));
  h = splitmix64(h ^ static_cast<std::uint64_t>(b));
  h = splitmix64(h ^ static_cast<std::uint64_t>(c));
  return static_cast<double>(h >> 11) * 0x1.0p-53;
}

std::optional<SurfaceHit> cast_ray(const std::vector<BoxObject>& objects, const CameraIntrinsics& k,
                                   const CameraPose& pose, double u, double v) {
  const Vec3 dir_cam((u - k.cx) / k.fx, (v - k.cy) / k.fy, 1.0);
  const Vec3 origin = pose.translation();
  const Vec3 dir = pose.rotation() * dir_cam;

  std::optional<SurfaceHit> best;
  for (std::size_t i = 0; i < objects.size(); ++i) {
    const BoxObject& box = objects[i];
    const Mat3 r = box.world_from_object.topLeftCorner<3, 3>();
    const Vec3 o = r.transpose() * (origin - box.world_from_object.topRightCorner<3, 1>());
    const Vec3 d = r.transpose() * dir;

    double t_enter = -std::numeric_limits<double>::infinity();
    double t_exit = std::numeric_limits<double>::infinity();
    int enter_face = -1;
    bool miss = false;
    for (int axis = 0; axis < 3 && !miss; ++axis) {
      const double h = box.half_extents[axis];
      if (std::abs(d[axis]) < 1e-15) {
        if (o[axis] < -h || o[axis] > h) miss = true;
        continue;
      }
      double t0 = (-h - o[axis]) / d[axis];
      double t1 = (h - o[axis]) / d[axis];
      // Entering through the -axis face when moving in +axis direction.
      int face0 = axis * 2 + 1;
      if (t0 > t1) {
        std::swap(t0, t1);
        face0 = axis * 2;
      }
      if (t0 > t_enter) {
        t_enter = t0;
        enter_face = face0;
      }
      t_exit = std::min(t_exit, t1);
    }
    if (miss || t_enter > t_exit || t_enter <= 1e-9 || enter_face < 0) continue;
    if (best && t_enter >= best->depth) continue;

    SurfaceHit hit;
    hit.depth = t_enter;
    hit.object_index = static_cast<int>(i);
    hit.face = enter_face;
    hit.object_point = o + t_enter * d;
    hit.object_point[enter_face / 2] = (enter_face % 2 == 0 ? 1.0 : -1.0) * box.half_extents[enter_face / 2];
    hit.world_point = origin + t_enter * dir;
    const auto [sa, ta] = face_axes(enter_face);
    hit.s = std::clamp(0.5 * (hit.object_point[sa] / box.half_extents[sa] + 1.0), 0.0, 1.0);
    hit.t = std::clamp(0.5 * (hit.object_point[ta] / box.half_extents[ta] + 1.0), 0.0, 1.0);
    best = hit;
  }
  return best;
}

Vec3 shade_surface(const BoxObject& box, const SurfaceHit& hit) {
  const BoxTexture& tex = box.texture;
  const double p = pattern_value(tex, hit.s, hit.t);
  Vec3 color = (1.0 - 0.55 * p) * tex.base_color + 0.55 * p * tex.accent_color;
  color *= kFaceBrightness[hit.face] * (0.8 + 0.35 * hit.t);
  const double detail = smooth_noise(tex.detail_seed, hit.face, hit.s, hit.t) - 0.5;
  color.array() += tex.detail_amplitude * 2.0 * detail;

  static const Vec3 light = Vec3(0.3, 0.5, 0.8).normalized();
  const Vec3 n_world = box.world_from_object.topLeftCorner<3, 3>() * face_normal(hit.face);
  const double lambert = std::max(0.0, n_world.dot(light));
  return (color * (0.65 + 0.35 * lambert)).cwiseMax(0.0).cwiseMin(1.0);
}

RenderOutput render_scene(const std::vector<BoxObject>& objects, const CameraIntrinsics& k,
                          const CameraPose& pose, std::uint64_t background_seed) {
  k.validate();
  RenderOutput out{RgbImage(k.width, k.height, 3), DepthImage(k.width, k.height, 1, 0.0f),
                   LabelImage(k.width, k.height, 1, -1)};
  for (int v = 0; v < k.height; ++v) {
    for (int u = 0; u < k.width; ++u) {
      const auto hit = cast_ray(objects, k, pose, u, v);
      Vec3 color;
      if (hit) {
        color = shade_surface(objects[hit->object_index], *hit);
        out.depth(u, v) = static_cast<float>(std::round(hit->depth * 1000.0) / 1000.0);
        out.object_map(u, v) = hit->object_index;
      } else {
        const double g = 0.22 + 0.1 * (hash_noise(background_seed, u / 2, v / 2) - 0.5);
        color = Vec3(g, g, g * 1.05);
      }
      for (int c = 0; c < 3; ++c)
        out.rgb(u, v, c) = static_cast<std::uint8_t>(std::lround(std::clamp(color[c], 0.0, 1.0) * 255.0));
    }
  }
  return out;
}

std::vector<Landmark> box_landmarks(const BoxObject& box) {
  static constexpr std::array<std::array<double, 2>, 5> kFacePoints = {
      {{0.5, 0.5}, {0.25, 0.25}, {0.75, 0.25}, {0.25, 0.75}, {0.75, 0.75}}};
  static constexpr std::array<const char*, 6> kFaceNames = {"px", "nx", "py", "ny", "pz", "nz"};
  std::vector<Landmark> out;
  out.reserve(30);
  for (int face = 0; face < 6; ++face) {
    const auto [sa, ta] = face_axes(face);
    for (std::size_t k = 0; k < kFacePoints.size(); ++k) {
      Vec3 p = Vec3::Zero();
      p[face / 2] = (face % 2 == 0 ? 1.0 : -1.0) * box.half_extents[face / 2];
      p[sa] = (2.0 * kFacePoints[k][0] - 1.0) * box.half_extents[sa];
      p[ta] = (2.0 * kFacePoints[k][1] - 1.0) * box.half_extents[ta];
      out.push_back({std::string(kFaceNames[face]) + "_" + std::to_string(k), p});
    }
  }
  return out;
}

}  // namespace cadd
