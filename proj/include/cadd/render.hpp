#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "cadd/camera.hpp"
#include "cadd/image.hpp"

namespace cadd {

/// Procedural surface texture of one box instance. Colors are linear RGB in [0, 1].
struct BoxTexture {
  Vec3 base_color = Vec3(0.5, 0.5, 0.5);
  Vec3 accent_color = Vec3(0.9, 0.9, 0.9);
  int pattern = 0;             // 0 stripes, 1 checker, 2 rings
  double frequency = 3.0;      // pattern cycles per face
  double phase = 0.0;
  double detail_amplitude = 0.05;
  std::uint64_t detail_seed = 0;
};

/// Textured oriented box. Faces are indexed +x, -x, +y, -y, +z, -z.
struct BoxObject {
  Vec3 half_extents = Vec3(0.05, 0.05, 0.05);
  Mat4 world_from_object = Mat4::Identity();
  BoxTexture texture;
  int object_id = 0;
};

struct SurfaceHit {
  double depth = 0.0;  // camera-frame z
  int object_index = -1;
  int face = -1;
  Vec3 object_point = Vec3::Zero();
  Vec3 world_point = Vec3::Zero();
  double s = 0.0;  // face-local coordinates in [0, 1]
  double t = 0.0;
};

/// Nearest intersection of a camera ray through real pixel (u, v) with the boxes.
std::optional<SurfaceHit> cast_ray(const std::vector<BoxObject>& objects, const CameraIntrinsics& k,
                                   const CameraPose& pose, double u, double v);

Vec3 shade_surface(const BoxObject& box, const SurfaceHit& hit);

struct RenderOutput {
  RgbImage rgb;
  DepthImage depth;        // millimeter-quantized meters, 0 where nothing was hit
  LabelImage object_map;   // index into the object list, -1 for background
};

/// Renders every pixel center by exact ray casting. The background is a fixed
/// low-contrast noise field derived from background_seed.
RenderOutput render_scene(const std::vector<BoxObject>& objects, const CameraIntrinsics& k,
                          const CameraPose& pose, std::uint64_t background_seed);

/// Canonical landmark names and object-frame positions of a box: five points per face.
struct Landmark {
  std::string name;
  Vec3 object_point;
};
std::vector<Landmark> box_landmarks(const BoxObject& box);

/// Deterministic hash-based noise in [0, 1).
double hash_noise(std::uint64_t seed, std::int64_t a, std::int64_t b, std::int64_t c = 0);

}  // namespace cadd
