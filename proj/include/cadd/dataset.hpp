#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <tuple>
#include <vector>

#include <nlohmann/json.hpp>

#include "cadd/camera.hpp"
#include "cadd/image.hpp"
#include "cadd/render.hpp"

namespace cadd {

/// Integer pixel index: column u, row v.
struct Pixel {
  int u = 0;
  int v = 0;
  bool operator==(const Pixel&) const = default;
  auto operator<=>(const Pixel&) const = default;
};

/// Real-valued pixel position (reprojection results).
struct PixelF {
  double u = 0.0;
  double v = 0.0;
  Pixel rounded() const;
};

struct Frame {
  RgbImage rgb;
  DepthImage depth;
  MaskImage mask;
  CameraPose pose;
  CameraIntrinsics intrinsics;
  int frame_id = 0;
  bool geometry_valid = true;  // false for composites: depth/pose carry no meaning

  int width() const { return rgb.width(); }
  int height() const { return rgb.height(); }
  std::size_t mask_count() const;
  void validate() const;
};

struct Sequence {
  std::string sequence_id;
  std::vector<Frame> frames;
  // Ground truth for evaluation only; training code never reads these.
  std::optional<std::string> true_instance_class;
  std::optional<std::string> true_category;
};

/// (sequence_id, frame_id, landmark_name) -> labeled pixel.
class KeypointAnnotations {
 public:
  using Key = std::tuple<std::string, int, std::string>;

  void set(const std::string& seq, int frame, const std::string& landmark, Pixel p);
  std::optional<Pixel> find(const std::string& seq, int frame, const std::string& landmark) const;
  /// Landmarks labeled in a frame, sorted by name.
  std::vector<std::pair<std::string, Pixel>> in_frame(const std::string& seq, int frame) const;
  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  const std::map<Key, Pixel>& entries() const { return entries_; }

  nlohmann::json to_json() const;
  static KeypointAnnotations from_json(const nlohmann::json& j);
  bool operator==(const KeypointAnnotations&) const = default;

 private:
  std::map<Key, Pixel> entries_;
};

struct CategorySpec {
  std::string name;
  Vec3 base_color = Vec3(0.5, 0.5, 0.5);       // category palette anchor
  Vec3 half_extents_min = Vec3(0.05, 0.05, 0.05);
  Vec3 half_extents_max = Vec3(0.05, 0.05, 0.05);
  int pattern = 0;
};

struct SceneSpec {
  std::vector<CategorySpec> categories;
  int instances_per_category = 4;
  int views_per_sequence = 30;
  int image_width = 64;
  int image_height = 64;
  double focal_length = 100.0;  // pixels, fx = fy
  double radius_min = 0.5;
  double radius_max = 0.6;
  double elevation_min = 0.45;  // radians above the ground plane
  double elevation_max = 1.1;
  double azimuth_min = 0.0;
  double azimuth_max = 6.283185307179586;
  double instance_hue_spread = 0.1;  // per-instance hue shift around the category color; keeps palettes disjoint
  std::uint64_t seed = 7;       // object library
  std::uint64_t view_seed = 11; // camera orbit samples

  /// Two categories (flat "books", upright "cans"), four instances each, thirty views.
  static SceneSpec desk_default();
  void validate() const;
  CameraIntrinsics intrinsics() const;

  nlohmann::json to_json() const;
  static SceneSpec from_json(const nlohmann::json& j);
};

struct Dataset {
  std::vector<Sequence> sequences;
  KeypointAnnotations keypoints;
  nlohmann::json metadata = nlohmann::json::object();  // generator seed and scene parameters
  // Object geometry per sequence, kept in memory by the generator for exactness checks.
  std::vector<BoxObject> objects;

  const Sequence& sequence(const std::string& id) const;
  std::optional<std::size_t> index_of(const std::string& id) const;
  std::size_t frame_count() const;
  void validate() const;
};

Dataset generate_synthetic_dataset(const SceneSpec& spec);

/// Box object for one instance, as placed by the generator.
BoxObject make_instance_object(const SceneSpec& spec, int category, int instance);

void save_dataset(const Dataset& d, const std::filesystem::path& root);
Dataset load_dataset(const std::filesystem::path& root);

/// Landmarks of `object` visible in a rendered view, with their rounded pixels.
std::vector<std::pair<std::string, Pixel>> visible_landmarks(const BoxObject& object,
                                                             const std::vector<BoxObject>& scene,
                                                             const CameraIntrinsics& k,
                                                             const CameraPose& pose);

struct Placement {
  std::size_t source = 0;  // index into the frame list
  int offset_u = 0;        // source pixel (u, v) lands at canvas (u + offset_u, v + offset_v)
  int offset_v = 0;
};

struct CompositeFrame {
  Frame frame;
  LabelImage provenance;  // placement's source index per object pixel, -1 elsewhere
};

/// Pastes the masked objects of `frames` onto `background` in placement order
/// (later placements overwrite earlier ones).
CompositeFrame composite_multi_object(const std::vector<const Frame*>& frames,
                                      const std::vector<Placement>& layout, const RgbImage& background);

}  // namespace cadd
