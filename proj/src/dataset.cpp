#include "cadd/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <random>
#include <set>
#include <stdexcept>

#include "cadd/png_io.hpp"

namespace cadd {

namespace fs = std::filesystem;
using nlohmann::json;

Pixel PixelF::rounded() const {
  return {static_cast<int>(std::lround(u)), static_cast<int>(std::lround(v))};
}

std::size_t Frame::mask_count() const {
  return static_cast<std::size_t>(std::count_if(mask.values().begin(), mask.values().end(),
                                                [](std::uint8_t m) { return m != 0; }));
}

void Frame::validate() const {
  if (rgb.channels() != 3) throw std::invalid_argument("Frame: rgb must have 3 channels");
  if (!depth.same_shape(rgb) || !mask.same_shape(rgb))
    throw std::invalid_argument("Frame " + std::to_string(frame_id) + ": raster sizes differ");
  if (intrinsics.width != rgb.width() || intrinsics.height != rgb.height())
    throw std::invalid_argument("Frame " + std::to_string(frame_id) + ": intrinsics size mismatch");
  intrinsics.validate();
}

// ---------------------------------------------------------------------------
// Keypoints

void KeypointAnnotations::set(const std::string& seq, int frame, const std::string& landmark, Pixel p) {
  entries_[{seq, frame, landmark}] = p;
}

std::optional<Pixel> KeypointAnnotations::find(const std::string& seq, int frame,
                                               const std::string& landmark) const {
  const auto it = entries_.find({seq, frame, landmark});
  if (it == entries_.end()) return std::nullopt;
  return it->second;
}

std::vector<std::pair<std::string, Pixel>> KeypointAnnotations::in_frame(const std::string& seq,
                                                                         int frame) const {
  std::vector<std::pair<std::string, Pixel>> out;
  for (auto it = entries_.lower_bound({seq, frame, ""}); it != entries_.end(); ++it) {
    const auto& [s, f, name] = it->first;
    if (s != seq || f != frame) break;
    out.emplace_back(name, it->second);
  }
  return out;
}

json KeypointAnnotations::to_json() const {
  json arr = json::array();
  for (const auto& [key, p] : entries_) {
    const auto& [seq, frame, name] = key;
    arr.push_back({{"sequence_id", seq}, {"frame_id", frame}, {"landmark", name}, {"u", p.u}, {"v", p.v}});
  }
  return {{"keypoints", arr}};
}

KeypointAnnotations KeypointAnnotations::from_json(const json& j) {
  KeypointAnnotations k;
  for (const auto& e : j.at("keypoints"))
    k.set(e.at("sequence_id").get<std::string>(), e.at("frame_id").get<int>(),
          e.at("landmark").get<std::string>(), {e.at("u").get<int>(), e.at("v").get<int>()});
  return k;
}

// ---------------------------------------------------------------------------
// Scene specification

namespace {

json vec_json(const Vec3& v) { return json::array({v[0], v[1], v[2]}); }
Vec3 vec_from(const json& j) { return {j.at(0).get<double>(), j.at(1).get<double>(), j.at(2).get<double>()}; }

json mat_json(const Mat4& m) {
  json arr = json::array();
  for (int r = 0; r < 4; ++r)
    for (int c = 0; c < 4; ++c) arr.push_back(m(r, c));
  return arr;
}

Mat4 mat_from(const json& j) {
  if (!j.is_array() || j.size() != 16) throw std::runtime_error("expected 16 row-major matrix entries");
  Mat4 m;
  for (int r = 0; r < 4; ++r)
    for (int c = 0; c < 4; ++c) m(r, c) = j.at(r * 4 + c).get<double>();
  return m;
}

Vec3 rgb_to_hsv(const Vec3& c) {
  const double mx = c.maxCoeff();
  const double mn = c.minCoeff();
  const double d = mx - mn;
  double h = 0.0;
  if (d > 1e-12) {
    if (mx == c[0]) h = std::fmod((c[1] - c[2]) / d, 6.0);
    else if (mx == c[1]) h = (c[2] - c[0]) / d + 2.0;
    else h = (c[0] - c[1]) / d + 4.0;
    h /= 6.0;
    if (h < 0) h += 1.0;
  }
  return {h, mx > 0 ? d / mx : 0.0, mx};
}

Vec3 hsv_to_rgb(const Vec3& hsv) {
  const double h = (hsv[0] - std::floor(hsv[0])) * 6.0;
  const double s = hsv[1];
  const double v = hsv[2];
  const int i = static_cast<int>(std::floor(h)) % 6;
  const double f = h - std::floor(h);
  const double p = v * (1 - s);
  const double q = v * (1 - s * f);
  const double t = v * (1 - s * (1 - f));
  switch (i) {
    case 0: return {v, t, p};
    case 1: return {q, v, p};
    case 2: return {p, v, t};
    case 3: return {p, q, v};
    case 4: return {t, p, v};
    default: return {v, p, q};
  }
}

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
  return static_cast<std::uint64_t>(hash_noise(a, static_cast<std::int64_t>(b), 0x5eed) * 0x1.0p53) ^ (a << 1);
}

}  // namespace

SceneSpec SceneSpec::desk_default() {
  SceneSpec s;
  CategorySpec books;
  books.name = "books";
  books.base_color = Vec3(0.78, 0.28, 0.20);
  books.half_extents_min = Vec3(0.075, 0.055, 0.022);
  books.half_extents_max = Vec3(0.095, 0.070, 0.030);
  books.pattern = 0;
  CategorySpec cans;
  cans.name = "cans";
  cans.base_color = Vec3(0.20, 0.38, 0.80);
  cans.half_extents_min = Vec3(0.036, 0.036, 0.065);
  cans.half_extents_max = Vec3(0.045, 0.045, 0.080);
  cans.pattern = 2;
  s.categories = {books, cans};
  return s;
}

void SceneSpec::validate() const {
  if (categories.empty()) throw std::invalid_argument("SceneSpec: at least one category required");
  if (instances_per_category < 1) throw std::invalid_argument("SceneSpec: at least one instance per category");
  if (views_per_sequence < 2) throw std::invalid_argument("SceneSpec: number of views must be at least 2");
  if (image_width < 8 || image_height < 8) throw std::invalid_argument("SceneSpec: image too small");
  if (focal_length <= 0) throw std::invalid_argument("SceneSpec: focal length must be positive");
  if (radius_min <= 0 || radius_max < radius_min || elevation_max < elevation_min ||
      azimuth_max < azimuth_min)
    throw std::invalid_argument("SceneSpec: invalid camera orbit ranges");
  if (radius_max == radius_min && elevation_max == elevation_min && azimuth_max == azimuth_min)
    throw std::invalid_argument("SceneSpec: degenerate camera orbit, all views would be identical");
  std::set<std::string> names;
  for (const auto& c : categories) {
    if (c.name.empty() || !names.insert(c.name).second)
      throw std::invalid_argument("SceneSpec: category names must be unique and non-empty");
    if ((c.half_extents_min.array() <= 0).any() || (c.half_extents_max.array() < c.half_extents_min.array()).any())
      throw std::invalid_argument("SceneSpec: invalid extents for category " + c.name);
  }
}

CameraIntrinsics SceneSpec::intrinsics() const {
  return {focal_length, focal_length, (image_width - 1) / 2.0, (image_height - 1) / 2.0, image_width, image_height};
}

json SceneSpec::to_json() const {
  json cats = json::array();
  for (const auto& c : categories)
    cats.push_back({{"name", c.name},
                    {"base_color", vec_json(c.base_color)},
                    {"half_extents_min", vec_json(c.half_extents_min)},
                    {"half_extents_max", vec_json(c.half_extents_max)},
                    {"pattern", c.pattern}});
  return {{"categories", cats},
          {"instances_per_category", instances_per_category},
          {"views_per_sequence", views_per_sequence},
          {"image_width", image_width},
          {"image_height", image_height},
          {"focal_length", focal_length},
          {"radius_min", radius_min},
          {"radius_max", radius_max},
          {"elevation_min", elevation_min},
          {"elevation_max", elevation_max},
          {"azimuth_min", azimuth_min},
          {"azimuth_max", azimuth_max},
          {"instance_hue_spread", instance_hue_spread},
          {"seed", seed},
          {"view_seed", view_seed}};
}

SceneSpec SceneSpec::from_json(const json& j) {
  static const std::set<std::string> kKeys = {
      "categories", "instances_per_category", "views_per_sequence", "image_width", "image_height",
      "focal_length", "radius_min", "radius_max", "elevation_min", "elevation_max", "azimuth_min",
      "azimuth_max", "instance_hue_spread", "seed", "view_seed"};
  for (const auto& [key, _] : j.items())
    if (!kKeys.contains(key)) throw std::invalid_argument("scene: unknown key '" + key + "'");
  SceneSpec s = desk_default();
  if (j.contains("categories")) {
    s.categories.clear();
    for (const auto& c : j.at("categories")) {
      CategorySpec cat;
      cat.name = c.at("name").get<std::string>();
      cat.base_color = vec_from(c.at("base_color"));
      cat.half_extents_min = vec_from(c.at("half_extents_min"));
      cat.half_extents_max = vec_from(c.at("half_extents_max"));
      cat.pattern = c.value("pattern", 0);
      s.categories.push_back(cat);
    }
  }
  s.instances_per_category = j.value("instances_per_category", s.instances_per_category);
  s.views_per_sequence = j.value("views_per_sequence", s.views_per_sequence);
  s.image_width = j.value("image_width", s.image_width);
  s.image_height = j.value("image_height", s.image_height);
  s.focal_length = j.value("focal_length", s.focal_length);
  s.radius_min = j.value("radius_min", s.radius_min);
  s.radius_max = j.value("radius_max", s.radius_max);
  s.elevation_min = j.value("elevation_min", s.elevation_min);
  s.elevation_max = j.value("elevation_max", s.elevation_max);
  s.azimuth_min = j.value("azimuth_min", s.azimuth_min);
  s.azimuth_max = j.value("azimuth_max", s.azimuth_max);
  s.instance_hue_spread = j.value("instance_hue_spread", s.instance_hue_spread);
  s.seed = j.value("seed", s.seed);
  s.view_seed = j.value("view_seed", s.view_seed);
  return s;
}

// ---------------------------------------------------------------------------
// Generator

BoxObject make_instance_object(const SceneSpec& spec, int category, int instance) {
  const CategorySpec& cat = spec.categories.at(static_cast<std::size_t>(category));
  std::mt19937_64 rng(mix_seed(spec.seed, static_cast<std::uint64_t>(category) * 1000 + instance));
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  BoxObject box;
  for (int a = 0; a < 3; ++a)
    box.half_extents[a] = cat.half_extents_min[a] + unit(rng) * (cat.half_extents_max[a] - cat.half_extents_min[a]);
  box.world_from_object = Mat4::Identity();
  box.world_from_object(2, 3) = box.half_extents[2];  // resting on the ground plane

  // Instances spread evenly around the category hue so they stay mutually distinct.
  Vec3 hsv = rgb_to_hsv(cat.base_color);
  const int n = spec.instances_per_category;
  const double slot = n > 1 ? static_cast<double>(instance) / (n - 1) - 0.5 : 0.0;
  hsv[0] += spec.instance_hue_spread * slot + 0.02 * (unit(rng) - 0.5);
  hsv[1] = std::clamp(hsv[1] * (0.85 + 0.3 * unit(rng)), 0.0, 1.0);
  hsv[2] = std::clamp(hsv[2] * (0.85 + 0.3 * unit(rng)), 0.0, 1.0);
  box.texture.base_color = hsv_to_rgb(hsv);

  static const std::array<Vec3, 4> kAccents = {Vec3(0.95, 0.95, 0.90), Vec3(0.10, 0.10, 0.12),
                                               Vec3(0.95, 0.85, 0.25), Vec3(0.30, 0.80, 0.35)};
  box.texture.accent_color = kAccents[static_cast<std::size_t>(instance) % kAccents.size()];
  box.texture.pattern = cat.pattern;
  box.texture.frequency = 1.5 + 2.0 * unit(rng);
  box.texture.phase = unit(rng);
  box.texture.detail_amplitude = 0.04;
  box.texture.detail_seed = rng();
  box.object_id = category * 1000 + instance;
  return box;
}

std::vector<std::pair<std::string, Pixel>> visible_landmarks(const BoxObject& object,
                                                             const std::vector<BoxObject>& scene,
                                                             const CameraIntrinsics& k,
                                                             const CameraPose& pose) {
  std::vector<std::pair<std::string, Pixel>> out;
  const Mat3 r = object.world_from_object.topLeftCorner<3, 3>();
  const Vec3 t = object.world_from_object.topRightCorner<3, 1>();
  int object_index = -1;
  for (std::size_t i = 0; i < scene.size(); ++i)
    if (&scene[i] == &object || scene[i].object_id == object.object_id) object_index = static_cast<int>(i);
  for (const auto& lm : box_landmarks(object)) {
    const Vec3 cam = pose.to_camera(r * lm.object_point + t);
    if (cam.z() <= 1e-6) continue;
    const double u = k.fx * cam.x() / cam.z() + k.cx;
    const double v = k.fy * cam.y() / cam.z() + k.cy;
    const Pixel p = PixelF{u, v}.rounded();
    if (p.u < 0 || p.v < 0 || p.u >= k.width || p.v >= k.height) continue;
    const auto hit = cast_ray(scene, k, pose, u, v);
    if (!hit || hit->object_index != object_index) continue;
    if (std::abs(hit->depth - cam.z()) > 1e-4) continue;  // self-occluded
    const auto center_hit = cast_ray(scene, k, pose, p.u, p.v);
    if (!center_hit || center_hit->object_index != object_index) continue;
    out.emplace_back(lm.name, p);
  }
  return out;
}

Dataset generate_synthetic_dataset(const SceneSpec& spec) {
  spec.validate();
  const CameraIntrinsics k = spec.intrinsics();
  Dataset d;
  d.metadata = {{"generator", "synthetic-boxes"}, {"seed", spec.seed}, {"view_seed", spec.view_seed},
                {"scene", spec.to_json()}};
  for (int c = 0; c < static_cast<int>(spec.categories.size()); ++c) {
    for (int i = 0; i < spec.instances_per_category; ++i) {
      const BoxObject box = make_instance_object(spec, c, i);
      const std::vector<BoxObject> scene = {box};
      Sequence seq;
      char id[64];
      std::snprintf(id, sizeof(id), "%s_%02d", spec.categories[static_cast<std::size_t>(c)].name.c_str(), i);
      seq.sequence_id = id;
      seq.true_instance_class = seq.sequence_id;
      seq.true_category = spec.categories[static_cast<std::size_t>(c)].name;

      std::mt19937_64 view_rng(mix_seed(spec.view_seed, static_cast<std::uint64_t>(c) * 1000 + i));
      std::uniform_real_distribution<double> unit(0.0, 1.0);
      const Vec3 center = box.world_from_object.topRightCorner<3, 1>();
      for (int t = 0; t < spec.views_per_sequence; ++t) {
        const double az = spec.azimuth_min + unit(view_rng) * (spec.azimuth_max - spec.azimuth_min);
        const double el = spec.elevation_min + unit(view_rng) * (spec.elevation_max - spec.elevation_min);
        const double radius = spec.radius_min + unit(view_rng) * (spec.radius_max - spec.radius_min);
        const Vec3 eye = center + radius * Vec3(std::cos(el) * std::cos(az), std::cos(el) * std::sin(az), std::sin(el));
        const CameraPose pose = CameraPose::look_at(eye, center);
        const auto bg_seed = mix_seed(spec.view_seed ^ 0xB6B6ULL, static_cast<std::uint64_t>(c * 100000 + i * 1000 + t));
        RenderOutput r = render_scene(scene, k, pose, bg_seed);

        Frame f;
        f.rgb = std::move(r.rgb);
        f.depth = std::move(r.depth);
        f.mask = MaskImage(k.width, k.height, 1, 0);
        for (std::size_t p = 0; p < f.mask.size(); ++p) f.mask.values()[p] = r.object_map.values()[p] == 0 ? 1 : 0;
        f.pose = pose;
        f.intrinsics = k;
        f.frame_id = t;
        for (const auto& [name, px] : visible_landmarks(box, scene, k, pose))
          d.keypoints.set(seq.sequence_id, t, name, px);
        seq.frames.push_back(std::move(f));
      }
      d.sequences.push_back(std::move(seq));
      d.objects.push_back(box);
    }
  }
  return d;
}

// ---------------------------------------------------------------------------
// Dataset accessors

const Sequence& Dataset::sequence(const std::string& id) const {
  const auto idx = index_of(id);
  if (!idx) throw std::out_of_range("Dataset: unknown sequence '" + id + "'");
  return sequences[*idx];
}

std::optional<std::size_t> Dataset::index_of(const std::string& id) const {
  for (std::size_t i = 0; i < sequences.size(); ++i)
    if (sequences[i].sequence_id == id) return i;
  return std::nullopt;
}

std::size_t Dataset::frame_count() const {
  std::size_t n = 0;
  for (const auto& s : sequences) n += s.frames.size();
  return n;
}

void Dataset::validate() const {
  std::set<std::string> ids;
  for (const auto& s : sequences) {
    if (!ids.insert(s.sequence_id).second)
      throw std::invalid_argument("Dataset: duplicate sequence id '" + s.sequence_id + "'");
    if (s.frames.size() < 2)
      throw std::invalid_argument("Dataset: sequence '" + s.sequence_id + "' has fewer than 2 frames");
    for (const auto& f : s.frames) f.validate();
  }
}

// ---------------------------------------------------------------------------
// Persistence

namespace {

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw std::runtime_error("corrupt JSON in " + path.string() + ": " + e.what());
  }
}

void write_json(const fs::path& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

json box_json(const BoxObject& b) {
  return {{"half_extents", vec_json(b.half_extents)},
          {"world_from_object", mat_json(b.world_from_object)},
          {"object_id", b.object_id},
          {"texture",
           {{"base_color", vec_json(b.texture.base_color)},
            {"accent_color", vec_json(b.texture.accent_color)},
            {"pattern", b.texture.pattern},
            {"frequency", b.texture.frequency},
            {"phase", b.texture.phase},
            {"detail_amplitude", b.texture.detail_amplitude},
            {"detail_seed", b.texture.detail_seed}}}};
}

BoxObject box_from(const json& j) {
  BoxObject b;
  b.half_extents = vec_from(j.at("half_extents"));
  b.world_from_object = mat_from(j.at("world_from_object"));
  b.object_id = j.at("object_id").get<int>();
  const auto& t = j.at("texture");
  b.texture.base_color = vec_from(t.at("base_color"));
  b.texture.accent_color = vec_from(t.at("accent_color"));
  b.texture.pattern = t.at("pattern").get<int>();
  b.texture.frequency = t.at("frequency").get<double>();
  b.texture.phase = t.at("phase").get<double>();
  b.texture.detail_amplitude = t.at("detail_amplitude").get<double>();
  b.texture.detail_seed = t.at("detail_seed").get<std::uint64_t>();
  return b;
}

}  // namespace

void save_dataset(const Dataset& d, const fs::path& root) {
  fs::create_directories(root / "sequences");
  json index = json::array();
  for (std::size_t si = 0; si < d.sequences.size(); ++si) {
    const Sequence& s = d.sequences[si];
    index.push_back(s.sequence_id);
    const fs::path dir = root / "sequences" / s.sequence_id;
    fs::create_directories(dir / "frames");
    json frame_ids = json::array();
    for (const Frame& f : s.frames) {
      const std::string stem = std::to_string(f.frame_id);
      png::write8(dir / "frames" / (stem + "_rgb.png"), f.rgb);
      Image<std::uint16_t> mm(f.width(), f.height(), 1, 0);
      for (std::size_t p = 0; p < mm.size(); ++p) {
        const double z = std::round(static_cast<double>(f.depth.values()[p]) * 1000.0);
        if (z < 0 || z > 65535) throw std::runtime_error("depth out of 16-bit millimeter range in frame " + stem);
        mm.values()[p] = static_cast<std::uint16_t>(z);
      }
      png::write16(dir / "frames" / (stem + "_depth.png"), mm);
      MaskImage m8(f.width(), f.height(), 1, 0);
      for (std::size_t p = 0; p < m8.size(); ++p) m8.values()[p] = f.mask.values()[p] ? 255 : 0;
      png::write8(dir / "frames" / (stem + "_mask.png"), m8);
      write_json(dir / "frames" / (stem + "_pose.json"),
                 {{"world_from_camera", mat_json(f.pose.matrix())}, {"geometry_valid", f.geometry_valid}});
      frame_ids.push_back(f.frame_id);
    }
    const CameraIntrinsics& k = s.frames.front().intrinsics;
    json meta = {{"sequence_id", s.sequence_id},
                 {"intrinsics", {{"fx", k.fx}, {"fy", k.fy}, {"cx", k.cx}, {"cy", k.cy},
                                 {"width", k.width}, {"height", k.height}}},
                 {"frame_ids", frame_ids}};
    if (s.true_instance_class) meta["true_instance_class"] = *s.true_instance_class;
    if (s.true_category) meta["true_category"] = *s.true_category;
    if (si < d.objects.size()) meta["object"] = box_json(d.objects[si]);
    write_json(dir / "meta.json", meta);
  }
  write_json(root / "dataset.json", {{"version", 1}, {"sequences", index}, {"seed", d.metadata.value("seed", json())},
                                     {"metadata", d.metadata}});
  write_json(root / "keypoints.json", d.keypoints.to_json());
}

Dataset load_dataset(const fs::path& root) {
  if (!fs::exists(root / "dataset.json"))
    throw std::runtime_error("load_dataset: no dataset.json under '" + root.string() + "'");
  const json index = read_json(root / "dataset.json");
  Dataset d;
  d.metadata = index.value("metadata", json::object());
  bool all_objects = true;
  std::vector<BoxObject> objects;
  for (const auto& id_json : index.at("sequences")) {
    const std::string id = id_json.get<std::string>();
    const fs::path dir = root / "sequences" / id;
    const json meta = read_json(dir / "meta.json");
    Sequence s;
    s.sequence_id = id;
    if (meta.contains("true_instance_class")) s.true_instance_class = meta["true_instance_class"].get<std::string>();
    if (meta.contains("true_category")) s.true_category = meta["true_category"].get<std::string>();
    const auto& kj = meta.at("intrinsics");
    const CameraIntrinsics k{kj.at("fx").get<double>(), kj.at("fy").get<double>(), kj.at("cx").get<double>(),
                             kj.at("cy").get<double>(), kj.at("width").get<int>(), kj.at("height").get<int>()};
    for (const auto& fid : meta.at("frame_ids")) {
      const int t = fid.get<int>();
      const std::string stem = std::to_string(t);
      const std::string where = "sequence '" + id + "' frame " + stem;
      try {
        Frame f;
        f.frame_id = t;
        f.intrinsics = k;
        f.rgb = png::read8(dir / "frames" / (stem + "_rgb.png"));
        if (f.rgb.channels() != 3) throw std::runtime_error("rgb image is not 3-channel");
        const auto mm = png::read16(dir / "frames" / (stem + "_depth.png"));
        f.depth = DepthImage(mm.width(), mm.height(), 1, 0.0f);
        for (std::size_t p = 0; p < mm.size(); ++p)
          f.depth.values()[p] = static_cast<float>(mm.values()[p] / 1000.0);
        auto m8 = png::read8(dir / "frames" / (stem + "_mask.png"));
        f.mask = MaskImage(m8.width(), m8.height(), 1, 0);
        for (std::size_t p = 0; p < m8.pixel_count(); ++p)
          f.mask.values()[p] = m8.values()[p * static_cast<std::size_t>(m8.channels())] ? 1 : 0;
        const json pose = read_json(dir / "frames" / (stem + "_pose.json"));
        f.pose = CameraPose(mat_from(pose.at("world_from_camera")));
        f.geometry_valid = pose.value("geometry_valid", true);
        f.validate();
        s.frames.push_back(std::move(f));
      } catch (const std::exception& e) {
        throw std::runtime_error("load_dataset: " + where + ": " + e.what());
      }
    }
    if (meta.contains("object")) objects.push_back(box_from(meta["object"]));
    else all_objects = false;
    d.sequences.push_back(std::move(s));
  }
  if (all_objects) d.objects = std::move(objects);
  if (fs::exists(root / "keypoints.json")) d.keypoints = KeypointAnnotations::from_json(read_json(root / "keypoints.json"));
  d.validate();
  return d;
}

// ---------------------------------------------------------------------------
// Composites

CompositeFrame composite_multi_object(const std::vector<const Frame*>& frames,
                                      const std::vector<Placement>& layout, const RgbImage& background) {
  if (frames.empty() || layout.empty()) throw std::invalid_argument("composite: need at least one source and placement");
  if (background.channels() != 3 || background.empty())
    throw std::invalid_argument("composite: background must be a non-empty RGB image");
  const int w = background.width();
  const int h = background.height();
  CompositeFrame out;
  out.frame.rgb = background;
  out.frame.mask = MaskImage(w, h, 1, 0);
  out.frame.depth = DepthImage(w, h, 1, 0.0f);
  out.frame.geometry_valid = false;
  const CameraIntrinsics& src_k = frames.front()->intrinsics;
  out.frame.intrinsics = {src_k.fx, src_k.fy, (w - 1) / 2.0, (h - 1) / 2.0, w, h};
  out.provenance = LabelImage(w, h, 1, -1);

  for (std::size_t pi = 0; pi < layout.size(); ++pi) {
    const Placement& pl = layout[pi];
    if (pl.source >= frames.size()) throw std::invalid_argument("composite: placement refers to missing source");
    const Frame& src = *frames[pl.source];
    for (int v = 0; v < src.height(); ++v) {
      for (int u = 0; u < src.width(); ++u) {
        if (!src.mask(u, v)) continue;
        const int cu = u + pl.offset_u;
        const int cv = v + pl.offset_v;
        if (!out.provenance.in_bounds(cu, cv))
          throw std::invalid_argument("composite: placement " + std::to_string(pi) + " leaves the canvas");
        for (int c = 0; c < 3; ++c) out.frame.rgb(cu, cv, c) = src.rgb(u, v, c);
        out.frame.mask(cu, cv) = 1;
        out.provenance(cu, cv) = static_cast<std::int32_t>(pi);
      }
    }
  }
  std::vector<std::size_t> visible(layout.size(), 0);
  for (const auto p : out.provenance.values())
    if (p >= 0) ++visible[static_cast<std::size_t>(p)];
  for (std::size_t pi = 0; pi < layout.size(); ++pi)
    if (visible[pi] == 0)
      throw std::invalid_argument("composite: placement " + std::to_string(pi) + " is fully covered by later placements");
  // Provenance is recorded per placement; report the source frame index.
  for (auto& p : out.provenance.values())
    if (p >= 0) p = static_cast<std::int32_t>(layout[static_cast<std::size_t>(p)].source);
  return out;
}

}  // namespace cadd
