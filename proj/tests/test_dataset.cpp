#include <cmath>
#include <fstream>
#include <queue>

#include <gtest/gtest.h>

#include "cadd/dataset.hpp"
#include "cadd/png_io.hpp"
#include "test_util.hpp"

using namespace cadd;
namespace fs = std::filesystem;

namespace {

int connected_regions(const LabelImage& l) {
  Image<std::uint8_t> seen(l.width(), l.height(), 1, 0);
  int regions = 0;
  for (int v = 0; v < l.height(); ++v)
    for (int u = 0; u < l.width(); ++u) {
      if (l(u, v) < 0 || seen(u, v)) continue;
      ++regions;
      std::queue<Pixel> q;
      q.push({u, v});
      seen(u, v) = 1;
      while (!q.empty()) {
        const Pixel p = q.front();
        q.pop();
        const int d[4][2] = {{1, 0}, {-1, 0}, {0, 1}, {0, -1}};
        for (const auto& o : d) {
          const int x = p.u + o[0], y = p.v + o[1];
          if (l.in_bounds(x, y) && !seen(x, y) && l(x, y) == l(p.u, p.v)) {
            seen(x, y) = 1;
            q.push({x, y});
          }
        }
      }
    }
  return regions;
}

}  // namespace

TEST(Png, EightAndSixteenBitRoundTrip) {
  testutil::TempDir dir("png");
  RgbImage rgb(5, 3, 3);
  for (std::size_t i = 0; i < rgb.size(); ++i) rgb.values()[i] = static_cast<std::uint8_t>(i * 17);
  png::write8(dir.path() / "a.png", rgb);
  EXPECT_EQ(png::read8(dir.path() / "a.png"), rgb);
  Image<std::uint16_t> d(4, 4, 1);
  for (std::size_t i = 0; i < d.size(); ++i) d.values()[i] = static_cast<std::uint16_t>(i * 4099);
  png::write16(dir.path() / "d.png", d);
  EXPECT_EQ(png::read16(dir.path() / "d.png"), d);
  EXPECT_EQ(png::decode8(png::encode8(rgb)), rgb);
  EXPECT_THROW(png::read8(dir.path() / "missing.png"), std::runtime_error);
}

TEST(Generation, DeskScaleCounts) {
  const Dataset d = generate_synthetic_dataset(SceneSpec::desk_default());
  EXPECT_EQ(d.sequences.size(), 8u);
  EXPECT_EQ(d.frame_count(), 240u);
  for (const auto& s : d.sequences) {
    ASSERT_TRUE(s.true_category);
    ASSERT_TRUE(s.true_instance_class);
    for (const auto& f : s.frames) EXPECT_GT(f.mask_count(), 100u) << s.sequence_id << " frame " << f.frame_id;
  }
  EXPECT_NO_THROW(d.validate());
}

TEST(Generation, Deterministic) {
  const Dataset a = generate_synthetic_dataset(testutil::tiny_scene());
  const Dataset b = generate_synthetic_dataset(testutil::tiny_scene());
  ASSERT_EQ(a.sequences.size(), b.sequences.size());
  for (std::size_t i = 0; i < a.sequences.size(); ++i)
    for (std::size_t f = 0; f < a.sequences[i].frames.size(); ++f) {
      EXPECT_EQ(a.sequences[i].frames[f].rgb, b.sequences[i].frames[f].rgb);
      EXPECT_EQ(a.sequences[i].frames[f].depth, b.sequences[i].frames[f].depth);
    }
}

TEST(Generation, RejectsSingleViewAndDegenerateOrbit) {
  SceneSpec s = testutil::tiny_scene();
  s.views_per_sequence = 1;
  EXPECT_THROW(generate_synthetic_dataset(s), std::invalid_argument);
  s = testutil::tiny_scene();
  s.radius_max = s.radius_min;
  s.elevation_max = s.elevation_min;
  s.azimuth_max = s.azimuth_min;
  EXPECT_THROW(generate_synthetic_dataset(s), std::invalid_argument);
}

TEST(Generation, DepthIsMillimeterQuantized) {
  const Frame& f = testutil::tiny_dataset().sequences[0].frames[0];
  for (float z : f.depth.values()) EXPECT_NEAR(z * 1000.0, std::round(z * 1000.0), 1e-3);
}

TEST(SceneSpecJson, RoundTripAndUnknownKey) {
  const SceneSpec s = SceneSpec::desk_default();
  const SceneSpec back = SceneSpec::from_json(s.to_json());
  EXPECT_EQ(back.to_json(), s.to_json());
  nlohmann::json j = s.to_json();
  j["colour"] = 1;
  EXPECT_THROW(SceneSpec::from_json(j), std::invalid_argument);
}

TEST(Storage, RoundTripIsExact) {
  testutil::TempDir dir("ds");
  const Dataset& d = testutil::tiny_dataset();
  save_dataset(d, dir.path());
  EXPECT_TRUE(fs::exists(dir.path() / "dataset.json"));
  EXPECT_TRUE(fs::exists(dir.path() / "sequences" / d.sequences[0].sequence_id / "frames" / "0_rgb.png"));
  EXPECT_TRUE(fs::exists(dir.path() / "sequences" / d.sequences[0].sequence_id / "meta.json"));
  const Dataset back = load_dataset(dir.path());
  ASSERT_EQ(back.sequences.size(), d.sequences.size());
  for (std::size_t i = 0; i < d.sequences.size(); ++i) {
    const auto& s = d.sequences[i];
    const auto& t = back.sequences[i];
    EXPECT_EQ(s.sequence_id, t.sequence_id);
    EXPECT_EQ(s.true_category, t.true_category);
    ASSERT_EQ(s.frames.size(), t.frames.size());
    for (std::size_t f = 0; f < s.frames.size(); ++f) {
      EXPECT_EQ(s.frames[f].rgb, t.frames[f].rgb);
      EXPECT_EQ(s.frames[f].depth, t.frames[f].depth);
      EXPECT_EQ(s.frames[f].mask, t.frames[f].mask);
      EXPECT_TRUE(s.frames[f].pose.matrix().isApprox(t.frames[f].pose.matrix(), 1e-12));
      EXPECT_EQ(s.frames[f].intrinsics, t.frames[f].intrinsics);
    }
  }
  EXPECT_EQ(back.keypoints, d.keypoints);
}

TEST(Storage, DepthMillimeterIdentity) {
  testutil::TempDir dir("mm");
  Image<std::uint16_t> d(1, 1, 1);
  d(0, 0) = static_cast<std::uint16_t>(std::lround(1.234 * 1000.0));
  png::write16(dir.path() / "d.png", d);
  EXPECT_EQ(png::read16(dir.path() / "d.png")(0, 0), 1234);
  EXPECT_NEAR(png::read16(dir.path() / "d.png")(0, 0) / 1000.0, 1.234, 1e-12);
}

TEST(Storage, ErrorsNameTheProblem) {
  testutil::TempDir dir("bad");
  EXPECT_THROW(load_dataset(dir.path()), std::runtime_error);
  save_dataset(testutil::tiny_dataset(), dir.path());
  const auto& s = testutil::tiny_dataset().sequences[1];
  fs::remove(dir.path() / "sequences" / s.sequence_id / "frames" / "3_depth.png");
  try {
    load_dataset(dir.path());
    FAIL() << "expected failure";
  } catch (const std::exception& e) {
    EXPECT_NE(std::string(e.what()).find(s.sequence_id), std::string::npos) << e.what();
    EXPECT_NE(std::string(e.what()).find("3"), std::string::npos) << e.what();
  }
}

TEST(Keypoints, JsonRoundTrip) {
  KeypointAnnotations k;
  k.set("a", 0, "px_0", {3, 4});
  k.set("a", 1, "px_0", {5, 6});
  const auto back = KeypointAnnotations::from_json(k.to_json());
  EXPECT_EQ(back, k);
  EXPECT_EQ(back.find("a", 1, "px_0")->u, 5);
  EXPECT_FALSE(back.find("b", 1, "px_0"));
}

TEST(Keypoints, GeneratorLabelsLieOnMask) {
  const Dataset& d = testutil::tiny_dataset();
  EXPECT_FALSE(d.keypoints.empty());
  for (const auto& [key, p] : d.keypoints.entries()) {
    const Sequence& s = d.sequence(std::get<0>(key));
    const Frame& f = s.frames[static_cast<std::size_t>(std::get<1>(key))];
    EXPECT_TRUE(f.mask.in_bounds(p.u, p.v));
    int near = 0;
    for (int dv = -1; dv <= 1; ++dv)
      for (int du = -1; du <= 1; ++du) near += f.mask.in_bounds(p.u + du, p.v + dv) && f.mask(p.u + du, p.v + dv);
    EXPECT_GT(near, 0);
  }
}

TEST(Composite, IdentityPlacementKeepsMask) {
  const Frame& f = testutil::tiny_dataset().sequences[0].frames[0];
  const RgbImage bg(f.width(), f.height(), 3, 0);
  const CompositeFrame c = composite_multi_object({&f}, {{0, 0, 0}}, bg);
  EXPECT_EQ(c.frame.mask, f.mask);
  EXPECT_FALSE(c.frame.geometry_valid);
  for (int v = 0; v < f.height(); ++v)
    for (int u = 0; u < f.width(); ++u) EXPECT_EQ(c.provenance(u, v), f.mask(u, v) ? 0 : -1);
}

TEST(Composite, SideBySideHasTwoRegions) {
  const Dataset& d = testutil::tiny_dataset();
  const Frame& a = d.sequences[0].frames[0];
  const Frame& b = d.sequences.back().frames[0];
  const RgbImage bg(2 * a.width(), a.height(), 3, 0);
  const CompositeFrame c = composite_multi_object({&a, &b}, {{0, 0, 0}, {1, a.width(), 0}}, bg);
  EXPECT_EQ(connected_regions(c.provenance), 2);
  EXPECT_EQ(c.frame.mask_count(), a.mask_count() + b.mask_count());
}

TEST(Composite, LaterPlacementWinsAndFullOverlapFails) {
  const Dataset& d = testutil::tiny_dataset();
  const Frame& a = d.sequences[0].frames[0];
  const RgbImage bg(a.width(), a.height(), 3, 0);
  EXPECT_THROW(composite_multi_object({&a, &a}, {{0, 0, 0}, {1, 0, 0}}, bg), std::invalid_argument);
  const CompositeFrame c = composite_multi_object({&a, &a}, {{0, 0, 0}, {1, 3, 0}}, bg);
  std::size_t second = 0;
  for (auto p : c.provenance.values()) second += p == 1;
  EXPECT_EQ(second, a.mask_count());
  EXPECT_THROW(composite_multi_object({&a}, {{0, 1000, 0}}, bg), std::invalid_argument);
}
