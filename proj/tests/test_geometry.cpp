#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "cadd/geometry.hpp"
#include "cadd/render.hpp"
#include "test_util.hpp"

using namespace cadd;

namespace {

// Frame rendered from `objects`; the mask covers every object so only depth can
// reject occluded correspondences.
Frame render_frame(const std::vector<BoxObject>& objects, const CameraIntrinsics& k, const CameraPose& pose) {
  const RenderOutput r = render_scene(objects, k, pose, 1);
  Frame f;
  f.rgb = r.rgb;
  f.depth = r.depth;
  f.mask = MaskImage(k.width, k.height, 1, 0);
  for (int v = 0; v < k.height; ++v)
    for (int u = 0; u < k.width; ++u) f.mask(u, v) = r.object_map(u, v) >= 0;
  f.pose = pose;
  f.intrinsics = k;
  return f;
}

BoxObject box_at(const Vec3& center, const Vec3& half, int id) {
  BoxObject b;
  b.half_extents = half;
  b.world_from_object.block<3, 1>(0, 3) = center;
  b.object_id = id;
  return b;
}

// Exact reprojection using the renderer's unquantized surface depth.
std::optional<PixelF> exact_reprojection(const std::vector<BoxObject>& scene, const Frame& a, const Frame& b,
                                         const Pixel& p) {
  const auto hit = cast_ray(scene, a.intrinsics, a.pose, p.u, p.v);
  if (!hit) return std::nullopt;
  const Projection pr = project(hit->world_point, b.intrinsics, b.pose);
  return pr.pixel;
}

}  // namespace

TEST(Matches, SelfPairMatchesItself) {
  const Frame& f = testutil::tiny_dataset().sequences[0].frames[0];
  Rng rng(1);
  const MatchBatch m = find_matches(f, f, 200, 0.003, rng);
  ASSERT_FALSE(m.empty());
  for (std::size_t i = 0; i < m.size(); ++i) EXPECT_EQ(m.pixels_a[i], m.pixels_b[i]);
}

TEST(Matches, SampledWithoutReplacement) {
  const Dataset& d = testutil::tiny_dataset();
  Rng rng(2);
  const auto& s = d.sequences[0];
  const MatchBatch all = all_matches(s.frames[0], s.frames[1], 0.003);
  const MatchBatch some = find_matches(s.frames[0], s.frames[1], all.size() + 10, 0.003, rng);
  EXPECT_EQ(some.size(), all.size());
  std::vector<Pixel> px = some.pixels_a;
  std::sort(px.begin(), px.end());
  EXPECT_EQ(std::adjacent_find(px.begin(), px.end()), px.end());
}

TEST(Matches, ReprojectWithinHalfPixelOnSyntheticScenes) {
  const Dataset& d = testutil::tiny_dataset();
  std::size_t total = 0, within = 0;
  for (std::size_t si = 0; si < d.sequences.size(); ++si) {
    const auto& s = d.sequences[si];
    const std::vector<BoxObject> scene = {d.objects[si]};
    for (std::size_t fa = 0; fa + 1 < s.frames.size(); ++fa) {
      const Frame& a = s.frames[fa];
      const Frame& b = s.frames[fa + 1];
      const MatchBatch m = all_matches(a, b, 0.003);
      for (std::size_t i = 0; i < m.size(); ++i) {
        EXPECT_EQ(m.pixels_b[i], m.reprojected_b[i].rounded());
        const auto truth = exact_reprojection(scene, a, b, m.pixels_a[i]);
        ASSERT_TRUE(truth);
        ++total;
        within += std::hypot(truth->u - m.reprojected_b[i].u, truth->v - m.reprojected_b[i].v) <= 0.5;
      }
    }
  }
  ASSERT_GT(total, 1000u);
  EXPECT_GE(static_cast<double>(within) / static_cast<double>(total), 0.99);
}

TEST(Matches, OccludedPointsAreRejected) {
  const CameraIntrinsics k{200, 200, 31.5, 31.5, 64, 64};
  const BoxObject target = box_at(Vec3(0, 0, 0.05), Vec3(0.06, 0.06, 0.05), 0);
  const BoxObject occluder = box_at(Vec3(0.12, 0.10, 0.08), Vec3(0.03, 0.03, 0.08), 1);
  const std::vector<BoxObject> scene = {target, occluder};
  const Frame a = render_frame(scene, k, CameraPose::look_at(Vec3(-0.5, -0.1, 0.4), Vec3(0, 0, 0.05)));
  const Frame b = render_frame(scene, k, CameraPose::look_at(Vec3(0.55, 0.45, 0.35), Vec3(0, 0, 0.05)));

  // Pixels of a whose surface point is hidden in b.
  std::size_t occluded = 0;
  for (int v = 0; v < 64; ++v)
    for (int u = 0; u < 64; ++u) {
      const auto ha = cast_ray(scene, k, a.pose, u, v);
      if (!ha) continue;
      const Projection pb = project(ha->world_point, k, b.pose);
      const auto hb = cast_ray(scene, k, b.pose, pb.pixel.u, pb.pixel.v);
      if (hb && pb.depth - hb->depth > 0.01) ++occluded;
    }
  ASSERT_GT(occluded, 20u) << "scene does not exercise occlusion";

  const MatchBatch m = all_matches(a, b, 0.003);
  ASSERT_GT(m.size(), 100u);
  for (std::size_t i = 0; i < m.size(); ++i) {
    const auto ha = cast_ray(scene, k, a.pose, m.pixels_a[i].u, m.pixels_a[i].v);
    const auto hb = cast_ray(scene, k, b.pose, m.pixels_b[i].u, m.pixels_b[i].v);
    ASSERT_TRUE(ha && hb);
    EXPECT_LT((ha->world_point - hb->world_point).norm(), 0.01) << "occluded match at (" << m.pixels_a[i].u << ", "
                                                                 << m.pixels_a[i].v << ")";
  }
}

TEST(NonMatches, RespectExclusionRadius) {
  const auto& s = testutil::tiny_dataset().sequences[2];
  Rng rng(4);
  const MatchBatch n = sample_nonmatches(s.frames[0], s.frames[1], 2000, NonMatchMode::anywhere, 5.0, rng);
  EXPECT_GT(n.size(), 1900u);
  const std::vector<BoxObject> scene = {testutil::tiny_dataset().objects[2]};
  for (std::size_t i = 0; i < n.size(); ++i) {
    const auto truth = exact_reprojection(scene, s.frames[0], s.frames[1], n.pixels_a[i]);
    if (!truth) continue;
    EXPECT_GE(std::hypot(truth->u - n.pixels_b[i].u, truth->v - n.pixels_b[i].v), 5.0 - 0.05);
  }
}

TEST(NonMatches, OnObjectStaysOnMasksAcrossSequences) {
  const Dataset& d = testutil::tiny_dataset();
  Rng rng(5);
  const Frame& a = d.sequences[0].frames[0];
  const Frame& b = d.sequences.back().frames[3];
  const MatchBatch n = sample_nonmatches(a, b, 500, NonMatchMode::on_object, 0.0, rng);
  EXPECT_EQ(n.size(), 500u);
  EXPECT_FALSE(n.fell_back_to_anywhere);
  for (std::size_t i = 0; i < n.size(); ++i) {
    EXPECT_TRUE(a.mask(n.pixels_a[i].u, n.pixels_a[i].v));
    EXPECT_TRUE(b.mask(n.pixels_b[i].u, n.pixels_b[i].v));
  }
}

TEST(NonMatches, ZeroRadiusAnywhereAcceptsEverything) {
  const auto& s = testutil::tiny_dataset().sequences[0];
  Rng rng(6);
  EXPECT_EQ(sample_nonmatches(s.frames[0], s.frames[1], 777, NonMatchMode::anywhere, 0.0, rng).size(), 777u);
}

TEST(NonMatches, TinyMaskFallsBackToAnywhere) {
  Frame a = testutil::tiny_dataset().sequences[0].frames[0];
  std::fill(a.mask.values().begin(), a.mask.values().end(), std::uint8_t{0});
  a.mask(3, 3) = 1;
  Rng rng(7);
  const MatchBatch n = sample_nonmatches(a, a, 50, NonMatchMode::on_object, 0.0, rng);
  EXPECT_TRUE(n.fell_back_to_anywhere);
  EXPECT_EQ(n.size(), 50u);
}

TEST(Augmentation, IdentityLeavesImageUnchanged) {
  const Frame& f = testutil::tiny_dataset().sequences[0].frames[0];
  Rng rng(8);
  const AugmentedImage a = apply_augmentations(f, AugmentationSpec::identity(), rng);
  EXPECT_TRUE(a.remap.is_identity());
  EXPECT_EQ(a.rgb, f.rgb);
}

TEST(Augmentation, BackgroundOnlyKeepsObjectPixels) {
  const Frame& f = testutil::tiny_dataset().sequences[0].frames[0];
  AugmentationSpec spec;
  spec.background_randomization = true;
  Rng rng(9);
  const AugmentedImage a = apply_augmentations(f, spec, rng);
  std::size_t changed_bg = 0;
  for (int v = 0; v < f.height(); ++v)
    for (int u = 0; u < f.width(); ++u)
      for (int c = 0; c < 3; ++c) {
        if (f.mask(u, v)) EXPECT_EQ(a.rgb(u, v, c), f.rgb(u, v, c));
        else changed_bg += a.rgb(u, v, c) != f.rgb(u, v, c);
      }
  EXPECT_GT(changed_bg, 100u);
}

TEST(Augmentation, TransportedMatchesStayConsistent) {
  const auto& s = testutil::tiny_dataset().sequences[1];
  AugmentationSpec spec;
  spec.scale_min = 1.1;
  spec.scale_max = 1.3;
  Rng rng(10);
  MatchBatch m = find_matches(s.frames[0], s.frames[1], 300, 0.003, rng);
  const MatchBatch orig = m;
  const AugmentedImage aa = apply_augmentations(s.frames[0], spec, rng);
  const AugmentedImage ab = apply_augmentations(s.frames[1], spec, rng);
  transport_pairs(m, aa.remap, ab.remap, 64, 64);
  ASSERT_GT(m.size(), 50u);
  for (std::size_t i = 0; i < m.size(); ++i) {
    const PixelF back = aa.remap.inverse({static_cast<double>(m.pixels_a[i].u), static_cast<double>(m.pixels_a[i].v)});
    EXPECT_LT(std::hypot(back.u - std::round(back.u), back.v - std::round(back.v)), 1.0);
    EXPECT_GE(m.pixels_b[i].u, 0);
    EXPECT_LT(m.pixels_b[i].u, 64);
  }
  EXPECT_LE(m.size(), orig.size());
}

TEST(Augmentation, ImpossibleCropThrows) {
  const Frame& f = testutil::tiny_dataset().sequences[0].frames[0];
  AugmentationSpec spec;
  spec.scale_min = 8.0;
  spec.scale_max = 8.0;
  spec.min_visible_mask = 1.0;
  Rng rng(11);
  EXPECT_THROW(apply_augmentations(f, spec, rng), std::runtime_error);
}
