#include <cmath>
#include <set>
#include <sstream>
#include <array>

#include <gtest/gtest.h>

#include "cadd/evaluation.hpp"
#include "test_util.hpp"

using namespace cadd;

namespace {

DescriptorImage random_descriptors(std::mt19937_64& rng, int w, int h, int d) {
  std::normal_distribution<float> n(0.0f, 1.0f);
  DescriptorImage out;
  out.values = Image<float>(w, h, d);
  for (float& v : out.values.values()) v = n(rng);
  return out;
}

// Descriptor = pixel color.
DescriptorImage color_descriptors(const RgbImage& rgb) {
  DescriptorImage d;
  d.values = Image<float>(rgb.width(), rgb.height(), 3);
  for (std::size_t i = 0; i < rgb.size(); ++i) d.values.values()[i] = rgb.values()[i];
  return d;
}

Frame solid_frame(int w, int h, std::array<std::uint8_t, 3> color, int u0, int u1) {
  Frame f;
  f.rgb = RgbImage(w, h, 3, 0);
  f.mask = MaskImage(w, h, 1, 0);
  f.depth = DepthImage(w, h, 1, 0.0f);
  f.intrinsics = {40, 40, w / 2.0 - 0.5, h / 2.0 - 0.5, w, h};
  f.geometry_valid = false;
  for (int v = 2; v < h - 2; ++v)
    for (int u = u0; u <= u1; ++u) {
      for (int c = 0; c < 3; ++c) f.rgb(u, v, c) = color[static_cast<std::size_t>(c)];
      f.mask(u, v) = 1;
    }
  return f;
}

}  // namespace

TEST(BestMatch, AgreesWithBruteForce) {
  std::mt19937_64 rng(1);
  for (int t = 0; t < 20; ++t) {
    const DescriptorImage d = random_descriptors(rng, 13, 9, 4);
    const Eigen::VectorXd q = testutil::random_matrix(rng, 4, 1);
    double best = 1e300;
    Pixel arg;
    for (int v = 0; v < 9; ++v)
      for (int u = 0; u < 13; ++u) {
        const double dist = (descriptor_at(d, {u, v}) - q).norm();
        if (dist < best) {
          best = dist;
          arg = {u, v};
        }
      }
    const MatchResult m = best_match(q, d);
    EXPECT_EQ(m.pixel, arg);
    EXPECT_NEAR(m.distance, best, 1e-9);
    const Image<float> heat = distance_heatmap(q, d);
    EXPECT_NEAR(heat(arg.u, arg.v), best, 1e-5);
    EXPECT_EQ(*std::min_element(heat.values().begin(), heat.values().end()), heat(arg.u, arg.v));
  }
}

TEST(BestMatch, TiesMaskAndErrors) {
  DescriptorImage d;
  d.values = Image<float>(4, 3, 2, 0.0f);
  EXPECT_EQ(best_match(Eigen::Vector2d(0, 0), d).pixel, (Pixel{0, 0}));
  MaskImage mask(4, 3, 1, 0);
  mask(2, 1) = 1;
  mask(3, 2) = 1;
  EXPECT_EQ(best_match(Eigen::Vector2d(0, 0), d, &mask).pixel, (Pixel{2, 1}));
  const MaskImage empty(4, 3, 1, 0);
  EXPECT_THROW(best_match(Eigen::Vector2d(0, 0), d, &empty), std::invalid_argument);
  EXPECT_THROW(best_match(Eigen::Vector3d(0, 0, 0), d), std::invalid_argument);
}

TEST(Cdf, HandValues) {
  CdfResult r;
  r.errors = {0.05, 0.1, 0.3};
  EXPECT_NEAR(r.fraction_within(0.1), 2.0 / 3.0, 1e-12);
  EXPECT_NEAR(r.fraction_within(0.0), 0.0, 1e-12);
  // (0.15 + 0.1 + 0) / (0.2 * 3)
  EXPECT_NEAR(r.auc(0.2), 0.25 / 0.6, 1e-12);
  EXPECT_EQ(CdfResult{}.auc(), 0.0);
  const auto j = r.to_json(0.2);
  EXPECT_EQ(j.at("count"), 3);
  EXPECT_EQ(j.at("curve").size(), 21u);
}

TEST(Cdf, AucEqualsIntegralOfCurve) {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(0.0, 0.4);
  CdfResult r;
  for (int i = 0; i < 200; ++i) r.errors.push_back(u(rng));
  std::sort(r.errors.begin(), r.errors.end());
  const int steps = 200000;
  double integral = 0.0;
  for (int i = 0; i < steps; ++i) integral += r.fraction_within(0.2 * (i + 0.5) / steps);
  EXPECT_NEAR(r.auc(0.2), integral / steps, 1e-4);
}

TEST(KeypointTransfer, PositionOracleIsExact) {
  const Dataset& d = testutil::tiny_dataset();
  const DescriptorFn position = [](const RgbImage& rgb) {
    DescriptorImage out;
    out.values = Image<float>(rgb.width(), rgb.height(), 2);
    for (int v = 0; v < rgb.height(); ++v)
      for (int u = 0; u < rgb.width(); ++u) {
        out.values(u, v, 0) = static_cast<float>(u);
        out.values(u, v, 1) = static_cast<float>(v);
      }
    return out;
  };
  std::vector<KeypointPair> pairs;
  for (const auto& s : d.sequences) pairs.push_back({s.sequence_id, &s.frames[0], s.sequence_id, &s.frames[0]});
  const CdfResult r = keypoint_transfer_errors(position, d.keypoints, pairs);
  ASSERT_FALSE(r.errors.empty());
  EXPECT_EQ(r.errors.back(), 0.0);
  EXPECT_EQ(r.excluded, 0u);
  EXPECT_NEAR(r.auc(), 1.0, 1e-12);
}

TEST(KeypointTransfer, RandomMatcherMatchesUniformExpectation) {
  const Dataset& d = testutil::tiny_dataset();
  const auto pairs = make_keypoint_pairs(d, 4, 3);
  std::mt19937_64 noise(4);
  const DescriptorFn random = [&](const RgbImage& rgb) { return random_descriptors(noise, rgb.width(), rgb.height(), 8); };
  CdfResult measured;
  for (int rep = 0; rep < 5; ++rep) {
    const CdfResult r = keypoint_transfer_errors(random, d.keypoints, pairs);
    measured.errors.insert(measured.errors.end(), r.errors.begin(), r.errors.end());
    measured.excluded = r.excluded;
  }
  std::sort(measured.errors.begin(), measured.errors.end());

  // Exact expectation: the match is uniform over target pixels.
  double expected = 0.0;
  std::size_t n = 0;
  for (const auto& p : pairs) {
    const double diag = std::hypot(p.target->width(), p.target->height());
    for (const auto& [name, q] : d.keypoints.in_frame(p.query_sequence, p.query->frame_id)) {
      const auto t = d.keypoints.find(p.target_sequence, p.target->frame_id, name);
      if (!t) continue;
      double s = 0.0;
      for (int v = 0; v < p.target->height(); ++v)
        for (int u = 0; u < p.target->width(); ++u) s += std::max(0.0, 0.2 - std::hypot(u - t->u, v - t->v) / diag) / 0.2;
      expected += s / static_cast<double>(p.target->width() * p.target->height());
      ++n;
    }
  }
  expected /= static_cast<double>(n);
  ASSERT_EQ(measured.errors.size(), 5 * n);
  EXPECT_NEAR(measured.auc(0.2), expected, 0.02);
  EXPECT_LT(measured.auc(0.2), 0.2);
}

TEST(KeypointPairs, SameSequenceDistinctFrames) {
  const Dataset& d = testutil::tiny_dataset();
  const auto pairs = make_keypoint_pairs(d, 3, 1);
  EXPECT_EQ(pairs.size(), 3 * d.sequences.size());
  for (const auto& p : pairs) {
    EXPECT_EQ(p.query_sequence, p.target_sequence);
    EXPECT_NE(p.query, p.target);
  }
}

TEST(Composites, StructureAndDeterminism) {
  const Dataset& d = testutil::tiny_dataset();
  CompositeOptions opt;
  opt.cases = 12;
  opt.seed = 4;
  const auto cases = make_composite_cases(d, opt);
  const auto again = make_composite_cases(d, opt);
  ASSERT_EQ(cases.size(), 12u);
  for (std::size_t i = 0; i < cases.size(); ++i) {
    const auto& c = cases[i];
    EXPECT_EQ(c.composite.frame.width(), 128);
    EXPECT_EQ(c.composite.frame.height(), 64);
    EXPECT_EQ(c.source_labels[0], c.query_label);
    EXPECT_NE(c.source_labels[1], c.query_label);
    EXPECT_EQ(c.query_label, d.sequence(c.query_sequence).true_category.value());
    EXPECT_EQ(c.query_pixels.size(), 16u);
    for (const Pixel& p : c.query_pixels) EXPECT_TRUE(c.query->mask(p.u, p.v));
    std::set<int> sources;
    for (int v : c.composite.provenance.values()) sources.insert(v);
    EXPECT_TRUE(sources.contains(0) && sources.contains(1) && sources.contains(-1));
    EXPECT_EQ(c.composite.frame.rgb, again[i].composite.frame.rgb);
  }
}

// Sequence whose frame was pasted as placement 0, found by exact pixel agreement.
static std::string pasted_sequence(const Dataset& d, const CompositeCase& c) {
  const auto& prov = c.composite.provenance;
  int pu0 = 1 << 20, pv0 = 1 << 20;
  std::size_t count = 0;
  for (int v = 0; v < prov.height(); ++v)
    for (int u = 0; u < prov.width(); ++u)
      if (prov(u, v) == 0) {
        pu0 = std::min(pu0, u);
        pv0 = std::min(pv0, v);
        ++count;
      }
  for (const auto& s : d.sequences)
    for (const auto& f : s.frames) {
      int u0 = 1 << 20, v0 = 1 << 20;
      for (int v = 0; v < f.height(); ++v)
        for (int u = 0; u < f.width(); ++u)
          if (f.mask(u, v)) {
            u0 = std::min(u0, u);
            v0 = std::min(v0, v);
          }
      const int du = pu0 - u0, dv = pv0 - v0;
      std::size_t agree = 0;
      bool ok = true;
      for (int v = 0; v < f.height() && ok; ++v)
        for (int u = 0; u < f.width() && ok; ++u) {
          if (!f.mask(u, v)) continue;
          const int cu = u + du, cv = v + dv;
          if (!prov.in_bounds(cu, cv)) {
            ok = false;
            break;
          }
          if (prov(cu, cv) != 0) continue;
          for (int ch = 0; ch < 3; ++ch) ok = ok && c.composite.frame.rgb(cu, cv, ch) == f.rgb(u, v, ch);
          ++agree;
        }
      if (ok && agree == count) return s.sequence_id;
    }
  return "";
}

TEST(Composites, SameCategoryObjectIsAnotherInstance) {
  const Dataset& d = testutil::tiny_dataset();
  CompositeOptions opt;
  opt.cases = 10;
  opt.queries_per_case = 4;
  for (const auto& c : make_composite_cases(d, opt)) {
    const std::string src = pasted_sequence(d, c);
    ASSERT_FALSE(src.empty());
    EXPECT_NE(src, c.query_sequence);
    EXPECT_EQ(d.sequence(src).true_category, c.query_label);
  }
  opt.same_instance = true;
  for (const auto& c : make_composite_cases(d, opt)) EXPECT_EQ(pasted_sequence(d, c), c.query_sequence);
}

TEST(OnObject, ColorOracleAndLabels) {
  const Frame a = solid_frame(16, 16, {200, 0, 0}, 3, 8);
  const Frame b = solid_frame(16, 16, {0, 0, 200}, 5, 12);
  RgbImage bg(32, 16, 3, 0);
  for (std::size_t i = 1; i < bg.size(); i += 3) bg.values()[i] = 150;
  CompositeCase c;
  c.composite = composite_multi_object({&a, &b}, {{0, 0, 0}, {1, 16, 0}}, bg);
  c.query = &a;
  c.query_label = "red";
  c.source_labels = {"red", "blue"};
  c.query_pixels = {{4, 4}, {5, 9}, {7, 12}};
  const DescriptorFn colors = color_descriptors;
  OnObjectResult r = on_object_match_rate(colors, {c});
  EXPECT_EQ(r.correct, 3u);
  EXPECT_EQ(r.rate(), 1.0);
  c.source_labels = {"blue", "red"};
  r = on_object_match_rate(colors, {c});
  EXPECT_EQ(r.wrong_object, 3u);
  c.query_pixels = {{0, 0}};  // black query pixel; composite has no black pixels, nearest is red
  const DescriptorFn flat = [](const RgbImage& rgb) {
    DescriptorImage d;
    d.values = Image<float>(rgb.width(), rgb.height(), 1, 0.0f);
    return d;
  };
  r = on_object_match_rate(flat, {c});
  EXPECT_EQ(r.background, 1u);
  EXPECT_EQ(r.rate(), 0.0);
}

TEST(OnObject, RandomMatcherHitsObjectInProportionToArea) {
  // Each object covers 16 x 5 = 80 of the 40 x 20 = 800 composite pixels.
  const Frame a = solid_frame(20, 20, {200, 0, 0}, 3, 7);
  const Frame b = solid_frame(20, 20, {0, 0, 200}, 3, 7);
  const RgbImage bg(40, 20, 3, 0);
  CompositeCase c;
  c.composite = composite_multi_object({&a, &b}, {{0, 0, 0}, {1, 20, 0}}, bg);
  c.query = &a;
  c.query_label = "red";
  c.source_labels = {"red", "blue"};
  for (int v = 2; v < 18; v += 3)
    for (int u = 3; u <= 7; ++u) c.query_pixels.push_back({u, v});
  const std::vector<CompositeCase> cases(300, c);
  std::mt19937_64 noise(12);
  const DescriptorFn random = [&](const RgbImage& rgb) { return random_descriptors(noise, rgb.width(), rgb.height(), 8); };
  const OnObjectResult r = on_object_match_rate(random, cases);
  const std::size_t total = r.correct + r.wrong_object + r.background;
  ASSERT_EQ(total, 300 * c.query_pixels.size());
  EXPECT_NEAR(r.rate(), 0.10, 0.01);
  EXPECT_NEAR(static_cast<double>(r.background) / static_cast<double>(total), 0.80, 0.015);
}

TEST(ClusteringAccuracy, HandExamples) {
  EXPECT_EQ(clustering_accuracy({1, 1, 0, 0}, {0, 0, 1, 1}), 1.0);
  EXPECT_NEAR(clustering_accuracy({0, 0, 0, 1}, {0, 0, 1, 1}), 0.75, 1e-12);
  EXPECT_NEAR(clustering_accuracy({0, 0, 0, 0}, {0, 1, 2, 3}), 0.25, 1e-12);
  EXPECT_NEAR(clustering_accuracy({0, 1, 2, 3}, {0, 0, 1, 1}), 0.5, 1e-12);
  EXPECT_THROW(clustering_accuracy({0}, {0, 1}), std::invalid_argument);
}

TEST(ClusteringAccuracy, NoisyLabelsSimulation) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<int> truth, pred;
  for (int i = 0; i < 20000; ++i) {
    const int t = i % 4;
    truth.push_back(t);
    // Relabeled by a fixed permutation, 20% replaced by uniform noise.
    pred.push_back(u(rng) < 0.2 ? static_cast<int>(u(rng) * 4) : (t + 1) % 4);
  }
  EXPECT_NEAR(clustering_accuracy(pred, truth), 0.8 + 0.2 / 4, 0.01);
}

TEST(GradientHistogram, ShapeNormAndOffsetInvariance) {
  const RgbImage& img = testutil::tiny_dataset().sequences[0].frames[0].rgb;
  const DescriptorFn fn = gradient_histogram_descriptor_fn();
  const DescriptorImage d = fn(img);
  EXPECT_EQ(d.dim(), 40);
  int unit = 0;
  for (int v = 0; v < 64; ++v)
    for (int u = 0; u < 64; ++u) {
      const double n = descriptor_at(d, {u, v}).norm();
      EXPECT_TRUE(std::abs(n - 1.0) < 1e-5 || n == 0.0);
      unit += n > 0.0;
    }
  EXPECT_GT(unit, 1000);
  RgbImage dark = img;
  for (auto& x : dark.values()) x = static_cast<std::uint8_t>(x / 2);
  RgbImage shifted = dark;
  for (auto& x : shifted.values()) x = static_cast<std::uint8_t>(x + 20);
  const DescriptorImage a = fn(dark), b = fn(shifted);
  for (std::size_t i = 0; i < a.values.size(); ++i) ASSERT_NEAR(a.values.values()[i], b.values.values()[i], 1e-4);
}

TEST(Export, RowsLieOnMasks) {
  const Dataset& d = testutil::tiny_dataset();
  std::ostringstream out;
  export_descriptor_samples(color_descriptors, d, 7, 3, 1, out);
  std::istringstream in(out.str());
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "sequence_id,frame_id,u,v,category,d0,d1,d2");
  std::size_t rows = 0;
  while (std::getline(in, line)) {
    std::stringstream ss(line);
    std::string seq, frame, u, v, cat;
    std::getline(ss, seq, ',');
    std::getline(ss, frame, ',');
    std::getline(ss, u, ',');
    std::getline(ss, v, ',');
    std::getline(ss, cat, ',');
    const Sequence& s = d.sequence(seq);
    EXPECT_EQ(cat, s.true_category.value());
    const Frame* f = nullptr;
    for (const auto& x : s.frames)
      if (x.frame_id == std::stoi(frame)) f = &x;
    ASSERT_NE(f, nullptr);
    EXPECT_TRUE(f->mask(std::stoi(u), std::stoi(v)));
    ++rows;
  }
  EXPECT_EQ(rows, d.sequences.size() * 3 * 7);
}
