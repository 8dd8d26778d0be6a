#include <cmath>
#include <fstream>

#include <gtest/gtest.h>

#include "cadd/descriptor_model.hpp"
#include "test_util.hpp"

using namespace cadd;

namespace {

ModelConfig small_config() {
  ModelConfig c;
  c.widths = {8, 8, 12, 12};
  c.init_seed = 3;
  return c;
}

double weighted_sum(const DescriptorImage& d, const Image<float>& g) {
  double s = 0.0;
  for (std::size_t i = 0; i < d.values.size(); ++i) s += double(d.values.values()[i]) * g.values()[i];
  return s;
}

}  // namespace

TEST(DescriptorModel, OutputShape) {
  const DescriptorModel m(ModelConfig{});
  const DescriptorImage d = m.forward(testutil::tiny_dataset().sequences[0].frames[0].rgb);
  EXPECT_EQ(d.width(), 64);
  EXPECT_EQ(d.height(), 64);
  EXPECT_EQ(d.dim(), 5);
  EXPECT_FALSE(d.padded);
}

TEST(DescriptorModel, PadsToStride) {
  const DescriptorModel m(small_config());
  const DescriptorImage d = m.forward(RgbImage(30, 21, 3, 90));
  EXPECT_EQ(d.width(), 30);
  EXPECT_EQ(d.height(), 21);
  EXPECT_TRUE(d.padded);
  EXPECT_THROW(m.forward(RgbImage(8, 8, 1, 0)), std::invalid_argument);
}

TEST(DescriptorModel, DeterministicInitAndForward) {
  const RgbImage& img = testutil::tiny_dataset().sequences[1].frames[1].rgb;
  const DescriptorModel a(small_config()), b(small_config());
  EXPECT_EQ(a.forward(img).values, b.forward(img).values);
  ModelConfig other = small_config();
  other.init_seed = 4;
  EXPECT_NE(DescriptorModel(other).forward(img).values, a.forward(img).values);
}

TEST(DescriptorModel, GradientMatchesFiniteDifferences) {
  DescriptorModel m(small_config());
  // A small crop keeps the number of ReLU kinks crossed by a finite step low.
  const RgbImage& full = testutil::tiny_dataset().sequences[0].frames[2].rgb;
  RgbImage img(16, 16, 3);
  for (int y = 0; y < 16; ++y)
    for (int x = 0; x < 16; ++x)
      for (int c = 0; c < 3; ++c) img(x, y, c) = full(x + 24, y + 24, c);
  std::mt19937_64 rng(5);
  std::normal_distribution<float> n(0.0f, 1.0f);
  ForwardTape tape;
  const DescriptorImage d = m.forward(img, &tape);
  Image<float> g(d.width(), d.height(), d.dim());
  for (float& v : g.values()) v = n(rng);
  m.zero_grad();
  m.backward(g, tape);

  int checked = 0;
  std::uniform_real_distribution<double> pick(0.0, 1.0);
  for (auto* p : m.parameters()) {
    for (int k = 0; k < 3; ++k) {
      const std::size_t i = static_cast<std::size_t>(pick(rng) * static_cast<double>(p->size()));
      // In a single parameter the output is piecewise linear, so a one-sided difference is exact
      // unless a ReLU kink falls inside the step; a kink can only spoil one of the two sides.
      const float orig = p->value[i];
      const float h = 2e-3f;
      const double mid = weighted_sum(m.forward(img), g);
      p->value[i] = orig + h;
      const double up = weighted_sum(m.forward(img), g);
      p->value[i] = orig - h;
      const double down = weighted_sum(m.forward(img), g);
      p->value[i] = orig;
      const double fwd = (up - mid) / h;
      const double bwd = (mid - down) / h;
      const double an = p->grad[i];
      const double scale = std::max({std::abs(fwd), std::abs(bwd), std::abs(an), 1.0});
      const double err = std::min(std::abs(fwd - an), std::abs(bwd - an)) / scale;
      EXPECT_LT(err, 2e-2) << p->name << "[" << i << "] forward=" << fwd << " backward=" << bwd << " analytic=" << an;
      ++checked;
    }
  }
  EXPECT_GT(checked, 20);
}

TEST(DescriptorAt, ExactSliceAndBounds) {
  DescriptorImage d;
  d.values = Image<float>(3, 2, 4);
  for (int c = 0; c < 4; ++c) d.values(2, 1, c) = static_cast<float>(c + 1);
  const Eigen::VectorXd v = descriptor_at(d, {2, 1});
  EXPECT_EQ(v, Eigen::Vector4d(1, 2, 3, 4));
  EXPECT_THROW(descriptor_at(d, {3, 0}), std::out_of_range);
  EXPECT_THROW(descriptor_at(d, {0, -1}), std::out_of_range);
}

TEST(Checkpoint, RoundTripPreservesOutputs) {
  testutil::TempDir dir("ckpt");
  Checkpoint c;
  c.config = small_config();
  c.model = std::make_shared<DescriptorModel>(c.config);
  c.metadata = {{"variant", "vanilla"}, {"steps", 3}};
  c.classifier = HardClassifierState{{{"a", 1}}, {{"b", 2}}, "raw_image", 16};
  save_checkpoint(c, dir.path() / "m.ckpt");
  const Checkpoint back = load_checkpoint(dir.path() / "m.ckpt");
  const RgbImage& img = testutil::tiny_dataset().sequences[0].frames[0].rgb;
  EXPECT_EQ(back.model->forward(img).values, c.model->forward(img).values);
  EXPECT_EQ(back.metadata, c.metadata);
  ASSERT_TRUE(back.classifier);
  EXPECT_EQ(back.classifier->feature_kind, "raw_image");
  EXPECT_EQ(back.config.to_json(), c.config.to_json());
}

TEST(Checkpoint, RejectsCorruptFiles) {
  testutil::TempDir dir("ckpt_bad");
  {
    std::ofstream f(dir.path() / "bad.ckpt", std::ios::binary);
    f << "not a checkpoint";
  }
  EXPECT_ANY_THROW(load_checkpoint(dir.path() / "bad.ckpt"));
  EXPECT_ANY_THROW(load_checkpoint(dir.path() / "missing.ckpt"));
}

TEST(ModelConfig, JsonAndValidation) {
  const ModelConfig c = ModelConfig::from_json({{"descriptor_dim", 3}, {"widths", {4, 4, 4, 4}}});
  EXPECT_EQ(c.descriptor_dim, 3);
  EXPECT_THROW(ModelConfig::from_json({{"dim", 3}}), std::invalid_argument);
  EXPECT_THROW(ModelConfig::from_json({{"descriptor_dim", 1}}), std::invalid_argument);
  EXPECT_EQ(ModelConfig::resnet34_s8().stride(), 8);
  EXPECT_EQ(ModelConfig{}.stride(), 4);
}

TEST(DescriptorModel, ResnetVariantRuns) {
  const DescriptorModel m(ModelConfig::resnet34_s8(8));
  const DescriptorImage d = m.forward(RgbImage(24, 16, 3, 128));
  EXPECT_EQ(d.width(), 24);
  EXPECT_EQ(d.height(), 16);
}
