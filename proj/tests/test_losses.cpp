#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "cadd/losses.hpp"
#include "test_util.hpp"

using namespace cadd;

namespace {

Eigen::MatrixXd rows(std::initializer_list<std::initializer_list<double>> r) {
  Eigen::MatrixXd m(static_cast<Eigen::Index>(r.size()), static_cast<Eigen::Index>(r.begin()->size()));
  Eigen::Index i = 0;
  for (const auto& row : r) {
    Eigen::Index j = 0;
    for (double v : row) m(i, j++) = v;
    ++i;
  }
  return m;
}

// Independent scalar re-implementations used as finite-difference targets.
double match_ref(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  double s = 0.0;
  for (Eigen::Index i = 0; i < a.rows(); ++i) s += (a.row(i) - b.row(i)).squaredNorm();
  return a.rows() ? s / static_cast<double>(a.rows()) : 0.0;
}

double nonmatch_ref(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, double m) {
  double s = 0.0;
  int n = 0;
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    const double d = (a.row(i) - b.row(i)).norm();
    if (d < m) {
      s += (m - d) * (m - d);
      ++n;
    }
  }
  return n ? s / n : 0.0;
}

double rel_error(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y) {
  const double scale = std::max({x.norm(), y.norm(), 1e-8});
  return (x - y).norm() / scale;
}

template <typename F>
Eigen::MatrixXd numeric_grad(F f, Eigen::MatrixXd x) {
  constexpr double h = 1e-6;
  Eigen::MatrixXd g(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double orig = x.data()[i];
    x.data()[i] = orig + h;
    const double up = f(x);
    x.data()[i] = orig - h;
    const double down = f(x);
    x.data()[i] = orig;
    g.data()[i] = (up - down) / (2 * h);
  }
  return g;
}

}  // namespace

TEST(MatchLoss, HandExamples) {
  EXPECT_NEAR(match_loss(rows({{1, 2}, {3, 4}}), rows({{1, 2}, {3, 4}})).value, 0.0, 1e-12);
  EXPECT_NEAR(match_loss(rows({{0, 0}}), rows({{3, 4}})).value, 25.0, 1e-12);
  EXPECT_NEAR(match_loss(rows({{0, 0}, {0, 0}}), rows({{1, 0}, {1, std::sqrt(2.0)}})).value, 2.0, 1e-12);
  EXPECT_EQ(match_loss(Eigen::MatrixXd(0, 3), Eigen::MatrixXd(0, 3)).value, 0.0);
}

TEST(NonMatchLoss, HandExamples) {
  EXPECT_NEAR(nonmatch_loss(rows({{0, 0}, {0, 0}}), rows({{0.5, 0}, {0, 2}}), 0.5).value, 0.0, 1e-12);
  EXPECT_NEAR(nonmatch_loss(rows({{0, 0}}), rows({{0.3, 0}}), 0.5).value, 0.04, 1e-12);
  const PairLoss two = nonmatch_loss(rows({{0, 0}, {0, 0}}), rows({{0.3, 0}, {0, 0.6}}), 0.5);
  EXPECT_NEAR(two.value, 0.04, 1e-12);
  EXPECT_EQ(two.active, 1);
}

TEST(TripletLoss, HandExamples) {
  const Eigen::Vector2d a(0, 0);
  EXPECT_NEAR(hard_triplet_loss(a, a, Eigen::Vector2d(1, 0), 1.0, 0.5).value, 0.0, 1e-12);
  EXPECT_NEAR(hard_triplet_loss(a, Eigen::Vector2d(1, 0), Eigen::Vector2d(0, 0.2), 1.0, 0.5).value, 1.3, 1e-12);
  // c = 0 is a zero-margin hinge.
  EXPECT_NEAR(hard_triplet_loss(a, Eigen::Vector2d(1, 0), Eigen::Vector2d(0, 0.4), 0.0, 0.5).value, 0.6, 1e-12);
  EXPECT_NEAR(hard_triplet_loss(a, Eigen::Vector2d(0.4, 0), Eigen::Vector2d(0, 1), 0.0, 0.5).value, 0.0, 1e-12);
}

TEST(SoftTotalLoss, HandExamples) {
  EXPECT_NEAR(soft_total_loss(0.2, 0.1, 0.3, 1.0), 0.6, 1e-12);
  EXPECT_NEAR(soft_total_loss(0.0, 0.0, 0.4, 0.5), 0.2, 1e-12);
  EXPECT_NEAR(soft_total_loss(0.2, 0.1, 5.0, 0.0), 0.3, 1e-12);
}

TEST(LossProperties, NonNegativeAndMatchSymmetric) {
  std::mt19937_64 rng(3);
  for (int t = 0; t < 50; ++t) {
    const auto a = testutil::random_matrix(rng, 7, 5, 0.3), b = testutil::random_matrix(rng, 7, 5, 0.3);
    EXPECT_GE(match_loss(a, b).value, 0.0);
    EXPECT_NEAR(match_loss(a, b).value, match_loss(b, a).value, 1e-12);
    EXPECT_GE(nonmatch_loss(a, b, 0.5).value, 0.0);
    EXPECT_NEAR(nonmatch_loss(a, b, 0.5).value, nonmatch_ref(a, b, 0.5), 1e-12);
  }
}

TEST(LossGradients, MatchAgreesWithFiniteDifferences) {
  std::mt19937_64 rng(11);
  for (int t = 0; t < 100; ++t) {
    const auto a = testutil::random_matrix(rng, 6, 5), b = testutil::random_matrix(rng, 6, 5);
    const PairLoss l = match_loss(a, b, true);
    EXPECT_LT(rel_error(l.grad_a, numeric_grad([&](const Eigen::MatrixXd& x) { return match_ref(x, b); }, a)), 1e-4);
    EXPECT_LT(rel_error(l.grad_b, numeric_grad([&](const Eigen::MatrixXd& x) { return match_ref(a, x); }, b)), 1e-4);
  }
}

TEST(LossGradients, NonMatchAgreesWithFiniteDifferences) {
  std::mt19937_64 rng(12);
  int checked = 0;
  while (checked < 100) {
    const auto a = testutil::random_matrix(rng, 6, 5, 0.15), b = testutil::random_matrix(rng, 6, 5, 0.15);
    bool near_kink = false;
    for (Eigen::Index i = 0; i < a.rows(); ++i) near_kink |= std::abs((a.row(i) - b.row(i)).norm() - 0.5) < 1e-3;
    if (near_kink) continue;
    const PairLoss l = nonmatch_loss(a, b, 0.5, true);
    EXPECT_LT(rel_error(l.grad_a, numeric_grad([&](const Eigen::MatrixXd& x) { return nonmatch_ref(x, b, 0.5); }, a)), 1e-4);
    EXPECT_LT(rel_error(l.grad_b, numeric_grad([&](const Eigen::MatrixXd& x) { return nonmatch_ref(a, x, 0.5); }, b)), 1e-4);
    ++checked;
  }
}

TEST(LossGradients, TripletAgreesWithFiniteDifferences) {
  std::mt19937_64 rng(13);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  int checked = 0;
  while (checked < 100) {
    const Eigen::VectorXd a = testutil::random_matrix(rng, 4, 1), p = testutil::random_matrix(rng, 4, 1),
                          n = testutil::random_matrix(rng, 4, 1);
    const double c = unit(rng);
    auto ref = [&](const Eigen::VectorXd& x, const Eigen::VectorXd& y, const Eigen::VectorXd& z) {
      return std::max(0.0, (x - y).norm() - (x - z).norm() + c * 0.5);
    };
    if (std::abs((a - p).norm() - (a - n).norm() + c * 0.5) < 1e-3) continue;
    const TripletLoss l = hard_triplet_loss(a, p, n, c, 0.5, true);
    EXPECT_NEAR(l.value, ref(a, p, n), 1e-12);
    EXPECT_LT(rel_error(l.grad_anchor, numeric_grad([&](const Eigen::MatrixXd& x) { return ref(x, p, n); }, a)), 1e-4);
    EXPECT_LT(rel_error(l.grad_positive, numeric_grad([&](const Eigen::MatrixXd& x) { return ref(a, x, n); }, p)), 1e-4);
    EXPECT_LT(rel_error(l.grad_negative, numeric_grad([&](const Eigen::MatrixXd& x) { return ref(a, p, x); }, n)), 1e-4);
    ++checked;
  }
}
