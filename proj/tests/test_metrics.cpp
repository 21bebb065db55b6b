#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <random>

#include "oracles.hpp"
#include "vslp/metrics.hpp"

namespace vslp {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

LabelMask from_rows(const std::vector<std::string>& rows) {
  LabelMask m(rows.size(), rows[0].size());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    for (std::size_t c = 0; c < rows[r].size(); ++c) {
      m.at(r, c) = static_cast<std::uint8_t>(rows[r][c] - '0');
    }
  }
  return m;
}

TEST(DiceMiou, IdentityIsPerfect) {
  std::mt19937_64 rng(301);
  const LabelMask m = oracle::random_mask(16, 16, 3, rng);
  const auto s = dice_miou(m, m, 3);
  EXPECT_EQ(s.dice, 1.0);
  EXPECT_EQ(s.miou, 1.0);
}

TEST(DiceMiou, DisjointForegroundsScoreZero) {
  const auto s = dice_miou(from_rows({"1100", "0000"}), from_rows({"0011", "0000"}));
  EXPECT_EQ(s.dice, 0.0);
}

TEST(DiceMiou, HalfOverlapOnFourByFour) {
  const LabelMask gt = from_rows({"1111", "1111", "0000", "0000"});
  const LabelMask pred = from_rows({"1111", "0000", "1111", "0000"});
  const auto s = dice_miou(pred, gt);
  EXPECT_DOUBLE_EQ(s.dice, 0.5);
  EXPECT_DOUBLE_EQ(s.class_iou[1], 1.0 / 3.0);
  // Background: |pred0 & gt0| = 4, |pred0 | gt0| = 12.
  EXPECT_DOUBLE_EQ(s.miou, 0.5 * (1.0 / 3.0 + 4.0 / 12.0));
}

TEST(DiceMiou, BothEmptyForegroundIsPerfect) {
  const LabelMask z(4, 4);
  EXPECT_EQ(dice_miou(z, z, 2).dice, 1.0);
  EXPECT_EQ(dice_miou(z, z, 2).miou, 1.0);
  EXPECT_TRUE(std::isnan(dice_miou(z, z, 2).class_iou[1]));
}

TEST(DiceMiou, ShapeMismatchRejected) {
  EXPECT_THROW(dice_miou(LabelMask(4, 4), LabelMask(4, 5)), std::invalid_argument);
  EXPECT_THROW(hausdorff95(LabelMask(4, 4), LabelMask(5, 4)), std::invalid_argument);
}

TEST(DiceMiou, MatchesSetCountingOracleAndIsSymmetric) {
  std::mt19937_64 rng(302);
  for (int t = 0; t < 200; ++t) {
    const std::size_t classes = 2 + t % 3;
    const LabelMask p = oracle::random_mask(16, 16, classes, rng);
    const LabelMask g = oracle::random_mask(16, 16, classes, rng);
    const auto s = dice_miou(p, g, classes);
    const auto ref = oracle::brute_dice_miou(p, g, classes);
    EXPECT_EQ(s.dice, ref.dice);
    EXPECT_EQ(s.miou, ref.miou);
    EXPECT_GE(s.dice, 0.0);
    EXPECT_LE(s.dice, 1.0);
    EXPECT_EQ(dice_miou(g, p, classes).dice, s.dice);
  }
}

TEST(Hausdorff95, Examples) {
  std::mt19937_64 rng(303);
  LabelMask m(8, 8);
  for (std::size_t r = 2; r < 6; ++r) m.at(r, 3) = 1;
  EXPECT_EQ(hausdorff95(m, m), 0.0);
  EXPECT_EQ(hausdorff95(LabelMask(8, 8), m), kInf);
  EXPECT_EQ(hausdorff95(m, LabelMask(8, 8)), kInf);
  const LabelMask a = from_rows({"1000000"});
  const LabelMask b = from_rows({"0001000"});
  EXPECT_EQ(hausdorff95(a, b), 3.0);
}

TEST(Hausdorff95, MatchesAllPairsOracle) {
  std::mt19937_64 rng(304);
  for (int t = 0; t < 200; ++t) {
    const LabelMask p = oracle::random_mask(16, 16, 2, rng);
    const LabelMask g = oracle::random_mask(16, 16, 2, rng);
    EXPECT_EQ(hausdorff95(p, g), oracle::brute_hd95(p, g));
    EXPECT_EQ(hausdorff95(p, g), hausdorff95(g, p));
  }
}

TEST(Hausdorff95, DirectedComponentsAreAsymmetric) {
  // A point next to a large square: every square boundary pixel is far from
  // the point, the point is close to the square.
  LabelMask square(16, 16);
  for (std::size_t r = 2; r < 14; ++r) {
    for (std::size_t c = 2; c < 14; ++c) square.at(r, c) = 1;
  }
  LabelMask dot(16, 16);
  dot.at(8, 15) = 1;
  const auto to_square = directed_boundary_distances(dot, square);
  const auto to_dot = directed_boundary_distances(square, dot);
  ASSERT_EQ(to_square.size(), 1u);
  EXPECT_EQ(to_square[0], 2.0);
  EXPECT_GT(*std::max_element(to_dot.begin(), to_dot.end()), 10.0);
}

TEST(Hausdorff95, MonotoneAsBoundaryApproaches) {
  LabelMask gt(32, 32);
  for (std::size_t r = 8; r < 24; ++r) {
    for (std::size_t c = 8; c < 24; ++c) gt.at(r, c) = 1;
  }
  double prev = kInf;
  for (std::size_t offset = 7; offset + 1 > 0; --offset) {
    LabelMask pred(32, 32);
    for (std::size_t r = 8 + offset; r < 24 - offset; ++r) {
      for (std::size_t c = 8 + offset; c < 24 - offset; ++c) pred.at(r, c) = 1;
    }
    const double d = hausdorff95(pred, gt);
    EXPECT_LE(d, prev);
    prev = d;
  }
  EXPECT_EQ(prev, 0.0);
}

TEST(Boundary, FourNeighbourhood) {
  const LabelMask m = from_rows({"111", "111", "111"});
  const LabelMask b = boundary(m);
  EXPECT_EQ(b.at(1, 1), 0);
  EXPECT_EQ(b.at(0, 0), 1);
  LabelMask big(5, 5);
  for (std::size_t r = 1; r < 4; ++r) {
    for (std::size_t c = 1; c < 4; ++c) big.at(r, c) = 1;
  }
  EXPECT_EQ(boundary(big).at(2, 2), 0);
  EXPECT_EQ(boundary(big).at(1, 2), 1);
}

TEST(ClassificationReport, Examples) {
  const std::vector<ProportionVector> a = {ProportionVector({0.3, 0.7}),
                                           ProportionVector({0.9, 0.1})};
  const auto same = classification_report(a, a);
  EXPECT_EQ(same.accuracy, 1.0);
  EXPECT_EQ(same.mae, 0.0);
  EXPECT_EQ(same.mse, 0.0);
  EXPECT_EQ(same.f1, 1.0);

  const std::vector<ProportionVector> p = {ProportionVector({0.6, 0.4})};
  const std::vector<ProportionVector> g = {ProportionVector({0.4, 0.6})};
  const auto r = classification_report(p, g);
  EXPECT_EQ(r.accuracy, 0.0);
  EXPECT_NEAR(r.mae, 0.2, 1e-15);
  EXPECT_NEAR(r.mse, 0.04, 1e-15);

  EXPECT_EQ(ProportionVector({0.5, 0.5}).argmax(), 0u);
  const std::vector<ProportionVector> tie = {ProportionVector({0.5, 0.5})};
  const std::vector<ProportionVector> zero = {ProportionVector({0.8, 0.2})};
  EXPECT_EQ(classification_report(tie, zero).accuracy, 1.0);

  EXPECT_THROW(classification_report(p, a), std::invalid_argument);
}

TEST(ClassificationReport, MacroScoresByHand) {
  // Predicted classes 0,0,1,1 against truth 0,1,1,1.
  auto v = [](double x) { return ProportionVector({x, 1.0 - x}); };
  const std::vector<ProportionVector> p = {v(0.9), v(0.8), v(0.1), v(0.2)};
  const std::vector<ProportionVector> g = {v(0.7), v(0.3), v(0.2), v(0.4)};
  const auto r = classification_report(p, g);
  EXPECT_DOUBLE_EQ(r.accuracy, 0.75);
  // class 0: P = 1/2, R = 1; class 1: P = 1, R = 2/3.
  EXPECT_DOUBLE_EQ(r.precision, 0.75);
  EXPECT_DOUBLE_EQ(r.recall, (1.0 + 2.0 / 3.0) / 2.0);
  EXPECT_DOUBLE_EQ(r.f1, (2.0 / 3.0 + 0.8) / 2.0);
}

TEST(MeanStd, SkipsInfinite) {
  std::size_t inf = 0;
  const std::vector<double> v = {1.0, 3.0, kInf};
  const auto m = mean_std(v, &inf);
  EXPECT_EQ(m.mean, 2.0);
  EXPECT_EQ(m.stddev, 1.0);
  EXPECT_EQ(inf, 1u);
}

}  // namespace
}  // namespace vslp
