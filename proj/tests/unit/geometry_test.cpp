#include "partloc/geometry.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <random>
#include <vector>

#include "partloc/error.hpp"

namespace partloc {
namespace {

BBox random_box(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> pos(-50.0, 150.0), side(0.5, 80.0);
  const double x = pos(rng), y = pos(rng);
  return BBox(x, y, x + side(rng), y + side(rng));
}

TEST(BBoxTest, RejectsDegenerateAndNonFinite) {
  EXPECT_THROW(BBox(0, 0, 0, 10), InvalidArgument);
  EXPECT_THROW(BBox(0, 0, 10, -1), InvalidArgument);
  EXPECT_THROW(BBox(0, 0, std::numeric_limits<double>::infinity(), 10), InvalidArgument);
  EXPECT_THROW(BBox(std::nan(""), 0, 10, 10), InvalidArgument);
  const BBox b(1, 2, 4, 8);
  EXPECT_DOUBLE_EQ(b.width(), 3.0);
  EXPECT_DOUBLE_EQ(b.height(), 6.0);
  EXPECT_DOUBLE_EQ(b.area(), 18.0);
  EXPECT_DOUBLE_EQ(b.center_x(), 2.5);
  EXPECT_DOUBLE_EQ(b.center_y(), 5.0);
}

TEST(IouTest, SpecExamples) {
  EXPECT_DOUBLE_EQ(iou(BBox(0, 0, 10, 10), BBox(0, 0, 10, 10)), 1.0);
  EXPECT_DOUBLE_EQ(iou(BBox(0, 0, 10, 10), BBox(20, 20, 30, 30)), 0.0);
  EXPECT_NEAR(iou(BBox(0, 0, 10, 10), BBox(5, 0, 15, 10)), 50.0 / 150.0, 1e-12);
}

TEST(IouTest, RandomPairsAreSymmetricAndBounded) {
  std::mt19937_64 rng(7);
  for (int i = 0; i < 10000; ++i) {
    const BBox a = random_box(rng), b = random_box(rng);
    const double v = iou(a, b);
    ASSERT_GE(v, 0.0);
    ASSERT_LE(v, 1.0);
    ASSERT_EQ(v, iou(b, a));
    ASSERT_EQ(iou(a, a), 1.0);
    // Independent formula.
    const double iw = std::max(0.0, std::min(a.x_max(), b.x_max()) - std::max(a.x_min(), b.x_min()));
    const double ih = std::max(0.0, std::min(a.y_max(), b.y_max()) - std::max(a.y_min(), b.y_min()));
    const double inter = iw * ih;
    ASSERT_NEAR(v, inter / (a.area() + b.area() - inter), 1e-12);
  }
}

TEST(ContainmentTest, SpecExamples) {
  const BBox x(0, 0, 100, 100);
  EXPECT_TRUE(contains_within_slack(x, BBox(10, 10, 50, 50), 10));
  EXPECT_TRUE(contains_within_slack(x, BBox(-10, 0, 50, 50), 10));
  EXPECT_FALSE(contains_within_slack(x, BBox(-11, 0, 50, 50), 10));
}

TEST(ContainmentTest, SlackIsPerEdge) {
  const BBox x(0, 0, 100, 100);
  // Every edge protrudes by 10: allowed at eps = 10.
  EXPECT_TRUE(contains_within_slack(x, BBox(-10, -10, 110, 110), 10));
  EXPECT_FALSE(contains_within_slack(x, BBox(0, 0, 100, 110.5), 10));
  EXPECT_THROW(contains_within_slack(x, x, -1.0), InvalidArgument);
}

TEST(ContainmentTest, ZeroSlackMeansSubsetAndMonotoneInEpsilon) {
  std::mt19937_64 rng(11);
  for (int i = 0; i < 10000; ++i) {
    const BBox a = random_box(rng), b = random_box(rng);
    const bool subset = b.x_min() >= a.x_min() && b.y_min() >= a.y_min() && b.x_max() <= a.x_max() &&
                        b.y_max() <= a.y_max();
    ASSERT_EQ(contains_within_slack(a, b, 0.0), subset);
    for (double eps : {0.0, 1.0, 5.0, 10.0, 40.0}) {
      if (contains_within_slack(a, b, eps)) {
        ASSERT_TRUE(contains_within_slack(a, b, eps + 0.5));
      }
    }
  }
}

TEST(NmsTest, SpecExamples) {
  EXPECT_TRUE(nms({}, 0.5).empty());
  const std::vector<ScoredBox> one{{BBox(0, 0, 10, 10), 0.3}};
  ASSERT_EQ(nms(one, 0.5).size(), 1u);

  const std::vector<ScoredBox> same{{BBox(0, 0, 10, 10), 0.8}, {BBox(0, 0, 10, 10), 0.9}};
  const auto kept = nms(same, 0.5);
  ASSERT_EQ(kept.size(), 1u);
  EXPECT_DOUBLE_EQ(kept[0].score, 0.9);

  const std::vector<ScoredBox> disjoint{{BBox(0, 0, 10, 10), 0.8}, {BBox(20, 20, 30, 30), 0.9}};
  EXPECT_EQ(nms(disjoint, 0.5).size(), 2u);
  EXPECT_THROW(nms(disjoint, 1.5), InvalidArgument);
}

TEST(NmsTest, OutputSortedSeparatedAndIdempotent) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> score(0.0, 1.0);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<ScoredBox> boxes;
    for (int i = 0; i < 60; ++i) boxes.push_back({random_box(rng), score(rng)});
    const auto kept = nms(boxes, 0.4);
    for (std::size_t i = 1; i < kept.size(); ++i) ASSERT_GT(kept[i - 1].score, kept[i].score);
    for (std::size_t i = 0; i < kept.size(); ++i) {
      for (std::size_t j = i + 1; j < kept.size(); ++j) ASSERT_LE(iou(kept[i].box, kept[j].box), 0.4);
    }
    const auto again = nms(kept, 0.4);
    ASSERT_EQ(again.size(), kept.size());
    for (std::size_t i = 0; i < kept.size(); ++i) {
      ASSERT_EQ(again[i].box, kept[i].box);
      ASSERT_EQ(again[i].score, kept[i].score);
    }
  }
}

TEST(ClipTest, ClipsToImage) {
  const BBox c = clip_to_image(BBox(-5, -5, 50, 120), 40, 100);
  EXPECT_EQ(c, BBox(0, 0, 40, 100));
  EXPECT_TRUE(intersects_image(BBox(-5, -5, 1, 1), 10, 10));
  EXPECT_FALSE(intersects_image(BBox(10, 0, 20, 5), 10, 10));
}

}  // namespace
}  // namespace partloc
