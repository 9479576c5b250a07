#include "partloc/detect.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "partloc/error.hpp"
#include "test_util.hpp"

namespace partloc {
namespace {

TEST(SigmoidTest, AnalyticValues) {
  EXPECT_DOUBLE_EQ(sigmoid(0.0), 0.5);
  EXPECT_NEAR(sigmoid(std::log(3.0)), 0.75, 1e-15);
  EXPECT_NEAR(sigmoid(-std::log(3.0)), 0.25, 1e-15);
  EXPECT_NEAR(log_sigmoid(std::log(3.0)), std::log(0.75), 1e-15);
  EXPECT_TRUE(std::isfinite(log_sigmoid(-1000.0)));
  EXPECT_NEAR(log_sigmoid(-1000.0), -1000.0, 1e-9);
}

TEST(SigmoidTest, MonotoneAndSymmetric) {
  double prev = -1.0;
  for (double m = -30.0; m <= 30.0; m += 0.25) {
    const double s = sigmoid(m);
    EXPECT_GT(s, prev);
    EXPECT_NEAR(sigmoid(-m), 1.0 - s, 1e-15);
    prev = s;
  }
}

TEST(DetectorTest, ScoreAndDimensionCheck) {
  Detector d;
  d.w = {1.0, -1.0};
  d.b = std::log(3.0);
  const std::vector<float> zero{0.0f, 0.0f}, bad{1.0f};
  EXPECT_NEAR(d.score(zero), 0.75, 1e-15);
  EXPECT_THROW(d.score(bad), InvalidArgument);
}

TEST(CalibrateTest, Examples) {
  const std::vector<double> s{0.9, 0.8, 0.2};
  EXPECT_DOUBLE_EQ(calibrate_threshold(s, 1.0), 0.2);
  EXPECT_DOUBLE_EQ(calibrate_threshold(s, 0.66), 0.8);
  const std::vector<double> one{0.37};
  EXPECT_DOUBLE_EQ(calibrate_threshold(one, 0.95), 0.37);
  EXPECT_THROW(calibrate_threshold({}, 0.95), InvalidArgument);
  EXPECT_THROW(calibrate_threshold(s, 0.0), InvalidArgument);
}

TEST(CalibrateTest, ReachesTargetRecall) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int t = 0; t < 200; ++t) {
    std::vector<double> s(1 + t % 37);
    for (auto& v : s) v = u(rng);
    const double target = u(rng) * 0.99 + 0.01;
    const double tau = calibrate_threshold(s, target);
    const auto hit = std::count_if(s.begin(), s.end(), [&](double v) { return v >= tau; });
    EXPECT_GE(static_cast<double>(hit) / static_cast<double>(s.size()), target);
    // Any larger candidate threshold misses the target.
    for (double v : s) {
      if (v > tau) {
        const auto h2 = std::count_if(s.begin(), s.end(), [&](double x) { return x >= v; });
        EXPECT_LT(static_cast<double>(h2) / static_cast<double>(s.size()), target);
      }
    }
  }
}

TEST(LabelRegionsTest, Examples) {
  const BBox gt(0, 0, 100, 100);
  const std::vector<Region> regions{{0, gt}, {1, BBox(300, 300, 400, 400)}, {2, BBox(0, 0, 100, 50)}};
  const std::vector<BBox> part{gt}, all{gt};
  const auto labels = label_regions(regions, part, all, {});
  ASSERT_EQ(labels.size(), 3u);
  EXPECT_EQ(labels[0], RegionLabel::kPositive);
  EXPECT_EQ(labels[1], RegionLabel::kNegative);
  EXPECT_EQ(labels[2], RegionLabel::kIgnore);  // IoU 0.5
}

TEST(LabelRegionsTest, NegativeRequiresLowOverlapWithEveryGroundTruth) {
  const BBox head(0, 0, 20, 20), body(50, 50, 150, 150);
  const std::vector<Region> regions{{0, BBox(50, 50, 150, 150)}};
  const std::vector<BBox> part{head}, all{head, body};
  EXPECT_EQ(label_regions(regions, part, all, {})[0], RegionLabel::kIgnore);
  EXPECT_THROW((TrainingLabelRule{0.3, 0.3}.validate()), InvalidArgument);
  EXPECT_THROW((TrainingLabelRule{1.1, 0.3}.validate()), InvalidArgument);
}

TEST(DetectorIoTest, SaveLoadRoundTrip) {
  testing::TempDir dir;
  Detector root;
  root.name = "root";
  root.w = {1.0, 2.0, 3.0};
  Detector d;
  d.part_id = 1;
  d.name = "head";
  d.w = {0.1, -0.2, 1.0 / 3.0};
  d.b = -0.125;
  d.tau = 0.3141592653589793;
  d.meta = {0.5, 99, 12};
  save_detectors(dir / "d.json", {root, d});
  const auto back = load_detectors(dir / "d.json");
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[0].w, root.w);
  EXPECT_EQ(back[1].part_id, 1);
  EXPECT_EQ(back[1].name, "head");
  EXPECT_EQ(back[1].w, d.w);
  EXPECT_EQ(back[1].b, d.b);
  EXPECT_EQ(back[1].tau, d.tau);
  EXPECT_EQ(back[1].channel, "detector");
  EXPECT_EQ(back[1].meta.seed, 99u);
  testing::write_text(dir / "bad.json", "[{\"part_id\": 0}]");
  EXPECT_THROW(load_detectors(dir / "bad.json"), Error);
}

// Two-blob features: region content is a noisy copy of a class prototype.
TEST(TrainDetectorsTest, LearnsSeparableParts) {
  const std::size_t dim = 6;
  FeatureStore store({kDetectorChannel, static_cast<std::uint32_t>(dim)});
  std::vector<ImageTruth> truth;
  ProposalMap proposals;
  std::mt19937_64 rng(3);
  std::normal_distribution<float> noise(0.0f, 0.1f);
  auto vec = [&](std::size_t hot) {
    std::vector<float> v(dim);
    for (auto& x : v) x = noise(rng);
    v[hot] += 1.0f;
    return v;
  };
  for (std::uint64_t img = 0; img < 20; ++img) {
    ImageTruth t;
    t.image_id = img;
    t.label = 1;
    t.split = Split::kTrain;
    t.parts = {BBox(0, 0, 100, 100), BBox(10, 10, 40, 40)};
    truth.push_back(t);
    ProposalSet ps{img, {{0, BBox(0, 0, 100, 100)}, {1, BBox(10, 10, 40, 40)}, {2, BBox(200, 200, 260, 260)}}};
    proposals[img] = ps;
    store.put({img, 0}, vec(0));
    store.put({img, 1}, vec(1));
    store.put({img, 2}, vec(2));
    store.put({img, ground_truth_region(0)}, vec(0));
    store.put({img, ground_truth_region(1)}, vec(1));
  }
  std::vector<PartSpec> specs{{0, "root", {}}, {1, "head", {KeypointName::kCrown}}};
  DetectorTrainingOptions opts;
  const auto dets = train_detectors(truth, proposals, store, specs, opts);
  ASSERT_EQ(dets.size(), 2u);
  for (std::uint64_t img = 0; img < 20; ++img) {
    EXPECT_GT(dets[0].score(store.get({img, 0})), 0.5);
    EXPECT_LT(dets[0].score(store.get({img, 2})), 0.5);
    EXPECT_GT(dets[1].score(store.get({img, 1})), 0.5);
    EXPECT_LT(dets[1].score(store.get({img, 2})), 0.5);
  }
  const auto again = train_detectors(truth, proposals, store, specs, opts);
  EXPECT_EQ(again[1].w, dets[1].w);
  EXPECT_EQ(again[1].tau, dets[1].tau);
}

}  // namespace
}  // namespace partloc
