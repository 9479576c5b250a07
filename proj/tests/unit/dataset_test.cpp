#include "partloc/dataset.hpp"

#include <gtest/gtest.h>

#include <set>
#include <sstream>

#include "partloc/error.hpp"
#include "test_util.hpp"

namespace partloc {
namespace {

using testing::TempDir;
using testing::write_text;

// Minimal CUB layout with two images.
void write_cub(const std::filesystem::path& root, bool truncate_boxes = false) {
  write_text(root / "images.txt", "1 001.Black_footed_Albatross/a.jpg\n2 002.Laysan_Albatross/b.jpg\n");
  write_text(root / "bounding_boxes.txt",
             truncate_boxes ? "1 10.0 20.0 100.0\n" : "1 10.0 20.0 100.0 80.0\n2 5 5 50 40\n");
  write_text(root / "image_class_labels.txt", "1 1\n2 2\n");
  write_text(root / "train_test_split.txt", "1 1\n2 0\n");
  std::ostringstream parts;
  for (int img = 1; img <= 2; ++img) {
    for (int p = 1; p <= 15; ++p) {
      const bool visible = !(img == 2 && p == 2);
      parts << img << ' ' << p << ' ' << (visible ? 20 + p : 0) << ' ' << (visible ? 30 + p : 0) << ' '
            << (visible ? 1 : 0) << '\n';
    }
  }
  write_text(root / "parts" / "part_locs.txt", parts.str());
}

TEST(LoadCubTest, ReadsAllFiles) {
  TempDir dir;
  write_cub(dir.path());
  const Dataset ds = load_cub(dir.path());
  ASSERT_EQ(ds.size(), 2u);
  EXPECT_EQ(ds[0].image_id, 1u);
  EXPECT_EQ(ds[0].image_path, "001.Black_footed_Albatross/a.jpg");
  EXPECT_EQ(ds[0].label, 1);
  EXPECT_EQ(ds[0].split, Split::kTrain);
  EXPECT_EQ(ds[1].split, Split::kTest);
  EXPECT_EQ(ds[0].object_box, BBox(10, 20, 110, 100));
  const Keypoint& beak = ds[1].keypoints[static_cast<std::size_t>(KeypointName::kBeak)];
  EXPECT_FALSE(beak.visible);
  const Keypoint& tail = ds[0].keypoints[static_cast<std::size_t>(KeypointName::kTail)];
  EXPECT_TRUE(tail.visible);
  EXPECT_DOUBLE_EQ(tail.x, 34.0);
  EXPECT_DOUBLE_EQ(tail.y, 44.0);
}

TEST(LoadCubTest, SingleImageRoot) {
  TempDir dir;
  write_text(dir / "images.txt", "7 x/y.jpg\n");
  write_text(dir / "bounding_boxes.txt", "7 0 0 10 10\n");
  write_text(dir / "image_class_labels.txt", "7 3\n");
  write_text(dir / "train_test_split.txt", "7 0\n");
  write_text(dir / "parts/part_locs.txt", "");
  const Dataset ds = load_cub(dir.path());
  ASSERT_EQ(ds.size(), 1u);
  EXPECT_EQ(ds[0].label, 3);
  for (const Keypoint& k : ds[0].keypoints) EXPECT_FALSE(k.visible);
}

TEST(LoadCubTest, TruncatedBoxesNamesFile) {
  TempDir dir;
  write_cub(dir.path(), true);
  try {
    load_cub(dir.path());
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_NE(e.file().find("bounding_boxes.txt"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("bounding_boxes.txt"), std::string::npos);
  }
}

TEST(LoadCubTest, MalformedLineReportsLineNumber) {
  TempDir dir;
  write_cub(dir.path());
  write_text(dir / "image_class_labels.txt", "1 1\n2 abc\n");
  try {
    load_cub(dir.path());
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_NE(e.file().find("image_class_labels.txt"), std::string::npos);
    EXPECT_EQ(e.line(), 2u);
  }
}

TEST(LoadCubTest, MissingFileNamesFile) {
  TempDir dir;
  write_cub(dir.path());
  std::filesystem::remove(dir / "train_test_split.txt");
  try {
    load_cub(dir.path());
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_NE(e.file().find("train_test_split.txt"), std::string::npos);
  }
}

TEST(ManifestTest, RoundTripIsIdentical) {
  TempDir dir;
  write_cub(dir.path());
  Dataset ds = load_cub(dir.path());
  ds[0].width = 640;
  ds[0].height = 480;
  ds[1].object_box = BBox(0.1, 0.2, 33.3333333333, 44.4);
  write_manifest(dir / "m.jsonl", ds);
  const Dataset back = read_manifest(dir / "m.jsonl");
  ASSERT_EQ(back.size(), ds.size());
  for (std::size_t i = 0; i < ds.size(); ++i) EXPECT_EQ(back[i], ds[i]);
}

TEST(ManifestTest, MalformedLineReportsLineNumber) {
  TempDir dir;
  write_cub(dir.path());
  write_manifest(dir / "m.jsonl", load_cub(dir.path()));
  std::string text = testing::read_bytes(dir / "m.jsonl");
  text += "{\"image_id\": 3}\n";
  write_text(dir / "m.jsonl", text);
  try {
    read_manifest(dir / "m.jsonl");
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 3u);
  }
}

AnnotatedImage image_with(std::initializer_list<std::pair<KeypointName, std::pair<double, double>>> visible) {
  AnnotatedImage img;
  img.object_box = BBox(0, 0, 200, 200);
  for (std::size_t k = 0; k < kNumKeypoints; ++k) img.keypoints[k].name = static_cast<KeypointName>(k);
  for (const auto& [name, xy] : visible) {
    auto& kp = img.keypoints[static_cast<std::size_t>(name)];
    kp.x = xy.first;
    kp.y = xy.second;
    kp.visible = true;
  }
  return img;
}

TEST(DerivePartBoxesTest, InvisibleHeadIsAbsent) {
  const auto img = image_with({{KeypointName::kTail, {100, 100}}, {KeypointName::kBack, {120, 90}}});
  const auto boxes = derive_part_boxes(img, default_cub_parts());
  ASSERT_EQ(boxes.size(), 3u);
  EXPECT_EQ(boxes[0], img.object_box);
  EXPECT_FALSE(boxes[1].has_value());
  EXPECT_TRUE(boxes[2].has_value());
}

TEST(DerivePartBoxesTest, SingleKeypointGivesSquareAtMinimumSide) {
  const auto img = image_with({{KeypointName::kCrown, {50, 50}}});
  const auto boxes = derive_part_boxes(img, default_cub_parts(), {0.1, 16.0});
  ASSERT_TRUE(boxes[1].has_value());
  EXPECT_EQ(*boxes[1], BBox(42, 42, 58, 58));
}

TEST(DerivePartBoxesTest, TightBoxWithoutPadding) {
  const auto img = image_with({{KeypointName::kCrown, {10, 10}}, {KeypointName::kBeak, {30, 30}}});
  const auto boxes = derive_part_boxes(img, default_cub_parts(), {0.0, 0.0});
  ASSERT_TRUE(boxes[1].has_value());
  EXPECT_EQ(*boxes[1], BBox(10, 10, 30, 30));
}

TEST(DerivePartBoxesTest, PadsByDiagonalAndClipsToImage) {
  auto img = image_with({{KeypointName::kCrown, {0, 0}}, {KeypointName::kBeak, {30, 40}}});
  img.width = 100;
  img.height = 100;
  const auto boxes = derive_part_boxes(img, default_cub_parts(), {0.1, 0.0});
  // Diagonal 50, pad 5 per side; the min edges clip at 0.
  EXPECT_EQ(*boxes[1], BBox(0, 0, 35, 45));
  EXPECT_THROW(derive_part_boxes(img, default_cub_parts(), {-0.1, 0.0}), InvalidArgument);
}

TEST(PartSpecTest, DefaultsAndValidation) {
  const auto parts = default_cub_parts();
  ASSERT_EQ(parts.size(), 3u);
  EXPECT_EQ(parts[1].keypoints.size(), 7u);
  EXPECT_EQ(parts[2].keypoints.size(), kNumKeypoints);
  EXPECT_NO_THROW(validate_part_specs(parts));
  auto bad = parts;
  bad[2].part_id = 5;
  EXPECT_THROW(validate_part_specs(bad), InvalidArgument);
  bad = parts;
  bad[0].keypoints.push_back(KeypointName::kBack);
  EXPECT_THROW(validate_part_specs(bad), InvalidArgument);
}

TEST(KeypointTest, LabelsRoundTrip) {
  std::set<std::string_view> seen;
  for (std::size_t k = 0; k < kNumKeypoints; ++k) {
    const auto name = static_cast<KeypointName>(k);
    EXPECT_EQ(keypoint_from_label(keypoint_label(name)), name);
    seen.insert(keypoint_label(name));
  }
  EXPECT_EQ(seen.size(), kNumKeypoints);
  EXPECT_THROW(keypoint_from_label("wing"), InvalidArgument);
}

TEST(ResolveTruthTest, CountsPartsOutsideObject) {
  auto img = image_with({{KeypointName::kCrown, {10, 10}}});
  img.object_box = BBox(100, 100, 150, 150);
  const auto truth = resolve_truth({img}, default_cub_parts(), {});
  ASSERT_EQ(truth.size(), 1u);
  EXPECT_EQ(count_parts_outside_object(truth), 2u);
}

}  // namespace
}  // namespace partloc
