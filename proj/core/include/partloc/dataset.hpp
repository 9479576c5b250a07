#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "partloc/geometry.hpp"

namespace partloc {

/// The fifteen CUB-200-2011 keypoints, in the order of parts/parts.txt.
enum class KeypointName : std::uint8_t {
  kBack,
  kBeak,
  kBelly,
  kBreast,
  kCrown,
  kForehead,
  kLeftEye,
  kLeftLeg,
  kLeftWing,
  kNape,
  kRightEye,
  kRightLeg,
  kRightWing,
  kTail,
  kThroat,
};

inline constexpr std::size_t kNumKeypoints = 15;

std::string_view keypoint_label(KeypointName name) noexcept;
/// Inverse of keypoint_label; throws InvalidArgument on unknown names.
KeypointName keypoint_from_label(std::string_view label);

struct Keypoint {
  KeypointName name;
  double x = 0.0;
  double y = 0.0;
  bool visible = false;

  friend bool operator==(const Keypoint&, const Keypoint&) = default;
};

enum class Split : std::uint8_t { kTrain, kTest };

std::string_view split_label(Split split) noexcept;

struct AnnotatedImage {
  std::uint64_t image_id = 0;
  std::string image_path;
  int label = 0;
  BBox object_box{0, 0, 1, 1};
  std::array<Keypoint, kNumKeypoints> keypoints{};
  Split split = Split::kTrain;
  // 0 when the image size is not known (CUB text files do not carry it).
  int width = 0;
  int height = 0;

  friend bool operator==(const AnnotatedImage&, const AnnotatedImage&) = default;
};

/// Part definition. Part 0 is always the whole object ("root"); every other
/// part is the box around a subset of keypoints.
struct PartSpec {
  int part_id = 0;
  std::string name;
  std::vector<KeypointName> keypoints;
};

/// root, head = {beak, forehead, crown, left eye, right eye, nape, throat},
/// body = all fifteen keypoints.
std::vector<PartSpec> default_cub_parts();

/// Checks ids are dense, start at 0 and part 0 has no keypoints.
void validate_part_specs(const std::vector<PartSpec>& specs);

struct PartBoxOptions {
  double pad_fraction = 0.1;
  /// Boxes narrower than this are grown symmetrically; 0 disables the floor.
  double min_side = 16.0;
};

/// One optional box per part id. Parts with no visible keypoints are absent.
std::vector<std::optional<BBox>> derive_part_boxes(const AnnotatedImage& img,
                                                   const std::vector<PartSpec>& specs,
                                                   const PartBoxOptions& options = {});

using Dataset = std::vector<AnnotatedImage>;

/// Reads images.txt, bounding_boxes.txt, parts/part_locs.txt,
/// image_class_labels.txt and train_test_split.txt under `root`.
Dataset load_cub(const std::filesystem::path& root);

void write_manifest(const std::filesystem::path& path, const Dataset& dataset);
Dataset read_manifest(const std::filesystem::path& path);

/// Ground-truth boxes per part, resolved once from the annotations.
struct ImageTruth {
  std::uint64_t image_id = 0;
  int label = 0;
  Split split = Split::kTrain;
  std::vector<std::optional<BBox>> parts;  // index = part id; [0] = object box
};

std::vector<ImageTruth> resolve_truth(const Dataset& dataset, const std::vector<PartSpec>& specs,
                                      const PartBoxOptions& options);

/// Number of visible-keypoint parts whose derived box misses the object box.
std::size_t count_parts_outside_object(const std::vector<ImageTruth>& truth);

}  // namespace partloc
