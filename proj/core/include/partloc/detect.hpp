#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "partloc/dataset.hpp"
#include "partloc/featstore.hpp"
#include "partloc/proposals.hpp"
#include "partloc/svm.hpp"

namespace partloc {

struct TrainingLabelRule {
  double pos_iou = 0.7;
  double neg_iou = 0.3;

  void validate() const;
};

enum class RegionLabel : std::uint8_t { kPositive, kNegative, kIgnore };

/// Positive when IoU with some box of this part >= pos_iou; negative when IoU
/// with every ground-truth region of the image (any part) <= neg_iou; ignored
/// otherwise. Ground-truth boxes are added as positives by the caller.
std::vector<RegionLabel> label_regions(std::span<const Region> regions, std::span<const BBox> part_truth,
                                       std::span<const BBox> all_truth, const TrainingLabelRule& rule);

double sigmoid(double margin) noexcept;
/// log(sigmoid(margin)) without overflow.
double log_sigmoid(double margin) noexcept;

struct DetectorMeta {
  double C = 0.0;
  std::uint64_t seed = 0;
  int epochs = 0;
};

struct Detector {
  int part_id = 0;
  std::string name;
  std::vector<double> w;
  double b = 0.0;
  /// Score threshold in (0, 1) reached by target_recall of validation positives.
  double tau = 0.5;
  std::string channel = kDetectorChannel;
  DetectorMeta meta;

  double margin(std::span<const float> phi) const;
  /// sigmoid(w.phi + b).
  double score(std::span<const float> phi) const;
};

/// Largest tau such that at least target_recall of `scores` are >= tau.
double calibrate_threshold(std::span<const double> scores, double target_recall);

struct DetectorTrainingOptions {
  TrainingLabelRule rule;
  SvmOptions svm{1.0, 80, 0};
  std::size_t max_negatives = 50000;
  int hard_negative_rounds = 1;
  double target_recall = 0.95;
  int jobs = 1;
};

/// Trains root and part detectors from proposals on the training split.
/// Features of proposals live under their region id, features of ground-truth
/// boxes under ground_truth_region(part).
std::vector<Detector> train_detectors(const std::vector<ImageTruth>& truth, const ProposalMap& proposals,
                                      const FeatureStore& features, const std::vector<PartSpec>& specs,
                                      const DetectorTrainingOptions& options);

void save_detectors(const std::filesystem::path& path, const std::vector<Detector>& detectors);
std::vector<Detector> load_detectors(const std::filesystem::path& path);

}  // namespace partloc
