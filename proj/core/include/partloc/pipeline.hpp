#pragma once

#include <filesystem>
#include <functional>
#include <span>
#include <vector>

#include "partloc/classify.hpp"
#include "partloc/config.hpp"
#include "partloc/dataset.hpp"
#include "partloc/detect.hpp"
#include "partloc/featstore.hpp"
#include "partloc/infer.hpp"
#include "partloc/priors.hpp"
#include "partloc/proposals.hpp"

namespace partloc {

using RasterSource = std::function<Raster(const AnnotatedImage&)>;

/// Reads `root / image.image_path` as PGM.
RasterSource rasters_from_directory(std::filesystem::path root);
/// Serves rasters held in memory, in dataset order.
RasterSource rasters_from_memory(const Dataset& dataset, const std::vector<Raster>& rasters);

struct FeatureStores {
  FeatureStore detector;
  FeatureStore appearance;
};

/// Toy features for every proposal and every annotated part box (the latter
/// under ground_truth_region(part)), on both channels.
FeatureStores extract_features(const Dataset& dataset, const std::vector<ImageTruth>& truth,
                               const ProposalMap& proposals, const RasterSource& rasters,
                               const ExperimentConfig::Features& options, int jobs = 1);

std::vector<ImageTruth> select_split(const std::vector<ImageTruth>& truth, Split split);

/// Runs inference on every image of `images` (bbox-given or bbox-unknown),
/// in input order. Results do not depend on `jobs`.
std::vector<Configuration> infer_images(std::span<const ImageTruth> images, const ProposalMap& proposals,
                                        const std::vector<Detector>& detectors, const PriorModel& prior,
                                        const FeatureStore& detector_features,
                                        const FeatureStore* appearance_features, bool bbox_given,
                                        const InferOptions& options = {}, int jobs = 1);

enum class LocationSource : std::uint8_t { kInferred, kOracle };

struct ClassifierSetup {
  double C = 1.0;
  int epochs = 80;
  std::uint64_t seed = 0;
  bool block_l2 = false;
  /// Root block only (no-parts ablation).
  bool root_only = false;
};
ClassifierSetup classifier_setup(const ExperimentConfig& config);

/// One-vs-all classifier on features at the annotated boxes of the training
/// images in `truth`.
Classifier train_pose_classifier(const std::vector<ImageTruth>& truth, const FeatureStore& detector_features,
                                 const ClassifierSetup& setup);

/// Predictions for `images`; `configs` (same order) is read for inferred
/// locations and may be empty for the oracle source.
std::vector<PredictionRow> predict_images(std::span<const ImageTruth> images, std::span<const Configuration> configs,
                                          const Classifier& classifier, const FeatureStore& detector_features,
                                          LocationSource source, const ClassifierSetup& setup);

}  // namespace partloc
