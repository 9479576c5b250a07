#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
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

struct PartPcp {
  std::size_t correct = 0;
  std::size_t total = 0;
  double fraction() const noexcept { return total == 0 ? 0.0 : static_cast<double>(correct) / static_cast<double>(total); }
};

/// Per part id, over the images in `truth` where the part is annotated: a
/// prediction is correct when present with IoU >= overlap. Every image in
/// `truth` needs a prediction; a part with no annotated image is an error.
std::vector<PartPcp> pcp(std::span<const Configuration> predictions, std::span<const ImageTruth> truth,
                         double overlap = 0.5);

/// Fraction of images whose predicted label equals the true label. The two
/// maps must have the same keys.
double accuracy(const std::map<std::uint64_t, int>& predicted, const std::map<std::uint64_t, int>& labels);
double accuracy(std::span<const PredictionRow> rows);

/// Inference with the object box known: the root is fixed to `gt_root` (read
/// from the stores under ground_truth_region(0)), parts must pass the
/// containment gate around it, and the neighbour prior is queried with its
/// appearance. A null prior is replaced by the box prior.
Configuration bbox_given_inference(const ProposalSet& proposals, const BBox& gt_root,
                                   const std::vector<Detector>& detectors, const PriorModel& prior,
                                   const FeatureStore& detector_features, const FeatureStore* appearance_features);

/// Fold index per sample: samples of each class are shuffled with `seed` and
/// dealt round-robin, each class starting one fold after the previous one.
std::vector<int> stratified_folds(std::span<const int> labels, int folds, std::uint64_t seed);

enum class SweepParam : std::uint8_t { kAlpha, kNeighbors };
std::string sweep_param_name(SweepParam param);
SweepParam sweep_param_from(const std::string& name);

struct SweepRow {
  double value = 0.0;
  double mean_accuracy = 0.0;
  std::vector<double> fold_accuracy;
};

/// k-fold cross-validation on the training split of the neighbour geometric
/// prior, sweeping alpha (K fixed to config.prior.neighbors) or K (alpha fixed
/// to config.prior.alpha). Detectors and the classifier are trained once per
/// fold; only the prior and the inference change along the grid.
std::vector<SweepRow> cross_validate(const std::vector<ImageTruth>& truth, const ProposalMap& proposals,
                                     const FeatureStore& detector_features, const FeatureStore& appearance_features,
                                     const std::vector<PartSpec>& specs, const ExperimentConfig& config,
                                     SweepParam param, int jobs = 1);

/// CSV `param,value,mean_accuracy,fold_1,...,fold_k`.
void write_sweep_csv(const std::filesystem::path& path, SweepParam param, std::span<const SweepRow> rows);
/// Static line chart of mean accuracy against the swept value.
void write_sweep_svg(const std::filesystem::path& path, SweepParam param, std::span<const SweepRow> rows);

}  // namespace partloc
