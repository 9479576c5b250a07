#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "partloc/dataset.hpp"
#include "partloc/featstore.hpp"
#include "partloc/infer.hpp"
#include "partloc/svm.hpp"

namespace partloc {

/// Concatenation [phi(x_0) ... phi(x_n)] of detector-channel features; the
/// block of an absent part is all zeros.
struct PoseNormalizedFeature {
  FeatureVector values;
  std::vector<bool> present;
  std::size_t block_dim = 0;
};

/// Builds the feature from per-part region ids (nullopt = absent part).
PoseNormalizedFeature build_feature(std::uint64_t image_id, std::span<const std::optional<std::uint32_t>> regions,
                                    const FeatureStore& features, bool block_l2 = false);

/// Feature at the inferred configuration.
PoseNormalizedFeature build_feature(const Configuration& config, const FeatureStore& features, bool block_l2 = false);

/// Feature at the annotated boxes (oracle mode).
PoseNormalizedFeature build_oracle_feature(const ImageTruth& truth, const FeatureStore& features,
                                           bool block_l2 = false);

/// Only the root block (no-parts ablation).
PoseNormalizedFeature root_only(const PoseNormalizedFeature& f);

struct Prediction {
  int label = 0;
  /// One margin per class, in class order.
  std::vector<double> margins;
};

/// One-vs-all linear classifier.
class Classifier {
 public:
  Classifier() = default;
  Classifier(std::vector<int> classes, std::vector<std::vector<double>> weights, std::vector<double> biases);

  const std::vector<int>& classes() const noexcept { return classes_; }
  std::size_t dim() const noexcept { return weights_.empty() ? 0 : weights_.front().size(); }
  const std::vector<std::vector<double>>& weights() const noexcept { return weights_; }
  const std::vector<double>& biases() const noexcept { return biases_; }

  /// Argmax margin; ties go to the lowest class label.
  Prediction predict(std::span<const float> feature) const;

  void save(const std::filesystem::path& path) const;
  static Classifier load(const std::filesystem::path& path);

 private:
  std::vector<int> classes_;  // ascending
  std::vector<std::vector<double>> weights_;
  std::vector<double> biases_;
};

/// Trains one binary SVM per class with train_linear_svm.
Classifier train_classifier(std::span<const FeatureVector> features, std::span<const int> labels,
                            const SvmOptions& options);

struct PredictionRow {
  std::uint64_t image_id = 0;
  int predicted = 0;
  int actual = 0;
  double margin_top1 = 0.0;
  double margin_top2 = 0.0;
};

PredictionRow make_prediction_row(std::uint64_t image_id, int actual, const Prediction& p);
/// CSV `image_id,predicted,actual,margin_top1,margin_top2`.
void write_predictions(const std::filesystem::path& path, std::span<const PredictionRow> rows);
std::vector<PredictionRow> read_predictions(const std::filesystem::path& path);

}  // namespace partloc
