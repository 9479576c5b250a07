#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace partloc {

struct SvmOptions {
  /// Weight of the summed hinge loss in 1/2 |w|^2 + C sum hinge.
  double C = 1.0;
  int epochs = 80;
  std::uint64_t seed = 0;
};

struct SvmModel {
  std::vector<double> w;
  double b = 0.0;
  double objective = 0.0;
  /// Objective of the best model so far, after each epoch; non-increasing.
  std::vector<double> objective_history;
};

/// Rows of a training set; all rows must share one length.
using SvmRows = std::vector<std::span<const float>>;

/// Primal objective 1/2 |w|^2 + C sum_i max(0, 1 - y_i (w.x_i + b)).
double svm_objective(std::span<const double> w, double b, const SvmRows& positives, const SvmRows& negatives,
                     double C);

/// Linear SVM by stochastic subgradient steps on (w, b) with the Pegasos step
/// schedule and seeded shuffling. After each epoch the last iterate and the
/// epoch average are both refit with the exact optimal bias; the one with the
/// lower objective replaces the best model if it improves on it.
SvmModel train_linear_svm(const SvmRows& positives, const SvmRows& negatives, const SvmOptions& options);

/// argmin_b sum_i max(0, 1 - y_i (margins_i + b)); picks the midpoint of the
/// minimising interval.
double optimal_bias(std::span<const double> pos_margins, std::span<const double> neg_margins);

}  // namespace partloc
