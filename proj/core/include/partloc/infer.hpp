#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "partloc/detect.hpp"
#include "partloc/featstore.hpp"
#include "partloc/priors.hpp"
#include "partloc/proposals.hpp"

namespace partloc {

/// Detector outputs over the candidate windows of one image.
struct InferenceProblem {
  std::uint64_t image_id = 0;
  std::vector<Region> regions;
  /// [part][region]: sigmoid score and its log.
  std::vector<std::vector<double>> scores;
  std::vector<std::vector<double>> log_scores;
  /// Per-part score thresholds tau_i; entry 0 is not used.
  std::vector<double> thresholds;

  std::size_t num_parts() const noexcept { return scores.size(); }
  /// Adds a window with the given per-part margins; returns its index.
  std::size_t add_region(const Region& region, std::span<const double> margins);
  /// Region indices ordered by root score (desc), then region id (asc).
  std::vector<std::size_t> root_order() const;
};

/// Scores every proposal with every detector.
InferenceProblem build_problem(const ProposalSet& proposals, const std::vector<Detector>& detectors,
                               const FeatureStore& features);

struct PartChoice {
  std::uint32_t region_id = 0;
  BBox box;
  double score = 0.0;
};

struct Configuration {
  std::uint64_t image_id = 0;
  /// Indexed by part id; parts[0] is the root and always present.
  std::vector<std::optional<PartChoice>> parts;
  double log_score = 0.0;

  const PartChoice& root() const { return *parts.at(0); }
  bool present(std::size_t part) const { return part < parts.size() && parts[part].has_value(); }
};

/// Score credited to an absent part: log(tau_i) - 1, below any admissible
/// present detection.
double absent_part_floor(double tau) noexcept;

struct InferOptions {
  /// Number of best-scoring root windows searched; 0 searches all.
  std::size_t top_m_roots = 0;
  /// When set, only these region indices are root candidates.
  std::optional<std::vector<std::size_t>> root_candidates;
};

/// Exact argmax of log d_0(x_0) + sum_i part terms + log Delta(X). For each
/// root candidate, each part independently takes its best admissible window
/// (score >= tau_i and inside the gate), or is absent and scores
/// absent_part_floor when no admissible window does better. Ties: higher root
/// score, then lower region id; a present part beats an equal floor.
Configuration infer_configuration(const InferenceProblem& problem, const ConfigurationPrior& prior,
                                  const InferOptions& options = {});

/// Exhaustive reference for infer_configuration: enumerates every
/// (root, part...) tuple, absent options included, and scores each with the
/// joint prior. At most kOracleMaxRegions windows.
inline constexpr std::size_t kOracleMaxRegions = 200;
Configuration brute_force_oracle(const InferenceProblem& problem, const ConfigurationPrior& prior,
                                 const InferOptions& options = {});

/// Index of the top-scoring root window.
std::size_t top_root(const InferenceProblem& problem);

/// Full per-image inference: scores proposals, resolves the prior (the
/// neighbour prior is conditioned on the top root window's appearance) and
/// runs infer_configuration.
Configuration infer_image(const ProposalSet& proposals, const std::vector<Detector>& detectors,
                          const PriorModel& prior, const FeatureStore& detector_features,
                          const FeatureStore* appearance_features, const InferOptions& options = {});

/// Writes one JSON object per configuration.
void write_configurations(const std::filesystem::path& path, const std::vector<Configuration>& configs,
                          const std::vector<std::string>& part_names);
std::vector<Configuration> read_configurations(const std::filesystem::path& path,
                                               const std::vector<std::string>& part_names);

}  // namespace partloc
