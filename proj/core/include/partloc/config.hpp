#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "partloc/dataset.hpp"
#include "partloc/detect.hpp"
#include "partloc/priors.hpp"
#include "partloc/proposals.hpp"
#include "partloc/svm.hpp"
#include "partloc/synth.hpp"

namespace partloc {

/// Settings for every stage, one JSON section per module.
struct ExperimentConfig {
  std::uint64_t seed = 0;

  struct Dataset {
    PartBoxOptions boxes;
    /// Empty: take parts from a parts.json next to the manifest, else the
    /// CUB head/body definition.
    std::vector<PartSpec> parts;
  } dataset;

  struct Features {
    int detector_grid = 16;
    int appearance_grid = 8;
    double context_pixels = 16.0;
    double warp_size = 227.0;
  } features;

  DenseProposalOptions proposals;

  /// `svm.seed` and `jobs` are filled in at run time.
  DetectorTrainingOptions detect;

  PriorConfig prior;

  struct Infer {
    std::size_t top_m_roots = 0;
    bool bbox_given = false;
  } infer;

  struct Classify {
    double C = 1.0;
    int epochs = 80;
    bool block_l2 = false;
  } classify;

  struct Eval {
    double overlap = 0.5;
    std::vector<double> recall_thresholds{0.5, 0.6, 0.7};
    int folds = 5;
    std::vector<double> alpha_grid{0.0, 0.05, 0.1, 0.2, 0.4, 0.8};
    std::vector<int> k_grid{1, 5, 10, 15, 20, 30};
  } eval;

  SynthSpec synth = default_synth_spec();

  /// Propagates `seed` into the per-stage seeds.
  void resolve_seeds();
  void validate() const;
};

/// Keys missing from the JSON keep their defaults; unknown keys are errors.
ExperimentConfig parse_config(const std::string& json_text);
ExperimentConfig load_config(const std::filesystem::path& path);
std::string dump_config(const ExperimentConfig& config);
void save_config(const std::filesystem::path& path, const ExperimentConfig& config);

/// Part definitions and box options stored next to a manifest.
struct PartsFile {
  PartBoxOptions boxes;
  std::vector<PartSpec> parts;
};
void write_parts_file(const std::filesystem::path& path, const PartsFile& parts);
PartsFile read_parts_file(const std::filesystem::path& path);

/// Part definitions for a manifest: explicit config parts, else
/// <manifest dir>/parts.json, else the CUB defaults with config box options.
PartsFile resolve_parts(const ExperimentConfig& config, const std::filesystem::path& manifest);

}  // namespace partloc
