#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "partloc/dataset.hpp"
#include "partloc/featstore.hpp"
#include "partloc/priors.hpp"
#include "partloc/proposals.hpp"

namespace partloc {

/// Planted layout distribution of one part for one class.
struct LayoutGaussian {
  Layout mean{};
  Layout stddev{};
};

struct SynthPart {
  std::string name;
  /// Layout per class; size = n_classes.
  std::vector<LayoutGaussian> layouts;
  /// Paint a look-alike inside the object at the horizontally mirrored offset.
  bool mirrored_decoy = false;
  /// Look-alikes painted outside the object.
  int outside_decoys = 0;
};

struct SynthSpec {
  int n_train = 150;
  int n_test = 150;
  int image_width = 256;
  int image_height = 256;
  int n_classes = 5;
  double root_min_side = 100.0;
  double root_max_side = 120.0;
  std::vector<SynthPart> parts;
  /// Scales how far apart the class textures are (orientation spread).
  double class_separation = 1.0;
  /// Texture amplitude and pixel noise, in grey levels.
  double amplitude = 50.0;
  double noise_sigma = 20.0;
  /// Paint look-alikes in training images too (test images always get them).
  bool decoys_in_train = false;
  /// Part-sized distractor windows per image (look-alike windows come first).
  int distractor_count = 20;
  /// Object-sized windows elsewhere in the image.
  int background_windows = 4;
  int jitter_per_box = 3;
  /// Jitter magnitude as a fraction of the box side.
  double jitter_fraction = 0.08;
  /// Resample layouts until every part lies within the object box (+epsilon).
  bool enforce_containment = true;
  double containment_epsilon = 10.0;

  void validate() const;
};

/// Two parts ("head", "body") whose head side alternates with the class.
SynthSpec default_synth_spec();

/// Part specs matching the corner-keypoint encoding used by generate():
/// head = {crown, throat}, body = {back, belly}.
std::vector<PartSpec> synth_part_specs(const SynthSpec& spec);
/// Derivation options that reproduce the planted boxes exactly.
PartBoxOptions synth_box_options();

struct SynthScene {
  Dataset dataset;
  std::vector<Raster> rasters;  // same order as dataset
  ProposalMap proposals;
  std::vector<PartSpec> parts;
  PartBoxOptions box_options;
};

/// Fully determined by (spec, seed). Labels are 1..n_classes, assigned
/// round-robin; the first n_train images form the training split.
SynthScene generate(const SynthSpec& spec, std::uint64_t seed);

}  // namespace partloc
