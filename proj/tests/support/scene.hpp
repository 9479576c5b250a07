#pragma once

// A generated synthetic scene with resolved truth and extracted features.

#include "partloc/config.hpp"
#include "partloc/pipeline.hpp"
#include "partloc/synth.hpp"

namespace partloc::testing {

struct PreparedScene {
  ExperimentConfig config;
  SynthScene scene;
  std::vector<ImageTruth> truth;
  FeatureStores stores;
};

inline PreparedScene prepare_scene(const SynthSpec& spec, std::uint64_t seed, int jobs = 1) {
  PreparedScene p;
  p.config.seed = seed;
  p.config.synth = spec;
  p.config.resolve_seeds();
  p.scene = generate(spec, seed);
  p.truth = resolve_truth(p.scene.dataset, p.scene.parts, p.scene.box_options);
  p.stores = extract_features(p.scene.dataset, p.truth, p.scene.proposals,
                              rasters_from_memory(p.scene.dataset, p.scene.rasters), p.config.features, jobs);
  return p;
}

}  // namespace partloc::testing
