#pragma once

// Seeded random inference instances shared by the unit and acceptance tests.

#include <cmath>
#include <random>
#include <vector>

#include "partloc/infer.hpp"
#include "partloc/priors.hpp"

namespace partloc::testing {

inline InferenceProblem empty_problem(std::size_t num_parts) {
  InferenceProblem p;
  p.scores.resize(num_parts);
  p.log_scores.resize(num_parts);
  p.thresholds.assign(num_parts, 0.5);
  return p;
}

/// Root-sized and part-sized windows on a 256x256 canvas with random margins.
/// Windows are shifted copies of a few anchors so containment is often near
/// the slack boundary.
inline InferenceProblem random_problem(std::uint64_t seed, std::size_t num_regions, std::size_t num_parts = 3) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::normal_distribution<double> margin(-0.5, 1.5);
  InferenceProblem p = empty_problem(num_parts);
  p.image_id = seed;
  for (std::size_t i = 1; i < num_parts; ++i) p.thresholds[i] = 0.15 + 0.5 * u(rng);
  for (std::size_t r = 0; r < num_regions; ++r) {
    const bool root_sized = r % 3 == 0;
    const double side = root_sized ? 80 + 60 * u(rng) : 15 + 45 * u(rng);
    const double aspect = 0.7 + 0.6 * u(rng);
    const double w = side * aspect, h = side / aspect;
    const double x = 40 + (150 - w * 0.5) * u(rng), y = 40 + (150 - h * 0.5) * u(rng);
    // Region ids are a shuffled sparse set so tie-breaking by id is exercised.
    const Region reg{static_cast<std::uint32_t>(num_regions * 7 - r * 5 + seed % 3), BBox(x, y, x + w, y + h)};
    std::vector<double> m(num_parts);
    for (auto& v : m) v = margin(rng);
    // Occasionally duplicate scores to force ties.
    if (r > 0 && u(rng) < 0.1) m[0] = std::log(p.scores[0][r - 1] / (1.0 - p.scores[0][r - 1]));
    p.add_region(reg, m);
  }
  return p;
}

inline std::vector<GaussianMixture> random_mixtures(std::uint64_t seed, std::size_t num_parts) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-0.3, 0.3);
  std::vector<GaussianMixture> out(num_parts);
  for (std::size_t p = 1; p < num_parts; ++p) {
    for (int c = 0; c < 4; ++c) {
      GaussianComponent g;
      g.weight = 0.25;
      g.mean = {u(rng), u(rng), -1.0 + u(rng), -1.0 + u(rng)};
      g.var = {0.02, 0.02, 0.1, 0.1};
      out[p].components.push_back(g);
    }
  }
  return out;
}

/// Neighbour prior model over a random appearance index.
inline PriorModel random_np_model(std::uint64_t seed, std::size_t num_parts, double alpha = 0.1) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, 1.0);
  std::vector<NpIndex::Entry> entries;
  for (std::uint64_t i = 0; i < 40; ++i) {
    NpIndex::Entry e;
    e.image_id = i;
    e.appearance.resize(8);
    for (auto& v : e.appearance) v = static_cast<float>(g(rng));
    e.layouts.resize(num_parts);
    for (std::size_t p = 1; p < num_parts; ++p) {
      if (i % 7 == p) continue;
      e.layouts[p] = Layout{0.2 * g(rng), 0.2 * g(rng), -1.0 + 0.3 * g(rng), -1.0 + 0.3 * g(rng)};
    }
    entries.push_back(std::move(e));
  }
  PriorConfig cfg;
  cfg.variant = PriorVariant::kGeometric;
  cfg.density = PartDensityKind::kNeighbors;
  cfg.alpha = alpha;
  cfg.neighbors = 20;
  PriorModel model(cfg, num_parts);
  model.set_index(NpIndex(std::move(entries), num_parts));
  return model;
}

inline std::vector<float> random_query(std::uint64_t seed) {
  std::mt19937_64 rng(seed ^ 0x9E3779B97F4A7C15ull);
  std::normal_distribution<float> g(0.0f, 1.0f);
  std::vector<float> q(8);
  for (auto& v : q) v = g(rng);
  return q;
}

/// The four prior variants on one instance: Null, Box, MG, NP.
inline std::vector<ConfigurationPrior> all_variants(std::uint64_t seed, std::size_t num_parts) {
  PriorConfig null_cfg, box_cfg, mg_cfg;
  null_cfg.variant = PriorVariant::kNull;
  box_cfg.variant = PriorVariant::kBox;
  mg_cfg.variant = PriorVariant::kGeometric;
  mg_cfg.density = PartDensityKind::kMixture;
  return {ConfigurationPrior(null_cfg, {}), ConfigurationPrior(box_cfg, {}),
          ConfigurationPrior(mg_cfg, random_mixtures(seed, num_parts)),
          random_np_model(seed, num_parts).for_image(random_query(seed))};
}

inline bool same_configuration(const Configuration& a, const Configuration& b, double tol) {
  if (a.parts.size() != b.parts.size()) return false;
  for (std::size_t p = 0; p < a.parts.size(); ++p) {
    if (a.parts[p].has_value() != b.parts[p].has_value()) return false;
    if (a.parts[p] && (a.parts[p]->region_id != b.parts[p]->region_id || !(a.parts[p]->box == b.parts[p]->box))) {
      return false;
    }
  }
  return std::abs(a.log_score - b.log_score) <= tol;
}

}  // namespace partloc::testing
