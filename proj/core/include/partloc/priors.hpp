#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "partloc/dataset.hpp"
#include "partloc/featstore.hpp"
#include "partloc/geometry.hpp"

namespace partloc {

/// Root-relative part layout: (dx, dy, log width ratio, log height ratio), the
/// offsets being centre displacements normalised by the root width / height.
using Layout = std::array<double, 4>;

Layout layout_of(const BBox& root, const BBox& part);
/// Inverse of layout_of.
BBox box_from_layout(const BBox& root, const Layout& layout);

inline constexpr double kVarianceFloor = 1e-4;

struct GaussianComponent {
  double weight = 1.0;
  Layout mean{};
  Layout var{1.0, 1.0, 1.0, 1.0};
};

/// Mixture of axis-aligned Gaussians over layouts.
struct GaussianMixture {
  std::vector<GaussianComponent> components;

  double log_pdf(const Layout& u) const;
};

struct GmmOptions {
  int components = 4;
  int max_iterations = 200;
  /// Stop when the mean per-sample log-likelihood gains less than this.
  double tolerance = 1e-6;
  double variance_floor = kVarianceFloor;
  int kmeans_restarts = 5;
  std::uint64_t seed = 0;
};

struct GmmFit {
  GaussianMixture mixture;
  /// Total log-likelihood after initialisation and after every EM iteration.
  std::vector<double> log_likelihood;
};

/// EM from a k-means(++) initialisation.
GmmFit fit_gmm(std::span<const Layout> samples, const GmmOptions& options);

/// Single diagonal Gaussian (maximum likelihood, floored variances).
GaussianComponent fit_gaussian(std::span<const Layout> samples, double variance_floor = kVarianceFloor);

/// Appearance index for the nearest-neighbour prior: one entry per training
/// image, holding the appearance of its ground-truth root and its layouts.
class NpIndex {
 public:
  struct Entry {
    std::uint64_t image_id = 0;
    FeatureVector appearance;
    std::vector<std::optional<Layout>> layouts;  // by part id; [0] unused
  };

  NpIndex() = default;
  /// Entries with an all-zero appearance vector are dropped. Every non-root
  /// part needs at least one layout over the kept entries.
  NpIndex(std::vector<Entry> entries, std::size_t num_parts);

  std::size_t size() const noexcept { return entries_.size(); }
  std::size_t num_parts() const noexcept { return num_parts_; }
  const std::vector<Entry>& entries() const noexcept { return entries_; }
  const std::vector<GaussianComponent>& fallback() const noexcept { return fallback_; }

  /// Indices of the k nearest entries by cosine distance (ties: lower index).
  std::vector<std::size_t> nearest(std::span<const float> query, std::size_t k) const;

 private:
  std::vector<Entry> entries_;
  std::size_t num_parts_ = 0;
  std::vector<GaussianComponent> fallback_;  // global Gaussian per part
};

/// Per-part Gaussian over the layouts of the K appearance-nearest neighbours
/// of `query`. Parts missing from all K neighbours use the global Gaussian;
/// an all-zero query uses the global Gaussians for every part.
std::vector<GaussianComponent> fit_np_gaussian(const NpIndex& index, std::span<const float> query, std::size_t k);

enum class PriorVariant : std::uint8_t { kNull, kBox, kGeometric };
enum class PartDensityKind : std::uint8_t { kMixture, kNeighbors };

struct PriorConfig {
  PriorVariant variant = PriorVariant::kGeometric;
  PartDensityKind density = PartDensityKind::kNeighbors;
  double epsilon = 10.0;
  double alpha = 0.1;
  int mixture_components = 4;
  int neighbors = 20;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Parses "null", "box", "mg" or "np" into the variant fields of `config`.
void set_prior_variant(PriorConfig& config, const std::string& name);
std::string prior_variant_name(const PriorConfig& config);

/// Scoring function over joint configurations for one image.
class ConfigurationPrior {
 public:
  ConfigurationPrior() = default;
  ConfigurationPrior(PriorConfig config, std::vector<GaussianMixture> densities);

  const PriorConfig& config() const noexcept { return config_; }
  bool gated() const noexcept { return config_.variant != PriorVariant::kNull; }

  /// log delta_i at layout u for part i (>= 1).
  double part_log_density(int part, const Layout& u) const;

  /// Contribution of one part placement: -inf when the containment gate
  /// fails, alpha * log delta_i for the geometric variant, 0 otherwise.
  double part_log_score(const BBox& root, int part, const BBox& part_box) const;

  /// Log of the configuration prior for a whole configuration. parts[0] is
  /// ignored (the root is passed separately); absent parts contribute nothing.
  double delta_log_score(const BBox& root, std::span<const std::optional<BBox>> parts) const;

 private:
  PriorConfig config_;
  std::vector<GaussianMixture> densities_;  // by part id; empty for null/box
};

/// Fitted prior state shared by all test images.
class PriorModel {
 public:
  PriorModel() = default;
  PriorModel(PriorConfig config, std::size_t num_parts);

  /// Fits from the training split: mixtures from ground-truth layouts, or the
  /// neighbour index from ground-truth root appearance vectors.
  static PriorModel fit(const PriorConfig& config, const std::vector<ImageTruth>& truth,
                        const FeatureStore* appearance, std::size_t num_parts);

  const PriorConfig& config() const noexcept { return config_; }
  PriorConfig& mutable_config() noexcept { return config_; }
  std::size_t num_parts() const noexcept { return num_parts_; }
  bool needs_appearance() const noexcept {
    return config_.variant == PriorVariant::kGeometric && config_.density == PartDensityKind::kNeighbors;
  }

  /// Resolves the per-image prior; `root_appearance` is the appearance of the
  /// top-scoring root window (only read by the neighbour prior).
  ConfigurationPrior for_image(std::span<const float> root_appearance) const;

  const std::vector<GaussianMixture>& mixtures() const noexcept { return mixtures_; }
  const NpIndex& index() const noexcept { return index_; }

  void set_mixtures(std::vector<GaussianMixture> mixtures) { mixtures_ = std::move(mixtures); }
  void set_index(NpIndex index) { index_ = std::move(index); }

  /// JSON model file. The neighbour index is stored as a layout table plus a
  /// reference to the appearance feature store holding the root vectors.
  void save(const std::filesystem::path& path, const std::filesystem::path& appearance_store) const;
  static PriorModel load(const std::filesystem::path& path);

 private:
  PriorConfig config_;
  std::size_t num_parts_ = 0;
  std::vector<GaussianMixture> mixtures_;
  NpIndex index_;
};

}  // namespace partloc
