#pragma once

#include <compare>
#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "partloc/geometry.hpp"

namespace partloc {

using FeatureVector = std::vector<float>;

inline constexpr const char* kDetectorChannel = "detector";
inline constexpr const char* kAppearanceChannel = "appearance";

struct FeatureChannel {
  std::string name;
  std::uint32_t dim = 0;

  friend bool operator==(const FeatureChannel&, const FeatureChannel&) = default;
};

/// 1 - cos(a, b). Throws if either vector is all zeros or the lengths differ.
double cosine_distance(std::span<const float> a, std::span<const float> b);

double dot(std::span<const float> a, std::span<const double> w) noexcept;

/// 8-bit grayscale image, row-major.
struct Raster {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;

  std::uint8_t at(int x, int y) const noexcept {
    return pixels[static_cast<std::size_t>(y) * static_cast<std::size_t>(width) + static_cast<std::size_t>(x)];
  }
};

Raster read_pgm(const std::filesystem::path& path);
void write_pgm(const std::filesystem::path& path, const Raster& raster);
/// Reads only the header to get the size.
std::pair<int, int> pgm_size(const std::filesystem::path& path);

struct ToyExtractOptions {
  /// Output grid side; the vector has grid*grid entries.
  int grid = 16;
  /// Context border, expressed in pixels of a warp_size x warp_size frame.
  double context_pixels = 16.0;
  double warp_size = 227.0;
};

/// Grid used by the canonical channels: 16 for "detector", 8 for "appearance".
ToyExtractOptions toy_options_for(const std::string& channel);

struct ToyFeature {
  FeatureVector values;
  /// Set when the crop was constant; values are then all zero.
  bool degenerate = false;
};

/// Crops `region` plus a proportional context border (mirror padding at image
/// edges), area-averages onto the grid, subtracts the mean and L2-normalizes.
ToyFeature toy_extract(const Raster& image, const BBox& region, const ToyExtractOptions& options);

struct FeatureKey {
  std::uint64_t image_id = 0;
  std::uint32_t region_id = 0;

  friend auto operator<=>(const FeatureKey&, const FeatureKey&) = default;
};

/// Region ids at or above this value name ground-truth boxes:
/// ground_truth_region(part) = kGroundTruthRegionBase + part.
inline constexpr std::uint32_t kGroundTruthRegionBase = 0xFFFFFF00u;
constexpr std::uint32_t ground_truth_region(int part_id) noexcept {
  return kGroundTruthRegionBase + static_cast<std::uint32_t>(part_id);
}

/// Feature vectors of one channel keyed by (image, region).
///
/// On-disk layout, little-endian:
///   "PGFS" | version u32 | name_len u32 | name bytes | dim u32 | count u64
///   count x (image_id u64 | region_id u32 | dim x f32)      records
///   count x (image_id u64 | region_id u32 | record u64)     sorted key index
class FeatureStore {
 public:
  static constexpr std::uint32_t kFormatVersion = 1;

  FeatureStore() = default;
  explicit FeatureStore(FeatureChannel channel);

  const FeatureChannel& channel() const noexcept { return channel_; }
  std::size_t size() const noexcept { return records_.size(); }

  /// Inserts or replaces. Throws on dim mismatch or non-finite values.
  void put(FeatureKey key, std::span<const float> values);
  /// Throws LookupError when the key is absent.
  const FeatureVector& get(FeatureKey key) const;
  bool contains(FeatureKey key) const noexcept { return records_.count(key) != 0; }

  const std::map<FeatureKey, FeatureVector>& records() const noexcept { return records_; }

  void save(const std::filesystem::path& path) const;
  static FeatureStore load(const std::filesystem::path& path);

  /// FNV-1a over the serialized records section.
  std::uint64_t checksum() const;

 private:
  FeatureChannel channel_;
  std::map<FeatureKey, FeatureVector> records_;
};

}  // namespace partloc
