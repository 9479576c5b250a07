#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <vector>

#include "partloc/dataset.hpp"
#include "partloc/geometry.hpp"

namespace partloc {

struct Region {
  std::uint32_t region_id = 0;
  BBox box;
};

struct ProposalSet {
  std::uint64_t image_id = 0;
  std::vector<Region> regions;
};

using ProposalMap = std::map<std::uint64_t, ProposalSet>;

/// CSV with header `image_id,region_id,x_min,y_min,x_max,y_max`.
ProposalMap load_proposals(const std::filesystem::path& path);
void write_proposals(const std::filesystem::path& path, const ProposalMap& proposals);

struct DenseProposalOptions {
  std::vector<double> scales{64.0, 96.0, 128.0};
  /// width / height.
  std::vector<double> aspect_ratios{0.5, 1.0, 2.0};
  /// Step between windows as a fraction of the window side.
  double stride_fraction = 0.5;
};

/// Windows of area scale^2 for every (scale, aspect) pair on a regular grid,
/// clipped to the image; ordered scale-major, then aspect, then row-major.
ProposalSet dense_propose(std::uint64_t image_id, int image_width, int image_height,
                          const DenseProposalOptions& options);

/// Ground-truth boxes of one part in one image.
struct TruthBox {
  std::uint64_t image_id = 0;
  BBox box;
};

/// recall[t] = fraction of ground-truth boxes having some proposal in the same
/// image with IoU >= thresholds[t].
std::vector<double> proposal_recall(const ProposalMap& proposals, std::span<const TruthBox> truth,
                                    std::span<const double> thresholds);

/// Recall table per part id, built from resolved ground truth.
std::map<int, std::vector<double>> recall_table(const ProposalMap& proposals, const std::vector<ImageTruth>& truth,
                                                std::span<const double> thresholds);

}  // namespace partloc
