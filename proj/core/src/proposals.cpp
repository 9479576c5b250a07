#include "partloc/proposals.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "partloc/error.hpp"
#include "partloc/format.hpp"

namespace partloc {

ProposalMap load_proposals(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError(path.string(), 0, "cannot open proposals file");
  ProposalMap out;
  std::map<std::uint64_t, std::set<std::uint32_t>> seen;
  std::string line;
  std::size_t line_no = 0;
  bool header_seen = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (!header_seen) {
      if (line != "image_id,region_id,x_min,y_min,x_max,y_max") {
        throw ParseError(path.string(), line_no, "missing header row");
      }
      header_seen = true;
      continue;
    }
    const auto fields = split_csv(line);
    if (fields.size() != 6) throw ParseError(path.string(), line_no, "expected 6 fields");
    try {
      const auto image_id = parse_integer<std::uint64_t>(fields[0]);
      const auto region_id = parse_integer<std::uint32_t>(fields[1]);
      BBox box(parse_real(fields[2]), parse_real(fields[3]), parse_real(fields[4]), parse_real(fields[5]));
      if (!seen[image_id].insert(region_id).second) {
        throw Error("duplicate region_id " + std::to_string(region_id) + " for image " + std::to_string(image_id));
      }
      auto& set = out[image_id];
      set.image_id = image_id;
      set.regions.push_back({region_id, box});
    } catch (const ParseError&) {
      throw;
    } catch (const std::exception& e) {
      throw ParseError(path.string(), line_no, e.what());
    }
  }
  return out;
}

void write_proposals(const std::filesystem::path& path, const ProposalMap& proposals) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ParseError(path.string(), 0, "cannot open for writing");
  out << "image_id,region_id,x_min,y_min,x_max,y_max\n";
  for (const auto& [image_id, set] : proposals) {
    for (const Region& r : set.regions) {
      out << image_id << ',' << r.region_id << ',' << format_real(r.box.x_min()) << ','
          << format_real(r.box.y_min()) << ',' << format_real(r.box.x_max()) << ',' << format_real(r.box.y_max())
          << '\n';
    }
  }
}

ProposalSet dense_propose(std::uint64_t image_id, int image_width, int image_height,
                          const DenseProposalOptions& options) {
  if (options.scales.empty() || options.aspect_ratios.empty()) {
    throw InvalidArgument("dense_propose: scales and aspect ratios must be nonempty");
  }
  if (!(options.stride_fraction > 0.0 && options.stride_fraction <= 1.0)) {
    throw InvalidArgument("dense_propose: stride_fraction must lie in (0, 1]");
  }
  ProposalSet set{image_id, {}};
  if (image_width <= 0 || image_height <= 0) return set;
  const double W = image_width, H = image_height;

  // Grid positions along one axis; windows wider than the image get one slot.
  auto positions = [](double extent, double side, double step) {
    std::vector<double> out;
    if (side >= extent) {
      out.push_back(0.0);
      return out;
    }
    const auto n = static_cast<long>(std::floor((extent - side) / step + 1e-9)) + 1;
    for (long i = 0; i < n; ++i) out.push_back(static_cast<double>(i) * step);
    return out;
  };

  std::uint32_t next_id = 0;
  for (double scale : options.scales) {
    if (!(scale > 0.0)) throw InvalidArgument("dense_propose: scales must be positive");
    for (double aspect : options.aspect_ratios) {
      if (!(aspect > 0.0)) throw InvalidArgument("dense_propose: aspect ratios must be positive");
      const double w = scale * std::sqrt(aspect);
      const double h = scale / std::sqrt(aspect);
      const auto xs = positions(W, w, options.stride_fraction * w);
      const auto ys = positions(H, h, options.stride_fraction * h);
      for (double y : ys) {
        for (double x : xs) {
          set.regions.push_back({next_id++, clip_to_image(BBox(x, y, x + w, y + h), W, H)});
        }
      }
    }
  }
  return set;
}

std::vector<double> proposal_recall(const ProposalMap& proposals, std::span<const TruthBox> truth,
                                    std::span<const double> thresholds) {
  if (truth.empty()) throw InvalidArgument("recall: no ground-truth boxes");
  for (double t : thresholds) {
    if (!(t > 0.0 && t <= 1.0)) throw InvalidArgument("recall: thresholds must lie in (0, 1]");
  }
  std::vector<std::size_t> hits(thresholds.size(), 0);
  for (const TruthBox& gt : truth) {
    double best = 0.0;
    if (auto it = proposals.find(gt.image_id); it != proposals.end()) {
      for (const Region& r : it->second.regions) best = std::max(best, iou(r.box, gt.box));
    }
    for (std::size_t t = 0; t < thresholds.size(); ++t) {
      if (best >= thresholds[t]) ++hits[t];
    }
  }
  std::vector<double> out(thresholds.size());
  for (std::size_t t = 0; t < thresholds.size(); ++t) {
    out[t] = static_cast<double>(hits[t]) / static_cast<double>(truth.size());
  }
  return out;
}

std::map<int, std::vector<double>> recall_table(const ProposalMap& proposals, const std::vector<ImageTruth>& truth,
                                                std::span<const double> thresholds) {
  std::map<int, std::vector<TruthBox>> per_part;
  for (const ImageTruth& t : truth) {
    for (std::size_t p = 0; p < t.parts.size(); ++p) {
      if (t.parts[p]) per_part[static_cast<int>(p)].push_back({t.image_id, *t.parts[p]});
    }
  }
  std::map<int, std::vector<double>> table;
  for (const auto& [part, boxes] : per_part) table[part] = proposal_recall(proposals, boxes, thresholds);
  return table;
}

}  // namespace partloc
