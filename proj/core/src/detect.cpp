#include "partloc/detect.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>

#include <nlohmann/json.hpp>

#include "partloc/error.hpp"
#include "partloc/parallel.hpp"

namespace partloc {

void TrainingLabelRule::validate() const {
  if (!(neg_iou >= 0.0 && neg_iou < pos_iou && pos_iou <= 1.0)) {
    throw InvalidArgument("label rule: need 0 <= neg_iou < pos_iou <= 1");
  }
}

std::vector<RegionLabel> label_regions(std::span<const Region> regions, std::span<const BBox> part_truth,
                                       std::span<const BBox> all_truth, const TrainingLabelRule& rule) {
  rule.validate();
  std::vector<RegionLabel> labels(regions.size(), RegionLabel::kIgnore);
  for (std::size_t i = 0; i < regions.size(); ++i) {
    const BBox& box = regions[i].box;
    const bool pos = std::any_of(part_truth.begin(), part_truth.end(),
                                 [&](const BBox& gt) { return iou(box, gt) >= rule.pos_iou; });
    if (pos) {
      labels[i] = RegionLabel::kPositive;
      continue;
    }
    const bool neg = std::all_of(all_truth.begin(), all_truth.end(),
                                 [&](const BBox& gt) { return iou(box, gt) <= rule.neg_iou; });
    if (neg) labels[i] = RegionLabel::kNegative;
  }
  return labels;
}

double sigmoid(double margin) noexcept {
  if (margin >= 0.0) return 1.0 / (1.0 + std::exp(-margin));
  const double e = std::exp(margin);
  return e / (1.0 + e);
}

double log_sigmoid(double margin) noexcept {
  if (margin >= 0.0) return -std::log1p(std::exp(-margin));
  return margin - std::log1p(std::exp(margin));
}

double Detector::margin(std::span<const float> phi) const {
  if (phi.size() != w.size()) {
    throw InvalidArgument("detector '" + name + "': feature dim " + std::to_string(phi.size()) + " != " +
                          std::to_string(w.size()));
  }
  return dot(phi, w) + b;
}

double Detector::score(std::span<const float> phi) const { return sigmoid(margin(phi)); }

double calibrate_threshold(std::span<const double> scores, double target_recall) {
  if (scores.empty()) throw InvalidArgument("calibrate_threshold: no validation positives");
  if (!(target_recall > 0.0 && target_recall <= 1.0)) {
    throw InvalidArgument("calibrate_threshold: target_recall must lie in (0, 1]");
  }
  std::vector<double> sorted(scores.begin(), scores.end());
  std::sort(sorted.begin(), sorted.end(), std::greater<>());
  const double needed = target_recall * static_cast<double>(sorted.size());
  auto k = static_cast<std::size_t>(std::ceil(needed - 1e-9));
  k = std::clamp<std::size_t>(k, 1, sorted.size());
  return sorted[k - 1];
}

namespace {

struct TrainingPool {
  std::vector<std::vector<std::span<const float>>> positives;  // per part
  std::vector<std::span<const float>> negatives;               // shared across parts
};

TrainingPool collect_pool(const std::vector<ImageTruth>& truth, const ProposalMap& proposals,
                          const FeatureStore& features, std::size_t num_parts, const TrainingLabelRule& rule) {
  TrainingPool pool;
  pool.positives.resize(num_parts);
  for (const ImageTruth& t : truth) {
    if (t.split != Split::kTrain) continue;
    std::vector<BBox> all;
    for (const auto& p : t.parts) {
      if (p) all.push_back(*p);
    }
    for (std::size_t part = 0; part < num_parts; ++part) {
      if (part < t.parts.size() && t.parts[part]) {
        pool.positives[part].push_back(features.get({t.image_id, ground_truth_region(static_cast<int>(part))}));
      }
    }
    auto it = proposals.find(t.image_id);
    if (it == proposals.end()) continue;
    const auto& regions = it->second.regions;

    // Negatives do not depend on the part.
    const auto base = label_regions(regions, {}, all, rule);
    for (std::size_t r = 0; r < regions.size(); ++r) {
      if (base[r] == RegionLabel::kNegative) {
        pool.negatives.push_back(features.get({t.image_id, regions[r].region_id}));
      }
    }
    for (std::size_t part = 0; part < num_parts; ++part) {
      if (part >= t.parts.size() || !t.parts[part]) continue;
      const BBox gt = *t.parts[part];
      const auto labels = label_regions(regions, std::span<const BBox>(&gt, 1), all, rule);
      for (std::size_t r = 0; r < regions.size(); ++r) {
        if (labels[r] == RegionLabel::kPositive) {
          pool.positives[part].push_back(features.get({t.image_id, regions[r].region_id}));
        }
      }
    }
  }
  return pool;
}

Detector train_one(int part_id, const std::string& name, const SvmRows& positives, const SvmRows& all_negatives,
                   const DetectorTrainingOptions& options) {
  if (positives.empty()) throw InvalidArgument("train_detectors: no positives for part '" + name + "'");
  if (all_negatives.empty()) throw InvalidArgument("train_detectors: no negatives");

  SvmOptions svm = options.svm;
  svm.seed = options.svm.seed + static_cast<std::uint64_t>(part_id);

  // Seeded subsample of the shared negative pool.
  std::vector<std::size_t> idx(all_negatives.size());
  std::iota(idx.begin(), idx.end(), 0);
  if (idx.size() > options.max_negatives) {
    std::mt19937_64 rng(svm.seed ^ 0x9e3779b97f4a7c15ull);
    std::shuffle(idx.begin(), idx.end(), rng);
    idx.resize(options.max_negatives);
    std::sort(idx.begin(), idx.end());
  }
  std::vector<bool> in_set(all_negatives.size(), false);
  for (auto i : idx) in_set[i] = true;

  auto rows_of = [&](const std::vector<std::size_t>& ids) {
    SvmRows rows;
    rows.reserve(ids.size());
    for (auto i : ids) rows.push_back(all_negatives[i]);
    return rows;
  };

  SvmModel model = train_linear_svm(positives, rows_of(idx), svm);
  for (int round = 0; round < options.hard_negative_rounds; ++round) {
    // Hinge-violating negatives join the set; when over the cap, the
    // highest-margin (hardest) negatives are kept.
    bool added = false;
    for (std::size_t i = 0; i < all_negatives.size(); ++i) {
      if (in_set[i]) continue;
      if (dot(all_negatives[i], model.w) + model.b > -1.0) {
        idx.push_back(i);
        in_set[i] = true;
        added = true;
      }
    }
    if (!added) break;
    if (idx.size() > options.max_negatives) {
      std::vector<std::pair<double, std::size_t>> ranked;
      ranked.reserve(idx.size());
      for (auto i : idx) ranked.emplace_back(dot(all_negatives[i], model.w) + model.b, i);
      std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
        return a.first > b.first || (a.first == b.first && a.second < b.second);
      });
      ranked.resize(options.max_negatives);
      idx.clear();
      std::fill(in_set.begin(), in_set.end(), false);
      for (const auto& r : ranked) {
        idx.push_back(r.second);
        in_set[r.second] = true;
      }
      std::sort(idx.begin(), idx.end());
    }
    model = train_linear_svm(positives, rows_of(idx), svm);
  }

  Detector d;
  d.part_id = part_id;
  d.name = name;
  d.w = std::move(model.w);
  d.b = model.b;
  d.meta = {svm.C, svm.seed, svm.epochs};
  std::vector<double> scores;
  scores.reserve(positives.size());
  for (const auto& x : positives) scores.push_back(d.score(x));
  d.tau = calibrate_threshold(scores, options.target_recall);
  return d;
}

}  // namespace

std::vector<Detector> train_detectors(const std::vector<ImageTruth>& truth, const ProposalMap& proposals,
                                      const FeatureStore& features, const std::vector<PartSpec>& specs,
                                      const DetectorTrainingOptions& options) {
  validate_part_specs(specs);
  options.rule.validate();
  const TrainingPool pool = collect_pool(truth, proposals, features, specs.size(), options.rule);
  std::vector<Detector> detectors(specs.size());
  parallel_for(specs.size(), options.jobs, [&](std::size_t part) {
    detectors[part] = train_one(static_cast<int>(part), specs[part].name, pool.positives[part], pool.negatives, options);
  });
  return detectors;
}

void save_detectors(const std::filesystem::path& path, const std::vector<Detector>& detectors) {
  auto arr = nlohmann::ordered_json::array();
  for (const Detector& d : detectors) {
    nlohmann::ordered_json j;
    j["part_id"] = d.part_id;
    j["name"] = d.name;
    j["dim"] = d.w.size();
    j["w"] = d.w;
    j["b"] = d.b;
    j["tau"] = d.tau;
    j["channel"] = d.channel;
    j["train_meta"] = {{"C", d.meta.C}, {"seed", d.meta.seed}, {"epochs", d.meta.epochs}};
    arr.push_back(std::move(j));
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ParseError(path.string(), 0, "cannot open for writing");
  out << arr.dump(1) << '\n';
}

std::vector<Detector> load_detectors(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError(path.string(), 0, "cannot open detector file");
  try {
    const auto arr = nlohmann::json::parse(in);
    std::vector<Detector> out;
    for (const auto& j : arr) {
      Detector d;
      d.part_id = j.at("part_id").get<int>();
      d.name = j.value("name", std::string());
      d.w = j.at("w").get<std::vector<double>>();
      if (j.at("dim").get<std::size_t>() != d.w.size()) throw Error("dim does not match weight length");
      d.b = j.at("b").get<double>();
      d.tau = j.at("tau").get<double>();
      d.channel = j.at("channel").get<std::string>();
      const auto& meta = j.at("train_meta");
      d.meta = {meta.at("C").get<double>(), meta.at("seed").get<std::uint64_t>(), meta.at("epochs").get<int>()};
      out.push_back(std::move(d));
    }
    for (std::size_t i = 0; i < out.size(); ++i) {
      if (out[i].part_id != static_cast<int>(i)) throw Error("detectors must be listed by dense part id");
    }
    return out;
  } catch (const ParseError&) {
    throw;
  } catch (const std::exception& e) {
    throw ParseError(path.string(), 0, e.what());
  }
}

}  // namespace partloc
