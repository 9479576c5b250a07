#include "partloc/classify.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>

#include <nlohmann/json.hpp>

#include "partloc/error.hpp"
#include "partloc/format.hpp"

namespace partloc {

PoseNormalizedFeature build_feature(std::uint64_t image_id, std::span<const std::optional<std::uint32_t>> regions,
                                    const FeatureStore& features, bool block_l2) {
  if (regions.empty() || !regions[0]) throw InvalidArgument("build_feature: the root block is required");
  PoseNormalizedFeature f;
  f.block_dim = features.channel().dim;
  f.values.assign(f.block_dim * regions.size(), 0.0f);
  f.present.assign(regions.size(), false);
  for (std::size_t p = 0; p < regions.size(); ++p) {
    if (!regions[p]) continue;
    const FeatureVector& phi = features.get({image_id, *regions[p]});
    float* block = f.values.data() + p * f.block_dim;
    std::copy(phi.begin(), phi.end(), block);
    if (block_l2) {
      double norm = 0.0;
      for (float v : phi) norm += static_cast<double>(v) * v;
      norm = std::sqrt(norm);
      if (norm > 0.0) {
        for (std::size_t i = 0; i < f.block_dim; ++i) block[i] = static_cast<float>(block[i] / norm);
      }
    }
    f.present[p] = true;
  }
  return f;
}

PoseNormalizedFeature build_feature(const Configuration& config, const FeatureStore& features, bool block_l2) {
  std::vector<std::optional<std::uint32_t>> regions(config.parts.size());
  for (std::size_t p = 0; p < config.parts.size(); ++p) {
    if (config.parts[p]) regions[p] = config.parts[p]->region_id;
  }
  return build_feature(config.image_id, regions, features, block_l2);
}

PoseNormalizedFeature build_oracle_feature(const ImageTruth& truth, const FeatureStore& features, bool block_l2) {
  std::vector<std::optional<std::uint32_t>> regions(truth.parts.size());
  for (std::size_t p = 0; p < truth.parts.size(); ++p) {
    if (truth.parts[p]) regions[p] = ground_truth_region(static_cast<int>(p));
  }
  return build_feature(truth.image_id, regions, features, block_l2);
}

PoseNormalizedFeature root_only(const PoseNormalizedFeature& f) {
  PoseNormalizedFeature out;
  out.block_dim = f.block_dim;
  out.values.assign(f.values.begin(), f.values.begin() + static_cast<std::ptrdiff_t>(f.block_dim));
  out.present = {true};
  return out;
}

Classifier::Classifier(std::vector<int> classes, std::vector<std::vector<double>> weights, std::vector<double> biases)
    : classes_(std::move(classes)), weights_(std::move(weights)), biases_(std::move(biases)) {
  if (classes_.size() < 2 || weights_.size() != classes_.size() || biases_.size() != classes_.size()) {
    throw InvalidArgument("classifier: need weights and bias for each of >= 2 classes");
  }
  if (!std::is_sorted(classes_.begin(), classes_.end()) ||
      std::adjacent_find(classes_.begin(), classes_.end()) != classes_.end()) {
    throw InvalidArgument("classifier: class labels must be strictly ascending");
  }
  for (const auto& w : weights_) {
    if (w.size() != weights_.front().size()) throw InvalidArgument("classifier: weight dims differ");
  }
}

Prediction Classifier::predict(std::span<const float> feature) const {
  if (feature.size() != dim()) {
    throw InvalidArgument("classifier: feature dim " + std::to_string(feature.size()) + " != " + std::to_string(dim()));
  }
  Prediction p;
  p.margins.resize(classes_.size());
  std::size_t best = 0;
  for (std::size_t c = 0; c < classes_.size(); ++c) {
    p.margins[c] = dot(feature, weights_[c]) + biases_[c];
    if (p.margins[c] > p.margins[best]) best = c;
  }
  p.label = classes_[best];
  return p;
}

void Classifier::save(const std::filesystem::path& path) const {
  nlohmann::ordered_json j;
  j["dim"] = dim();
  j["classes"] = classes_;
  j["w"] = weights_;
  j["b"] = biases_;
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ParseError(path.string(), 0, "cannot open for writing");
  out << j.dump() << '\n';
}

Classifier Classifier::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError(path.string(), 0, "cannot open classifier file");
  try {
    const auto j = nlohmann::json::parse(in);
    Classifier c(j.at("classes").get<std::vector<int>>(), j.at("w").get<std::vector<std::vector<double>>>(),
                 j.at("b").get<std::vector<double>>());
    if (c.dim() != j.at("dim").get<std::size_t>()) throw Error("dim does not match weights");
    return c;
  } catch (const ParseError&) {
    throw;
  } catch (const std::exception& e) {
    throw ParseError(path.string(), 0, e.what());
  }
}

Classifier train_classifier(std::span<const FeatureVector> features, std::span<const int> labels,
                            const SvmOptions& options) {
  if (features.size() != labels.size()) throw InvalidArgument("train_classifier: features/labels size mismatch");
  std::map<int, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < labels.size(); ++i) by_class[labels[i]].push_back(i);
  if (by_class.size() < 2) throw InvalidArgument("train_classifier: need at least two classes");

  std::vector<int> classes;
  std::vector<std::vector<double>> weights;
  std::vector<double> biases;
  std::size_t k = 0;
  for (const auto& [label, members] : by_class) {
    SvmRows pos, neg;
    for (std::size_t i = 0; i < features.size(); ++i) {
      (labels[i] == label ? pos : neg).push_back(features[i]);
    }
    SvmOptions opts = options;
    opts.seed = options.seed + k++;
    SvmModel m = train_linear_svm(pos, neg, opts);
    classes.push_back(label);
    weights.push_back(std::move(m.w));
    biases.push_back(m.b);
  }
  return Classifier(std::move(classes), std::move(weights), std::move(biases));
}

PredictionRow make_prediction_row(std::uint64_t image_id, int actual, const Prediction& p) {
  std::vector<double> m = p.margins;
  std::sort(m.begin(), m.end(), std::greater<>());
  return {image_id, p.label, actual, m.at(0), m.size() > 1 ? m[1] : m[0]};
}

void write_predictions(const std::filesystem::path& path, std::span<const PredictionRow> rows) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ParseError(path.string(), 0, "cannot open for writing");
  out << "image_id,predicted,actual,margin_top1,margin_top2\n";
  for (const auto& r : rows) {
    out << r.image_id << ',' << r.predicted << ',' << r.actual << ',' << format_real(r.margin_top1) << ','
        << format_real(r.margin_top2) << '\n';
  }
}

std::vector<PredictionRow> read_predictions(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError(path.string(), 0, "cannot open predictions file");
  std::vector<PredictionRow> rows;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line_no == 1) {
      if (line != "image_id,predicted,actual,margin_top1,margin_top2") {
        throw ParseError(path.string(), 1, "missing header row");
      }
      continue;
    }
    if (line.empty()) continue;
    const auto f = split_csv(line);
    if (f.size() != 5) throw ParseError(path.string(), line_no, "expected 5 fields");
    try {
      rows.push_back({parse_integer<std::uint64_t>(f[0]), parse_integer<int>(f[1]), parse_integer<int>(f[2]),
                      parse_real(f[3]), parse_real(f[4])});
    } catch (const std::exception& e) {
      throw ParseError(path.string(), line_no, e.what());
    }
  }
  return rows;
}

}  // namespace partloc
