#include "partloc/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <random>

#include "partloc/error.hpp"
#include "partloc/format.hpp"
#include "partloc/pipeline.hpp"

namespace partloc {

std::vector<PartPcp> pcp(std::span<const Configuration> predictions, std::span<const ImageTruth> truth,
                         double overlap) {
  if (!(overlap > 0.0 && overlap <= 1.0)) throw InvalidArgument("pcp: overlap must be in (0, 1]");
  if (truth.empty()) throw InvalidArgument("pcp: no images");
  std::map<std::uint64_t, const Configuration*> by_id;
  for (const Configuration& c : predictions) by_id[c.image_id] = &c;

  const std::size_t n_parts = truth.front().parts.size();
  std::vector<PartPcp> out(n_parts);
  for (const ImageTruth& t : truth) {
    if (t.parts.size() != n_parts) throw InvalidArgument("pcp: inconsistent part count");
    auto it = by_id.find(t.image_id);
    if (it == by_id.end()) throw LookupError("pcp: no prediction for image " + std::to_string(t.image_id));
    const Configuration& c = *it->second;
    if (c.parts.size() != n_parts) throw InvalidArgument("pcp: prediction part count mismatch");
    for (std::size_t p = 0; p < n_parts; ++p) {
      if (!t.parts[p]) continue;
      ++out[p].total;
      if (c.parts[p] && iou(c.parts[p]->box, *t.parts[p]) >= overlap) ++out[p].correct;
    }
  }
  for (std::size_t p = 0; p < n_parts; ++p) {
    if (out[p].total == 0) throw InvalidArgument("pcp: part " + std::to_string(p) + " is not annotated in any image");
  }
  return out;
}

double accuracy(const std::map<std::uint64_t, int>& predicted, const std::map<std::uint64_t, int>& labels) {
  if (predicted.size() != labels.size()) throw InvalidArgument("accuracy: prediction and label sets differ");
  if (labels.empty()) throw InvalidArgument("accuracy: no images");
  std::size_t correct = 0;
  for (const auto& [id, label] : labels) {
    auto it = predicted.find(id);
    if (it == predicted.end()) throw InvalidArgument("accuracy: no prediction for image " + std::to_string(id));
    if (it->second == label) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(labels.size());
}

double accuracy(std::span<const PredictionRow> rows) {
  std::map<std::uint64_t, int> predicted, labels;
  for (const PredictionRow& r : rows) {
    if (!predicted.emplace(r.image_id, r.predicted).second) {
      throw InvalidArgument("accuracy: duplicate image " + std::to_string(r.image_id));
    }
    labels.emplace(r.image_id, r.actual);
  }
  return accuracy(predicted, labels);
}

Configuration bbox_given_inference(const ProposalSet& proposals, const BBox& gt_root,
                                   const std::vector<Detector>& detectors, const PriorModel& prior,
                                   const FeatureStore& detector_features, const FeatureStore* appearance_features) {
  InferenceProblem problem = build_problem(proposals, detectors, detector_features);
  const FeatureKey root_key{proposals.image_id, ground_truth_region(0)};
  const FeatureVector& phi = detector_features.get(root_key);
  std::vector<double> margins(detectors.size());
  for (std::size_t p = 0; p < detectors.size(); ++p) margins[p] = detectors[p].margin(phi);
  const std::size_t root_index = problem.add_region({ground_truth_region(0), gt_root}, margins);

  InferOptions options;
  options.root_candidates = std::vector<std::size_t>{root_index};
  if (prior.config().variant == PriorVariant::kNull) {
    PriorConfig box = prior.config();
    box.variant = PriorVariant::kBox;
    return infer_configuration(problem, ConfigurationPrior(box, {}), options);
  }
  FeatureVector query;
  if (prior.needs_appearance()) {
    if (appearance_features == nullptr) throw InvalidArgument("bbox-given: neighbour prior needs appearance features");
    query = appearance_features->get(root_key);
  }
  return infer_configuration(problem, prior.for_image(query), options);
}

std::vector<int> stratified_folds(std::span<const int> labels, int folds, std::uint64_t seed) {
  if (folds < 2) throw InvalidArgument("folds must be at least 2");
  if (labels.size() < static_cast<std::size_t>(folds)) throw InvalidArgument("fewer samples than folds");
  std::map<int, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < labels.size(); ++i) by_class[labels[i]].push_back(i);
  std::mt19937_64 rng(seed);
  std::vector<int> out(labels.size(), -1);
  std::size_t offset = 0;
  for (auto& [label, members] : by_class) {
    std::shuffle(members.begin(), members.end(), rng);
    for (std::size_t k = 0; k < members.size(); ++k) {
      out[members[k]] = static_cast<int>((offset + k) % static_cast<std::size_t>(folds));
    }
    offset += members.size();
  }
  return out;
}

std::string sweep_param_name(SweepParam param) { return param == SweepParam::kAlpha ? "alpha" : "k"; }

SweepParam sweep_param_from(const std::string& name) {
  if (name == "alpha") return SweepParam::kAlpha;
  if (name == "k" || name == "K") return SweepParam::kNeighbors;
  throw InvalidArgument("unknown sweep parameter '" + name + "' (expected alpha or k)");
}

std::vector<SweepRow> cross_validate(const std::vector<ImageTruth>& truth, const ProposalMap& proposals,
                                     const FeatureStore& detector_features, const FeatureStore& appearance_features,
                                     const std::vector<PartSpec>& specs, const ExperimentConfig& config,
                                     SweepParam param, int jobs) {
  const std::vector<ImageTruth> train = select_split(truth, Split::kTrain);
  const int folds = config.eval.folds;
  std::vector<double> grid;
  if (param == SweepParam::kAlpha) {
    grid = config.eval.alpha_grid;
  } else {
    for (int k : config.eval.k_grid) grid.push_back(k);
  }
  if (grid.empty()) throw InvalidArgument("cross_validate: empty grid");

  std::vector<int> labels;
  for (const ImageTruth& t : train) labels.push_back(t.label);
  const std::vector<int> fold_of = stratified_folds(labels, folds, config.seed);

  std::vector<SweepRow> rows(grid.size());
  for (std::size_t g = 0; g < grid.size(); ++g) rows[g].value = grid[g];

  for (int f = 0; f < folds; ++f) {
    std::vector<ImageTruth> fold_truth = train;
    std::vector<ImageTruth> validation;
    std::size_t n_fit = 0;
    for (std::size_t i = 0; i < fold_truth.size(); ++i) {
      if (fold_of[i] == f) {
        fold_truth[i].split = Split::kTest;
        validation.push_back(fold_truth[i]);
      } else {
        ++n_fit;
      }
    }
    const double k_max = param == SweepParam::kNeighbors ? *std::max_element(grid.begin(), grid.end())
                                                         : static_cast<double>(config.prior.neighbors);
    if (k_max > static_cast<double>(n_fit)) {
      throw InvalidArgument("cross_validate: K exceeds the training fold size " + std::to_string(n_fit));
    }

    DetectorTrainingOptions det_opts = config.detect;
    det_opts.jobs = jobs;
    const std::vector<Detector> detectors = train_detectors(fold_truth, proposals, detector_features, specs, det_opts);
    const ClassifierSetup setup = classifier_setup(config);
    const Classifier classifier = train_pose_classifier(fold_truth, detector_features, setup);

    for (std::size_t g = 0; g < grid.size(); ++g) {
      PriorConfig prior_cfg = config.prior;
      prior_cfg.variant = PriorVariant::kGeometric;
      prior_cfg.density = PartDensityKind::kNeighbors;
      if (param == SweepParam::kAlpha) {
        prior_cfg.alpha = grid[g];
      } else {
        prior_cfg.neighbors = static_cast<int>(grid[g]);
      }
      const PriorModel prior = PriorModel::fit(prior_cfg, fold_truth, &appearance_features, specs.size());
      InferOptions infer_opts;
      infer_opts.top_m_roots = config.infer.top_m_roots;
      const auto configs = infer_images(validation, proposals, detectors, prior, detector_features,
                                        &appearance_features, config.infer.bbox_given, infer_opts, jobs);
      const auto predictions =
          predict_images(validation, configs, classifier, detector_features, LocationSource::kInferred, setup);
      rows[g].fold_accuracy.push_back(accuracy(predictions));
    }
  }
  for (SweepRow& r : rows) {
    r.mean_accuracy = std::accumulate(r.fold_accuracy.begin(), r.fold_accuracy.end(), 0.0) /
                      static_cast<double>(r.fold_accuracy.size());
  }
  return rows;
}

void write_sweep_csv(const std::filesystem::path& path, SweepParam param, std::span<const SweepRow> rows) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ParseError(path.string(), 0, "cannot open for writing");
  const std::size_t folds = rows.empty() ? 0 : rows.front().fold_accuracy.size();
  out << "param,value,mean_accuracy";
  for (std::size_t f = 0; f < folds; ++f) out << ",fold_" << f + 1;
  out << '\n';
  for (const SweepRow& r : rows) {
    out << sweep_param_name(param) << ',' << format_real(r.value) << ',' << format_real(r.mean_accuracy);
    for (double a : r.fold_accuracy) out << ',' << format_real(a);
    out << '\n';
  }
}

void write_sweep_svg(const std::filesystem::path& path, SweepParam param, std::span<const SweepRow> rows) {
  if (rows.empty()) throw InvalidArgument("write_sweep_svg: no rows");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ParseError(path.string(), 0, "cannot open for writing");

  constexpr double kWidth = 480, kHeight = 320, kLeft = 60, kRight = 20, kTop = 30, kBottom = 50;
  double x_lo = rows.front().value, x_hi = rows.front().value;
  double y_lo = rows.front().mean_accuracy, y_hi = y_lo;
  for (const SweepRow& r : rows) {
    x_lo = std::min(x_lo, r.value);
    x_hi = std::max(x_hi, r.value);
    y_lo = std::min(y_lo, r.mean_accuracy);
    y_hi = std::max(y_hi, r.mean_accuracy);
  }
  if (x_hi == x_lo) x_hi = x_lo + 1.0;
  y_lo = std::floor(y_lo * 20.0) / 20.0;
  y_hi = std::ceil(y_hi * 20.0) / 20.0;
  if (y_hi <= y_lo) y_hi = y_lo + 0.05;
  auto sx = [&](double v) { return kLeft + (v - x_lo) / (x_hi - x_lo) * (kWidth - kLeft - kRight); };
  auto sy = [&](double v) { return kHeight - kBottom - (v - y_lo) / (y_hi - y_lo) * (kHeight - kTop - kBottom); };
  auto num = [](double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.4g", v);
    return std::string(buf);
  };
  auto px = [](double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.1f", v);
    return std::string(buf);
  };

  const std::string label = param == SweepParam::kAlpha ? "alpha" : "K";
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\"" << kHeight
      << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  out << "<text x=\"" << kWidth / 2 << "\" y=\"18\" text-anchor=\"middle\" font-size=\"13\">Cross-validation accuracy vs "
      << label << "</text>\n";
  // Axes.
  out << "<line x1=\"" << kLeft << "\" y1=\"" << kHeight - kBottom << "\" x2=\"" << kWidth - kRight << "\" y2=\""
      << kHeight - kBottom << "\" stroke=\"black\"/>\n";
  out << "<line x1=\"" << kLeft << "\" y1=\"" << kTop << "\" x2=\"" << kLeft << "\" y2=\"" << kHeight - kBottom
      << "\" stroke=\"black\"/>\n";
  for (const SweepRow& r : rows) {
    out << "<text x=\"" << px(sx(r.value)) << "\" y=\"" << kHeight - kBottom + 16 << "\" text-anchor=\"middle\">"
        << num(r.value) << "</text>\n";
  }
  for (int k = 0; k <= 4; ++k) {
    const double v = y_lo + (y_hi - y_lo) * k / 4.0;
    out << "<text x=\"" << kLeft - 6 << "\" y=\"" << px(sy(v) + 4) << "\" text-anchor=\"end\">" << num(v)
        << "</text>\n";
    out << "<line x1=\"" << kLeft << "\" y1=\"" << px(sy(v)) << "\" x2=\"" << kWidth - kRight << "\" y2=\""
        << px(sy(v)) << "\" stroke=\"#dddddd\"/>\n";
  }
  out << "<text x=\"" << kWidth / 2 << "\" y=\"" << kHeight - 12 << "\" text-anchor=\"middle\">" << label
      << "</text>\n";
  out << "<text x=\"16\" y=\"" << kHeight / 2 << "\" text-anchor=\"middle\" transform=\"rotate(-90 16 " << kHeight / 2
      << ")\">accuracy</text>\n";
  out << "<polyline fill=\"none\" stroke=\"#1f77b4\" stroke-width=\"2\" points=\"";
  for (std::size_t i = 0; i < rows.size(); ++i) {
    out << (i ? " " : "") << px(sx(rows[i].value)) << ',' << px(sy(rows[i].mean_accuracy));
  }
  out << "\"/>\n";
  for (const SweepRow& r : rows) {
    out << "<circle cx=\"" << px(sx(r.value)) << "\" cy=\"" << px(sy(r.mean_accuracy))
        << "\" r=\"3\" fill=\"#1f77b4\"/>\n";
  }
  out << "</svg>\n";
}

}  // namespace partloc
