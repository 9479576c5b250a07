#include "partloc/pipeline.hpp"

#include <algorithm>

#include "partloc/error.hpp"
#include "partloc/eval.hpp"
#include "partloc/parallel.hpp"

namespace partloc {

RasterSource rasters_from_directory(std::filesystem::path root) {
  return [root = std::move(root)](const AnnotatedImage& img) { return read_pgm(root / img.image_path); };
}

RasterSource rasters_from_memory(const Dataset& dataset, const std::vector<Raster>& rasters) {
  if (dataset.size() != rasters.size()) throw InvalidArgument("rasters_from_memory: size mismatch");
  std::map<std::uint64_t, const Raster*> by_id;
  for (std::size_t i = 0; i < dataset.size(); ++i) by_id[dataset[i].image_id] = &rasters[i];
  return [by_id = std::move(by_id)](const AnnotatedImage& img) -> Raster {
    auto it = by_id.find(img.image_id);
    if (it == by_id.end()) throw LookupError("no raster for image " + std::to_string(img.image_id));
    return *it->second;
  };
}

FeatureStores extract_features(const Dataset& dataset, const std::vector<ImageTruth>& truth,
                               const ProposalMap& proposals, const RasterSource& rasters,
                               const ExperimentConfig::Features& options, int jobs) {
  if (truth.size() != dataset.size()) throw InvalidArgument("extract_features: truth does not match dataset");
  const ToyExtractOptions det_opts{options.detector_grid, options.context_pixels, options.warp_size};
  const ToyExtractOptions app_opts{options.appearance_grid, options.context_pixels, options.warp_size};

  struct Extracted {
    std::vector<FeatureKey> keys;
    std::vector<FeatureVector> detector;
    std::vector<FeatureVector> appearance;
  };
  std::vector<Extracted> per_image(dataset.size());
  parallel_for(dataset.size(), jobs, [&](std::size_t i) {
    const AnnotatedImage& img = dataset[i];
    const Raster raster = rasters(img);
    Extracted& out = per_image[i];
    auto add = [&](std::uint32_t region_id, const BBox& box) {
      out.keys.push_back({img.image_id, region_id});
      out.detector.push_back(toy_extract(raster, box, det_opts).values);
      out.appearance.push_back(toy_extract(raster, box, app_opts).values);
    };
    if (auto it = proposals.find(img.image_id); it != proposals.end()) {
      for (const Region& r : it->second.regions) add(r.region_id, r.box);
    }
    const auto& parts = truth[i].parts;
    for (std::size_t p = 0; p < parts.size(); ++p) {
      if (parts[p]) add(ground_truth_region(static_cast<int>(p)), *parts[p]);
    }
  });

  FeatureStores stores{
      FeatureStore({kDetectorChannel, static_cast<std::uint32_t>(options.detector_grid * options.detector_grid)}),
      FeatureStore({kAppearanceChannel, static_cast<std::uint32_t>(options.appearance_grid * options.appearance_grid)})};
  for (const Extracted& e : per_image) {
    for (std::size_t k = 0; k < e.keys.size(); ++k) {
      stores.detector.put(e.keys[k], e.detector[k]);
      stores.appearance.put(e.keys[k], e.appearance[k]);
    }
  }
  return stores;
}

std::vector<ImageTruth> select_split(const std::vector<ImageTruth>& truth, Split split) {
  std::vector<ImageTruth> out;
  std::copy_if(truth.begin(), truth.end(), std::back_inserter(out), [&](const ImageTruth& t) { return t.split == split; });
  return out;
}

std::vector<Configuration> infer_images(std::span<const ImageTruth> images, const ProposalMap& proposals,
                                        const std::vector<Detector>& detectors, const PriorModel& prior,
                                        const FeatureStore& detector_features,
                                        const FeatureStore* appearance_features, bool bbox_given,
                                        const InferOptions& options, int jobs) {
  std::vector<Configuration> out(images.size());
  parallel_for(images.size(), jobs, [&](std::size_t i) {
    const ImageTruth& t = images[i];
    auto it = proposals.find(t.image_id);
    if (it == proposals.end()) throw LookupError("no proposals for image " + std::to_string(t.image_id));
    if (bbox_given) {
      if (!t.parts.at(0)) throw InvalidArgument("bbox-given inference needs the object box");
      out[i] = bbox_given_inference(it->second, *t.parts[0], detectors, prior, detector_features, appearance_features);
    } else {
      out[i] = infer_image(it->second, detectors, prior, detector_features, appearance_features, options);
    }
  });
  return out;
}

ClassifierSetup classifier_setup(const ExperimentConfig& config) {
  return {config.classify.C, config.classify.epochs, config.seed, config.classify.block_l2, false};
}

namespace {

FeatureVector located_feature(const ImageTruth& t, const Configuration* config, const FeatureStore& store,
                              const ClassifierSetup& setup) {
  PoseNormalizedFeature f = config ? build_feature(*config, store, setup.block_l2)
                                   : build_oracle_feature(t, store, setup.block_l2);
  if (setup.root_only) f = root_only(f);
  return std::move(f.values);
}

}  // namespace

Classifier train_pose_classifier(const std::vector<ImageTruth>& truth, const FeatureStore& detector_features,
                                 const ClassifierSetup& setup) {
  std::vector<FeatureVector> features;
  std::vector<int> labels;
  for (const ImageTruth& t : truth) {
    if (t.split != Split::kTrain) continue;
    features.push_back(located_feature(t, nullptr, detector_features, setup));
    labels.push_back(t.label);
  }
  return train_classifier(features, labels, {setup.C, setup.epochs, setup.seed});
}

std::vector<PredictionRow> predict_images(std::span<const ImageTruth> images, std::span<const Configuration> configs,
                                          const Classifier& classifier, const FeatureStore& detector_features,
                                          LocationSource source, const ClassifierSetup& setup) {
  if (source == LocationSource::kInferred && configs.size() != images.size()) {
    throw InvalidArgument("predict: one configuration per image is required");
  }
  std::vector<PredictionRow> rows;
  rows.reserve(images.size());
  for (std::size_t i = 0; i < images.size(); ++i) {
    const ImageTruth& t = images[i];
    const Configuration* c = nullptr;
    if (source == LocationSource::kInferred) {
      c = &configs[i];
      if (c->image_id != t.image_id) throw InvalidArgument("predict: configuration order does not match images");
    }
    const FeatureVector f = located_feature(t, c, detector_features, setup);
    rows.push_back(make_prediction_row(t.image_id, t.label, classifier.predict(f)));
  }
  return rows;
}

}  // namespace partloc
