#include "commands.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "partloc/classify.hpp"
#include "partloc/config.hpp"
#include "partloc/dataset.hpp"
#include "partloc/detect.hpp"
#include "partloc/error.hpp"
#include "partloc/eval.hpp"
#include "partloc/featstore.hpp"
#include "partloc/format.hpp"
#include "partloc/infer.hpp"
#include "partloc/pipeline.hpp"
#include "partloc/priors.hpp"
#include "partloc/proposals.hpp"
#include "partloc/synth.hpp"

namespace partloc::cli {
namespace fs = std::filesystem;

namespace {

// Options every subcommand understands.
struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  int jobs = 1;
};

void add_common(CLI::App* sub, Common& c, bool needs_out = true) {
  sub->add_option("--config", c.config, "JSON config with one section per module")->check(CLI::ExistingFile);
  sub->add_option("--seed", c.seed, "Overrides the config seed");
  auto* out = sub->add_option("--out", c.out, "Output directory");
  if (needs_out) out->required();
  sub->add_option("--jobs", c.jobs, "Worker threads (results do not depend on it)")->check(CLI::PositiveNumber);
}

ExperimentConfig base_config(const Common& c) {
  ExperimentConfig cfg = c.config.empty() ? ExperimentConfig{} : load_config(c.config);
  if (c.seed) cfg.seed = *c.seed;
  cfg.resolve_seeds();
  return cfg;
}

// Validates, creates the output directory and records the effective config.
void start_output(const Common& c, ExperimentConfig& cfg) {
  cfg.resolve_seeds();
  cfg.validate();
  fs::create_directories(c.out);
  save_config(fs::path(c.out) / "effective_config.json", cfg);
}

struct Inputs {
  Dataset dataset;
  PartsFile parts;
  std::vector<ImageTruth> truth;
};

Inputs read_inputs(const std::string& manifest, const ExperimentConfig& cfg) {
  Inputs in;
  in.dataset = read_manifest(manifest);
  in.parts = resolve_parts(cfg, manifest);
  in.truth = resolve_truth(in.dataset, in.parts.parts, in.parts.boxes);
  return in;
}

std::vector<ImageTruth> pick_split(const std::vector<ImageTruth>& truth, const std::string& split) {
  if (split == "all") return truth;
  if (split == "train") return select_split(truth, Split::kTrain);
  if (split == "test") return select_split(truth, Split::kTest);
  throw InvalidArgument("unknown split '" + split + "' (expected train, test or all)");
}

std::vector<std::string> part_names(const std::vector<PartSpec>& specs) {
  std::vector<std::string> names;
  for (const PartSpec& p : specs) names.push_back(p.name);
  return names;
}

std::ofstream open_out(const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ParseError(path.string(), 0, "cannot open for writing");
  return out;
}

fs::path images_root_for(const std::string& images_root, const std::string& manifest) {
  return images_root.empty() ? fs::path(manifest).parent_path() : fs::path(images_root);
}

void add_split_option(CLI::App* sub, std::string& split) {
  sub->add_option("--split", split, "Images to process: train, test or all")
      ->check(CLI::IsMember({"train", "test", "all"}));
}

// ---------------------------------------------------------------------------

void add_ingest_cub(CLI::App& app) {
  auto c = std::make_shared<Common>();
  auto root = std::make_shared<std::string>();
  auto* sub = app.add_subcommand("ingest-cub", "Convert a CUB-200-2011 directory into a manifest");
  add_common(sub, *c);
  sub->add_option("--cub-root", *root, "CUB_200_2011 directory")->required();
  sub->callback([c, root] {
    ExperimentConfig cfg = base_config(*c);
    start_output(*c, cfg);
    const Dataset dataset = load_cub(*root);
    const fs::path out(c->out);
    write_manifest(out / "manifest.jsonl", dataset);
    PartsFile parts{cfg.dataset.boxes, cfg.dataset.parts.empty() ? default_cub_parts() : cfg.dataset.parts};
    write_parts_file(out / "parts.json", parts);
    const auto truth = resolve_truth(dataset, parts.parts, parts.boxes);
    std::printf("images: %zu\n", dataset.size());
    std::printf("parts outside object box: %zu\n", count_parts_outside_object(truth));
  });
}

void add_gen_synth(CLI::App& app) {
  auto c = std::make_shared<Common>();
  struct Overrides {
    std::optional<int> n_train, n_test, distractors;
    std::optional<double> noise;
  };
  auto o = std::make_shared<Overrides>();
  auto* sub = app.add_subcommand("gen-synth", "Generate a synthetic dataset with planted part geometry");
  add_common(sub, *c);
  sub->add_option("--n-train", o->n_train, "Training images");
  sub->add_option("--n-test", o->n_test, "Test images");
  sub->add_option("--distractors", o->distractors, "Distractor windows per image");
  sub->add_option("--noise", o->noise, "Pixel noise standard deviation");
  sub->callback([c, o] {
    ExperimentConfig cfg = base_config(*c);
    if (o->n_train) cfg.synth.n_train = *o->n_train;
    if (o->n_test) cfg.synth.n_test = *o->n_test;
    if (o->distractors) cfg.synth.distractor_count = *o->distractors;
    if (o->noise) cfg.synth.noise_sigma = *o->noise;
    start_output(*c, cfg);
    const SynthScene scene = generate(cfg.synth, cfg.seed);
    const fs::path out(c->out);
    fs::create_directories(out / "images");
    for (std::size_t i = 0; i < scene.dataset.size(); ++i) write_pgm(out / scene.dataset[i].image_path, scene.rasters[i]);
    write_manifest(out / "manifest.jsonl", scene.dataset);
    write_parts_file(out / "parts.json", {scene.box_options, scene.parts});
    write_proposals(out / "proposals.csv", scene.proposals);
    std::printf("images: %zu (train %d, test %d)\n", scene.dataset.size(), cfg.synth.n_train, cfg.synth.n_test);
  });
}

void add_extract_features(CLI::App& app) {
  auto c = std::make_shared<Common>();
  auto manifest = std::make_shared<std::string>();
  auto proposals = std::make_shared<std::string>();
  auto images = std::make_shared<std::string>();
  auto* sub = app.add_subcommand("extract-features", "Toy features for proposals and annotated boxes");
  add_common(sub, *c);
  sub->add_option("--manifest", *manifest)->required()->check(CLI::ExistingFile);
  sub->add_option("--proposals", *proposals)->required()->check(CLI::ExistingFile);
  sub->add_option("--images-root", *images, "Directory image paths are relative to (default: manifest dir)");
  sub->callback([=] {
    ExperimentConfig cfg = base_config(*c);
    start_output(*c, cfg);
    const Inputs in = read_inputs(*manifest, cfg);
    const ProposalMap props = load_proposals(*proposals);
    const FeatureStores stores = extract_features(in.dataset, in.truth, props,
                                                  rasters_from_directory(images_root_for(*images, *manifest)),
                                                  cfg.features, c->jobs);
    const fs::path out(c->out);
    stores.detector.save(out / "detector.pgfs");
    stores.appearance.save(out / "appearance.pgfs");
    std::printf("records: %zu per channel\n", stores.detector.size());
  });
}

void add_dense_propose(CLI::App& app) {
  auto c = std::make_shared<Common>();
  auto manifest = std::make_shared<std::string>();
  auto images = std::make_shared<std::string>();
  auto* sub = app.add_subcommand("dense-propose", "Multi-scale sliding-window proposals");
  add_common(sub, *c);
  sub->add_option("--manifest", *manifest)->required()->check(CLI::ExistingFile);
  sub->add_option("--images-root", *images, "Directory image paths are relative to (default: manifest dir)");
  sub->callback([=] {
    ExperimentConfig cfg = base_config(*c);
    start_output(*c, cfg);
    const Dataset dataset = read_manifest(*manifest);
    const fs::path root = images_root_for(*images, *manifest);
    ProposalMap props;
    for (const AnnotatedImage& img : dataset) {
      int w = img.width, h = img.height;
      if (w <= 0 || h <= 0) std::tie(w, h) = pgm_size(root / img.image_path);
      props[img.image_id] = dense_propose(img.image_id, w, h, cfg.proposals);
    }
    write_proposals(fs::path(c->out) / "proposals.csv", props);
  });
}

void add_load_proposals(CLI::App& app) {
  auto c = std::make_shared<Common>();
  auto input = std::make_shared<std::string>();
  auto manifest = std::make_shared<std::string>();
  auto* sub = app.add_subcommand("load-proposals", "Validate an external proposal CSV and normalise it");
  add_common(sub, *c);
  sub->add_option("--input", *input, "CSV image_id,region_id,x_min,y_min,x_max,y_max")
      ->required()
      ->check(CLI::ExistingFile);
  sub->add_option("--manifest", *manifest, "Check that every image has proposals")->check(CLI::ExistingFile);
  sub->callback([=] {
    ExperimentConfig cfg = base_config(*c);
    start_output(*c, cfg);
    const ProposalMap props = load_proposals(*input);
    if (!manifest->empty()) {
      for (const AnnotatedImage& img : read_manifest(*manifest)) {
        if (!props.count(img.image_id)) throw LookupError("no proposals for image " + std::to_string(img.image_id));
      }
    }
    write_proposals(fs::path(c->out) / "proposals.csv", props);
    std::size_t n = 0;
    for (const auto& [id, set] : props) n += set.regions.size();
    std::printf("images: %zu, regions: %zu\n", props.size(), n);
  });
}

void add_train_detectors(CLI::App& app) {
  auto c = std::make_shared<Common>();
  auto manifest = std::make_shared<std::string>();
  auto proposals = std::make_shared<std::string>();
  auto features = std::make_shared<std::string>();
  auto* sub = app.add_subcommand("train-detectors", "Train root and part detectors");
  add_common(sub, *c);
  sub->add_option("--manifest", *manifest)->required()->check(CLI::ExistingFile);
  sub->add_option("--proposals", *proposals)->required()->check(CLI::ExistingFile);
  sub->add_option("--features", *features, "Detector-channel feature store")->required()->check(CLI::ExistingFile);
  sub->callback([=] {
    ExperimentConfig cfg = base_config(*c);
    start_output(*c, cfg);
    const Inputs in = read_inputs(*manifest, cfg);
    const FeatureStore store = FeatureStore::load(*features);
    DetectorTrainingOptions opts = cfg.detect;
    opts.jobs = c->jobs;
    const auto detectors = train_detectors(in.truth, load_proposals(*proposals), store, in.parts.parts, opts);
    save_detectors(fs::path(c->out) / "detectors.json", detectors);
    for (const Detector& d : detectors) std::printf("%s: tau %s\n", d.name.c_str(), format_real(d.tau).c_str());
  });
}

void add_fit_prior(CLI::App& app) {
  auto c = std::make_shared<Common>();
  auto manifest = std::make_shared<std::string>();
  auto appearance = std::make_shared<std::string>();
  auto variant = std::make_shared<std::string>();
  auto alpha = std::make_shared<std::optional<double>>();
  auto k = std::make_shared<std::optional<int>>();
  auto* sub = app.add_subcommand("fit-prior", "Fit the configuration prior");
  add_common(sub, *c);
  sub->add_option("--manifest", *manifest)->required()->check(CLI::ExistingFile);
  sub->add_option("--variant", *variant, "null, box, mg or np")->check(CLI::IsMember({"null", "box", "mg", "np"}));
  sub->add_option("--appearance", *appearance, "Appearance-channel feature store (np only)")->check(CLI::ExistingFile);
  sub->add_option("--alpha", *alpha, "Exponent on the part densities");
  sub->add_option("--k", *k, "Neighbours for the np prior");
  sub->callback([=] {
    ExperimentConfig cfg = base_config(*c);
    if (!variant->empty()) set_prior_variant(cfg.prior, *variant);
    if (*alpha) cfg.prior.alpha = **alpha;
    if (*k) cfg.prior.neighbors = **k;
    start_output(*c, cfg);
    const Inputs in = read_inputs(*manifest, cfg);
    std::optional<FeatureStore> store;
    const bool np = cfg.prior.variant == PriorVariant::kGeometric && cfg.prior.density == PartDensityKind::kNeighbors;
    if (np) {
      if (appearance->empty()) throw InvalidArgument("fit-prior --variant np needs --appearance");
      store = FeatureStore::load(*appearance);
    }
    const PriorModel model = PriorModel::fit(cfg.prior, in.truth, store ? &*store : nullptr, in.parts.parts.size());
    const fs::path store_path = np ? fs::relative(fs::absolute(*appearance), fs::absolute(c->out)) : fs::path();
    model.save(fs::path(c->out) / "prior.json", store_path);
    std::printf("prior: %s\n", prior_variant_name(cfg.prior).c_str());
  });
}

void add_infer(CLI::App& app) {
  auto c = std::make_shared<Common>();
  struct Args {
    std::string manifest, proposals, detectors, prior, features, appearance, split = "test";
    bool bbox_given = false;
  };
  auto a = std::make_shared<Args>();
  auto* sub = app.add_subcommand("infer", "Joint root and part localization");
  add_common(sub, *c);
  sub->add_option("--manifest", a->manifest)->required()->check(CLI::ExistingFile);
  sub->add_option("--proposals", a->proposals)->required()->check(CLI::ExistingFile);
  sub->add_option("--detectors", a->detectors)->required()->check(CLI::ExistingFile);
  sub->add_option("--prior", a->prior)->required()->check(CLI::ExistingFile);
  sub->add_option("--features", a->features, "Detector-channel feature store")->required()->check(CLI::ExistingFile);
  sub->add_option("--appearance", a->appearance, "Appearance-channel feature store")->check(CLI::ExistingFile);
  sub->add_flag("--bbox-given", a->bbox_given, "Fix the root to the annotated object box");
  add_split_option(sub, a->split);
  sub->callback([c, a] {
    ExperimentConfig cfg = base_config(*c);
    if (a->bbox_given) cfg.infer.bbox_given = true;
    const PriorModel prior = PriorModel::load(a->prior);
    cfg.prior = prior.config();
    start_output(*c, cfg);
    const Inputs in = read_inputs(a->manifest, cfg);
    const FeatureStore det = FeatureStore::load(a->features);
    std::optional<FeatureStore> app_store;
    if (!a->appearance.empty()) app_store = FeatureStore::load(a->appearance);
    const auto detectors = load_detectors(a->detectors);
    const auto images = pick_split(in.truth, a->split);
    InferOptions opts;
    opts.top_m_roots = cfg.infer.top_m_roots;
    const auto configs = infer_images(images, load_proposals(a->proposals), detectors, prior, det,
                                      app_store ? &*app_store : nullptr, cfg.infer.bbox_given, opts, c->jobs);
    write_configurations(fs::path(c->out) / "configurations.jsonl", configs, part_names(in.parts.parts));
    std::printf("configurations: %zu\n", configs.size());
  });
}

void add_train_classifier(CLI::App& app) {
  auto c = std::make_shared<Common>();
  auto manifest = std::make_shared<std::string>();
  auto features = std::make_shared<std::string>();
  auto no_parts = std::make_shared<bool>(false);
  auto* sub = app.add_subcommand("train-classifier", "One-vs-all classifier on pose-normalized features");
  add_common(sub, *c);
  sub->add_option("--manifest", *manifest)->required()->check(CLI::ExistingFile);
  sub->add_option("--features", *features, "Detector-channel feature store")->required()->check(CLI::ExistingFile);
  sub->add_flag("--no-parts", *no_parts, "Root block only");
  sub->callback([=] {
    ExperimentConfig cfg = base_config(*c);
    start_output(*c, cfg);
    const Inputs in = read_inputs(*manifest, cfg);
    ClassifierSetup setup = classifier_setup(cfg);
    setup.root_only = *no_parts;
    const Classifier clf = train_pose_classifier(in.truth, FeatureStore::load(*features), setup);
    clf.save(fs::path(c->out) / "classifier.json");
    std::printf("classes: %zu, dim: %zu\n", clf.classes().size(), clf.dim());
  });
}

void add_predict(CLI::App& app) {
  auto c = std::make_shared<Common>();
  struct Args {
    std::string manifest, features, classifier, configurations, mode = "inferred", split = "test";
    bool no_parts = false;
  };
  auto a = std::make_shared<Args>();
  auto* sub = app.add_subcommand("predict", "Classify images from inferred or annotated locations");
  add_common(sub, *c);
  sub->add_option("--manifest", a->manifest)->required()->check(CLI::ExistingFile);
  sub->add_option("--features", a->features, "Detector-channel feature store")->required()->check(CLI::ExistingFile);
  sub->add_option("--classifier", a->classifier)->required()->check(CLI::ExistingFile);
  sub->add_option("--configurations", a->configurations, "Output of infer (inferred mode)")
      ->check(CLI::ExistingFile);
  sub->add_option("--mode", a->mode, "inferred or oracle")->check(CLI::IsMember({"inferred", "oracle"}));
  sub->add_flag("--no-parts", a->no_parts, "Root block only");
  add_split_option(sub, a->split);
  sub->callback([c, a] {
    ExperimentConfig cfg = base_config(*c);
    start_output(*c, cfg);
    const Inputs in = read_inputs(a->manifest, cfg);
    const auto images = pick_split(in.truth, a->split);
    const LocationSource source = a->mode == "oracle" ? LocationSource::kOracle : LocationSource::kInferred;
    std::vector<Configuration> ordered;
    if (source == LocationSource::kInferred) {
      if (a->configurations.empty()) throw InvalidArgument("predict --mode inferred needs --configurations");
      std::map<std::uint64_t, Configuration> by_id;
      for (auto& cfg_row : read_configurations(a->configurations, part_names(in.parts.parts))) {
        by_id[cfg_row.image_id] = std::move(cfg_row);
      }
      for (const ImageTruth& t : images) {
        auto it = by_id.find(t.image_id);
        if (it == by_id.end()) throw LookupError("no configuration for image " + std::to_string(t.image_id));
        ordered.push_back(it->second);
      }
    }
    ClassifierSetup setup = classifier_setup(cfg);
    setup.root_only = a->no_parts;
    const auto rows = predict_images(images, ordered, Classifier::load(a->classifier), FeatureStore::load(a->features),
                                     source, setup);
    write_predictions(fs::path(c->out) / "predictions.csv", rows);
    std::printf("accuracy: %s\n", format_real(accuracy(rows)).c_str());
  });
}

void add_evaluate(CLI::App& app) {
  auto c = std::make_shared<Common>();
  struct Args {
    std::string metric = "pcp", manifest, configurations, predictions, proposals, split = "test";
    std::vector<double> thresholds;
    std::optional<double> overlap;
  };
  auto a = std::make_shared<Args>();
  auto* sub = app.add_subcommand("evaluate", "PCP, classification accuracy or proposal recall");
  add_common(sub, *c);
  sub->add_option("--metric", a->metric, "pcp, accuracy or recall")->check(CLI::IsMember({"pcp", "accuracy", "recall"}));
  sub->add_option("--manifest", a->manifest)->check(CLI::ExistingFile);
  sub->add_option("--configurations", a->configurations, "Output of infer (pcp)")->check(CLI::ExistingFile);
  sub->add_option("--predictions", a->predictions, "Output of predict (accuracy)")->check(CLI::ExistingFile);
  sub->add_option("--proposals", a->proposals, "Proposal CSV (recall)")->check(CLI::ExistingFile);
  sub->add_option("--thresholds", a->thresholds, "IoU thresholds for recall")->delimiter(',');
  sub->add_option("--overlap", a->overlap, "IoU threshold for pcp");
  add_split_option(sub, a->split);
  sub->callback([c, a] {
    ExperimentConfig cfg = base_config(*c);
    if (!a->thresholds.empty()) cfg.eval.recall_thresholds = a->thresholds;
    if (a->overlap) cfg.eval.overlap = *a->overlap;
    start_output(*c, cfg);
    const fs::path out(c->out);

    if (a->metric == "accuracy") {
      if (a->predictions.empty()) throw InvalidArgument("evaluate --metric accuracy needs --predictions");
      const auto rows = read_predictions(a->predictions);
      const double acc = accuracy(rows);
      auto f = open_out(out / "accuracy.csv");
      f << "metric,images,value\naccuracy," << rows.size() << ',' << format_real(acc) << '\n';
      std::printf("accuracy: %s (%zu images)\n", format_real(acc).c_str(), rows.size());
      return;
    }

    if (a->manifest.empty()) throw InvalidArgument("evaluate --metric " + a->metric + " needs --manifest");
    const Inputs in = read_inputs(a->manifest, cfg);
    const auto images = pick_split(in.truth, a->split);
    const auto names = part_names(in.parts.parts);

    if (a->metric == "pcp") {
      if (a->configurations.empty()) throw InvalidArgument("evaluate --metric pcp needs --configurations");
      const auto configs = read_configurations(a->configurations, names);
      const auto result = pcp(configs, images, cfg.eval.overlap);
      auto f = open_out(out / "pcp.csv");
      f << "part,correct,total,pcp\n";
      std::printf("%-10s %8s\n", "part", "pcp");
      for (std::size_t p = 0; p < result.size(); ++p) {
        f << names[p] << ',' << result[p].correct << ',' << result[p].total << ','
          << format_real(result[p].fraction()) << '\n';
        std::printf("%-10s %8.4f\n", names[p].c_str(), result[p].fraction());
      }
      return;
    }

    if (a->proposals.empty()) throw InvalidArgument("evaluate --metric recall needs --proposals");
    const auto table = recall_table(load_proposals(a->proposals), images, cfg.eval.recall_thresholds);
    auto f = open_out(out / "recall.csv");
    f << "part";
    std::printf("%-10s", "part");
    for (double t : cfg.eval.recall_thresholds) {
      f << ',' << format_real(t);
      std::printf(" %8s", format_real(t).c_str());
    }
    f << '\n';
    std::printf("\n");
    for (const auto& [part, recalls] : table) {
      f << names.at(static_cast<std::size_t>(part));
      std::printf("%-10s", names.at(static_cast<std::size_t>(part)).c_str());
      for (double r : recalls) {
        f << ',' << format_real(r);
        std::printf(" %8.4f", r);
      }
      f << '\n';
      std::printf("\n");
    }
  });
}

void add_cv_sweep(CLI::App& app) {
  auto c = std::make_shared<Common>();
  struct Args {
    std::string param = "alpha", manifest, proposals, features, appearance;
  };
  auto a = std::make_shared<Args>();
  auto* sub = app.add_subcommand("cv-sweep", "Cross-validated accuracy over alpha or K");
  add_common(sub, *c);
  sub->add_option("--param", a->param, "alpha or k")->check(CLI::IsMember({"alpha", "k"}));
  sub->add_option("--manifest", a->manifest)->required()->check(CLI::ExistingFile);
  sub->add_option("--proposals", a->proposals)->required()->check(CLI::ExistingFile);
  sub->add_option("--features", a->features, "Detector-channel feature store")->required()->check(CLI::ExistingFile);
  sub->add_option("--appearance", a->appearance, "Appearance-channel feature store")
      ->required()
      ->check(CLI::ExistingFile);
  sub->callback([c, a] {
    ExperimentConfig cfg = base_config(*c);
    start_output(*c, cfg);
    const Inputs in = read_inputs(a->manifest, cfg);
    const SweepParam param = sweep_param_from(a->param);
    const auto rows = cross_validate(in.truth, load_proposals(a->proposals), FeatureStore::load(a->features),
                                     FeatureStore::load(a->appearance), in.parts.parts, cfg, param, c->jobs);
    const fs::path out(c->out);
    const std::string stem = "cv_" + sweep_param_name(param);
    write_sweep_csv(out / (stem + ".csv"), param, rows);
    write_sweep_svg(out / (stem + ".svg"), param, rows);
    for (const SweepRow& r : rows) std::printf("%s=%s accuracy %.4f\n", a->param.c_str(), format_real(r.value).c_str(), r.mean_accuracy);
  });
}

}  // namespace

void register_commands(CLI::App& app) {
  add_ingest_cub(app);
  add_gen_synth(app);
  add_extract_features(app);
  add_dense_propose(app);
  add_load_proposals(app);
  add_train_detectors(app);
  add_fit_prior(app);
  add_infer(app);
  add_train_classifier(app);
  add_predict(app);
  add_evaluate(app);
  add_cv_sweep(app);
}

}  // namespace partloc::cli
