#include "partloc/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "partloc/error.hpp"

namespace partloc {
namespace {

using Json = nlohmann::json;
using OrderedJson = nlohmann::ordered_json;

// Reads optional keys of one object and rejects keys nobody asked for.
class Section {
 public:
  Section(const Json& j, std::string name) : j_(j), name_(std::move(name)) {
    if (!j_.is_object()) throw InvalidArgument("config: section '" + name_ + "' must be an object");
  }
  Section(const Section&) = delete;
  Section& operator=(const Section&) = delete;

  /// Throws on keys that were never read.
  void done() const {
    for (const auto& [key, value] : j_.items()) {
      if (!seen_.count(key)) throw InvalidArgument("config: unknown key '" + name_ + "." + key + "'");
    }
  }

  template <typename T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const Json::exception& e) {
      throw InvalidArgument("config: bad value for '" + name_ + "." + key + "': " + e.what());
    }
  }

  const Json* child(const char* key) {
    seen_.insert(key);
    return j_.contains(key) ? &j_.at(key) : nullptr;
  }

 private:
  const Json& j_;
  std::string name_;
  std::set<std::string> seen_;
};

OrderedJson parts_to_json(const std::vector<PartSpec>& parts) {
  OrderedJson arr = OrderedJson::array();
  for (const PartSpec& p : parts) {
    if (p.part_id == 0) continue;
    OrderedJson kps = OrderedJson::array();
    for (KeypointName k : p.keypoints) kps.push_back(std::string(keypoint_label(k)));
    arr.push_back(OrderedJson{{"name", p.name}, {"keypoints", kps}});
  }
  return arr;
}

std::vector<PartSpec> parts_from_json(const Json& arr) {
  if (!arr.is_array()) throw InvalidArgument("config: parts must be an array");
  std::vector<PartSpec> out{{0, "root", {}}};
  for (const Json& j : arr) {
    Section s(j, "parts[]");
    PartSpec p;
    p.part_id = static_cast<int>(out.size());
    s.get("name", p.name);
    std::vector<std::string> labels;
    s.get("keypoints", labels);
    for (const auto& l : labels) p.keypoints.push_back(keypoint_from_label(l));
    s.done();
    out.push_back(std::move(p));
  }
  validate_part_specs(out);
  return out;
}

OrderedJson synth_to_json(const SynthSpec& s) {
  OrderedJson parts = OrderedJson::array();
  for (const SynthPart& p : s.parts) {
    OrderedJson layouts = OrderedJson::array();
    for (const LayoutGaussian& g : p.layouts) layouts.push_back({{"mean", g.mean}, {"stddev", g.stddev}});
    parts.push_back({{"name", p.name},
                     {"mirrored_decoy", p.mirrored_decoy},
                     {"outside_decoys", p.outside_decoys},
                     {"layouts", layouts}});
  }
  return {{"n_train", s.n_train},
          {"n_test", s.n_test},
          {"image_width", s.image_width},
          {"image_height", s.image_height},
          {"n_classes", s.n_classes},
          {"root_min_side", s.root_min_side},
          {"root_max_side", s.root_max_side},
          {"class_separation", s.class_separation},
          {"amplitude", s.amplitude},
          {"noise_sigma", s.noise_sigma},
          {"decoys_in_train", s.decoys_in_train},
          {"distractor_count", s.distractor_count},
          {"background_windows", s.background_windows},
          {"jitter_per_box", s.jitter_per_box},
          {"jitter_fraction", s.jitter_fraction},
          {"enforce_containment", s.enforce_containment},
          {"containment_epsilon", s.containment_epsilon},
          {"parts", parts}};
}

void synth_from_json(const Json& j, SynthSpec& s) {
  Section sec(j, "synth");
  sec.get("n_train", s.n_train);
  sec.get("n_test", s.n_test);
  sec.get("image_width", s.image_width);
  sec.get("image_height", s.image_height);
  sec.get("n_classes", s.n_classes);
  sec.get("root_min_side", s.root_min_side);
  sec.get("root_max_side", s.root_max_side);
  sec.get("class_separation", s.class_separation);
  sec.get("amplitude", s.amplitude);
  sec.get("noise_sigma", s.noise_sigma);
  sec.get("decoys_in_train", s.decoys_in_train);
  sec.get("distractor_count", s.distractor_count);
  sec.get("background_windows", s.background_windows);
  sec.get("jitter_per_box", s.jitter_per_box);
  sec.get("jitter_fraction", s.jitter_fraction);
  sec.get("enforce_containment", s.enforce_containment);
  sec.get("containment_epsilon", s.containment_epsilon);
  if (const Json* parts = sec.child("parts")) {
    if (!parts->is_array()) throw InvalidArgument("config: synth.parts must be an array");
    s.parts.clear();
    for (const Json& pj : *parts) {
      Section ps(pj, "synth.parts[]");
      SynthPart p;
      ps.get("name", p.name);
      ps.get("mirrored_decoy", p.mirrored_decoy);
      ps.get("outside_decoys", p.outside_decoys);
      if (const Json* layouts = ps.child("layouts")) {
        for (const Json& lj : *layouts) {
          Section ls(lj, "synth.parts[].layouts[]");
          LayoutGaussian g;
          ls.get("mean", g.mean);
          ls.get("stddev", g.stddev);
          ls.done();
          p.layouts.push_back(g);
        }
      }
      ps.done();
      s.parts.push_back(std::move(p));
    }
  }
  sec.done();
}

OrderedJson to_json(const ExperimentConfig& c) {
  OrderedJson j;
  j["seed"] = c.seed;
  OrderedJson dataset{{"pad_fraction", c.dataset.boxes.pad_fraction}, {"min_side", c.dataset.boxes.min_side}};
  if (!c.dataset.parts.empty()) dataset["parts"] = parts_to_json(c.dataset.parts);
  j["dataset"] = dataset;
  j["featstore"] = {{"detector_grid", c.features.detector_grid},
                    {"appearance_grid", c.features.appearance_grid},
                    {"context_pixels", c.features.context_pixels},
                    {"warp_size", c.features.warp_size}};
  j["proposals"] = {{"scales", c.proposals.scales},
                    {"aspect_ratios", c.proposals.aspect_ratios},
                    {"stride_fraction", c.proposals.stride_fraction}};
  j["detect"] = {{"pos_iou", c.detect.rule.pos_iou},
                 {"neg_iou", c.detect.rule.neg_iou},
                 {"C", c.detect.svm.C},
                 {"epochs", c.detect.svm.epochs},
                 {"max_negatives", c.detect.max_negatives},
                 {"hard_negative_rounds", c.detect.hard_negative_rounds},
                 {"target_recall", c.detect.target_recall}};
  j["priors"] = {{"variant", prior_variant_name(c.prior)},
                 {"epsilon", c.prior.epsilon},
                 {"alpha", c.prior.alpha},
                 {"components", c.prior.mixture_components},
                 {"neighbors", c.prior.neighbors}};
  j["infer"] = {{"top_m_roots", c.infer.top_m_roots}, {"bbox_given", c.infer.bbox_given}};
  j["classify"] = {{"C", c.classify.C}, {"epochs", c.classify.epochs}, {"block_l2", c.classify.block_l2}};
  j["eval"] = {{"overlap", c.eval.overlap},
               {"recall_thresholds", c.eval.recall_thresholds},
               {"folds", c.eval.folds},
               {"alpha_grid", c.eval.alpha_grid},
               {"k_grid", c.eval.k_grid}};
  j["synth"] = synth_to_json(c.synth);
  return j;
}

}  // namespace

void ExperimentConfig::resolve_seeds() {
  detect.svm.seed = seed;
  prior.seed = seed;
}

void ExperimentConfig::validate() const {
  if (dataset.boxes.pad_fraction < 0.0 || dataset.boxes.min_side < 0.0) {
    throw InvalidArgument("config: dataset padding must be non-negative");
  }
  if (!dataset.parts.empty()) validate_part_specs(dataset.parts);
  if (features.detector_grid < 1 || features.appearance_grid < 1) throw InvalidArgument("config: feature grid < 1");
  if (!(features.context_pixels >= 0.0) || !(features.warp_size > 2.0 * features.context_pixels)) {
    throw InvalidArgument("config: context border must be smaller than half the warp size");
  }
  if (proposals.scales.empty() || proposals.aspect_ratios.empty()) {
    throw InvalidArgument("config: proposals need scales and aspect ratios");
  }
  if (!(proposals.stride_fraction > 0.0 && proposals.stride_fraction <= 1.0)) {
    throw InvalidArgument("config: stride_fraction must be in (0, 1]");
  }
  detect.rule.validate();
  if (!(detect.svm.C > 0.0) || detect.svm.epochs < 1) throw InvalidArgument("config: detect.C and epochs must be positive");
  if (!(detect.target_recall > 0.0 && detect.target_recall <= 1.0)) {
    throw InvalidArgument("config: target_recall must be in (0, 1]");
  }
  if (detect.max_negatives == 0 || detect.hard_negative_rounds < 0) {
    throw InvalidArgument("config: max_negatives must be positive, hard_negative_rounds non-negative");
  }
  prior.validate();
  if (!(classify.C > 0.0) || classify.epochs < 1) throw InvalidArgument("config: classify.C and epochs must be positive");
  if (!(eval.overlap > 0.0 && eval.overlap <= 1.0)) throw InvalidArgument("config: eval.overlap must be in (0, 1]");
  for (double t : eval.recall_thresholds) {
    if (!(t > 0.0 && t <= 1.0)) throw InvalidArgument("config: recall thresholds must be in (0, 1]");
  }
  if (eval.folds < 2) throw InvalidArgument("config: eval.folds must be at least 2");
  if (eval.alpha_grid.empty() || eval.k_grid.empty()) throw InvalidArgument("config: sweep grids must be nonempty");
  for (double a : eval.alpha_grid) {
    if (!(a >= 0.0)) throw InvalidArgument("config: alpha grid values must be >= 0");
  }
  for (int k : eval.k_grid) {
    if (k < 1) throw InvalidArgument("config: K grid values must be >= 1");
  }
  synth.validate();
}

ExperimentConfig parse_config(const std::string& json_text) {
  Json root;
  try {
    root = Json::parse(json_text);
  } catch (const Json::parse_error& e) {
    throw InvalidArgument(std::string("config: invalid JSON: ") + e.what());
  }
  ExperimentConfig c;
  Section top(root, "config");
  top.get("seed", c.seed);
  if (const Json* j = top.child("dataset")) {
    Section s(*j, "dataset");
    s.get("pad_fraction", c.dataset.boxes.pad_fraction);
    s.get("min_side", c.dataset.boxes.min_side);
    if (const Json* parts = s.child("parts")) c.dataset.parts = parts_from_json(*parts);
    s.done();
  }
  if (const Json* j = top.child("featstore")) {
    Section s(*j, "featstore");
    s.get("detector_grid", c.features.detector_grid);
    s.get("appearance_grid", c.features.appearance_grid);
    s.get("context_pixels", c.features.context_pixels);
    s.get("warp_size", c.features.warp_size);
    s.done();
  }
  if (const Json* j = top.child("proposals")) {
    Section s(*j, "proposals");
    s.get("scales", c.proposals.scales);
    s.get("aspect_ratios", c.proposals.aspect_ratios);
    s.get("stride_fraction", c.proposals.stride_fraction);
    s.done();
  }
  if (const Json* j = top.child("detect")) {
    Section s(*j, "detect");
    s.get("pos_iou", c.detect.rule.pos_iou);
    s.get("neg_iou", c.detect.rule.neg_iou);
    s.get("C", c.detect.svm.C);
    s.get("epochs", c.detect.svm.epochs);
    s.get("max_negatives", c.detect.max_negatives);
    s.get("hard_negative_rounds", c.detect.hard_negative_rounds);
    s.get("target_recall", c.detect.target_recall);
    s.done();
  }
  if (const Json* j = top.child("priors")) {
    Section s(*j, "priors");
    std::string variant = prior_variant_name(c.prior);
    s.get("variant", variant);
    set_prior_variant(c.prior, variant);
    s.get("epsilon", c.prior.epsilon);
    s.get("alpha", c.prior.alpha);
    s.get("components", c.prior.mixture_components);
    s.get("neighbors", c.prior.neighbors);
    s.done();
  }
  if (const Json* j = top.child("infer")) {
    Section s(*j, "infer");
    s.get("top_m_roots", c.infer.top_m_roots);
    s.get("bbox_given", c.infer.bbox_given);
    s.done();
  }
  if (const Json* j = top.child("classify")) {
    Section s(*j, "classify");
    s.get("C", c.classify.C);
    s.get("epochs", c.classify.epochs);
    s.get("block_l2", c.classify.block_l2);
    s.done();
  }
  if (const Json* j = top.child("eval")) {
    Section s(*j, "eval");
    s.get("overlap", c.eval.overlap);
    s.get("recall_thresholds", c.eval.recall_thresholds);
    s.get("folds", c.eval.folds);
    s.get("alpha_grid", c.eval.alpha_grid);
    s.get("k_grid", c.eval.k_grid);
    s.done();
  }
  if (const Json* j = top.child("synth")) synth_from_json(*j, c.synth);
  top.done();
  c.resolve_seeds();
  c.validate();
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError(path.string(), 0, "cannot open config file");
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return parse_config(ss.str());
  } catch (const InvalidArgument& e) {
    throw ParseError(path.string(), 0, e.what());
  }
}

std::string dump_config(const ExperimentConfig& config) { return to_json(config).dump(2) + "\n"; }

void save_config(const std::filesystem::path& path, const ExperimentConfig& config) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ParseError(path.string(), 0, "cannot open for writing");
  out << dump_config(config);
}

void write_parts_file(const std::filesystem::path& path, const PartsFile& parts) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ParseError(path.string(), 0, "cannot open for writing");
  OrderedJson j{{"pad_fraction", parts.boxes.pad_fraction},
                {"min_side", parts.boxes.min_side},
                {"parts", parts_to_json(parts.parts)}};
  out << j.dump(2) << '\n';
}

PartsFile read_parts_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError(path.string(), 0, "cannot open parts file");
  try {
    Json j = Json::parse(in);
    PartsFile out;
    Section s(j, "parts file");
    s.get("pad_fraction", out.boxes.pad_fraction);
    s.get("min_side", out.boxes.min_side);
    const Json* parts = s.child("parts");
    if (parts == nullptr) throw InvalidArgument("missing 'parts'");
    out.parts = parts_from_json(*parts);
    s.done();
    return out;
  } catch (const Json::exception& e) {
    throw ParseError(path.string(), 0, e.what());
  } catch (const InvalidArgument& e) {
    throw ParseError(path.string(), 0, e.what());
  }
}

PartsFile resolve_parts(const ExperimentConfig& config, const std::filesystem::path& manifest) {
  if (!config.dataset.parts.empty()) return {config.dataset.boxes, config.dataset.parts};
  const auto sidecar = manifest.parent_path() / "parts.json";
  if (std::filesystem::exists(sidecar)) return read_parts_file(sidecar);
  return {config.dataset.boxes, default_cub_parts()};
}

}  // namespace partloc
