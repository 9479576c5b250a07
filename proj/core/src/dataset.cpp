#include "partloc/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include <nlohmann/json.hpp>

#include "partloc/error.hpp"

namespace partloc {
namespace {

constexpr std::array<std::string_view, kNumKeypoints> kKeypointLabels = {
    "back",     "beak", "belly",     "breast",    "crown", "forehead", "left_eye", "left_leg",
    "left_wing", "nape", "right_eye", "right_leg", "right_wing", "tail", "throat"};

std::ifstream open_or_throw(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError(path.string(), 0, "cannot open file");
  return in;
}

// Calls fn(line_no, tokens) for every non-blank line.
template <typename Fn>
void for_each_row(const std::filesystem::path& path, std::size_t min_tokens, Fn&& fn) {
  auto in = open_or_throw(path);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::istringstream ss(line);
    std::vector<std::string> tokens;
    for (std::string tok; ss >> tok;) tokens.push_back(std::move(tok));
    if (tokens.size() < min_tokens) {
      throw ParseError(path.string(), line_no, "expected " + std::to_string(min_tokens) + " fields");
    }
    fn(line_no, tokens);
  }
}

double to_double(const std::filesystem::path& path, std::size_t line, const std::string& s) {
  try {
    std::size_t used = 0;
    double v = std::stod(s, &used);
    if (used != s.size() || !std::isfinite(v)) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw ParseError(path.string(), line, "not a number: '" + s + "'");
  }
}

std::uint64_t to_id(const std::filesystem::path& path, std::size_t line, const std::string& s) {
  try {
    std::size_t used = 0;
    unsigned long long v = std::stoull(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw ParseError(path.string(), line, "not an integer: '" + s + "'");
  }
}

}  // namespace

std::string_view keypoint_label(KeypointName name) noexcept {
  return kKeypointLabels[static_cast<std::size_t>(name)];
}

KeypointName keypoint_from_label(std::string_view label) {
  for (std::size_t i = 0; i < kKeypointLabels.size(); ++i) {
    if (kKeypointLabels[i] == label) return static_cast<KeypointName>(i);
  }
  throw InvalidArgument("unknown keypoint '" + std::string(label) + "'");
}

std::string_view split_label(Split split) noexcept { return split == Split::kTrain ? "train" : "test"; }

std::vector<PartSpec> default_cub_parts() {
  using K = KeypointName;
  std::vector<PartSpec> parts;
  parts.push_back({0, "root", {}});
  parts.push_back({1, "head", {K::kBeak, K::kForehead, K::kCrown, K::kLeftEye, K::kRightEye, K::kNape, K::kThroat}});
  PartSpec body{2, "body", {}};
  for (std::size_t i = 0; i < kNumKeypoints; ++i) body.keypoints.push_back(static_cast<K>(i));
  parts.push_back(std::move(body));
  return parts;
}

void validate_part_specs(const std::vector<PartSpec>& specs) {
  if (specs.empty()) throw InvalidArgument("part specs: empty");
  for (std::size_t i = 0; i < specs.size(); ++i) {
    if (specs[i].part_id != static_cast<int>(i)) throw InvalidArgument("part specs: ids must be dense from 0");
    if (i > 0 && specs[i].keypoints.empty()) {
      throw InvalidArgument("part specs: part '" + specs[i].name + "' has no keypoints");
    }
  }
  if (!specs[0].keypoints.empty()) throw InvalidArgument("part specs: part 0 is the object box");
}

std::vector<std::optional<BBox>> derive_part_boxes(const AnnotatedImage& img,
                                                   const std::vector<PartSpec>& specs,
                                                   const PartBoxOptions& options) {
  if (!(options.pad_fraction >= 0.0) || !(options.min_side >= 0.0)) {
    throw InvalidArgument("derive_part_boxes: negative padding");
  }
  std::vector<std::optional<BBox>> out(specs.size());
  for (const PartSpec& spec : specs) {
    if (spec.part_id == 0) {
      out[0] = img.object_box;
      continue;
    }
    double x0 = INFINITY, y0 = INFINITY, x1 = -INFINITY, y1 = -INFINITY;
    bool any = false;
    for (KeypointName k : spec.keypoints) {
      const Keypoint& kp = img.keypoints[static_cast<std::size_t>(k)];
      if (!kp.visible) continue;
      any = true;
      x0 = std::min(x0, kp.x);
      y0 = std::min(y0, kp.y);
      x1 = std::max(x1, kp.x);
      y1 = std::max(y1, kp.y);
    }
    if (!any) continue;

    const double pad = options.pad_fraction * std::hypot(x1 - x0, y1 - y0);
    x0 -= pad;
    y0 -= pad;
    x1 += pad;
    y1 += pad;
    if (x1 - x0 < options.min_side) {
      const double grow = 0.5 * (options.min_side - (x1 - x0));
      x0 -= grow;
      x1 += grow;
    }
    if (y1 - y0 < options.min_side) {
      const double grow = 0.5 * (options.min_side - (y1 - y0));
      y0 -= grow;
      y1 += grow;
    }
    if (img.width > 0 && img.height > 0) {
      x0 = std::max(x0, 0.0);
      y0 = std::max(y0, 0.0);
      x1 = std::min(x1, static_cast<double>(img.width));
      y1 = std::min(y1, static_cast<double>(img.height));
    }
    if (x0 < x1 && y0 < y1) out[static_cast<std::size_t>(spec.part_id)] = BBox(x0, y0, x1, y1);
  }
  return out;
}

Dataset load_cub(const std::filesystem::path& root) {
  const auto images_txt = root / "images.txt";
  const auto boxes_txt = root / "bounding_boxes.txt";
  const auto parts_txt = root / "parts" / "part_locs.txt";
  const auto labels_txt = root / "image_class_labels.txt";
  const auto split_txt = root / "train_test_split.txt";
  for (const auto& p : {images_txt, boxes_txt, parts_txt, labels_txt, split_txt}) {
    if (!std::filesystem::exists(p)) throw ParseError(p.string(), 0, "missing file");
  }

  Dataset dataset;
  std::map<std::uint64_t, std::size_t> index;
  for_each_row(images_txt, 2, [&](std::size_t line, const std::vector<std::string>& t) {
    AnnotatedImage img;
    img.image_id = to_id(images_txt, line, t[0]);
    img.image_path = t[1];
    for (std::size_t k = 0; k < kNumKeypoints; ++k) img.keypoints[k].name = static_cast<KeypointName>(k);
    if (!index.emplace(img.image_id, dataset.size()).second) {
      throw ParseError(images_txt.string(), line, "duplicate image id");
    }
    dataset.push_back(std::move(img));
  });

  auto lookup = [&](const std::filesystem::path& file, std::size_t line, const std::string& tok) -> AnnotatedImage& {
    auto it = index.find(to_id(file, line, tok));
    if (it == index.end()) throw ParseError(file.string(), line, "unknown image id " + tok);
    return dataset[it->second];
  };

  auto require_all = [&](const std::filesystem::path& file, const std::vector<bool>& seen) {
    for (std::size_t i = 0; i < seen.size(); ++i) {
      if (!seen[i]) {
        throw ParseError(file.string(), 0, "no entry for image " + std::to_string(dataset[i].image_id));
      }
    }
  };

  std::vector<bool> seen(dataset.size(), false);
  for_each_row(boxes_txt, 5, [&](std::size_t line, const std::vector<std::string>& t) {
    AnnotatedImage& img = lookup(boxes_txt, line, t[0]);
    const double x = to_double(boxes_txt, line, t[1]), y = to_double(boxes_txt, line, t[2]);
    const double w = to_double(boxes_txt, line, t[3]), h = to_double(boxes_txt, line, t[4]);
    if (!(w > 0.0 && h > 0.0)) throw ParseError(boxes_txt.string(), line, "empty bounding box");
    img.object_box = box_from_xywh(x, y, w, h);
    seen[index.at(img.image_id)] = true;
  });
  require_all(boxes_txt, seen);

  seen.assign(dataset.size(), false);
  for_each_row(labels_txt, 2, [&](std::size_t line, const std::vector<std::string>& t) {
    AnnotatedImage& img = lookup(labels_txt, line, t[0]);
    img.label = static_cast<int>(to_id(labels_txt, line, t[1]));
    if (img.label < 1) throw ParseError(labels_txt.string(), line, "class labels start at 1");
    seen[index.at(img.image_id)] = true;
  });
  require_all(labels_txt, seen);

  seen.assign(dataset.size(), false);
  for_each_row(split_txt, 2, [&](std::size_t line, const std::vector<std::string>& t) {
    AnnotatedImage& img = lookup(split_txt, line, t[0]);
    const auto flag = to_id(split_txt, line, t[1]);
    if (flag > 1) throw ParseError(split_txt.string(), line, "split flag must be 0 or 1");
    img.split = flag == 1 ? Split::kTrain : Split::kTest;
    seen[index.at(img.image_id)] = true;
  });
  require_all(split_txt, seen);

  for_each_row(parts_txt, 5, [&](std::size_t line, const std::vector<std::string>& t) {
    AnnotatedImage& img = lookup(parts_txt, line, t[0]);
    const auto part = to_id(parts_txt, line, t[1]);
    if (part < 1 || part > kNumKeypoints) throw ParseError(parts_txt.string(), line, "part id out of range");
    Keypoint& kp = img.keypoints[part - 1];
    kp.x = to_double(parts_txt, line, t[2]);
    kp.y = to_double(parts_txt, line, t[3]);
    kp.visible = to_double(parts_txt, line, t[4]) != 0.0;
  });
  return dataset;
}

void write_manifest(const std::filesystem::path& path, const Dataset& dataset) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ParseError(path.string(), 0, "cannot open for writing");
  for (const AnnotatedImage& img : dataset) {
    nlohmann::ordered_json j;
    j["image_id"] = img.image_id;
    j["path"] = img.image_path;
    j["label"] = img.label;
    const BBox& b = img.object_box;
    j["box"] = {b.x_min(), b.y_min(), b.x_max(), b.y_max()};
    auto kps = nlohmann::ordered_json::array();
    for (const Keypoint& kp : img.keypoints) {
      kps.push_back({std::string(keypoint_label(kp.name)), kp.x, kp.y, kp.visible});
    }
    j["keypoints"] = std::move(kps);
    j["split"] = std::string(split_label(img.split));
    j["width"] = img.width;
    j["height"] = img.height;
    out << j.dump() << '\n';
  }
}

Dataset read_manifest(const std::filesystem::path& path) {
  auto in = open_or_throw(path);
  Dataset dataset;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      AnnotatedImage img;
      img.image_id = j.at("image_id").get<std::uint64_t>();
      img.image_path = j.at("path").get<std::string>();
      img.label = j.at("label").get<int>();
      const auto& b = j.at("box");
      if (b.size() != 4) throw Error("box must have 4 entries");
      img.object_box = BBox(b[0].get<double>(), b[1].get<double>(), b[2].get<double>(), b[3].get<double>());
      const auto& kps = j.at("keypoints");
      if (kps.size() != kNumKeypoints) throw Error("expected 15 keypoints");
      for (std::size_t k = 0; k < kNumKeypoints; ++k) {
        const auto& e = kps[k];
        img.keypoints[k] = {keypoint_from_label(e.at(0).get<std::string>()), e.at(1).get<double>(),
                            e.at(2).get<double>(), e.at(3).get<bool>()};
      }
      const auto split = j.at("split").get<std::string>();
      if (split != "train" && split != "test") throw Error("split must be train or test");
      img.split = split == "train" ? Split::kTrain : Split::kTest;
      img.width = j.value("width", 0);
      img.height = j.value("height", 0);
      dataset.push_back(std::move(img));
    } catch (const ParseError&) {
      throw;
    } catch (const std::exception& e) {
      throw ParseError(path.string(), line_no, e.what());
    }
  }
  return dataset;
}

std::vector<ImageTruth> resolve_truth(const Dataset& dataset, const std::vector<PartSpec>& specs,
                                      const PartBoxOptions& options) {
  validate_part_specs(specs);
  std::vector<ImageTruth> truth;
  truth.reserve(dataset.size());
  for (const AnnotatedImage& img : dataset) {
    truth.push_back({img.image_id, img.label, img.split, derive_part_boxes(img, specs, options)});
  }
  return truth;
}

std::size_t count_parts_outside_object(const std::vector<ImageTruth>& truth) {
  std::size_t misses = 0;
  for (const ImageTruth& t : truth) {
    for (std::size_t p = 1; p < t.parts.size(); ++p) {
      if (t.parts[p] && intersection_area(*t.parts[p], *t.parts[0]) == 0.0) ++misses;
    }
  }
  return misses;
}

}  // namespace partloc
