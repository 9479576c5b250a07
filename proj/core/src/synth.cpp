#include "partloc/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "partloc/error.hpp"

namespace partloc {
namespace {

using Rng = std::mt19937_64;

constexpr double kTwoPi = 2.0 * std::numbers::pi;

// Corner keypoints encoding each part box (top-left, bottom-right).
constexpr std::array<std::pair<KeypointName, KeypointName>, 6> kCornerKeypoints = {{
    {KeypointName::kCrown, KeypointName::kThroat},
    {KeypointName::kBack, KeypointName::kBelly},
    {KeypointName::kForehead, KeypointName::kNape},
    {KeypointName::kLeftWing, KeypointName::kRightWing},
    {KeypointName::kLeftLeg, KeypointName::kRightLeg},
    {KeypointName::kLeftEye, KeypointName::kRightEye},
}};

enum class Texture { kRoot, kHead, kBody, kOther };

Texture texture_for(std::size_t part) {
  switch (part) {
    case 0:
      return Texture::kRoot;
    case 1:
      return Texture::kHead;
    case 2:
      return Texture::kBody;
    default:
      return Texture::kOther;
  }
}

// Texture value in roughly [-1, 1] at box-normalised coordinates (u, v).
double texture(Texture kind, int cls, int n_classes, double separation, double u, double v) {
  const double theta = separation * std::numbers::pi * cls / n_classes;
  const double c = std::cos(theta), s = std::sin(theta);
  switch (kind) {
    case Texture::kRoot:
      return std::sin(kTwoPi * 3.0 * (u * c + v * s));
    case Texture::kHead: {
      const double r = std::hypot(u - 0.5, v - 0.5);
      const double blob = r < 0.3 ? 1.0 : (r < 0.5 ? -1.0 : 0.0);
      return 0.7 * blob + 0.5 * std::sin(kTwoPi * 2.0 * (u * s - v * c));
    }
    case Texture::kBody:
      return 0.6 * std::cos(kTwoPi * 2.0 * v) + 0.6 * std::sin(kTwoPi * 3.0 * (u * s + v * c));
    case Texture::kOther:
      return std::cos(kTwoPi * 2.0 * u) * std::cos(kTwoPi * 2.0 * v);
  }
  return 0.0;
}

void paint(std::vector<double>& canvas, int width, int height, const BBox& box, Texture kind, int cls,
           const SynthSpec& spec) {
  const int x0 = std::max(0, static_cast<int>(std::floor(box.x_min())));
  const int y0 = std::max(0, static_cast<int>(std::floor(box.y_min())));
  const int x1 = std::min(width, static_cast<int>(std::ceil(box.x_max())));
  const int y1 = std::min(height, static_cast<int>(std::ceil(box.y_max())));
  for (int y = y0; y < y1; ++y) {
    const double cy = y + 0.5;
    if (cy < box.y_min() || cy >= box.y_max()) continue;
    for (int x = x0; x < x1; ++x) {
      const double cx = x + 0.5;
      if (cx < box.x_min() || cx >= box.x_max()) continue;
      const double u = (cx - box.x_min()) / box.width();
      const double v = (cy - box.y_min()) / box.height();
      canvas[static_cast<std::size_t>(y) * static_cast<std::size_t>(width) + static_cast<std::size_t>(x)] =
          128.0 + spec.amplitude * texture(kind, cls, spec.n_classes, spec.class_separation, u, v);
    }
  }
}

BBox jitter(const BBox& box, double fraction, double width, double height, Rng& rng) {
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  const double w = box.width() * std::exp(fraction * unit(rng));
  const double h = box.height() * std::exp(fraction * unit(rng));
  const double cx = box.center_x() + fraction * box.width() * unit(rng);
  const double cy = box.center_y() + fraction * box.height() * unit(rng);
  return clip_to_image(BBox(cx - 0.5 * w, cy - 0.5 * h, cx + 0.5 * w, cy + 0.5 * h), width, height);
}

// Random placement of a w x h box inside the image avoiding `avoid`; nullopt
// after repeated failures.
std::optional<BBox> place_outside(double w, double h, const SynthSpec& spec, const std::vector<BBox>& avoid, Rng& rng) {
  if (w >= spec.image_width || h >= spec.image_height) return std::nullopt;
  std::uniform_real_distribution<double> ux(0.0, spec.image_width - w), uy(0.0, spec.image_height - h);
  for (int attempt = 0; attempt < 50; ++attempt) {
    const double x = ux(rng), y = uy(rng);
    const BBox b(x, y, x + w, y + h);
    const bool clear = std::none_of(avoid.begin(), avoid.end(), [&](const BBox& a) { return intersection_area(a, b) > 0.0; });
    if (clear) return b;
  }
  return std::nullopt;
}

}  // namespace

void SynthSpec::validate() const {
  if (n_train < 0 || n_test < 0 || n_train + n_test == 0) throw InvalidArgument("synth: need some images");
  if (n_classes < 1) throw InvalidArgument("synth: need at least one class");
  if (image_width <= 0 || image_height <= 0) throw InvalidArgument("synth: empty image");
  if (!(root_min_side > 0.0 && root_min_side <= root_max_side)) throw InvalidArgument("synth: bad root size range");
  if (root_max_side + 2.0 * containment_epsilon + 2.0 > std::min(image_width, image_height)) {
    throw InvalidArgument("synth: object larger than the image");
  }
  if (parts.size() > kCornerKeypoints.size()) throw InvalidArgument("synth: at most 6 parts");
  for (const SynthPart& p : parts) {
    if (p.layouts.size() != static_cast<std::size_t>(n_classes)) {
      throw InvalidArgument("synth: part '" + p.name + "' needs one layout per class");
    }
    for (const auto& g : p.layouts) {
      // A part box larger than the image cannot be placed.
      if (root_max_side * std::exp(std::max(g.mean[2], g.mean[3])) >= std::min(image_width, image_height)) {
        throw InvalidArgument("synth: part '" + p.name + "' larger than the image");
      }
      for (double s : g.stddev) {
        if (!(s >= 0.0)) throw InvalidArgument("synth: negative layout stddev");
      }
    }
  }
  if (distractor_count < 0 || background_windows < 0 || jitter_per_box < 0 || !(noise_sigma >= 0.0)) {
    throw InvalidArgument("synth: negative counts");
  }
}

SynthSpec default_synth_spec() {
  SynthSpec spec;
  const Layout sd{0.03, 0.03, 0.05, 0.05};
  SynthPart head{"head", {}, true, 2};
  SynthPart body{"body", {}, false, 2};
  for (int c = 0; c < spec.n_classes; ++c) {
    const double side = c % 2 == 0 ? -1.0 : 1.0;
    head.layouts.push_back({{0.22 * side, -0.25, std::log(0.3), std::log(0.3)}, sd});
    body.layouts.push_back({{-0.05 * side, 0.12, std::log(0.55), std::log(0.5)}, sd});
  }
  spec.parts = {head, body};
  return spec;
}

std::vector<PartSpec> synth_part_specs(const SynthSpec& spec) {
  std::vector<PartSpec> out;
  out.push_back({0, "root", {}});
  for (std::size_t p = 0; p < spec.parts.size(); ++p) {
    out.push_back({static_cast<int>(p + 1), spec.parts[p].name, {kCornerKeypoints[p].first, kCornerKeypoints[p].second}});
  }
  return out;
}

PartBoxOptions synth_box_options() { return {0.0, 0.0}; }

SynthScene generate(const SynthSpec& spec, std::uint64_t seed) {
  spec.validate();
  Rng rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  SynthScene scene;
  scene.parts = synth_part_specs(spec);
  scene.box_options = synth_box_options();
  const double W = spec.image_width, H = spec.image_height;
  const int n_images = spec.n_train + spec.n_test;
  const std::size_t n_parts = spec.parts.size();

  for (int i = 0; i < n_images; ++i) {
    const int cls = i % spec.n_classes;
    AnnotatedImage img;
    img.image_id = static_cast<std::uint64_t>(i + 1);
    img.image_path = "images/" + std::to_string(img.image_id) + ".pgm";
    img.label = cls + 1;
    img.split = i < spec.n_train ? Split::kTrain : Split::kTest;
    img.width = spec.image_width;
    img.height = spec.image_height;
    for (std::size_t k = 0; k < kNumKeypoints; ++k) img.keypoints[k].name = static_cast<KeypointName>(k);

    // Object box, kept clear of the border by the containment slack.
    const double margin = spec.containment_epsilon + 1.0;
    const double rw = spec.root_min_side + (spec.root_max_side - spec.root_min_side) * unit(rng);
    const double rh = spec.root_min_side + (spec.root_max_side - spec.root_min_side) * unit(rng);
    const double rx = margin + (W - rw - 2 * margin) * unit(rng);
    const double ry = margin + (H - rh - 2 * margin) * unit(rng);
    const BBox root(rx, ry, rx + rw, ry + rh);
    img.object_box = root;

    std::vector<BBox> part_boxes;
    for (std::size_t p = 0; p < n_parts; ++p) {
      const LayoutGaussian& g = spec.parts[p].layouts[static_cast<std::size_t>(cls)];
      std::optional<BBox> box;
      for (int attempt = 0; attempt < 1000 && !box; ++attempt) {
        Layout u;
        for (std::size_t d = 0; d < 4; ++d) u[d] = g.mean[d] + g.stddev[d] * gauss(rng);
        BBox cand = box_from_layout(root, u);
        const bool inside_image = cand.x_min() >= 0 && cand.y_min() >= 0 && cand.x_max() <= W && cand.y_max() <= H;
        if (!inside_image) continue;
        if (spec.enforce_containment && !contains_within_slack(root, cand, spec.containment_epsilon)) continue;
        box = cand;
      }
      if (!box) throw InvalidArgument("synth: cannot place part '" + spec.parts[p].name + "' inside the object");
      part_boxes.push_back(*box);
      auto [tl, br] = kCornerKeypoints[p];
      img.keypoints[static_cast<std::size_t>(tl)] = {tl, box->x_min(), box->y_min(), true};
      img.keypoints[static_cast<std::size_t>(br)] = {br, box->x_max(), box->y_max(), true};
    }

    // Raster: background noise field, object, parts, then look-alikes.
    std::vector<double> canvas(static_cast<std::size_t>(spec.image_width) * static_cast<std::size_t>(spec.image_height), 128.0);
    paint(canvas, spec.image_width, spec.image_height, root, Texture::kRoot, cls, spec);
    // Larger parts first so small ones stay on top.
    std::vector<std::size_t> paint_order(n_parts);
    for (std::size_t p = 0; p < n_parts; ++p) paint_order[p] = p;
    std::stable_sort(paint_order.begin(), paint_order.end(),
                     [&](std::size_t a, std::size_t b) { return part_boxes[a].area() > part_boxes[b].area(); });
    for (std::size_t p : paint_order) {
      paint(canvas, spec.image_width, spec.image_height, part_boxes[p], texture_for(p + 1), cls, spec);
    }

    // Look-alikes: copies of a part together with its surroundings, shifted by
    // whole pixels so the copy is exact up to noise.
    const std::vector<double> source = canvas;
    auto stamp = [&](const BBox& halo, double dx, double dy) {
      const int x0 = std::max(0, static_cast<int>(std::floor(halo.x_min())));
      const int y0 = std::max(0, static_cast<int>(std::floor(halo.y_min())));
      const int x1 = std::min(spec.image_width, static_cast<int>(std::ceil(halo.x_max())));
      const int y1 = std::min(spec.image_height, static_cast<int>(std::ceil(halo.y_max())));
      const int ox = static_cast<int>(dx), oy = static_cast<int>(dy);
      for (int y = y0; y < y1; ++y) {
        for (int x = x0; x < x1; ++x) {
          const int tx = x + ox, ty = y + oy;
          if (tx < 0 || ty < 0 || tx >= spec.image_width || ty >= spec.image_height) continue;
          canvas[static_cast<std::size_t>(ty) * static_cast<std::size_t>(spec.image_width) + static_cast<std::size_t>(tx)] =
              source[static_cast<std::size_t>(y) * static_cast<std::size_t>(spec.image_width) + static_cast<std::size_t>(x)];
        }
      }
    };
    auto shifted = [](const BBox& b, double dx, double dy) {
      return BBox(b.x_min() + dx, b.y_min() + dy, b.x_max() + dx, b.y_max() + dy);
    };
    constexpr double kHalo = 0.15;
    std::vector<BBox> decoys;
    std::vector<BBox> occupied{BBox(root.x_min() - margin, root.y_min() - margin, root.x_max() + margin, root.y_max() + margin)};
    const bool with_decoys = img.split == Split::kTest || spec.decoys_in_train;
    for (std::size_t p = 0; p < n_parts && with_decoys; ++p) {
      const SynthPart& sp = spec.parts[p];
      const BBox& part = part_boxes[p];
      const BBox halo(part.x_min() - kHalo * part.width(), part.y_min() - kHalo * part.height(),
                      part.x_max() + kHalo * part.width(), part.y_max() + kHalo * part.height());
      if (sp.mirrored_decoy) {
        const double dx = std::round(2.0 * (root.center_x() - part.center_x()));
        const BBox mirror = shifted(part, dx, 0.0);
        if (iou(mirror, part) < 0.1 && contains_within_slack(root, mirror, 0.0)) {
          stamp(halo, dx, 0.0);
          decoys.push_back(mirror);
        }
      }
      for (int d = 0; d < sp.outside_decoys; ++d) {
        if (auto h = place_outside(halo.width(), halo.height(), spec, occupied, rng)) {
          const double dx = std::round(h->x_min() - halo.x_min()), dy = std::round(h->y_min() - halo.y_min());
          const BBox target = shifted(halo, dx, dy);
          if (target.x_min() < 0 || target.y_min() < 0 || target.x_max() > W || target.y_max() > H) continue;
          stamp(halo, dx, dy);
          decoys.push_back(shifted(part, dx, dy));
          occupied.push_back(target);
        }
      }
    }

    Raster raster{spec.image_width, spec.image_height, std::vector<std::uint8_t>(canvas.size())};
    for (std::size_t k = 0; k < canvas.size(); ++k) {
      const double v = canvas[k] + spec.noise_sigma * gauss(rng);
      raster.pixels[k] = static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
    }

    // Proposals: ground truth, jittered copies, decoy windows, random part
    // windows, object-sized background windows; then shuffled ids.
    std::vector<BBox> windows;
    windows.push_back(root);
    for (const BBox& b : part_boxes) windows.push_back(b);
    const std::size_t n_truth = windows.size();
    for (std::size_t t = 0; t < n_truth; ++t) {
      for (int j = 0; j < spec.jitter_per_box; ++j) windows.push_back(jitter(windows[t], spec.jitter_fraction, W, H, rng));
    }
    int distractors = 0;
    for (const BBox& d : decoys) {
      if (distractors >= spec.distractor_count) break;
      windows.push_back(d);
      ++distractors;
      for (int j = 0; j < spec.jitter_per_box && distractors < spec.distractor_count; ++j, ++distractors) {
        windows.push_back(jitter(d, spec.jitter_fraction, W, H, rng));
      }
    }
    while (distractors < spec.distractor_count && n_parts > 0) {
      const BBox& like = part_boxes[static_cast<std::size_t>(distractors) % n_parts];
      if (auto b = place_outside(like.width(), like.height(), spec, {}, rng)) windows.push_back(*b);
      ++distractors;
    }
    for (int k = 0; k < spec.background_windows; ++k) {
      if (auto b = place_outside(rw, rh, spec, {}, rng)) windows.push_back(*b);
    }

    std::vector<std::uint32_t> ids(windows.size());
    for (std::size_t k = 0; k < ids.size(); ++k) ids[k] = static_cast<std::uint32_t>(k);
    std::shuffle(ids.begin(), ids.end(), rng);
    ProposalSet set{img.image_id, {}};
    for (std::size_t k = 0; k < windows.size(); ++k) set.regions.push_back({ids[k], windows[k]});
    std::sort(set.regions.begin(), set.regions.end(),
              [](const Region& a, const Region& b) { return a.region_id < b.region_id; });

    scene.proposals[img.image_id] = std::move(set);
    scene.dataset.push_back(std::move(img));
    scene.rasters.push_back(std::move(raster));
  }
  return scene;
}

}  // namespace partloc
