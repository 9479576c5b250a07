#include "partloc/priors.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>
#include <numeric>
#include <random>

#include <nlohmann/json.hpp>

#include "partloc/error.hpp"

namespace partloc {
namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();
constexpr std::size_t kDims = 4;

double log_sum_exp(std::span<const double> v) {
  double m = kNegInf;
  for (double x : v) m = std::max(m, x);
  if (m == kNegInf) return kNegInf;
  double s = 0.0;
  for (double x : v) s += std::exp(x - m);
  return m + std::log(s);
}

double component_log_pdf(const GaussianComponent& c, const Layout& u) {
  double acc = 0.0;
  for (std::size_t d = 0; d < kDims; ++d) {
    const double diff = u[d] - c.mean[d];
    acc += diff * diff / c.var[d] + std::log(2.0 * std::numbers::pi * c.var[d]);
  }
  return -0.5 * acc;
}

double sq_dist(const Layout& a, const Layout& b) {
  double s = 0.0;
  for (std::size_t d = 0; d < kDims; ++d) s += (a[d] - b[d]) * (a[d] - b[d]);
  return s;
}

struct KMeansResult {
  std::vector<Layout> centers;
  std::vector<std::size_t> assignment;
  double inertia = 0.0;
};

KMeansResult kmeans(std::span<const Layout> x, std::size_t k, std::mt19937_64& rng) {
  const std::size_t n = x.size();
  KMeansResult res;
  // k-means++ seeding.
  std::uniform_int_distribution<std::size_t> pick(0, n - 1);
  res.centers.push_back(x[pick(rng)]);
  std::vector<double> d2(n);
  while (res.centers.size() < k) {
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      double best = INFINITY;
      for (const auto& c : res.centers) best = std::min(best, sq_dist(x[i], c));
      d2[i] = best;
      total += best;
    }
    std::size_t chosen = 0;
    if (total > 0.0) {
      const double target = std::uniform_real_distribution<double>(0.0, total)(rng);
      double acc = 0.0;
      chosen = n - 1;
      for (std::size_t i = 0; i < n; ++i) {
        acc += d2[i];
        if (acc >= target && d2[i] > 0.0) {
          chosen = i;
          break;
        }
      }
    } else {
      chosen = pick(rng);
    }
    res.centers.push_back(x[chosen]);
  }

  res.assignment.assign(n, 0);
  for (int iter = 0; iter < 100; ++iter) {
    bool changed = iter == 0;
    for (std::size_t i = 0; i < n; ++i) {
      std::size_t best = 0;
      double best_d = INFINITY;
      for (std::size_t c = 0; c < k; ++c) {
        const double d = sq_dist(x[i], res.centers[c]);
        if (d < best_d) {
          best_d = d;
          best = c;
        }
      }
      if (res.assignment[i] != best) {
        res.assignment[i] = best;
        changed = true;
      }
    }
    std::vector<Layout> sums(k, Layout{});
    std::vector<std::size_t> counts(k, 0);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t d = 0; d < kDims; ++d) sums[res.assignment[i]][d] += x[i][d];
      ++counts[res.assignment[i]];
    }
    for (std::size_t c = 0; c < k; ++c) {
      if (counts[c] == 0) {
        // Re-seed an empty cluster at the worst-fit point.
        std::size_t far = 0;
        double far_d = -1.0;
        for (std::size_t i = 0; i < n; ++i) {
          const double d = sq_dist(x[i], res.centers[res.assignment[i]]);
          if (d > far_d) {
            far_d = d;
            far = i;
          }
        }
        res.centers[c] = x[far];
        res.assignment[far] = c;
        changed = true;
        continue;
      }
      for (std::size_t d = 0; d < kDims; ++d) res.centers[c][d] = sums[c][d] / static_cast<double>(counts[c]);
    }
    if (!changed) break;
  }
  res.inertia = 0.0;
  for (std::size_t i = 0; i < n; ++i) res.inertia += sq_dist(x[i], res.centers[res.assignment[i]]);
  return res;
}

}  // namespace

Layout layout_of(const BBox& root, const BBox& part) {
  return {(part.center_x() - root.center_x()) / root.width(), (part.center_y() - root.center_y()) / root.height(),
          std::log(part.width() / root.width()), std::log(part.height() / root.height())};
}

BBox box_from_layout(const BBox& root, const Layout& u) {
  const double w = root.width() * std::exp(u[2]);
  const double h = root.height() * std::exp(u[3]);
  const double cx = root.center_x() + u[0] * root.width();
  const double cy = root.center_y() + u[1] * root.height();
  return BBox(cx - 0.5 * w, cy - 0.5 * h, cx + 0.5 * w, cy + 0.5 * h);
}

double GaussianMixture::log_pdf(const Layout& u) const {
  if (components.empty()) throw InvalidArgument("log_pdf: empty mixture");
  std::vector<double> terms;
  terms.reserve(components.size());
  for (const auto& c : components) terms.push_back(std::log(c.weight) + component_log_pdf(c, u));
  return log_sum_exp(terms);
}

GaussianComponent fit_gaussian(std::span<const Layout> samples, double variance_floor) {
  if (samples.empty()) throw InvalidArgument("fit_gaussian: no samples");
  GaussianComponent g;
  const double n = static_cast<double>(samples.size());
  for (const auto& s : samples) {
    for (std::size_t d = 0; d < kDims; ++d) g.mean[d] += s[d];
  }
  for (double& m : g.mean) m /= n;
  g.var = Layout{};
  for (const auto& s : samples) {
    for (std::size_t d = 0; d < kDims; ++d) g.var[d] += (s[d] - g.mean[d]) * (s[d] - g.mean[d]);
  }
  for (double& v : g.var) v = std::max(v / n, variance_floor);
  return g;
}

GmmFit fit_gmm(std::span<const Layout> samples, const GmmOptions& options) {
  if (options.components < 1) throw InvalidArgument("fit_gmm: need at least one component");
  const auto k = static_cast<std::size_t>(options.components);
  const std::size_t n = samples.size();
  if (n < k) {
    throw InvalidArgument("fit_gmm: " + std::to_string(n) + " samples for " + std::to_string(k) + " components");
  }

  std::mt19937_64 rng(options.seed);
  KMeansResult best;
  best.inertia = INFINITY;
  for (int r = 0; r < std::max(1, options.kmeans_restarts); ++r) {
    KMeansResult res = kmeans(samples, k, rng);
    if (res.inertia < best.inertia) best = std::move(res);
  }

  GmmFit fit;
  auto& comps = fit.mixture.components;
  comps.resize(k);
  {
    std::vector<std::vector<Layout>> members(k);
    for (std::size_t i = 0; i < n; ++i) members[best.assignment[i]].push_back(samples[i]);
    for (std::size_t c = 0; c < k; ++c) {
      comps[c] = fit_gaussian(members[c], options.variance_floor);
      comps[c].weight = static_cast<double>(members[c].size()) / static_cast<double>(n);
    }
  }

  std::vector<double> resp(n * k);
  std::vector<double> row(k);
  auto e_step = [&] {
    double ll = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t c = 0; c < k; ++c) row[c] = std::log(comps[c].weight) + component_log_pdf(comps[c], samples[i]);
      const double lse = log_sum_exp(row);
      ll += lse;
      for (std::size_t c = 0; c < k; ++c) resp[i * k + c] = std::exp(row[c] - lse);
    }
    return ll;
  };
  auto m_step = [&] {
    for (std::size_t c = 0; c < k; ++c) {
      double nk = 0.0;
      Layout mean{};
      for (std::size_t i = 0; i < n; ++i) {
        const double r = resp[i * k + c];
        nk += r;
        for (std::size_t d = 0; d < kDims; ++d) mean[d] += r * samples[i][d];
      }
      if (nk <= 0.0) continue;  // vanished component keeps its parameters
      for (double& m : mean) m /= nk;
      Layout var{};
      for (std::size_t i = 0; i < n; ++i) {
        const double r = resp[i * k + c];
        for (std::size_t d = 0; d < kDims; ++d) var[d] += r * (samples[i][d] - mean[d]) * (samples[i][d] - mean[d]);
      }
      for (double& v : var) v = std::max(v / nk, options.variance_floor);
      comps[c].weight = nk / static_cast<double>(n);
      comps[c].mean = mean;
      comps[c].var = var;
    }
  };

  double ll = e_step();
  fit.log_likelihood.push_back(ll);
  for (int it = 0; it < options.max_iterations; ++it) {
    m_step();
    const double next = e_step();
    fit.log_likelihood.push_back(next);
    // EM never lowers the likelihood; anything beyond rounding is a bug.
    if (next < ll - 1e-9 * std::abs(ll)) throw Error("fit_gmm: log-likelihood decreased");
    const double gain = (next - ll) / static_cast<double>(n);
    ll = next;
    if (gain < options.tolerance) break;
  }
  return fit;
}

NpIndex::NpIndex(std::vector<Entry> entries, std::size_t num_parts) : num_parts_(num_parts) {
  for (auto& e : entries) {
    if (e.layouts.size() != num_parts) throw InvalidArgument("NpIndex: layout table has wrong part count");
    if (std::all_of(e.appearance.begin(), e.appearance.end(), [](float v) { return v == 0.0f; })) continue;
    if (!entries_.empty() && e.appearance.size() != entries_.front().appearance.size()) {
      throw InvalidArgument("NpIndex: appearance vectors differ in length");
    }
    entries_.push_back(std::move(e));
  }
  if (entries_.empty()) throw InvalidArgument("NpIndex: no usable entries");
  fallback_.resize(num_parts);
  for (std::size_t p = 1; p < num_parts; ++p) {
    std::vector<Layout> all;
    for (const auto& e : entries_) {
      if (e.layouts[p]) all.push_back(*e.layouts[p]);
    }
    if (all.empty()) throw InvalidArgument("NpIndex: part " + std::to_string(p) + " never annotated");
    fallback_[p] = fit_gaussian(all);
  }
}

std::vector<std::size_t> NpIndex::nearest(std::span<const float> query, std::size_t k) const {
  if (k < 1 || k > entries_.size()) {
    throw InvalidArgument("NpIndex: K=" + std::to_string(k) + " outside [1, " + std::to_string(entries_.size()) + "]");
  }
  std::vector<std::pair<double, std::size_t>> dist(entries_.size());
  for (std::size_t i = 0; i < entries_.size(); ++i) dist[i] = {cosine_distance(query, entries_[i].appearance), i};
  std::partial_sort(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(k), dist.end());
  std::vector<std::size_t> out(k);
  for (std::size_t i = 0; i < k; ++i) out[i] = dist[i].second;
  return out;
}

std::vector<GaussianComponent> fit_np_gaussian(const NpIndex& index, std::span<const float> query, std::size_t k) {
  if (index.size() == 0) throw InvalidArgument("fit_np_gaussian: empty index");
  std::vector<GaussianComponent> out = index.fallback();
  if (std::all_of(query.begin(), query.end(), [](float v) { return v == 0.0f; })) return out;
  const auto nn = index.nearest(query, k);
  for (std::size_t p = 1; p < index.num_parts(); ++p) {
    std::vector<Layout> layouts;
    for (auto i : nn) {
      if (const auto& l = index.entries()[i].layouts[p]) layouts.push_back(*l);
    }
    if (!layouts.empty()) out[p] = fit_gaussian(layouts);
  }
  return out;
}

void PriorConfig::validate() const {
  if (!(epsilon >= 0.0)) throw InvalidArgument("prior: epsilon must be >= 0");
  if (!(alpha >= 0.0)) throw InvalidArgument("prior: alpha must be >= 0");
  if (mixture_components < 1) throw InvalidArgument("prior: need at least one mixture component");
  if (neighbors < 1) throw InvalidArgument("prior: K must be >= 1");
}

void set_prior_variant(PriorConfig& config, const std::string& name) {
  if (name == "null") {
    config.variant = PriorVariant::kNull;
  } else if (name == "box") {
    config.variant = PriorVariant::kBox;
  } else if (name == "mg") {
    config.variant = PriorVariant::kGeometric;
    config.density = PartDensityKind::kMixture;
  } else if (name == "np") {
    config.variant = PriorVariant::kGeometric;
    config.density = PartDensityKind::kNeighbors;
  } else {
    throw InvalidArgument("unknown prior variant '" + name + "' (null|box|mg|np)");
  }
}

std::string prior_variant_name(const PriorConfig& config) {
  switch (config.variant) {
    case PriorVariant::kNull:
      return "null";
    case PriorVariant::kBox:
      return "box";
    case PriorVariant::kGeometric:
      return config.density == PartDensityKind::kMixture ? "mg" : "np";
  }
  return "null";
}

ConfigurationPrior::ConfigurationPrior(PriorConfig config, std::vector<GaussianMixture> densities)
    : config_(config), densities_(std::move(densities)) {
  config_.validate();
}

double ConfigurationPrior::part_log_density(int part, const Layout& u) const {
  if (part < 1 || static_cast<std::size_t>(part) >= densities_.size() ||
      densities_[static_cast<std::size_t>(part)].components.empty()) {
    throw InvalidArgument("prior: no fitted density for part " + std::to_string(part));
  }
  return densities_[static_cast<std::size_t>(part)].log_pdf(u);
}

double ConfigurationPrior::part_log_score(const BBox& root, int part, const BBox& part_box) const {
  if (config_.variant == PriorVariant::kNull) return 0.0;
  if (!contains_within_slack(root, part_box, config_.epsilon)) return kNegInf;
  if (config_.variant == PriorVariant::kBox) return 0.0;
  return config_.alpha * part_log_density(part, layout_of(root, part_box));
}

double ConfigurationPrior::delta_log_score(const BBox& root, std::span<const std::optional<BBox>> parts) const {
  if (config_.variant == PriorVariant::kNull) return 0.0;
  for (std::size_t p = 1; p < parts.size(); ++p) {
    if (parts[p] && !contains_within_slack(root, *parts[p], config_.epsilon)) return kNegInf;
  }
  if (config_.variant == PriorVariant::kBox) return 0.0;
  double log_delta = 0.0;
  for (std::size_t p = 1; p < parts.size(); ++p) {
    if (parts[p]) log_delta += part_log_density(static_cast<int>(p), layout_of(root, *parts[p]));
  }
  return config_.alpha * log_delta;
}

PriorModel::PriorModel(PriorConfig config, std::size_t num_parts) : config_(config), num_parts_(num_parts) {
  config_.validate();
}

PriorModel PriorModel::fit(const PriorConfig& config, const std::vector<ImageTruth>& truth,
                           const FeatureStore* appearance, std::size_t num_parts) {
  PriorModel model(config, num_parts);
  if (config.variant != PriorVariant::kGeometric) return model;

  if (config.density == PartDensityKind::kMixture) {
    std::vector<GaussianMixture> mixtures(num_parts);
    for (std::size_t p = 1; p < num_parts; ++p) {
      std::vector<Layout> samples;
      for (const ImageTruth& t : truth) {
        if (t.split == Split::kTrain && t.parts[p]) samples.push_back(layout_of(*t.parts[0], *t.parts[p]));
      }
      GmmOptions opts;
      opts.components = config.mixture_components;
      opts.seed = config.seed + p;
      mixtures[p] = fit_gmm(samples, opts).mixture;
    }
    model.mixtures_ = std::move(mixtures);
    return model;
  }

  if (appearance == nullptr) throw InvalidArgument("neighbour prior needs the appearance feature store");
  std::vector<NpIndex::Entry> entries;
  for (const ImageTruth& t : truth) {
    if (t.split != Split::kTrain) continue;
    NpIndex::Entry e;
    e.image_id = t.image_id;
    e.appearance = appearance->get({t.image_id, ground_truth_region(0)});
    e.layouts.resize(num_parts);
    for (std::size_t p = 1; p < num_parts; ++p) {
      if (t.parts[p]) e.layouts[p] = layout_of(*t.parts[0], *t.parts[p]);
    }
    entries.push_back(std::move(e));
  }
  model.index_ = NpIndex(std::move(entries), num_parts);
  return model;
}

ConfigurationPrior PriorModel::for_image(std::span<const float> root_appearance) const {
  if (config_.variant != PriorVariant::kGeometric) return ConfigurationPrior(config_, {});
  if (config_.density == PartDensityKind::kMixture) {
    if (mixtures_.size() != num_parts_) throw InvalidArgument("prior: mixtures not fitted");
    return ConfigurationPrior(config_, mixtures_);
  }
  if (index_.size() == 0) throw InvalidArgument("prior: neighbour index not fitted");
  const auto gaussians = fit_np_gaussian(index_, root_appearance, static_cast<std::size_t>(config_.neighbors));
  std::vector<GaussianMixture> densities(num_parts_);
  for (std::size_t p = 1; p < num_parts_; ++p) densities[p].components = {gaussians[p]};
  return ConfigurationPrior(config_, std::move(densities));
}

namespace {

nlohmann::ordered_json component_json(const GaussianComponent& c) {
  return {{"weight", c.weight}, {"mean", c.mean}, {"var", c.var}};
}

GaussianComponent component_from(const nlohmann::json& j) {
  GaussianComponent c;
  c.weight = j.at("weight").get<double>();
  c.mean = j.at("mean").get<Layout>();
  c.var = j.at("var").get<Layout>();
  return c;
}

}  // namespace

void PriorModel::save(const std::filesystem::path& path, const std::filesystem::path& appearance_store) const {
  nlohmann::ordered_json j;
  j["variant"] = prior_variant_name(config_);
  j["epsilon"] = config_.epsilon;
  j["alpha"] = config_.alpha;
  j["num_parts"] = num_parts_;
  j["mixture_components"] = config_.mixture_components;
  j["k"] = config_.neighbors;
  j["seed"] = config_.seed;
  if (!mixtures_.empty()) {
    auto arr = nlohmann::ordered_json::array();
    for (const auto& m : mixtures_) {
      if (m.components.empty()) {
        arr.push_back(nullptr);
        continue;
      }
      auto comps = nlohmann::ordered_json::array();
      for (const auto& c : m.components) comps.push_back(component_json(c));
      arr.push_back(std::move(comps));
    }
    j["mixtures"] = std::move(arr);
  }
  if (index_.size() > 0) {
    nlohmann::ordered_json np;
    np["appearance_store"] = appearance_store.string();
    np["region_id"] = ground_truth_region(0);
    auto rows = nlohmann::ordered_json::array();
    for (const auto& e : index_.entries()) {
      auto layouts = nlohmann::ordered_json::array();
      for (const auto& l : e.layouts) layouts.push_back(l ? nlohmann::ordered_json(*l) : nlohmann::ordered_json());
      rows.push_back({{"image_id", e.image_id}, {"layouts", std::move(layouts)}});
    }
    np["entries"] = std::move(rows);
    j["np"] = std::move(np);
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ParseError(path.string(), 0, "cannot open for writing");
  out << j.dump(1) << '\n';
}

PriorModel PriorModel::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError(path.string(), 0, "cannot open prior file");
  try {
    const auto j = nlohmann::json::parse(in);
    PriorConfig cfg;
    set_prior_variant(cfg, j.at("variant").get<std::string>());
    cfg.epsilon = j.at("epsilon").get<double>();
    cfg.alpha = j.at("alpha").get<double>();
    cfg.mixture_components = j.value("mixture_components", 4);
    cfg.neighbors = j.value("k", 20);
    cfg.seed = j.value("seed", std::uint64_t{0});
    PriorModel model(cfg, j.at("num_parts").get<std::size_t>());
    if (j.contains("mixtures")) {
      std::vector<GaussianMixture> mixtures;
      for (const auto& m : j.at("mixtures")) {
        GaussianMixture gm;
        if (!m.is_null()) {
          for (const auto& c : m) gm.components.push_back(component_from(c));
        }
        mixtures.push_back(std::move(gm));
      }
      model.mixtures_ = std::move(mixtures);
    }
    if (j.contains("np")) {
      const auto& np = j.at("np");
      std::filesystem::path store_path = np.at("appearance_store").get<std::string>();
      if (store_path.is_relative()) store_path = path.parent_path() / store_path;
      const FeatureStore store = FeatureStore::load(store_path);
      const auto region = np.at("region_id").get<std::uint32_t>();
      std::vector<NpIndex::Entry> entries;
      for (const auto& row : np.at("entries")) {
        NpIndex::Entry e;
        e.image_id = row.at("image_id").get<std::uint64_t>();
        e.appearance = store.get({e.image_id, region});
        for (const auto& l : row.at("layouts")) {
          e.layouts.push_back(l.is_null() ? std::nullopt : std::optional<Layout>(l.get<Layout>()));
        }
        entries.push_back(std::move(e));
      }
      model.index_ = NpIndex(std::move(entries), model.num_parts_);
    }
    return model;
  } catch (const ParseError&) {
    throw;
  } catch (const std::exception& e) {
    throw ParseError(path.string(), 0, e.what());
  }
}

}  // namespace partloc
