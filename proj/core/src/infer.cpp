#include "partloc/infer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>

#include <nlohmann/json.hpp>

#include "partloc/error.hpp"

namespace partloc {
namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

// Region indices by ascending region id.
std::vector<std::size_t> id_order(const InferenceProblem& problem) {
  std::vector<std::size_t> order(problem.regions.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return problem.regions[a].region_id < problem.regions[b].region_id;
  });
  return order;
}

void check_problem(const InferenceProblem& problem) {
  if (problem.regions.empty()) throw InvalidArgument("inference: no proposals");
  if (problem.scores.empty() || problem.log_scores.size() != problem.scores.size() ||
      problem.thresholds.size() != problem.scores.size()) {
    throw InvalidArgument("inference: inconsistent problem");
  }
  for (std::size_t p = 0; p < problem.scores.size(); ++p) {
    if (problem.scores[p].size() != problem.regions.size() || problem.log_scores[p].size() != problem.regions.size()) {
      throw InvalidArgument("inference: score table size mismatch");
    }
  }
}

std::vector<std::size_t> root_candidates(const InferenceProblem& problem, const InferOptions& options) {
  std::vector<std::size_t> order = problem.root_order();
  if (options.root_candidates) {
    std::vector<bool> allowed(problem.regions.size(), false);
    for (auto i : *options.root_candidates) {
      if (i >= problem.regions.size()) throw InvalidArgument("inference: root candidate out of range");
      allowed[i] = true;
    }
    std::erase_if(order, [&](std::size_t i) { return !allowed[i]; });
  }
  if (options.top_m_roots > 0 && order.size() > options.top_m_roots) order.resize(options.top_m_roots);
  if (order.empty()) throw InvalidArgument("inference: no root candidates");
  return order;
}

PartChoice choice_of(const InferenceProblem& problem, std::size_t part, std::size_t region) {
  return {problem.regions[region].region_id, problem.regions[region].box, problem.scores[part][region]};
}

}  // namespace

std::size_t InferenceProblem::add_region(const Region& region, std::span<const double> margins) {
  if (margins.size() != scores.size()) throw InvalidArgument("add_region: one margin per part required");
  regions.push_back(region);
  for (std::size_t p = 0; p < margins.size(); ++p) {
    scores[p].push_back(sigmoid(margins[p]));
    log_scores[p].push_back(log_sigmoid(margins[p]));
  }
  return regions.size() - 1;
}

std::vector<std::size_t> InferenceProblem::root_order() const {
  std::vector<std::size_t> order(regions.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (scores[0][a] != scores[0][b]) return scores[0][a] > scores[0][b];
    return regions[a].region_id < regions[b].region_id;
  });
  return order;
}

InferenceProblem build_problem(const ProposalSet& proposals, const std::vector<Detector>& detectors,
                               const FeatureStore& features) {
  if (detectors.empty()) throw InvalidArgument("build_problem: no detectors");
  InferenceProblem problem;
  problem.image_id = proposals.image_id;
  problem.scores.resize(detectors.size());
  problem.log_scores.resize(detectors.size());
  for (const Detector& d : detectors) problem.thresholds.push_back(d.tau);
  std::vector<double> margins(detectors.size());
  for (const Region& r : proposals.regions) {
    const FeatureVector& phi = features.get({proposals.image_id, r.region_id});
    for (std::size_t p = 0; p < detectors.size(); ++p) margins[p] = detectors[p].margin(phi);
    problem.add_region(r, margins);
  }
  return problem;
}

double absent_part_floor(double tau) noexcept { return std::log(tau) - 1.0; }

Configuration infer_configuration(const InferenceProblem& problem, const ConfigurationPrior& prior,
                                  const InferOptions& options) {
  check_problem(problem);
  const std::size_t num_parts = problem.num_parts();
  const auto roots = root_candidates(problem, options);
  const auto by_id = id_order(problem);

  Configuration best;
  best.image_id = problem.image_id;
  best.log_score = kNegInf;
  std::vector<std::optional<std::size_t>> picks(num_parts);
  bool found = false;

  for (std::size_t r : roots) {
    const BBox& root_box = problem.regions[r].box;
    double total = problem.log_scores[0][r];
    for (std::size_t p = 1; p < num_parts; ++p) {
      double best_term = kNegInf;
      std::optional<std::size_t> arg;
      for (std::size_t q : by_id) {
        if (problem.scores[p][q] < problem.thresholds[p]) continue;
        const double prior_term = prior.part_log_score(root_box, static_cast<int>(p), problem.regions[q].box);
        if (prior_term == kNegInf) continue;
        const double term = problem.log_scores[p][q] + prior_term;
        if (term > best_term) {
          best_term = term;
          arg = q;
        }
      }
      // Absence competes with the best window; it only wins when the prior
      // pushes every admissible window below the floor.
      const double floor = absent_part_floor(problem.thresholds[p]);
      if (arg && floor > best_term) arg.reset();
      picks[p] = arg;
      total += arg ? best_term : floor;
    }
    if (!found || total > best.log_score) {
      found = true;
      best.log_score = total;
      best.parts.assign(num_parts, std::nullopt);
      best.parts[0] = choice_of(problem, 0, r);
      for (std::size_t p = 1; p < num_parts; ++p) {
        if (picks[p]) best.parts[p] = choice_of(problem, p, *picks[p]);
      }
    }
  }
  return best;
}

Configuration brute_force_oracle(const InferenceProblem& problem, const ConfigurationPrior& prior,
                                 const InferOptions& options) {
  check_problem(problem);
  if (problem.regions.size() > kOracleMaxRegions) {
    throw InvalidArgument("brute_force_oracle: more than " + std::to_string(kOracleMaxRegions) + " proposals");
  }
  const std::size_t num_parts = problem.num_parts();
  const std::size_t n = problem.regions.size();
  const auto roots = root_candidates(problem, options);
  const auto by_id = id_order(problem);
  const std::size_t absent = n;  // option index meaning "part absent"

  Configuration best;
  best.image_id = problem.image_id;
  best.log_score = kNegInf;
  bool found = false;

  std::vector<std::size_t> digit(num_parts, 0);  // per part: position in by_id, or n for absent
  std::vector<std::optional<BBox>> boxes(num_parts);
  for (std::size_t r : roots) {
    const BBox& root_box = problem.regions[r].box;

    std::fill(digit.begin(), digit.end(), 0);
    while (true) {
      bool valid = true;
      double total = problem.log_scores[0][r];
      boxes[0] = std::nullopt;
      for (std::size_t p = 1; p < num_parts && valid; ++p) {
        if (digit[p] == absent) {
          boxes[p] = std::nullopt;
          total += absent_part_floor(problem.thresholds[p]);
        } else {
          const std::size_t q = by_id[digit[p]];
          valid = problem.scores[p][q] >= problem.thresholds[p];
          boxes[p] = problem.regions[q].box;
          total += problem.log_scores[p][q];
        }
      }
      if (valid) {
        total += prior.delta_log_score(root_box, boxes);
        if (total != kNegInf && (!found || total > best.log_score)) {
          found = true;
          best.log_score = total;
          best.parts.assign(num_parts, std::nullopt);
          best.parts[0] = choice_of(problem, 0, r);
          for (std::size_t p = 1; p < num_parts; ++p) {
            if (digit[p] != absent) best.parts[p] = choice_of(problem, p, by_id[digit[p]]);
          }
        }
      }
      // Odometer over parts, last part fastest; absent is the last option.
      bool done = true;
      for (std::size_t p = num_parts; p-- > 1;) {
        if (++digit[p] <= absent) {
          done = false;
          break;
        }
        digit[p] = 0;
      }
      if (done) break;
    }
  }
  if (!found) throw InvalidArgument("brute_force_oracle: no feasible configuration");
  return best;
}

std::size_t top_root(const InferenceProblem& problem) {
  check_problem(problem);
  return problem.root_order().front();
}

Configuration infer_image(const ProposalSet& proposals, const std::vector<Detector>& detectors,
                          const PriorModel& prior, const FeatureStore& detector_features,
                          const FeatureStore* appearance_features, const InferOptions& options) {
  const InferenceProblem problem = build_problem(proposals, detectors, detector_features);
  FeatureVector query;
  if (prior.needs_appearance()) {
    if (appearance_features == nullptr) throw InvalidArgument("infer: neighbour prior needs appearance features");
    query = appearance_features->get({problem.image_id, problem.regions[top_root(problem)].region_id});
  }
  return infer_configuration(problem, prior.for_image(query), options);
}

void write_configurations(const std::filesystem::path& path, const std::vector<Configuration>& configs,
                          const std::vector<std::string>& part_names) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ParseError(path.string(), 0, "cannot open for writing");
  auto choice_json = [](const PartChoice& c) {
    return nlohmann::ordered_json{{"region_id", c.region_id},
                                  {"box", {c.box.x_min(), c.box.y_min(), c.box.x_max(), c.box.y_max()}},
                                  {"score", c.score}};
  };
  for (const Configuration& c : configs) {
    if (c.parts.size() != part_names.size()) throw InvalidArgument("write_configurations: part count mismatch");
    nlohmann::ordered_json j;
    j["image_id"] = c.image_id;
    j["root"] = choice_json(c.root());
    nlohmann::ordered_json parts = nlohmann::ordered_json::object();
    for (std::size_t p = 1; p < c.parts.size(); ++p) {
      parts[part_names[p]] = c.parts[p] ? choice_json(*c.parts[p]) : nlohmann::ordered_json();
    }
    j["parts"] = std::move(parts);
    j["log_score"] = c.log_score;
    out << j.dump() << '\n';
  }
}

std::vector<Configuration> read_configurations(const std::filesystem::path& path,
                                               const std::vector<std::string>& part_names) {
  std::ifstream in(path);
  if (!in) throw ParseError(path.string(), 0, "cannot open configurations file");
  auto choice_from = [](const nlohmann::json& j) {
    const auto& b = j.at("box");
    return PartChoice{j.at("region_id").get<std::uint32_t>(),
                      BBox(b.at(0).get<double>(), b.at(1).get<double>(), b.at(2).get<double>(), b.at(3).get<double>()),
                      j.at("score").get<double>()};
  };
  std::vector<Configuration> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      Configuration c;
      c.image_id = j.at("image_id").get<std::uint64_t>();
      c.parts.assign(part_names.size(), std::nullopt);
      c.parts[0] = choice_from(j.at("root"));
      const auto& parts = j.at("parts");
      for (std::size_t p = 1; p < part_names.size(); ++p) {
        const auto& e = parts.at(part_names[p]);
        if (!e.is_null()) c.parts[p] = choice_from(e);
      }
      c.log_score = j.at("log_score").get<double>();
      out.push_back(std::move(c));
    } catch (const std::exception& e) {
      throw ParseError(path.string(), line_no, e.what());
    }
  }
  return out;
}

}  // namespace partloc
