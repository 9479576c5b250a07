#include "partloc/svm.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "partloc/error.hpp"

namespace partloc {
namespace {

double row_dot(std::span<const float> x, std::span<const double> w) noexcept {
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) s += x[i] * w[i];
  return s;
}

double hinge_sum(std::span<const double> pos_margins, std::span<const double> neg_margins, double b) {
  double s = 0.0;
  for (double m : pos_margins) s += std::max(0.0, 1.0 - (m + b));
  for (double m : neg_margins) s += std::max(0.0, 1.0 + (m + b));
  return s;
}

}  // namespace

double svm_objective(std::span<const double> w, double b, const SvmRows& positives, const SvmRows& negatives,
                     double C) {
  double reg = 0.0;
  for (double v : w) reg += v * v;
  double loss = 0.0;
  for (const auto& x : positives) loss += std::max(0.0, 1.0 - (row_dot(x, w) + b));
  for (const auto& x : negatives) loss += std::max(0.0, 1.0 + (row_dot(x, w) + b));
  return 0.5 * reg + C * loss;
}

double optimal_bias(std::span<const double> pos_margins, std::span<const double> neg_margins) {
  // Positive i is active while b < 1 - m_i, negative j while b > -1 - m_j;
  // the loss is convex piecewise linear, so a breakpoint attains the minimum.
  std::vector<double> candidates;
  candidates.reserve(pos_margins.size() + neg_margins.size());
  for (double m : pos_margins) candidates.push_back(1.0 - m);
  for (double m : neg_margins) candidates.push_back(-1.0 - m);
  if (candidates.empty()) return 0.0;
  std::sort(candidates.begin(), candidates.end());

  std::vector<double> pos_knots, neg_knots;
  for (double m : pos_margins) pos_knots.push_back(1.0 - m);
  for (double m : neg_margins) neg_knots.push_back(-1.0 - m);
  std::sort(pos_knots.begin(), pos_knots.end());
  std::sort(neg_knots.begin(), neg_knots.end());
  std::vector<double> pos_prefix(pos_knots.size() + 1, 0.0), neg_prefix(neg_knots.size() + 1, 0.0);
  for (std::size_t i = 0; i < pos_knots.size(); ++i) pos_prefix[i + 1] = pos_prefix[i] + pos_knots[i];
  for (std::size_t i = 0; i < neg_knots.size(); ++i) neg_prefix[i + 1] = neg_prefix[i] + neg_knots[i];

  auto loss_at = [&](double b) {
    // Positives with knot > b contribute knot - b.
    const auto pi = static_cast<std::size_t>(std::upper_bound(pos_knots.begin(), pos_knots.end(), b) - pos_knots.begin());
    const double pos = (pos_prefix.back() - pos_prefix[pi]) - b * static_cast<double>(pos_knots.size() - pi);
    // Negatives with knot < b contribute b - knot.
    const auto ni = static_cast<std::size_t>(std::lower_bound(neg_knots.begin(), neg_knots.end(), b) - neg_knots.begin());
    const double neg = b * static_cast<double>(ni) - neg_prefix[ni];
    return pos + neg;
  };

  std::vector<double> losses(candidates.size());
  double best = INFINITY;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    losses[i] = loss_at(candidates[i]);
    best = std::min(best, losses[i]);
  }
  const double tol = 1e-12 * (1.0 + std::abs(best));
  double lo = INFINITY, hi = -INFINITY;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    if (losses[i] <= best + tol) {
      lo = std::min(lo, candidates[i]);
      hi = std::max(hi, candidates[i]);
    }
  }
  return 0.5 * (lo + hi);
}

SvmModel train_linear_svm(const SvmRows& positives, const SvmRows& negatives, const SvmOptions& options) {
  if (positives.empty() || negatives.empty()) {
    throw InvalidArgument("train_linear_svm: need at least one positive and one negative");
  }
  if (!(options.C > 0.0) || options.epochs < 1) throw InvalidArgument("train_linear_svm: bad options");
  const std::size_t dim = positives.front().size();
  for (const auto* rows : {&positives, &negatives}) {
    for (const auto& x : *rows) {
      if (x.size() != dim) throw InvalidArgument("train_linear_svm: rows differ in length");
    }
  }

  struct Sample {
    std::span<const float> x;
    double y;
  };
  std::vector<Sample> samples;
  samples.reserve(positives.size() + negatives.size());
  for (const auto& x : positives) samples.push_back({x, 1.0});
  for (const auto& x : negatives) samples.push_back({x, -1.0});
  const std::size_t n = samples.size();

  // 1/2|w|^2 + C sum h  ==  C n (lambda/2 |w|^2 + mean h)  with lambda = 1/(C n).
  const double lambda = 1.0 / (options.C * static_cast<double>(n));
  const double radius = 1.0 / std::sqrt(lambda);

  std::vector<double> pos_m(positives.size()), neg_m(negatives.size());
  auto evaluate = [&](const std::vector<double>& w, double& b) {
    for (std::size_t i = 0; i < positives.size(); ++i) pos_m[i] = row_dot(positives[i], w);
    for (std::size_t i = 0; i < negatives.size(); ++i) neg_m[i] = row_dot(negatives[i], w);
    b = optimal_bias(pos_m, neg_m);
    double reg = 0.0;
    for (double v : w) reg += v * v;
    return 0.5 * reg + options.C * hinge_sum(pos_m, neg_m, b);
  };

  SvmModel model;
  model.w.assign(dim, 0.0);
  model.objective = evaluate(model.w, model.b);

  std::mt19937_64 rng(options.seed);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);

  // One continuous Pegasos trajectory over (w, b). At each epoch end the last
  // iterate and the epoch average are scored with the exact bias and the best
  // model seen so far is kept, so the reported objective never increases.
  std::vector<double> w = model.w, w_avg(dim);
  double b = model.b;
  std::uint64_t t = 0;
  for (int epoch = 0; epoch < options.epochs; ++epoch) {
    std::fill(w_avg.begin(), w_avg.end(), 0.0);
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t k = 0; k < n; ++k) {
      const Sample& s = samples[order[k]];
      ++t;
      const double eta = 1.0 / (lambda * static_cast<double>(t));
      const double margin = s.y * (row_dot(s.x, w) + b);
      const double shrink = 1.0 - std::min(1.0, eta * lambda);
      for (double& v : w) v *= shrink;
      if (margin < 1.0) {
        for (std::size_t i = 0; i < dim; ++i) w[i] += eta * s.y * s.x[i];
        // The bias is unregularised; it moves on the 1/t schedule.
        b += eta * lambda * s.y;
      }
      double norm = 0.0;
      for (double v : w) norm += v * v;
      norm = std::sqrt(norm);
      if (norm > radius) {
        for (double& v : w) v *= radius / norm;
      }
      for (std::size_t i = 0; i < dim; ++i) w_avg[i] += w[i];
    }
    for (double& v : w_avg) v /= static_cast<double>(n);

    double b_last = 0.0, b_avg = 0.0;
    const double f_last = evaluate(w, b_last);
    const double f_avg = evaluate(w_avg, b_avg);
    b = b_last;
    if (f_avg < model.objective && f_avg <= f_last) {
      model.w = w_avg;
      model.b = b_avg;
      model.objective = f_avg;
    } else if (f_last < model.objective) {
      model.w = w;
      model.b = b_last;
      model.objective = f_last;
    }
    model.objective_history.push_back(model.objective);
  }
  return model;
}

}  // namespace partloc
