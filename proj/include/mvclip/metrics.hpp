#pragma once

// Accuracy, ROC / precision-recall curves and areas, percentile bootstrap.

#include <algorithm>
#include <cstdint>
#include <functional>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "mvclip/errors.hpp"
#include "mvclip/util.hpp"

namespace mvclip {

struct CurvePoint {
  double threshold = 0.0;
  double x = 0.0;
  double y = 0.0;
};

// ROC: x = false positive rate, y = true positive rate.
// PR: x = recall, y = precision.
struct Curve {
  std::vector<CurvePoint> points;
  double area = 0.0;
};

namespace detail {

inline void check_scores(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) {
    throw ValidationError("metric: " + std::to_string(scores.size()) + " scores vs " + std::to_string(labels.size()) +
                          " labels");
  }
  for (int l : labels) {
    if (l != 0 && l != 1) throw ValidationError("metric: labels must be 0 or 1");
  }
}

// Indices by descending score; equal scores are swept as one group.
inline std::vector<std::size_t> descending(std::span<const double> scores) {
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  return order;
}

}  // namespace detail

inline double accuracy(std::span<const int> predicted, std::span<const int> labels) {
  if (predicted.size() != labels.size() || labels.empty()) throw ValidationError("accuracy: size mismatch or empty");
  std::size_t hit = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) hit += predicted[i] == labels[i];
  return static_cast<double>(hit) / static_cast<double>(labels.size());
}

// Sweep from the highest threshold down. The trapezoid area is accumulated in
// integer units (neg * pos counts, doubled) so it equals the Mann-Whitney
// statistic with half credit for ties exactly.
inline Curve roc_curve(std::span<const double> scores, std::span<const int> labels) {
  detail::check_scores(scores, labels);
  const auto pos = static_cast<std::uint64_t>(std::count(labels.begin(), labels.end(), 1));
  const auto neg = static_cast<std::uint64_t>(labels.size()) - pos;
  if (pos == 0 || neg == 0) throw ValidationError("roc_auc: both classes must be present");

  const auto order = detail::descending(scores);
  Curve c;
  c.points.push_back({std::numeric_limits<double>::infinity(), 0.0, 0.0});
  std::uint64_t tp = 0, fp = 0, twice_area = 0;
  for (std::size_t i = 0; i < order.size();) {
    const double s = scores[order[i]];
    std::uint64_t dtp = 0, dfp = 0;
    for (; i < order.size() && scores[order[i]] == s; ++i) (labels[order[i]] == 1 ? dtp : dfp)++;
    twice_area += dfp * (2 * tp + dtp);
    tp += dtp;
    fp += dfp;
    c.points.push_back({s, static_cast<double>(fp) / static_cast<double>(neg),
                        static_cast<double>(tp) / static_cast<double>(pos)});
  }
  c.area = static_cast<double>(twice_area) / (2.0 * static_cast<double>(pos) * static_cast<double>(neg));
  return c;
}

inline double roc_auc(std::span<const double> scores, std::span<const int> labels) {
  return roc_curve(scores, labels).area;
}

// Step-wise area: sum over thresholds of (R_i - R_{i-1}) * P_i.
inline Curve pr_curve(std::span<const double> scores, std::span<const int> labels) {
  detail::check_scores(scores, labels);
  const auto pos = static_cast<std::size_t>(std::count(labels.begin(), labels.end(), 1));
  if (pos == 0) throw ValidationError("pr_auc: no positive labels");

  const auto order = detail::descending(scores);
  Curve c;
  std::size_t tp = 0, seen = 0;
  double prev_recall = 0.0;
  for (std::size_t i = 0; i < order.size();) {
    const double s = scores[order[i]];
    for (; i < order.size() && scores[order[i]] == s; ++i, ++seen) tp += labels[order[i]] == 1;
    const double recall = static_cast<double>(tp) / static_cast<double>(pos);
    const double precision = static_cast<double>(tp) / static_cast<double>(seen);
    c.area += (recall - prev_recall) * precision;
    prev_recall = recall;
    c.points.push_back({s, recall, precision});
  }
  return c;
}

inline double pr_auc(std::span<const double> scores, std::span<const int> labels) {
  return pr_curve(scores, labels).area;
}

using MetricFn = std::function<double(std::span<const double>, std::span<const int>)>;

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
};

// Percentile interval over case-level resamples with replacement. A resample
// containing a single class is discarded and redrawn.
inline Interval bootstrap_ci(const MetricFn& metric, std::span<const double> scores, std::span<const int> labels,
                             std::size_t n_boot = 2000, double alpha = 0.05, std::uint64_t seed = 0) {
  detail::check_scores(scores, labels);
  const std::size_t n = scores.size();
  const auto pos = static_cast<std::size_t>(std::count(labels.begin(), labels.end(), 1));
  if (n == 0 || pos == 0 || pos == n) throw ValidationError("bootstrap_ci: both classes must be present");
  if (n_boot == 0 || !(alpha > 0.0 && alpha < 1.0)) throw ValidationError("bootstrap_ci: bad n_boot or alpha");

  Rng rng(derive_seed(seed, "bootstrap"));
  std::uniform_int_distribution<std::size_t> pick(0, n - 1);
  std::vector<double> values;
  values.reserve(n_boot);
  std::vector<double> s(n);
  std::vector<int> l(n);
  while (values.size() < n_boot) {
    std::size_t p = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t j = pick(rng);
      s[i] = scores[j];
      l[i] = labels[j];
      p += static_cast<std::size_t>(l[i]);
    }
    if (p == 0 || p == n) continue;
    values.push_back(metric(s, l));
  }
  std::sort(values.begin(), values.end());
  // Linear interpolation between order statistics.
  auto quantile = [&](double q) {
    const double pos_q = q * static_cast<double>(values.size() - 1);
    const auto lo = static_cast<std::size_t>(pos_q);
    const auto hi = std::min(lo + 1, values.size() - 1);
    return values[lo] + (pos_q - static_cast<double>(lo)) * (values[hi] - values[lo]);
  };
  return {quantile(alpha / 2.0), quantile(1.0 - alpha / 2.0)};
}

}  // namespace mvclip
