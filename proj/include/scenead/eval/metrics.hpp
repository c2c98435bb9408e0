#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

namespace scenead::eval {

class MetricError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct Confusion {
  std::uint64_t tp = 0, fp = 0, fn = 0, tn = 0;
  std::uint64_t total() const { return tp + fp + fn + tn; }
};

struct F1Result {
  double f1 = 0, precision = 0, recall = 0;
  Confusion counts;
};

namespace detail {

inline void check_inputs(std::span<const float> scores, std::span<const std::uint8_t> truth) {
  if (scores.size() != truth.size())
    throw MetricError("length mismatch: " + std::to_string(scores.size()) + " scores vs " +
                      std::to_string(truth.size()) + " labels");
  for (auto t : truth)
    if (t > 1) throw MetricError("ground truth must be binary (0/1)");
}

inline void check_both_classes(std::span<const std::uint8_t> truth) {
  const auto pos = std::count(truth.begin(), truth.end(), std::uint8_t{1});
  if (pos == 0 || pos == static_cast<std::ptrdiff_t>(truth.size()))
    throw MetricError("degenerate ground truth: " + std::to_string(pos) + " of " +
                      std::to_string(truth.size()) + " pixels are anomalous; both classes needed");
}

}  // namespace detail

inline F1Result f1_from_counts(const Confusion& c) {
  F1Result r;
  r.counts = c;
  r.precision = (c.tp + c.fp) ? static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fp) : 0.0;
  r.recall = (c.tp + c.fn) ? static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn) : 0.0;
  r.f1 = (r.precision + r.recall) > 0
             ? 2.0 * r.precision * r.recall / (r.precision + r.recall)
             : 0.0;
  return r;
}

// A pixel is predicted anomalous iff score >= threshold.
inline F1Result pixel_f1(std::span<const float> scores, std::span<const std::uint8_t> truth,
                         double threshold) {
  detail::check_inputs(scores, truth);
  Confusion c;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const bool pred = static_cast<double>(scores[i]) >= threshold;
    if (truth[i]) {
      pred ? ++c.tp : ++c.fn;
    } else {
      pred ? ++c.fp : ++c.tn;
    }
  }
  return f1_from_counts(c);
}

struct SweepResult {
  double f1_max = 0;
  double threshold = 0;  // +inf when predicting nothing is optimal
  F1Result at_threshold;
};

// Exact maximum of F1 over every distinct score (plus +inf) as threshold;
// ties go to the lowest threshold.
inline SweepResult optimal_f1_sweep(std::span<const float> scores,
                                    std::span<const std::uint8_t> truth) {
  detail::check_inputs(scores, truth);
  detail::check_both_classes(truth);
  std::vector<std::uint32_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0u);
  std::sort(order.begin(), order.end(),
            [&](std::uint32_t a, std::uint32_t b) { return scores[a] > scores[b]; });
  const std::uint64_t pos =
      static_cast<std::uint64_t>(std::count(truth.begin(), truth.end(), std::uint8_t{1}));
  const std::uint64_t neg = truth.size() - pos;

  SweepResult best;
  best.threshold = std::numeric_limits<double>::infinity();
  best.at_threshold = f1_from_counts({0, 0, pos, neg});
  best.f1_max = best.at_threshold.f1;

  Confusion c{0, 0, pos, neg};
  std::size_t i = 0;
  while (i < order.size()) {
    const float s = scores[order[i]];
    // take every pixel with this exact score
    while (i < order.size() && scores[order[i]] == s) {
      if (truth[order[i]]) {
        ++c.tp;
        --c.fn;
      } else {
        ++c.fp;
        --c.tn;
      }
      ++i;
    }
    auto r = f1_from_counts(c);
    // Thresholds are visited in decreasing order, so >= keeps the lowest one.
    if (r.f1 >= best.f1_max) {
      best.f1_max = r.f1;
      best.threshold = s;
      best.at_threshold = r;
    }
  }
  return best;
}

// Mann-Whitney statistic: P(score_pos > score_neg) + 0.5 P(equal).
inline double pixel_auroc(std::span<const float> scores, std::span<const std::uint8_t> truth) {
  detail::check_inputs(scores, truth);
  detail::check_both_classes(truth);
  std::vector<std::uint32_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0u);
  std::sort(order.begin(), order.end(),
            [&](std::uint32_t a, std::uint32_t b) { return scores[a] < scores[b]; });
  // sum of midranks of positives
  long double rank_sum = 0;
  std::uint64_t pos = 0;
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) ++j;
    const long double midrank = (static_cast<long double>(i + 1) + static_cast<long double>(j)) / 2;
    for (std::size_t t = i; t < j; ++t)
      if (truth[order[t]]) {
        rank_sum += midrank;
        ++pos;
      }
    i = j;
  }
  const long double neg = static_cast<long double>(scores.size() - pos);
  const long double u = rank_sum - static_cast<long double>(pos) * (pos + 1) / 2.0L;
  return static_cast<double>(u / (static_cast<long double>(pos) * neg));
}

// Everything reported for one (method, augmentation) cell.
struct EvalReport {
  double pixel_f1 = 0;
  double pixel_auroc = 0;
  double optimal_threshold = 0;
  double precision = 0, recall = 0;
  Confusion counts;
  double anomalous_fraction = 0;
  std::vector<double> per_image_f1;  // at the pooled optimal threshold
  double mean_per_image_f1 = 0;
};

// Pools every pixel of every image (micro averaging); per-image F1 values are
// taken at the pooled optimum.
inline EvalReport evaluate(const std::vector<std::vector<float>>& scores,
                           const std::vector<std::vector<std::uint8_t>>& masks) {
  if (scores.size() != masks.size() || scores.empty())
    throw MetricError("evaluate: need one mask per score map and at least one image");
  std::vector<float> all_s;
  std::vector<std::uint8_t> all_t;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    detail::check_inputs(scores[i], masks[i]);
    all_s.insert(all_s.end(), scores[i].begin(), scores[i].end());
    all_t.insert(all_t.end(), masks[i].begin(), masks[i].end());
  }
  EvalReport r;
  auto sweep = optimal_f1_sweep(all_s, all_t);
  r.pixel_f1 = sweep.f1_max;
  r.optimal_threshold = sweep.threshold;
  r.precision = sweep.at_threshold.precision;
  r.recall = sweep.at_threshold.recall;
  r.counts = sweep.at_threshold.counts;
  r.pixel_auroc = pixel_auroc(all_s, all_t);
  r.anomalous_fraction = static_cast<double>(std::count(all_t.begin(), all_t.end(), 1)) /
                         static_cast<double>(all_t.size());
  double acc = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    r.per_image_f1.push_back(pixel_f1(scores[i], masks[i], sweep.threshold).f1);
    acc += r.per_image_f1.back();
  }
  r.mean_per_image_f1 = acc / static_cast<double>(scores.size());
  return r;
}

// What an all-negative predictor scores on the same pixels.
struct ImbalanceDiagnostic {
  double anomalous_fraction = 0;
  double all_negative_accuracy = 0;
  double all_negative_f1 = 0;
  double pixel_f1 = 0;
  double pixel_auroc = 0;
  bool optimistic_auroc = false;  // AUROC close to 1 while F1 stays low
};

inline ImbalanceDiagnostic imbalance_demo(const EvalReport& r, double auroc_high = 0.9,
                                          double f1_low = 0.5) {
  ImbalanceDiagnostic d;
  d.anomalous_fraction = r.anomalous_fraction;
  d.all_negative_accuracy = 1.0 - r.anomalous_fraction;
  d.all_negative_f1 = 0.0;
  d.pixel_f1 = r.pixel_f1;
  d.pixel_auroc = r.pixel_auroc;
  d.optimistic_auroc = r.pixel_auroc >= auroc_high && r.pixel_f1 < f1_low;
  return d;
}

inline nlohmann::json to_json(const EvalReport& r) {
  const bool inf = std::isinf(r.optimal_threshold);
  return {{"pixel_f1", r.pixel_f1},
          {"pixel_auroc", r.pixel_auroc},
          {"optimal_threshold", inf ? nlohmann::json("inf") : nlohmann::json(r.optimal_threshold)},
          {"precision", r.precision},
          {"recall", r.recall},
          {"confusion", {{"tp", r.counts.tp}, {"fp", r.counts.fp}, {"fn", r.counts.fn}, {"tn", r.counts.tn}}},
          {"anomalous_fraction", r.anomalous_fraction},
          {"per_image_f1", r.per_image_f1},
          {"mean_per_image_f1", r.mean_per_image_f1}};
}

inline EvalReport eval_report_from_json(const nlohmann::json& j) {
  EvalReport r;
  r.pixel_f1 = j.at("pixel_f1");
  r.pixel_auroc = j.at("pixel_auroc");
  const auto& t = j.at("optimal_threshold");
  r.optimal_threshold = t.is_string() ? std::numeric_limits<double>::infinity() : t.get<double>();
  r.precision = j.at("precision");
  r.recall = j.at("recall");
  const auto& c = j.at("confusion");
  r.counts = {c.at("tp"), c.at("fp"), c.at("fn"), c.at("tn")};
  r.anomalous_fraction = j.at("anomalous_fraction");
  r.per_image_f1 = j.at("per_image_f1").get<std::vector<double>>();
  r.mean_per_image_f1 = j.at("mean_per_image_f1");
  return r;
}

inline nlohmann::json to_json(const ImbalanceDiagnostic& d) {
  return {{"anomalous_fraction", d.anomalous_fraction},
          {"all_negative_accuracy", d.all_negative_accuracy},
          {"all_negative_f1", d.all_negative_f1},
          {"pixel_f1", d.pixel_f1},
          {"pixel_auroc", d.pixel_auroc},
          {"optimistic_auroc", d.optimistic_auroc}};
}

}  // namespace scenead::eval
