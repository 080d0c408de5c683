#include "ehrcvd/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include <boost/math/distributions/students_t.hpp>

#include "ehrcvd/errors.hpp"

namespace ehrcvd {

namespace {

struct ClassCounts {
  std::size_t positives = 0;
  std::size_t negatives = 0;
};

ClassCounts count_classes(std::span<const double> scores, std::span<const double> labels,
                          const char* what) {
  if (scores.size() != labels.size()) {
    throw DataError(std::string(what) + ": scores and labels differ in length");
  }
  ClassCounts c;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (std::isnan(scores[i])) throw DataError(std::string(what) + ": NaN score");
    if (labels[i] == 1.0) {
      ++c.positives;
    } else if (labels[i] == 0.0) {
      ++c.negatives;
    } else {
      throw DataError(std::string(what) + ": labels must be 0 or 1");
    }
  }
  return c;
}

ClassCounts require_both(std::span<const double> scores, std::span<const double> labels,
                         const char* what) {
  const auto c = count_classes(scores, labels, what);
  if (c.positives == 0 || c.negatives == 0) {
    throw DataError(std::string("undefined AUC: ") + what + " needs both classes");
  }
  return c;
}

// Indices sorted by descending score.
std::vector<std::size_t> descending_order(std::span<const double> scores) {
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  return order;
}

double ratio(double num, double den) { return den == 0.0 ? 0.0 : num / den; }

ClassificationSummary summary_from_counts(double tp, double fp, double fn) {
  ClassificationSummary s;
  s.sensitivity = ratio(tp, tp + fn);
  s.precision = ratio(tp, tp + fp);
  s.f1 = ratio(2.0 * tp, 2.0 * tp + fp + fn);
  return s;
}

}  // namespace

double roc_auc(std::span<const double> scores, std::span<const double> labels) {
  const auto c = require_both(scores, labels, "roc_auc");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  // Sum of (1-based, tie-averaged) ranks of the positives, doubled to stay integral.
  double twice_rank_sum = 0.0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) ++j;
    const double twice_avg_rank = static_cast<double>(i + 1 + j);
    for (std::size_t k = i; k < j; ++k) {
      if (labels[order[k]] == 1.0) twice_rank_sum += twice_avg_rank;
    }
    i = j;
  }
  const double np = static_cast<double>(c.positives), nn = static_cast<double>(c.negatives);
  const double twice_u = twice_rank_sum - np * (np + 1.0);
  return twice_u / (2.0 * np * nn);
}

std::vector<RocPoint> roc_curve(std::span<const double> scores, std::span<const double> labels) {
  const auto c = require_both(scores, labels, "roc_curve");
  const auto order = descending_order(scores);
  std::vector<RocPoint> out;
  out.push_back({std::numeric_limits<double>::infinity(), 0.0, 0.0});
  double tp = 0.0, fp = 0.0;
  for (std::size_t i = 0; i < order.size();) {
    const double s = scores[order[i]];
    while (i < order.size() && scores[order[i]] == s) {
      (labels[order[i]] == 1.0 ? tp : fp) += 1.0;
      ++i;
    }
    out.push_back({s, fp / static_cast<double>(c.negatives), tp / static_cast<double>(c.positives)});
  }
  return out;
}

ClassificationSummary sens_prec(std::span<const double> scores, std::span<const double> labels,
                                double threshold) {
  count_classes(scores, labels, "sens_prec");
  double tp = 0.0, fp = 0.0, fn = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const bool predicted = scores[i] >= threshold;
    const bool actual = labels[i] == 1.0;
    if (predicted && actual) tp += 1.0;
    if (predicted && !actual) fp += 1.0;
    if (!predicted && actual) fn += 1.0;
  }
  return summary_from_counts(tp, fp, fn);
}

ThresholdChoice choose_threshold(std::span<const double> scores, std::span<const double> labels) {
  const auto c = require_both(scores, labels, "choose_threshold");
  const auto order = descending_order(scores);
  const double positives = static_cast<double>(c.positives);
  ThresholdChoice best{std::numeric_limits<double>::infinity(), -1.0};
  double tp = 0.0, fp = 0.0;
  for (std::size_t i = 0; i < order.size();) {
    const double s = scores[order[i]];
    while (i < order.size() && scores[order[i]] == s) {
      (labels[order[i]] == 1.0 ? tp : fp) += 1.0;
      ++i;
    }
    const double f1 = summary_from_counts(tp, fp, positives - tp).f1;
    // Thresholds are visited from high to low, so only a strict gain moves it.
    if (f1 > best.f1) best = {s, f1};
  }
  return best;
}

double mean_of(std::span<const double> values) {
  if (values.empty()) return 0.0;
  return std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
}

double sample_sd(std::span<const double> values) {
  if (values.size() < 2) return 0.0;
  const double m = mean_of(values);
  double ss = 0.0;
  for (double v : values) ss += (v - m) * (v - m);
  return std::sqrt(ss / static_cast<double>(values.size() - 1));
}

TTestResult t_test_zero(std::span<const double> values) {
  TTestResult r;
  r.n = values.size();
  r.mean = mean_of(values);
  r.sd = sample_sd(values);
  if (r.n < 2) return r;
  if (r.sd == 0.0) {
    if (r.mean == 0.0) return r;
    r.t = r.mean > 0 ? std::numeric_limits<double>::infinity()
                     : -std::numeric_limits<double>::infinity();
    r.p_value = 0.0;
    return r;
  }
  r.t = r.mean / (r.sd / std::sqrt(static_cast<double>(r.n)));
  const boost::math::students_t dist(static_cast<double>(r.n - 1));
  r.p_value = std::clamp(2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(r.t))),
                         0.0, 1.0);
  return r;
}

}  // namespace ehrcvd
