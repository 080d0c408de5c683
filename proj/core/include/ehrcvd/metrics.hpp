#pragma once

// Discrimination and operating-point metrics over (score, binary label)
// pairs, plus the one-sample t-test used for importance significance.

#include <cstddef>
#include <span>
#include <vector>

namespace ehrcvd {

/// Mann-Whitney concordance P(s+ > s-) + 0.5 P(s+ = s-) via average ranks.
/// Labels are 0/1. Throws DataError("undefined AUC: ...") unless both
/// classes are present.
double roc_auc(std::span<const double> scores, std::span<const double> labels);

struct RocPoint {
  double threshold = 0.0;  ///< predicted positive iff score >= threshold
  double fpr = 0.0;
  double tpr = 0.0;
};

/// One point per distinct score in descending order, preceded by (0, 0) at
/// threshold +inf. Throws DataError for single-class input.
std::vector<RocPoint> roc_curve(std::span<const double> scores, std::span<const double> labels);

struct ClassificationSummary {
  double sensitivity = 0.0;
  double precision = 0.0;
  double f1 = 0.0;
};

/// Predicted positive iff score >= threshold; every 0/0 ratio is 0.
ClassificationSummary sens_prec(std::span<const double> scores, std::span<const double> labels,
                                double threshold);

struct ThresholdChoice {
  double threshold = 0.0;
  double f1 = 0.0;
};

/// Threshold over the distinct scores maximising F1 (rule score >= t); ties
/// go to the higher threshold. Throws DataError for single-class input.
ThresholdChoice choose_threshold(std::span<const double> scores, std::span<const double> labels);

struct TTestResult {
  std::size_t n = 0;
  double mean = 0.0;
  double sd = 0.0;  ///< sample standard deviation (n - 1)
  double t = 0.0;
  double p_value = 1.0;
};

/// Two-sided one-sample t-test of the mean against 0. All-equal samples give
/// p = 1 when the mean is 0 and p = 0 otherwise; n < 2 gives p = 1.
TTestResult t_test_zero(std::span<const double> values);

double mean_of(std::span<const double> values);
/// Sample standard deviation; 0 for fewer than two values.
double sample_sd(std::span<const double> values);

}  // namespace ehrcvd
