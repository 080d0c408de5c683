#pragma once

// Cross-validation harness, permutation importance and attention extraction.
// Every (fold, horizon) cell is scored only on rows whose label mask is set.

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ehrcvd/metrics.hpp"
#include "ehrcvd/model_zoo.hpp"

namespace ehrcvd {

struct CellMetrics {
  bool defined = false;
  double auc = 0.0;
  double sensitivity = 0.0;
  double precision = 0.0;
  double f1 = 0.0;
  double threshold = 0.0;
  std::size_t n_test = 0;
  std::size_t n_positive = 0;
};

struct MetricSummary {
  double mean = 0.0;
  double sd = 0.0;
};

struct HorizonAggregate {
  std::size_t n_folds = 0;  ///< folds with a defined cell
  MetricSummary auc, sensitivity, precision, f1;
};

struct FoldMetrics {
  std::string model;
  std::vector<std::string> horizons;
  std::vector<std::vector<CellMetrics>> cells;  ///< [fold][horizon]
  std::vector<HorizonAggregate> aggregate;      ///< [horizon]

  /// Recomputes `aggregate` from `cells` (sample sd over defined folds).
  void summarise();
};

/// Alters training targets of one fold before fitting (never test labels).
using TargetTransform =
    std::function<void(Targets& targets, std::span<const std::size_t> train_rows, std::uint64_t seed)>;

struct CvOptions {
  std::size_t jobs = 1;
  bool keep_models = false;
  TargetTransform transform;
};

struct FoldModel {
  std::unique_ptr<FittedModel> model;
  std::vector<std::size_t> test_rows;
  std::vector<double> thresholds;  ///< per horizon, NaN when undefined
};

struct CvResult {
  FoldMetrics metrics;
  Tensor2 oof_scores;                ///< n x n_horizons, NaN outside any test fold
  std::vector<FoldModel> fold_models;  ///< filled when keep_models
};

/// For each fold: fit on the other folds (scaler included), freeze per-horizon
/// F1 thresholds on the fit's calibration rows, score the held-out fold.
/// Folds may run on `jobs` threads; results are ordered by fold index.
CvResult cross_validate(const FeaturizedCohort& data, const ModelSpec& spec,
                        const std::vector<std::vector<std::size_t>>& folds, std::uint64_t seed,
                        const CvOptions& options = {});

/// Keeps at most floor(max_ratio * P_ref) training positives at `horizon`,
/// where P_ref counts training positives at `reference_horizon`. The dropped
/// positives (seeded choice) are masked out at `horizon` only.
TargetTransform subsample_positives(std::size_t horizon, std::size_t reference_horizon,
                                    double max_ratio);

struct ImportanceRecord {
  std::string feature;
  std::size_t n = 0;  ///< fold x repeat values
  double mean_delta_f1 = 0.0;
  double sd = 0.0;
  double t = 0.0;
  double p_value = 1.0;
};

struct ImportanceOptions {
  std::size_t repeats = 5;
  std::size_t horizon = 0;
  /// Column indices to test; empty = every feature.
  std::vector<std::size_t> features;
};

/// ΔF1 (baseline - permuted) for one fitted model on its test rows: each
/// repeat permutes the feature's whole padded column across patients.
std::vector<double> permutation_deltas(const FittedModel& model, const ModelInput& test,
                                       std::span<const double> labels, double threshold,
                                       std::size_t horizon, std::size_t feature,
                                       std::size_t repeats, std::uint64_t seed);

/// Pools fold x repeat ΔF1 values per feature and t-tests them against 0.
/// Requires a CvResult produced with keep_models.
std::vector<ImportanceRecord> permutation_importance(const FeaturizedCohort& data,
                                                     const CvResult& cv,
                                                     const ImportanceOptions& options,
                                                     std::uint64_t seed);

struct DayWeight {
  std::int64_t day = 0;
  double weight = 0.0;
};

/// Attention over the real days of a scaled, padded sequence. Throws
/// ConfigError when the model has no attention.
std::vector<DayWeight> extract_attention(const FittedModel& model, const PatientSequence& sequence);

// ---- artifacts ----

nlohmann::json to_json(const FoldMetrics& metrics);
/// model,horizon,fold,auc,sensitivity,precision,f1,threshold,n_test,n_positive
std::string metrics_to_csv(std::span<const FoldMetrics> metrics);
/// model,horizon,threshold,fpr,tpr over pooled out-of-fold scores.
std::string roc_to_csv(const FeaturizedCohort& data, std::span<const CvResult> results);
/// feature,n,mean_delta_f1,sd,t,p_value
std::string importance_to_csv(std::span<const ImportanceRecord> records);

}  // namespace ehrcvd
