#pragma once

// Uniform wrapper over every predictor so the evaluator can cross-validate,
// threshold, and permute features without knowing the model family.
//
// A ModelSpec is an untrained recipe. fit() sees only training rows: it fits
// the scaler/imputer, trains, and names the rows whose predictions calibrate
// the operating threshold (an inner validation split where one exists).

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ehrcvd/baselines.hpp"
#include "ehrcvd/cohort_builder.hpp"
#include "ehrcvd/featurizer.hpp"
#include "ehrcvd/recurrent.hpp"

namespace ehrcvd {

/// A labelled cohort with its label-free vocabulary and unscaled, unpadded
/// sequences truncated at each patient's index day. Row i is cohort.patients[i].
struct FeaturizedCohort {
  Cohort cohort;
  Vocabulary vocabulary;
  PhysiologicalRanges ranges;
  std::vector<PatientSequence> sequences;
  Tensor2 labels;  ///< n x n_horizons
  Tensor2 masks;   ///< n x n_horizons

  std::size_t size() const { return sequences.size(); }
  std::size_t n_horizons() const { return labels.cols(); }
  std::size_t n_features() const { return vocabulary.n_features(); }
};

/// Builds the vocabulary from the cohort's records truncated at their index
/// days, then encodes every cohort patient. Throws DataError when a cohort
/// patient has no record.
FeaturizedCohort featurize_cohort(const Cohort& cohort, std::span<const PatientRecord> records,
                                  const VocabularyOptions& vocab_options,
                                  const PhysiologicalRanges& ranges);

/// Training targets; a copy of the cohort labels that training-side
/// experiments may alter (evaluation always uses the cohort's own labels).
struct Targets {
  Tensor2 labels;
  Tensor2 masks;
};

/// Model-ready view of some cohort rows.
struct ModelInput {
  std::vector<std::size_t> rows;
  std::vector<PatientSequence> sequences;  ///< scaled and padded
  Tensor2 index_day_features;              ///< unscaled last real day, NaN when missing
};

class FittedModel {
 public:
  FittedModel(ScalerImputer scaler, std::size_t n_days_pad)
      : scaler_(std::move(scaler)), n_days_pad_(n_days_pad) {}
  virtual ~FittedModel() = default;

  virtual std::string name() const = 0;
  /// n_rows x n_horizons; NaN marks horizons the model does not predict.
  virtual Tensor2 predict(const ModelInput& input) const = 0;
  /// Per-row attention weights of a scaled, padded sequence.
  virtual std::optional<std::vector<double>> attention(const PatientSequence&) const {
    return std::nullopt;
  }
  /// Learned parameters for checkpointing; per-horizon blocks are prefixed
  /// "h<k>/". Empty for models without learned weights.
  virtual std::vector<NamedTensor> parameters() const { return {}; }

  ModelInput prepare(const FeaturizedCohort& data, std::span<const std::size_t> rows) const;
  const ScalerImputer& scaler() const { return scaler_; }
  std::size_t n_days_pad() const { return n_days_pad_; }

 private:
  ScalerImputer scaler_;
  std::size_t n_days_pad_;
};

struct FitResult {
  std::unique_ptr<FittedModel> model;
  std::vector<std::size_t> calibration_rows;
};

class ModelSpec {
 public:
  virtual ~ModelSpec() = default;
  virtual std::string name() const = 0;
  virtual FitResult fit(const FeaturizedCohort& data, const Targets& targets,
                        std::span<const std::size_t> train_rows, std::uint64_t seed) const = 0;
};

/// Splits training rows into (inner train, inner validation), keeping matched
/// pairs together; `fraction` of the pairs (at least one) go to validation.
std::pair<std::vector<std::size_t>, std::vector<std::size_t>> inner_split(
    std::span<const std::size_t> rows, double fraction, std::uint64_t seed);

/// Linear hazard score on the unscaled index-day features; same score at every horizon.
class HazardSpec : public ModelSpec {
 public:
  explicit HazardSpec(HazardScoreConfig config) : config_(std::move(config)) {}
  std::string name() const override { return "qrisk"; }
  FitResult fit(const FeaturizedCohort& data, const Targets& targets,
                std::span<const std::size_t> train_rows, std::uint64_t seed) const override;

 private:
  HazardScoreConfig config_;
};

struct LogRegSpecOptions {
  std::size_t history_window = 50;
  std::vector<double> lambda_grid = {1e-4, 1e-3, 1e-2};
  double validation_fraction = 0.2;
  LogRegOptions solver;
  /// Horizon indices to fit; empty fits all. Others predict NaN.
  std::vector<std::size_t> horizons;
};

/// One L1 logistic regression per horizon over concat_history; lambda picked
/// by inner-validation AUC.
class LogRegSpec : public ModelSpec {
 public:
  explicit LogRegSpec(LogRegSpecOptions options) : options_(std::move(options)) {}
  std::string name() const override;
  FitResult fit(const FeaturizedCohort& data, const Targets& targets,
                std::span<const std::size_t> train_rows, std::uint64_t seed) const override;

 private:
  LogRegSpecOptions options_;
};

struct RecurrentSpecOptions {
  ModelConfig config;
  /// Single-task variant: horizons to train (one model each); empty = all.
  std::vector<std::size_t> horizons;
  double validation_fraction = 0.2;
};

class RecurrentSpec : public ModelSpec {
 public:
  explicit RecurrentSpec(RecurrentSpecOptions options);
  std::string name() const override { return std::string(to_string(options_.config.variant)); }
  FitResult fit(const FeaturizedCohort& data, const Targets& targets,
                std::span<const std::size_t> train_rows, std::uint64_t seed) const override;

 private:
  RecurrentSpecOptions options_;
};

/// Fitted recurrent model(s): one joint model, or one per covered horizon.
class FittedRecurrent : public FittedModel {
 public:
  FittedRecurrent(ScalerImputer scaler, ModelConfig config, std::size_t n_horizons);
  std::string name() const override { return std::string(to_string(config_.variant)); }
  Tensor2 predict(const ModelInput& input) const override;
  std::optional<std::vector<double>> attention(const PatientSequence& seq) const override;
  std::vector<NamedTensor> parameters() const override;

  const ModelConfig& config() const { return config_; }
  /// Horizon index -> parameters. A multi-task model stores its single
  /// parameter set under every horizon key it covers.
  std::map<std::size_t, RecurrentParams> params;
  std::map<std::size_t, std::vector<EpochLog>> logs;

 private:
  ModelConfig config_;
  std::size_t n_horizons_;
};

/// Scores each row with a fixed per-patient risk vector (e.g. generator truth).
class OracleSpec : public ModelSpec {
 public:
  explicit OracleSpec(std::map<std::string, std::vector<double>> risks)
      : risks_(std::make_shared<const std::map<std::string, std::vector<double>>>(
            std::move(risks))) {}
  std::string name() const override { return "oracle"; }
  FitResult fit(const FeaturizedCohort& data, const Targets& targets,
                std::span<const std::size_t> train_rows, std::uint64_t seed) const override;

 private:
  std::shared_ptr<const std::map<std::string, std::vector<double>>> risks_;
};

class ConstantSpec : public ModelSpec {
 public:
  explicit ConstantSpec(double value = 0.5) : value_(value) {}
  std::string name() const override { return "constant"; }
  FitResult fit(const FeaturizedCohort& data, const Targets& targets,
                std::span<const std::size_t> train_rows, std::uint64_t seed) const override;

 private:
  double value_;
};

}  // namespace ehrcvd
