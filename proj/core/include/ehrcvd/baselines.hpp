#pragma once

// Reference predictors: a Cox-style linear hazard score evaluated on the
// index day, and L1-regularised logistic regression over a window of
// concatenated day vectors.

#include <cstddef>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ehrcvd/ehr_model.hpp"
#include "ehrcvd/num_engine.hpp"

namespace ehrcvd {

struct HazardScoreConfig {
  static constexpr int kSchemaVersion = 1;
  std::map<std::string, double> coefficients;  ///< feature name -> beta
  double baseline_survival = 0.9;              ///< S0 in (0, 1)
  std::map<std::string, double> centering;     ///< feature name -> reference mean

  /// Throws ConfigError unless S0 is in (0,1) and every beta is finite.
  void validate() const;
};

nlohmann::json to_json(const HazardScoreConfig& config);
HazardScoreConfig hazard_config_from_json(const nlohmann::json& j);

/// risk = 1 - S0^exp(sum beta * (x - center)). Features without a
/// coefficient, coefficients without a feature, and NaN values contribute 0.
double qrisk_score(const std::map<std::string, double>& features,
                   const HazardScoreConfig& config);

/// The same score bound to a fixed feature layout (e.g. vocabulary columns).
class HazardScorer {
 public:
  HazardScorer(HazardScoreConfig config, std::span<const std::string> feature_names);
  double score(std::span<const double> index_day_features) const;
  /// Coefficients that matched a column of the layout.
  std::size_t n_matched() const { return columns_.size(); }

 private:
  HazardScoreConfig config_;
  std::vector<std::size_t> columns_;
  std::vector<double> betas_;
  std::vector<double> centers_;
};

/// The k most recent real rows, oldest first, flattened; histories shorter
/// than k are front-padded with zero rows. Output length k * n_features.
std::vector<double> concat_history(const PatientSequence& sequence, std::size_t k);

struct SparseLinearModel {
  std::vector<double> weights;
  double intercept = 0.0;
  double lambda = 0.0;
  std::size_t history_window = 1;
  std::size_t iterations = 0;
  double stationarity_residual = 0.0;
};

struct LogRegOptions {
  double tolerance = 1e-6;
  std::size_t max_iterations = 10000;
  /// Nesterov momentum with gradient-based restart on top of the
  /// fixed-step proximal update.
  bool accelerate = true;
  /// Warm start; empty means all-zero weights.
  std::vector<double> initial_weights;
  double initial_intercept = 0.0;
};

/// prox of t*|w|.
double soft_threshold(double w, double t);

/// Minimises mean BCE + lambda * sum |w_j| (intercept unpenalised) with
/// proximal gradient steps of size 1/L, L from power iteration on
/// [X 1]^T [X 1] / 4n. Stops when the stationarity residual drops below
/// tolerance or after max_iterations.
SparseLinearModel logreg_train(const Tensor2& X, std::span<const double> y, double lambda,
                               const LogRegOptions& options = {});

/// sigmoid(w . x + b); throws DataError on length mismatch.
double logreg_predict(const SparseLinearModel& model, std::span<const double> x);

/// Gradient of the mean BCE at the model (weights then intercept last).
std::vector<double> logreg_loss_gradient(const Tensor2& X, std::span<const double> y,
                                         const SparseLinearModel& model);

/// Max over coordinates of the L1 optimality violation: |g_j + lambda*sign(w_j)|
/// for nonzero w_j, max(0, |g_j| - lambda) for zero w_j, |g_0| for the intercept.
double l1_stationarity_residual(const Tensor2& X, std::span<const double> y,
                                const SparseLinearModel& model);

std::vector<NamedTensor> to_named_tensors(const SparseLinearModel& model);
SparseLinearModel linear_model_from_named_tensors(std::span<const NamedTensor> blocks,
                                                  double lambda, std::size_t history_window);

}  // namespace ehrcvd
