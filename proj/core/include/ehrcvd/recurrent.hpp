#pragma once

// GRU sequence classifiers: single-task GRU, multi-task MT-GRU with one
// sigmoid head per horizon, and MT-Att-GRU which adds global bilinear
// ("general") attention over the daily hidden states before the heads.
//
// Cell, with row-vector inputs x (features) and h (hidden):
//   z  = sigmoid(x Wz + h Uz + bz)
//   r  = sigmoid(x Wr + h Ur + br)
//   h~ = tanh(x Wh + (r * h) Uh + bh)
//   h' = (1 - z) * h + z * h~
// Padding rows are pass-through (h' = h), so predictions depend only on the
// real days. Gradients are derived by hand; grad_check validates them.

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "ehrcvd/ehr_model.hpp"
#include "ehrcvd/errors.hpp"
#include "ehrcvd/num_engine.hpp"
#include "ehrcvd/rng.hpp"

namespace ehrcvd {

enum class Variant { gru, mt_gru, mt_att_gru };

std::string_view to_string(Variant v);
Variant parse_variant(std::string_view name);

struct ModelConfig {
  std::size_t n_hidden = 16;
  std::size_t n_days_pad = 30;
  double learning_rate = 1e-3;
  std::size_t epochs = 60;
  std::size_t batch_size = 32;
  Variant variant = Variant::mt_gru;
  /// Horizon index predicted by the single-task variant.
  std::size_t target_horizon = 0;
  std::uint64_t seed = 1;
  /// Early stopping on validation loss.
  std::size_t patience = 10;
  /// Inverted dropout on the day vectors during training; 0 disables it.
  double input_dropout = 0.0;

  bool multi_task() const { return variant != Variant::gru; }
  bool uses_attention() const { return variant == Variant::mt_att_gru; }
  /// Throws ConfigError for non-positive sizes or out-of-range rates.
  void validate() const;
};

nlohmann::json to_json(const ModelConfig& config);
ModelConfig model_config_from_json(const nlohmann::json& j);

struct GruParams {
  Tensor2 update_input, reset_input, candidate_input;              // n_features x n_hidden
  Tensor2 update_recurrent, reset_recurrent, candidate_recurrent;  // n_hidden x n_hidden
  Tensor2 update_bias, reset_bias, candidate_bias;                 // 1 x n_hidden

  std::size_t n_features() const { return update_input.rows(); }
  std::size_t n_hidden() const { return update_input.cols(); }
};

struct AttentionParams {
  Tensor2 score;         // n_hidden x n_hidden, bilinear query/key form
  Tensor2 combine;       // 2*n_hidden x n_hidden, applied to [context; query]
  Tensor2 combine_bias;  // 1 x n_hidden
};

struct HeadParams {
  Tensor2 weights;  // n_outputs x n_hidden, one row per horizon
  Tensor2 bias;     // 1 x n_outputs

  std::size_t n_outputs() const { return weights.rows(); }
};

struct RecurrentParams {
  GruParams gru;
  std::optional<AttentionParams> attention;
  HeadParams heads;

  /// All blocks in a fixed order (GRU, attention if present, heads).
  std::vector<ParamRef> refs();
  std::vector<NamedTensor> to_named_tensors() const;
  static RecurrentParams from_named_tensors(std::span<const NamedTensor> blocks);
  /// Same shapes, all zeros.
  RecurrentParams zeros_like() const;
};

/// Glorot-uniform weights, zero biases.
RecurrentParams init_params(std::size_t n_features, std::size_t n_hidden, std::size_t n_outputs,
                            bool with_attention, std::uint64_t seed);

std::vector<double> gru_cell_forward(std::span<const double> x, std::span<const double> h_prev,
                                     const GruParams& params);

struct SequenceStates {
  Tensor2 hidden;  ///< row t = state after day t (n_days x n_hidden)
  std::vector<double> final_state;
};

/// h_0 = 0; masked rows carry the previous state.
SequenceStates sequence_forward(const PatientSequence& sequence, const GruParams& params);

struct AttentionResult {
  std::vector<double> representation;  ///< tanh(combine^T [context; query] + bias)
  std::vector<double> weights;         ///< one per row, exactly 0 on masked rows
};

/// Query = final state; score_t = query^T S h_t over unmasked rows.
/// Throws NumericError if every row is masked.
AttentionResult attention_combine(const Tensor2& hidden, std::span<const std::uint8_t> mask,
                                  std::span<const double> final_state,
                                  const AttentionParams& params);

std::vector<double> heads_forward(std::span<const double> representation,
                                  const HeadParams& heads);

/// Padded, scaled sequences with per-output targets (n x n_outputs).
struct TrainingSet {
  std::vector<PatientSequence> sequences;
  Tensor2 labels;
  Tensor2 masks;

  std::size_t size() const { return sequences.size(); }
};

/// Number of model outputs: n_horizons for multi-task, 1 otherwise.
std::size_t n_outputs(const ModelConfig& config, std::size_t n_horizons);
/// Projects per-horizon labels/masks (n x n_horizons) onto the model's outputs.
std::pair<Tensor2, Tensor2> select_targets(const Tensor2& labels, const Tensor2& masks,
                                           const ModelConfig& config);

/// Masked BCE over every (patient, output) pair of the batch, normalised by
/// the total mask weight. When `grad` is given it receives the gradient
/// (overwritten). `dropout` enables input dropout with its rate.
double loss_and_gradient(const RecurrentParams& params, const TrainingSet& data,
                         std::span<const std::size_t> batch, RecurrentParams* grad,
                         double dropout_rate = 0.0, Rng* dropout_rng = nullptr);

struct EpochLog {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double validation_loss = 0.0;
  double wall_seconds = 0.0;
};

struct TrainResult {
  RecurrentParams params;
  std::vector<EpochLog> log;
  std::size_t best_epoch = 0;
};

/// Raised when the loss or a gradient becomes non-finite; carries the best
/// parameters seen so far.
class TrainingDiverged : public NumericError {
 public:
  TrainingDiverged(const std::string& what, RecurrentParams last_good)
      : NumericError(what), last_good_(std::move(last_good)) {}
  const RecurrentParams& last_good() const { return last_good_; }

 private:
  RecurrentParams last_good_;
};

/// Mini-batch Adam over seeded shuffles; validation loss each epoch; early
/// stopping with config.patience; returns the best-epoch parameters. An
/// empty validation set falls back to the training loss for stopping.
TrainResult train(const TrainingSet& train_set, const TrainingSet& validation_set,
                  const ModelConfig& config);

struct Prediction {
  std::vector<double> probabilities;
  /// Per row of the input sequence; empty unless the model has attention.
  std::vector<double> attention;
};

/// Throws DataError if the sequence's feature count differs from the model's.
Prediction predict(const RecurrentParams& params, const PatientSequence& sequence);

}  // namespace ehrcvd
