#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>

#include "ehrcvd_cli/experiment.hpp"

namespace ehrcvd::cli {

struct StageOptions {
  std::filesystem::path out_dir;
  std::size_t jobs = 1;
  std::optional<std::uint64_t> seed;  ///< overrides the stage's own seed
  /// Config file as given, hashed into manifests; unset for config-less runs.
  std::optional<std::filesystem::path> config_path;
};

void stage_generate(const ExperimentConfig& config, const StageOptions& options);
void stage_cohort(const ExperimentConfig& config, const StageOptions& options);
void stage_featurize(const ExperimentConfig& config, const StageOptions& options);
void stage_tune(const ExperimentConfig& config, const StageOptions& options);
void stage_train(const ExperimentConfig& config, const StageOptions& options);
void stage_evaluate(const ExperimentConfig& config, const StageOptions& options);
void stage_importance(const ExperimentConfig& config, const StageOptions& options);
void stage_attention(const ExperimentConfig& config, const StageOptions& options);
/// Needs only the output directory; throws DataError "missing metrics
/// artifact" before any evaluate run.
void stage_report(const StageOptions& options);

}  // namespace ehrcvd::cli
