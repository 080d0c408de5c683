#pragma once

// Experiment configuration shared by every subcommand. Relative paths in a
// config file resolve against the file's directory.

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ehrcvd/cohort_builder.hpp"
#include "ehrcvd/featurizer.hpp"
#include "ehrcvd/model_zoo.hpp"
#include "ehrcvd/recurrent.hpp"
#include "ehrcvd/synth_cohort.hpp"
#include "ehrcvd/tuner.hpp"

namespace ehrcvd::cli {

struct Seeds {
  std::uint64_t generator = 7;
  std::uint64_t folds = 11;
  std::uint64_t train = 5;
  std::uint64_t tune = 3;
  std::uint64_t importance = 13;
};

struct TuneSettings {
  std::string model = "mt_gru";
  std::size_t budget = 20;
  std::size_t folds = 3;
  std::optional<std::size_t> horizon;  ///< index; default the last horizon
  std::optional<std::filesystem::path> search_space;
};

struct ImportanceSettings {
  std::string model = "mt_att_gru";
  std::size_t repeats = 5;
  std::optional<std::size_t> horizon;
  std::vector<std::string> features;  ///< empty means every feature
};

struct ExperimentConfig {
  static constexpr int kSchemaVersion = 1;

  std::optional<std::filesystem::path> events;
  std::optional<GeneratorConfig> generator;
  std::filesystem::path output_dir = "out";
  Disease disease = Disease::mi;
  HorizonSet horizons = HorizonSet::standard();
  std::optional<std::int64_t> study_end_day;  ///< default: generator study length
  std::vector<std::string> models = {"qrisk", "lr_50", "gru", "mt_gru", "mt_att_gru"};
  std::size_t folds = 5;
  Seeds seeds;
  VocabularyOptions vocabulary;
  std::optional<std::filesystem::path> charlson;
  std::optional<std::filesystem::path> ranges;
  std::optional<std::filesystem::path> qrisk;
  ModelConfig recurrent;
  LogRegSpecOptions logreg;
  TuneSettings tune;
  ImportanceSettings importance;
  std::string attention_model = "mt_att_gru";

  std::int64_t resolved_study_end() const;
  std::size_t default_horizon(const std::optional<std::size_t>& h) const;
};

/// Throws ConfigError naming the offending key.
ExperimentConfig experiment_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir);
ExperimentConfig load_experiment(const std::filesystem::path& path);
nlohmann::json to_json(const ExperimentConfig& config);

/// Models known by name: qrisk, lr_<k>, gru, mt_gru, mt_att_gru, constant,
/// and oracle (generated cohorts only).
std::unique_ptr<ModelSpec> make_spec(const std::string& name, const ExperimentConfig& config,
                                     const GroundTruth* truth);

}  // namespace ehrcvd::cli
