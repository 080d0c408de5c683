#pragma once

// Seeded synthetic EHR cohorts with a planted discrete-time hazard.
//
// Patient i draws everything from Rng(derive_seed(seed, i)), so patients are
// independent and the output does not depend on generation order. Each
// patient's last observation day L is the prediction point; the event (if any)
// happens at L + d for d >= 14 with per-day probability
//   sigmoid(phase_logit(d) + eta),
//   eta = b_age (age - 65) / 10 + b_bp (bp_baseline - bp_mean) / 20
//         + b_diabetes [diabetes] + b_chf [heart failure].
// Per-horizon risks follow in closed form from the survival product.

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ehrcvd/cohort_builder.hpp"
#include "ehrcvd/ehr_model.hpp"

namespace ehrcvd {

struct ChannelSpec {
  std::string code;
  Modality modality = Modality::lab;
  double mean = 0.0;        ///< population mean of the patient baseline
  double between_sd = 0.0;  ///< spread of patient baselines
  double within_sd = 0.0;   ///< day-to-day measurement noise
  double low = 0.0;         ///< physiological range
  double high = 0.0;
  double measure_probability = 0.5;  ///< per observation day
};

struct PlantedHazard {
  double age = 0.4;
  double blood_pressure = 1.2;
  double diabetes = 0.7;
  double heart_failure = 0.9;
  /// Base logits for lead days [14, e0], (e0, e1], (e1, e2], (e2, inf).
  std::vector<std::int64_t> phase_ends = {30, 91, 365};
  std::vector<double> phase_logits = {-6.3, -7.0, -8.2, -9.6};
};

struct GeneratorConfig {
  static constexpr int kSchemaVersion = 1;
  std::size_t n_patients = 6000;
  std::uint64_t seed = 7;
  Disease disease = Disease::mi;
  std::int64_t study_days = 1825;
  std::int64_t index_day_min = 365;
  std::int64_t index_day_max = 1460;
  std::int64_t history_days = 730;
  double mean_observation_days = 30.0;
  /// Log-scale SD of a per-patient mean-one multiplier on the visit rate.
  double observation_rate_log_sd = 0.0;
  std::vector<ChannelSpec> channels;
  std::string blood_pressure_channel = "SBP";
  std::string noise_channel = "SODIUM";  ///< zero planted coefficient
  double abnormal_fraction = 0.05;
  double diabetes_prevalence = 0.25;
  double heart_failure_prevalence = 0.12;
  std::vector<std::string> diagnosis_codes;
  std::vector<std::string> procedure_codes;
  std::vector<std::string> medication_codes;
  std::vector<std::string> encounter_codes;
  double diagnosis_rate = 0.4;   ///< background diagnoses per observation day
  double procedure_rate = 0.15;
  double medication_rate = 0.8;
  PlantedHazard hazard;
  HorizonSet horizons = HorizonSet::standard();

  /// Default channels, code menus and hazard.
  static GeneratorConfig defaults();
  /// Throws ConfigError on inconsistent settings (before any sampling).
  void validate() const;
};

nlohmann::json to_json(const GeneratorConfig& config);
/// Missing keys keep their defaults.
GeneratorConfig generator_config_from_json(const nlohmann::json& j);

struct PatientTruth {
  std::string patient_id;
  std::int64_t index_day = 0;
  std::int64_t followup_days = 0;
  double linear_predictor = 0.0;
  std::vector<double> risks;             ///< per horizon, cumulative
  std::optional<std::int64_t> event_day;  ///< only when inside the study
  std::vector<std::uint8_t> realized;     ///< event within horizon of index_day
};

struct GroundTruth {
  static constexpr int kSchemaVersion = 1;
  HorizonSet horizons;
  std::vector<PatientTruth> patients;

  /// patient_id -> risks, the input of OracleSpec.
  std::map<std::string, std::vector<double>> risk_map() const;
};

nlohmann::json to_json(const GroundTruth& truth);
GroundTruth ground_truth_from_json(const nlohmann::json& j);

struct GeneratedCohort {
  std::vector<PatientRecord> records;
  GroundTruth truth;
};

GeneratedCohort generate(const GeneratorConfig& config);

/// Risk at `horizon` of a patient with linear predictor `eta` and
/// `followup_days` of follow-up (the unbounded horizon stops there).
double planted_risk(const PlantedHazard& hazard, double eta, std::int64_t horizon_days,
                    std::int64_t followup_days);

/// AUC of the true risks against realized outcomes at one horizon, over
/// patients whose outcome is observable there (event seen, or follow-up
/// covering the horizon; the unbounded horizon needs the longest finite one).
/// `ids` restricts the population when non-empty. Throws DataError when a
/// single class remains.
double bayes_auc(const GroundTruth& truth, std::size_t horizon,
                 std::span<const std::string> ids = {});

}  // namespace ehrcvd
