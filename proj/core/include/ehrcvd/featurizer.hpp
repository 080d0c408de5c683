#pragma once

// Per-day aggregation of raw events into feature vectors, vocabulary
// construction, and the train-fitted scaler/imputer.
//
// Column layout of every day vector (see Vocabulary::feature_names):
//   age, sex,
//   4 columns per continuous variable: median, mad, count, abnormal,
//   1 count column per medication/encounter code,
//   1 indicator column per retained diagnosis/procedure code,
//   1 cumulative flag per retained comorbidity.
// Missing continuous median/mad entries are NaN until imputation.

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "ehrcvd/ehr_model.hpp"

namespace ehrcvd {

struct CodeSlot {
  Modality modality = Modality::diagnosis;
  std::string code;

  friend bool operator==(const CodeSlot&, const CodeSlot&) = default;
};

/// One comorbidity family, matched by ICD-10 code prefix.
struct ComorbidityDefinition {
  std::string name;
  std::vector<std::string> prefixes;

  friend bool operator==(const ComorbidityDefinition&, const ComorbidityDefinition&) = default;
};

/// The 17 Charlson conditions with their ICD-10 prefixes (Quan coding).
std::vector<ComorbidityDefinition> default_charlson_definitions();
/// Expands compact prefix ranges: "I60-I69" -> I60..I69, "N03.2-N03.7" ->
/// N03.2..N03.7. Plain prefixes pass through normalized.
std::vector<std::string> expand_prefix_ranges(std::span<const std::string> items);

struct Vocabulary {
  static constexpr int kSchemaVersion = 1;
  static constexpr std::size_t kDemographicColumns = 2;  // age, sex
  static constexpr std::size_t kContinuousColumns = 4;   // median, mad, count, abnormal

  std::vector<CodeSlot> continuous_slots;
  std::vector<CodeSlot> count_slots;  ///< medication and encounter codes
  std::vector<CodeSlot> code_slots;   ///< diagnosis and procedure codes, at most top_k
  std::vector<ComorbidityDefinition> charlson_slots;
  std::vector<std::string> feature_names;

  std::size_t n_features() const { return feature_names.size(); }
  std::size_t continuous_offset() const { return kDemographicColumns; }
  std::size_t count_offset() const {
    return continuous_offset() + kContinuousColumns * continuous_slots.size();
  }
  std::size_t code_offset() const { return count_offset() + count_slots.size(); }
  std::size_t charlson_offset() const { return code_offset() + code_slots.size(); }

  /// Rebuilds feature_names from the slot lists.
  void rebuild_feature_names();
  /// Index of a feature name; throws DataError if absent.
  std::size_t feature_index(const std::string& name) const;
};

struct VocabularyOptions {
  std::size_t top_k = 300;
  double min_prevalence = 0.01;
  std::vector<ComorbidityDefinition> comorbidities = default_charlson_definitions();
};

/// Patient-level prevalence drives both the top-k cut (diagnosis+procedure)
/// and the inclusive min_prevalence filter (every slot kind). Ties are broken
/// by code, then modality.
Vocabulary build_vocabulary(std::span<const PatientRecord> records,
                            const VocabularyOptions& options = {});

struct PhysiologicalRange {
  double low = 0.0;
  double high = 0.0;
};

struct PhysiologicalRanges {
  static constexpr int kSchemaVersion = 1;
  std::map<std::string, PhysiologicalRange> ranges;  ///< keyed by normalized code

  static PhysiologicalRanges defaults();
  std::optional<PhysiologicalRange> find(const std::string& code) const;
  /// Throws ConfigError if any entry has low >= high.
  void validate() const;
};

struct ContinuousSummary {
  double median = 0.0;
  double mad = 0.0;
  std::size_t count = 0;
  bool abnormal = false;
};

/// Median, median absolute deviation, count, and whether any value lies
/// outside the range. Returns nullopt for an empty list.
std::optional<ContinuousSummary> aggregate_continuous(std::span<const double> values,
                                                      std::optional<PhysiologicalRange> range);

/// Encodes one observation day. Throws DataError("not an observation day")
/// when the patient has no event on `day`.
std::vector<double> encode_day(const PatientRecord& record, std::int64_t day,
                               const Vocabulary& vocab, const PhysiologicalRanges& ranges);

/// Encodes every observation day up to and including `last_day` (all days
/// when unset) into an unscaled, unpadded sequence.
PatientSequence encode_record(const PatientRecord& record, const Vocabulary& vocab,
                              const PhysiologicalRanges& ranges,
                              std::optional<std::int64_t> last_day = std::nullopt);

/// Copy of the record with events after `last_day` removed.
PatientRecord truncate_record(const PatientRecord& record, std::int64_t last_day);

struct ScalerImputer {
  static constexpr int kSchemaVersion = 1;
  std::vector<double> min;
  std::vector<double> max;
  std::vector<double> mean;
  bool fitted = false;

  std::size_t n_features() const { return mean.size(); }
};

/// Fits per-feature min/max/mean over observed entries of the real rows.
/// Features never observed get mean 0, min 0, max 1.
ScalerImputer fit_scaler_imputer(std::span<const PatientSequence> train_sequences);

/// Mean-imputes, min-max scales with clipping to [0,1], then keeps the most
/// recent n_days_pad rows, front-padding shorter histories with zero rows.
PatientSequence transform(const PatientSequence& sequence, const ScalerImputer& si,
                          std::size_t n_days_pad);

// ---- persistence ----

nlohmann::json to_json(const Vocabulary& vocab);
Vocabulary vocabulary_from_json(const nlohmann::json& j);
nlohmann::json to_json(const PhysiologicalRanges& ranges);
PhysiologicalRanges ranges_from_json(const nlohmann::json& j);
nlohmann::json to_json(const ScalerImputer& si);
ScalerImputer scaler_from_json(const nlohmann::json& j);
nlohmann::json comorbidities_to_json(const std::vector<ComorbidityDefinition>& defs);
std::vector<ComorbidityDefinition> comorbidities_from_json(const nlohmann::json& j);

}  // namespace ehrcvd
