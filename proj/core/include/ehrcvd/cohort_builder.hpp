#pragma once

// Inclusion criteria, per-horizon labels, nearest-neighbour control matching
// and pair-preserving stratified folds.

#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "ehrcvd/ehr_model.hpp"

namespace ehrcvd {

inline constexpr std::int64_t kUnboundedHorizon = std::numeric_limits<std::int64_t>::max();
/// Minimum gap between the index day and the event for a case.
inline constexpr std::int64_t kMinLeadDays = 14;

struct HorizonSet {
  /// Strictly increasing; the last entry is kUnboundedHorizon.
  std::vector<std::int64_t> days;

  /// 1 month, 3 months, 12 months, >12 months.
  static HorizonSet standard() { return {{30, 91, 365, kUnboundedHorizon}}; }
  std::size_t size() const { return days.size(); }
  bool unbounded(std::size_t i) const { return days[i] == kUnboundedHorizon; }
  /// Longest finite horizon; a control needs this much follow-up to be
  /// certified event-free at the unbounded horizon.
  std::int64_t longest_finite() const;
  std::string label(std::size_t i) const;
  /// Throws ConfigError unless strictly increasing with an unbounded tail.
  void validate() const;
};

enum class LabelMode { cumulative, disjoint };

struct LabeledPatient {
  std::string patient_id;
  std::int64_t index_day = 0;
  std::optional<std::int64_t> event_day;
  std::vector<std::uint8_t> labels;
  std::vector<std::uint8_t> label_mask;
  bool is_case = false;
  double age_at_index = 0.0;
  Sex sex = Sex::female;
  std::int64_t n_obs_days = 0;      ///< observation days on or before index_day
  std::int64_t followup_days = 0;   ///< study_end_day - index_day
};

struct Exclusion {
  std::string patient_id;
  std::string reason;
};

struct InclusionResult {
  std::vector<LabeledPatient> cases;          ///< labels not yet assigned
  std::vector<LabeledPatient> control_pool;   ///< labels not yet assigned
  std::vector<Exclusion> excluded;
};

/// Cases: first event-matching diagnosis with an observation day at least 14
/// days earlier; index = latest such day. Controls: no matching code anywhere;
/// index = last observation day.
InclusionResult apply_inclusion(std::span<const PatientRecord> records,
                                const EventDefinition& event_def, std::int64_t study_end_day);

struct HorizonLabels {
  std::vector<std::uint8_t> labels;
  std::vector<std::uint8_t> mask;
};

/// Cases: label i = 1 iff the event falls within horizon i of the index day
/// (cumulative) or inside (h[i-1], h[i]] (disjoint); mask all 1.
/// Controls: labels 0; mask 0 where follow-up is shorter than the horizon
/// (the unbounded horizon requires longest_finite() days).
/// Throws DataError for a case whose event is < 14 days after index.
HorizonLabels label_horizons(const LabeledPatient& patient, const HorizonSet& horizons,
                             LabelMode mode = LabelMode::cumulative);

struct MatchedPair {
  std::string case_id;
  std::string control_id;
  double distance = 0.0;
};

struct Cohort {
  static constexpr int kSchemaVersion = 1;
  EventDefinition event_def;
  HorizonSet horizons = HorizonSet::standard();
  LabelMode label_mode = LabelMode::cumulative;
  /// Matched pairs are stored adjacently: case at 2k, its control at 2k+1.
  std::vector<LabeledPatient> patients;
  std::vector<MatchedPair> matching_report;

  std::size_t n_pairs() const { return matching_report.size(); }
  /// Positive (unmasked) label count per horizon.
  std::vector<std::size_t> positive_counts() const;
};

/// Exact sex match, Euclidean distance on (age_at_index, n_obs_days) z-scored
/// over cases and pool together; greedy 1:1 without replacement, cases in
/// descending age. Throws DataError("insufficient same-sex controls ...").
Cohort match_controls(std::span<const LabeledPatient> cases,
                      std::span<const LabeledPatient> control_pool,
                      const EventDefinition& event_def);

/// Fills labels and masks of every cohort patient.
void label_cohort(Cohort& cohort, const HorizonSet& horizons,
                  LabelMode mode = LabelMode::cumulative);

struct CohortBuildResult {
  Cohort cohort;
  std::vector<Exclusion> excluded;
};

/// apply_inclusion + match_controls + label_cohort.
CohortBuildResult build_cohort(std::span<const PatientRecord> records,
                               const EventDefinition& event_def, const HorizonSet& horizons,
                               std::int64_t study_end_day,
                               LabelMode mode = LabelMode::cumulative);

/// k disjoint folds of patient indices into cohort.patients. Matched pairs
/// stay together; pairs are stratified by the case's shortest positive
/// horizon, shuffled under `seed`, and dealt round-robin.
/// Throws DataError if k < 2 or k exceeds the number of pairs.
std::vector<std::vector<std::size_t>> split_folds(const Cohort& cohort, std::size_t k,
                                                  std::uint64_t seed);

nlohmann::json to_json(const Cohort& cohort);
Cohort cohort_from_json(const nlohmann::json& j);
nlohmann::json exclusions_to_json(const std::vector<Exclusion>& excluded);
/// CSV with header "patient_id,fold".
std::string folds_to_csv(const Cohort& cohort, const std::vector<std::vector<std::size_t>>& folds);
std::vector<std::vector<std::size_t>> folds_from_csv(const Cohort& cohort, const std::string& csv);

}  // namespace ehrcvd
