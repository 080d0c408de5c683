#pragma once

// Shared domain records for the raw event layer and the featurized layer.

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "ehrcvd/num_engine.hpp"

namespace ehrcvd {

enum class Modality { diagnosis, procedure, medication, lab, vital, demographic, encounter };

std::string_view to_string(Modality m);
/// Accepts the lowercase names used by to_string; throws DataError otherwise.
Modality parse_modality(std::string_view name);
/// Lab, vital and demographic events carry a real value.
bool is_continuous(Modality m);

/// Demographic codes that populate PatientRecord fields instead of features.
inline constexpr std::string_view kSexCode = "SEX";              // value 0 = female, 1 = male
inline constexpr std::string_view kBirthDayCode = "BIRTH_DAY";  // value = birth day index

struct RawEvent {
  std::string patient_id;
  std::int64_t day = 0;  ///< days since the dataset epoch
  Modality modality = Modality::diagnosis;
  std::string code;
  std::optional<double> value;

  friend bool operator==(const RawEvent&, const RawEvent&) = default;
};

enum class Sex : std::uint8_t { female = 0, male = 1 };

struct PatientRecord {
  std::string patient_id;
  Sex sex = Sex::female;
  std::int64_t birth_day = 0;  ///< may be negative (born before the epoch)
  std::vector<RawEvent> events;

  /// Distinct event days in increasing order.
  std::vector<std::int64_t> observation_days() const;
  double age_at(std::int64_t day) const;
};

inline constexpr std::int64_t kPaddingDay = -1;

/// One patient as an n_days x n_features matrix. Padding rows carry
/// kPaddingDay and mask 0.
struct PatientSequence {
  std::string patient_id;
  std::vector<std::int64_t> days;
  Tensor2 matrix;
  std::vector<std::uint8_t> mask;

  std::size_t n_days() const { return matrix.rows(); }
  std::size_t n_features() const { return matrix.cols(); }
  std::size_t n_real_days() const;
};

enum class Disease { stroke, mi };

std::string_view to_string(Disease d);
Disease parse_disease(std::string_view name);

struct EventDefinition {
  Disease disease = Disease::mi;
  std::vector<std::string> code_prefixes;

  /// stroke: I63, I69.3. MI: I21, I25.2.
  static EventDefinition defaults(Disease d);
  bool matches(std::string_view code) const;
};

/// Uppercases and trims surrounding whitespace; dots are kept.
std::string normalize_code(std::string_view code);
/// Prefix test on normalized codes ("I63" matches "I63.4").
bool code_has_prefix(std::string_view code, std::string_view prefix);

struct Violation {
  std::optional<std::size_t> event_index;
  std::string rule;

  friend bool operator==(const Violation&, const Violation&) = default;
};

/// Checks every record invariant; an empty result means the record is valid.
std::vector<Violation> validate_record(const PatientRecord& record);

/// Age in years: (day - birth_day) / 365.25.
double age_in_years(std::int64_t day, std::int64_t birth_day);

}  // namespace ehrcvd
