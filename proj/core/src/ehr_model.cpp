#include "ehrcvd/ehr_model.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>

#include "ehrcvd/errors.hpp"

namespace ehrcvd {

namespace {

constexpr std::array<std::string_view, 7> kModalityNames = {
    "diagnosis", "procedure", "medication", "lab", "vital", "demographic", "encounter"};

}  // namespace

std::string_view to_string(Modality m) { return kModalityNames[static_cast<std::size_t>(m)]; }

Modality parse_modality(std::string_view name) {
  for (std::size_t i = 0; i < kModalityNames.size(); ++i) {
    if (kModalityNames[i] == name) return static_cast<Modality>(i);
  }
  throw DataError("unknown modality '" + std::string(name) + "'");
}

bool is_continuous(Modality m) {
  return m == Modality::lab || m == Modality::vital || m == Modality::demographic;
}

std::vector<std::int64_t> PatientRecord::observation_days() const {
  std::vector<std::int64_t> days;
  days.reserve(events.size());
  for (const auto& e : events) days.push_back(e.day);
  std::sort(days.begin(), days.end());
  days.erase(std::unique(days.begin(), days.end()), days.end());
  return days;
}

double PatientRecord::age_at(std::int64_t day) const { return age_in_years(day, birth_day); }

double age_in_years(std::int64_t day, std::int64_t birth_day) {
  return static_cast<double>(day - birth_day) / 365.25;
}

std::size_t PatientSequence::n_real_days() const {
  return static_cast<std::size_t>(std::count(mask.begin(), mask.end(), std::uint8_t{1}));
}

std::string_view to_string(Disease d) { return d == Disease::stroke ? "stroke" : "mi"; }

Disease parse_disease(std::string_view name) {
  if (name == "stroke") return Disease::stroke;
  if (name == "mi") return Disease::mi;
  throw ConfigError("unknown disease '" + std::string(name) + "' (expected stroke or mi)");
}

EventDefinition EventDefinition::defaults(Disease d) {
  if (d == Disease::stroke) return {d, {"I63", "I69.3"}};
  return {d, {"I21", "I25.2"}};
}

bool EventDefinition::matches(std::string_view code) const {
  const std::string norm = normalize_code(code);
  return std::any_of(code_prefixes.begin(), code_prefixes.end(),
                     [&](const std::string& p) { return code_has_prefix(norm, p); });
}

std::string normalize_code(std::string_view code) {
  std::size_t b = 0, e = code.size();
  while (b < e && std::isspace(static_cast<unsigned char>(code[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(code[e - 1]))) --e;
  std::string out(code.substr(b, e - b));
  for (char& c : out) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  return out;
}

bool code_has_prefix(std::string_view code, std::string_view prefix) {
  return !prefix.empty() && code.size() >= prefix.size() &&
         code.substr(0, prefix.size()) == prefix;
}

std::vector<Violation> validate_record(const PatientRecord& record) {
  std::vector<Violation> out;
  if (record.patient_id.empty()) out.push_back({std::nullopt, "patient_id non-empty"});
  for (std::size_t i = 0; i < record.events.size(); ++i) {
    const RawEvent& e = record.events[i];
    if (e.patient_id != record.patient_id) {
      out.push_back({i, "event patient_id matches record"});
    }
    if (e.day < 0) out.push_back({i, "day >= 0"});
    if (i > 0 && e.day < record.events[i - 1].day) {
      out.push_back({i, "events sorted by day"});
    }
    if (is_continuous(e.modality)) {
      if (!e.value) {
        out.push_back({i, "continuous modality missing value"});
      } else if (!std::isfinite(*e.value)) {
        out.push_back({i, "value finite"});
      }
    }
    if (e.code.empty()) out.push_back({i, "code non-empty"});
  }
  return out;
}

}  // namespace ehrcvd
