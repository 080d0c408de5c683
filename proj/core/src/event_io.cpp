#include "ehrcvd/event_io.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>

#include <nlohmann/json.hpp>

#include "ehrcvd/errors.hpp"

namespace ehrcvd {

using nlohmann::json;

std::string event_to_json_line(const RawEvent& event) {
  // ordered_json keeps the documented field order on the wire.
  nlohmann::ordered_json j;
  j["patient_id"] = event.patient_id;
  j["day"] = event.day;
  j["modality"] = std::string(to_string(event.modality));
  j["code"] = event.code;
  if (event.value) {
    j["value"] = *event.value;
  } else {
    j["value"] = nullptr;
  }
  return j.dump();
}

RawEvent event_from_json_line(const std::string& line) {
  json j;
  try {
    j = json::parse(line);
  } catch (const json::parse_error& e) {
    throw DataError(std::string("malformed event line: ") + e.what());
  }
  if (!j.is_object()) throw DataError("event line is not a JSON object");
  static const std::vector<std::string> kFields = {"patient_id", "day", "modality", "code",
                                                   "value"};
  for (const auto& f : kFields) {
    if (!j.contains(f)) throw DataError("event line missing field '" + f + "'");
  }
  if (j.size() != kFields.size()) throw DataError("event line has unexpected fields");
  RawEvent e;
  try {
    e.patient_id = j.at("patient_id").get<std::string>();
    if (!j.at("day").is_number_integer()) throw DataError("event day must be an integer");
    e.day = j.at("day").get<std::int64_t>();
    e.modality = parse_modality(j.at("modality").get<std::string>());
    e.code = j.at("code").get<std::string>();
    const auto& v = j.at("value");
    if (!v.is_null()) {
      if (!v.is_number()) throw DataError("event value must be a number or null");
      e.value = v.get<double>();
    }
  } catch (const json::exception& ex) {
    throw DataError(std::string("bad event field: ") + ex.what());
  }
  return e;
}

void write_events(std::ostream& os, const std::vector<RawEvent>& events) {
  for (const auto& e : events) os << event_to_json_line(e) << '\n';
}

std::vector<RawEvent> read_events(std::istream& is) {
  std::vector<RawEvent> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      out.push_back(event_from_json_line(line));
    } catch (const DataError& e) {
      throw DataError("line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

void write_events_file(const std::filesystem::path& path, const std::vector<RawEvent>& events) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw DataError("cannot write " + path.string());
  write_events(os, events);
}

std::vector<RawEvent> read_events_file(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot read " + path.string());
  return read_events(is);
}

std::vector<PatientRecord> assemble_records(std::vector<RawEvent> events) {
  std::map<std::string, PatientRecord> by_id;
  for (auto& e : events) {
    auto& rec = by_id[e.patient_id];
    rec.patient_id = e.patient_id;
    rec.events.push_back(std::move(e));
  }
  std::vector<PatientRecord> out;
  out.reserve(by_id.size());
  for (auto& [id, rec] : by_id) {
    std::stable_sort(rec.events.begin(), rec.events.end(),
                     [](const RawEvent& a, const RawEvent& b) { return a.day < b.day; });
    bool has_sex = false, has_birth = false;
    for (const auto& e : rec.events) {
      if (e.modality != Modality::demographic || !e.value) continue;
      const std::string code = normalize_code(e.code);
      if (code == kSexCode) {
        rec.sex = *e.value >= 0.5 ? Sex::male : Sex::female;
        has_sex = true;
      } else if (code == kBirthDayCode) {
        rec.birth_day = static_cast<std::int64_t>(std::llround(*e.value));
        has_birth = true;
      }
    }
    if (!has_sex || !has_birth) {
      throw DataError("patient " + id + " lacks a " +
                      std::string(!has_sex ? kSexCode : kBirthDayCode) +
                      " demographic event");
    }
    out.push_back(std::move(rec));
  }
  return out;
}

std::vector<RawEvent> flatten_records(const std::vector<PatientRecord>& records) {
  std::vector<RawEvent> out;
  for (const auto& r : records) out.insert(out.end(), r.events.begin(), r.events.end());
  return out;
}

}  // namespace ehrcvd
