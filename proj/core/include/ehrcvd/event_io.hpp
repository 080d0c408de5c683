#pragma once

// Raw-event wire format: JSON Lines, one event per line, exactly the fields
// patient_id (string), day (integer), modality (string), code (string) and
// value (number or null), UTF-8, every line newline-terminated.

#include <filesystem>
#include <istream>
#include <ostream>
#include <string>
#include <vector>

#include "ehrcvd/ehr_model.hpp"

namespace ehrcvd {

std::string event_to_json_line(const RawEvent& event);
/// Throws DataError naming the problem on malformed lines or missing/extra fields.
RawEvent event_from_json_line(const std::string& line);

void write_events(std::ostream& os, const std::vector<RawEvent>& events);
std::vector<RawEvent> read_events(std::istream& is);
void write_events_file(const std::filesystem::path& path, const std::vector<RawEvent>& events);
std::vector<RawEvent> read_events_file(const std::filesystem::path& path);

/// Groups events by patient (ordered by patient_id), sorts each patient's
/// events by day (stable), and fills sex/birth_day from the SEX and
/// BIRTH_DAY demographic events, which stay in the event list.
/// Throws DataError if a patient lacks either demographic event.
std::vector<PatientRecord> assemble_records(std::vector<RawEvent> events);
/// Flattens records back into the event stream, record order preserved.
std::vector<RawEvent> flatten_records(const std::vector<PatientRecord>& records);

}  // namespace ehrcvd
