#include "ehrcvd/featurizer.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <limits>
#include <set>
#include <unordered_map>

#include "ehrcvd/errors.hpp"

namespace ehrcvd {

namespace {

constexpr double kMissing = std::numeric_limits<double>::quiet_NaN();

bool is_reserved_demographic(const std::string& code) {
  return code == kSexCode || code == kBirthDayCode;
}

bool is_count_modality(Modality m) {
  return m == Modality::medication || m == Modality::encounter;
}

bool is_indicator_modality(Modality m) {
  return m == Modality::diagnosis || m == Modality::procedure;
}

std::string slot_key(Modality m, const std::string& code) {
  return std::string(to_string(m)) + ":" + code;
}

double median_of(std::vector<double> v) {
  const std::size_t n = v.size();
  std::sort(v.begin(), v.end());
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

// Parses "A12" or "A12.3" into (letter, number, subcode or -1).
bool parse_icd_stem(const std::string& s, char& letter, int& number, int& sub) {
  if (s.size() != 3 && s.size() != 5) return false;
  if (!std::isalpha(static_cast<unsigned char>(s[0])) ||
      !std::isdigit(static_cast<unsigned char>(s[1])) ||
      !std::isdigit(static_cast<unsigned char>(s[2]))) {
    return false;
  }
  letter = s[0];
  number = (s[1] - '0') * 10 + (s[2] - '0');
  sub = -1;
  if (s.size() == 5) {
    if (s[3] != '.' || !std::isdigit(static_cast<unsigned char>(s[4]))) return false;
    sub = s[4] - '0';
  }
  return true;
}

// Precomputed column lookup for one vocabulary.
class DayEncoder {
 public:
  DayEncoder(const Vocabulary& vocab, const PhysiologicalRanges& ranges) : vocab_(vocab) {
    for (std::size_t i = 0; i < vocab.continuous_slots.size(); ++i) {
      const auto& s = vocab.continuous_slots[i];
      continuous_[slot_key(s.modality, s.code)] = i;
      continuous_ranges_.push_back(ranges.find(s.code));
    }
    for (std::size_t i = 0; i < vocab.count_slots.size(); ++i) {
      const auto& s = vocab.count_slots[i];
      counts_[slot_key(s.modality, s.code)] = vocab.count_offset() + i;
    }
    for (std::size_t i = 0; i < vocab.code_slots.size(); ++i) {
      const auto& s = vocab.code_slots[i];
      indicators_[slot_key(s.modality, s.code)] = vocab.code_offset() + i;
    }
  }

  PatientSequence encode(const PatientRecord& record, std::optional<std::int64_t> last_day,
                         std::optional<std::int64_t> only_day) const {
    const std::size_t nf = vocab_.n_features();
    const std::size_t n_cont = vocab_.continuous_slots.size();
    const std::size_t n_charlson = vocab_.charlson_slots.size();

    std::vector<std::int64_t> days;
    std::vector<std::vector<double>> rows;
    std::vector<std::uint8_t> comorbid(n_charlson, 0);
    std::vector<std::vector<double>> cont_values(n_cont);

    std::size_t i = 0;
    const auto& ev = record.events;
    while (i < ev.size()) {
      const std::int64_t day = ev[i].day;
      if (last_day && day > *last_day) break;
      std::size_t j = i;
      while (j < ev.size() && ev[j].day == day) ++j;

      for (auto& v : cont_values) v.clear();
      std::vector<double> row(nf, 0.0);
      for (std::size_t k = i; k < j; ++k) {
        const RawEvent& e = ev[k];
        const std::string code = normalize_code(e.code);
        const std::string key = slot_key(e.modality, code);
        if (is_continuous(e.modality)) {
          if (!e.value) continue;
          if (auto it = continuous_.find(key); it != continuous_.end()) {
            cont_values[it->second].push_back(*e.value);
          }
        } else if (is_count_modality(e.modality)) {
          if (auto it = counts_.find(key); it != counts_.end()) row[it->second] += 1.0;
        } else if (is_indicator_modality(e.modality)) {
          if (auto it = indicators_.find(key); it != indicators_.end()) row[it->second] = 1.0;
        }
        if (e.modality == Modality::diagnosis) {
          for (std::size_t c = 0; c < n_charlson; ++c) {
            if (comorbid[c]) continue;
            for (const auto& p : vocab_.charlson_slots[c].prefixes) {
              if (code_has_prefix(code, p)) {
                comorbid[c] = 1;
                break;
              }
            }
          }
        }
      }

      if (!only_day || *only_day == day) {
        row[0] = age_in_years(day, record.birth_day);
        row[1] = record.sex == Sex::male ? 1.0 : 0.0;
        for (std::size_t c = 0; c < n_cont; ++c) {
          const std::size_t col = vocab_.continuous_offset() + Vocabulary::kContinuousColumns * c;
          const auto summary = aggregate_continuous(cont_values[c], continuous_ranges_[c]);
          if (summary) {
            row[col] = summary->median;
            row[col + 1] = summary->mad;
            row[col + 2] = static_cast<double>(summary->count);
            row[col + 3] = summary->abnormal ? 1.0 : 0.0;
          } else {
            row[col] = kMissing;
            row[col + 1] = kMissing;
            row[col + 2] = 0.0;
            row[col + 3] = 0.0;
          }
        }
        for (std::size_t c = 0; c < n_charlson; ++c) {
          row[vocab_.charlson_offset() + c] = comorbid[c];
        }
        days.push_back(day);
        rows.push_back(std::move(row));
      }
      if (only_day && day >= *only_day) break;
      i = j;
    }

    PatientSequence seq;
    seq.patient_id = record.patient_id;
    seq.days = std::move(days);
    seq.matrix = Tensor2(rows.size(), nf);
    for (std::size_t r = 0; r < rows.size(); ++r) {
      std::copy(rows[r].begin(), rows[r].end(), seq.matrix.row(r).begin());
    }
    seq.mask.assign(rows.size(), 1);
    return seq;
  }

 private:
  const Vocabulary& vocab_;
  std::unordered_map<std::string, std::size_t> continuous_;
  std::vector<std::optional<PhysiologicalRange>> continuous_ranges_;
  std::unordered_map<std::string, std::size_t> counts_;
  std::unordered_map<std::string, std::size_t> indicators_;
};

}  // namespace

std::vector<std::string> expand_prefix_ranges(std::span<const std::string> items) {
  std::vector<std::string> out;
  for (const auto& raw : items) {
    const std::string item = normalize_code(raw);
    const auto dash = item.find('-');
    if (dash == std::string::npos) {
      out.push_back(item);
      continue;
    }
    const std::string a = item.substr(0, dash), b = item.substr(dash + 1);
    char la, lb;
    int na, nb, sa, sb;
    if (!parse_icd_stem(a, la, na, sa) || !parse_icd_stem(b, lb, nb, sb) || la != lb ||
        (sa < 0) != (sb < 0)) {
      throw ConfigError("unsupported code range '" + raw + "'");
    }
    char buf[32];
    if (sa < 0) {
      if (na > nb) throw ConfigError("empty code range '" + raw + "'");
      for (int n = na; n <= nb; ++n) {
        std::snprintf(buf, sizeof(buf), "%c%02d", la, n);
        out.emplace_back(buf);
      }
    } else {
      if (na != nb || sa > sb) throw ConfigError("unsupported code range '" + raw + "'");
      for (int s = sa; s <= sb; ++s) {
        std::snprintf(buf, sizeof(buf), "%c%02d.%d", la, na, s);
        out.emplace_back(buf);
      }
    }
  }
  return out;
}

std::vector<ComorbidityDefinition> default_charlson_definitions() {
  auto def = [](std::string name, std::vector<std::string> compact) {
    return ComorbidityDefinition{std::move(name), expand_prefix_ranges(compact)};
  };
  auto diabetes = [](std::vector<std::string> subs) {
    std::vector<std::string> out;
    for (const char* stem : {"E10", "E11", "E12", "E13", "E14"}) {
      for (const auto& s : subs) out.push_back(std::string(stem) + s);
    }
    return out;
  };
  return {
      def("myocardial_infarction", {"I21", "I22", "I25.2"}),
      def("congestive_heart_failure", {"I09.9", "I11.0", "I13.0", "I13.2", "I25.5", "I42.0",
                                       "I42.5-I42.9", "I43", "I50", "P29.0"}),
      def("peripheral_vascular_disease", {"I70", "I71", "I73.1", "I73.8", "I73.9", "I77.1",
                                          "I79.0", "I79.2", "K55.1", "K55.8", "K55.9",
                                          "Z95.8", "Z95.9"}),
      def("cerebrovascular_disease", {"G45", "G46", "H34.0", "I60-I69"}),
      def("dementia", {"F00-F03", "F05.1", "G30", "G31.1"}),
      def("chronic_pulmonary_disease", {"I27.8", "I27.9", "J40-J47", "J60-J67", "J68.4",
                                        "J70.1", "J70.3"}),
      def("rheumatic_disease", {"M05", "M06", "M31.5", "M32-M34", "M35.1", "M35.3", "M36.0"}),
      def("peptic_ulcer_disease", {"K25-K28"}),
      def("mild_liver_disease", {"B18", "K70.0-K70.3", "K70.9", "K71.3-K71.5", "K71.7", "K73",
                                 "K74", "K76.0", "K76.2-K76.4", "K76.8", "K76.9", "Z94.4"}),
      def("diabetes_without_complication", diabetes({".0", ".1", ".6", ".8", ".9"})),
      def("diabetes_with_complication", diabetes({".2", ".3", ".4", ".5", ".7"})),
      def("hemiplegia_or_paraplegia", {"G04.1", "G11.4", "G80.1", "G80.2", "G81", "G82",
                                       "G83.0-G83.4", "G83.9"}),
      def("renal_disease", {"I12.0", "I13.1", "N03.2-N03.7", "N05.2-N05.7", "N18", "N19",
                            "N25.0", "Z49.0-Z49.2", "Z94.0", "Z99.2"}),
      def("malignancy", {"C00-C26", "C30-C34", "C37-C41", "C43", "C45-C58", "C60-C76",
                         "C81-C85", "C88", "C90-C97"}),
      def("severe_liver_disease", {"I85.0", "I85.9", "I86.4", "I98.2", "K70.4", "K71.1",
                                   "K72.1", "K72.9", "K76.5", "K76.6", "K76.7"}),
      def("metastatic_solid_tumour", {"C77-C80"}),
      def("hiv_aids", {"B20-B22", "B24"}),
  };
}

void Vocabulary::rebuild_feature_names() {
  feature_names.clear();
  feature_names.emplace_back("age");
  feature_names.emplace_back("sex");
  for (const auto& s : continuous_slots) {
    const std::string base = slot_key(s.modality, s.code);
    for (const char* suffix : {":median", ":mad", ":count", ":abnormal"}) {
      feature_names.push_back(base + suffix);
    }
  }
  for (const auto& s : count_slots) feature_names.push_back(slot_key(s.modality, s.code));
  for (const auto& s : code_slots) feature_names.push_back(slot_key(s.modality, s.code));
  for (const auto& c : charlson_slots) feature_names.push_back("charlson:" + c.name);
}

std::size_t Vocabulary::feature_index(const std::string& name) const {
  const auto it = std::find(feature_names.begin(), feature_names.end(), name);
  if (it == feature_names.end()) throw DataError("unknown feature '" + name + "'");
  return static_cast<std::size_t>(it - feature_names.begin());
}

Vocabulary build_vocabulary(std::span<const PatientRecord> records,
                            const VocabularyOptions& options) {
  if (records.empty()) throw DataError("build_vocabulary: no records");
  // Patient-level occurrence counts per (modality, code).
  std::map<std::pair<Modality, std::string>, std::size_t> patients_with;
  std::vector<std::size_t> comorbid_count(options.comorbidities.size(), 0);
  for (const auto& rec : records) {
    std::set<std::pair<Modality, std::string>> seen;
    std::vector<std::uint8_t> has(options.comorbidities.size(), 0);
    for (const auto& e : rec.events) {
      const std::string code = normalize_code(e.code);
      if (e.modality == Modality::demographic && is_reserved_demographic(code)) continue;
      if (is_continuous(e.modality) && !e.value) continue;
      seen.emplace(e.modality, code);
      if (e.modality == Modality::diagnosis) {
        for (std::size_t c = 0; c < options.comorbidities.size(); ++c) {
          if (has[c]) continue;
          for (const auto& p : options.comorbidities[c].prefixes) {
            if (code_has_prefix(code, p)) {
              has[c] = 1;
              break;
            }
          }
        }
      }
    }
    for (const auto& key : seen) ++patients_with[key];
    for (std::size_t c = 0; c < has.size(); ++c) comorbid_count[c] += has[c];
  }

  const double n = static_cast<double>(records.size());
  auto prevalent = [&](std::size_t count) {
    // Inclusive boundary; the small slack absorbs rounding of count/n.
    return static_cast<double>(count) / n >= options.min_prevalence - 1e-12;
  };

  Vocabulary vocab;
  struct Ranked {
    CodeSlot slot;
    std::size_t count;
  };
  std::vector<Ranked> coded;
  for (const auto& [key, count] : patients_with) {
    if (count == 0 || !prevalent(count)) continue;
    const CodeSlot slot{key.first, key.second};
    if (is_continuous(key.first)) {
      vocab.continuous_slots.push_back(slot);
    } else if (is_count_modality(key.first)) {
      vocab.count_slots.push_back(slot);
    } else {
      coded.push_back({slot, count});
    }
  }
  std::sort(coded.begin(), coded.end(), [](const Ranked& a, const Ranked& b) {
    if (a.count != b.count) return a.count > b.count;
    if (a.slot.code != b.slot.code) return a.slot.code < b.slot.code;
    return a.slot.modality < b.slot.modality;
  });
  if (coded.size() > options.top_k) coded.resize(options.top_k);
  for (auto& r : coded) vocab.code_slots.push_back(std::move(r.slot));

  for (std::size_t c = 0; c < options.comorbidities.size(); ++c) {
    if (comorbid_count[c] > 0 && prevalent(comorbid_count[c])) {
      vocab.charlson_slots.push_back(options.comorbidities[c]);
    }
  }
  vocab.rebuild_feature_names();
  return vocab;
}

PhysiologicalRanges PhysiologicalRanges::defaults() {
  PhysiologicalRanges r;
  r.ranges = {
      {"SBP", {90.0, 180.0}},         {"DBP", {50.0, 110.0}},
      {"HEART_RATE", {40.0, 130.0}},  {"RESP_RATE", {8.0, 25.0}},
      {"TEMPERATURE", {35.0, 38.5}},  {"SPO2", {90.0, 100.0}},
      {"ALBUMIN", {35.0, 50.0}},      {"CREATININE", {45.0, 120.0}},
      {"CHOLESTEROL", {2.5, 7.5}},    {"HBA1C", {20.0, 48.0}},
      {"GLUCOSE", {3.0, 11.0}},       {"HAEMOGLOBIN", {110.0, 180.0}},
      {"SODIUM", {133.0, 146.0}},     {"POTASSIUM", {3.5, 5.3}},
      {"CRP", {0.0, 10.0}},           {"BMI", {15.0, 40.0}},
  };
  return r;
}

std::optional<PhysiologicalRange> PhysiologicalRanges::find(const std::string& code) const {
  const auto it = ranges.find(normalize_code(code));
  if (it == ranges.end()) return std::nullopt;
  return it->second;
}

void PhysiologicalRanges::validate() const {
  for (const auto& [name, r] : ranges) {
    if (!(r.low < r.high)) {
      throw ConfigError("physiological range for " + name + " must satisfy low < high");
    }
  }
}

std::optional<ContinuousSummary> aggregate_continuous(std::span<const double> values,
                                                      std::optional<PhysiologicalRange> range) {
  if (values.empty()) return std::nullopt;
  ContinuousSummary s;
  s.count = values.size();
  s.median = median_of({values.begin(), values.end()});
  std::vector<double> dev;
  dev.reserve(values.size());
  for (double v : values) dev.push_back(std::abs(v - s.median));
  s.mad = median_of(std::move(dev));
  if (range) {
    s.abnormal = std::any_of(values.begin(), values.end(),
                             [&](double v) { return v < range->low || v > range->high; });
  }
  return s;
}

std::vector<double> encode_day(const PatientRecord& record, std::int64_t day,
                               const Vocabulary& vocab, const PhysiologicalRanges& ranges) {
  const bool observed = std::any_of(record.events.begin(), record.events.end(),
                                    [&](const RawEvent& e) { return e.day == day; });
  if (!observed) {
    throw DataError("not an observation day: patient " + record.patient_id + " day " +
                    std::to_string(day));
  }
  const PatientSequence seq = DayEncoder(vocab, ranges).encode(record, day, day);
  const auto row = seq.matrix.row(0);
  return {row.begin(), row.end()};
}

PatientSequence encode_record(const PatientRecord& record, const Vocabulary& vocab,
                              const PhysiologicalRanges& ranges,
                              std::optional<std::int64_t> last_day) {
  return DayEncoder(vocab, ranges).encode(record, last_day, std::nullopt);
}

PatientRecord truncate_record(const PatientRecord& record, std::int64_t last_day) {
  PatientRecord out{record.patient_id, record.sex, record.birth_day, {}};
  for (const auto& e : record.events) {
    if (e.day <= last_day) out.events.push_back(e);
  }
  return out;
}

ScalerImputer fit_scaler_imputer(std::span<const PatientSequence> train_sequences) {
  if (train_sequences.empty()) throw DataError("fit_scaler_imputer: no training sequences");
  const std::size_t nf = train_sequences.front().n_features();
  std::vector<double> lo(nf, std::numeric_limits<double>::infinity());
  std::vector<double> hi(nf, -std::numeric_limits<double>::infinity());
  std::vector<double> sum(nf, 0.0);
  std::vector<std::size_t> count(nf, 0);
  for (const auto& seq : train_sequences) {
    if (seq.n_features() != nf) throw DataError("fit_scaler_imputer: feature count mismatch");
    for (std::size_t r = 0; r < seq.n_days(); ++r) {
      if (!seq.mask[r]) continue;
      const auto row = seq.matrix.row(r);
      for (std::size_t f = 0; f < nf; ++f) {
        const double v = row[f];
        if (std::isnan(v)) continue;
        lo[f] = std::min(lo[f], v);
        hi[f] = std::max(hi[f], v);
        sum[f] += v;
        ++count[f];
      }
    }
  }
  ScalerImputer si;
  si.min.resize(nf);
  si.max.resize(nf);
  si.mean.resize(nf);
  for (std::size_t f = 0; f < nf; ++f) {
    if (count[f] == 0) {
      si.min[f] = 0.0;
      si.max[f] = 1.0;
      si.mean[f] = 0.0;
    } else {
      si.min[f] = lo[f];
      si.max[f] = hi[f];
      si.mean[f] = std::clamp(sum[f] / static_cast<double>(count[f]), lo[f], hi[f]);
    }
  }
  si.fitted = true;
  return si;
}

PatientSequence transform(const PatientSequence& sequence, const ScalerImputer& si,
                          std::size_t n_days_pad) {
  if (!si.fitted) throw DataError("transform: scaler/imputer is not fitted");
  const std::size_t nf = si.n_features();
  if (sequence.n_features() != nf) {
    throw DataError("transform: sequence has " + std::to_string(sequence.n_features()) +
                    " features, scaler expects " + std::to_string(nf));
  }
  // Real rows, most recent last.
  std::vector<std::size_t> real;
  for (std::size_t r = 0; r < sequence.n_days(); ++r) {
    if (sequence.mask[r]) real.push_back(r);
  }
  const std::size_t keep = std::min(real.size(), n_days_pad);
  const std::size_t first = real.size() - keep;
  const std::size_t pad = n_days_pad - keep;

  PatientSequence out;
  out.patient_id = sequence.patient_id;
  out.days.assign(n_days_pad, kPaddingDay);
  out.mask.assign(n_days_pad, 0);
  out.matrix = Tensor2(n_days_pad, nf, 0.0);
  for (std::size_t k = 0; k < keep; ++k) {
    const std::size_t src = real[first + k];
    const std::size_t dst = pad + k;
    out.days[dst] = sequence.days[src];
    out.mask[dst] = 1;
    const auto in = sequence.matrix.row(src);
    auto o = out.matrix.row(dst);
    for (std::size_t f = 0; f < nf; ++f) {
      double v = std::isnan(in[f]) ? si.mean[f] : in[f];
      const double range = si.max[f] - si.min[f];
      v = range > 0.0 ? (v - si.min[f]) / range : 0.0;
      o[f] = std::clamp(v, 0.0, 1.0);
    }
  }
  return out;
}

// ---- persistence ----

using nlohmann::json;

namespace {

void check_kind(const json& j, const char* kind, int version) {
  if (!j.is_object() || j.value("kind", "") != kind) {
    throw DataError(std::string("expected a '") + kind + "' document");
  }
  if (j.value("schema_version", -1) != version) {
    throw DataError(std::string("unsupported schema_version for ") + kind);
  }
}

json slots_to_json(const std::vector<CodeSlot>& slots) {
  json arr = json::array();
  for (const auto& s : slots) arr.push_back({{"modality", to_string(s.modality)}, {"code", s.code}});
  return arr;
}

std::vector<CodeSlot> slots_from_json(const json& arr) {
  std::vector<CodeSlot> out;
  for (const auto& s : arr) {
    out.push_back({parse_modality(s.at("modality").get<std::string>()),
                   s.at("code").get<std::string>()});
  }
  return out;
}

}  // namespace

json comorbidities_to_json(const std::vector<ComorbidityDefinition>& defs) {
  json arr = json::array();
  for (const auto& d : defs) arr.push_back({{"name", d.name}, {"prefixes", d.prefixes}});
  return arr;
}

std::vector<ComorbidityDefinition> comorbidities_from_json(const json& j) {
  const json& arr = j.is_object() ? j.at("conditions") : j;
  std::vector<ComorbidityDefinition> out;
  for (const auto& d : arr) {
    const auto compact = d.at("prefixes").get<std::vector<std::string>>();
    out.push_back({d.at("name").get<std::string>(), expand_prefix_ranges(compact)});
  }
  return out;
}

json to_json(const Vocabulary& vocab) {
  return {{"kind", "vocabulary"},
          {"schema_version", Vocabulary::kSchemaVersion},
          {"continuous_slots", slots_to_json(vocab.continuous_slots)},
          {"count_slots", slots_to_json(vocab.count_slots)},
          {"code_slots", slots_to_json(vocab.code_slots)},
          {"charlson_slots", comorbidities_to_json(vocab.charlson_slots)},
          {"feature_names", vocab.feature_names}};
}

Vocabulary vocabulary_from_json(const json& j) {
  check_kind(j, "vocabulary", Vocabulary::kSchemaVersion);
  Vocabulary v;
  v.continuous_slots = slots_from_json(j.at("continuous_slots"));
  v.count_slots = slots_from_json(j.at("count_slots"));
  v.code_slots = slots_from_json(j.at("code_slots"));
  v.charlson_slots = comorbidities_from_json(j.at("charlson_slots"));
  v.rebuild_feature_names();
  if (v.feature_names != j.at("feature_names").get<std::vector<std::string>>()) {
    throw DataError("vocabulary feature_names inconsistent with its slots");
  }
  return v;
}

json to_json(const PhysiologicalRanges& ranges) {
  json r = json::object();
  for (const auto& [name, range] : ranges.ranges) r[name] = {range.low, range.high};
  return {{"kind", "physiological_ranges"},
          {"schema_version", PhysiologicalRanges::kSchemaVersion},
          {"ranges", r}};
}

PhysiologicalRanges ranges_from_json(const json& j) {
  check_kind(j, "physiological_ranges", PhysiologicalRanges::kSchemaVersion);
  PhysiologicalRanges out;
  for (const auto& [name, pair] : j.at("ranges").items()) {
    out.ranges[normalize_code(name)] = {pair.at(0).get<double>(), pair.at(1).get<double>()};
  }
  out.validate();
  return out;
}

json to_json(const ScalerImputer& si) {
  return {{"kind", "scaler_imputer"},
          {"schema_version", ScalerImputer::kSchemaVersion},
          {"fitted", si.fitted},
          {"min", si.min},
          {"max", si.max},
          {"mean", si.mean}};
}

ScalerImputer scaler_from_json(const json& j) {
  check_kind(j, "scaler_imputer", ScalerImputer::kSchemaVersion);
  ScalerImputer si;
  si.fitted = j.at("fitted").get<bool>();
  si.min = j.at("min").get<std::vector<double>>();
  si.max = j.at("max").get<std::vector<double>>();
  si.mean = j.at("mean").get<std::vector<double>>();
  if (si.min.size() != si.mean.size() || si.max.size() != si.mean.size()) {
    throw DataError("scaler_imputer arrays differ in length");
  }
  return si;
}

}  // namespace ehrcvd
