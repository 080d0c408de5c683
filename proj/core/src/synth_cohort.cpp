#include "ehrcvd/synth_cohort.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <set>

#include <spdlog/fmt/fmt.h>

#include "ehrcvd/errors.hpp"
#include "ehrcvd/metrics.hpp"
#include "ehrcvd/num_engine.hpp"
#include "ehrcvd/rng.hpp"

namespace ehrcvd {

GeneratorConfig GeneratorConfig::defaults() {
  GeneratorConfig c;
  c.channels = {
      {"SBP", Modality::vital, 135.0, 15.0, 22.0, 90.0, 180.0, 0.5},
      {"HEART_RATE", Modality::vital, 75.0, 8.0, 10.0, 40.0, 130.0, 0.5},
      {"TEMPERATURE", Modality::vital, 36.8, 0.2, 0.4, 35.0, 38.5, 0.4},
      {"BMI", Modality::vital, 27.0, 4.0, 0.8, 15.0, 40.0, 0.15},
      {"ALBUMIN", Modality::lab, 41.0, 3.0, 2.5, 35.0, 50.0, 0.3},
      {"CREATININE", Modality::lab, 85.0, 15.0, 12.0, 45.0, 120.0, 0.3},
      {"SODIUM", Modality::lab, 139.0, 2.0, 2.5, 133.0, 146.0, 0.3},
  };
  c.diagnosis_codes = {"I10",   "J45.9", "M54.5", "K21.9", "F32.9",
                       "N39.0", "J18.9", "R07.4", "L40.0", "M17.1"};
  c.procedure_codes = {"X40.1", "U05.1", "E85.1", "K40.1", "W37.1"};
  c.medication_codes = {"0205051R0", "0212000B0", "0209000A0", "0601023A0", "0103050P0"};
  c.encounter_codes = {"OUTPATIENT", "INPATIENT", "EMERGENCY"};
  return c;
}

namespace {

constexpr std::array<const char*, 5> kDiabetesCodes = {"E11.0", "E11.1", "E11.6", "E11.8", "E11.9"};
constexpr std::array<const char*, 4> kHeartFailureCodes = {"I50.0", "I50.1", "I50.9", "I50.2"};
// Background codes must not collide with outcome or planted comorbidity codes.
constexpr std::array<const char*, 10> kReservedPrefixes = {"E10", "E11", "E12", "E13", "E14",
                                                           "I50", "I2",  "I6",  "G45", "G46"};

const ChannelSpec* find_channel(const std::vector<ChannelSpec>& channels, const std::string& code) {
  for (const auto& c : channels) {
    if (c.code == code) return &c;
  }
  return nullptr;
}

}  // namespace

void GeneratorConfig::validate() const {
  if (n_patients == 0) throw ConfigError("generator: n_patients must be >= 1");
  if (study_days <= 0) throw ConfigError("generator: study_days must be positive");
  if (index_day_min < 0 || index_day_min > index_day_max || index_day_max >= study_days) {
    throw ConfigError("generator: need 0 <= index_day_min <= index_day_max < study_days");
  }
  if (history_days < 0) throw ConfigError("generator: history_days must be >= 0");
  if (!(mean_observation_days > 0.0)) throw ConfigError("generator: mean_observation_days must be > 0");
  if (!(observation_rate_log_sd >= 0.0 && std::isfinite(observation_rate_log_sd))) {
    throw ConfigError("generator: observation_rate_log_sd must be finite and >= 0");
  }
  if (channels.empty()) throw ConfigError("generator: no continuous channels");
  for (const auto& c : channels) {
    if (c.code.empty()) throw ConfigError("generator: channel with empty code");
    if (c.modality != Modality::lab && c.modality != Modality::vital) {
      throw ConfigError("generator: channel " + c.code + " must be a lab or vital");
    }
    if (!(c.low < c.high)) throw ConfigError("generator: channel " + c.code + " needs low < high");
    if (!(c.between_sd >= 0.0 && c.within_sd >= 0.0) || !std::isfinite(c.mean)) {
      throw ConfigError("generator: channel " + c.code + " has invalid moments");
    }
    if (!(c.measure_probability >= 0.0 && c.measure_probability <= 1.0)) {
      throw ConfigError("generator: channel " + c.code + " measure_probability outside [0,1]");
    }
  }
  if (!find_channel(channels, blood_pressure_channel)) {
    throw ConfigError("generator: blood_pressure_channel " + blood_pressure_channel + " is not a channel");
  }
  if (!find_channel(channels, noise_channel)) {
    throw ConfigError("generator: noise_channel " + noise_channel + " is not a channel");
  }
  if (noise_channel == blood_pressure_channel) {
    throw ConfigError("generator: the noise channel cannot carry the planted blood-pressure effect");
  }
  if (!(abnormal_fraction >= 0.0 && abnormal_fraction < 1.0)) {
    throw ConfigError("generator: abnormal_fraction outside [0,1)");
  }
  for (double p : {diabetes_prevalence, heart_failure_prevalence}) {
    if (!(p >= 0.0 && p <= 1.0)) throw ConfigError("generator: prevalence outside [0,1]");
  }
  for (double r : {diagnosis_rate, procedure_rate, medication_rate}) {
    if (!(r >= 0.0) || !std::isfinite(r)) throw ConfigError("generator: code rates must be >= 0");
  }
  if (encounter_codes.empty()) throw ConfigError("generator: encounter_codes must not be empty");
  for (const auto& code : diagnosis_codes) {
    for (const char* p : kReservedPrefixes) {
      if (code_has_prefix(normalize_code(code), p)) {
        throw ConfigError("generator: background diagnosis " + code + " collides with reserved prefix " + p);
      }
    }
  }
  const auto& h = hazard;
  for (double b : {h.age, h.blood_pressure, h.diabetes, h.heart_failure}) {
    if (!std::isfinite(b)) throw ConfigError("generator: hazard coefficients must be finite");
  }
  if (h.phase_logits.size() != h.phase_ends.size() + 1) {
    throw ConfigError("generator: need one more phase logit than phase ends");
  }
  for (std::size_t i = 0; i < h.phase_ends.size(); ++i) {
    if (h.phase_ends[i] < kMinLeadDays || (i > 0 && h.phase_ends[i] <= h.phase_ends[i - 1])) {
      throw ConfigError("generator: phase_ends must increase and start at >= 14 days");
    }
  }
  for (double l : h.phase_logits) {
    if (!std::isfinite(l)) throw ConfigError("generator: phase logits must be finite");
  }
  horizons.validate();
}

// ---- JSON ----

namespace {

nlohmann::json horizons_json(const HorizonSet& h) {
  nlohmann::json out = nlohmann::json::array();
  for (std::size_t i = 0; i < h.size(); ++i) {
    out.push_back(h.unbounded(i) ? nlohmann::json(nullptr) : nlohmann::json(h.days[i]));
  }
  return out;
}

HorizonSet horizons_from(const nlohmann::json& j) {
  HorizonSet h;
  for (const auto& d : j) h.days.push_back(d.is_null() ? kUnboundedHorizon : d.get<std::int64_t>());
  h.validate();
  return h;
}

}  // namespace

nlohmann::json to_json(const GeneratorConfig& c) {
  nlohmann::json channels = nlohmann::json::array();
  for (const auto& ch : c.channels) {
    channels.push_back({{"code", ch.code},
                        {"modality", to_string(ch.modality)},
                        {"mean", ch.mean},
                        {"between_sd", ch.between_sd},
                        {"within_sd", ch.within_sd},
                        {"low", ch.low},
                        {"high", ch.high},
                        {"measure_probability", ch.measure_probability}});
  }
  return {{"kind", "generator_config"},
          {"schema_version", GeneratorConfig::kSchemaVersion},
          {"n_patients", c.n_patients},
          {"seed", c.seed},
          {"disease", to_string(c.disease)},
          {"study_days", c.study_days},
          {"index_day_min", c.index_day_min},
          {"index_day_max", c.index_day_max},
          {"history_days", c.history_days},
          {"mean_observation_days", c.mean_observation_days},
          {"observation_rate_log_sd", c.observation_rate_log_sd},
          {"channels", std::move(channels)},
          {"blood_pressure_channel", c.blood_pressure_channel},
          {"noise_channel", c.noise_channel},
          {"abnormal_fraction", c.abnormal_fraction},
          {"diabetes_prevalence", c.diabetes_prevalence},
          {"heart_failure_prevalence", c.heart_failure_prevalence},
          {"diagnosis_codes", c.diagnosis_codes},
          {"procedure_codes", c.procedure_codes},
          {"medication_codes", c.medication_codes},
          {"encounter_codes", c.encounter_codes},
          {"diagnosis_rate", c.diagnosis_rate},
          {"procedure_rate", c.procedure_rate},
          {"medication_rate", c.medication_rate},
          {"hazard",
           {{"age", c.hazard.age},
            {"blood_pressure", c.hazard.blood_pressure},
            {"diabetes", c.hazard.diabetes},
            {"heart_failure", c.hazard.heart_failure},
            {"phase_ends", c.hazard.phase_ends},
            {"phase_logits", c.hazard.phase_logits}}},
          {"horizons", horizons_json(c.horizons)}};
}

GeneratorConfig generator_config_from_json(const nlohmann::json& j) {
  if (j.value("kind", "") != "generator_config" ||
      j.value("schema_version", -1) != GeneratorConfig::kSchemaVersion) {
    throw ConfigError("expected a generator_config document with schema_version 1");
  }
  GeneratorConfig c = GeneratorConfig::defaults();
  try {
    c.n_patients = j.value("n_patients", c.n_patients);
    c.seed = j.value("seed", c.seed);
    if (j.contains("disease")) c.disease = parse_disease(j.at("disease").get<std::string>());
    c.study_days = j.value("study_days", c.study_days);
    c.index_day_min = j.value("index_day_min", c.index_day_min);
    c.index_day_max = j.value("index_day_max", c.index_day_max);
    c.history_days = j.value("history_days", c.history_days);
    c.mean_observation_days = j.value("mean_observation_days", c.mean_observation_days);
    c.observation_rate_log_sd = j.value("observation_rate_log_sd", c.observation_rate_log_sd);
    if (j.contains("channels")) {
      c.channels.clear();
      for (const auto& ch : j.at("channels")) {
        ChannelSpec s;
        s.code = normalize_code(ch.at("code").get<std::string>());
        s.modality = parse_modality(ch.at("modality").get<std::string>());
        s.mean = ch.at("mean").get<double>();
        s.between_sd = ch.at("between_sd").get<double>();
        s.within_sd = ch.at("within_sd").get<double>();
        s.low = ch.at("low").get<double>();
        s.high = ch.at("high").get<double>();
        s.measure_probability = ch.value("measure_probability", 0.5);
        c.channels.push_back(std::move(s));
      }
    }
    c.blood_pressure_channel = j.value("blood_pressure_channel", c.blood_pressure_channel);
    c.noise_channel = j.value("noise_channel", c.noise_channel);
    c.abnormal_fraction = j.value("abnormal_fraction", c.abnormal_fraction);
    c.diabetes_prevalence = j.value("diabetes_prevalence", c.diabetes_prevalence);
    c.heart_failure_prevalence = j.value("heart_failure_prevalence", c.heart_failure_prevalence);
    c.diagnosis_codes = j.value("diagnosis_codes", c.diagnosis_codes);
    c.procedure_codes = j.value("procedure_codes", c.procedure_codes);
    c.medication_codes = j.value("medication_codes", c.medication_codes);
    c.encounter_codes = j.value("encounter_codes", c.encounter_codes);
    c.diagnosis_rate = j.value("diagnosis_rate", c.diagnosis_rate);
    c.procedure_rate = j.value("procedure_rate", c.procedure_rate);
    c.medication_rate = j.value("medication_rate", c.medication_rate);
    if (j.contains("hazard")) {
      const auto& h = j.at("hazard");
      c.hazard.age = h.value("age", c.hazard.age);
      c.hazard.blood_pressure = h.value("blood_pressure", c.hazard.blood_pressure);
      c.hazard.diabetes = h.value("diabetes", c.hazard.diabetes);
      c.hazard.heart_failure = h.value("heart_failure", c.hazard.heart_failure);
      c.hazard.phase_ends = h.value("phase_ends", c.hazard.phase_ends);
      c.hazard.phase_logits = h.value("phase_logits", c.hazard.phase_logits);
    }
    if (j.contains("horizons")) c.horizons = horizons_from(j.at("horizons"));
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("invalid generator config: ") + e.what());
  }
  c.validate();
  return c;
}

std::map<std::string, std::vector<double>> GroundTruth::risk_map() const {
  std::map<std::string, std::vector<double>> out;
  for (const auto& p : patients) out[p.patient_id] = p.risks;
  return out;
}

nlohmann::json to_json(const GroundTruth& truth) {
  nlohmann::json patients = nlohmann::json::array();
  for (const auto& p : truth.patients) {
    patients.push_back({{"patient_id", p.patient_id},
                        {"index_day", p.index_day},
                        {"followup_days", p.followup_days},
                        {"linear_predictor", p.linear_predictor},
                        {"risks", p.risks},
                        {"event_day", p.event_day ? nlohmann::json(*p.event_day) : nlohmann::json(nullptr)},
                        {"realized", p.realized}});
  }
  return {{"kind", "ground_truth"},
          {"schema_version", GroundTruth::kSchemaVersion},
          {"horizons", horizons_json(truth.horizons)},
          {"patients", std::move(patients)}};
}

GroundTruth ground_truth_from_json(const nlohmann::json& j) {
  if (j.value("kind", "") != "ground_truth" ||
      j.value("schema_version", -1) != GroundTruth::kSchemaVersion) {
    throw DataError("expected a ground_truth document with schema_version 1");
  }
  GroundTruth t;
  try {
    t.horizons = horizons_from(j.at("horizons"));
    for (const auto& p : j.at("patients")) {
      PatientTruth pt;
      pt.patient_id = p.at("patient_id").get<std::string>();
      pt.index_day = p.at("index_day").get<std::int64_t>();
      pt.followup_days = p.at("followup_days").get<std::int64_t>();
      pt.linear_predictor = p.at("linear_predictor").get<double>();
      pt.risks = p.at("risks").get<std::vector<double>>();
      if (!p.at("event_day").is_null()) pt.event_day = p.at("event_day").get<std::int64_t>();
      pt.realized = p.at("realized").get<std::vector<std::uint8_t>>();
      t.patients.push_back(std::move(pt));
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("invalid ground truth: ") + e.what());
  }
  return t;
}

// ---- sampling ----

namespace {

double phase_probability(const PlantedHazard& h, double eta, std::size_t phase) {
  return sigmoid(h.phase_logits[phase] + eta);
}

std::size_t phase_of(const PlantedHazard& h, std::int64_t lead_day) {
  std::size_t k = 0;
  while (k < h.phase_ends.size() && lead_day > h.phase_ends[k]) ++k;
  return k;
}

double round_to(double v, double step) { return std::round(v / step) * step; }

double sample_value(const ChannelSpec& c, double baseline, double abnormal_fraction, Rng& rng) {
  const double width = c.high - c.low;
  if (rng.bernoulli(abnormal_fraction)) {
    const double excess = rng.uniform(0.01, 0.2) * width;
    return round_to(rng.bernoulli(0.5) ? c.low - excess : c.high + excess, 0.1);
  }
  const double v = std::clamp(baseline + rng.normal(0.0, c.within_sd), c.low, c.high);
  return std::clamp(round_to(v, 0.1), c.low, c.high);
}

// Zipf-weighted pick so code prevalences spread out.
const std::string& pick(const std::vector<std::string>& menu, Rng& rng) {
  double total = 0.0;
  for (std::size_t k = 0; k < menu.size(); ++k) total += 1.0 / static_cast<double>(k + 1);
  double u = rng.uniform() * total;
  for (std::size_t k = 0; k < menu.size(); ++k) {
    u -= 1.0 / static_cast<double>(k + 1);
    if (u < 0.0) return menu[k];
  }
  return menu.back();
}

std::vector<std::int64_t> observation_days(std::int64_t last_day, std::int64_t history,
                                           double mean_days, Rng& rng) {
  const std::int64_t start = std::max<std::int64_t>(0, last_day - history);
  const std::int64_t window = last_day - start;  // candidate days before last_day
  const std::int64_t wanted =
      std::min<std::int64_t>(std::max<std::int64_t>(rng.poisson(mean_days), 1) - 1, window);
  // Floyd's sampling of `wanted` distinct offsets from [0, window).
  std::set<std::int64_t> chosen;
  for (std::int64_t j = window - wanted; j < window; ++j) {
    const std::int64_t t = rng.integer(0, j);
    if (!chosen.insert(t).second) chosen.insert(j);
  }
  std::vector<std::int64_t> days;
  for (std::int64_t off : chosen) days.push_back(start + off);
  days.push_back(last_day);
  return days;
}

}  // namespace

double planted_risk(const PlantedHazard& hazard, double eta, std::int64_t horizon_days,
                    std::int64_t followup_days) {
  const std::int64_t end = std::min(horizon_days, followup_days);
  double log_survival = 0.0;
  std::int64_t from = kMinLeadDays;
  for (std::size_t k = 0; k < hazard.phase_logits.size() && from <= end; ++k) {
    const std::int64_t to = k < hazard.phase_ends.size() ? std::min(hazard.phase_ends[k], end) : end;
    if (to >= from) {
      log_survival += static_cast<double>(to - from + 1) * std::log1p(-phase_probability(hazard, eta, k));
    }
    if (k < hazard.phase_ends.size()) from = std::max(from, hazard.phase_ends[k] + 1);
  }
  return -std::expm1(log_survival);
}

GeneratedCohort generate(const GeneratorConfig& config) {
  config.validate();
  const auto* bp = find_channel(config.channels, config.blood_pressure_channel);
  const auto& h = config.hazard;
  const char* outcome_prefix = config.disease == Disease::mi ? "I21" : "I63";

  GeneratedCohort out;
  out.truth.horizons = config.horizons;
  out.records.reserve(config.n_patients);
  out.truth.patients.reserve(config.n_patients);
  const int width = static_cast<int>(std::to_string(config.n_patients).size());

  for (std::size_t i = 0; i < config.n_patients; ++i) {
    Rng rng(derive_seed(config.seed, i));
    PatientRecord rec;
    rec.patient_id = fmt::format("P{:0{}}", i + 1, width);
    const std::int64_t last = rng.integer(config.index_day_min, config.index_day_max);
    const double sd = config.observation_rate_log_sd;
    const double rate =
        sd > 0.0 ? config.mean_observation_days * std::exp(sd * rng.normal(0.0, 1.0) - 0.5 * sd * sd)
                 : config.mean_observation_days;
    const auto days = observation_days(last, config.history_days, rate, rng);
    rec.sex = rng.bernoulli(0.5) ? Sex::male : Sex::female;
    const double age = rng.uniform(40.0, 90.0);
    rec.birth_day = last - static_cast<std::int64_t>(std::llround(age * 365.25));

    std::vector<double> baselines;
    for (const auto& c : config.channels) baselines.push_back(rng.normal(c.mean, c.between_sd));
    const double bp_baseline = baselines[static_cast<std::size_t>(bp - config.channels.data())];
    const bool diabetes = rng.bernoulli(config.diabetes_prevalence);
    const bool heart_failure = rng.bernoulli(config.heart_failure_prevalence);
    const auto n_days = days.size();
    const std::size_t diabetes_from = rng.below(n_days);
    const std::size_t heart_failure_from = rng.below(n_days);

    const double eta = h.age * (age - 65.0) / 10.0 + h.blood_pressure * (bp_baseline - bp->mean) / 20.0 +
                       (diabetes ? h.diabetes : 0.0) + (heart_failure ? h.heart_failure : 0.0);

    const auto emit = [&](std::int64_t day, Modality m, std::string code, std::optional<double> v) {
      rec.events.push_back({rec.patient_id, day, m, std::move(code), v});
    };
    for (std::size_t d = 0; d < n_days; ++d) {
      const std::int64_t day = days[d];
      if (d == 0) {
        emit(day, Modality::demographic, std::string(kSexCode), rec.sex == Sex::male ? 1.0 : 0.0);
        emit(day, Modality::demographic, std::string(kBirthDayCode), static_cast<double>(rec.birth_day));
      }
      emit(day, Modality::encounter, pick(config.encounter_codes, rng), std::nullopt);
      for (std::size_t c = 0; c < config.channels.size(); ++c) {
        const auto& ch = config.channels[c];
        if (!rng.bernoulli(ch.measure_probability)) continue;
        emit(day, ch.modality, ch.code, sample_value(ch, baselines[c], config.abnormal_fraction, rng));
      }
      if (diabetes && (d == diabetes_from || (d > diabetes_from && rng.bernoulli(0.15)))) {
        emit(day, Modality::diagnosis, kDiabetesCodes[rng.below(kDiabetesCodes.size())], std::nullopt);
      }
      if (heart_failure && (d == heart_failure_from || (d > heart_failure_from && rng.bernoulli(0.15)))) {
        emit(day, Modality::diagnosis, kHeartFailureCodes[rng.below(kHeartFailureCodes.size())],
             std::nullopt);
      }
      if (!config.diagnosis_codes.empty()) {
        for (std::int64_t k = rng.poisson(config.diagnosis_rate); k > 0; --k) {
          emit(day, Modality::diagnosis, pick(config.diagnosis_codes, rng), std::nullopt);
        }
      }
      if (!config.procedure_codes.empty()) {
        for (std::int64_t k = rng.poisson(config.procedure_rate); k > 0; --k) {
          emit(day, Modality::procedure, pick(config.procedure_codes, rng), std::nullopt);
        }
      }
      if (!config.medication_codes.empty()) {
        for (std::int64_t k = rng.poisson(config.medication_rate); k > 0; --k) {
          emit(day, Modality::medication, pick(config.medication_codes, rng), std::nullopt);
        }
      }
    }

    PatientTruth truth;
    truth.patient_id = rec.patient_id;
    truth.index_day = last;
    truth.followup_days = config.study_days - last;
    truth.linear_predictor = eta;
    for (std::int64_t lead = kMinLeadDays; lead <= truth.followup_days; ++lead) {
      if (rng.bernoulli(phase_probability(h, eta, phase_of(h, lead)))) {
        truth.event_day = last + lead;
        break;
      }
    }
    for (std::size_t k = 0; k < config.horizons.size(); ++k) {
      truth.risks.push_back(planted_risk(h, eta, config.horizons.days[k], truth.followup_days));
      truth.realized.push_back(truth.event_day && *truth.event_day - last <= config.horizons.days[k]);
    }
    if (truth.event_day) {
      emit(*truth.event_day, Modality::encounter, "INPATIENT", std::nullopt);
      emit(*truth.event_day, Modality::diagnosis, fmt::format("{}.{}", outcome_prefix, rng.below(10)),
           std::nullopt);
    }
    out.records.push_back(std::move(rec));
    out.truth.patients.push_back(std::move(truth));
  }
  return out;
}

double bayes_auc(const GroundTruth& truth, std::size_t horizon, std::span<const std::string> ids) {
  if (horizon >= truth.horizons.size()) throw DataError("bayes_auc: horizon out of range");
  std::set<std::string> keep(ids.begin(), ids.end());
  const std::int64_t needed = truth.horizons.unbounded(horizon) ? truth.horizons.longest_finite()
                                                                : truth.horizons.days[horizon];
  std::vector<double> scores, labels;
  for (const auto& p : truth.patients) {
    if (!keep.empty() && !keep.count(p.patient_id)) continue;
    const bool positive = p.realized.at(horizon) != 0;
    if (!positive && p.followup_days < needed) continue;
    scores.push_back(p.risks.at(horizon));
    labels.push_back(positive ? 1.0 : 0.0);
  }
  return roc_auc(scores, labels);
}

}  // namespace ehrcvd
