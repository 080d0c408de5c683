#include "ehrcvd/cohort_builder.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <sstream>
#include <unordered_map>

#include "ehrcvd/errors.hpp"
#include "ehrcvd/rng.hpp"

namespace ehrcvd {

std::int64_t HorizonSet::longest_finite() const {
  std::int64_t best = 0;
  for (auto d : days) {
    if (d != kUnboundedHorizon) best = std::max(best, d);
  }
  return best;
}

std::string HorizonSet::label(std::size_t i) const {
  if (unbounded(i)) return ">" + std::to_string(longest_finite()) + "d";
  return std::to_string(days[i]) + "d";
}

void HorizonSet::validate() const {
  if (days.empty() || days.back() != kUnboundedHorizon) {
    throw ConfigError("horizons must end with the unbounded horizon");
  }
  for (std::size_t i = 0; i < days.size(); ++i) {
    if (days[i] <= 0) throw ConfigError("horizons must be positive");
    if (i > 0 && days[i] <= days[i - 1]) throw ConfigError("horizons must be strictly increasing");
  }
}

InclusionResult apply_inclusion(std::span<const PatientRecord> records,
                                const EventDefinition& event_def, std::int64_t study_end_day) {
  InclusionResult out;
  for (const auto& rec : records) {
    std::optional<std::int64_t> event_day;
    for (const auto& e : rec.events) {
      if (e.modality == Modality::diagnosis && event_def.matches(e.code)) {
        event_day = event_day ? std::min(*event_day, e.day) : e.day;
      }
    }
    const auto days = rec.observation_days();
    if (days.empty()) {
      out.excluded.push_back({rec.patient_id, "no observation days"});
      continue;
    }
    LabeledPatient p;
    p.patient_id = rec.patient_id;
    p.sex = rec.sex;
    if (event_day) {
      const std::int64_t cutoff = *event_day - kMinLeadDays;
      auto it = std::upper_bound(days.begin(), days.end(), cutoff);
      if (it == days.begin()) {
        out.excluded.push_back({rec.patient_id, "no observation >=2 weeks prior to event"});
        continue;
      }
      p.index_day = *std::prev(it);
      p.n_obs_days = it - days.begin();
      p.event_day = event_day;
      p.is_case = true;
    } else {
      p.index_day = days.back();
      p.n_obs_days = static_cast<std::int64_t>(days.size());
    }
    p.age_at_index = rec.age_at(p.index_day);
    p.followup_days = study_end_day - p.index_day;
    if (p.is_case) {
      out.cases.push_back(std::move(p));
    } else {
      out.control_pool.push_back(std::move(p));
    }
  }
  return out;
}

HorizonLabels label_horizons(const LabeledPatient& patient, const HorizonSet& horizons,
                             LabelMode mode) {
  const std::size_t n = horizons.size();
  HorizonLabels out{std::vector<std::uint8_t>(n, 0), std::vector<std::uint8_t>(n, 1)};
  if (patient.is_case) {
    if (!patient.event_day) throw DataError("case " + patient.patient_id + " has no event day");
    const std::int64_t delta = *patient.event_day - patient.index_day;
    if (delta < kMinLeadDays) {
      throw DataError("case " + patient.patient_id + " has event " + std::to_string(delta) +
                      " days after index (< 14): inclusion violated");
    }
    for (std::size_t i = 0; i < n; ++i) {
      const bool within = horizons.unbounded(i) || delta <= horizons.days[i];
      if (mode == LabelMode::cumulative) {
        out.labels[i] = within;
      } else {
        const bool after_previous = i == 0 || delta > horizons.days[i - 1];
        out.labels[i] = within && after_previous;
      }
    }
  } else {
    for (std::size_t i = 0; i < n; ++i) {
      const std::int64_t needed =
          horizons.unbounded(i) ? horizons.longest_finite() : horizons.days[i];
      out.mask[i] = patient.followup_days >= needed;
    }
  }
  return out;
}

std::vector<std::size_t> Cohort::positive_counts() const {
  std::vector<std::size_t> counts(horizons.size(), 0);
  for (const auto& p : patients) {
    for (std::size_t i = 0; i < counts.size() && i < p.labels.size(); ++i) {
      counts[i] += p.labels[i] && p.label_mask[i];
    }
  }
  return counts;
}

Cohort match_controls(std::span<const LabeledPatient> cases,
                      std::span<const LabeledPatient> control_pool,
                      const EventDefinition& event_def) {
  // Feasibility per sex.
  for (Sex s : {Sex::female, Sex::male}) {
    const auto need = std::count_if(cases.begin(), cases.end(),
                                    [&](const LabeledPatient& p) { return p.sex == s; });
    const auto have = std::count_if(control_pool.begin(), control_pool.end(),
                                    [&](const LabeledPatient& p) { return p.sex == s; });
    if (have < need) {
      throw DataError("insufficient same-sex controls: " + std::to_string(need - have) +
                      " more " + (s == Sex::male ? "male" : "female") + " controls needed");
    }
  }

  // Z-scoring over cases and pool together.
  double sa = 0, sn = 0, sa2 = 0, sn2 = 0;
  const double total = static_cast<double>(cases.size() + control_pool.size());
  auto acc = [&](const LabeledPatient& p) {
    const double n = static_cast<double>(p.n_obs_days);
    sa += p.age_at_index;
    sa2 += p.age_at_index * p.age_at_index;
    sn += n;
    sn2 += n * n;
  };
  for (const auto& p : cases) acc(p);
  for (const auto& p : control_pool) acc(p);
  auto sd_of = [&](double s, double s2) {
    if (total < 2) return 1.0;
    const double mean = s / total;
    const double var = std::max(0.0, s2 / total - mean * mean);
    return var > 0 ? std::sqrt(var) : 1.0;
  };
  const double age_sd = sd_of(sa, sa2);
  const double obs_sd = sd_of(sn, sn2);

  std::vector<std::size_t> order(cases.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (cases[a].age_at_index != cases[b].age_at_index) {
      return cases[a].age_at_index > cases[b].age_at_index;
    }
    return cases[a].patient_id < cases[b].patient_id;
  });

  Cohort cohort;
  cohort.event_def = event_def;
  std::vector<std::uint8_t> used(control_pool.size(), 0);
  for (std::size_t ci : order) {
    const auto& c = cases[ci];
    std::optional<std::size_t> best;
    double best_d = 0.0;
    for (std::size_t k = 0; k < control_pool.size(); ++k) {
      const auto& ctl = control_pool[k];
      if (used[k] || ctl.sex != c.sex) continue;
      const double da = (c.age_at_index - ctl.age_at_index) / age_sd;
      const double dn = static_cast<double>(c.n_obs_days - ctl.n_obs_days) / obs_sd;
      const double d = std::sqrt(da * da + dn * dn);
      if (!best || d < best_d ||
          (d == best_d && ctl.patient_id < control_pool[*best].patient_id)) {
        best = k;
        best_d = d;
      }
    }
    used[*best] = 1;
    cohort.patients.push_back(c);
    cohort.patients.push_back(control_pool[*best]);
    cohort.matching_report.push_back({c.patient_id, control_pool[*best].patient_id, best_d});
  }
  return cohort;
}

void label_cohort(Cohort& cohort, const HorizonSet& horizons, LabelMode mode) {
  horizons.validate();
  cohort.horizons = horizons;
  cohort.label_mode = mode;
  for (auto& p : cohort.patients) {
    auto hl = label_horizons(p, horizons, mode);
    p.labels = std::move(hl.labels);
    p.label_mask = std::move(hl.mask);
  }
}

CohortBuildResult build_cohort(std::span<const PatientRecord> records,
                               const EventDefinition& event_def, const HorizonSet& horizons,
                               std::int64_t study_end_day, LabelMode mode) {
  auto inc = apply_inclusion(records, event_def, study_end_day);
  CohortBuildResult out{match_controls(inc.cases, inc.control_pool, event_def),
                        std::move(inc.excluded)};
  label_cohort(out.cohort, horizons, mode);
  return out;
}

std::vector<std::vector<std::size_t>> split_folds(const Cohort& cohort, std::size_t k,
                                                  std::uint64_t seed) {
  if (k < 2) throw DataError("split_folds: k must be >= 2");
  const std::size_t n_pairs = cohort.patients.size() / 2;
  if (k > n_pairs) {
    throw DataError("split_folds: k=" + std::to_string(k) + " exceeds " +
                    std::to_string(n_pairs) + " matched pairs");
  }
  // Stratum = shortest horizon at which the case is positive.
  std::map<std::size_t, std::vector<std::size_t>> strata;
  for (std::size_t p = 0; p < n_pairs; ++p) {
    const auto& c = cohort.patients[2 * p];
    std::size_t stratum = c.labels.size();
    for (std::size_t i = 0; i < c.labels.size(); ++i) {
      if (c.labels[i]) {
        stratum = i;
        break;
      }
    }
    strata[stratum].push_back(p);
  }
  Rng rng(seed);
  std::vector<std::vector<std::size_t>> folds(k);
  std::size_t next = 0;
  for (auto& [stratum, pairs] : strata) {
    rng.shuffle(pairs);
    for (std::size_t p : pairs) {
      folds[next % k].push_back(2 * p);
      folds[next % k].push_back(2 * p + 1);
      ++next;
    }
  }
  for (auto& f : folds) std::sort(f.begin(), f.end());
  return folds;
}

// ---- persistence ----

using nlohmann::json;

namespace {

json patient_to_json(const LabeledPatient& p) {
  json j = {{"patient_id", p.patient_id},
            {"index_day", p.index_day},
            {"event_day", p.event_day ? json(*p.event_day) : json(nullptr)},
            {"labels", p.labels},
            {"label_mask", p.label_mask},
            {"is_case", p.is_case},
            {"age_at_index", p.age_at_index},
            {"sex", p.sex == Sex::male ? "male" : "female"},
            {"n_obs_days", p.n_obs_days},
            {"followup_days", p.followup_days}};
  return j;
}

LabeledPatient patient_from_json(const json& j) {
  LabeledPatient p;
  p.patient_id = j.at("patient_id").get<std::string>();
  p.index_day = j.at("index_day").get<std::int64_t>();
  if (!j.at("event_day").is_null()) p.event_day = j.at("event_day").get<std::int64_t>();
  p.labels = j.at("labels").get<std::vector<std::uint8_t>>();
  p.label_mask = j.at("label_mask").get<std::vector<std::uint8_t>>();
  p.is_case = j.at("is_case").get<bool>();
  p.age_at_index = j.at("age_at_index").get<double>();
  p.sex = j.at("sex").get<std::string>() == "male" ? Sex::male : Sex::female;
  p.n_obs_days = j.at("n_obs_days").get<std::int64_t>();
  p.followup_days = j.at("followup_days").get<std::int64_t>();
  return p;
}

}  // namespace

json to_json(const Cohort& cohort) {
  json horizons = json::array();
  for (auto d : cohort.horizons.days) {
    horizons.push_back(d == kUnboundedHorizon ? json(nullptr) : json(d));
  }
  json patients = json::array();
  for (const auto& p : cohort.patients) patients.push_back(patient_to_json(p));
  json report = json::array();
  for (const auto& m : cohort.matching_report) {
    report.push_back({{"case_id", m.case_id}, {"control_id", m.control_id}, {"distance", m.distance}});
  }
  return {{"kind", "cohort"},
          {"schema_version", Cohort::kSchemaVersion},
          {"disease", to_string(cohort.event_def.disease)},
          {"code_prefixes", cohort.event_def.code_prefixes},
          {"horizons", horizons},
          {"label_mode", cohort.label_mode == LabelMode::cumulative ? "cumulative" : "disjoint"},
          {"patients", patients},
          {"matching_report", report}};
}

Cohort cohort_from_json(const json& j) {
  if (j.value("kind", "") != "cohort" || j.value("schema_version", -1) != Cohort::kSchemaVersion) {
    throw DataError("expected a cohort document with schema_version 1");
  }
  Cohort c;
  c.event_def.disease = parse_disease(j.at("disease").get<std::string>());
  c.event_def.code_prefixes = j.at("code_prefixes").get<std::vector<std::string>>();
  c.horizons.days.clear();
  for (const auto& h : j.at("horizons")) {
    c.horizons.days.push_back(h.is_null() ? kUnboundedHorizon : h.get<std::int64_t>());
  }
  c.horizons.validate();
  c.label_mode = j.at("label_mode").get<std::string>() == "disjoint" ? LabelMode::disjoint
                                                                      : LabelMode::cumulative;
  for (const auto& p : j.at("patients")) c.patients.push_back(patient_from_json(p));
  for (const auto& m : j.at("matching_report")) {
    c.matching_report.push_back({m.at("case_id").get<std::string>(),
                                 m.at("control_id").get<std::string>(),
                                 m.at("distance").get<double>()});
  }
  return c;
}

json exclusions_to_json(const std::vector<Exclusion>& excluded) {
  json arr = json::array();
  for (const auto& e : excluded) arr.push_back({{"patient_id", e.patient_id}, {"reason", e.reason}});
  return {{"kind", "exclusion_report"}, {"schema_version", 1}, {"excluded", arr}};
}

std::string folds_to_csv(const Cohort& cohort, const std::vector<std::vector<std::size_t>>& folds) {
  std::vector<std::pair<std::size_t, std::size_t>> rows;
  for (std::size_t f = 0; f < folds.size(); ++f) {
    for (std::size_t idx : folds[f]) rows.emplace_back(idx, f);
  }
  std::sort(rows.begin(), rows.end());
  std::ostringstream os;
  os << "patient_id,fold\n";
  for (const auto& [idx, f] : rows) os << cohort.patients.at(idx).patient_id << ',' << f << '\n';
  return os.str();
}

std::vector<std::vector<std::size_t>> folds_from_csv(const Cohort& cohort, const std::string& csv) {
  std::unordered_map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < cohort.patients.size(); ++i) index[cohort.patients[i].patient_id] = i;
  std::istringstream is(csv);
  std::string line;
  std::getline(is, line);
  if (line != "patient_id,fold") throw DataError("folds CSV must start with 'patient_id,fold'");
  std::vector<std::vector<std::size_t>> folds;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const auto comma = line.rfind(',');
    if (comma == std::string::npos) throw DataError("bad folds CSV line: " + line);
    const std::string id = line.substr(0, comma);
    const std::size_t f = std::stoul(line.substr(comma + 1));
    const auto it = index.find(id);
    if (it == index.end()) throw DataError("folds CSV references unknown patient " + id);
    if (folds.size() <= f) folds.resize(f + 1);
    folds[f].push_back(it->second);
  }
  for (auto& f : folds) std::sort(f.begin(), f.end());
  return folds;
}

}  // namespace ehrcvd
