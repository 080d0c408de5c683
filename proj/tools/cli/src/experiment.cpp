#include "ehrcvd_cli/experiment.hpp"

#include <fstream>
#include <sstream>

#include "ehrcvd/errors.hpp"

namespace ehrcvd::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

json read_json_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw DataError("malformed JSON in " + path.string() + ": " + e.what());
  }
}

fs::path resolve(const fs::path& base, const std::string& p) {
  const fs::path raw(p);
  return raw.is_absolute() ? raw : base / raw;
}

HorizonSet horizons_from_json(const json& arr) {
  HorizonSet h;
  h.days.clear();
  for (const auto& d : arr) {
    h.days.push_back(d.is_null() ? kUnboundedHorizon : d.get<std::int64_t>());
  }
  h.validate();
  return h;
}

json horizons_to_json(const HorizonSet& h) {
  json arr = json::array();
  for (std::size_t i = 0; i < h.size(); ++i) {
    if (h.unbounded(i)) {
      arr.push_back(nullptr);
    } else {
      arr.push_back(h.days[i]);
    }
  }
  return arr;
}

std::optional<std::size_t> optional_index(const json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  return j.at(key).get<std::size_t>();
}

}  // namespace

std::int64_t ExperimentConfig::resolved_study_end() const {
  if (study_end_day) return *study_end_day;
  if (generator) return generator->study_days;
  throw ConfigError("study_end_day is required when events come from a file");
}

std::size_t ExperimentConfig::default_horizon(const std::optional<std::size_t>& h) const {
  const std::size_t idx = h.value_or(horizons.size() - 1);
  if (idx >= horizons.size()) {
    throw ConfigError("horizon index " + std::to_string(idx) + " out of range");
  }
  return idx;
}

ExperimentConfig experiment_from_json(const json& j, const fs::path& base_dir) {
  if (!j.is_object() || j.value("kind", "") != "experiment_config") {
    throw ConfigError("expected an experiment_config document");
  }
  if (j.value("schema_version", -1) != ExperimentConfig::kSchemaVersion) {
    throw ConfigError("unsupported experiment_config schema_version");
  }
  ExperimentConfig c;
  try {
    if (j.contains("events")) c.events = resolve(base_dir, j.at("events").get<std::string>());
    if (j.contains("generator")) {
      const auto& g = j.at("generator");
      c.generator = generator_config_from_json(
          g.is_string() ? read_json_file(resolve(base_dir, g.get<std::string>())) : g);
    }
    if (c.events && c.generator) {
      throw ConfigError("experiment_config: give either 'events' or 'generator', not both");
    }
    if (!c.events && !c.generator) {
      throw ConfigError("experiment_config: one of 'events' or 'generator' is required");
    }
    if (j.contains("output_dir")) c.output_dir = resolve(base_dir, j.at("output_dir").get<std::string>());
    c.disease = c.generator ? c.generator->disease : Disease::mi;
    if (j.contains("disease")) c.disease = parse_disease(j.at("disease").get<std::string>());
    if (c.generator && c.generator->disease != c.disease) {
      throw ConfigError("experiment_config: disease differs from the generator's");
    }
    if (j.contains("horizons")) c.horizons = horizons_from_json(j.at("horizons"));
    if (c.generator && c.generator->horizons.days != c.horizons.days) {
      throw ConfigError("experiment_config: horizons differ from the generator's");
    }
    if (j.contains("study_end_day")) c.study_end_day = j.at("study_end_day").get<std::int64_t>();
    if (j.contains("models")) c.models = j.at("models").get<std::vector<std::string>>();
    if (c.models.empty()) throw ConfigError("experiment_config: 'models' is empty");
    c.folds = j.value("folds", c.folds);
    if (c.folds < 2) throw ConfigError("experiment_config: folds must be >= 2");

    if (j.contains("seeds")) {
      const auto& s = j.at("seeds");
      c.seeds.generator = s.value("generator", c.seeds.generator);
      c.seeds.folds = s.value("folds", c.seeds.folds);
      c.seeds.train = s.value("train", c.seeds.train);
      c.seeds.tune = s.value("tune", c.seeds.tune);
      c.seeds.importance = s.value("importance", c.seeds.importance);
    }
    if (c.generator && j.contains("seeds") && j.at("seeds").contains("generator")) {
      c.generator->seed = c.seeds.generator;
    } else if (c.generator) {
      c.seeds.generator = c.generator->seed;
    }

    if (j.contains("vocabulary")) {
      const auto& v = j.at("vocabulary");
      c.vocabulary.top_k = v.value("top_k", c.vocabulary.top_k);
      c.vocabulary.min_prevalence = v.value("min_prevalence", c.vocabulary.min_prevalence);
    }
    if (j.contains("charlson")) {
      c.charlson = resolve(base_dir, j.at("charlson").get<std::string>());
      c.vocabulary.comorbidities = comorbidities_from_json(read_json_file(*c.charlson));
    }
    if (j.contains("ranges")) c.ranges = resolve(base_dir, j.at("ranges").get<std::string>());
    if (j.contains("qrisk")) c.qrisk = resolve(base_dir, j.at("qrisk").get<std::string>());
    if (j.contains("recurrent")) c.recurrent = model_config_from_json(j.at("recurrent"));
    if (j.contains("logreg")) {
      const auto& l = j.at("logreg");
      c.logreg.lambda_grid = l.value("lambda_grid", c.logreg.lambda_grid);
      c.logreg.validation_fraction = l.value("validation_fraction", c.logreg.validation_fraction);
      c.logreg.solver.max_iterations = l.value("max_iterations", c.logreg.solver.max_iterations);
      c.logreg.solver.tolerance = l.value("tolerance", c.logreg.solver.tolerance);
    }
    if (j.contains("tune")) {
      const auto& t = j.at("tune");
      c.tune.model = t.value("model", c.tune.model);
      c.tune.budget = t.value("budget", c.tune.budget);
      c.tune.folds = t.value("folds", c.tune.folds);
      c.tune.horizon = optional_index(t, "horizon");
      if (t.contains("search_space")) {
        c.tune.search_space = resolve(base_dir, t.at("search_space").get<std::string>());
      }
    }
    if (j.contains("importance")) {
      const auto& i = j.at("importance");
      c.importance.model = i.value("model", c.importance.model);
      c.importance.repeats = i.value("repeats", c.importance.repeats);
      c.importance.horizon = optional_index(i, "horizon");
      c.importance.features = i.value("features", c.importance.features);
    }
    c.attention_model = j.value("attention_model", c.attention_model);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("invalid experiment_config: ") + e.what());
  }
  c.default_horizon(c.tune.horizon);
  c.default_horizon(c.importance.horizon);
  return c;
}

ExperimentConfig load_experiment(const fs::path& path) {
  return experiment_from_json(read_json_file(path), path.parent_path());
}

json to_json(const ExperimentConfig& c) {
  json j = {{"kind", "experiment_config"},
            {"schema_version", ExperimentConfig::kSchemaVersion},
            {"output_dir", c.output_dir.generic_string()},
            {"disease", std::string(to_string(c.disease))},
            {"horizons", horizons_to_json(c.horizons)},
            {"models", c.models},
            {"folds", c.folds},
            {"seeds",
             {{"generator", c.seeds.generator},
              {"folds", c.seeds.folds},
              {"train", c.seeds.train},
              {"tune", c.seeds.tune},
              {"importance", c.seeds.importance}}},
            {"vocabulary",
             {{"top_k", c.vocabulary.top_k}, {"min_prevalence", c.vocabulary.min_prevalence}}},
            {"recurrent", to_json(c.recurrent)},
            {"logreg",
             {{"lambda_grid", c.logreg.lambda_grid},
              {"validation_fraction", c.logreg.validation_fraction},
              {"max_iterations", c.logreg.solver.max_iterations},
              {"tolerance", c.logreg.solver.tolerance}}},
            {"tune",
             {{"model", c.tune.model}, {"budget", c.tune.budget}, {"folds", c.tune.folds}}},
            {"importance",
             {{"model", c.importance.model},
              {"repeats", c.importance.repeats},
              {"features", c.importance.features}}},
            {"attention_model", c.attention_model}};
  if (c.events) j["events"] = c.events->generic_string();
  if (c.generator) j["generator"] = to_json(*c.generator);
  if (c.study_end_day) j["study_end_day"] = *c.study_end_day;
  if (c.charlson) j["charlson"] = c.charlson->generic_string();
  if (c.ranges) j["ranges"] = c.ranges->generic_string();
  if (c.qrisk) j["qrisk"] = c.qrisk->generic_string();
  if (c.tune.horizon) j["tune"]["horizon"] = *c.tune.horizon;
  if (c.tune.search_space) j["tune"]["search_space"] = c.tune.search_space->generic_string();
  if (c.importance.horizon) j["importance"]["horizon"] = *c.importance.horizon;
  return j;
}

std::unique_ptr<ModelSpec> make_spec(const std::string& name, const ExperimentConfig& config,
                                     const GroundTruth* truth) {
  if (name == "qrisk") {
    HazardScoreConfig hz;
    if (config.qrisk) hz = hazard_config_from_json(read_json_file(*config.qrisk));
    return std::make_unique<HazardSpec>(std::move(hz));
  }
  if (name.rfind("lr_", 0) == 0) {
    std::size_t k = 0;
    try {
      std::size_t used = 0;
      k = std::stoul(name.substr(3), &used);
      if (used != name.size() - 3) k = 0;
    } catch (const std::exception&) {
      k = 0;
    }
    if (k == 0) throw ConfigError("unknown model '" + name + "' (expected lr_<window>)");
    LogRegSpecOptions o = config.logreg;
    o.history_window = k;
    return std::make_unique<LogRegSpec>(std::move(o));
  }
  if (name == "gru" || name == "mt_gru" || name == "mt_att_gru") {
    RecurrentSpecOptions o;
    o.config = config.recurrent;
    o.config.variant = parse_variant(name);
    return std::make_unique<RecurrentSpec>(std::move(o));
  }
  if (name == "constant") return std::make_unique<ConstantSpec>(0.5);
  if (name == "oracle") {
    if (!truth) throw ConfigError("model 'oracle' needs a generated cohort");
    return std::make_unique<OracleSpec>(truth->risk_map());
  }
  throw ConfigError("unknown model '" + name + "'");
}

}  // namespace ehrcvd::cli
