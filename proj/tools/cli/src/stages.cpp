#include "ehrcvd_cli/stages.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include <spdlog/fmt/fmt.h>
#include <spdlog/spdlog.h>

#include "ehrcvd/errors.hpp"
#include "ehrcvd/evaluator.hpp"
#include "ehrcvd/event_io.hpp"
#include "ehrcvd/metrics.hpp"
#include "ehrcvd/rng.hpp"
#include "ehrcvd_cli/artifacts.hpp"

namespace ehrcvd::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string dump(const json& j) { return j.dump(2) + "\n"; }

std::string fmt_double(double v) {
  if (std::isnan(v)) return "";
  return fmt::format("{:.17g}", v);
}

// ---- upstream pipeline, recomputed in memory by every stage ----

struct Inputs {
  std::vector<PatientRecord> records;
  std::optional<GroundTruth> truth;
  std::string events_jsonl;  // only kept for generated cohorts
  std::string events_sha256;
};

Inputs load_inputs(const ExperimentConfig& config) {
  Inputs in;
  if (config.generator) {
    auto generated = generate(*config.generator);
    std::ostringstream os;
    write_events(os, flatten_records(generated.records));
    in.events_jsonl = os.str();
    in.events_sha256 = sha256_hex(in.events_jsonl);
    in.records = std::move(generated.records);
    in.truth = std::move(generated.truth);
  } else {
    in.events_sha256 = sha256_file(*config.events);
    in.records = assemble_records(read_events_file(*config.events));
  }
  return in;
}

struct CohortStage {
  Cohort cohort;
  std::vector<Exclusion> excluded;
  std::vector<std::vector<std::size_t>> folds;
  std::string cohort_json;
  std::string folds_csv;
};

CohortStage build_cohort_stage(const ExperimentConfig& config, const Inputs& in,
                               std::size_t n_folds, std::uint64_t fold_seed) {
  auto built = build_cohort(in.records, EventDefinition::defaults(config.disease), config.horizons,
                            config.resolved_study_end());
  if (built.cohort.n_pairs() == 0) throw DataError("cohort has no matched case-control pairs");
  CohortStage s;
  s.folds = split_folds(built.cohort, n_folds, fold_seed);
  s.cohort_json = dump(to_json(built.cohort));
  s.folds_csv = folds_to_csv(built.cohort, s.folds);
  s.cohort = std::move(built.cohort);
  s.excluded = std::move(built.excluded);
  return s;
}

PhysiologicalRanges load_ranges(const ExperimentConfig& config) {
  if (!config.ranges) return PhysiologicalRanges::defaults();
  try {
    return ranges_from_json(json::parse(read_text(*config.ranges)));
  } catch (const json::exception& e) {
    throw DataError("malformed ranges file " + config.ranges->string() + ": " + e.what());
  }
}

struct Upstream {
  Inputs inputs;
  CohortStage cohort;
  FeaturizedCohort data;
  std::string vocabulary_json;
};

Upstream build_upstream(const ExperimentConfig& config, std::size_t n_folds) {
  Upstream u;
  u.inputs = load_inputs(config);
  u.cohort = build_cohort_stage(config, u.inputs, n_folds, config.seeds.folds);
  u.data = featurize_cohort(u.cohort.cohort, u.inputs.records, config.vocabulary, load_ranges(config));
  u.vocabulary_json = dump(to_json(u.data.vocabulary));
  spdlog::info("cohort: {} pairs, {} features", u.cohort.cohort.n_pairs(), u.data.n_features());
  return u;
}

StageWriter open_stage(const StageOptions& options, const std::string& stage,
                       const ExperimentConfig& config) {
  StageWriter w(options.out_dir / stage, stage);
  w.set_config(to_json(config));
  if (options.config_path) w.add_input("config", sha256_file(*options.config_path));
  return w;
}

void record_upstream(StageWriter& w, const Upstream& u) {
  w.add_input("events", u.inputs.events_sha256);
  w.add_input("cohort", sha256_hex(u.cohort.cohort_json));
  w.add_input("folds", sha256_hex(u.cohort.folds_csv));
  w.add_input("vocabulary", sha256_hex(u.vocabulary_json));
}

// Every model name is validated before any (slow) training starts.
std::vector<std::unique_ptr<ModelSpec>> make_specs(const std::vector<std::string>& names,
                                                   const ExperimentConfig& config,
                                                   const Inputs& in) {
  std::vector<std::unique_ptr<ModelSpec>> specs;
  for (const auto& n : names) specs.push_back(make_spec(n, config, in.truth ? &*in.truth : nullptr));
  return specs;
}

std::size_t feature_index_or_throw(const Vocabulary& v, const std::string& name) {
  try {
    return v.feature_index(name);
  } catch (const Error&) {
    throw ConfigError("unknown feature '" + name + "'");
  }
}

std::string sequences_jsonl(const FeaturizedCohort& data) {
  // One line per patient; each day lists its non-zero cells, NaN as null.
  std::string out;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto& s = data.sequences[i];
    json days = json::array();
    for (std::size_t d = 0; d < s.n_days(); ++d) {
      json cells = json::object();
      const auto row = s.matrix.row(d);
      for (std::size_t c = 0; c < row.size(); ++c) {
        if (std::isnan(row[c])) {
          cells[std::to_string(c)] = nullptr;
        } else if (row[c] != 0.0) {
          cells[std::to_string(c)] = row[c];
        }
      }
      days.push_back({{"day", s.days[d]}, {"cells", std::move(cells)}});
    }
    out += json{{"patient_id", s.patient_id}, {"days", std::move(days)}}.dump();
    out += '\n';
  }
  return out;
}

std::string training_log_csv(const std::map<std::size_t, std::vector<EpochLog>>& logs) {
  std::string out = "horizon,epoch,train_loss,validation_loss,wall_seconds\n";
  for (const auto& [h, log] : logs) {
    for (const auto& e : log) {
      out += fmt::format("{},{},{},{},{:.6f}\n", h, e.epoch, fmt_double(e.train_loss),
                         fmt_double(e.validation_loss), e.wall_seconds);
    }
  }
  return out;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace

void stage_generate(const ExperimentConfig& config, const StageOptions& options) {
  if (!config.generator) throw ConfigError("generate needs a generator config");
  GeneratorConfig gen = *config.generator;
  if (options.seed) gen.seed = *options.seed;
  ExperimentConfig effective = config;
  effective.generator = gen;
  effective.seeds.generator = gen.seed;

  auto w = open_stage(options, "generate", effective);
  w.add_seed("generator", gen.seed);
  const Inputs in = load_inputs(effective);
  w.write("events.jsonl", in.events_jsonl);
  w.write("ground_truth.json", dump(to_json(*in.truth)));
  w.write("generator_config.json", dump(to_json(gen)));
  w.finish();
  spdlog::info("generated {} patients", in.records.size());
}

void stage_cohort(const ExperimentConfig& config, const StageOptions& options) {
  ExperimentConfig c = config;
  if (options.seed) c.seeds.folds = *options.seed;
  auto w = open_stage(options, "cohort", c);
  w.add_seed("folds", c.seeds.folds);
  const Inputs in = load_inputs(c);
  w.add_input("events", in.events_sha256);
  const auto s = build_cohort_stage(c, in, c.folds, c.seeds.folds);
  w.write("cohort.json", s.cohort_json);
  w.write("exclusions.json", dump(exclusions_to_json(s.excluded)));
  w.write("folds.csv", s.folds_csv);
  w.finish();
  const auto pos = s.cohort.positive_counts();
  spdlog::info("cohort: {} pairs, {} excluded, positives per horizon: {}", s.cohort.n_pairs(),
               s.excluded.size(), fmt::join(pos, "/"));
}

void stage_featurize(const ExperimentConfig& config, const StageOptions& options) {
  auto w = open_stage(options, "featurize", config);
  w.add_seed("folds", config.seeds.folds);
  const Upstream u = build_upstream(config, config.folds);
  w.add_input("events", u.inputs.events_sha256);
  w.add_input("cohort", sha256_hex(u.cohort.cohort_json));
  w.write("vocabulary.json", u.vocabulary_json);
  w.write("ranges.json", dump(to_json(u.data.ranges)));
  w.write("sequences.jsonl", sequences_jsonl(u.data));
  w.finish();
}

void stage_tune(const ExperimentConfig& config, const StageOptions& options) {
  ExperimentConfig c = config;
  if (options.seed) c.seeds.tune = *options.seed;
  auto w = open_stage(options, "tune", c);
  w.add_seed("tune", c.seeds.tune);
  w.add_seed("folds", c.seeds.folds);
  w.add_seed("train", c.seeds.train);

  SearchSpace space = SearchSpace::defaults();
  if (c.tune.search_space) {
    space = search_space_from_json(json::parse(read_text(*c.tune.search_space)));
    w.add_input("search_space", sha256_file(*c.tune.search_space));
  }
  const bool linear = c.tune.model.rfind("lr_", 0) == 0;
  make_spec(c.tune.model, c, nullptr);  // validates the name up front

  const Upstream u = build_upstream(c, c.tune.folds);
  record_upstream(w, u);
  const std::size_t horizon = c.default_horizon(c.tune.horizon);

  const auto apply = [&](const std::map<std::string, double>& values) {
    ExperimentConfig trial = c;
    for (const auto& [name, v] : values) {
      if (name == "n_hidden") trial.recurrent.n_hidden = static_cast<std::size_t>(std::lround(v));
      else if (name == "n_days_pad") trial.recurrent.n_days_pad = static_cast<std::size_t>(std::lround(v));
      else if (name == "learning_rate") trial.recurrent.learning_rate = v;
      else if (name == "batch_size") trial.recurrent.batch_size = static_cast<std::size_t>(std::lround(v));
      else if (name == "input_dropout") trial.recurrent.input_dropout = v;
      else if (name == "lambda") trial.logreg.lambda_grid = {v};
      else throw ConfigError("search space dimension '" + name + "' is not a known hyperparameter");
    }
    return trial;
  };
  // Dimensions the tuned model does not read are dropped from the space.
  SearchSpace used;
  for (const auto& d : space.dimensions) {
    if ((d.name == "lambda") == linear) used.dimensions.push_back(d);
  }
  if (used.dimensions.empty()) throw ConfigError("search space has no dimension for " + c.tune.model);
  for (const auto& d : used.dimensions) apply({{d.name, d.to_value(0.5)}});

  const Objective objective = [&](const std::map<std::string, double>& values) {
    const ExperimentConfig trial = apply(values);
    const auto spec = make_spec(c.tune.model, trial, nullptr);
    CvOptions cv;
    cv.jobs = options.jobs;
    const auto r = cross_validate(u.data, *spec, u.cohort.folds, c.seeds.train, cv);
    const auto& agg = r.metrics.aggregate.at(horizon);
    if (agg.n_folds == 0) throw DataError("no fold defines the tuned horizon");
    return agg.auc.mean;
  };
  std::string trials;
  const auto result = tune(used, c.tune.budget, objective, c.seeds.tune, {}, [&](const Trial& t) {
    spdlog::info("trial {}: {}", t.index,
                 t.objective ? fmt::format("AUC {:.4f}", *t.objective) : "failed: " + t.error);
    trials += trial_to_json_line(t) + "\n";
  });
  w.write("search_space.json", dump(to_json(used)));
  w.write("trials.jsonl", trials);
  json best = {{"model", c.tune.model}, {"horizon", horizon}};
  if (result.best) {
    const auto& t = result.history.trials[*result.best];
    const ExperimentConfig tuned = apply(t.values);
    best["trial"] = t.index;
    best["objective"] = *t.objective;
    best["values"] = t.values;
    if (linear) {
      best["lambda"] = tuned.logreg.lambda_grid.front();
    } else {
      best["recurrent"] = to_json(tuned.recurrent);
    }
  } else {
    best["trial"] = nullptr;
  }
  w.write("best.json", dump(best));
  w.finish();
  if (!result.best) throw DataError("every tuning trial failed");
}

void stage_train(const ExperimentConfig& config, const StageOptions& options) {
  ExperimentConfig c = config;
  if (options.seed) c.seeds.train = *options.seed;
  auto w = open_stage(options, "train", c);
  w.add_seed("train", c.seeds.train);
  w.add_seed("folds", c.seeds.folds);
  const Upstream u = build_upstream(c, c.folds);
  record_upstream(w, u);
  const auto specs = make_specs(c.models, c, u.inputs);

  std::vector<std::size_t> all(u.data.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  const Targets targets{u.data.labels, u.data.masks};
  json summary = json::array();
  json timing = json::object();
  for (const auto& spec : specs) {
    const auto t0 = std::chrono::steady_clock::now();
    const auto fit = spec->fit(u.data, targets, all, c.seeds.train);
    timing[spec->name()] = seconds_since(t0);
    const auto cal = fit.model->prepare(u.data, fit.calibration_rows);
    const auto preds = fit.model->predict(cal);
    json thresholds = json::array();
    for (std::size_t h = 0; h < u.data.n_horizons(); ++h) {
      std::vector<double> s, y;
      for (std::size_t i = 0; i < fit.calibration_rows.size(); ++i) {
        const std::size_t r = fit.calibration_rows[i];
        if (u.data.masks(r, h) == 0.0 || std::isnan(preds(i, h))) continue;
        s.push_back(preds(i, h));
        y.push_back(u.data.labels(r, h));
      }
      const bool both = std::count(y.begin(), y.end(), 1.0) > 0 && std::count(y.begin(), y.end(), 0.0) > 0;
      thresholds.push_back(both ? json(choose_threshold(s, y).threshold) : json(nullptr));
    }
    const std::string name = spec->name();
    const auto blocks = fit.model->parameters();
    if (!blocks.empty()) {
      const fs::path ckpt = w.dir() / (name + ".ckpt");
      write_checkpoint(ckpt, blocks);
      w.write(name + ".ckpt", read_text(ckpt));
    }
    w.write(name + "_scaler.json", dump(to_json(fit.model->scaler())));
    if (const auto* rec = dynamic_cast<const FittedRecurrent*>(fit.model.get())) {
      w.write_volatile(name + "_training_log.csv", training_log_csv(rec->logs));
    }
    summary.push_back({{"model", name},
                       {"n_days_pad", fit.model->n_days_pad()},
                       {"checkpoint", blocks.empty() ? json(nullptr) : json(name + ".ckpt")},
                       {"thresholds", thresholds},
                       {"calibration_rows", fit.calibration_rows.size()}});
    spdlog::info("trained {}", name);
  }
  w.write("models.json", dump(summary));
  w.write_volatile("timing.json", dump(timing));
  w.finish();
}

void stage_evaluate(const ExperimentConfig& config, const StageOptions& options) {
  ExperimentConfig c = config;
  if (options.seed) c.seeds.train = *options.seed;
  auto w = open_stage(options, "evaluate", c);
  w.add_seed("train", c.seeds.train);
  w.add_seed("folds", c.seeds.folds);
  const Upstream u = build_upstream(c, c.folds);
  record_upstream(w, u);
  const auto specs = make_specs(c.models, c, u.inputs);

  std::vector<CvResult> results;
  std::vector<FoldMetrics> metrics;
  json timing = json::object();
  CvOptions cv;
  cv.jobs = options.jobs;
  for (const auto& spec : specs) {
    const auto t0 = std::chrono::steady_clock::now();
    results.push_back(cross_validate(u.data, *spec, u.cohort.folds, c.seeds.train, cv));
    timing[spec->name()] = seconds_since(t0);
    metrics.push_back(results.back().metrics);
    std::vector<std::string> aucs;
    for (const auto& agg : metrics.back().aggregate) aucs.push_back(fmt::format("{:.3f}", agg.auc.mean));
    spdlog::info("{}: mean AUC per horizon {}", spec->name(), fmt::join(aucs, " / "));
  }
  json all = {{"kind", "metrics"}, {"schema_version", 1}, {"models", json::array()}};
  for (const auto& m : metrics) all["models"].push_back(to_json(m));
  w.write("metrics.json", dump(all));
  w.write("metrics.csv", metrics_to_csv(metrics));
  w.write("roc.csv", roc_to_csv(u.data, results));

  std::string oof = "patient_id,model,horizon,score\n";
  for (std::size_t m = 0; m < results.size(); ++m) {
    for (std::size_t i = 0; i < u.data.size(); ++i) {
      for (std::size_t h = 0; h < u.data.n_horizons(); ++h) {
        const double s = results[m].oof_scores(i, h);
        if (std::isnan(s)) continue;
        oof += fmt::format("{},{},{},{}\n", u.data.sequences[i].patient_id, metrics[m].model,
                           metrics[m].horizons[h], fmt_double(s));
      }
    }
  }
  w.write("oof_scores.csv", oof);
  w.write_volatile("timing.json", dump(timing));
  w.finish();
}

void stage_importance(const ExperimentConfig& config, const StageOptions& options) {
  ExperimentConfig c = config;
  if (options.seed) c.seeds.importance = *options.seed;
  auto w = open_stage(options, "importance", c);
  w.add_seed("importance", c.seeds.importance);
  w.add_seed("train", c.seeds.train);
  w.add_seed("folds", c.seeds.folds);
  const Upstream u = build_upstream(c, c.folds);
  record_upstream(w, u);
  const auto spec = make_spec(c.importance.model, c, u.inputs.truth ? &*u.inputs.truth : nullptr);

  ImportanceOptions io;
  io.repeats = c.importance.repeats;
  io.horizon = c.default_horizon(c.importance.horizon);
  for (const auto& f : c.importance.features) {
    io.features.push_back(feature_index_or_throw(u.data.vocabulary, f));
  }
  CvOptions cv;
  cv.jobs = options.jobs;
  cv.keep_models = true;
  const auto r = cross_validate(u.data, *spec, u.cohort.folds, c.seeds.train, cv);
  const auto records = permutation_importance(u.data, r, io, c.seeds.importance);
  w.write("importance.csv", importance_to_csv(records));
  w.finish();
}

void stage_attention(const ExperimentConfig& config, const StageOptions& options) {
  ExperimentConfig c = config;
  if (options.seed) c.seeds.train = *options.seed;
  auto w = open_stage(options, "attention", c);
  w.add_seed("train", c.seeds.train);
  w.add_seed("folds", c.seeds.folds);
  const Upstream u = build_upstream(c, c.folds);
  record_upstream(w, u);
  const auto spec = make_spec(c.attention_model, c, nullptr);

  CvOptions cv;
  cv.jobs = options.jobs;
  cv.keep_models = true;
  const auto r = cross_validate(u.data, *spec, u.cohort.folds, c.seeds.train, cv);
  std::string out = "patient_id,fold,day,weight\n";
  for (std::size_t f = 0; f < r.fold_models.size(); ++f) {
    const auto& fm = r.fold_models[f];
    const auto input = fm.model->prepare(u.data, fm.test_rows);
    for (std::size_t i = 0; i < fm.test_rows.size(); ++i) {
      for (const auto& dw : extract_attention(*fm.model, input.sequences[i])) {
        out += fmt::format("{},{},{},{}\n", u.data.sequences[fm.test_rows[i]].patient_id, f, dw.day,
                           fmt_double(dw.weight));
      }
    }
  }
  w.write("attention.csv", out);
  w.finish();
}

}  // namespace ehrcvd::cli
