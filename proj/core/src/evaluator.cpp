#include "ehrcvd/evaluator.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <limits>
#include <thread>

#include <spdlog/fmt/fmt.h>
#include <spdlog/spdlog.h>

#include "ehrcvd/errors.hpp"
#include "ehrcvd/rng.hpp"

namespace ehrcvd {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

// Runs task(i) for i in [0, n) on up to `jobs` threads; rethrows the first
// failure in index order.
void parallel_for(std::size_t n, std::size_t jobs, const std::function<void(std::size_t)>& task) {
  std::vector<std::exception_ptr> errors(n);
  const auto run = [&](std::size_t i) {
    try {
      task(i);
    } catch (...) {
      errors[i] = std::current_exception();
    }
  };
  const std::size_t workers = std::min(std::max<std::size_t>(jobs, 1), n);
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) run(i);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < n; i = next++) run(i);
      });
    }
    for (auto& t : pool) t.join();
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

void check_folds(const FeaturizedCohort& data, const std::vector<std::vector<std::size_t>>& folds) {
  if (folds.size() < 2) throw DataError("cross_validate needs at least two folds");
  std::vector<std::uint8_t> seen(data.size(), 0);
  for (const auto& fold : folds) {
    if (fold.empty()) throw DataError("cross_validate: empty fold");
    for (std::size_t r : fold) {
      if (r >= data.size()) throw DataError("cross_validate: fold row out of range");
      if (seen[r]++) throw DataError("cross_validate: folds overlap");
    }
  }
}

struct Scored {
  std::vector<double> scores;
  std::vector<double> labels;
};

Scored select_scored(const Tensor2& preds, std::span<const std::size_t> rows,
                     const Tensor2& labels, const Tensor2& masks, std::size_t h) {
  Scored s;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (masks(rows[i], h) == 0.0 || std::isnan(preds(i, h))) continue;
    s.scores.push_back(preds(i, h));
    s.labels.push_back(labels(rows[i], h));
  }
  return s;
}

bool has_both(std::span<const double> labels) {
  const auto pos = std::count(labels.begin(), labels.end(), 1.0);
  return pos > 0 && static_cast<std::size_t>(pos) < labels.size();
}

MetricSummary summarise_values(const std::vector<double>& v) {
  return {mean_of(v), sample_sd(v)};
}

}  // namespace

void FoldMetrics::summarise() {
  aggregate.assign(horizons.size(), {});
  for (std::size_t h = 0; h < horizons.size(); ++h) {
    std::vector<double> auc, sens, prec, f1;
    for (const auto& fold : cells) {
      const auto& c = fold.at(h);
      if (!c.defined) continue;
      auc.push_back(c.auc);
      sens.push_back(c.sensitivity);
      prec.push_back(c.precision);
      f1.push_back(c.f1);
    }
    auto& a = aggregate[h];
    a.n_folds = auc.size();
    a.auc = summarise_values(auc);
    a.sensitivity = summarise_values(sens);
    a.precision = summarise_values(prec);
    a.f1 = summarise_values(f1);
  }
}

CvResult cross_validate(const FeaturizedCohort& data, const ModelSpec& spec,
                        const std::vector<std::vector<std::size_t>>& folds, std::uint64_t seed,
                        const CvOptions& options) {
  check_folds(data, folds);
  const std::size_t k = folds.size(), nh = data.n_horizons();
  CvResult result;
  result.metrics.model = spec.name();
  for (std::size_t h = 0; h < nh; ++h) result.metrics.horizons.push_back(data.cohort.horizons.label(h));
  result.metrics.cells.assign(k, std::vector<CellMetrics>(nh));
  result.oof_scores = Tensor2(data.size(), nh, kNaN);
  result.fold_models.resize(k);

  parallel_for(k, options.jobs, [&](std::size_t f) {
    std::vector<std::size_t> train_rows;
    for (std::size_t g = 0; g < k; ++g) {
      if (g != f) train_rows.insert(train_rows.end(), folds[g].begin(), folds[g].end());
    }
    std::sort(train_rows.begin(), train_rows.end());
    Targets targets{data.labels, data.masks};
    if (options.transform) options.transform(targets, train_rows, derive_seed(seed, 1000 + f));

    FitResult fit = spec.fit(data, targets, train_rows, derive_seed(seed, f));
    const auto calibration = fit.model->prepare(data, fit.calibration_rows);
    const Tensor2 cal_preds = fit.model->predict(calibration);
    const auto& test_rows = folds[f];
    const auto test = fit.model->prepare(data, test_rows);
    const Tensor2 test_preds = fit.model->predict(test);

    auto& fm = result.fold_models[f];
    fm.test_rows = test_rows;
    fm.thresholds.assign(nh, kNaN);
    for (std::size_t h = 0; h < nh; ++h) {
      for (std::size_t i = 0; i < test_rows.size(); ++i) {
        result.oof_scores(test_rows[i], h) = test_preds(i, h);
      }
      auto& cell = result.metrics.cells[f][h];
      const auto cal = select_scored(cal_preds, fit.calibration_rows, targets.labels,
                                     targets.masks, h);
      const auto tst = select_scored(test_preds, test_rows, data.labels, data.masks, h);
      cell.n_test = tst.scores.size();
      cell.n_positive = static_cast<std::size_t>(std::count(tst.labels.begin(), tst.labels.end(), 1.0));
      if (tst.scores.empty()) {
        spdlog::debug("{}: fold {} horizon {} not predicted", spec.name(), f,
                      result.metrics.horizons[h]);
        continue;
      }
      if (!has_both(tst.labels)) {
        spdlog::warn("{}: fold {} horizon {} lacks both classes; cell undefined", spec.name(), f,
                     result.metrics.horizons[h]);
        continue;
      }
      double threshold = 0.5;
      if (has_both(cal.labels)) {
        threshold = choose_threshold(cal.scores, cal.labels).threshold;
      } else {
        spdlog::warn("{}: fold {} horizon {} has single-class calibration; threshold 0.5",
                     spec.name(), f, result.metrics.horizons[h]);
      }
      fm.thresholds[h] = threshold;
      const auto sp = sens_prec(tst.scores, tst.labels, threshold);
      cell.defined = true;
      cell.auc = roc_auc(tst.scores, tst.labels);
      cell.sensitivity = sp.sensitivity;
      cell.precision = sp.precision;
      cell.f1 = sp.f1;
      cell.threshold = threshold;
    }
    if (options.keep_models) fm.model = std::move(fit.model);
  });
  result.metrics.summarise();
  return result;
}

TargetTransform subsample_positives(std::size_t horizon, std::size_t reference_horizon,
                                    double max_ratio) {
  if (!(max_ratio >= 0.0)) throw ConfigError("subsample_positives: ratio must be >= 0");
  return [=](Targets& t, std::span<const std::size_t> train_rows, std::uint64_t seed) {
    if (horizon >= t.labels.cols() || reference_horizon >= t.labels.cols()) {
      throw ConfigError("subsample_positives: horizon out of range");
    }
    std::vector<std::size_t> positives;
    std::size_t reference = 0;
    for (std::size_t r : train_rows) {
      if (t.masks(r, reference_horizon) != 0.0 && t.labels(r, reference_horizon) == 1.0) ++reference;
      if (t.masks(r, horizon) != 0.0 && t.labels(r, horizon) == 1.0) positives.push_back(r);
    }
    const auto keep = static_cast<std::size_t>(std::floor(max_ratio * static_cast<double>(reference)));
    if (positives.size() <= keep) return;
    Rng rng(seed);
    rng.shuffle(positives);
    for (std::size_t i = keep; i < positives.size(); ++i) t.masks(positives[i], horizon) = 0.0;
  };
}

std::vector<double> permutation_deltas(const FittedModel& model, const ModelInput& test,
                                       std::span<const double> labels, double threshold,
                                       std::size_t horizon, std::size_t feature,
                                       std::size_t repeats, std::uint64_t seed) {
  const std::size_t n = test.rows.size();
  if (labels.size() != n) throw DataError("permutation_deltas: label count differs from rows");
  const auto column = [&](const Tensor2& preds) {
    std::vector<double> s(n);
    for (std::size_t i = 0; i < n; ++i) s[i] = preds(i, horizon);
    return s;
  };
  const double base = sens_prec(column(model.predict(test)), labels, threshold).f1;
  std::vector<double> deltas;
  deltas.reserve(repeats);
  for (std::size_t rep = 0; rep < repeats; ++rep) {
    Rng rng(derive_seed(seed, rep));
    const auto perm = rng.permutation(n);
    ModelInput shuffled = test;
    for (std::size_t i = 0; i < n; ++i) {
      const auto& src = test.sequences[perm[i]];
      auto& dst = shuffled.sequences[i].matrix;
      const std::size_t rows = std::min(dst.rows(), src.matrix.rows());
      for (std::size_t t = 0; t < rows; ++t) dst(t, feature) = src.matrix(t, feature);
      shuffled.index_day_features(i, feature) = test.index_day_features(perm[i], feature);
    }
    const double permuted = sens_prec(column(model.predict(shuffled)), labels, threshold).f1;
    deltas.push_back(base - permuted);
  }
  return deltas;
}

std::vector<ImportanceRecord> permutation_importance(const FeaturizedCohort& data,
                                                     const CvResult& cv,
                                                     const ImportanceOptions& options,
                                                     std::uint64_t seed) {
  const std::size_t h = options.horizon;
  if (h >= data.n_horizons()) throw ConfigError("importance horizon out of range");
  std::vector<std::size_t> features = options.features;
  if (features.empty()) {
    for (std::size_t j = 0; j < data.n_features(); ++j) features.push_back(j);
  }
  std::vector<std::vector<double>> deltas(features.size());
  for (std::size_t f = 0; f < cv.fold_models.size(); ++f) {
    const auto& fm = cv.fold_models[f];
    if (!fm.model) throw ConfigError("permutation_importance needs models kept from cross_validate");
    if (std::isnan(fm.thresholds.at(h))) continue;
    std::vector<std::size_t> rows;
    std::vector<double> labels;
    for (std::size_t r : fm.test_rows) {
      if (data.masks(r, h) == 0.0) continue;
      rows.push_back(r);
      labels.push_back(data.labels(r, h));
    }
    const auto input = fm.model->prepare(data, rows);
    for (std::size_t j = 0; j < features.size(); ++j) {
      if (features[j] >= data.n_features()) throw ConfigError("importance feature out of range");
      const auto d = permutation_deltas(*fm.model, input, labels, fm.thresholds[h], h, features[j],
                                        options.repeats, derive_seed(seed, f * 1000003 + features[j]));
      deltas[j].insert(deltas[j].end(), d.begin(), d.end());
    }
  }
  std::vector<ImportanceRecord> out;
  for (std::size_t j = 0; j < features.size(); ++j) {
    const auto t = t_test_zero(deltas[j]);
    out.push_back({data.vocabulary.feature_names.at(features[j]), t.n, t.mean, t.sd, t.t, t.p_value});
  }
  return out;
}

std::vector<DayWeight> extract_attention(const FittedModel& model, const PatientSequence& sequence) {
  const auto weights = model.attention(sequence);
  if (!weights) throw ConfigError("extract_attention: model " + model.name() + " has no attention");
  std::vector<DayWeight> out;
  for (std::size_t t = 0; t < sequence.n_days(); ++t) {
    if (sequence.mask[t]) out.push_back({sequence.days[t], (*weights)[t]});
  }
  return out;
}

// ---- artifacts ----

namespace {

nlohmann::json summary_json(const MetricSummary& s) { return {{"mean", s.mean}, {"sd", s.sd}}; }

}  // namespace

nlohmann::json to_json(const FoldMetrics& m) {
  nlohmann::json horizons = nlohmann::json::array();
  for (std::size_t h = 0; h < m.horizons.size(); ++h) {
    const auto& a = m.aggregate.at(h);
    nlohmann::json folds = nlohmann::json::array();
    for (std::size_t f = 0; f < m.cells.size(); ++f) {
      const auto& c = m.cells[f][h];
      nlohmann::json cell = {{"fold", f}, {"defined", c.defined}, {"n_test", c.n_test},
                             {"n_positive", c.n_positive}};
      if (c.defined) {
        cell["auc"] = c.auc;
        cell["sensitivity"] = c.sensitivity;
        cell["precision"] = c.precision;
        cell["f1"] = c.f1;
        cell["threshold"] = c.threshold;
      }
      folds.push_back(std::move(cell));
    }
    horizons.push_back({{"horizon", m.horizons[h]},
                        {"n_folds", a.n_folds},
                        {"auc", summary_json(a.auc)},
                        {"sensitivity", summary_json(a.sensitivity)},
                        {"precision", summary_json(a.precision)},
                        {"f1", summary_json(a.f1)},
                        {"folds", std::move(folds)}});
  }
  return {{"model", m.model}, {"horizons", std::move(horizons)}};
}

std::string metrics_to_csv(std::span<const FoldMetrics> metrics) {
  std::string out = "model,horizon,fold,auc,sensitivity,precision,f1,threshold,n_test,n_positive\n";
  for (const auto& m : metrics) {
    for (std::size_t f = 0; f < m.cells.size(); ++f) {
      for (std::size_t h = 0; h < m.horizons.size(); ++h) {
        const auto& c = m.cells[f][h];
        if (!c.defined) {
          out += fmt::format("{},{},{},,,,,,{},{}\n", m.model, m.horizons[h], f, c.n_test,
                             c.n_positive);
          continue;
        }
        out += fmt::format("{},{},{},{},{},{},{},{},{},{}\n", m.model, m.horizons[h], f, c.auc,
                           c.sensitivity, c.precision, c.f1, c.threshold, c.n_test, c.n_positive);
      }
    }
  }
  return out;
}

std::string roc_to_csv(const FeaturizedCohort& data, std::span<const CvResult> results) {
  std::string out = "model,horizon,threshold,fpr,tpr\n";
  for (const auto& r : results) {
    for (std::size_t h = 0; h < data.n_horizons(); ++h) {
      std::vector<double> scores, labels;
      for (std::size_t i = 0; i < data.size(); ++i) {
        if (data.masks(i, h) == 0.0 || std::isnan(r.oof_scores(i, h))) continue;
        scores.push_back(r.oof_scores(i, h));
        labels.push_back(data.labels(i, h));
      }
      if (!has_both(labels)) continue;
      for (const auto& p : roc_curve(scores, labels)) {
        out += fmt::format("{},{},{},{},{}\n", r.metrics.model, data.cohort.horizons.label(h),
                           p.threshold, p.fpr, p.tpr);
      }
    }
  }
  return out;
}

std::string importance_to_csv(std::span<const ImportanceRecord> records) {
  std::string out = "feature,n,mean_delta_f1,sd,t,p_value\n";
  for (const auto& r : records) {
    out += fmt::format("{},{},{},{},{},{}\n", r.feature, r.n, r.mean_delta_f1, r.sd, r.t, r.p_value);
  }
  return out;
}

}  // namespace ehrcvd
