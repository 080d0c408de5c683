#include "ehrcvd/model_zoo.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>

#include <spdlog/spdlog.h>

#include "ehrcvd/errors.hpp"
#include "ehrcvd/metrics.hpp"
#include "ehrcvd/rng.hpp"

namespace ehrcvd {

FeaturizedCohort featurize_cohort(const Cohort& cohort, std::span<const PatientRecord> records,
                                  const VocabularyOptions& vocab_options,
                                  const PhysiologicalRanges& ranges) {
  std::map<std::string, const PatientRecord*> by_id;
  for (const auto& r : records) by_id[r.patient_id] = &r;

  std::vector<PatientRecord> truncated;
  truncated.reserve(cohort.patients.size());
  for (const auto& p : cohort.patients) {
    const auto it = by_id.find(p.patient_id);
    if (it == by_id.end()) throw DataError("no record for cohort patient " + p.patient_id);
    truncated.push_back(truncate_record(*it->second, p.index_day));
  }

  FeaturizedCohort out;
  out.cohort = cohort;
  out.ranges = ranges;
  out.vocabulary = build_vocabulary(truncated, vocab_options);
  const std::size_t n = cohort.patients.size(), h = cohort.horizons.size();
  out.labels = Tensor2(n, h);
  out.masks = Tensor2(n, h);
  out.sequences.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& p = cohort.patients[i];
    out.sequences.push_back(encode_record(truncated[i], out.vocabulary, ranges, p.index_day));
    if (p.labels.size() != h || p.label_mask.size() != h) {
      throw DataError("cohort patient " + p.patient_id + " is not labelled for every horizon");
    }
    for (std::size_t k = 0; k < h; ++k) {
      out.labels(i, k) = p.labels[k];
      out.masks(i, k) = p.label_mask[k];
    }
  }
  return out;
}

ModelInput FittedModel::prepare(const FeaturizedCohort& data,
                                std::span<const std::size_t> rows) const {
  ModelInput in;
  in.rows.assign(rows.begin(), rows.end());
  in.sequences.reserve(rows.size());
  in.index_day_features =
      Tensor2(rows.size(), data.n_features(), std::numeric_limits<double>::quiet_NaN());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& seq = data.sequences.at(rows[i]);
    in.sequences.push_back(transform(seq, scaler_, n_days_pad_));
    if (seq.n_days() > 0) {
      const auto last = seq.matrix.row(seq.n_days() - 1);
      std::copy(last.begin(), last.end(), in.index_day_features.row(i).begin());
    }
  }
  return in;
}

std::pair<std::vector<std::size_t>, std::vector<std::size_t>> inner_split(
    std::span<const std::size_t> rows, double fraction, std::uint64_t seed) {
  // Pair k occupies rows 2k and 2k+1.
  std::vector<std::size_t> pairs;
  for (std::size_t r : rows) pairs.push_back(r / 2);
  std::sort(pairs.begin(), pairs.end());
  pairs.erase(std::unique(pairs.begin(), pairs.end()), pairs.end());
  Rng rng(seed);
  rng.shuffle(pairs);
  const auto n_val = std::clamp<std::size_t>(
      static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(pairs.size()))), 1,
      pairs.size() > 1 ? pairs.size() - 1 : 1);
  std::vector<std::size_t> val_pairs(pairs.begin(), pairs.begin() + static_cast<std::ptrdiff_t>(n_val));
  std::sort(val_pairs.begin(), val_pairs.end());
  std::vector<std::size_t> train, val;
  for (std::size_t r : rows) {
    (std::binary_search(val_pairs.begin(), val_pairs.end(), r / 2) ? val : train).push_back(r);
  }
  return {std::move(train), std::move(val)};
}

namespace {

ScalerImputer fit_scaler_on(const FeaturizedCohort& data, std::span<const std::size_t> rows) {
  std::vector<PatientSequence> train;
  train.reserve(rows.size());
  for (std::size_t r : rows) train.push_back(data.sequences.at(r));
  return fit_scaler_imputer(train);
}

std::vector<std::size_t> rows_with_mask(const Targets& t, std::span<const std::size_t> rows,
                                        std::size_t horizon) {
  std::vector<std::size_t> out;
  for (std::size_t r : rows) {
    if (t.masks(r, horizon) != 0.0) out.push_back(r);
  }
  return out;
}

bool both_classes(const Targets& t, std::span<const std::size_t> rows, std::size_t horizon) {
  bool pos = false, neg = false;
  for (std::size_t r : rows) (t.labels(r, horizon) == 1.0 ? pos : neg) = true;
  return pos && neg;
}

std::string horizon_prefix(std::size_t h) { return "h" + std::to_string(h) + "/"; }

// ---- hazard score ----

class FittedHazard : public FittedModel {
 public:
  FittedHazard(ScalerImputer scaler, HazardScorer scorer, std::size_t n_horizons)
      : FittedModel(std::move(scaler), 1), scorer_(std::move(scorer)), n_horizons_(n_horizons) {}
  std::string name() const override { return "qrisk"; }
  Tensor2 predict(const ModelInput& input) const override {
    Tensor2 out(input.rows.size(), n_horizons_);
    for (std::size_t i = 0; i < input.rows.size(); ++i) {
      const double s = scorer_.score(input.index_day_features.row(i));
      for (auto& v : out.row(i)) v = s;
    }
    return out;
  }

 private:
  HazardScorer scorer_;
  std::size_t n_horizons_;
};

// ---- logistic regression ----

class FittedLogReg : public FittedModel {
 public:
  FittedLogReg(ScalerImputer scaler, std::size_t window, std::size_t n_horizons)
      : FittedModel(std::move(scaler), window), n_horizons_(n_horizons) {}
  std::string name() const override { return "lr_" + std::to_string(n_days_pad()); }
  Tensor2 predict(const ModelInput& input) const override {
    Tensor2 out(input.rows.size(), n_horizons_, std::numeric_limits<double>::quiet_NaN());
    for (std::size_t i = 0; i < input.rows.size(); ++i) {
      const auto x = concat_history(input.sequences[i], n_days_pad());
      for (const auto& [h, m] : models) out(i, h) = logreg_predict(m, x);
    }
    return out;
  }
  std::vector<NamedTensor> parameters() const override {
    std::vector<NamedTensor> out;
    for (const auto& [h, m] : models) {
      for (auto& b : to_named_tensors(m)) out.push_back({horizon_prefix(h) + b.name, std::move(b.value)});
    }
    return out;
  }

  std::map<std::size_t, SparseLinearModel> models;

 private:
  std::size_t n_horizons_;
};

// ---- fixed scores ----

class FittedFixed : public FittedModel {
 public:
  FittedFixed(ScalerImputer scaler, std::string name, std::size_t n_horizons,
              std::function<std::vector<double>(const std::string&)> lookup,
              const FeaturizedCohort& data)
      : FittedModel(std::move(scaler), 1),
        name_(std::move(name)),
        n_horizons_(n_horizons),
        lookup_(std::move(lookup)),
        data_(&data) {}
  std::string name() const override { return name_; }
  Tensor2 predict(const ModelInput& input) const override {
    Tensor2 out(input.rows.size(), n_horizons_);
    for (std::size_t i = 0; i < input.rows.size(); ++i) {
      const auto risks = lookup_(data_->cohort.patients.at(input.rows[i]).patient_id);
      if (risks.size() != n_horizons_) {
        throw DataError("fixed scorer returned " + std::to_string(risks.size()) +
                        " risks, expected " + std::to_string(n_horizons_));
      }
      std::copy(risks.begin(), risks.end(), out.row(i).begin());
    }
    return out;
  }

 private:
  std::string name_;
  std::size_t n_horizons_;
  std::function<std::vector<double>(const std::string&)> lookup_;
  const FeaturizedCohort* data_;
};

}  // namespace

FitResult HazardSpec::fit(const FeaturizedCohort& data, const Targets&,
                          std::span<const std::size_t> train_rows, std::uint64_t) const {
  HazardScorer scorer(config_, data.vocabulary.feature_names);
  if (scorer.n_matched() < config_.coefficients.size()) {
    spdlog::debug("hazard score: {} of {} coefficients match available features",
                  scorer.n_matched(), config_.coefficients.size());
  }
  FitResult r;
  r.model = std::make_unique<FittedHazard>(fit_scaler_on(data, train_rows), std::move(scorer),
                                           data.n_horizons());
  r.calibration_rows.assign(train_rows.begin(), train_rows.end());
  return r;
}

std::string LogRegSpec::name() const { return "lr_" + std::to_string(options_.history_window); }

FitResult LogRegSpec::fit(const FeaturizedCohort& data, const Targets& targets,
                          std::span<const std::size_t> train_rows, std::uint64_t seed) const {
  if (options_.lambda_grid.empty()) throw ConfigError("LR lambda grid is empty");
  const std::size_t k = options_.history_window;
  auto model = std::make_unique<FittedLogReg>(fit_scaler_on(data, train_rows), k, data.n_horizons());
  auto [inner, val] = inner_split(train_rows, options_.validation_fraction, derive_seed(seed, 11));

  // Design rows for every training row, indexed by cohort row.
  const ModelInput prepared = model->prepare(data, train_rows);
  std::map<std::size_t, std::size_t> slot;
  for (std::size_t i = 0; i < train_rows.size(); ++i) slot[train_rows[i]] = i;
  const std::size_t width = k * data.n_features();
  std::vector<std::vector<double>> design(train_rows.size());
  for (std::size_t i = 0; i < train_rows.size(); ++i) {
    design[i] = concat_history(prepared.sequences[i], k);
  }
  const auto build = [&](const std::vector<std::size_t>& rows, std::size_t h) {
    Tensor2 X(rows.size(), width);
    std::vector<double> y(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
      const auto& d = design[slot.at(rows[i])];
      std::copy(d.begin(), d.end(), X.row(i).begin());
      y[i] = targets.labels(rows[i], h);
    }
    return std::pair{std::move(X), std::move(y)};
  };

  std::vector<std::size_t> horizons = options_.horizons;
  if (horizons.empty()) {
    for (std::size_t h = 0; h < data.n_horizons(); ++h) horizons.push_back(h);
  }
  for (std::size_t h : horizons) {
    if (h >= data.n_horizons()) throw ConfigError("horizon index out of range");
    const auto fit_rows = rows_with_mask(targets, inner, h);
    const auto val_rows = rows_with_mask(targets, val, h);
    if (!both_classes(targets, fit_rows, h)) {
      spdlog::warn("{}: horizon {} has a single class in training; skipped", name(), h);
      continue;
    }
    const auto [X, y] = build(fit_rows, h);
    const auto [Xv, yv] = build(val_rows, h);
    const bool can_validate = both_classes(targets, val_rows, h);
    double best_auc = -1.0;
    // Strongest penalty first; each fit warm-starts the next one.
    std::vector<double> path = options_.lambda_grid;
    std::sort(path.begin(), path.end(), std::greater<>());
    LogRegOptions solver = options_.solver;
    for (double lambda : path) {
      auto m = logreg_train(X, y, lambda, solver);
      m.history_window = k;
      solver.initial_weights = m.weights;
      solver.initial_intercept = m.intercept;
      double auc = 0.0;
      if (can_validate) {
        std::vector<double> s(val_rows.size());
        for (std::size_t i = 0; i < val_rows.size(); ++i) s[i] = logreg_predict(m, Xv.row(i));
        auc = roc_auc(s, yv);
      }
      if (auc > best_auc) {
        best_auc = auc;
        model->models[h] = std::move(m);
      }
    }
  }
  FitResult r;
  r.model = std::move(model);
  r.calibration_rows = std::move(val);
  return r;
}

RecurrentSpec::RecurrentSpec(RecurrentSpecOptions options) : options_(std::move(options)) {
  options_.config.validate();
}

FittedRecurrent::FittedRecurrent(ScalerImputer scaler, ModelConfig config, std::size_t n_horizons)
    : FittedModel(std::move(scaler), config.n_days_pad),
      config_(std::move(config)),
      n_horizons_(n_horizons) {}

Tensor2 FittedRecurrent::predict(const ModelInput& input) const {
  Tensor2 out(input.rows.size(), n_horizons_, std::numeric_limits<double>::quiet_NaN());
  if (params.empty()) return out;
  for (std::size_t i = 0; i < input.rows.size(); ++i) {
    if (config_.multi_task()) {
      const auto p = ehrcvd::predict(params.begin()->second, input.sequences[i]);
      for (std::size_t h = 0; h < p.probabilities.size() && h < n_horizons_; ++h) {
        out(i, h) = p.probabilities[h];
      }
    } else {
      for (const auto& [h, prm] : params) {
        out(i, h) = ehrcvd::predict(prm, input.sequences[i]).probabilities.at(0);
      }
    }
  }
  return out;
}

std::vector<NamedTensor> FittedRecurrent::parameters() const {
  std::vector<NamedTensor> out;
  if (params.empty()) return out;
  if (config_.multi_task()) return params.begin()->second.to_named_tensors();
  for (const auto& [h, p] : params) {
    for (auto& b : p.to_named_tensors()) out.push_back({horizon_prefix(h) + b.name, std::move(b.value)});
  }
  return out;
}

std::optional<std::vector<double>> FittedRecurrent::attention(const PatientSequence& seq) const {
  if (!config_.uses_attention() || params.empty()) return std::nullopt;
  return ehrcvd::predict(params.begin()->second, seq).attention;
}

namespace {

TrainingSet training_set(const ModelInput& prepared, const std::map<std::size_t, std::size_t>& slot,
                         std::span<const std::size_t> rows, const Targets& targets) {
  TrainingSet s;
  const std::size_t h = targets.labels.cols();
  s.labels = Tensor2(rows.size(), h);
  s.masks = Tensor2(rows.size(), h);
  s.sequences.reserve(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    s.sequences.push_back(prepared.sequences[slot.at(rows[i])]);
    for (std::size_t k = 0; k < h; ++k) {
      s.labels(i, k) = targets.labels(rows[i], k);
      s.masks(i, k) = targets.masks(rows[i], k);
    }
  }
  return s;
}

}  // namespace

FitResult RecurrentSpec::fit(const FeaturizedCohort& data, const Targets& targets,
                             std::span<const std::size_t> train_rows, std::uint64_t seed) const {
  ModelConfig config = options_.config;
  config.seed = derive_seed(config.seed, seed);
  auto model =
      std::make_unique<FittedRecurrent>(fit_scaler_on(data, train_rows), config, data.n_horizons());
  auto [inner, val] = inner_split(train_rows, options_.validation_fraction, derive_seed(seed, 12));
  const ModelInput prepared = model->prepare(data, train_rows);
  std::map<std::size_t, std::size_t> slot;
  for (std::size_t i = 0; i < train_rows.size(); ++i) slot[train_rows[i]] = i;

  if (config.multi_task()) {
    auto tr = training_set(prepared, slot, inner, targets);
    auto va = training_set(prepared, slot, val, targets);
    auto result = train(tr, va, config);
    for (std::size_t h = 0; h < data.n_horizons(); ++h) model->params[h] = result.params;
    model->logs[0] = std::move(result.log);
  } else {
    std::vector<std::size_t> horizons = options_.horizons;
    if (horizons.empty()) {
      for (std::size_t h = 0; h < data.n_horizons(); ++h) horizons.push_back(h);
    }
    for (std::size_t h : horizons) {
      if (h >= data.n_horizons()) throw ConfigError("horizon index out of range");
      ModelConfig single = config;
      single.target_horizon = h;
      single.seed = derive_seed(config.seed, 100 + h);
      const auto fit_rows = rows_with_mask(targets, inner, h);
      const auto val_rows = rows_with_mask(targets, val, h);
      auto tr = training_set(prepared, slot, fit_rows, targets);
      auto va = training_set(prepared, slot, val_rows, targets);
      std::tie(tr.labels, tr.masks) = select_targets(tr.labels, tr.masks, single);
      std::tie(va.labels, va.masks) = select_targets(va.labels, va.masks, single);
      auto result = train(tr, va, single);
      model->params[h] = std::move(result.params);
      model->logs[h] = std::move(result.log);
    }
  }
  FitResult r;
  r.model = std::move(model);
  r.calibration_rows = std::move(val);
  return r;
}

FitResult OracleSpec::fit(const FeaturizedCohort& data, const Targets&,
                          std::span<const std::size_t> train_rows, std::uint64_t) const {
  const auto risks = risks_;
  FitResult r;
  r.model = std::make_unique<FittedFixed>(
      fit_scaler_on(data, train_rows), "oracle", data.n_horizons(),
      [risks](const std::string& id) {
        const auto it = risks->find(id);
        if (it == risks->end()) throw DataError("oracle has no risk for patient " + id);
        return it->second;
      },
      data);
  r.calibration_rows.assign(train_rows.begin(), train_rows.end());
  return r;
}

FitResult ConstantSpec::fit(const FeaturizedCohort& data, const Targets&,
                            std::span<const std::size_t> train_rows, std::uint64_t) const {
  const double v = value_;
  const std::size_t h = data.n_horizons();
  FitResult r;
  r.model = std::make_unique<FittedFixed>(
      fit_scaler_on(data, train_rows), "constant", h,
      [v, h](const std::string&) { return std::vector<double>(h, v); }, data);
  r.calibration_rows.assign(train_rows.begin(), train_rows.end());
  return r;
}

}  // namespace ehrcvd
