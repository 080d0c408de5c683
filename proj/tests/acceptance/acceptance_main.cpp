// Acceptance run: one PASS/FAIL line per criterion at pinned tolerances.
// Exit status 0 only when every selected criterion passes.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <numeric>
#include <optional>
#include <set>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>
#include <spdlog/fmt/fmt.h>
#include <spdlog/spdlog.h>

#include "ehrcvd/baselines.hpp"
#include "ehrcvd/errors.hpp"
#include "ehrcvd/evaluator.hpp"
#include "ehrcvd/metrics.hpp"
#include "ehrcvd/recurrent.hpp"
#include "ehrcvd/synth_cohort.hpp"
#include "ehrcvd_cli/artifacts.hpp"
#include "ehrcvd_cli/cli.hpp"

namespace fs = std::filesystem;
using namespace ehrcvd;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Verdict {
  bool pass = false;
  std::string detail;
};

// ---- shared cohorts ----

struct Study {
  GeneratedCohort generated;
  FeaturizedCohort data;
  std::vector<std::vector<std::size_t>> folds;
};

constexpr std::uint64_t kFoldSeed = 11;
constexpr std::uint64_t kTrainSeed = 5;
constexpr std::size_t kFolds = 5;

Study make_study(std::size_t n_patients) {
  auto config = GeneratorConfig::defaults();
  config.n_patients = n_patients;
  Study s;
  s.generated = generate(config);
  const auto built = build_cohort(s.generated.records, EventDefinition::defaults(config.disease),
                                  config.horizons, config.study_days);
  s.data = featurize_cohort(built.cohort, s.generated.records, VocabularyOptions{},
                            PhysiologicalRanges::defaults());
  s.folds = split_folds(s.data.cohort, kFolds, kFoldSeed);
  return s;
}

const Study& small_study() {
  static const Study s = make_study(2000);
  return s;
}

const Study& default_study() {
  static const Study s = make_study(GeneratorConfig::defaults().n_patients);
  return s;
}

// Recurrent settings chosen by tuning on the default cohort. Dropout is a
// tuner dimension (off by default); the tuned value is 0.2.
ModelConfig tuned_recurrent(Variant variant) {
  ModelConfig c;
  c.variant = variant;
  c.n_hidden = 32;
  c.n_days_pad = 30;
  c.learning_rate = 1e-3;
  c.batch_size = 32;
  c.epochs = 60;
  c.input_dropout = 0.2;
  return c;
}

std::vector<std::size_t> all_horizons(const FeaturizedCohort& data) {
  std::vector<std::size_t> h(data.n_horizons());
  std::iota(h.begin(), h.end(), 0);
  return h;
}

std::string fmt_auc(const HorizonAggregate& a) { return fmt::format("{:.3f}±{:.3f}", a.auc.mean, a.auc.sd); }

// ---- criterion 1: gradients ----

RecurrentParams random_params(std::size_t F, std::size_t H, std::size_t K, bool attention, Rng& rng) {
  auto p = init_params(F, H, K, attention, rng.next_u64());
  for (auto& r : p.refs()) {
    for (auto& v : r.value->values()) v = rng.uniform(-0.8, 0.8);
  }
  return p;
}

TrainingSet random_set(std::size_t n, std::size_t days, std::size_t F, std::size_t K, Rng& rng) {
  TrainingSet s;
  s.labels = Tensor2(n, K);
  s.masks = Tensor2(n, K, 1.0);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t real = 1 + rng.below(days);
    PatientSequence seq;
    seq.patient_id = "g" + std::to_string(i);
    seq.matrix = Tensor2(days, F);
    for (std::size_t t = 0; t < days; ++t) {
      const bool is_real = t >= days - real;
      seq.days.push_back(is_real ? static_cast<std::int64_t>(10 * t) : kPaddingDay);
      seq.mask.push_back(is_real);
      if (is_real) {
        for (std::size_t f = 0; f < F; ++f) seq.matrix(t, f) = rng.uniform();
      }
    }
    s.sequences.push_back(std::move(seq));
    for (std::size_t k = 0; k < K; ++k) {
      s.labels(i, k) = rng.bernoulli(0.5);
      if (rng.bernoulli(0.2)) s.masks(i, k) = 0.0;
    }
  }
  return s;
}

double recurrent_grad_error(Variant variant, std::uint64_t seed) {
  Rng rng(seed);
  ModelConfig cfg;
  cfg.variant = variant;
  const std::size_t K = n_outputs(cfg, 4);
  auto params = random_params(3, 2, K, cfg.uses_attention(), rng);
  const auto data = random_set(4, 3, 3, K, rng);
  std::vector<std::size_t> batch(data.size());
  std::iota(batch.begin(), batch.end(), 0);
  RecurrentParams grad;
  loss_and_gradient(params, data, batch, &grad);
  std::vector<const Tensor2*> analytic;
  for (auto& r : grad.refs()) analytic.push_back(r.value);
  return grad_check(params.refs(), analytic, [&] {
           return loss_and_gradient(params, data, batch, nullptr);
         }).max_rel_error;
}

double logreg_grad_error(std::uint64_t seed) {
  Rng rng(seed);
  const std::size_t n = 80, d = 6;
  Tensor2 X(n, d);
  std::vector<double> y(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < d; ++j) X(i, j) = rng.normal();
    y[i] = rng.bernoulli(0.4);
  }
  SparseLinearModel m;
  for (std::size_t j = 0; j < d; ++j) m.weights.push_back(rng.uniform(-0.5, 0.5));
  m.intercept = rng.uniform(-0.5, 0.5);
  const auto g = logreg_loss_gradient(X, y, m);
  Tensor2 w(1, d, m.weights), b(1, 1, std::vector<double>{m.intercept});
  Tensor2 gw(1, d, std::vector<double>(g.begin(), g.end() - 1)), gb(1, 1, std::vector<double>{g.back()});
  const auto loss = [&] {
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double z = dot(w.values(), X.row(i)) + b[0];
      total -= y[i] * log_sigmoid(z) + (1.0 - y[i]) * log_sigmoid(-z);
    }
    return total / static_cast<double>(n);
  };
  const std::vector<ParamRef> refs = {{"w", &w}, {"b", &b}};
  const std::vector<const Tensor2*> grads = {&gw, &gb};
  return grad_check(refs, grads, loss).max_rel_error;
}

Verdict criterion_gradients() {
  const auto t0 = Clock::now();
  double worst_rnn = 0.0, worst_lr = 0.0;
  std::string per_variant;
  for (Variant v : {Variant::gru, Variant::mt_gru, Variant::mt_att_gru}) {
    double worst = 0.0;
    for (std::uint64_t seed = 1; seed <= 5; ++seed) worst = std::max(worst, recurrent_grad_error(v, 100 * seed));
    per_variant += fmt::format(" {} {:.1e};", to_string(v), worst);
    worst_rnn = std::max(worst_rnn, worst);
  }
  for (std::uint64_t seed = 1; seed <= 5; ++seed) worst_lr = std::max(worst_lr, logreg_grad_error(seed));
  const double elapsed = seconds_since(t0);
  return {worst_rnn < 1e-4 && worst_lr < 1e-6 && elapsed < 30.0,
          fmt::format("max rel error{} lr {:.1e}; {:.1f}s", per_variant, worst_lr, elapsed)};
}

// ---- criterion 2: metrics against brute force ----

double brute_force_auc(const std::vector<double>& s, const std::vector<double>& y) {
  double concordant = 0.0, pairs = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    for (std::size_t j = 0; j < s.size(); ++j) {
      if (y[i] != 1.0 || y[j] != 0.0) continue;
      pairs += 1.0;
      concordant += s[i] > s[j] ? 1.0 : (s[i] == s[j] ? 0.5 : 0.0);
    }
  }
  return concordant / pairs;
}

double f1_at(const std::vector<double>& s, const std::vector<double>& y, double t) {
  double tp = 0, fp = 0, fn = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    const bool pos = s[i] >= t;
    tp += pos && y[i] == 1.0;
    fp += pos && y[i] == 0.0;
    fn += !pos && y[i] == 1.0;
  }
  return tp == 0 ? 0.0 : 2 * tp / (2 * tp + fp + fn);
}

void random_instance(Rng& rng, std::size_t n, bool ties, std::vector<double>& s, std::vector<double>& y) {
  do {
    s.assign(n, 0.0);
    y.assign(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      y[i] = rng.bernoulli(0.35);
      s[i] = ties ? std::floor(rng.uniform() * 6) / 6 : rng.uniform() + 0.4 * y[i];
    }
  } while (std::count(y.begin(), y.end(), 1.0) == 0 || std::count(y.begin(), y.end(), 0.0) == 0);
}

Verdict criterion_metrics() {
  const auto t0 = Clock::now();
  Rng rng(2024);
  double worst_auc = 0.0, worst_f1 = 0.0;
  std::vector<double> s, y;
  for (int t = 0; t < 200; ++t) {
    random_instance(rng, 5 + rng.below(200), t % 2 == 0, s, y);
    worst_auc = std::max(worst_auc, std::abs(roc_auc(s, y) - brute_force_auc(s, y)));
  }
  for (int t = 0; t < 50; ++t) {
    random_instance(rng, 5 + rng.below(80), t % 3 == 0, s, y);
    std::vector<double> cuts = s;
    std::sort(cuts.begin(), cuts.end());
    double best = f1_at(s, y, cuts.front() - 1.0);
    for (double c : cuts) best = std::max(best, f1_at(s, y, c));
    best = std::max(best, f1_at(s, y, cuts.back() + 1.0));
    const auto got = choose_threshold(s, y);
    worst_f1 = std::max({worst_f1, std::abs(got.f1 - best), std::abs(f1_at(s, y, got.threshold) - got.f1)});
  }
  const double elapsed = seconds_since(t0);
  return {worst_auc <= 1e-12 && worst_f1 <= 1e-12 && elapsed < 10.0,
          fmt::format("auc max diff {:.1e} over 200; F1 max diff {:.1e} over 50; {:.2f}s", worst_auc,
                      worst_f1, elapsed)};
}

// ---- criterion 3: L1 logistic regression optimality ----

Verdict criterion_l1() {
  const auto& data = small_study().data;
  // A real design: the 50-day history features at the longest horizon.
  const std::size_t window = 50, h = data.n_horizons() - 1;
  std::vector<std::size_t> rows;
  for (std::size_t r = 0; r < data.size(); ++r) {
    if (data.masks(r, h) != 0.0) rows.push_back(r);
  }
  std::vector<PatientSequence> raw;
  for (std::size_t r : rows) raw.push_back(data.sequences[r]);
  const auto scaler = fit_scaler_imputer(raw);
  const std::size_t width = window * data.n_features();
  Tensor2 X(rows.size(), width);
  std::vector<double> y(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto flat = concat_history(transform(raw[i], scaler, window), window);
    std::copy(flat.begin(), flat.end(), X.row(i).begin());
    y[i] = data.labels(rows[i], h);
  }
  double worst = 0.0;
  std::string detail;
  for (double lambda : {1e-3, 1e-2}) {
    const auto m = logreg_train(X, y, lambda);
    const auto g = logreg_loss_gradient(X, y, m);
    double violation = std::abs(g.back());
    std::size_t nonzero = 0;
    for (std::size_t j = 0; j < m.weights.size(); ++j) {
      if (m.weights[j] == 0.0) {
        violation = std::max(violation, std::abs(g[j]) - lambda);
      } else {
        ++nonzero;
        violation = std::max(violation, std::abs(g[j] + lambda * (m.weights[j] > 0 ? 1.0 : -1.0)));
      }
    }
    worst = std::max(worst, violation);
    detail += fmt::format("lambda {:g}: violation {:.1e}, {} nonzero; ", lambda, violation, nonzero);
  }
  // Above lambda_max = max |grad at w=0| every weight must be exactly zero.
  const auto huge = logreg_train(X, y, 1e6);
  const bool zeros = std::all_of(huge.weights.begin(), huge.weights.end(), [](double w) { return w == 0.0; });
  const double base_rate = std::accumulate(y.begin(), y.end(), 0.0) / static_cast<double>(y.size());
  const double b_err = std::abs(sigmoid(huge.intercept) - base_rate);
  detail += fmt::format("lambda 1e6: all zero {}, |sigmoid(b) - base rate| {:.1e}; {} x {} design",
                        zeros, b_err, X.rows(), X.cols());
  return {worst <= 1e-4 && zeros && b_err <= 1e-4, detail};
}

// ---- criterion 4: oracle and constant through the CV harness ----

Verdict criterion_oracle() {
  const auto& st = small_study();
  const auto oracle = cross_validate(st.data, OracleSpec(st.generated.truth.risk_map()), st.folds, kTrainSeed);
  const auto constant = cross_validate(st.data, ConstantSpec(0.5), st.folds, kTrainSeed);
  std::vector<std::string> ids;
  for (const auto& p : st.data.cohort.patients) ids.push_back(p.patient_id);
  bool pass = true;
  std::string detail = fmt::format("{} pairs", st.data.cohort.n_pairs());
  for (std::size_t h = 0; h < st.data.n_horizons(); ++h) {
    const double bayes = bayes_auc(st.generated.truth, h, ids);
    const double got = oracle.metrics.aggregate[h].auc.mean;
    const double c = constant.metrics.aggregate[h].auc.mean;
    pass = pass && std::abs(got - bayes) <= 0.03 && std::abs(c - 0.5) <= 0.02 &&
           oracle.metrics.aggregate[h].n_folds == kFolds;
    detail += fmt::format("; {} oracle {:.3f} bayes {:.3f} constant {:.3f}", st.data.cohort.horizons.label(h),
                          got, bayes, c);
  }
  return {pass, detail};
}

// ---- criterion 5: model ordering at the longest horizon ----

struct OrderingRun {
  CvResult mt_gru;  // fold models kept for the importance criterion
  double seconds = 0.0;
  Verdict verdict;
};

HazardScoreConfig shipped_qrisk() {
  std::ifstream in(fs::path(EHRCVD_CONFIG_DIR) / "qrisk_default.json");
  if (!in) throw DataError("cannot open qrisk_default.json");
  return hazard_config_from_json(nlohmann::json::parse(in));
}

OrderingRun& ordering_run() {
  static OrderingRun run = [] {
    OrderingRun r;
    const auto& st = default_study();
    const std::size_t h = st.data.n_horizons() - 1;
    const auto t0 = Clock::now();

    const auto hz = shipped_qrisk();
    bool all_zero = !hz.coefficients.empty();
    for (const auto& [name, beta] : hz.coefficients) all_zero = all_zero && beta == 0.0;
    const auto qrisk = cross_validate(st.data, HazardSpec(hz), st.folds, kTrainSeed);

    LogRegSpecOptions lr_opts;
    lr_opts.history_window = 50;
    lr_opts.horizons = {h};
    const auto lr = cross_validate(st.data, LogRegSpec(lr_opts), st.folds, kTrainSeed);

    CvOptions keep;
    keep.keep_models = true;
    r.mt_gru = cross_validate(st.data, RecurrentSpec({tuned_recurrent(Variant::mt_gru), all_horizons(st.data)}),
                              st.folds, kTrainSeed, keep);
    r.seconds = seconds_since(t0);

    const double a_gru = r.mt_gru.metrics.aggregate[h].auc.mean;
    const double a_lr = lr.metrics.aggregate[h].auc.mean;
    const double a_q = qrisk.metrics.aggregate[h].auc.mean;
    const bool ordered = a_gru > a_lr && a_lr > a_q && a_gru - a_lr >= 0.03;
    const bool chance = std::abs(a_q - 0.5) <= 0.03;
    r.verdict = {ordered && chance && all_zero && r.seconds < 600.0,
                 fmt::format("{} pairs; mt_gru {} > lr_50 {} > qrisk {} (zero coefficients {}); gap {:.3f}; {:.0f}s",
                             st.data.cohort.n_pairs(), fmt_auc(r.mt_gru.metrics.aggregate[h]),
                             fmt_auc(lr.metrics.aggregate[h]), fmt_auc(qrisk.metrics.aggregate[h]), all_zero,
                             a_gru - a_lr, r.seconds)};
    return r;
  }();
  return run;
}

Verdict criterion_ordering() { return ordering_run().verdict; }

// ---- criterion 6: multi-task transfer to a rare horizon ----

Verdict criterion_transfer() {
  const auto& st = default_study();
  const std::size_t rare = 0, longest = st.data.n_horizons() - 1;
  const auto subsample = subsample_positives(rare, longest, 0.2);
  double worst_ratio = 0.0;
  CvOptions opts;
  opts.transform = [&](Targets& t, std::span<const std::size_t> rows, std::uint64_t seed) {
    subsample(t, rows, seed);
    double p_rare = 0, p_long = 0;
    for (std::size_t r : rows) {
      p_rare += t.masks(r, rare) != 0.0 && t.labels(r, rare) == 1.0;
      p_long += t.masks(r, longest) != 0.0 && t.labels(r, longest) == 1.0;
    }
    worst_ratio = std::max(worst_ratio, p_rare / p_long);
  };
  auto single = tuned_recurrent(Variant::gru);
  single.target_horizon = rare;
  const auto gru = cross_validate(st.data, RecurrentSpec({single, {rare}}), st.folds, kTrainSeed, opts);
  const auto mt = cross_validate(st.data, RecurrentSpec({tuned_recurrent(Variant::mt_gru), all_horizons(st.data)}),
                                 st.folds, kTrainSeed, opts);
  const double gain = mt.metrics.aggregate[rare].auc.mean - gru.metrics.aggregate[rare].auc.mean;
  return {worst_ratio <= 0.2 && gain >= 0.02,
          fmt::format("{} AUC mt_gru {} vs gru {}; gain {:.3f}; max train positive ratio {:.3f}",
                      st.data.cohort.horizons.label(rare), fmt_auc(mt.metrics.aggregate[rare]),
                      fmt_auc(gru.metrics.aggregate[rare]), gain, worst_ratio)};
}

// ---- criterion 7: permutation importance ----

Verdict criterion_importance() {
  const auto& st = default_study();
  const auto& cv = ordering_run().mt_gru;
  const std::vector<std::string> signal = {"age", "vital:SBP:median"};
  const std::string noise = "lab:SODIUM:median";
  ImportanceOptions opts;
  opts.horizon = st.data.n_horizons() - 1;
  opts.repeats = 5;
  for (const auto& name : signal) opts.features.push_back(st.data.vocabulary.feature_index(name));
  opts.features.push_back(st.data.vocabulary.feature_index(noise));
  const auto records = permutation_importance(st.data, cv, opts, 13);
  bool pass = true;
  std::string detail;
  for (const auto& r : records) {
    const bool is_noise = r.feature == noise;
    const bool ok = is_noise ? std::abs(r.mean_delta_f1) <= 0.02 && r.p_value > 0.05
                             : r.mean_delta_f1 > 0.0 && r.p_value < 0.05;
    pass = pass && ok;
    detail += fmt::format("{}{} dF1 {:+.4f} p {:.2g}; ", is_noise ? "noise " : "", r.feature, r.mean_delta_f1,
                          r.p_value);
  }
  detail += fmt::format("n = {} per feature", records.front().n);
  return {pass, detail};
}

// ---- criterion 8: attention weights ----

Verdict criterion_attention() {
  const auto& st = small_study();
  auto cfg = tuned_recurrent(Variant::mt_att_gru);
  cfg.epochs = 8;
  cfg.n_hidden = 16;
  const RecurrentSpec spec({cfg, all_horizons(st.data)});
  std::vector<std::size_t> train_rows;
  for (std::size_t f = 1; f < st.folds.size(); ++f) {
    train_rows.insert(train_rows.end(), st.folds[f].begin(), st.folds[f].end());
  }
  std::sort(train_rows.begin(), train_rows.end());
  const auto fit = spec.fit(st.data, Targets{st.data.labels, st.data.masks}, train_rows, kTrainSeed);
  const auto test = fit.model->prepare(st.data, st.folds[0]);
  double worst_sum = 0.0, min_weight = 0.0, max_pad = 0.0;
  std::size_t padded_rows = 0;
  for (const auto& seq : test.sequences) {
    const auto w = fit.model->attention(seq);
    if (!w || w->size() != seq.n_days()) return {false, "model returned no per-row attention"};
    double total = 0.0;
    for (std::size_t t = 0; t < w->size(); ++t) {
      min_weight = std::min(min_weight, (*w)[t]);
      if (seq.mask[t]) {
        total += (*w)[t];
      } else {
        ++padded_rows;
        max_pad = std::max(max_pad, std::abs((*w)[t]));
      }
    }
    worst_sum = std::max(worst_sum, std::abs(total - 1.0));
  }
  return {min_weight >= 0.0 && worst_sum <= 1e-9 && max_pad == 0.0 && padded_rows > 0,
          fmt::format("{} sequences; min weight {:.2e}; max |sum - 1| {:.1e}; max padded weight {} over {} padded rows",
                      test.sequences.size(), min_weight, worst_sum, max_pad, padded_rows)};
}

// ---- criterion 9: reproducible CLI runs ----

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

Verdict criterion_cli(const fs::path& workdir) {
  const std::string config = (fs::path(EHRCVD_CONFIG_DIR) / "demo_experiment.json").string();
  const std::vector<std::string> stages = {"generate", "cohort",     "featurize", "tune",
                                           "train",    "evaluate",   "importance", "attention"};
  std::vector<fs::path> outs = {workdir / "cli_a", workdir / "cli_b"};
  for (const auto& out : outs) {
    fs::remove_all(out);
    for (const auto& stage : stages) {
      const int code = cli::run({"ehrcvd", stage, "--config", config, "--out", out.string(), "--log-level", "error"});
      if (code != 0) return {false, fmt::format("{} exited with {}", stage, code)};
    }
    if (const int code = cli::run({"ehrcvd", "report", "--out", out.string(), "--log-level", "error"}); code != 0) {
      return {false, fmt::format("report exited with {}", code)};
    }
  }
  std::size_t compared = 0;
  auto all_stages = stages;
  all_stages.push_back("report");
  for (const auto& stage : all_stages) {
    const auto ma = slurp(outs[0] / stage / "manifest.json"), mb = slurp(outs[1] / stage / "manifest.json");
    if (ma.empty()) return {false, stage + " wrote no manifest"};
    if (ma != mb) return {false, stage + " manifests differ"};
    const auto manifest = nlohmann::json::parse(ma);
    for (const auto& a : manifest.at("artifacts")) {
      const auto name = a.at("path").get<std::string>();
      for (const auto& out : outs) {
        if (cli::sha256_file(out / stage / name) != a.at("sha256")) {
          return {false, fmt::format("{}/{} does not match its manifest hash", stage, name)};
        }
      }
      ++compared;
    }
  }
  return {compared > 0, fmt::format("{} stages rerun; {} hashed artifacts and every manifest byte-identical",
                            all_stages.size(), compared)};
}

// ---- criterion 10: cohort invariants ----

Verdict cohort_invariants(const Cohort& c, std::string& detail) {
  const auto counts = c.positive_counts();
  bool monotone = true;
  for (std::size_t h = 1; h < counts.size(); ++h) monotone = monotone && counts[h] >= counts[h - 1];
  bool matched = c.patients.size() == 2 * c.n_pairs();
  std::set<std::string> controls;
  for (std::size_t k = 0; matched && k < c.n_pairs(); ++k) {
    const auto& cs = c.patients[2 * k];
    const auto& ct = c.patients[2 * k + 1];
    matched = cs.is_case && !ct.is_case && cs.sex == ct.sex && controls.insert(ct.patient_id).second &&
              c.matching_report[k].case_id == cs.patient_id && c.matching_report[k].control_id == ct.patient_id;
  }
  detail += fmt::format("{} pairs, positives", c.n_pairs());
  for (auto n : counts) detail += fmt::format(" {}", n);
  detail += "; ";
  return {monotone && matched && c.n_pairs() > 0, ""};
}

Verdict criterion_cohort() {
  std::string detail;
  bool pass = true;
  for (std::size_t n : {std::size_t{500}, std::size_t{2000}}) {
    auto config = GeneratorConfig::defaults();
    config.n_patients = n;
    config.seed = 100 + n;
    const auto g = generate(config);
    const auto built = build_cohort(g.records, EventDefinition::defaults(config.disease), config.horizons,
                                    config.study_days);
    pass = cohort_invariants(built.cohort, detail).pass && pass;
  }
  pass = cohort_invariants(default_study().data.cohort, detail).pass && pass;
  detail += "sexes match 1:1 with unique controls";
  return {pass, detail};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"acceptance criteria"};
  std::string workdir = "acceptance_work";
  std::vector<int> only;
  app.add_option("--workdir", workdir, "scratch directory for CLI runs");
  app.add_option("--only", only, "criterion numbers to run (default: all)")->check(CLI::Range(1, 10));
  CLI11_PARSE(app, argc, argv);
  spdlog::set_level(spdlog::level::err);
  fs::create_directories(workdir);

  const std::vector<std::pair<std::string, std::function<Verdict()>>> criteria = {
      {"gradient checks", criterion_gradients},
      {"AUC and threshold against brute force", criterion_metrics},
      {"L1 logistic regression optimality", criterion_l1},
      {"oracle and constant scorers", criterion_oracle},
      {"model ordering at the longest horizon", criterion_ordering},
      {"multi-task gain on the rare horizon", criterion_transfer},
      {"permutation importance", criterion_importance},
      {"attention weights", criterion_attention},
      {"reproducible CLI reruns", [&] { return criterion_cli(workdir); }},
      {"cohort invariants", criterion_cohort},
  };
  bool all = true;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int number = static_cast<int>(i + 1);
    if (!only.empty() && std::find(only.begin(), only.end(), number) == only.end()) continue;
    const auto t0 = Clock::now();
    Verdict v;
    try {
      v = criteria[i].second();
    } catch (const std::exception& e) {
      v = {false, std::string("exception: ") + e.what()};
    }
    all = all && v.pass;
    std::cout << fmt::format("criterion {:>2} {} : {} ({}) [{:.1f}s]", number, v.pass ? "PASS" : "FAIL",
                             criteria[i].first, v.detail, seconds_since(t0))
              << std::endl;
  }
  return all ? 0 : 1;
}
