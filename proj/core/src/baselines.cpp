#include "ehrcvd/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "ehrcvd/errors.hpp"

namespace ehrcvd {

void HazardScoreConfig::validate() const {
  if (!(baseline_survival > 0.0 && baseline_survival < 1.0)) {
    throw ConfigError("baseline_survival must lie in (0, 1), got " +
                      std::to_string(baseline_survival));
  }
  for (const auto& [name, beta] : coefficients) {
    if (!std::isfinite(beta)) throw ConfigError("non-finite coefficient for " + name);
  }
}

nlohmann::json to_json(const HazardScoreConfig& config) {
  return {{"kind", "hazard_score_config"},
          {"schema_version", HazardScoreConfig::kSchemaVersion},
          {"baseline_survival", config.baseline_survival},
          {"coefficients", config.coefficients},
          {"centering", config.centering}};
}

HazardScoreConfig hazard_config_from_json(const nlohmann::json& j) {
  if (j.value("kind", "") != "hazard_score_config" ||
      j.value("schema_version", -1) != HazardScoreConfig::kSchemaVersion) {
    throw ConfigError("expected a hazard_score_config document with schema_version 1");
  }
  HazardScoreConfig c;
  c.baseline_survival = j.at("baseline_survival").get<double>();
  c.coefficients = j.at("coefficients").get<std::map<std::string, double>>();
  if (j.contains("centering")) c.centering = j.at("centering").get<std::map<std::string, double>>();
  c.validate();
  return c;
}

namespace {

double risk_from_linear_predictor(double lp, double s0) {
  // 1 - S0^exp(lp) = -expm1(exp(lp) * log(S0)).
  const double e = std::exp(std::min(lp, 700.0));
  return -std::expm1(e * std::log(s0));
}

}  // namespace

double qrisk_score(const std::map<std::string, double>& features,
                   const HazardScoreConfig& config) {
  config.validate();
  double lp = 0.0;
  for (const auto& [name, beta] : config.coefficients) {
    const auto it = features.find(name);
    if (it == features.end() || std::isnan(it->second)) continue;
    const auto c = config.centering.find(name);
    lp += beta * (it->second - (c == config.centering.end() ? 0.0 : c->second));
  }
  return risk_from_linear_predictor(lp, config.baseline_survival);
}

HazardScorer::HazardScorer(HazardScoreConfig config, std::span<const std::string> feature_names)
    : config_(std::move(config)) {
  config_.validate();
  for (const auto& [name, beta] : config_.coefficients) {
    const auto it = std::find(feature_names.begin(), feature_names.end(), name);
    if (it == feature_names.end()) continue;
    columns_.push_back(static_cast<std::size_t>(it - feature_names.begin()));
    betas_.push_back(beta);
    const auto c = config_.centering.find(name);
    centers_.push_back(c == config_.centering.end() ? 0.0 : c->second);
  }
}

double HazardScorer::score(std::span<const double> index_day_features) const {
  double lp = 0.0;
  for (std::size_t i = 0; i < columns_.size(); ++i) {
    const double x = index_day_features[columns_[i]];
    if (std::isnan(x)) continue;
    lp += betas_[i] * (x - centers_[i]);
  }
  return risk_from_linear_predictor(lp, config_.baseline_survival);
}

std::vector<double> concat_history(const PatientSequence& sequence, std::size_t k) {
  if (k == 0) throw DataError("concat_history: k must be >= 1");
  const std::size_t nf = sequence.n_features();
  std::vector<std::size_t> real;
  for (std::size_t r = 0; r < sequence.n_days(); ++r) {
    if (sequence.mask[r]) real.push_back(r);
  }
  std::vector<double> out(k * nf, 0.0);
  const std::size_t keep = std::min(k, real.size());
  for (std::size_t i = 0; i < keep; ++i) {
    const auto row = sequence.matrix.row(real[real.size() - keep + i]);
    std::copy(row.begin(), row.end(), out.begin() + static_cast<std::ptrdiff_t>((k - keep + i) * nf));
  }
  return out;
}

double soft_threshold(double w, double t) {
  if (w > t) return w - t;
  if (w < -t) return w + t;
  return 0.0;
}

namespace {

// Row-compressed copy of a dense design matrix.
struct Csr {
  std::size_t rows = 0, cols = 0;
  std::vector<std::size_t> start;
  std::vector<std::uint32_t> index;
  std::vector<double> value;

  explicit Csr(const Tensor2& X) : rows(X.rows()), cols(X.cols()) {
    start.reserve(rows + 1);
    start.push_back(0);
    for (std::size_t r = 0; r < rows; ++r) {
      const auto row = X.row(r);
      for (std::size_t c = 0; c < cols; ++c) {
        if (row[c] != 0.0) {
          index.push_back(static_cast<std::uint32_t>(c));
          value.push_back(row[c]);
        }
      }
      start.push_back(index.size());
    }
  }

  double row_dot(std::size_t r, std::span<const double> w) const {
    double s = 0.0;
    for (std::size_t k = start[r]; k < start[r + 1]; ++k) s += value[k] * w[index[k]];
    return s;
  }
};

// Mean-BCE gradient; last entry is the intercept.
void gradient(const Csr& X, std::span<const double> y, std::span<const double> w, double b,
              std::vector<double>& g) {
  const std::size_t d = X.cols;
  std::fill(g.begin(), g.end(), 0.0);
  const double inv_n = 1.0 / static_cast<double>(X.rows);
  for (std::size_t r = 0; r < X.rows; ++r) {
    const double resid = (sigmoid(X.row_dot(r, w) + b) - y[r]) * inv_n;
    for (std::size_t k = X.start[r]; k < X.start[r + 1]; ++k) g[X.index[k]] += resid * X.value[k];
    g[d] += resid;
  }
}

double residual_from_gradient(std::span<const double> g, std::span<const double> w,
                              double lambda) {
  double worst = std::abs(g[w.size()]);
  for (std::size_t j = 0; j < w.size(); ++j) {
    const double r = w[j] != 0.0 ? std::abs(g[j] + lambda * (w[j] > 0 ? 1.0 : -1.0))
                                 : std::max(0.0, std::abs(g[j]) - lambda);
    worst = std::max(worst, r);
  }
  return worst;
}

// Column means of the design; the solver works on centred columns so the
// intercept decouples from the weights and the step size is not dominated by
// the all-positive mean direction.
std::vector<double> column_means(const Csr& X) {
  std::vector<double> mu(X.cols, 0.0);
  for (std::size_t k = 0; k < X.value.size(); ++k) mu[X.index[k]] += X.value[k];
  for (double& m : mu) m /= static_cast<double>(X.rows);
  return mu;
}

// Largest eigenvalue of [Xc 1]^T [Xc 1] / (4n), Xc the centred design. The
// centred columns are orthogonal to 1, so the spectrum splits into that of
// Xc^T Xc (power iteration) and n.
double lipschitz_constant(const Csr& X, std::span<const double> mu) {
  const std::size_t d = X.cols;
  const double n = static_cast<double>(X.rows);
  std::vector<double> v(d, 1.0 / std::sqrt(static_cast<double>(std::max<std::size_t>(d, 1))));
  std::vector<double> Xv(X.rows), next(d);
  double eig = 0.0;
  for (int it = 0; it < 200 && d > 0; ++it) {
    const double shift = dot(mu, v);
    double total = 0.0;
    for (std::size_t r = 0; r < X.rows; ++r) {
      Xv[r] = X.row_dot(r, v) - shift;
      total += Xv[r];
    }
    std::fill(next.begin(), next.end(), 0.0);
    for (std::size_t r = 0; r < X.rows; ++r) {
      for (std::size_t k = X.start[r]; k < X.start[r + 1]; ++k) next[X.index[k]] += Xv[r] * X.value[k];
    }
    for (std::size_t j = 0; j < d; ++j) next[j] -= mu[j] * total;
    double norm = 0.0;
    for (double x : next) norm += x * x;
    norm = std::sqrt(norm);
    if (norm == 0.0) break;
    const double prev = eig;
    eig = norm;  // ||A v|| with ||v|| = 1
    for (std::size_t i = 0; i < d; ++i) v[i] = next[i] / norm;
    if (it > 10 && std::abs(eig - prev) <= 1e-10 * eig) break;
  }
  // Power iteration approaches from below; a small margin keeps 1/L safe.
  return std::max({eig, n, 1e-12}) * 1.02 / (4.0 * n);
}

// Mean-BCE gradient in the centred parametrisation x.w + b = (x - mu).w + c.
void centred_gradient(const Csr& X, std::span<const double> y, std::span<const double> mu,
                      std::span<const double> w, double c, std::vector<double>& g) {
  const std::size_t d = X.cols;
  std::fill(g.begin(), g.end(), 0.0);
  const double inv_n = 1.0 / static_cast<double>(X.rows);
  const double shift = c - dot(mu, w);
  for (std::size_t r = 0; r < X.rows; ++r) {
    const double resid = (sigmoid(X.row_dot(r, w) + shift) - y[r]) * inv_n;
    for (std::size_t k = X.start[r]; k < X.start[r + 1]; ++k) g[X.index[k]] += resid * X.value[k];
    g[d] += resid;
  }
  for (std::size_t j = 0; j < d; ++j) g[j] -= mu[j] * g[d];
}

}  // namespace

SparseLinearModel logreg_train(const Tensor2& X, std::span<const double> y, double lambda,
                               const LogRegOptions& options) {
  if (X.rows() == 0) throw DataError("logreg_train: empty design matrix");
  if (y.size() != X.rows()) throw DataError("logreg_train: label count differs from rows");
  if (!(lambda >= 0.0)) throw ConfigError("logreg_train: lambda must be >= 0");
  if (!X.all_finite()) throw DataError("logreg_train: non-finite entries in design matrix");
  for (double v : y) {
    if (!std::isfinite(v)) throw DataError("logreg_train: non-finite label");
  }
  const std::size_t d = X.cols();
  if (!options.initial_weights.empty() && options.initial_weights.size() != d) {
    throw ConfigError("logreg_train: warm start has " +
                      std::to_string(options.initial_weights.size()) + " weights, design has " +
                      std::to_string(d) + " columns");
  }

  const Csr csr(X);
  const auto mu = column_means(csr);
  const double step = 1.0 / lipschitz_constant(csr, mu);

  std::vector<double> w(d, 0.0), g(d + 1);
  if (!options.initial_weights.empty()) w = options.initial_weights;
  double c = options.initial_intercept + dot(mu, w);
  std::vector<double> w_prev = w, yw = w;
  double c_prev = c, yc = c;
  double t = 1.0;

  SparseLinearModel model;
  model.lambda = lambda;
  for (std::size_t it = 1; it <= options.max_iterations; ++it) {
    centred_gradient(csr, y, mu, yw, yc, g);
    w_prev = w;
    c_prev = c;
    for (std::size_t j = 0; j < d; ++j) w[j] = soft_threshold(yw[j] - step * g[j], step * lambda);
    c = yc - step * g[d];
    model.iterations = it;

    if (options.accelerate) {
      // Restart momentum when the step and the momentum disagree.
      double agree = (yc - c) * (c - c_prev);
      for (std::size_t j = 0; j < d; ++j) agree += (yw[j] - w[j]) * (w[j] - w_prev[j]);
      if (agree > 0.0) {
        t = 1.0;
        yw = w;
        yc = c;
      } else {
        const double t_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
        const double beta = (t - 1.0) / t_next;
        for (std::size_t j = 0; j < d; ++j) yw[j] = w[j] + beta * (w[j] - w_prev[j]);
        yc = c + beta * (c - c_prev);
        t = t_next;
      }
    } else {
      yw = w;
      yc = c;
    }

    if (it % 10 == 0 || it == options.max_iterations) {
      gradient(csr, y, w, c - dot(mu, w), g);
      model.stationarity_residual = residual_from_gradient(g, w, lambda);
      if (!std::isfinite(model.stationarity_residual)) {
        throw NumericError("logreg_train diverged");
      }
      if (model.stationarity_residual < options.tolerance) break;
    }
  }
  model.intercept = c - dot(mu, w);
  model.weights = std::move(w);
  return model;
}

double logreg_predict(const SparseLinearModel& model, std::span<const double> x) {
  if (x.size() != model.weights.size()) {
    throw DataError("logreg_predict: input has " + std::to_string(x.size()) +
                    " features, model has " + std::to_string(model.weights.size()));
  }
  return sigmoid(dot(model.weights, x) + model.intercept);
}

std::vector<double> logreg_loss_gradient(const Tensor2& X, std::span<const double> y,
                                         const SparseLinearModel& model) {
  std::vector<double> g(X.cols() + 1);
  gradient(Csr(X), y, model.weights, model.intercept, g);
  return g;
}

double l1_stationarity_residual(const Tensor2& X, std::span<const double> y,
                                const SparseLinearModel& model) {
  const auto g = logreg_loss_gradient(X, y, model);
  return residual_from_gradient(g, model.weights, model.lambda);
}

std::vector<NamedTensor> to_named_tensors(const SparseLinearModel& model) {
  return {{"weights", Tensor2(1, model.weights.size(), model.weights)},
          {"intercept", Tensor2(1, 1, std::vector<double>{model.intercept})}};
}

SparseLinearModel linear_model_from_named_tensors(std::span<const NamedTensor> blocks,
                                                  double lambda, std::size_t history_window) {
  SparseLinearModel m;
  m.lambda = lambda;
  m.history_window = history_window;
  bool have_w = false, have_b = false;
  for (const auto& b : blocks) {
    if (b.name == "weights") {
      m.weights.assign(b.value.values().begin(), b.value.values().end());
      have_w = true;
    } else if (b.name == "intercept" && b.value.size() == 1) {
      m.intercept = b.value[0];
      have_b = true;
    }
  }
  if (!have_w || !have_b) throw DataError("checkpoint lacks weights/intercept blocks");
  return m;
}

}  // namespace ehrcvd
