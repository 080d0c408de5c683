#include "ehrcvd/tuner.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <spdlog/spdlog.h>

#include "ehrcvd/errors.hpp"
#include "ehrcvd/rng.hpp"

namespace ehrcvd {

double Dimension::to_value(double unit) const {
  const double u = std::clamp(unit, 0.0, 1.0);
  if (u == 0.0) return low;
  if (u == 1.0) return high;
  double v = scale == Scale::log ? std::exp(std::log(low) + u * (std::log(high) - std::log(low)))
                                 : low + u * (high - low);
  if (integer) v = std::round(v);
  return std::clamp(v, low, high);
}

double Dimension::to_unit(double value) const {
  const double v = std::clamp(value, low, high);
  const double u = scale == Scale::log ? (std::log(v) - std::log(low)) / (std::log(high) - std::log(low))
                                       : (v - low) / (high - low);
  return std::clamp(u, 0.0, 1.0);
}

SearchSpace SearchSpace::defaults() {
  return {{
      {"n_hidden", 4, 64, Scale::log, true},
      {"n_days_pad", 10, 100, Scale::linear, true},
      {"learning_rate", 1e-4, 1e-2, Scale::log, false},
      {"batch_size", 16, 128, Scale::log, true},
      {"lambda", 1e-5, 1e-1, Scale::log, false},
      {"input_dropout", 0.0, 0.5, Scale::linear, false},
  }};
}

void SearchSpace::validate() const {
  if (dimensions.empty()) throw ConfigError("search space has no dimensions");
  for (const auto& d : dimensions) {
    if (!(d.low < d.high)) throw ConfigError("search dimension " + d.name + ": low must be < high");
    if (d.scale == Scale::log && !(d.low > 0.0)) {
      throw ConfigError("search dimension " + d.name + ": log scale needs low > 0");
    }
  }
}

std::vector<double> SearchSpace::snap(std::span<const double> unit) const {
  if (unit.size() != dimensions.size()) throw ConfigError("point dimension differs from search space");
  std::vector<double> out(unit.size());
  for (std::size_t i = 0; i < unit.size(); ++i) {
    const auto& d = dimensions[i];
    const double u = std::clamp(unit[i], 0.0, 1.0);
    out[i] = d.integer ? d.to_unit(d.to_value(u)) : u;
  }
  return out;
}

std::map<std::string, double> SearchSpace::decode(std::span<const double> unit) const {
  if (unit.size() != dimensions.size()) throw ConfigError("point dimension differs from search space");
  std::map<std::string, double> out;
  for (std::size_t i = 0; i < unit.size(); ++i) out[dimensions[i].name] = dimensions[i].to_value(unit[i]);
  return out;
}

nlohmann::json to_json(const SearchSpace& space) {
  nlohmann::json dims = nlohmann::json::array();
  for (const auto& d : space.dimensions) {
    dims.push_back({{"name", d.name},
                    {"low", d.low},
                    {"high", d.high},
                    {"scale", d.scale == Scale::log ? "log" : "linear"},
                    {"integer", d.integer}});
  }
  return {{"kind", "search_space"},
          {"schema_version", SearchSpace::kSchemaVersion},
          {"dimensions", std::move(dims)}};
}

SearchSpace search_space_from_json(const nlohmann::json& j) {
  if (j.value("kind", "") != "search_space" ||
      j.value("schema_version", -1) != SearchSpace::kSchemaVersion) {
    throw ConfigError("expected a search_space document with schema_version 1");
  }
  SearchSpace s;
  try {
    for (const auto& d : j.at("dimensions")) {
      Dimension dim;
      dim.name = d.at("name").get<std::string>();
      dim.low = d.at("low").get<double>();
      dim.high = d.at("high").get<double>();
      const auto scale = d.value("scale", std::string("linear"));
      if (scale != "linear" && scale != "log") throw ConfigError("unknown scale " + scale);
      dim.scale = scale == "log" ? Scale::log : Scale::linear;
      dim.integer = d.value("integer", false);
      s.dimensions.push_back(std::move(dim));
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("invalid search space: ") + e.what());
  }
  s.validate();
  return s;
}

std::optional<std::size_t> TrialHistory::best() const {
  std::optional<std::size_t> best;
  for (std::size_t i = 0; i < trials.size(); ++i) {
    if (!trials[i].objective) continue;
    if (!best || *trials[i].objective > *trials[*best].objective) best = i;
  }
  return best;
}

std::string trial_to_json_line(const Trial& t) {
  nlohmann::ordered_json j;
  j["index"] = t.index;
  j["point"] = t.point;
  j["values"] = t.values;
  j["objective"] = t.objective ? nlohmann::ordered_json(*t.objective) : nlohmann::ordered_json(nullptr);
  j["error"] = t.error;
  return j.dump();
}

Trial trial_from_json_line(const std::string& line) {
  try {
    const auto j = nlohmann::json::parse(line);
    Trial t;
    t.index = j.at("index").get<std::size_t>();
    t.point = j.at("point").get<std::vector<double>>();
    t.values = j.at("values").get<std::map<std::string, double>>();
    if (!j.at("objective").is_null()) t.objective = j.at("objective").get<double>();
    t.error = j.value("error", std::string());
    return t;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("invalid trial line: ") + e.what());
  }
}

TrialHistory history_from_jsonl(const std::string& text) {
  TrialHistory h;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty()) h.trials.push_back(trial_from_json_line(line));
  }
  return h;
}

// ---- Gaussian process ----

namespace {

double sq_dist(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return s;
}

double kernel(std::span<const double> a, std::span<const double> b, double ls) {
  return std::exp(-0.5 * sq_dist(a, b) / (ls * ls));
}

constexpr double kJitter = 1e-8;

}  // namespace

GaussianProcess::GaussianProcess(std::vector<std::vector<double>> x, std::vector<double> y,
                                 double length_scale, double noise)
    : x_(std::move(x)), length_scale_(length_scale) {
  const std::size_t n = x_.size();
  if (n == 0 || y.size() != n) throw DataError("GaussianProcess: need matching non-empty x and y");
  if (!(length_scale > 0.0)) throw ConfigError("GaussianProcess: length scale must be positive");
  Eigen::VectorXd yv(static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) yv(static_cast<Eigen::Index>(i)) = y[i];
  y_mean_ = yv.mean();
  const double var = n > 1 ? (yv.array() - y_mean_).square().sum() / static_cast<double>(n - 1) : 0.0;
  y_scale_ = var > 0.0 ? std::sqrt(var) : 1.0;
  const Eigen::VectorXd ys = (yv.array() - y_mean_) / y_scale_;

  Eigen::MatrixXd K(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j <= i; ++j) {
      const double k = kernel(x_[i], x_[j], length_scale);
      K(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = k;
      K(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i)) = k;
    }
  }
  K.diagonal().array() += noise + kJitter;
  const Eigen::LLT<Eigen::MatrixXd> llt(K);
  if (llt.info() != Eigen::Success) throw NumericError("GaussianProcess: Cholesky factorisation failed");
  const Eigen::VectorXd alpha = llt.solve(ys);
  const Eigen::MatrixXd L = llt.matrixL();
  alpha_.assign(alpha.data(), alpha.data() + n);
  chol_.resize(n * n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      chol_[i * n + j] = L(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
    }
  }
  const double log_det = 2.0 * L.diagonal().array().log().sum();
  lml_ = -0.5 * ys.dot(alpha) - 0.5 * log_det -
         0.5 * static_cast<double>(n) * std::log(2.0 * std::numbers::pi);
}

GaussianProcess::Posterior GaussianProcess::predict(std::span<const double> x) const {
  const std::size_t n = x_.size();
  std::vector<double> k(n);
  for (std::size_t i = 0; i < n; ++i) k[i] = kernel(x, x_[i], length_scale_);
  double mean = 0.0;
  for (std::size_t i = 0; i < n; ++i) mean += k[i] * alpha_[i];
  // v = L^-1 k by forward substitution.
  std::vector<double> v(n);
  for (std::size_t i = 0; i < n; ++i) {
    double s = k[i];
    for (std::size_t j = 0; j < i; ++j) s -= chol_[i * n + j] * v[j];
    v[i] = s / chol_[i * n + i];
  }
  double var = 1.0;
  for (double vi : v) var -= vi * vi;
  var = std::max(var, 0.0);
  return {y_mean_ + y_scale_ * mean, y_scale_ * std::sqrt(var)};
}

GaussianProcess GaussianProcess::fit_ml(std::vector<std::vector<double>> x, std::vector<double> y,
                                        double noise, std::size_t grid_points) {
  if (grid_points < 2) throw ConfigError("length-scale grid needs at least two points");
  const double lo = std::log(0.05), hi = std::log(2.0);
  std::optional<GaussianProcess> best;
  for (std::size_t g = 0; g < grid_points; ++g) {
    const double ls = std::exp(lo + (hi - lo) * static_cast<double>(g) / static_cast<double>(grid_points - 1));
    GaussianProcess gp(x, y, ls, noise);
    if (!best || gp.log_marginal_likelihood() > best->log_marginal_likelihood()) best = std::move(gp);
  }
  return std::move(*best);
}

double expected_improvement(double mean, double sd, double best) {
  const double gain = mean - best;
  if (!(sd > 0.0)) return std::max(gain, 0.0);
  const double z = gain / sd;
  const double cdf = 0.5 * std::erfc(-z / std::numbers::sqrt2);
  const double pdf = std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi);
  return std::max(gain * cdf + sd * pdf, 0.0);
}

std::vector<double> quasi_random_point(std::size_t index, std::size_t dims, std::uint64_t seed) {
  static constexpr std::array<unsigned, 16> kPrimes = {2,  3,  5,  7,  11, 13, 17, 19,
                                                       23, 29, 31, 37, 41, 43, 47, 53};
  if (dims > kPrimes.size()) throw ConfigError("quasi-random sequence supports at most 16 dimensions");
  Rng shift_rng(derive_seed(seed, 0x5eed));
  std::vector<double> out(dims);
  for (std::size_t d = 0; d < dims; ++d) {
    // Radical inverse of index + 1 (skips the all-zero first Halton point).
    const double base = kPrimes[d];
    double f = 1.0, r = 0.0;
    for (std::size_t i = index + 1; i > 0; i /= kPrimes[d]) {
      f /= base;
      r += f * static_cast<double>(i % kPrimes[d]);
    }
    const double v = r + shift_rng.uniform();
    out[d] = v - std::floor(v);
  }
  return out;
}

std::vector<double> suggest_next(const TrialHistory& history, const SearchSpace& space,
                                 std::uint64_t seed) {
  space.validate();
  const std::size_t dims = space.size();
  std::vector<std::vector<double>> x;
  std::vector<double> y;
  for (const auto& t : history.trials) {
    if (!t.objective) continue;
    if (t.point.size() != dims) throw DataError("trial point dimension differs from search space");
    x.push_back(t.point);
    y.push_back(*t.objective);
  }
  const auto quasi = [&] { return space.snap(quasi_random_point(history.trials.size(), dims, seed)); };
  if (x.size() < kInitialQuasiRandom) return quasi();
  const auto [lo, hi] = std::minmax_element(y.begin(), y.end());
  if (*hi - *lo <= 1e-12 * std::max(1.0, std::abs(*hi))) {
    spdlog::info("tuner: all {} objectives are equal; using a quasi-random point", y.size());
    return quasi();
  }
  const double best = *hi;
  const auto gp = GaussianProcess::fit_ml(std::move(x), std::move(y));
  Rng rng(derive_seed(seed, history.trials.size()));
  std::vector<double> best_point;
  double best_ei = -1.0;
  std::vector<double> candidate(dims);
  for (std::size_t c = 0; c < kCandidates; ++c) {
    for (auto& v : candidate) v = rng.uniform();
    auto snapped = space.snap(candidate);
    const auto post = gp.predict(snapped);
    const double ei = expected_improvement(post.mean, post.sd, best);
    if (ei > best_ei) {
      best_ei = ei;
      best_point = std::move(snapped);
    }
  }
  return best_point;
}

TuneResult tune(const SearchSpace& space, std::size_t budget, const Objective& objective,
                std::uint64_t seed, TrialHistory history,
                const std::function<void(const Trial&)>& on_trial) {
  if (budget == 0) throw ConfigError("tuner budget must be >= 1");
  space.validate();
  for (std::size_t b = 0; b < budget; ++b) {
    Trial t;
    t.index = history.trials.size();
    t.point = suggest_next(history, space, seed);
    t.values = space.decode(t.point);
    try {
      const double v = objective(t.values);
      if (std::isfinite(v)) {
        t.objective = v;
      } else {
        t.error = "non-finite objective";
      }
    } catch (const std::exception& e) {
      t.error = e.what();
    }
    if (!t.objective) spdlog::warn("tuner: trial {} failed: {}", t.index, t.error);
    history.trials.push_back(t);
    if (on_trial) on_trial(t);
  }
  TuneResult r;
  r.best = history.best();
  r.history = std::move(history);
  return r;
}

}  // namespace ehrcvd
