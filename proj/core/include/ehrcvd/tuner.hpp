#pragma once

// Gaussian-process Bayesian optimisation over a box of hyperparameters.
// Points live in the unit hypercube; each dimension maps to its value range
// linearly or logarithmically, and integer dimensions are snapped so the
// stored unit point always decodes to the value that was evaluated.

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace ehrcvd {

enum class Scale { linear, log };

struct Dimension {
  std::string name;
  double low = 0.0;
  double high = 1.0;
  Scale scale = Scale::linear;
  bool integer = false;

  double to_value(double unit) const;
  double to_unit(double value) const;
};

struct SearchSpace {
  static constexpr int kSchemaVersion = 1;
  std::vector<Dimension> dimensions;

  /// n_hidden, n_days_pad, learning_rate, batch_size, lambda, input_dropout.
  static SearchSpace defaults();
  std::size_t size() const { return dimensions.size(); }
  /// Throws ConfigError unless low < high (and low > 0 on log scale).
  void validate() const;
  /// Rounds integer dimensions; returns the snapped unit point.
  std::vector<double> snap(std::span<const double> unit) const;
  std::map<std::string, double> decode(std::span<const double> unit) const;
};

nlohmann::json to_json(const SearchSpace& space);
SearchSpace search_space_from_json(const nlohmann::json& j);

struct Trial {
  std::size_t index = 0;
  std::vector<double> point;  ///< unit hypercube, snapped
  std::map<std::string, double> values;
  std::optional<double> objective;  ///< unset when the evaluation failed
  std::string error;
};

struct TrialHistory {
  std::vector<Trial> trials;

  /// Index of the best successful trial (first on ties).
  std::optional<std::size_t> best() const;
};

std::string trial_to_json_line(const Trial& trial);
Trial trial_from_json_line(const std::string& line);
TrialHistory history_from_jsonl(const std::string& text);

/// Zero-mean GP with a unit-variance squared-exponential kernel on
/// standardised targets.
class GaussianProcess {
 public:
  GaussianProcess(std::vector<std::vector<double>> x, std::vector<double> y, double length_scale,
                  double noise = 1e-4);

  struct Posterior {
    double mean = 0.0;
    double sd = 0.0;
  };
  /// In the original objective units.
  Posterior predict(std::span<const double> x) const;
  double log_marginal_likelihood() const { return lml_; }
  double length_scale() const { return length_scale_; }

  /// Fits with the length scale maximising the marginal likelihood over a
  /// log grid of `grid_points` values in [0.05, 2].
  static GaussianProcess fit_ml(std::vector<std::vector<double>> x, std::vector<double> y,
                                double noise = 1e-4, std::size_t grid_points = 20);

 private:
  std::vector<std::vector<double>> x_;
  std::vector<double> alpha_;
  std::vector<double> chol_;  // lower factor, row-major n x n
  double y_mean_ = 0.0;
  double y_scale_ = 1.0;
  double length_scale_;
  double lml_ = 0.0;
};

/// Closed-form EI for maximisation; with sd <= 0 it is max(mean - best, 0).
double expected_improvement(double mean, double sd, double best);

/// Halton point `index` (0-based) in `dims` dimensions, shifted modulo 1 by
/// a seeded Cranley-Patterson rotation.
std::vector<double> quasi_random_point(std::size_t index, std::size_t dims, std::uint64_t seed);

inline constexpr std::size_t kInitialQuasiRandom = 5;
inline constexpr std::size_t kCandidates = 1024;

/// Quasi-random while fewer than 5 trials succeeded or all their objectives
/// are equal; otherwise the EI argmax over 1,024 seeded candidates.
std::vector<double> suggest_next(const TrialHistory& history, const SearchSpace& space,
                                 std::uint64_t seed);

using Objective = std::function<double(const std::map<std::string, double>& values)>;

struct TuneResult {
  TrialHistory history;
  std::optional<std::size_t> best;
};

/// Runs `budget` further trials on top of `history`. A throwing or
/// non-finite objective marks the trial failed. `on_trial` runs after each
/// trial (e.g. to append it to a JSONL file).
TuneResult tune(const SearchSpace& space, std::size_t budget, const Objective& objective,
                std::uint64_t seed, TrialHistory history = {},
                const std::function<void(const Trial&)>& on_trial = {});

}  // namespace ehrcvd
