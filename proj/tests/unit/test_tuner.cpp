#include <cmath>
#include <numbers>
#include <stdexcept>

#include <gtest/gtest.h>

#include "ehrcvd/errors.hpp"
#include "ehrcvd/rng.hpp"
#include "ehrcvd/tuner.hpp"

using namespace ehrcvd;

namespace {

// Dense solve by Gaussian elimination with partial pivoting.
std::vector<double> solve(std::vector<std::vector<double>> a, std::vector<double> b) {
  const std::size_t n = b.size();
  for (std::size_t c = 0; c < n; ++c) {
    std::size_t p = c;
    for (std::size_t r = c + 1; r < n; ++r) {
      if (std::abs(a[r][c]) > std::abs(a[p][c])) p = r;
    }
    std::swap(a[c], a[p]);
    std::swap(b[c], b[p]);
    for (std::size_t r = c + 1; r < n; ++r) {
      const double f = a[r][c] / a[c][c];
      for (std::size_t k = c; k < n; ++k) a[r][k] -= f * a[c][k];
      b[r] -= f * b[c];
    }
  }
  std::vector<double> x(n);
  for (std::size_t i = n; i-- > 0;) {
    double s = b[i];
    for (std::size_t k = i + 1; k < n; ++k) s -= a[i][k] * x[k];
    x[i] = s / a[i][i];
  }
  return x;
}

double se_kernel(const std::vector<double>& a, const std::vector<double>& b, double ls) {
  double d = 0;
  for (std::size_t i = 0; i < a.size(); ++i) d += (a[i] - b[i]) * (a[i] - b[i]);
  return std::exp(-0.5 * d / (ls * ls));
}

struct NaivePosterior {
  double mean, sd;
};

// Textbook GP posterior on standardised targets, mapped back.
NaivePosterior naive_gp(const std::vector<std::vector<double>>& x, const std::vector<double>& y,
                        const std::vector<double>& q, double ls, double noise) {
  const std::size_t n = y.size();
  double m = 0;
  for (double v : y) m += v;
  m /= static_cast<double>(n);
  double var = 0;
  for (double v : y) var += (v - m) * (v - m);
  const double s = std::sqrt(var / static_cast<double>(n - 1));
  std::vector<std::vector<double>> K(n, std::vector<double>(n));
  std::vector<double> ys(n), k(n);
  for (std::size_t i = 0; i < n; ++i) {
    ys[i] = (y[i] - m) / s;
    k[i] = se_kernel(q, x[i], ls);
    for (std::size_t j = 0; j < n; ++j) K[i][j] = se_kernel(x[i], x[j], ls) + (i == j ? noise : 0.0);
  }
  const auto alpha = solve(K, ys);
  const auto v = solve(K, k);
  double mean = 0, quad = 0;
  for (std::size_t i = 0; i < n; ++i) {
    mean += k[i] * alpha[i];
    quad += k[i] * v[i];
  }
  return {m + s * mean, s * std::sqrt(std::max(1.0 - quad, 0.0))};
}

double normal_pdf(double z) { return std::exp(-0.5 * z * z) / std::sqrt(2 * std::numbers::pi); }

// E[max(Y - best, 0)] for Y ~ N(mean, sd^2) by Simpson's rule.
double numeric_ei(double mean, double sd, double best) {
  const int n = 20000;
  const double lo = mean - 12 * sd, hi = mean + 12 * sd, h = (hi - lo) / n;
  double acc = 0;
  for (int i = 0; i <= n; ++i) {
    const double y = lo + i * h;
    const double f = std::max(y - best, 0.0) * normal_pdf((y - mean) / sd) / sd;
    acc += f * (i == 0 || i == n ? 1 : (i % 2 ? 4 : 2));
  }
  return acc * h / 3;
}

SearchSpace one_dim() { return {{{"x", 0.0, 1.0, Scale::linear, false}}}; }

}  // namespace

TEST(Dimension, LinearAndLogMappings) {
  const Dimension lin{"a", 2.0, 6.0, Scale::linear, false};
  EXPECT_DOUBLE_EQ(lin.to_value(0.25), 3.0);
  EXPECT_DOUBLE_EQ(lin.to_unit(5.0), 0.75);
  const Dimension lg{"b", 1e-4, 1e-2, Scale::log, false};
  EXPECT_NEAR(lg.to_value(0.5), 1e-3, 1e-15);
  EXPECT_NEAR(lg.to_unit(1e-3), 0.5, 1e-12);
  EXPECT_DOUBLE_EQ(lg.to_value(-3.0), 1e-4);
  EXPECT_DOUBLE_EQ(lg.to_value(7.0), 1e-2);
  Rng rng(1);
  for (int i = 0; i < 100; ++i) {
    const double u = rng.uniform();
    EXPECT_NEAR(lg.to_unit(lg.to_value(u)), u, 1e-12);
    EXPECT_NEAR(lin.to_unit(lin.to_value(u)), u, 1e-12);
  }
}

TEST(SearchSpace, SnapDecodesToTheEvaluatedIntegers) {
  const auto space = SearchSpace::defaults();
  ASSERT_EQ(space.size(), 6u);
  EXPECT_EQ(space.dimensions[5].name, "input_dropout");
  Rng rng(2);
  for (int i = 0; i < 200; ++i) {
    std::vector<double> u(space.size());
    for (auto& v : u) v = rng.uniform();
    const auto snapped = space.snap(u);
    EXPECT_EQ(space.snap(snapped), snapped);
    const auto a = space.decode(u), b = space.decode(snapped);
    for (const auto& d : space.dimensions) {
      if (d.integer) {
        EXPECT_EQ(b.at(d.name), std::round(b.at(d.name)));
        EXPECT_EQ(a.at(d.name), b.at(d.name));
      } else {
        EXPECT_DOUBLE_EQ(a.at(d.name), b.at(d.name));
      }
      EXPECT_GE(b.at(d.name), d.low);
      EXPECT_LE(b.at(d.name), d.high);
    }
  }
  EXPECT_THROW(space.snap(std::vector<double>{0.5}), ConfigError);
}

TEST(SearchSpace, ValidationAndJson) {
  SearchSpace bad{{{"x", 1.0, 1.0, Scale::linear, false}}};
  EXPECT_THROW(bad.validate(), ConfigError);
  SearchSpace bad_log{{{"x", 0.0, 1.0, Scale::log, false}}};
  EXPECT_THROW(bad_log.validate(), ConfigError);
  EXPECT_THROW(SearchSpace{}.validate(), ConfigError);

  const auto space = SearchSpace::defaults();
  const auto back = search_space_from_json(to_json(space));
  ASSERT_EQ(back.size(), space.size());
  for (std::size_t i = 0; i < space.size(); ++i) {
    EXPECT_EQ(back.dimensions[i].name, space.dimensions[i].name);
    EXPECT_EQ(back.dimensions[i].low, space.dimensions[i].low);
    EXPECT_EQ(back.dimensions[i].high, space.dimensions[i].high);
    EXPECT_EQ(back.dimensions[i].scale, space.dimensions[i].scale);
    EXPECT_EQ(back.dimensions[i].integer, space.dimensions[i].integer);
  }
  auto j = to_json(space);
  j["kind"] = "cohort";
  EXPECT_THROW(search_space_from_json(j), ConfigError);
  j = to_json(space);
  j["dimensions"][0]["scale"] = "cubic";
  EXPECT_THROW(search_space_from_json(j), ConfigError);
}

TEST(TrialJson, RoundTripIncludingFailures) {
  Trial ok{3, {0.25, 0.5}, {{"a", 1.5}, {"b", 7.0}}, 0.7125, ""};
  Trial failed{4, {0.1, 0.9}, {{"a", 1.0}}, std::nullopt, "gradient blow-up in heads.weights"};
  const auto text = trial_to_json_line(ok) + "\n" + trial_to_json_line(failed) + "\n\n";
  const auto h = history_from_jsonl(text);
  ASSERT_EQ(h.trials.size(), 2u);
  EXPECT_EQ(h.trials[0].index, 3u);
  EXPECT_EQ(h.trials[0].point, ok.point);
  EXPECT_EQ(h.trials[0].values, ok.values);
  EXPECT_EQ(h.trials[0].objective, ok.objective);
  EXPECT_FALSE(h.trials[1].objective);
  EXPECT_EQ(h.trials[1].error, failed.error);
  EXPECT_EQ(h.best(), std::optional<std::size_t>(0));
  EXPECT_THROW(trial_from_json_line("{\"index\": 1}"), DataError);
  EXPECT_THROW(trial_from_json_line("not json"), DataError);
}

TEST(TrialHistory, BestIsFirstOnTies) {
  TrialHistory h;
  h.trials = {{0, {}, {}, 0.5, ""}, {1, {}, {}, 0.8, ""}, {2, {}, {}, 0.8, ""}, {3, {}, {}, std::nullopt, "x"}};
  EXPECT_EQ(h.best(), std::optional<std::size_t>(1));
  EXPECT_FALSE(TrialHistory{}.best());
}

TEST(GaussianProcess, MatchesTextbookPosterior) {
  Rng rng(3);
  std::vector<std::vector<double>> x;
  std::vector<double> y;
  for (int i = 0; i < 8; ++i) {
    x.push_back({rng.uniform(), rng.uniform()});
    y.push_back(std::sin(4 * x.back()[0]) + x.back()[1]);
  }
  for (double ls : {0.1, 0.4, 1.3}) {
    const GaussianProcess gp(x, y, ls, 1e-3);
    for (int q = 0; q < 20; ++q) {
      const std::vector<double> p = {rng.uniform(), rng.uniform()};
      const auto got = gp.predict(p);
      const auto want = naive_gp(x, y, p, ls, 1e-3 + 1e-8);
      EXPECT_NEAR(got.mean, want.mean, 1e-8);
      EXPECT_NEAR(got.sd, want.sd, 1e-6);
    }
  }
}

TEST(GaussianProcess, InterpolatesAndRevertsToPrior) {
  const std::vector<std::vector<double>> x = {{0.1}, {0.5}, {0.9}};
  const std::vector<double> y = {1.0, 3.0, 2.0};
  const GaussianProcess gp(x, y, 0.1, 1e-10);
  for (std::size_t i = 0; i < x.size(); ++i) {
    const auto p = gp.predict(x[i]);
    EXPECT_NEAR(p.mean, y[i], 1e-4);
    EXPECT_LT(p.sd, 1e-3);
  }
  const auto far = gp.predict(std::vector<double>{50.0});
  EXPECT_NEAR(far.mean, 2.0, 1e-12);
  EXPECT_NEAR(far.sd, 1.0, 1e-12);  // sample sd of y
  EXPECT_THROW(GaussianProcess({}, {}, 0.5), DataError);
  EXPECT_THROW(GaussianProcess(x, y, 0.0), ConfigError);
}

TEST(GaussianProcess, FitMlMaximisesLikelihoodOverGrid) {
  Rng rng(4);
  std::vector<std::vector<double>> x;
  std::vector<double> y;
  for (int i = 0; i < 12; ++i) {
    x.push_back({rng.uniform()});
    y.push_back(std::cos(6 * x.back()[0]));
  }
  const auto gp = GaussianProcess::fit_ml(x, y, 1e-4, 20);
  for (int g = 0; g < 20; ++g) {
    const double ls = std::exp(std::log(0.05) + (std::log(2.0) - std::log(0.05)) * g / 19.0);
    EXPECT_GE(gp.log_marginal_likelihood(), GaussianProcess(x, y, ls, 1e-4).log_marginal_likelihood());
  }
  EXPECT_GE(gp.length_scale(), 0.05 - 1e-12);
  EXPECT_LE(gp.length_scale(), 2.0 + 1e-12);
}

TEST(ExpectedImprovement, ClosedFormMatchesIntegral) {
  EXPECT_EQ(expected_improvement(0.7, 0.0, 0.5), 0.7 - 0.5);
  EXPECT_EQ(expected_improvement(0.3, 0.0, 0.5), 0.0);
  const double cases[][3] = {{0.0, 1.0, 0.0}, {0.5, 0.2, 0.7}, {1.0, 0.1, 0.2}, {-2.0, 0.5, 0.0}};
  for (const auto& c : cases) {
    EXPECT_NEAR(expected_improvement(c[0], c[1], c[2]), numeric_ei(c[0], c[1], c[2]), 1e-9);
  }
  EXPECT_NEAR(expected_improvement(0.0, 1.0, 0.0), 1.0 / std::sqrt(2 * std::numbers::pi), 1e-15);
}

TEST(QuasiRandom, ShiftedHaltonStructure) {
  for (std::uint64_t seed : {1u, 2u, 99u}) {
    const auto p0 = quasi_random_point(0, 3, seed), p1 = quasi_random_point(1, 3, seed);
    // Radical inverses base 2 of 1 and 2 are 1/2 and 1/4; base 3: 1/3 and 2/3.
    const auto wrap = [](double v) { return v - std::floor(v); };
    EXPECT_NEAR(wrap(p1[0] - p0[0]), 0.75, 1e-12);
    EXPECT_NEAR(wrap(p1[1] - p0[1]), 1.0 / 3.0, 1e-12);
    for (double v : p0) {
      EXPECT_GE(v, 0.0);
      EXPECT_LT(v, 1.0);
    }
    EXPECT_EQ(quasi_random_point(5, 3, seed), quasi_random_point(5, 3, seed));
  }
  EXPECT_NE(quasi_random_point(0, 2, 1), quasi_random_point(0, 2, 2));
  EXPECT_THROW(quasi_random_point(0, 17, 1), ConfigError);
}

TEST(SuggestNext, QuasiRandomUntilFiveDistinctSuccesses) {
  const auto space = SearchSpace::defaults();
  TrialHistory h;
  for (std::size_t i = 0; i < 7; ++i) {
    EXPECT_EQ(suggest_next(h, space, 4), space.snap(quasi_random_point(i, space.size(), 4)));
    // Equal objectives and failures keep the quasi-random phase going.
    h.trials.push_back({i, suggest_next(h, space, 4), {}, i % 2 ? std::optional<double>(0.5) : std::nullopt, ""});
  }
  h.trials.clear();
  Rng rng(5);
  for (std::size_t i = 0; i < 6; ++i) {
    auto p = space.snap(quasi_random_point(i, space.size(), 4));
    h.trials.push_back({i, p, space.decode(p), rng.uniform(), ""});
  }
  const auto next = suggest_next(h, space, 4);
  EXPECT_NE(next, space.snap(quasi_random_point(6, space.size(), 4)));
  EXPECT_EQ(next, space.snap(next));
  EXPECT_EQ(next, suggest_next(h, space, 4));
}

TEST(Tune, FindsMaximumOfSmoothObjective) {
  const auto objective = [](const std::map<std::string, double>& v) {
    return -(v.at("x") - 0.3) * (v.at("x") - 0.3);
  };
  const auto r = tune(one_dim(), 15, objective, 6);
  ASSERT_TRUE(r.best);
  EXPECT_NEAR(r.history.trials[*r.best].values.at("x"), 0.3, 0.03);
}

TEST(Tune, FailuresAreRecordedAndResumeIsDeterministic) {
  std::size_t calls = 0;
  const auto objective = [&](const std::map<std::string, double>& v) -> double {
    ++calls;
    if (calls == 2) throw NumericError("diverged");
    if (calls == 3) return std::nan("");
    return std::sin(5 * v.at("x"));
  };
  std::vector<std::size_t> seen;
  const auto full = tune(one_dim(), 8, objective, 7, {}, [&](const Trial& t) { seen.push_back(t.index); });
  EXPECT_EQ(seen, (std::vector<std::size_t>{0, 1, 2, 3, 4, 5, 6, 7}));
  EXPECT_EQ(full.history.trials[1].error, "diverged");
  EXPECT_EQ(full.history.trials[2].error, "non-finite objective");
  EXPECT_FALSE(full.history.trials[1].objective);

  calls = 0;
  const auto first = tune(one_dim(), 5, objective, 7);
  const auto resumed = tune(one_dim(), 3, objective, 7, first.history);
  ASSERT_EQ(resumed.history.trials.size(), 8u);
  for (std::size_t i = 0; i < 8; ++i) {
    EXPECT_EQ(resumed.history.trials[i].point, full.history.trials[i].point);
    EXPECT_EQ(resumed.history.trials[i].objective, full.history.trials[i].objective);
  }
  EXPECT_EQ(resumed.best, full.best);
  EXPECT_THROW(tune(one_dim(), 0, objective, 7), ConfigError);
}
