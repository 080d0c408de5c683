#include <cmath>

#include <gtest/gtest.h>

#include "ehrcvd/errors.hpp"
#include "ehrcvd/num_engine.hpp"
#include "ehrcvd/synth_cohort.hpp"
#include "test_support.hpp"

using namespace ehrcvd;

namespace {

GeneratorConfig small_config(std::size_t n, std::uint64_t seed = 3) {
  auto c = GeneratorConfig::defaults();
  c.n_patients = n;
  c.seed = seed;
  return c;
}

// Day-by-day survival product.
double stepwise_risk(const PlantedHazard& h, double eta, std::int64_t horizon, std::int64_t followup) {
  double survive = 1.0;
  for (std::int64_t d = kMinLeadDays; d <= std::min(horizon, followup); ++d) {
    std::size_t k = 0;
    while (k < h.phase_ends.size() && d > h.phase_ends[k]) ++k;
    survive *= 1.0 - 1.0 / (1.0 + std::exp(-(h.phase_logits[k] + eta)));
  }
  return 1.0 - survive;
}

}  // namespace

TEST(PlantedRisk, MatchesStepwiseSurvival) {
  const PlantedHazard h;
  for (double eta : {-2.0, 0.0, 0.7, 3.0}) {
    for (std::int64_t horizon : {14, 15, 30, 31, 91, 200, 365, 1000}) {
      for (std::int64_t followup : {10, 14, 60, 365, 1400}) {
        EXPECT_NEAR(planted_risk(h, eta, horizon, followup), stepwise_risk(h, eta, horizon, followup), 1e-12)
            << eta << " " << horizon << " " << followup;
      }
    }
  }
  EXPECT_EQ(planted_risk(h, 0.0, 13, 1000), 0.0);
  EXPECT_EQ(planted_risk(h, 0.0, kUnboundedHorizon, 500), planted_risk(h, 0.0, 500, 500));
  EXPECT_LT(planted_risk(h, 0.0, 365, 1000), planted_risk(h, 1.0, 365, 1000));
}

TEST(Generate, DeterministicAndOrderIndependent) {
  const auto a = generate(small_config(200));
  const auto b = generate(small_config(200));
  const auto c = generate(small_config(500));
  ASSERT_EQ(a.records.size(), 200u);
  EXPECT_EQ(to_json(a.truth), to_json(b.truth));
  for (std::size_t i = 0; i < a.records.size(); ++i) {
    EXPECT_EQ(a.records[i].events, b.records[i].events);
    // Same id width, so a larger cohort reproduces every earlier patient.
    EXPECT_EQ(a.records[i].events, c.records[i].events);
  }
  const auto other = generate(small_config(200, 4));
  EXPECT_NE(a.records[0].events, other.records[0].events);
}

TEST(Generate, RecordsAreValidAndConsistentWithTruth) {
  const auto config = small_config(400);
  const auto g = generate(config);
  const auto def = EventDefinition::defaults(config.disease);
  for (std::size_t i = 0; i < g.records.size(); ++i) {
    const auto& rec = g.records[i];
    const auto& truth = g.truth.patients[i];
    EXPECT_TRUE(validate_record(rec).empty()) << rec.patient_id;
    EXPECT_EQ(truth.patient_id, rec.patient_id);
    EXPECT_EQ(truth.followup_days, config.study_days - truth.index_day);
    EXPECT_GE(truth.index_day, config.index_day_min);
    EXPECT_LE(truth.index_day, config.index_day_max);
    ASSERT_EQ(truth.risks.size(), config.horizons.size());
    for (std::size_t k = 0; k < truth.risks.size(); ++k) {
      EXPECT_NEAR(truth.risks[k],
                  stepwise_risk(config.hazard, truth.linear_predictor, config.horizons.days[k], truth.followup_days),
                  1e-12);
      if (k > 0) EXPECT_GE(truth.risks[k], truth.risks[k - 1]);
    }
    std::int64_t last_obs = -1;
    std::optional<std::int64_t> outcome_day;
    for (const auto& e : rec.events) {
      if (e.modality == Modality::diagnosis && def.matches(e.code)) {
        EXPECT_FALSE(outcome_day) << "one outcome per patient";
        outcome_day = e.day;
      } else if (!truth.event_day || e.day != *truth.event_day) {
        last_obs = std::max(last_obs, e.day);
        EXPECT_GE(e.day, truth.index_day - config.history_days);
      }
    }
    EXPECT_EQ(last_obs, truth.index_day);
    EXPECT_EQ(outcome_day, truth.event_day);
    if (truth.event_day) {
      EXPECT_GE(*truth.event_day - truth.index_day, kMinLeadDays);
      EXPECT_LE(*truth.event_day, config.study_days);
    }
    for (std::size_t k = 0; k < config.horizons.size(); ++k) {
      const bool want = truth.event_day && *truth.event_day - truth.index_day <= config.horizons.days[k];
      EXPECT_EQ(truth.realized[k], want);
    }
  }
}

TEST(Generate, EventRateMatchesPlantedRisk) {
  const auto g = generate(small_config(4000, 11));
  const std::size_t h = 2;  // 365 days
  double observed = 0, expected = 0, var = 0;
  std::size_t n = 0;
  for (const auto& p : g.truth.patients) {
    if (p.followup_days < 365) continue;
    observed += p.realized[h];
    expected += p.risks[h];
    var += p.risks[h] * (1 - p.risks[h]);
    ++n;
  }
  ASSERT_GT(n, 1000u);
  EXPECT_LT(std::abs(observed - expected), 4 * std::sqrt(var));
}

TEST(Generate, CohortLabelsAgreeWithRealizedOutcomes) {
  const auto config = small_config(600, 5);
  const auto g = generate(config);
  const auto built = build_cohort(g.records, EventDefinition::defaults(config.disease), config.horizons,
                                  config.study_days);
  std::map<std::string, const PatientTruth*> by_id;
  for (const auto& p : g.truth.patients) by_id[p.patient_id] = &p;
  ASSERT_GT(built.cohort.n_pairs(), 20u);
  for (const auto& p : built.cohort.patients) {
    const auto& t = *by_id.at(p.patient_id);
    EXPECT_EQ(p.index_day, t.index_day);
    EXPECT_EQ(p.is_case, t.event_day.has_value());
    if (p.is_case) {
      for (std::size_t k = 0; k < config.horizons.size(); ++k) EXPECT_EQ(p.labels[k], t.realized[k]);
    }
  }
}

TEST(BayesAuc, MatchesDirectComputation) {
  const auto g = generate(small_config(800, 6));
  for (std::size_t h = 0; h < g.truth.horizons.size(); ++h) {
    const std::int64_t need = g.truth.horizons.unbounded(h) ? 365 : g.truth.horizons.days[h];
    std::vector<double> s, y;
    for (const auto& p : g.truth.patients) {
      if (!p.realized[h] && p.followup_days < need) continue;
      s.push_back(p.risks[h]);
      y.push_back(p.realized[h]);
    }
    EXPECT_NEAR(bayes_auc(g.truth, h), ehrcvd::testing::brute_force_auc(s, y), 1e-12);
  }
  std::vector<std::string> ids;
  for (std::size_t i = 0; i < 400; ++i) ids.push_back(g.truth.patients[i].patient_id);
  GroundTruth half = g.truth;
  half.patients.resize(400);
  EXPECT_EQ(bayes_auc(g.truth, 2, ids), bayes_auc(half, 2));
  EXPECT_THROW(bayes_auc(g.truth, 9), DataError);
}

TEST(GeneratorConfig, ValidationRejectsInconsistentSettings) {
  const auto ok = GeneratorConfig::defaults();
  EXPECT_NO_THROW(ok.validate());
  auto c = ok;
  c.noise_channel = c.blood_pressure_channel;
  EXPECT_THROW(c.validate(), ConfigError);
  c = ok;
  c.diagnosis_codes.push_back("I21.3");
  EXPECT_THROW(c.validate(), ConfigError);
  c = ok;
  c.hazard.phase_logits.pop_back();
  EXPECT_THROW(c.validate(), ConfigError);
  c = ok;
  c.index_day_max = c.study_days;
  EXPECT_THROW(c.validate(), ConfigError);
  c = ok;
  c.n_patients = 0;
  EXPECT_THROW(generate(c), ConfigError);
  c = ok;
  c.channels[0].measure_probability = 1.5;
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(GeneratorConfig, JsonRoundTripAndPartialDocuments) {
  auto c = GeneratorConfig::defaults();
  c.n_patients = 123;
  c.hazard.age = 0.25;
  c.horizons = HorizonSet{{7 * 4, 100, kUnboundedHorizon}};
  c.hazard.phase_ends = {30, 100};
  c.hazard.phase_logits = {-6, -7, -8};
  const auto back = generator_config_from_json(to_json(c));
  EXPECT_EQ(to_json(back), to_json(c));

  const auto partial = generator_config_from_json(
      {{"kind", "generator_config"}, {"schema_version", 1}, {"n_patients", 50}});
  EXPECT_EQ(partial.n_patients, 50u);
  EXPECT_EQ(to_json(partial)["channels"], to_json(GeneratorConfig::defaults())["channels"]);
  EXPECT_THROW(generator_config_from_json({{"kind", "generator_config"}, {"schema_version", 2}}),
               ConfigError);
  EXPECT_THROW(generator_config_from_json(
                   {{"kind", "generator_config"}, {"schema_version", 1}, {"n_patients", "many"}}),
               ConfigError);
}

TEST(GroundTruth, JsonRoundTrip) {
  const auto g = generate(small_config(50));
  const auto back = ground_truth_from_json(to_json(g.truth));
  EXPECT_EQ(to_json(back), to_json(g.truth));
  EXPECT_EQ(back.risk_map(), g.truth.risk_map());
  EXPECT_THROW(ground_truth_from_json({{"kind", "cohort"}}), DataError);
}
