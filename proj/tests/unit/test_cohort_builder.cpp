#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include <gtest/gtest.h>

#include "ehrcvd/cohort_builder.hpp"
#include "ehrcvd/errors.hpp"
#include "test_support.hpp"

using namespace ehrcvd;
using ehrcvd::testing::ev;
using ehrcvd::testing::make_record;

namespace {

const EventDefinition kStroke = EventDefinition::defaults(Disease::stroke);

LabeledPatient person(const std::string& id, Sex sex, double age, std::int64_t n_obs,
                      bool is_case = false) {
  LabeledPatient p;
  p.patient_id = id;
  p.sex = sex;
  p.age_at_index = age;
  p.n_obs_days = n_obs;
  p.is_case = is_case;
  p.index_day = 500;
  if (is_case) p.event_day = 600;
  p.followup_days = 1000;
  return p;
}

LabeledPatient case_with_delta(std::int64_t delta) {
  LabeledPatient p = person("c", Sex::male, 60, 10, true);
  p.event_day = p.index_day + delta;
  return p;
}

LabeledPatient control_with_followup(std::int64_t followup) {
  LabeledPatient p = person("k", Sex::male, 60, 10);
  p.followup_days = followup;
  return p;
}

}  // namespace

TEST(ApplyInclusion, IndexIsLatestObservationTwoWeeksBeforeEvent) {
  const std::vector<PatientRecord> records = {
      make_record("a", Sex::male, -20000,
                  {ev("a", 50, Modality::lab, "ALBUMIN", 40.0), ev("a", 90, Modality::diagnosis, "I10"),
                   ev("a", 100, Modality::diagnosis, "I63.4")}),
      make_record("b", Sex::female, -20000,
                  {ev("b", 95, Modality::diagnosis, "I10"), ev("b", 100, Modality::diagnosis, "I63")}),
      make_record("c", Sex::female, -20000, {ev("c", 10, Modality::diagnosis, "I10")}),
  };
  const auto inc = apply_inclusion(records, kStroke, 2000);
  ASSERT_EQ(inc.cases.size(), 1u);
  EXPECT_EQ(inc.cases[0].patient_id, "a");
  EXPECT_EQ(inc.cases[0].index_day, 50);
  EXPECT_EQ(inc.cases[0].event_day, 100);
  EXPECT_EQ(inc.cases[0].n_obs_days, 1);
  ASSERT_EQ(inc.excluded.size(), 1u);
  EXPECT_EQ(inc.excluded[0].patient_id, "b");
  EXPECT_NE(inc.excluded[0].reason.find("2 weeks prior"), std::string::npos);
  ASSERT_EQ(inc.control_pool.size(), 1u);
  EXPECT_EQ(inc.control_pool[0].patient_id, "c");
  EXPECT_EQ(inc.control_pool[0].index_day, 10);
  EXPECT_EQ(inc.control_pool[0].followup_days, 1990);
}

TEST(ApplyInclusion, EventCodeAnywhereExcludesFromControls) {
  const std::vector<PatientRecord> records = {make_record(
      "a", Sex::male, -20000,
      {ev("a", 10, Modality::diagnosis, "I10"), ev("a", 400, Modality::diagnosis, "I63.4"),
       ev("a", 500, Modality::diagnosis, "I63.9")})};
  const auto inc = apply_inclusion(records, kStroke, 2000);
  EXPECT_TRUE(inc.control_pool.empty());
  ASSERT_EQ(inc.cases.size(), 1u);
  EXPECT_EQ(inc.cases[0].event_day, 400);
}

TEST(LabelHorizons, CasesAreCumulative) {
  const auto h = HorizonSet::standard();
  EXPECT_EQ(label_horizons(case_with_delta(20), h).labels, (std::vector<std::uint8_t>{1, 1, 1, 1}));
  EXPECT_EQ(label_horizons(case_with_delta(400), h).labels, (std::vector<std::uint8_t>{0, 0, 0, 1}));
  EXPECT_EQ(label_horizons(case_with_delta(91), h).labels, (std::vector<std::uint8_t>{0, 1, 1, 1}));
  EXPECT_EQ(label_horizons(case_with_delta(400), h).mask, (std::vector<std::uint8_t>{1, 1, 1, 1}));
  EXPECT_EQ(label_horizons(case_with_delta(100), h, LabelMode::disjoint).labels,
            (std::vector<std::uint8_t>{0, 0, 1, 0}));
  EXPECT_THROW(label_horizons(case_with_delta(13), h), DataError);
}

TEST(LabelHorizons, ControlMaskMatchesTimelineOracle) {
  const auto h = HorizonSet::standard();
  EXPECT_EQ(label_horizons(control_with_followup(100), h).mask, (std::vector<std::uint8_t>{1, 1, 0, 0}));
  // Oracle: walk the days after the index day; a horizon is certified
  // event-free only if every day it covers was observed.
  Rng rng(17);
  for (int trial = 0; trial < 300; ++trial) {
    const std::int64_t followup = rng.integer(0, 800);
    const auto got = label_horizons(control_with_followup(followup), h);
    for (std::size_t i = 0; i < h.size(); ++i) {
      const std::int64_t span = h.unbounded(i) ? h.longest_finite() : h.days[i];
      bool covered = true;
      for (std::int64_t d = 1; d <= span; ++d) covered = covered && d <= followup;
      EXPECT_EQ(got.mask[i], covered ? 1 : 0) << "followup " << followup << " horizon " << i;
      EXPECT_EQ(got.labels[i], 0);
    }
  }
}

TEST(HorizonSet, ValidatesShape) {
  EXPECT_NO_THROW(HorizonSet::standard().validate());
  EXPECT_THROW((HorizonSet{{30, 30, kUnboundedHorizon}}).validate(), ConfigError);
  EXPECT_THROW((HorizonSet{{30, 91}}).validate(), ConfigError);
  EXPECT_EQ(HorizonSet::standard().longest_finite(), 365);
}

TEST(MatchControls, IdenticalCandidateHasZeroDistance) {
  const std::vector<LabeledPatient> cases = {person("c1", Sex::female, 70, 12, true)};
  const std::vector<LabeledPatient> pool = {person("k1", Sex::female, 40, 3),
                                            person("k2", Sex::female, 70, 12),
                                            person("k3", Sex::male, 70, 12)};
  const auto cohort = match_controls(cases, pool, kStroke);
  ASSERT_EQ(cohort.n_pairs(), 1u);
  EXPECT_EQ(cohort.matching_report[0].control_id, "k2");
  EXPECT_DOUBLE_EQ(cohort.matching_report[0].distance, 0.0);
  EXPECT_EQ(cohort.patients[1].patient_id, "k2");
}

TEST(MatchControls, OppositeSexOnlyFails) {
  const std::vector<LabeledPatient> cases = {person("c1", Sex::female, 70, 12, true)};
  const std::vector<LabeledPatient> pool = {person("k1", Sex::male, 70, 12)};
  try {
    match_controls(cases, pool, kStroke);
    FAIL() << "expected DataError";
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("insufficient same-sex controls"), std::string::npos);
  }
}

namespace {

double z_distance(const LabeledPatient& a, const LabeledPatient& b, double age_sd, double obs_sd) {
  const double da = (a.age_at_index - b.age_at_index) / age_sd;
  const double dn = static_cast<double>(a.n_obs_days - b.n_obs_days) / obs_sd;
  return std::hypot(da, dn);
}

// Minimum total distance over all same-sex injective assignments.
double brute_force_min(const std::vector<LabeledPatient>& cases, const std::vector<LabeledPatient>& pool,
                       double age_sd, double obs_sd) {
  std::vector<std::size_t> perm(pool.size());
  std::iota(perm.begin(), perm.end(), 0);
  double best = INFINITY;
  do {
    double total = 0;
    bool ok = true;
    for (std::size_t i = 0; i < cases.size() && ok; ++i) {
      const auto& k = pool[perm[i]];
      ok = k.sex == cases[i].sex;
      total += z_distance(cases[i], k, age_sd, obs_sd);
    }
    if (ok) best = std::min(best, total);
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

std::pair<double, double> population_sds(const std::vector<LabeledPatient>& all) {
  double ma = 0, mn = 0;
  for (const auto& p : all) {
    ma += p.age_at_index;
    mn += static_cast<double>(p.n_obs_days);
  }
  ma /= all.size();
  mn /= all.size();
  double va = 0, vn = 0;
  for (const auto& p : all) {
    va += (p.age_at_index - ma) * (p.age_at_index - ma);
    vn += (p.n_obs_days - mn) * (p.n_obs_days - mn);
  }
  return {std::sqrt(va / all.size()), std::sqrt(vn / all.size())};
}

}  // namespace

TEST(MatchControls, GreedyEqualsBruteForceWhenTheyCoincide) {
  Rng rng(23);
  for (int trial = 0; trial < 40; ++trial) {
    // Each case has a near twin in the pool; other controls sit far away.
    const std::size_t n_cases = 2 + rng.below(3);
    std::vector<LabeledPatient> cases, pool;
    for (std::size_t i = 0; i < n_cases; ++i) {
      const Sex sex = rng.bernoulli(0.5) ? Sex::male : Sex::female;
      const double age = 40.0 + 10.0 * static_cast<double>(i);
      const std::int64_t obs = 10 + 20 * static_cast<std::int64_t>(i);
      cases.push_back(person("c" + std::to_string(i), sex, age, obs, true));
      pool.push_back(person("k" + std::to_string(i), sex, age + rng.uniform(-0.5, 0.5),
                            obs + rng.integer(-1, 1)));
    }
    while (pool.size() < n_cases + 1 + rng.below(3)) {
      pool.push_back(person("far" + std::to_string(pool.size()), rng.bernoulli(0.5) ? Sex::male : Sex::female,
                            rng.uniform(95, 100), rng.integer(300, 320)));
    }
    std::vector<LabeledPatient> all = cases;
    all.insert(all.end(), pool.begin(), pool.end());
    const auto [age_sd, obs_sd] = population_sds(all);

    const auto cohort = match_controls(cases, pool, kStroke);
    double greedy = 0;
    for (const auto& m : cohort.matching_report) greedy += m.distance;
    EXPECT_NEAR(greedy, brute_force_min(cases, pool, age_sd, obs_sd), 1e-9);
  }
}

TEST(MatchControls, NeverCrossesSexOrReusesControls) {
  Rng rng(29);
  std::vector<LabeledPatient> cases, pool;
  for (int i = 0; i < 60; ++i) {
    cases.push_back(person("c" + std::to_string(i), rng.bernoulli(0.4) ? Sex::male : Sex::female,
                           rng.uniform(40, 90), rng.integer(1, 60), true));
  }
  for (int i = 0; i < 200; ++i) {
    pool.push_back(person("k" + std::to_string(i), rng.bernoulli(0.5) ? Sex::male : Sex::female,
                          rng.uniform(40, 90), rng.integer(1, 60)));
  }
  const auto cohort = match_controls(cases, pool, kStroke);
  ASSERT_EQ(cohort.n_pairs(), cases.size());
  std::set<std::string> ids;
  for (std::size_t p = 0; p < cohort.n_pairs(); ++p) {
    const auto& c = cohort.patients[2 * p];
    const auto& k = cohort.patients[2 * p + 1];
    EXPECT_TRUE(c.is_case);
    EXPECT_FALSE(k.is_case);
    EXPECT_EQ(c.sex, k.sex);
    EXPECT_TRUE(ids.insert(c.patient_id).second);
    EXPECT_TRUE(ids.insert(k.patient_id).second);
  }
}

namespace {

Cohort random_cohort(std::size_t n_pairs, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<LabeledPatient> cases, pool;
  for (std::size_t i = 0; i < n_pairs; ++i) {
    auto c = person("c" + std::to_string(i), Sex::female, rng.uniform(40, 90), rng.integer(1, 60), true);
    c.event_day = c.index_day + rng.integer(14, 800);
    cases.push_back(c);
    auto k = person("k" + std::to_string(i), Sex::female, rng.uniform(40, 90), rng.integer(1, 60));
    k.followup_days = rng.integer(0, 900);
    pool.push_back(k);
  }
  Cohort cohort = match_controls(cases, pool, kStroke);
  label_cohort(cohort, HorizonSet::standard());
  return cohort;
}

}  // namespace

TEST(SplitFolds, TenPairsFiveFolds) {
  const auto cohort = random_cohort(10, 1);
  const auto folds = split_folds(cohort, 5, 99);
  ASSERT_EQ(folds.size(), 5u);
  for (const auto& f : folds) EXPECT_EQ(f.size(), 4u);
  EXPECT_EQ(folds, split_folds(cohort, 5, 99));
  EXPECT_THROW(split_folds(cohort, 11, 99), DataError);
  EXPECT_THROW(split_folds(cohort, 1, 99), DataError);
}

TEST(SplitFolds, PairsCoLocatedAndStratified) {
  const auto cohort = random_cohort(500, 2);
  const auto folds = split_folds(cohort, 5, 7);
  std::vector<int> fold_of(cohort.patients.size(), -1);
  for (std::size_t f = 0; f < folds.size(); ++f) {
    std::size_t cases = 0;
    for (auto i : folds[f]) {
      EXPECT_EQ(fold_of[i], -1);
      fold_of[i] = static_cast<int>(f);
      cases += cohort.patients[i].is_case;
    }
    EXPECT_LE(std::abs(static_cast<double>(cases) - 0.5 * static_cast<double>(folds[f].size())), 1.0);
  }
  for (std::size_t p = 0; p < cohort.n_pairs(); ++p) {
    ASSERT_NE(fold_of[2 * p], -1);
    EXPECT_EQ(fold_of[2 * p], fold_of[2 * p + 1]);
  }
  // 1-month positives spread evenly.
  std::vector<int> early(5, 0);
  for (std::size_t f = 0; f < 5; ++f) {
    for (auto i : folds[f]) early[f] += cohort.patients[i].labels[0];
  }
  EXPECT_LE(*std::max_element(early.begin(), early.end()) - *std::min_element(early.begin(), early.end()), 1);
}

TEST(Cohort, PositiveCountsMonotoneAndSerialisationRoundTrips) {
  const auto cohort = random_cohort(200, 3);
  const auto counts = cohort.positive_counts();
  EXPECT_TRUE(std::is_sorted(counts.begin(), counts.end()));
  EXPECT_EQ(counts.back(), 200u);

  const auto back = cohort_from_json(to_json(cohort));
  ASSERT_EQ(back.patients.size(), cohort.patients.size());
  EXPECT_EQ(back.positive_counts(), counts);
  EXPECT_EQ(back.horizons.days, cohort.horizons.days);
  EXPECT_EQ(back.matching_report.size(), cohort.matching_report.size());

  const auto folds = split_folds(cohort, 5, 4);
  EXPECT_EQ(folds_from_csv(cohort, folds_to_csv(cohort, folds)), folds);
}
