#include "tacro/feature_builder.hpp"

#include <cmath>
#include <set>

#include <gtest/gtest.h>

namespace tacro {
namespace {

PatientRecord default_patient(const std::string& id = "P") {
  PatientRecord r;
  r.patient_id = id;
  return r;
}

ConcentrationProfile on_grid_profile(const std::string& id = "P") {
  ConcentrationProfile p;
  p.patient_id = id;
  p.dose_mg = 4;
  const PkParameters pk{25, 350, 1.5};
  for (const double t : kNominalGrid) p.points.push_back({t, steady_state_concentration(pk, 4, t), true});
  return p;
}

TEST(Schemas, Lengths) {
  EXPECT_EQ(schema_for(FeatureSet::kFull16).size(), 43u);
  EXPECT_EQ(schema_for(FeatureSet::kFixed3).size(), 3u);
  EXPECT_EQ(schema_for(FeatureSet::kFixed3Demographics).size(), 11u);
  EXPECT_EQ(schema_for(FeatureSet::kFlexDeltaOnly).size(), 4u);
  EXPECT_EQ(schema_for(FeatureSet::kFlexExactTimes).size(), 6u);
  EXPECT_EQ(schema_for(FeatureSet::kFlexCombinedDemographics).size(), 14u);
  EXPECT_EQ(schema_for(FeatureSet::kFlexCombined).size(), 7u);
  for (const auto s : {FeatureSet::kFlexEstLinear, FeatureSet::kFlexEstReverseLinear, FeatureSet::kFlexEstLogLinear,
                       FeatureSet::kFlexEstPopPk}) {
    EXPECT_EQ(schema_for(s).size(), 4u);
  }
}

TEST(Schemas, IdsRoundTripAndNamesUnique) {
  for (const auto s : kAllFeatureSets) {
    EXPECT_EQ(parse_feature_set(feature_set_id(s)), s);
    const auto schema = schema_for(s);
    const std::set<std::string> unique(schema.names.begin(), schema.names.end());
    EXPECT_EQ(unique.size(), schema.names.size()) << schema.id;
  }
  try {
    (void)parse_feature_set("nope");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kConfiguration);
  }
}

TEST(FullEvent, OnGridDeltasAreZero) {
  const auto fv = build_full_event(on_grid_profile(), default_patient());
  ASSERT_EQ(fv.values.size(), 43u);
  for (std::size_t s = 0; s < 16; ++s) EXPECT_EQ(fv.values[16 + s], 0.0);
  EXPECT_EQ(fv.values[32], 4.0);
}

TEST(FullEvent, DeltaInMinutes) {
  auto p = on_grid_profile();
  p.points[kThreeHourSlot].time = 3.1;
  const auto fv = build_full_event(p, default_patient());
  EXPECT_NEAR(fv.values[16 + kThreeHourSlot], 6.0, 1e-9);
}

TEST(FullEvent, IncompleteProfileRejected) {
  auto p = on_grid_profile();
  p.points.erase(p.points.begin() + 4);
  try {
    (void)build_full_event(p, default_patient());
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kSchema);
  }
}

TEST(Flexible, FiveEventsPerProfile) {
  const auto events = expand_flexible_events(on_grid_profile());
  ASSERT_EQ(events.size(), 5u);
  const std::vector<double> want = {2, 2.5, 3, 4, 5};
  for (std::size_t i = 0; i < 5; ++i) {
    EXPECT_EQ(events[i].nominal_last_time, want[i]);
    EXPECT_EQ(events[i].reference_auc, events[0].reference_auc);
  }
}

TEST(Flexible, CohortEventCounts) {
  const auto dev = generate_cohort(CohortConfig::dev(), 7);
  const auto first = build_dataset(cohort_samples(dev, true), FeatureSet::kFlexDeltaOnly);
  const auto all = build_dataset(cohort_samples(dev, false), FeatureSet::kFlexDeltaOnly);
  EXPECT_EQ(build_dataset(cohort_samples(dev, true), FeatureSet::kFixed3).size(), 68u);
  EXPECT_EQ(first.size(), 340u);
  EXPECT_EQ(all.size(), 465u);
  EXPECT_EQ(std::set<std::string>(first.groups.begin(), first.groups.end()).size(), 68u);
}

TEST(Estimators, Linear) {
  EXPECT_DOUBLE_EQ(estimate_c3_linear(12, 8, 5), 10.0);
  EXPECT_DOUBLE_EQ(estimate_c3_linear(7, 7, 2.5), 7.0);
  // No swap: rising last value extrapolates upward.
  EXPECT_DOUBLE_EQ(estimate_c3_linear(2, 14, 2), 26.0);
  try {
    (void)estimate_c3_linear(2, 3, 1.0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kDegenerateSlope);
  }
}

TEST(Estimators, ReverseLinear) {
  EXPECT_EQ(estimate_c3_reverse_linear(2, 14, 2), 0.0);
  EXPECT_DOUBLE_EQ(estimate_c3_reverse_linear(12, 8, 5), estimate_c3_linear(12, 8, 5));
}

TEST(Estimators, LogLinear) {
  EXPECT_NEAR(estimate_c3_loglinear(8, 4, 4), 8.0 * std::exp(std::log(2.0) / 8.0), 1e-12);
  EXPECT_NEAR(estimate_c3_loglinear(8, 4, 4), 8.724061861322062, 1e-12);
  EXPECT_NEAR(estimate_c3_loglinear(8, 2, 4), 8.0 * std::pow(0.5, 0.1), 1e-12);
  EXPECT_NEAR(estimate_c3_loglinear(8, 2, 4), 7.464263932294459, 1e-12);
  EXPECT_DOUBLE_EQ(estimate_c3_loglinear(5, 2.5, 5), 5.0);
  try {
    (void)estimate_c3_loglinear(0, 2, 4);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kLogDomain);
  }
}

TEST(Estimators, PopPkWithCenteredPriors) {
  const PkParameters truth{19, 410, 1.2};
  PopulationPriors priors;
  priors.theta = truth;
  PatientRecord patient = default_patient();
  patient.hematocrit = 0.35;
  patient.weight_kg = 75;
  for (const double t_last : {2.0, 2.5, 4.0, 5.0}) {
    const std::vector<Observation> obs = {{0, steady_state_concentration(truth, 4, 0)},
                                          {1, steady_state_concentration(truth, 4, 1)},
                                          {t_last, steady_state_concentration(truth, 4, t_last)}};
    const double want = steady_state_concentration(truth, 4, 3);
    EXPECT_NEAR(estimate_c3_poppk(patient, obs, 4, priors), want, 0.02 * want);
  }
}

TEST(ApproachTwo, MeasuredAtThreeHoursIsNotEstimated) {
  const auto events = expand_flexible_events(on_grid_profile());
  const auto patient = default_patient();
  for (const auto strategy : {C3Strategy::kLinear, C3Strategy::kReverseLinear, C3Strategy::kLogLinear,
                              C3Strategy::kPopPk}) {
    for (const auto& e : events) {
      const auto fv = approach_two_features(e, strategy, patient, PopulationPriors{});
      ASSERT_EQ(fv.values.size(), 4u);
      if (e.nominal_last_time == 3.0) {
        EXPECT_EQ(fv.values[3], 0.0);
        EXPECT_EQ(fv.values[2], e.last.concentration);
      } else {
        EXPECT_EQ(fv.values[3], 1.0);
      }
    }
  }
}

TEST(ApproachOne, VariantLengthsAndDelta) {
  const auto events = expand_flexible_events(on_grid_profile());
  const auto patient = default_patient();
  const auto delta = approach_one_features(events[0], ApproachOneVariant::kDeltaOnly, patient);
  ASSERT_EQ(delta.values.size(), 4u);
  EXPECT_EQ(delta.values[3], -1.0);
  EXPECT_EQ(approach_one_features(events[4], ApproachOneVariant::kDeltaOnly, patient).values[3], 2.0);
  EXPECT_EQ(approach_one_features(events[0], ApproachOneVariant::kExactTimes, patient).values.size(), 6u);
  EXPECT_EQ(approach_one_features(events[0], ApproachOneVariant::kCombinedPlusDemographics, patient).values.size(),
            14u);
  EXPECT_EQ(approach_one_features(events[0], ApproachOneVariant::kCombinedMinimal, patient).values.size(), 7u);
}

TEST(Dataset, TargetsAreReferenceAucAndSubsetKeepsMetadata) {
  const auto cohort = generate_cohort(CohortConfig::test(), 3);
  const auto samples = cohort_samples(cohort, false);
  const auto ds = build_dataset(samples, FeatureSet::kFixed3);
  ASSERT_EQ(ds.size(), 14u);
  for (std::size_t i = 0; i < ds.size(); ++i) EXPECT_EQ(ds.targets[i], reference_auc(samples[i].profile));
  const std::vector<std::size_t> idx = {3, 1};
  const auto sub = ds.subset(idx);
  EXPECT_EQ(sub.groups[0], ds.groups[3]);
  EXPECT_EQ(sub.visits[1], ds.visits[1]);
  EXPECT_EQ(sub.comparator.size(), 2u);
}

}  // namespace
}  // namespace tacro
