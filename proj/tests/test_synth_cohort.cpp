#include "tacro/synth_cohort.hpp"

#include <cmath>
#include <set>

#include <gtest/gtest.h>

#include "oracles.hpp"

namespace tacro {
namespace {

TEST(SamplePatient, DeterministicAndInRange) {
  const CohortPriors priors;
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    const auto a = sample_patient(seed, priors);
    const auto b = sample_patient(seed, priors);
    EXPECT_EQ(a.weight_kg, b.weight_kg);
    EXPECT_EQ(a.txt_days, b.txt_days);
    EXPECT_GE(a.dose_mg, 1.0);
    EXPECT_LE(a.dose_mg, 8.0);
    EXPECT_EQ(a.dose_mg, std::round(a.dose_mg));
    EXPECT_GE(a.txt_days, priors.txt_min_days);
    EXPECT_LE(a.txt_days, priors.txt_max_days);
    EXPECT_GT(a.hematocrit, 0.15);
    EXPECT_LT(a.hematocrit, 0.60);
  }
}

TEST(SamplePatient, ZeroSpreadGivesIdenticalCovariates) {
  CohortPriors priors;
  priors.weight_sd = priors.height_sd = priors.hct_sd = 0.0;
  const auto a = sample_patient(1, priors);
  const auto b = sample_patient(2, priors);
  EXPECT_EQ(a.weight_kg, b.weight_kg);
  EXPECT_EQ(a.height_cm, b.height_cm);
  EXPECT_EQ(a.hematocrit, priors.hct_mean);
}

TEST(SamplePatient, NegativeSpreadRejected) {
  CohortPriors priors;
  priors.weight_sd = -1;
  try {
    (void)sample_patient(1, priors);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kConfiguration);
  }
}

TEST(SteadyState, TroughEqualsEndOfInterval) {
  const PkParameters p{25, 350, 1.5};
  EXPECT_NEAR(steady_state_concentration(p, 5, 0), steady_state_concentration(p, 5, 12), 1e-12);
}

TEST(SteadyState, AucIsDoseOverClearance) {
  const PkParameters p{25, 350, 1.5};
  EXPECT_DOUBLE_EQ(steady_state_auc(p, 5), 200.0);
  const double quad = oracle::integrate([&](double t) { return steady_state_concentration(p, 5, t); }, 0, 12);
  EXPECT_NEAR(quad, 200.0, 1e-8);
}

TEST(SteadyState, PeakTimeMatchesDenseGrid) {
  const PkParameters p{35, 350, 2.0};  // ke = 0.1
  const double t = steady_state_peak_time(p);
  EXPECT_NEAR(t, 1.3880788714375307, 1e-12);
  const double grid = oracle::grid_argmax([&](double s) { return steady_state_concentration(p, 4, s); }, 0, 12,
                                          1'200'001);
  EXPECT_NEAR(t, grid, 1e-5);
}

TEST(SteadyState, DegenerateParameters) {
  const PkParameters p{35, 350, 0.1};
  try {
    (void)steady_state_concentration(p, 4, 1);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kDegenerateParameters);
  }
}

TEST(Covariates, ClearanceScaling) {
  EXPECT_DOUBLE_EQ(covariate_clearance(25, 0.35, 75), 25.0);
  EXPECT_DOUBLE_EQ(covariate_clearance(25, 0.70, 75), 12.5);
  EXPECT_NEAR(covariate_clearance(25, 0.35, 150), 25.0 * std::pow(2.0, 0.75), 1e-12);
}

TEST(Individualize, ZeroOmegaGivesTypical) {
  PatientRecord r;
  r.hematocrit = 0.35;
  r.weight_kg = 75;
  PopulationParams pop;
  pop.omega_cl = pop.omega_v = pop.omega_ka = 0.0;
  const auto p = individualize_parameters(r, pop, std::uint64_t{9});
  EXPECT_DOUBLE_EQ(p.cl, 25.0);
  EXPECT_DOUBLE_EQ(p.v, 350.0);
  EXPECT_DOUBLE_EQ(p.ka, 1.5);
}

TEST(SamplingTimes, KeepsAnchorsAndCount) {
  SamplingPlan plan;
  Rng rng(3);
  for (int i = 0; i < 200; ++i) {
    const auto times = draw_sampling_times(rng, plan);
    ASSERT_GE(times.size(), 8u);
    ASSERT_LE(times.size(), 15u);
    EXPECT_EQ(times.front(), 0.0);
    EXPECT_TRUE(std::is_sorted(times.begin(), times.end()));
    std::set<std::size_t> slots;
    for (const double t : times) slots.insert(nominal_slot(t));
    EXPECT_EQ(slots.size(), times.size());
    EXPECT_TRUE(slots.count(kOneHourSlot));
    EXPECT_TRUE(slots.count(kThreeHourSlot));
  }
}

TEST(Cohort, DevAndTestCounts) {
  const auto dev = generate_cohort(CohortConfig::dev(), 7);
  EXPECT_EQ(dev.patients.size(), 68u);
  EXPECT_EQ(dev.profiles.size(), 93u);
  for (const auto& s : dev.profiles) {
    EXPECT_GE(s.profile.points.size(), 8u);
    EXPECT_LE(s.profile.points.size(), 15u);
  }
  const auto test = generate_cohort(CohortConfig::test(), 8);
  EXPECT_EQ(test.patients.size(), 7u);
  EXPECT_EQ(test.profiles.size(), 14u);
  for (const auto& s : test.profiles) EXPECT_EQ(s.profile.points.size(), 12u);
  for (const auto& p : test.patients) {
    EXPECT_GE(p.txt_days, 7.0);
    EXPECT_LE(p.txt_days, 60.0);
  }
}

TEST(Cohort, Deterministic) {
  const auto a = generate_cohort(CohortConfig::test(), 42);
  const auto b = generate_cohort(CohortConfig::test(), 42);
  ASSERT_EQ(a.profiles.size(), b.profiles.size());
  for (std::size_t i = 0; i < a.profiles.size(); ++i) {
    ASSERT_EQ(a.profiles[i].profile.points.size(), b.profiles[i].profile.points.size());
    for (std::size_t j = 0; j < a.profiles[i].profile.points.size(); ++j) {
      EXPECT_EQ(a.profiles[i].profile.points[j].concentration, b.profiles[i].profile.points[j].concentration);
    }
  }
  const auto c = generate_cohort(CohortConfig::test(), 43);
  EXPECT_NE(a.profiles[0].profile.points[1].concentration, c.profiles[0].profile.points[1].concentration);
}

TEST(Cohort, NoiselessSixteenSlotReferenceAuc) {
  auto config = CohortConfig::dev();
  config.noise_on = false;
  config.sampling.min_samples = config.sampling.max_samples = 16;
  config.sampling.time_jitter_sd_min = 0.0;
  const auto cohort = generate_cohort(config, 11);
  for (const auto& s : cohort.profiles) {
    EXPECT_NEAR(reference_auc(s.profile), s.true_auc, 0.05 * s.true_auc);
  }
}

TEST(Cohort, DenseGridConvergesToTruth) {
  const auto patient = sample_patient(5, CohortPriors{});
  const auto params = individualize_parameters(patient, PopulationParams{}, std::uint64_t{5});
  std::vector<double> times;
  for (int i = 0; i < 1000; ++i) times.push_back(12.0 * i / 999.0);
  std::vector<ConcentrationPoint> dense;
  for (const double t : times) dense.push_back({t, steady_state_concentration(params, patient.dose_mg, t), true});
  const double truth = steady_state_auc(params, patient.dose_mg);
  EXPECT_NEAR(auc_log_linear_trapezoid(dense), truth, 1e-3 * truth);
}

TEST(Cohort, PeakTimesPlausible) {
  const auto cohort = generate_cohort(CohortConfig::dev(), 7);
  for (const auto& s : cohort.profiles) {
    const double t = steady_state_peak_time(s.params);
    EXPECT_GT(t, 0.3);
    EXPECT_LT(t, 4.0);
  }
}

TEST(Cohort, InvalidSecondVisitCount) {
  auto config = CohortConfig::test();
  config.n_second_visit = 8;
  try {
    (void)generate_cohort(config, 1);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kConfiguration);
  }
}

}  // namespace
}  // namespace tacro
