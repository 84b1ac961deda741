#pragma once

// Synthetic kidney-transplant cohorts: covariates, a one-compartment
// first-order-absorption steady-state model, and sampled dose intervals with
// an analytic AUC = dose / CL ground truth.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "tacro/error.hpp"
#include "tacro/pk_core.hpp"
#include "tacro/random.hpp"

namespace tacro {

enum class Sex { kFemale = 0, kMale = 1 };
enum class Assay { kLcms = 0, kImmuno = 1 };

inline std::string to_string(Sex s) { return s == Sex::kMale ? "male" : "female"; }
inline std::string to_string(Assay a) { return a == Assay::kImmuno ? "IMMUNO" : "LCMS"; }

struct PatientRecord {
  std::string patient_id;
  Sex sex = Sex::kMale;
  double weight_kg = 75.0;
  double height_cm = 175.0;
  double hematocrit = 0.35;
  double txt_days = 365.0;
  Assay assay = Assay::kLcms;
  double sigma_add = 0.3;   // µg/L
  double sigma_prop = 0.08;
  double dose_mg = 4.0;     // morning dose

  double bmi() const { return weight_kg / ((height_cm / 100.0) * (height_cm / 100.0)); }
  /// DuBois body surface area, m².
  double bsa() const { return 0.007184 * std::pow(weight_kg, 0.425) * std::pow(height_cm, 0.725); }
};

struct CohortPriors {
  double male_fraction = 2.0 / 3.0;
  double weight_mean = 78.0, weight_sd = 15.0;
  double height_mean = 174.0, height_sd = 9.0;
  double hct_mean = 0.36, hct_sd = 0.05;
  double txt_min_days = 12.0, txt_max_days = 5600.0;  // log-uniform
  int dose_min_mg = 1, dose_max_mg = 8;
  double immuno_fraction = 0.3;
  double sigma_add_lcms = 0.3, sigma_prop_lcms = 0.08;
  double sigma_add_immuno = 0.5, sigma_prop_immuno = 0.12;

  void validate() const {
    const auto fail = [](const char* what) { throw Error(ErrorCode::kConfiguration, what); };
    if (weight_sd < 0 || height_sd < 0 || hct_sd < 0) fail("covariate spreads must be >= 0");
    if (!(weight_mean > 0) || !(height_mean > 0)) fail("weight/height means must be positive");
    if (!(hct_mean > 0.15 && hct_mean < 0.60)) fail("hematocrit mean must lie in (0.15, 0.60)");
    if (male_fraction < 0 || male_fraction > 1 || immuno_fraction < 0 || immuno_fraction > 1) {
      fail("fractions must lie in [0, 1]");
    }
    if (txt_min_days < 1 || txt_max_days < txt_min_days) fail("txt range must satisfy 1 <= min <= max");
    if (dose_min_mg < 1 || dose_max_mg < dose_min_mg) fail("dose range must satisfy 1 <= min <= max");
    if (sigma_add_lcms < 0 || sigma_prop_lcms < 0 || sigma_add_immuno < 0 || sigma_prop_immuno < 0) {
      fail("assay error terms must be >= 0");
    }
  }
};

struct PkParameters {
  double cl = 25.0;  // apparent clearance, L/h
  double v = 350.0;  // apparent volume, L
  double ka = 1.5;   // absorption rate, 1/h

  double ke() const { return cl / v; }
  bool valid() const {
    return std::isfinite(cl) && std::isfinite(v) && std::isfinite(ka) && cl > 0 && v > 0 && ka > 0;
  }
};

struct PopulationParams {
  PkParameters typical{};
  double omega_cl = 0.3, omega_v = 0.3, omega_ka = 0.5;
};

/// Per-individual deviations on the log scale.
struct RandomEffects {
  double cl = 0.0, v = 0.0, ka = 0.0;
};

namespace detail {

inline double draw_normal(Rng& rng, double mean, double sd) {
  if (sd == 0.0) return mean;
  return std::normal_distribution<double>(mean, sd)(rng);
}

inline bool near_degenerate(const PkParameters& p) {
  return std::abs(p.ka - p.ke()) <= 1e-9 * std::max(p.ka, p.ke());
}

}  // namespace detail

inline PatientRecord sample_patient(std::uint64_t seed, const CohortPriors& priors,
                                    std::string patient_id = "P001") {
  priors.validate();
  Rng rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  PatientRecord r;
  r.patient_id = std::move(patient_id);
  r.sex = unit(rng) < priors.male_fraction ? Sex::kMale : Sex::kFemale;
  r.weight_kg = std::clamp(detail::draw_normal(rng, priors.weight_mean, priors.weight_sd), 40.0, 150.0);
  r.height_cm = std::clamp(detail::draw_normal(rng, priors.height_mean, priors.height_sd), 145.0, 205.0);
  r.hematocrit = std::clamp(detail::draw_normal(rng, priors.hct_mean, priors.hct_sd), 0.16, 0.59);
  const double log_lo = std::log(priors.txt_min_days);
  const double log_hi = std::log(priors.txt_max_days);
  r.txt_days = std::exp(log_lo + (log_hi - log_lo) * unit(rng));
  r.assay = unit(rng) < priors.immuno_fraction ? Assay::kImmuno : Assay::kLcms;
  r.sigma_add = r.assay == Assay::kImmuno ? priors.sigma_add_immuno : priors.sigma_add_lcms;
  r.sigma_prop = r.assay == Assay::kImmuno ? priors.sigma_prop_immuno : priors.sigma_prop_lcms;
  r.dose_mg = std::uniform_int_distribution<int>(priors.dose_min_mg, priors.dose_max_mg)(rng);
  return r;
}

/// Steady-state concentration (µg/L) at `t` hours into a 12 h interval.
inline double steady_state_concentration(const PkParameters& p, double dose_mg, double t) {
  if (!p.valid()) throw Error(ErrorCode::kDegenerateParameters, "PK parameters must be positive and finite");
  if (detail::near_degenerate(p)) {
    throw Error(ErrorCode::kDegenerateParameters, "ka equals ke; the closed form is undefined");
  }
  const double ke = p.ke();
  const double tau = kDoseIntervalHours;
  const double dose_ug = dose_mg * 1000.0;
  const double scale = dose_ug * p.ka / (p.v * (p.ka - ke));
  return scale * (std::exp(-ke * t) / (1.0 - std::exp(-ke * tau)) -
                  std::exp(-p.ka * t) / (1.0 - std::exp(-p.ka * tau)));
}

/// Time of the steady-state peak, hours.
inline double steady_state_peak_time(const PkParameters& p) {
  const double ke = p.ke();
  const double tau = kDoseIntervalHours;
  return std::log(p.ka * (1.0 - std::exp(-ke * tau)) / (ke * (1.0 - std::exp(-p.ka * tau)))) /
         (p.ka - ke);
}

/// Exact steady-state AUC over one interval, µg·h/L.
inline double steady_state_auc(const PkParameters& p, double dose_mg) { return dose_mg * 1000.0 / p.cl; }

/// Hematocrit and allometric weight effects on clearance.
inline double covariate_clearance(double cl_typical, double hematocrit, double weight_kg) {
  return cl_typical * std::pow(hematocrit / 0.35, -1.0) * std::pow(weight_kg / 75.0, 0.75);
}

inline PkParameters individualize_parameters(const PatientRecord& patient, const PopulationParams& pop,
                                             const RandomEffects& eta) {
  if (!pop.typical.valid()) throw Error(ErrorCode::kConfiguration, "population parameters must be positive");
  PkParameters p;
  p.cl = covariate_clearance(pop.typical.cl, patient.hematocrit, patient.weight_kg) * std::exp(eta.cl);
  p.v = pop.typical.v * std::exp(eta.v);
  p.ka = pop.typical.ka * std::exp(eta.ka);
  return p;
}

/// Draws random effects until ka differs from ke.
inline PkParameters individualize_parameters(const PatientRecord& patient, const PopulationParams& pop,
                                             std::uint64_t seed) {
  if (pop.omega_cl < 0 || pop.omega_v < 0 || pop.omega_ka < 0) {
    throw Error(ErrorCode::kConfiguration, "omegas must be >= 0");
  }
  Rng rng(seed);
  for (int attempt = 0; attempt < 1000; ++attempt) {
    RandomEffects eta;
    eta.cl = detail::draw_normal(rng, 0.0, pop.omega_cl);
    eta.v = detail::draw_normal(rng, 0.0, pop.omega_v);
    eta.ka = detail::draw_normal(rng, 0.0, pop.omega_ka);
    const auto p = individualize_parameters(patient, pop, eta);
    if (!detail::near_degenerate(p)) return p;
  }
  throw Error(ErrorCode::kDegenerateParameters, "could not draw ka != ke");
}

struct SimulatedProfile {
  ConcentrationProfile profile;
  PkParameters params;
  double true_auc = 0.0;
};

/// Samples the steady-state curve at `sampling_times`, adding the patient's
/// combined proportional/additive assay error when `noise_on`.
inline SimulatedProfile simulate_profile(const PatientRecord& patient, const PkParameters& params,
                                         double dose_mg, std::span<const double> sampling_times,
                                         std::uint64_t seed, bool noise_on, int visit = 1) {
  if (sampling_times.empty()) throw Error(ErrorCode::kConfiguration, "sampling_times is empty");
  Rng rng(seed);
  SimulatedProfile out;
  out.params = params;
  out.profile.patient_id = patient.patient_id;
  out.profile.visit = visit;
  out.profile.dose_mg = dose_mg;
  for (const double t : sampling_times) {
    double c = steady_state_concentration(params, dose_mg, t);
    if (noise_on) {
      const double e_prop = detail::draw_normal(rng, 0.0, patient.sigma_prop);
      const double e_add = detail::draw_normal(rng, 0.0, patient.sigma_add);
      c = c * (1.0 + e_prop) + e_add;
    }
    out.profile.points.push_back({t, std::max(0.0, c), true});
  }
  out.profile.validate();
  out.true_auc = steady_state_auc(params, dose_mg);
  return out;
}

struct SamplingPlan {
  int min_samples = 8;
  int max_samples = 15;
  double time_jitter_sd_min = 4.0;  // interior samples only
  double max_jitter_min = 10.0;
};

/// Actual sampling times: a random subset of the nominal grid (trough, 1 h
/// and 3 h always kept) with small clock deviations on interior samples.
inline std::vector<double> draw_sampling_times(Rng& rng, const SamplingPlan& plan) {
  if (plan.min_samples < 3 || plan.max_samples > static_cast<int>(kNominalSlots) ||
      plan.min_samples > plan.max_samples) {
    throw Error(ErrorCode::kConfiguration, "sample counts must satisfy 3 <= min <= max <= 16");
  }
  const int count = std::uniform_int_distribution<int>(plan.min_samples, plan.max_samples)(rng);
  std::vector<std::size_t> optional_slots;
  for (std::size_t s = 0; s < kNominalSlots; ++s) {
    if (s != kTroughSlot && s != kOneHourSlot && s != kThreeHourSlot) optional_slots.push_back(s);
  }
  std::shuffle(optional_slots.begin(), optional_slots.end(), rng);
  std::vector<std::size_t> kept = {kTroughSlot, kOneHourSlot, kThreeHourSlot};
  kept.insert(kept.end(), optional_slots.begin(), optional_slots.begin() + (count - 3));
  std::sort(kept.begin(), kept.end());

  std::vector<double> times;
  for (const auto s : kept) {
    double t = kNominalGrid[s];
    if (s != kTroughSlot && s != kTwelveHourSlot) {
      const double jitter = std::clamp(detail::draw_normal(rng, 0.0, plan.time_jitter_sd_min),
                                       -plan.max_jitter_min, plan.max_jitter_min);
      t += jitter / 60.0;
    }
    times.push_back(t);
  }
  return times;
}

/// Clinicians adjust the dose toward a target exposure, so the morning dose
/// is set from the individual clearance: round(target_auc·CL/1000) mg,
/// clamped to the prior's dose range.
struct DoseTitration {
  bool enabled = true;
  double target_auc_median = 170.0;  // µg·h/L
  double target_auc_log_sd = 0.2;
};

struct CohortConfig {
  int n_patients = 68;
  int n_second_visit = 25;  // the first n patients get a second dose interval
  bool noise_on = true;
  DoseTitration titration{};
  std::string id_prefix = "D";
  SamplingPlan sampling{};
  CohortPriors priors{};
  PopulationParams population{};

  static CohortConfig dev() { return {}; }

  static CohortConfig test() {
    CohortConfig c;
    c.n_patients = 7;
    c.n_second_visit = 7;
    c.id_prefix = "T";
    c.sampling.min_samples = 12;
    c.sampling.max_samples = 12;
    c.priors.txt_min_days = 7.0;
    c.priors.txt_max_days = 60.0;
    return c;
  }
};

struct Cohort {
  std::vector<PatientRecord> patients;
  std::vector<SimulatedProfile> profiles;  // ordered by (patient, visit)

  const PatientRecord& patient(const std::string& id) const {
    for (const auto& p : patients) {
      if (p.patient_id == id) return p;
    }
    throw Error(ErrorCode::kSchema, "unknown patient id " + id);
  }
};

inline std::string format_patient_id(const std::string& prefix, int index) {
  std::string digits = std::to_string(index + 1);
  while (digits.size() < 3) digits.insert(digits.begin(), '0');
  return prefix + digits;
}

/// Pure function of (config, seed). Each patient and visit draws from its own
/// sub-stream, so the output does not depend on generation order.
inline Cohort generate_cohort(const CohortConfig& config, std::uint64_t seed) {
  if (config.n_patients < 1) throw Error(ErrorCode::kConfiguration, "n_patients must be >= 1");
  if (config.n_second_visit < 0 || config.n_second_visit > config.n_patients) {
    throw Error(ErrorCode::kConfiguration, "n_second_visit must lie in [0, n_patients]");
  }
  config.priors.validate();
  Cohort cohort;
  for (int i = 0; i < config.n_patients; ++i) {
    const auto index = static_cast<std::uint64_t>(i);
    auto patient = sample_patient(derive_seed(seed, "patient", index), config.priors,
                                  format_patient_id(config.id_prefix, i));
    const auto params = individualize_parameters(patient, config.population, derive_seed(seed, "eta", index));
    if (config.titration.enabled) {
      Rng titration_rng = make_rng(seed, "titration", index);
      const double target = config.titration.target_auc_median *
                            std::exp(detail::draw_normal(titration_rng, 0.0, config.titration.target_auc_log_sd));
      patient.dose_mg = std::clamp(std::round(target * params.cl / 1000.0),
                                   static_cast<double>(config.priors.dose_min_mg),
                                   static_cast<double>(config.priors.dose_max_mg));
    }
    const int visits = i < config.n_second_visit ? 2 : 1;
    for (int visit = 1; visit <= visits; ++visit) {
      const auto stream_index = index * 16 + static_cast<std::uint64_t>(visit);
      Rng sampling_rng = make_rng(seed, "sampling", stream_index);
      // Redraw the sampling pattern until the gaps can be imputed.
      for (int attempt = 0;; ++attempt) {
        const auto times = draw_sampling_times(sampling_rng, config.sampling);
        auto sim = simulate_profile(patient, params, patient.dose_mg, times,
                                    derive_seed(seed, "noise", stream_index * 1024 + attempt),
                                    config.noise_on, visit);
        try {
          (void)impute_missing_concentrations(sim.profile);
        } catch (const Error&) {
          if (attempt < 256) continue;
          throw;
        }
        cohort.profiles.push_back(std::move(sim));
        break;
      }
    }
    cohort.patients.push_back(std::move(patient));
  }
  return cohort;
}

}  // namespace tacro
