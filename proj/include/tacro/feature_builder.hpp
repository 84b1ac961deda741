#pragma once

// Feature matrices for the exposure regressor: the full 43-slot schema, the
// fixed three-sample schemas, and the flexible-last-sample schemas (raw time
// features or an estimated 3 h concentration).

#include <array>
#include <cmath>
#include <cstdio>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "tacro/error.hpp"
#include "tacro/map_poppk.hpp"
#include "tacro/pk_core.hpp"
#include "tacro/synth_cohort.hpp"

namespace tacro {

struct FeatureSchema {
  std::string id;
  std::vector<std::string> names;

  std::size_t size() const { return names.size(); }
};

struct FeatureVector {
  std::string schema_id;
  std::vector<double> values;
};

/// Candidate times for the last of the three samples.
inline constexpr std::array<double, 5> kFlexibleLastTimes = {2.0, 2.5, 3.0, 4.0, 5.0};

enum class ApproachOneVariant { kDeltaOnly, kExactTimes, kCombinedPlusDemographics, kCombinedMinimal };
enum class C3Strategy { kLinear, kReverseLinear, kLogLinear, kPopPk };

/// Every model input layout the pipeline can build.
enum class FeatureSet {
  kFull16,
  kFixed3,
  kFixed3Demographics,
  kFlexDeltaOnly,
  kFlexExactTimes,
  kFlexCombinedDemographics,
  kFlexCombined,
  kFlexEstLinear,
  kFlexEstReverseLinear,
  kFlexEstLogLinear,
  kFlexEstPopPk,
};

inline constexpr std::array<FeatureSet, 11> kAllFeatureSets = {
    FeatureSet::kFull16,        FeatureSet::kFixed3,         FeatureSet::kFixed3Demographics,
    FeatureSet::kFlexDeltaOnly, FeatureSet::kFlexExactTimes, FeatureSet::kFlexCombinedDemographics,
    FeatureSet::kFlexCombined,  FeatureSet::kFlexEstLinear,  FeatureSet::kFlexEstReverseLinear,
    FeatureSet::kFlexEstLogLinear, FeatureSet::kFlexEstPopPk};

inline std::string_view feature_set_id(FeatureSet s) {
  switch (s) {
    case FeatureSet::kFull16: return "full16";
    case FeatureSet::kFixed3: return "fixed3";
    case FeatureSet::kFixed3Demographics: return "fixed3_demo";
    case FeatureSet::kFlexDeltaOnly: return "flex_delta";
    case FeatureSet::kFlexExactTimes: return "flex_exact";
    case FeatureSet::kFlexCombinedDemographics: return "flex_combined_demo";
    case FeatureSet::kFlexCombined: return "flex_combined";
    case FeatureSet::kFlexEstLinear: return "flex_est_linear";
    case FeatureSet::kFlexEstReverseLinear: return "flex_est_reverse";
    case FeatureSet::kFlexEstLogLinear: return "flex_est_loglinear";
    case FeatureSet::kFlexEstPopPk: return "flex_est_poppk";
  }
  return "";
}

inline FeatureSet parse_feature_set(std::string_view id) {
  for (const auto s : kAllFeatureSets) {
    if (feature_set_id(s) == id) return s;
  }
  throw Error(ErrorCode::kConfiguration, "unknown feature set '" + std::string(id) + "'");
}

inline bool is_flexible(FeatureSet s) {
  return s != FeatureSet::kFull16 && s != FeatureSet::kFixed3 && s != FeatureSet::kFixed3Demographics;
}

namespace detail {

inline std::string hours_label(double t) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%g", t);
  return buf;
}

inline const std::vector<std::string>& demographic_names() {
  static const std::vector<std::string> names = {"weight_kg", "height_cm", "sex",      "bmi",
                                                 "bsa",       "hematocrit", "assay"};
  return names;
}

inline std::vector<double> demographic_values(const PatientRecord& p) {
  return {p.weight_kg, p.height_cm, static_cast<double>(p.sex), p.bmi(), p.bsa(), p.hematocrit,
          static_cast<double>(p.assay)};
}

inline FeatureSchema make_schema(std::string id, std::vector<std::string> names) {
  return {std::move(id), std::move(names)};
}

}  // namespace detail

inline FeatureSchema schema_for(FeatureSet set) {
  using detail::make_schema;
  const std::string id(feature_set_id(set));
  std::vector<std::string> names;
  const auto append = [&](const std::vector<std::string>& more) { names.insert(names.end(), more.begin(), more.end()); };
  switch (set) {
    case FeatureSet::kFull16:
      for (const double t : kNominalGrid) names.push_back("c_" + detail::hours_label(t) + "h");
      for (const double t : kNominalGrid) names.push_back("dt_" + detail::hours_label(t) + "h");
      append({"dose_mg", "weight_kg", "height_cm", "bmi", "bsa", "sex", "hematocrit", "txt_days", "assay",
              "sigma_add", "sigma_prop"});
      break;
    case FeatureSet::kFixed3:
      append({"c_0h", "c_1h", "c_3h"});
      break;
    case FeatureSet::kFixed3Demographics:
      append({"c_0h", "c_1h", "c_3h"});
      append(detail::demographic_names());
      names.push_back("txt_days");
      break;
    case FeatureSet::kFlexDeltaOnly:
      append({"c_0h", "c_1h", "c_last", "delta_from_3h"});
      break;
    case FeatureSet::kFlexExactTimes:
      append({"c_0h", "c_1h", "c_last", "t_0_min", "t_1_min", "t_last_min"});
      break;
    case FeatureSet::kFlexCombinedDemographics:
      append({"c_0h", "c_1h", "c_last", "delta_from_3h", "t_0_min", "t_1_min", "t_last_min"});
      append(detail::demographic_names());
      break;
    case FeatureSet::kFlexCombined:
      append({"c_0h", "c_1h", "c_last", "delta_from_3h", "t_0_min", "t_1_min", "t_last_min"});
      break;
    case FeatureSet::kFlexEstLinear:
    case FeatureSet::kFlexEstReverseLinear:
    case FeatureSet::kFlexEstLogLinear:
    case FeatureSet::kFlexEstPopPk:
      append({"c_0h", "c_1h", "c_3h_est", "estimated_flag"});
      break;
  }
  return make_schema(id, std::move(names));
}

/// 16 concentrations, 16 clock deviations (minutes), dose and 10 covariates.
inline FeatureVector build_full_event(const ConcentrationProfile& imputed, const PatientRecord& patient) {
  if (!imputed.is_complete()) {
    throw Error(ErrorCode::kSchema, "profile " + imputed.patient_id + " is not imputed to all 16 slots");
  }
  FeatureVector fv{std::string(feature_set_id(FeatureSet::kFull16)), {}};
  fv.values.reserve(43);
  for (const auto& p : imputed.points) fv.values.push_back(p.concentration);
  for (std::size_t s = 0; s < kNominalSlots; ++s) {
    fv.values.push_back((imputed.points[s].time - kNominalGrid[s]) * 60.0);
  }
  fv.values.insert(fv.values.end(),
                   {imputed.dose_mg, patient.weight_kg, patient.height_cm, patient.bmi(), patient.bsa(),
                    static_cast<double>(patient.sex), patient.hematocrit, patient.txt_days,
                    static_cast<double>(patient.assay), patient.sigma_add, patient.sigma_prop});
  return fv;
}

/// One dose interval seen through three samples: trough, 1 h, and a last
/// sample taken at one of the candidate times.
struct FlexibleEvent {
  std::string patient_id;
  int visit = 1;
  double dose_mg = 0.0;
  double nominal_last_time = 3.0;
  ConcentrationPoint trough;
  ConcentrationPoint one_hour;
  ConcentrationPoint last;
  double reference_auc = 0.0;

  double delta_from_3h() const { return nominal_last_time - 3.0; }
};

/// Five events per dose interval, one per candidate last-sample time.
inline std::vector<FlexibleEvent> expand_flexible_events(const ConcentrationProfile& profile) {
  const double ref_auc = reference_auc(profile);
  const auto imputed = impute_missing_concentrations(profile);
  const auto* trough = imputed.at_slot(kTroughSlot);
  const auto* one_hour = imputed.at_slot(kOneHourSlot);
  std::vector<FlexibleEvent> events;
  events.reserve(kFlexibleLastTimes.size());
  for (const double t_last : kFlexibleLastTimes) {
    const auto* last = imputed.at_slot(*exact_slot(t_last));
    if (trough == nullptr || one_hour == nullptr || last == nullptr) {
      throw Error(ErrorCode::kImputationDegenerate, "profile " + profile.patient_id + " lacks a required slot");
    }
    events.push_back({imputed.patient_id, imputed.visit, imputed.dose_mg, t_last, *trough, *one_hour, *last,
                      ref_auc});
  }
  return events;
}

inline FeatureVector approach_one_features(const FlexibleEvent& e, ApproachOneVariant variant,
                                           const PatientRecord& patient) {
  const std::vector<double> concs = {e.trough.concentration, e.one_hour.concentration, e.last.concentration};
  const std::vector<double> times = {e.trough.time * 60.0, e.one_hour.time * 60.0, e.last.time * 60.0};
  FeatureVector fv;
  auto& v = fv.values;
  v = concs;
  switch (variant) {
    case ApproachOneVariant::kDeltaOnly:
      fv.schema_id = feature_set_id(FeatureSet::kFlexDeltaOnly);
      v.push_back(e.delta_from_3h());
      break;
    case ApproachOneVariant::kExactTimes:
      fv.schema_id = feature_set_id(FeatureSet::kFlexExactTimes);
      v.insert(v.end(), times.begin(), times.end());
      break;
    case ApproachOneVariant::kCombinedPlusDemographics: {
      fv.schema_id = feature_set_id(FeatureSet::kFlexCombinedDemographics);
      v.push_back(e.delta_from_3h());
      v.insert(v.end(), times.begin(), times.end());
      const auto demo = detail::demographic_values(patient);
      v.insert(v.end(), demo.begin(), demo.end());
      break;
    }
    case ApproachOneVariant::kCombinedMinimal:
      fv.schema_id = feature_set_id(FeatureSet::kFlexCombined);
      v.push_back(e.delta_from_3h());
      v.insert(v.end(), times.begin(), times.end());
      break;
    default:
      throw Error(ErrorCode::kConfiguration, "unknown approach-one variant");
  }
  return fv;
}

/// Line through (1 h, c1) and (t_last, c_last) evaluated at 3 h, clamped at 0.
inline double estimate_c3_linear(double c1, double c_last, double t_last) {
  if (t_last == 1.0) throw Error(ErrorCode::kDegenerateSlope, "last sample coincides with the 1 h sample");
  const double slope = (c_last - c1) / (t_last - 1.0);
  return std::max(0.0, c1 + slope * (3.0 - 1.0));
}

/// As the linear estimate, but a last value above the 1 h value trades places
/// with it first so the line cannot climb past the absorption peak.
inline double estimate_c3_reverse_linear(double c1, double c_last, double t_last) {
  if (c_last > c1) std::swap(c1, c_last);
  return estimate_c3_linear(c1, c_last, t_last);
}

/// Exponential through (t_last, c_last) and the trough taken as the 12 h value.
inline double estimate_c3_loglinear(double c_last, double t_last, double c_trough) {
  if (!(c_last > 0.0) || !(c_trough > 0.0)) {
    throw Error(ErrorCode::kLogDomain, "log-linear estimate needs positive concentrations");
  }
  if (t_last == kDoseIntervalHours) throw Error(ErrorCode::kDegenerateSlope, "last sample at 12 h");
  const double k = std::log(c_trough / c_last) / (kDoseIntervalHours - t_last);
  return std::max(0.0, c_last * std::exp(k * (3.0 - t_last)));
}

/// MAP fit on the three samples, then the fitted curve at 3 h.
inline double estimate_c3_poppk(const PatientRecord& patient, std::span<const Observation> observations,
                                double dose_mg, const PopulationPriors& priors) {
  const auto fit = map_fit(priors, observations, dose_mg, MapCovariates::from(patient));
  return std::max(0.0, predict_conc_map(fit.params, dose_mg, 3.0));
}

inline std::vector<Observation> event_observations(const FlexibleEvent& e) {
  return {{e.trough.time, e.trough.concentration},
          {e.one_hour.time, e.one_hour.concentration},
          {e.last.time, e.last.concentration}};
}

/// [c0, c1, c3 (measured or estimated), estimated_flag].
inline FeatureVector approach_two_features(const FlexibleEvent& e, C3Strategy strategy,
                                           const PatientRecord& patient, const PopulationPriors& priors) {
  FeatureSet set = FeatureSet::kFlexEstLinear;
  switch (strategy) {
    case C3Strategy::kLinear: set = FeatureSet::kFlexEstLinear; break;
    case C3Strategy::kReverseLinear: set = FeatureSet::kFlexEstReverseLinear; break;
    case C3Strategy::kLogLinear: set = FeatureSet::kFlexEstLogLinear; break;
    case C3Strategy::kPopPk: set = FeatureSet::kFlexEstPopPk; break;
  }
  double c3 = e.last.concentration;
  double flag = 0.0;
  if (e.nominal_last_time != 3.0) {
    flag = 1.0;
    const double c1 = e.one_hour.concentration;
    const double cl = e.last.concentration;
    switch (strategy) {
      case C3Strategy::kLinear: c3 = estimate_c3_linear(c1, cl, e.nominal_last_time); break;
      case C3Strategy::kReverseLinear: c3 = estimate_c3_reverse_linear(c1, cl, e.nominal_last_time); break;
      case C3Strategy::kLogLinear: c3 = estimate_c3_loglinear(cl, e.nominal_last_time, e.trough.concentration); break;
      case C3Strategy::kPopPk: {
        const auto obs = event_observations(e);
        c3 = estimate_c3_poppk(patient, obs, e.dose_mg, priors);
        break;
      }
    }
  }
  return {std::string(feature_set_id(set)), {e.trough.concentration, e.one_hour.concentration, c3, flag}};
}

/// What the population-PK comparator sees for one row.
struct ComparatorInput {
  std::vector<Observation> observations;
  double dose_mg = 0.0;
  MapCovariates covariates;
};

/// Feature matrix plus row metadata. `comparator` is only filled when the
/// dataset is built from profiles (not when read back from CSV).
struct Dataset {
  FeatureSchema schema;
  std::vector<std::vector<double>> rows;
  std::vector<double> targets;
  std::vector<std::string> groups;  // patient ids
  std::vector<int> visits;
  std::vector<ComparatorInput> comparator;

  std::size_t size() const { return rows.size(); }

  Dataset subset(std::span<const std::size_t> indices) const {
    Dataset out;
    out.schema = schema;
    for (const auto i : indices) {
      out.rows.push_back(rows[i]);
      out.targets.push_back(targets[i]);
      out.groups.push_back(groups[i]);
      out.visits.push_back(visits[i]);
      if (!comparator.empty()) out.comparator.push_back(comparator[i]);
    }
    return out;
  }
};

/// A dose interval together with the patient it belongs to.
struct Sample {
  ConcentrationProfile profile;
  const PatientRecord* patient = nullptr;
};

inline std::vector<Sample> cohort_samples(const Cohort& cohort, bool first_visit_only) {
  std::vector<Sample> out;
  for (const auto& sim : cohort.profiles) {
    if (first_visit_only && sim.profile.visit != 1) continue;
    out.push_back({sim.profile, &cohort.patient(sim.profile.patient_id)});
  }
  return out;
}

struct BuildOptions {
  PopulationPriors priors{};
  /// Receives one line per event dropped because a popPK estimate failed.
  std::function<void(const std::string&)> warn;
};

/// Builds the matrix for `set`; fixed sets give one row per sample, flexible
/// sets five.
inline Dataset build_dataset(std::span<const Sample> samples, FeatureSet set, const BuildOptions& options = {}) {
  Dataset ds;
  ds.schema = schema_for(set);
  const auto push = [&](FeatureVector fv, const std::string& id, int visit, double target, ComparatorInput ci) {
    if (fv.values.size() != ds.schema.size()) throw Error(ErrorCode::kSchema, "feature length mismatch");
    for (const double v : fv.values) {
      if (!std::isfinite(v)) throw Error(ErrorCode::kSchema, "non-finite feature for " + id);
    }
    ds.rows.push_back(std::move(fv.values));
    ds.targets.push_back(target);
    ds.groups.push_back(id);
    ds.visits.push_back(visit);
    ds.comparator.push_back(std::move(ci));
  };

  for (const auto& sample : samples) {
    if (sample.patient == nullptr) throw Error(ErrorCode::kSchema, "sample without a patient record");
    const auto& patient = *sample.patient;
    const auto& raw = sample.profile;
    const auto covariates = MapCovariates::from(patient);

    if (!is_flexible(set)) {
      const double target = reference_auc(raw);
      const auto imputed = impute_missing_concentrations(raw);
      ComparatorInput ci{{}, raw.dose_mg, covariates};
      FeatureVector fv;
      if (set == FeatureSet::kFull16) {
        fv = build_full_event(imputed, patient);
        for (const auto& p : raw.points) {
          if (p.measured) ci.observations.push_back({p.time, p.concentration});
        }
      } else {
        const auto& c0 = *imputed.at_slot(kTroughSlot);
        const auto& c1 = *imputed.at_slot(kOneHourSlot);
        const auto& c3 = *imputed.at_slot(kThreeHourSlot);
        fv.schema_id = ds.schema.id;
        fv.values = {c0.concentration, c1.concentration, c3.concentration};
        if (set == FeatureSet::kFixed3Demographics) {
          const auto demo = detail::demographic_values(patient);
          fv.values.insert(fv.values.end(), demo.begin(), demo.end());
          fv.values.push_back(patient.txt_days);
        }
        ci.observations = {{c0.time, c0.concentration}, {c1.time, c1.concentration}, {c3.time, c3.concentration}};
      }
      push(std::move(fv), raw.patient_id, raw.visit, target, std::move(ci));
      continue;
    }

    for (const auto& e : expand_flexible_events(raw)) {
      FeatureVector fv;
      try {
        switch (set) {
          case FeatureSet::kFlexDeltaOnly: fv = approach_one_features(e, ApproachOneVariant::kDeltaOnly, patient); break;
          case FeatureSet::kFlexExactTimes: fv = approach_one_features(e, ApproachOneVariant::kExactTimes, patient); break;
          case FeatureSet::kFlexCombinedDemographics:
            fv = approach_one_features(e, ApproachOneVariant::kCombinedPlusDemographics, patient);
            break;
          case FeatureSet::kFlexCombined: fv = approach_one_features(e, ApproachOneVariant::kCombinedMinimal, patient); break;
          case FeatureSet::kFlexEstLinear: fv = approach_two_features(e, C3Strategy::kLinear, patient, options.priors); break;
          case FeatureSet::kFlexEstReverseLinear:
            fv = approach_two_features(e, C3Strategy::kReverseLinear, patient, options.priors);
            break;
          case FeatureSet::kFlexEstLogLinear:
            fv = approach_two_features(e, C3Strategy::kLogLinear, patient, options.priors);
            break;
          case FeatureSet::kFlexEstPopPk: fv = approach_two_features(e, C3Strategy::kPopPk, patient, options.priors); break;
          default: throw Error(ErrorCode::kConfiguration, "not a flexible feature set");
        }
      } catch (const Error& err) {
        if (set != FeatureSet::kFlexEstPopPk || err.code() != ErrorCode::kFitFailed) throw;
        if (options.warn) {
          options.warn("dropped " + e.patient_id + " visit " + std::to_string(e.visit) + " t_last " +
                       detail::hours_label(e.nominal_last_time) + ": " + err.what());
        }
        continue;
      }
      push(std::move(fv), e.patient_id, e.visit, e.reference_auc,
           ComparatorInput{event_observations(e), e.dose_mg, covariates});
    }
  }
  return ds;
}

}  // namespace tacro
