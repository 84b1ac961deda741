#pragma once

// Concentration-time domain types, reference AUC and gap imputation for one
// twice-daily tacrolimus dose interval.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "tacro/error.hpp"

namespace tacro {

inline constexpr double kDoseIntervalHours = 12.0;

/// The 16 nominal sampling hours after the morning dose.
inline constexpr std::array<double, 16> kNominalGrid = {
    0.0, 0.5, 1.0, 1.5, 2.0, 2.5, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0, 10.0, 11.0, 12.0};

inline constexpr std::size_t kNominalSlots = kNominalGrid.size();
inline constexpr std::size_t kTroughSlot = 0;
inline constexpr std::size_t kOneHourSlot = 2;
inline constexpr std::size_t kThreeHourSlot = 6;
inline constexpr std::size_t kTwelveHourSlot = 15;

/// Index of the nominal slot closest to `time` (ties resolve to the earlier slot).
inline std::size_t nominal_slot(double time) {
  std::size_t best = 0;
  double best_distance = std::abs(time - kNominalGrid[0]);
  for (std::size_t i = 1; i < kNominalSlots; ++i) {
    const double d = std::abs(time - kNominalGrid[i]);
    if (d < best_distance) {
      best = i;
      best_distance = d;
    }
  }
  return best;
}

/// Index of the slot whose nominal time equals `time`, if any.
inline std::optional<std::size_t> exact_slot(double time) {
  for (std::size_t i = 0; i < kNominalSlots; ++i) {
    if (kNominalGrid[i] == time) return i;
  }
  return std::nullopt;
}

struct ConcentrationPoint {
  double time = 0.0;           // hours after dose
  double concentration = 0.0;  // µg/L
  bool measured = true;        // false when imputed or substituted
};

struct ConcentrationProfile {
  std::string patient_id;
  int visit = 1;
  double dose_mg = 0.0;
  std::vector<ConcentrationPoint> points;

  static constexpr double dose_interval = kDoseIntervalHours;

  /// Throws kInvalidProfile / kOrdering when an invariant is broken.
  void validate() const {
    if (points.size() < 2) {
      throw Error(ErrorCode::kInvalidProfile, "profile " + patient_id + " has fewer than 2 points");
    }
    if (!(dose_mg > 0.0) || !std::isfinite(dose_mg)) {
      throw Error(ErrorCode::kInvalidProfile, "profile " + patient_id + " has a non-positive dose");
    }
    if (visit < 1) throw Error(ErrorCode::kInvalidProfile, "visit index must be >= 1");
    std::array<bool, kNominalSlots> seen{};
    for (std::size_t i = 0; i < points.size(); ++i) {
      const auto& p = points[i];
      if (!std::isfinite(p.time) || !std::isfinite(p.concentration) || p.time < 0.0 ||
          p.time > kDoseIntervalHours || p.concentration < 0.0) {
        throw Error(ErrorCode::kInvalidProfile, "profile " + patient_id + " has an out-of-range point");
      }
      if (i > 0 && !(p.time > points[i - 1].time)) {
        throw Error(ErrorCode::kOrdering, "profile " + patient_id + " times are not strictly increasing");
      }
      const auto slot = nominal_slot(p.time);
      if (seen[slot]) {
        throw Error(ErrorCode::kInvalidProfile, "profile " + patient_id + " has two points in one nominal slot");
      }
      seen[slot] = true;
    }
  }

  /// Point occupying a nominal slot, or nullptr.
  const ConcentrationPoint* at_slot(std::size_t slot) const {
    for (const auto& p : points) {
      if (nominal_slot(p.time) == slot) return &p;
    }
    return nullptr;
  }

  bool is_complete() const {
    if (points.size() != kNominalSlots) return false;
    for (std::size_t i = 0; i < kNominalSlots; ++i) {
      if (nominal_slot(points[i].time) != i) return false;
    }
    return true;
  }
};

namespace detail {

inline void check_auc_input(std::span<const ConcentrationPoint> points) {
  if (points.size() < 2) {
    throw Error(ErrorCode::kInvalidProfile, "AUC needs at least 2 points");
  }
  for (std::size_t i = 0; i < points.size(); ++i) {
    if (!std::isfinite(points[i].concentration) || points[i].concentration < 0.0) {
      throw Error(ErrorCode::kInvalidProfile, "AUC needs finite non-negative concentrations");
    }
    if (i > 0 && !(points[i].time > points[i - 1].time)) {
      throw Error(ErrorCode::kOrdering, "AUC needs strictly increasing times");
    }
  }
}

}  // namespace detail

/// Area of one segment: logarithmic trapezoid when strictly decreasing and
/// positive, linear trapezoid otherwise.
inline double segment_area(double t1, double c1, double t2, double c2) {
  const double dt = t2 - t1;
  if (c2 < c1 && c1 > 0.0 && c2 > 0.0) {
    return (c1 - c2) * dt / std::log(c1 / c2);
  }
  return 0.5 * (c1 + c2) * dt;
}

/// Linear-up / log-down trapezoidal AUC in µg·h/L.
inline double auc_log_linear_trapezoid(std::span<const ConcentrationPoint> points) {
  detail::check_auc_input(points);
  double area = 0.0;
  for (std::size_t i = 1; i < points.size(); ++i) {
    area += segment_area(points[i - 1].time, points[i - 1].concentration, points[i].time,
                         points[i].concentration);
  }
  return area;
}

/// Steady state means C(0) = C(12): copy the trough into a missing 12 h slot.
inline ConcentrationProfile substitute_trough_for_12h(const ConcentrationProfile& profile) {
  const auto trough = std::find_if(profile.points.begin(), profile.points.end(),
                                   [](const ConcentrationPoint& p) { return p.time == 0.0; });
  if (trough == profile.points.end()) {
    throw Error(ErrorCode::kMissingTrough, "profile " + profile.patient_id + " has no trough at t=0");
  }
  ConcentrationProfile out = profile;
  if (profile.at_slot(kTwelveHourSlot) == nullptr) {
    out.points.push_back({kDoseIntervalHours, trough->concentration, false});
  }
  return out;
}

/// Reference exposure from the measured concentrations (plus the trough as
/// the 12 h value when that sample is absent).
inline double reference_auc(const ConcentrationProfile& profile) {
  ConcentrationProfile measured_only = profile;
  std::erase_if(measured_only.points, [](const ConcentrationPoint& p) { return !p.measured; });
  const auto completed = substitute_trough_for_12h(measured_only);
  return auc_log_linear_trapezoid(completed.points);
}

struct LineFit {
  double slope = 0.0;
  double intercept = 0.0;
  double operator()(double t) const { return intercept + slope * t; }
};

/// Ordinary least squares of y on x. Needs two distinct x values.
inline std::optional<LineFit> least_squares(std::span<const double> x, std::span<const double> y) {
  const std::size_t n = x.size();
  if (n < 2) return std::nullopt;
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
  }
  if (!(sxx > 0.0)) return std::nullopt;
  const double slope = sxy / sxx;
  return LineFit{slope, my - slope * mx};
}

/// Fills every empty nominal slot.
///
/// Slots before the peak come from a least-squares line through the measured
/// points in (0, t_max]; slots between the peak and the next sample are
/// interpolated linearly; later slots come from a least-squares fit of ln(c)
/// over all points after the peak. When fewer than two points follow the peak
/// the trough stands in for the 12 h value first. Measured points are kept
/// unchanged and imputed values are clamped at zero.
inline ConcentrationProfile impute_missing_concentrations(const ConcentrationProfile& profile) {
  profile.validate();
  if (profile.is_complete()) return profile;

  std::array<bool, kNominalSlots> occupied{};
  for (const auto& p : profile.points) occupied[nominal_slot(p.time)] = true;

  std::vector<ConcentrationPoint> measured;
  for (const auto& p : profile.points) {
    if (p.measured) measured.push_back(p);
  }
  const auto trough = std::find_if(measured.begin(), measured.end(),
                                   [](const ConcentrationPoint& p) { return p.time == 0.0; });
  if (trough == measured.end()) {
    throw Error(ErrorCode::kMissingTrough, "profile " + profile.patient_id + " has no measured trough");
  }
  if (measured.size() < 2) {
    throw Error(ErrorCode::kImputationDegenerate, "profile " + profile.patient_id + " has < 2 measured points");
  }

  // Earliest maximum.
  auto peak = measured.begin();
  for (auto it = measured.begin(); it != measured.end(); ++it) {
    if (it->concentration > peak->concentration) peak = it;
  }
  const double t_max = peak->time;
  const double c_max = peak->concentration;

  std::vector<ConcentrationPoint> after_peak(peak + 1, measured.end());
  ConcentrationProfile out = profile;

  bool missing_after_peak = false;
  for (std::size_t s = 0; s < kNominalSlots; ++s) {
    if (!occupied[s] && kNominalGrid[s] > t_max) missing_after_peak = true;
  }
  if (missing_after_peak && after_peak.size() < 2 && !occupied[kTwelveHourSlot]) {
    const ConcentrationPoint substitute{kDoseIntervalHours, trough->concentration, false};
    after_peak.push_back(substitute);
    out.points.push_back(substitute);
    occupied[kTwelveHourSlot] = true;
  }

  std::optional<LineFit> rising;
  std::optional<LineFit> log_decay;
  const auto rising_fit = [&]() -> const LineFit& {
    if (!rising) {
      std::vector<double> x, y;
      for (const auto& p : measured) {
        if (p.time > 0.0 && p.time <= t_max) {
          x.push_back(p.time);
          y.push_back(p.concentration);
        }
      }
      rising = least_squares(x, y);
      if (!rising) {
        throw Error(ErrorCode::kImputationDegenerate,
                    "profile " + profile.patient_id + " has < 2 points for the pre-peak fit");
      }
    }
    return *rising;
  };
  const auto decay_fit = [&]() -> const LineFit& {
    if (!log_decay) {
      std::vector<double> x, y;
      for (const auto& p : after_peak) {
        if (p.concentration > 0.0) {
          x.push_back(p.time);
          y.push_back(std::log(p.concentration));
        }
      }
      log_decay = least_squares(x, y);
      if (!log_decay) {
        throw Error(ErrorCode::kImputationDegenerate,
                    "profile " + profile.patient_id + " has < 2 positive points for the post-peak fit");
      }
    }
    return *log_decay;
  };

  for (std::size_t s = 0; s < kNominalSlots; ++s) {
    if (occupied[s]) continue;
    const double t = kNominalGrid[s];
    double c = 0.0;
    if (t < t_max) {
      c = rising_fit()(t);
    } else if (after_peak.empty()) {
      throw Error(ErrorCode::kImputationDegenerate,
                  "profile " + profile.patient_id + " has no point after the peak");
    } else if (t < after_peak.front().time) {
      const auto& next = after_peak.front();
      c = c_max + (next.concentration - c_max) * (t - t_max) / (next.time - t_max);
    } else {
      c = std::exp(decay_fit()(t));
    }
    out.points.push_back({t, std::max(0.0, c), false});
  }

  std::sort(out.points.begin(), out.points.end(),
            [](const ConcentrationPoint& a, const ConcentrationPoint& b) { return a.time < b.time; });
  out.validate();
  return out;
}

}  // namespace tacro
