#pragma once

// One-compartment population-PK comparator: MAP-Bayesian estimation of an
// individual's (CL, V, ka) from sparse steady-state concentrations.

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <limits>
#include <span>
#include <vector>

#include "tacro/error.hpp"
#include "tacro/synth_cohort.hpp"

namespace tacro {

struct PopulationPriors {
  PkParameters theta{};  // typical values at hct 0.35 and 75 kg
  double omega_cl = 0.3, omega_v = 0.3, omega_ka = 0.5;
  double sigma_add = 0.3;
  double sigma_prop = 0.08;

  static PopulationPriors from(const PopulationParams& pop) {
    PopulationPriors p;
    p.theta = pop.typical;
    p.omega_cl = pop.omega_cl;
    p.omega_v = pop.omega_v;
    p.omega_ka = pop.omega_ka;
    return p;
  }

  void validate() const {
    if (!theta.valid()) throw Error(ErrorCode::kConfiguration, "prior medians must be positive");
    if (omega_cl < 0 || omega_v < 0 || omega_ka < 0) throw Error(ErrorCode::kConfiguration, "omegas must be >= 0");
    if (!(sigma_add > 0 || sigma_prop > 0) || sigma_add < 0 || sigma_prop < 0) {
      throw Error(ErrorCode::kConfiguration, "residual error terms must be >= 0 and not both zero");
    }
  }
};

/// Inputs the comparator accepts besides the concentrations.
struct MapCovariates {
  double weight_kg = 75.0;
  double height_cm = 175.0;
  double hematocrit = 0.35;
  double txt_days = 365.0;
  Sex sex = Sex::kMale;
  double bmi = 24.5;

  static MapCovariates from(const PatientRecord& r) {
    return {r.weight_kg, r.height_cm, r.hematocrit, r.txt_days, r.sex, r.bmi()};
  }
};

/// Janmahasatian fat-free mass, kg.
inline double fat_free_mass(double weight_kg, double bmi, Sex sex) {
  return sex == Sex::kMale ? 9270.0 * weight_kg / (6680.0 + 216.0 * bmi)
                           : 9270.0 * weight_kg / (8780.0 + 244.0 * bmi);
}

struct Observation {
  double time = 0.0;
  double concentration = 0.0;
};

struct MapFitResult {
  PkParameters params;
  double objective = 0.0;
  bool converged = false;
  int evaluations = 0;
  double fat_free_mass = 0.0;  // computed for the record; the structural model ignores it
};

struct SimplexOptions {
  double diameter_tol = 1e-6;
  int max_evaluations = 2000;
};

struct SimplexResult {
  std::vector<double> x;
  double value = 0.0;
  int evaluations = 0;
  bool converged = false;
};

/// Nelder-Mead with standard coefficients. Terminates when every vertex lies
/// within `diameter_tol` of the best one or the evaluation budget is spent.
inline SimplexResult nelder_mead(const std::function<double(std::span<const double>)>& f,
                                 std::vector<double> start, std::span<const double> steps,
                                 const SimplexOptions& options = {}) {
  const std::size_t n = start.size();
  SimplexResult result;
  if (n == 0) {
    result.x = start;
    result.value = f(start);
    result.evaluations = 1;
    result.converged = true;
    return result;
  }
  std::vector<std::vector<double>> vertex(n + 1, start);
  for (std::size_t i = 0; i < n; ++i) vertex[i + 1][i] += steps[i];
  std::vector<double> value(n + 1);
  int evals = 0;
  const auto eval = [&](const std::vector<double>& x) {
    ++evals;
    const double v = f(x);
    return std::isfinite(v) ? v : std::numeric_limits<double>::infinity();
  };
  for (std::size_t i = 0; i <= n; ++i) value[i] = eval(vertex[i]);

  std::vector<std::size_t> order(n + 1);
  bool converged = false;
  while (true) {
    for (std::size_t i = 0; i <= n; ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return value[a] < value[b]; });
    const auto best = order.front();
    const auto worst = order.back();
    const auto second_worst = order[n - 1];

    double diameter = 0.0;
    for (std::size_t i = 0; i <= n; ++i) {
      double d = 0.0;
      for (std::size_t k = 0; k < n; ++k) d = std::max(d, std::abs(vertex[i][k] - vertex[best][k]));
      diameter = std::max(diameter, d);
    }
    if (diameter < options.diameter_tol) {
      converged = true;
      break;
    }
    if (evals >= options.max_evaluations) break;

    std::vector<double> centroid(n, 0.0);
    for (std::size_t i = 0; i <= n; ++i) {
      if (i == worst) continue;
      for (std::size_t k = 0; k < n; ++k) centroid[k] += vertex[i][k] / static_cast<double>(n);
    }
    const auto along = [&](double coef) {
      std::vector<double> x(n);
      for (std::size_t k = 0; k < n; ++k) x[k] = centroid[k] + coef * (vertex[worst][k] - centroid[k]);
      return x;
    };

    const auto reflected = along(-1.0);
    const double f_reflected = eval(reflected);
    if (f_reflected < value[best]) {
      const auto expanded = along(-2.0);
      const double f_expanded = eval(expanded);
      if (f_expanded < f_reflected) {
        vertex[worst] = expanded;
        value[worst] = f_expanded;
      } else {
        vertex[worst] = reflected;
        value[worst] = f_reflected;
      }
      continue;
    }
    if (f_reflected < value[second_worst]) {
      vertex[worst] = reflected;
      value[worst] = f_reflected;
      continue;
    }
    const bool outside = f_reflected < value[worst];
    const auto contracted = along(outside ? -0.5 : 0.5);
    const double f_contracted = eval(contracted);
    if (f_contracted < (outside ? f_reflected : value[worst])) {
      vertex[worst] = contracted;
      value[worst] = f_contracted;
      continue;
    }
    for (std::size_t i = 0; i <= n; ++i) {
      if (i == best) continue;
      for (std::size_t k = 0; k < n; ++k) vertex[i][k] = vertex[best][k] + 0.5 * (vertex[i][k] - vertex[best][k]);
      value[i] = eval(vertex[i]);
    }
  }
  const auto best = order.front();
  result.x = vertex[best];
  result.value = value[best];
  result.evaluations = evals;
  result.converged = converged;
  return result;
}

namespace detail {

/// Closed-form concentration that steps off the ka == ke singularity.
inline double concentration_nudged(PkParameters p, double dose_mg, double t) {
  if (near_degenerate(p)) p.ka *= 1.0 + 1e-6;
  return steady_state_concentration(p, dose_mg, t);
}

}  // namespace detail

/// Covariate-adjusted prior medians for one individual.
inline PkParameters prior_medians(const PopulationPriors& priors, const MapCovariates& cov) {
  PkParameters p = priors.theta;
  p.cl = covariate_clearance(priors.theta.cl, cov.hematocrit, cov.weight_kg);
  return p;
}

/// Negative log posterior (up to constants) on log-parameters.
inline double map_objective(const PopulationPriors& priors, const PkParameters& median,
                            std::span<const Observation> observations, double dose_mg, const PkParameters& p) {
  double j = 0.0;
  for (const auto& obs : observations) {
    const double pred = detail::concentration_nudged(p, dose_mg, obs.time);
    const double sd = priors.sigma_add + priors.sigma_prop * std::abs(pred);
    const double r = (obs.concentration - pred) / sd;
    j += r * r;
  }
  const std::array<double, 3> log_ratio = {std::log(p.cl / median.cl), std::log(p.v / median.v),
                                           std::log(p.ka / median.ka)};
  const std::array<double, 3> omega = {priors.omega_cl, priors.omega_v, priors.omega_ka};
  for (std::size_t k = 0; k < 3; ++k) {
    if (omega[k] > 0) j += log_ratio[k] * log_ratio[k] / (omega[k] * omega[k]);
  }
  return j;
}

/// MAP estimate from multi-start Nelder-Mead in log space. Starts: the prior
/// median and the median shifted by ±1 omega along each free axis. A
/// parameter with omega = 0 is pinned to its median.
inline MapFitResult map_fit(const PopulationPriors& priors, std::span<const Observation> observations,
                            double dose_mg, const MapCovariates& covariates, const SimplexOptions& options = {}) {
  priors.validate();
  if (!(dose_mg > 0)) throw Error(ErrorCode::kConfiguration, "dose must be positive");
  for (const auto& o : observations) {
    if (!std::isfinite(o.time) || !std::isfinite(o.concentration) || o.concentration < 0 || o.time < 0 ||
        o.time > kDoseIntervalHours) {
      throw Error(ErrorCode::kInvalidProfile, "observation out of range");
    }
  }
  const PkParameters median = prior_medians(priors, covariates);
  MapFitResult result;
  result.fat_free_mass = fat_free_mass(covariates.weight_kg, covariates.bmi, covariates.sex);

  const std::array<double, 3> omega = {priors.omega_cl, priors.omega_v, priors.omega_ka};
  std::vector<std::size_t> free_axes;
  for (std::size_t k = 0; k < 3; ++k) {
    if (omega[k] > 0) free_axes.push_back(k);
  }
  const std::array<double, 3> log_median = {std::log(median.cl), std::log(median.v), std::log(median.ka)};
  const auto to_params = [&](std::span<const double> x) {
    auto full = log_median;
    for (std::size_t i = 0; i < free_axes.size(); ++i) full[free_axes[i]] = x[i];
    return PkParameters{std::exp(full[0]), std::exp(full[1]), std::exp(full[2])};
  };
  const auto objective = [&](std::span<const double> x) {
    return map_objective(priors, median, observations, dose_mg, to_params(x));
  };

  if (observations.empty() || free_axes.empty()) {
    result.params = median;
    result.objective = map_objective(priors, median, observations, dose_mg, median);
    result.converged = true;
    result.evaluations = 1;
    return result;
  }

  std::vector<double> base(free_axes.size());
  std::vector<double> steps(free_axes.size());
  for (std::size_t i = 0; i < free_axes.size(); ++i) {
    base[i] = log_median[free_axes[i]];
    steps[i] = std::max(0.1, omega[free_axes[i]]);
  }
  std::vector<std::vector<double>> starts = {base};
  for (std::size_t i = 0; i < free_axes.size(); ++i) {
    for (const double sign : {1.0, -1.0}) {
      auto s = base;
      s[i] += sign * omega[free_axes[i]];
      starts.push_back(std::move(s));
    }
  }

  const double prior_only = objective(base);
  SimplexResult best;
  best.value = std::numeric_limits<double>::infinity();
  bool any_converged = false;
  int evaluations = 0;
  for (const auto& s : starts) {
    auto r = nelder_mead(objective, s, steps, options);
    evaluations += r.evaluations;
    any_converged = any_converged || r.converged;
    if (r.value < best.value) best = std::move(r);
  }
  if (!std::isfinite(best.value) || (!any_converged && !(best.value < prior_only))) {
    throw Error(ErrorCode::kFitFailed, "MAP fit did not converge");
  }
  result.params = to_params(best.x);
  result.objective = best.value;
  result.converged = any_converged;
  result.evaluations = evaluations;
  return result;
}

/// Steady-state identity AUC = dose / CL, µg·h/L.
inline double predict_auc_map(const PkParameters& params, double dose_mg) {
  return steady_state_auc(params, dose_mg);
}

inline double predict_conc_map(const PkParameters& params, double dose_mg, double t) {
  return steady_state_concentration(params, dose_mg, t);
}

}  // namespace tacro
