#pragma once

// Exposure-prediction metrics, patient-grouped cross-validation, grid search
// and prospective evaluation.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <map>
#include <numeric>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include <nlohmann/json.hpp>

#include "tacro/error.hpp"
#include "tacro/feature_builder.hpp"
#include "tacro/gbt.hpp"
#include "tacro/map_poppk.hpp"
#include "tacro/parallel.hpp"
#include "tacro/random.hpp"

namespace tacro {

/// RMSE divided by the mean target.
inline double relative_rmse(std::span<const double> predictions, std::span<const double> targets) {
  if (predictions.size() != targets.size() || targets.empty()) {
    throw Error(ErrorCode::kEmptyData, "relative_rmse needs equal non-empty inputs");
  }
  double sse = 0.0, sum = 0.0;
  for (std::size_t i = 0; i < targets.size(); ++i) {
    sse += (predictions[i] - targets[i]) * (predictions[i] - targets[i]);
    sum += targets[i];
  }
  const double n = static_cast<double>(targets.size());
  const double mean = sum / n;
  if (!(mean > 0.0)) throw Error(ErrorCode::kConfiguration, "mean target must be positive");
  return std::sqrt(sse / n) / mean;
}

inline double prediction_error_pct(double prediction, double target) {
  if (target == 0.0) throw Error(ErrorCode::kConfiguration, "target must be non-zero");
  return 100.0 * (prediction - target) / target;
}

/// Percentage of events whose |PE| exceeds `threshold_pct`.
inline double pe_exceedance(std::span<const double> predictions, std::span<const double> targets,
                            double threshold_pct) {
  if (predictions.size() != targets.size() || targets.empty()) {
    throw Error(ErrorCode::kEmptyData, "pe_exceedance needs equal non-empty inputs");
  }
  std::size_t over = 0;
  for (std::size_t i = 0; i < targets.size(); ++i) {
    if (!(targets[i] > 0.0)) throw Error(ErrorCode::kConfiguration, "targets must be positive");
    if (std::abs(prediction_error_pct(predictions[i], targets[i])) > threshold_pct) ++over;
  }
  return 100.0 * static_cast<double>(over) / static_cast<double>(targets.size());
}

inline constexpr double kClinicalPeThresholdPct = 15.0;
inline constexpr double kClinicalMaxExceedancePct = 15.0;

struct EventPrediction {
  std::string patient_id;
  int visit = 1;
  double target = 0.0;
  double prediction = 0.0;
  double pe = 0.0;  // percent
};

struct EvalReport {
  std::string model;
  double relative_rmse = 0.0;
  double pct_abs_pe_gt_10 = 0.0;
  double pct_abs_pe_gt_15 = 0.0;
  bool clinically_applicable = false;
  double baseline_relative_rmse = 0.0;  // mean-predicting model on the same folds
  std::vector<EventPrediction> per_event;
};

inline EvalReport make_report(std::string model, const Dataset& data, std::span<const double> predictions,
                              std::span<const double> baseline_predictions) {
  EvalReport r;
  r.model = std::move(model);
  r.relative_rmse = relative_rmse(predictions, data.targets);
  r.pct_abs_pe_gt_10 = pe_exceedance(predictions, data.targets, 10.0);
  r.pct_abs_pe_gt_15 = pe_exceedance(predictions, data.targets, kClinicalPeThresholdPct);
  r.clinically_applicable = r.pct_abs_pe_gt_15 <= kClinicalMaxExceedancePct;
  r.baseline_relative_rmse = relative_rmse(baseline_predictions, data.targets);
  for (std::size_t i = 0; i < data.size(); ++i) {
    r.per_event.push_back({data.groups[i], data.visits[i], data.targets[i], predictions[i],
                           prediction_error_pct(predictions[i], data.targets[i])});
  }
  return r;
}

inline void to_json(nlohmann::json& j, const EvalReport& r) {
  nlohmann::json events = nlohmann::json::array();
  for (const auto& e : r.per_event) {
    events.push_back({{"patient_id", e.patient_id},
                      {"visit", e.visit},
                      {"target", e.target},
                      {"prediction", e.prediction},
                      {"pe", e.pe}});
  }
  j = nlohmann::json{{"model", r.model},
                     {"relative_rmse", r.relative_rmse},
                     {"pct_abs_pe_gt_10", r.pct_abs_pe_gt_10},
                     {"pct_abs_pe_gt_15", r.pct_abs_pe_gt_15},
                     {"clinically_applicable", r.clinically_applicable},
                     {"baseline_relative_rmse", r.baseline_relative_rmse},
                     {"n_events", r.per_event.size()},
                     {"per_event", std::move(events)}};
}

/// One aligned line per report.
inline std::string format_report_table(std::span<const EvalReport> reports) {
  std::ostringstream out;
  char line[256];
  std::snprintf(line, sizeof line, "%-22s %8s %10s %10s %8s %10s %8s\n", "model", "events", "rel_rmse_%",
                "|PE|>10_%", "|PE|>15_%", "dummy_%", "clinical");
  out << line;
  for (const auto& r : reports) {
    std::snprintf(line, sizeof line, "%-22s %8zu %10.2f %10.2f %8.2f %10.2f %8s\n", r.model.c_str(),
                  r.per_event.size(), 100.0 * r.relative_rmse, r.pct_abs_pe_gt_10, r.pct_abs_pe_gt_15,
                  100.0 * r.baseline_relative_rmse, r.clinically_applicable ? "yes" : "no");
    out << line;
  }
  return out.str();
}

struct Fold {
  std::vector<std::size_t> train;
  std::vector<std::size_t> validation;
};

/// Throws kLeakage when a patient appears on both sides of a fold.
inline void check_no_leakage(std::span<const std::string> groups, const Fold& fold) {
  std::set<std::string> train_ids;
  for (const auto i : fold.train) train_ids.insert(groups[i]);
  for (const auto i : fold.validation) {
    if (train_ids.contains(groups[i])) throw Error(ErrorCode::kLeakage, "patient " + groups[i] + " is in both sets");
  }
}

inline std::vector<std::string> distinct_groups(std::span<const std::string> groups) {
  std::set<std::string> s(groups.begin(), groups.end());
  return {s.begin(), s.end()};
}

/// Patients are shuffled with `seed` and dealt round-robin into k folds, so
/// fold sizes (in patients) differ by at most one.
inline std::vector<Fold> group_kfold_split(std::span<const std::string> groups, std::size_t k, std::uint64_t seed) {
  auto patients = distinct_groups(groups);
  if (k < 2 && patients.size() > 1) throw Error(ErrorCode::kConfiguration, "k must be >= 2");
  if (k > patients.size()) throw Error(ErrorCode::kConfiguration, "k exceeds the number of patients");
  Rng rng(derive_seed(seed, "folds"));
  std::shuffle(patients.begin(), patients.end(), rng);
  std::map<std::string, std::size_t> fold_of;
  for (std::size_t i = 0; i < patients.size(); ++i) fold_of[patients[i]] = i % k;
  std::vector<Fold> folds(k);
  for (std::size_t row = 0; row < groups.size(); ++row) {
    const auto f = fold_of.at(groups[row]);
    for (std::size_t j = 0; j < k; ++j) {
      (j == f ? folds[j].validation : folds[j].train).push_back(row);
    }
  }
  for (const auto& fold : folds) check_no_leakage(groups, fold);
  return folds;
}

/// One fold per patient (sorted by id).
inline std::vector<Fold> leave_one_patient_out(std::span<const std::string> groups) {
  const auto patients = distinct_groups(groups);
  std::vector<Fold> folds;
  for (const auto& p : patients) {
    Fold fold;
    for (std::size_t row = 0; row < groups.size(); ++row) {
      (groups[row] == p ? fold.validation : fold.train).push_back(row);
    }
    check_no_leakage(groups, fold);
    folds.push_back(std::move(fold));
  }
  return folds;
}

struct CvOptions {
  unsigned threads = 1;
};

/// Held-out predictions of the GBT model and the mean baseline for each row.
struct FoldPredictions {
  std::vector<double> model;
  std::vector<double> baseline;
};

inline FoldPredictions cross_validate(const Dataset& data, std::span<const Fold> folds, const GbtParams& params,
                                      const CvOptions& options = {}) {
  FoldPredictions out{std::vector<double>(data.size(), 0.0), std::vector<double>(data.size(), 0.0)};
  parallel_for(folds.size(), options.threads, [&](std::size_t f) {
    const auto& fold = folds[f];
    if (fold.validation.empty()) throw Error(ErrorCode::kEmptyData, "fold without validation events");
    if (fold.train.empty()) throw Error(ErrorCode::kEmptyData, "fold without training events");
    const Dataset train = data.subset(fold.train);
    const auto model = train_gbt(train.rows, train.targets, params, data.schema.id);
    const auto dummy = dummy_predict(train.targets);
    for (const auto i : fold.validation) {
      out.model[i] = model.predict(data.rows[i]);
      out.baseline[i] = dummy.predict(data.rows[i]);
    }
  });
  return out;
}

/// Leave-one-patient-out estimate over every row of `data`.
inline EvalReport lopo_cv(const Dataset& data, const GbtParams& params, const CvOptions& options = {},
                          std::string model_name = {}) {
  if (data.size() == 0) throw Error(ErrorCode::kEmptyData, "no events");
  const auto folds = leave_one_patient_out(data.groups);
  if (folds.size() < 2) throw Error(ErrorCode::kEmptyData, "LOPO needs at least two patients");
  const auto preds = cross_validate(data, folds, params, options);
  return make_report(model_name.empty() ? data.schema.id : std::move(model_name), data, preds.model, preds.baseline);
}

/// η ∈ {0.05, 0.1, 0.3} × depth ∈ {2, 3, 4} × rounds ∈ {100, 300, 500} ×
/// min_child_weight ∈ {1, 5} × λ ∈ {1, 10} × subsample ∈ {0.8, 1.0}.
inline std::vector<GbtParams> default_grid(std::uint64_t seed = 0) {
  std::vector<GbtParams> grid;
  for (const double eta : {0.05, 0.1, 0.3}) {
    for (const int depth : {2, 3, 4}) {
      for (const int rounds : {100, 300, 500}) {
        for (const double mcw : {1.0, 5.0}) {
          for (const double lambda : {1.0, 10.0}) {
            for (const double sub : {0.8, 1.0}) {
              GbtParams p;
              p.learning_rate = eta;
              p.max_depth = depth;
              p.n_rounds = rounds;
              p.min_child_weight = mcw;
              p.lambda = lambda;
              p.subsample = sub;
              p.seed = seed;
              grid.push_back(p);
            }
          }
        }
      }
    }
  }
  return grid;
}

struct GridRow {
  GbtParams params;
  double mean_relative_rmse = 0.0;
  std::vector<double> fold_relative_rmse;
};

struct GridSearchResult {
  GbtParams best;
  double best_score = 0.0;
  std::vector<GridRow> table;
};

inline void to_json(nlohmann::json& j, const GridSearchResult& r) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& row : r.table) {
    rows.push_back({{"params", row.params},
                    {"mean_relative_rmse", row.mean_relative_rmse},
                    {"fold_relative_rmse", row.fold_relative_rmse}});
  }
  j = nlohmann::json{{"best", r.best}, {"best_score", r.best_score}, {"table", std::move(rows)}};
}

/// Grouped k-fold search. The winner has the lowest mean validation relative
/// RMSE; ties go to fewer rounds, then shallower trees, then lower learning rate.
inline GridSearchResult grid_search(const Dataset& data, std::span<const GbtParams> grid, std::size_t k,
                                    std::uint64_t seed, const CvOptions& options = {}) {
  if (grid.empty()) throw Error(ErrorCode::kConfiguration, "empty hyperparameter grid");
  const auto folds = group_kfold_split(data.groups, k, seed);
  std::vector<Dataset> train_sets, validation_sets;
  for (const auto& f : folds) {
    train_sets.push_back(data.subset(f.train));
    validation_sets.push_back(data.subset(f.validation));
  }
  const std::size_t jobs = grid.size() * folds.size();
  std::vector<double> scores(jobs);
  parallel_for(jobs, options.threads, [&](std::size_t job) {
    const auto& params = grid[job / folds.size()];
    const auto f = job % folds.size();
    const auto model = train_gbt(train_sets[f].rows, train_sets[f].targets, params, data.schema.id);
    std::vector<double> preds;
    preds.reserve(validation_sets[f].size());
    for (const auto& row : validation_sets[f].rows) preds.push_back(model.predict(row));
    scores[job] = relative_rmse(preds, validation_sets[f].targets);
  });

  GridSearchResult result;
  std::size_t best = 0;
  for (std::size_t g = 0; g < grid.size(); ++g) {
    GridRow row{grid[g], 0.0, {}};
    for (std::size_t f = 0; f < folds.size(); ++f) row.fold_relative_rmse.push_back(scores[g * folds.size() + f]);
    row.mean_relative_rmse = std::accumulate(row.fold_relative_rmse.begin(), row.fold_relative_rmse.end(), 0.0) /
                             static_cast<double>(folds.size());
    result.table.push_back(std::move(row));
  }
  const auto key = [&](std::size_t g) {
    const auto& r = result.table[g];
    return std::make_tuple(r.mean_relative_rmse, r.params.n_rounds, r.params.max_depth, r.params.learning_rate);
  };
  for (std::size_t g = 1; g < grid.size(); ++g) {
    if (key(g) < key(best)) best = g;
  }
  result.best = result.table[best].params;
  result.best_score = result.table[best].mean_relative_rmse;
  return result;
}

struct ProspectiveResult {
  GridSearchResult search;
  GbtModel model;
  EvalReport report;
};

/// Tune on dev with grouped k-fold, refit on all dev events, score test once.
inline ProspectiveResult prospective_run(const Dataset& dev, const Dataset& test, std::span<const GbtParams> grid,
                                         std::size_t k, std::uint64_t seed, const CvOptions& options = {},
                                         std::string model_name = {}) {
  if (test.size() == 0) throw Error(ErrorCode::kEmptyData, "test set is empty");
  if (dev.size() == 0) throw Error(ErrorCode::kEmptyData, "development set is empty");
  if (dev.schema.id != test.schema.id) throw Error(ErrorCode::kSchema, "dev and test schemas differ");
  const std::set<std::string> dev_ids(dev.groups.begin(), dev.groups.end());
  for (const auto& id : test.groups) {
    if (dev_ids.contains(id)) throw Error(ErrorCode::kLeakage, "patient " + id + " is in both dev and test");
  }
  ProspectiveResult out;
  out.search = grid_search(dev, grid, k, seed, options);
  out.model = train_gbt(dev.rows, dev.targets, out.search.best, dev.schema.id);
  const auto dummy = dummy_predict(dev.targets);
  std::vector<double> preds, baseline;
  for (const auto& row : test.rows) {
    preds.push_back(out.model.predict(row));
    baseline.push_back(dummy.predict(row));
  }
  out.report = make_report(model_name.empty() ? dev.schema.id : std::move(model_name), test, preds, baseline);
  return out;
}

/// Per-row MAP fit of the population-PK comparator on the same observations.
struct ComparatorFit {
  std::string patient_id;
  int visit = 1;
  MapFitResult fit;
  double auc = 0.0;
};

inline std::vector<ComparatorFit> fit_comparator(const Dataset& data, const PopulationPriors& priors,
                                                 const CvOptions& options = {}) {
  if (data.comparator.size() != data.size()) {
    throw Error(ErrorCode::kSchema, "dataset carries no comparator inputs");
  }
  std::vector<ComparatorFit> fits(data.size());
  parallel_for(data.size(), options.threads, [&](std::size_t i) {
    const auto& in = data.comparator[i];
    auto& out = fits[i];
    out.patient_id = data.groups[i];
    out.visit = data.visits[i];
    try {
      out.fit = map_fit(priors, in.observations, in.dose_mg, in.covariates);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::kFitFailed) throw;
      out.fit.params = prior_medians(priors, in.covariates);
      out.fit.converged = false;
    }
    out.auc = predict_auc_map(out.fit.params, in.dose_mg);
  });
  return fits;
}

/// Scores the comparator against `data.targets`; the baseline column uses
/// `baseline_mean` (the training-set mean of the matching ML run).
inline EvalReport evaluate_comparator(const Dataset& data, std::span<const ComparatorFit> fits, double baseline_mean,
                                      std::string model_name = "map_poppk") {
  std::vector<double> preds, baseline(data.size(), baseline_mean);
  for (const auto& f : fits) preds.push_back(f.auc);
  return make_report(std::move(model_name), data, preds, baseline);
}

}  // namespace tacro
