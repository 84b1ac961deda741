// End-to-end acceptance run. Prints one PASS/FAIL line per criterion and
// exits non-zero if any criterion fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "oracles.hpp"
#include "random_trees.hpp"
#include "tacro/experiments.hpp"
#include "tacro/pk_core.hpp"

namespace {

using namespace tacro;

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string format(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

Outcome quadrature_exactness() {
  std::mt19937_64 rng(101);
  std::uniform_real_distribution<double> amp(0.1, 100), rate(0.005, 2.0), step(0.02, 3.0);
  double worst = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const double a = amp(rng), k = rate(rng);
    std::vector<ConcentrationPoint> pts;
    double t = std::uniform_real_distribution<double>(0, 1)(rng);
    while (t <= 12.0 || pts.size() < 2) {
      pts.push_back({t, a * std::exp(-k * t), true});
      t += step(rng);
    }
    const double exact = a * (std::exp(-k * pts.front().time) - std::exp(-k * pts.back().time)) / k;
    worst = std::max(worst, std::abs(auc_log_linear_trapezoid(pts) - exact) / exact);
  }
  return {worst < 1e-9, format("worst relative error %.3g over 100 cases", worst)};
}

Outcome generator_oracle(std::uint64_t seed) {
  auto config = CohortConfig::dev();
  config.noise_on = false;
  config.sampling.min_samples = config.sampling.max_samples = 16;
  const auto cohort = generate_cohort(config, derive_seed(seed, "cohort_dev"));
  int within = 0;
  double worst = 0;
  for (const auto& s : cohort.profiles) {
    const double err = std::abs(reference_auc(s.profile) - s.true_auc) / s.true_auc;
    worst = std::max(worst, err);
    if (err <= 0.05) ++within;
  }
  const double frac = static_cast<double>(within) / static_cast<double>(cohort.profiles.size());
  return {frac >= 0.95, format("%d/%zu profiles within 5%% (worst %.2f%%)", within, cohort.profiles.size(),
                               100 * worst)};
}

Outcome split_oracle() {
  std::mt19937_64 rng(303);
  std::uniform_int_distribution<int> rows(2, 12), cols(1, 3), level(0, 6);
  std::uniform_real_distribution<double> target(-3, 3);
  int mismatches = 0;
  double worst_leaf = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const int n = rows(rng), d = cols(rng);
    std::vector<std::vector<double>> x(n, std::vector<double>(d));
    std::vector<double> y(n);
    for (auto& row : x) {
      for (auto& v : row) v = level(rng) * 0.25;
    }
    for (auto& v : y) v = target(rng);
    GbtParams p;
    p.n_rounds = 1;
    p.max_depth = 1;
    p.learning_rate = 1.0;
    p.lambda = 1.0;
    const auto model = train_gbt(x, y, p);
    double base = 0;
    for (const double v : y) base += v;
    base /= n;
    std::vector<double> grad(n);
    for (int i = 0; i < n; ++i) grad[i] = base - y[i];
    const auto want = oracle::enumerate_root_split(x, grad, p.lambda, p.gamma, p.min_child_weight);
    const auto& nodes = model.trees.at(0).nodes;
    const auto& root = nodes.at(0);
    if (root.is_leaf() != !want.found) {
      ++mismatches;
      continue;
    }
    if (!want.found) continue;
    if (root.feature != want.feature || root.threshold != want.threshold) ++mismatches;
    worst_leaf = std::max({worst_leaf, std::abs(nodes[root.left].weight - -want.g_left / (want.h_left + p.lambda)),
                           std::abs(nodes[root.right].weight - -want.g_right / (want.h_right + p.lambda))});
  }
  return {mismatches == 0 && worst_leaf <= 1e-12,
          format("%d split mismatches in 200 datasets, worst leaf error %.3g", mismatches, worst_leaf)};
}

Outcome shap_oracle(double pipeline_local_error) {
  std::mt19937_64 rng(404);
  std::uniform_int_distribution<int> dims(1, 6), trees(1, 3), depth(1, 4);
  std::uniform_real_distribution<double> u(0, 1);
  double worst = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const auto d = static_cast<std::size_t>(dims(rng));
    const auto model = testing_util::random_model(rng, d, trees(rng), depth(rng));
    std::vector<std::vector<double>> bg(1 + trial % 4, std::vector<double>(d));
    for (auto& row : bg) {
      for (auto& v : row) v = u(rng);
    }
    std::vector<double> x(d);
    for (auto& v : x) v = u(rng);
    const auto fast = shap_values(model, x, bg);
    const auto slow = brute_force_shap(model, x, bg);
    for (std::size_t f = 0; f < d; ++f) worst = std::max(worst, std::abs(fast.phi[f] - slow.phi[f]));
  }
  return {worst < 1e-9 && pipeline_local_error < 1e-9,
          format("max |fast - enumeration| %.3g; max local-accuracy error in run %.3g", worst, pipeline_local_error)};
}

Outcome baseline_dominance(const ExperimentResult& r) {
  int failing = 0;
  std::string worst;
  double worst_ratio = 0;
  for (const auto& v : r.variants) {
    const double ratio = v.lopo.relative_rmse / v.lopo.baseline_relative_rmse;
    if (!(v.lopo.relative_rmse < v.lopo.baseline_relative_rmse)) ++failing;
    if (ratio > worst_ratio) {
      worst_ratio = ratio;
      worst = std::string(feature_set_id(v.set));
    }
  }
  const double dummy = r.variants.front().lopo.baseline_relative_rmse;
  return {failing == 0, format("%zu variants, %d at or above dummy (%.1f%%); closest: %s at %.0f%% of dummy",
                               r.variants.size(), failing, 100 * dummy, worst.c_str(), 100 * worst_ratio)};
}

const VariantResult& variant(const ExperimentResult& r, FeatureSet set) {
  for (const auto& v : r.variants) {
    if (v.set == set) return v;
  }
  throw Error(ErrorCode::kConfiguration, "variant missing from run");
}

Outcome full_information(const ExperimentConfig& base, const ExperimentResult& r) {
  auto dev_config = base.dev;
  dev_config.noise_on = false;
  const auto dev = generate_cohort(dev_config, derive_seed(base.seed, "cohort_dev"));
  const auto data = build_dataset(cohort_samples(dev, true), FeatureSet::kFull16);
  GbtParams params = base.lopo_params;
  params.seed = derive_seed(base.seed, "subsample");
  const auto lopo = lopo_cv(data, params, CvOptions{base.threads});
  const auto& prosp = variant(r, FeatureSet::kFull16).prospective.report;
  return {lopo.relative_rmse < 0.10 && prosp.clinically_applicable,
          format("noiseless LOPO %.2f%%; prospective %.2f%% with %.1f%% of %zu events |PE|>15%%",
                 100 * lopo.relative_rmse, 100 * prosp.relative_rmse, prosp.pct_abs_pe_gt_15,
                 prosp.per_event.size())};
}

Outcome flexible_ordering(const ExperimentResult& r) {
  const double poppk = variant(r, FeatureSet::kFlexEstPopPk).prospective.report.relative_rmse;
  const double delta = variant(r, FeatureSet::kFlexDeltaOnly).prospective.report.relative_rmse;
  return {poppk <= delta + 0.01, format("popPK estimate %.2f%% vs raw delta %.2f%%", 100 * poppk, 100 * delta)};
}

bool is_time_slot(const std::string& name) { return name.rfind("c_", 0) == 0 || name.rfind("dt_", 0) == 0; }

Outcome ranking_shape(const ExperimentResult& r) {
  const auto& full = variant(r, FeatureSet::kFull16).ranking;
  bool top5 = full.size() >= 5;
  std::string names;
  for (std::size_t i = 0; i < 5 && i < full.size(); ++i) {
    top5 = top5 && is_time_slot(full[i].name);
    names += (i ? "," : "") + full[i].name;
  }
  int c3_rank = 0;
  for (const auto& f : variant(r, FeatureSet::kFixed3Demographics).ranking) {
    if (f.name == "c_3h") c3_rank = f.rank;
  }
  return {top5 && c3_rank >= 1 && c3_rank <= 2,
          format("full16 top-5 [%s]; fixed3_demo c_3h rank %d", names.c_str(), c3_rank)};
}

Outcome map_round_trip() {
  std::mt19937_64 rng(909);
  std::normal_distribution<double> eta(0, 0.3);
  double worst_cl = 0, worst_quad = 0;
  for (int trial = 0; trial < 25; ++trial) {
    const PkParameters truth{25 * std::exp(eta(rng)), 350 * std::exp(eta(rng)), 1.5 * std::exp(eta(rng))};
    if (std::abs(truth.ka - truth.ke()) < 1e-3) continue;
    const double dose = 1 + trial % 8;
    std::vector<Observation> obs;
    for (const double t : {0.0, 1.0, 3.0}) obs.push_back({t, steady_state_concentration(truth, dose, t)});
    PopulationPriors priors;
    priors.theta = truth;
    const auto fit = map_fit(priors, obs, dose, MapCovariates{});
    worst_cl = std::max(worst_cl, std::abs(fit.params.cl - truth.cl) / truth.cl);
    const double quad =
        oracle::integrate([&](double t) { return predict_conc_map(fit.params, dose, t); }, 0.0, kDoseIntervalHours);
    worst_quad = std::max(worst_quad, std::abs(predict_auc_map(fit.params, dose) - quad) / quad);
  }
  return {worst_cl < 0.01 && worst_quad < 1e-6,
          format("worst CL error %.3g%%; worst AUC vs quadrature %.3g", 100 * worst_cl, worst_quad)};
}

std::string model_bytes(const ExperimentResult& r) {
  std::string out;
  for (const auto& v : r.variants) out += nlohmann::json(v.prospective.model).dump() + "\n";
  return out;
}

Outcome reproducibility(const ExperimentConfig& config, const ExperimentResult& first) {
  auto again_config = config;
  again_config.threads = config.threads + 1;  // thread count must not matter either
  const auto second = run_experiment(again_config);
  const bool models = model_bytes(first) == model_bytes(second);
  const bool reports = report_json(first).dump(2) == report_json(second).dump(2);
  return {models && reports, format("model files %s, reports %s (threads %u vs %u)",
                                    models ? "identical" : "DIFFER", reports ? "identical" : "DIFFER",
                                    config.threads, again_config.threads)};
}

Outcome counting_invariants(const ExperimentConfig& config) {
  const auto dev = generate_cohort(config.dev, derive_seed(config.seed, "cohort_dev"));
  const auto first = build_dataset(cohort_samples(dev, true), FeatureSet::kFlexDeltaOnly);
  const auto all = build_dataset(cohort_samples(dev, false), FeatureSet::kFlexDeltaOnly);
  const auto profiles_first = cohort_samples(dev, true).size();
  const auto profiles_all = cohort_samples(dev, false).size();
  const auto slots = schema_for(FeatureSet::kFull16).size();
  return {profiles_first == 68 && first.size() == 340 && profiles_all == 93 && all.size() == 465 && slots == 43,
          format("%zu -> %zu events, %zu -> %zu events, %zu full-schema slots", profiles_first, first.size(),
                 profiles_all, all.size(), slots)};
}

}  // namespace

int main() {
  const auto start = std::chrono::steady_clock::now();
  int failures = 0;
  const auto report = [&](int id, const char* name, const Outcome& o) {
    std::printf("[%s] %2d %-26s %s\n", o.pass ? "PASS" : "FAIL", id, name, o.detail.c_str());
    std::fflush(stdout);
    if (!o.pass) ++failures;
  };
  const auto guarded = [&](int id, const char* name, auto&& fn) {
    try {
      report(id, name, fn());
    } catch (const std::exception& e) {
      report(id, name, Outcome{false, std::string("exception: ") + e.what()});
    }
  };

  const ExperimentConfig config;
  std::optional<ExperimentResult> run;
  std::string run_error;
  try {
    run = run_experiment(config);
  } catch (const std::exception& e) {
    run_error = e.what();
  }
  // Criteria that read the pipeline run fail outright when it aborted.
  const auto with_run = [&](auto&& fn) {
    return [&, fn] { return run ? fn(*run) : Outcome{false, "pipeline run aborted: " + run_error}; };
  };

  guarded(1, "quadrature exactness", [] { return quadrature_exactness(); });
  guarded(2, "generator oracle", [&] { return generator_oracle(config.seed); });
  guarded(3, "gbt split oracle", [] { return split_oracle(); });
  guarded(4, "shap oracle", with_run([](const ExperimentResult& r) {
            double local_error = 0;
            for (const auto& v : r.variants) local_error = std::max(local_error, v.max_local_accuracy_error);
            return shap_oracle(local_error);
          }));
  guarded(5, "baseline dominance", with_run([](const ExperimentResult& r) { return baseline_dominance(r); }));
  guarded(6, "full-information quality",
          with_run([&](const ExperimentResult& r) { return full_information(config, r); }));
  guarded(7, "flexible-time ordering", with_run([](const ExperimentResult& r) { return flexible_ordering(r); }));
  guarded(8, "shap ranking shape", with_run([](const ExperimentResult& r) { return ranking_shape(r); }));
  guarded(9, "map round-trip", [] { return map_round_trip(); });
  guarded(10, "reproducibility", with_run([&](const ExperimentResult& r) { return reproducibility(config, r); }));
  guarded(11, "counting invariants", [&] { return counting_invariants(config); });

  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  std::printf("%s: %d failing criteria, %.0f s\n", failures ? "FAILED" : "ALL PASSED", failures, secs);
  return failures ? 1 : 0;
}
