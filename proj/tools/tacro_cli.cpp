// tacro: command-line front end for the exposure-prediction workflow.
//
//   simulate -> preprocess -> features -> tune / train -> cv / evaluate
//   -> predict -> explain -> report
//
// Exit status: 0 on success, 1 on validation errors, 2 on I/O failures. Errors
// print a single line "error: <CODE>: <message>" to stderr.

#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "tacro/eval_harness.hpp"
#include "tacro/experiments.hpp"
#include "tacro/feature_builder.hpp"
#include "tacro/gbt.hpp"
#include "tacro/io.hpp"
#include "tacro/synth_cohort.hpp"
#include "tacro/tree_shap.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace tacro;

namespace {

constexpr int kArtifactFormatVersion = 1;

// Everything a subcommand may read from the config file. Flags override it.
struct RunConfig {
  std::uint64_t seed = 7;
  std::string cohort = "dev";
  bool noise_on = true;
  std::string feature_set = "full16";
  bool first_visit_only = false;
  GbtParams params = ExperimentConfig{}.lopo_params;
  std::string grid_preset = "default";
  std::vector<GbtParams> grid;  // explicit grid; overrides the preset
  std::size_t k_folds = 5;
  PopulationPriors priors = PopulationPriors::from(PopulationParams{});
  std::size_t shap_background = 100;
  std::vector<std::string> feature_sets;  // report only; empty = all
  unsigned threads = 1;
  // Default file locations; each is overridden by the matching flag.
  std::string profiles, patients, features, model, reports;
};

std::vector<GbtParams> small_grid() {
  std::vector<GbtParams> grid;
  for (const double eta : {0.1, 0.3}) {
    for (const int depth : {2, 3}) {
      GbtParams p;
      p.learning_rate = eta;
      p.max_depth = depth;
      p.n_rounds = 100;
      grid.push_back(p);
    }
  }
  return grid;
}

std::vector<GbtParams> resolve_grid(const RunConfig& c) {
  if (!c.grid.empty()) return c.grid;
  if (c.grid_preset == "default") return default_grid();
  if (c.grid_preset == "small") return small_grid();
  throw Error(ErrorCode::kConfiguration, "grid preset must be default|small, got '" + c.grid_preset + "'");
}

// mode + approach -> feature set id.
std::string feature_set_from_mode(const json& j) {
  const auto mode = j.at("mode").get<std::string>();
  const json approach = j.value("approach", json::object());
  if (approach.contains("estimate_c3") && mode != "flexible") {
    throw Error(ErrorCode::kConfiguration, "estimate_c3 requires mode 'flexible'");
  }
  if (mode == "full16") return "full16";
  if (mode == "fixed3") return j.value("demographics", false) ? "fixed3_demo" : "fixed3";
  if (mode != "flexible") throw Error(ErrorCode::kConfiguration, "mode must be fixed3|full16|flexible");
  if (approach.contains("estimate_c3")) {
    const auto s = approach.at("estimate_c3").get<std::string>();
    if (s == "linear") return "flex_est_linear";
    if (s == "reverse_linear") return "flex_est_reverse";
    if (s == "loglinear") return "flex_est_loglinear";
    if (s == "poppk") return "flex_est_poppk";
    throw Error(ErrorCode::kConfiguration, "estimate_c3 must be linear|reverse_linear|loglinear|poppk");
  }
  const auto v = approach.value("raw_time_features", std::string("delta"));
  if (v == "delta") return "flex_delta";
  if (v == "exact") return "flex_exact";
  if (v == "combined") return "flex_combined";
  if (v == "combined_demo") return "flex_combined_demo";
  throw Error(ErrorCode::kConfiguration, "raw_time_features must be delta|exact|combined|combined_demo");
}

RunConfig load_config(const std::string& path) {
  RunConfig c;
  if (path.empty()) return c;
  json j;
  try {
    j = json::parse(io::read_text(path));
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kSchema, "config " + path + ": " + e.what());
  }
  try {
    c.seed = j.value("seed", c.seed);
    c.cohort = j.value("cohort", c.cohort);
    c.noise_on = j.value("noise_on", c.noise_on);
    if (j.contains("mode")) c.feature_set = feature_set_from_mode(j);
    c.feature_set = j.value("feature_set", c.feature_set);
    c.first_visit_only = j.value("first_visit_only", c.first_visit_only);
    if (j.contains("params")) {
      json merged = c.params;
      merged.update(j.at("params"));
      c.params = merged.get<GbtParams>();
    }
    if (j.contains("grid")) {
      if (j.at("grid").is_string()) {
        c.grid_preset = j.at("grid").get<std::string>();
      } else {
        c.grid = j.at("grid").get<std::vector<GbtParams>>();
      }
    }
    c.k_folds = j.value("k_folds", c.k_folds);
    if (j.contains("priors")) c.priors = j.at("priors").get<PopulationPriors>();
    c.shap_background = j.value("shap_background", c.shap_background);
    c.feature_sets = j.value("feature_sets", c.feature_sets);
    c.threads = j.value("threads", c.threads);
    const json paths = j.value("paths", json::object());
    c.profiles = paths.value("profiles", c.profiles);
    c.patients = paths.value("patients", c.patients);
    c.features = paths.value("features", c.features);
    c.model = paths.value("model", c.model);
    c.reports = paths.value("reports", c.reports);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kConfiguration, "config " + path + ": " + e.what());
  }
  return c;
}

// The fields that influence results; threads and paths are excluded.
json canonical(const RunConfig& c) {
  return {{"seed", c.seed},
          {"cohort", c.cohort},
          {"noise_on", c.noise_on},
          {"feature_set", c.feature_set},
          {"first_visit_only", c.first_visit_only},
          {"params", c.params},
          {"grid", resolve_grid(c)},
          {"k_folds", c.k_folds},
          {"priors", c.priors},
          {"shap_background", c.shap_background},
          {"feature_sets", c.feature_sets}};
}

json provenance(const RunConfig& c) {
  return {{"format_version", kArtifactFormatVersion}, {"seed", c.seed}, {"config_hash", config_hash(canonical(c))}};
}

void write_json(const fs::path& path, json body, const RunConfig& c) {
  body["provenance"] = provenance(c);
  io::write_text(path, body.dump(2) + "\n");
}

// CSV artifacts carry their provenance in a <file>.meta.json sidecar.
void write_csv(const fs::path& path, const std::string& text, const RunConfig& c, const std::string& command) {
  io::write_text(path, text);
  json meta = provenance(c);
  meta["artifact"] = path.filename().string();
  meta["command"] = command;
  io::write_text(path.string() + ".meta.json", meta.dump(2) + "\n");
}

GbtParams seeded(GbtParams p, const RunConfig& c) {
  p.seed = derive_seed(c.seed, "subsample");
  return p;
}

CohortConfig cohort_config(const RunConfig& c) {
  CohortConfig cc;
  if (c.cohort == "dev") {
    cc = CohortConfig::dev();
  } else if (c.cohort == "test") {
    cc = CohortConfig::test();
  } else {
    throw Error(ErrorCode::kConfiguration, "cohort must be dev|test");
  }
  cc.noise_on = c.noise_on;
  return cc;
}

struct Inputs {
  std::vector<ConcentrationProfile> profiles;
  std::vector<PatientRecord> patients;
};

Inputs read_inputs(const std::string& profiles_path, const std::string& patients_path) {
  Inputs in;
  in.profiles = io::parse_profiles(io::read_csv(profiles_path));
  if (!patients_path.empty()) in.patients = io::parse_patients(io::read_csv(patients_path));
  return in;
}

const PatientRecord& find_patient(const std::vector<PatientRecord>& patients, const std::string& id) {
  for (const auto& p : patients) {
    if (p.patient_id == id) return p;
  }
  throw Error(ErrorCode::kSchema, "no patient record for " + id);
}

std::vector<Sample> samples_of(const Inputs& in, bool first_visit_only) {
  std::vector<Sample> out;
  for (const auto& p : in.profiles) {
    if (first_visit_only && p.visit != 1) continue;
    out.push_back({p, &find_patient(in.patients, p.patient_id)});
  }
  return out;
}

struct ModelArtifact {
  GbtModel model;
  double train_target_mean = 0.0;
};

ModelArtifact read_model(const std::string& path) {
  json j;
  try {
    j = json::parse(io::read_text(path));
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kSchema, "model " + path + ": " + e.what());
  }
  ModelArtifact a;
  try {
    a.model = j.get<GbtModel>();
    a.train_target_mean = j.value("train_target_mean", a.model.base_score);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kSchema, "model " + path + ": " + e.what());
  }
  return a;
}

Dataset read_features_for(const std::string& path, const GbtModel* model = nullptr) {
  auto d = io::read_features(path);
  if (d.size() == 0) throw Error(ErrorCode::kEmptyData, "feature file " + path + " has no rows");
  if (model != nullptr && d.schema.names.size() != model->n_features) {
    throw Error(ErrorCode::kSchema, "feature file has " + std::to_string(d.schema.names.size()) +
                                        " columns, model expects " + std::to_string(model->n_features));
  }
  if (model != nullptr && d.schema.id != model->schema_id && model->schema_id != "custom") {
    throw Error(ErrorCode::kSchema, "feature schema '" + d.schema.id + "' does not match model schema '" +
                                        model->schema_id + "'");
  }
  return d;
}

GbtParams params_from_file(const std::string& path) {
  json j;
  try {
    j = json::parse(io::read_text(path));
    if (j.contains("search")) return j.at("search").at("best").get<GbtParams>();
    return j.get<GbtParams>();
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kSchema, "params " + path + ": " + e.what());
  }
}

// Features for one raw three-sample profile under the model's schema.
std::vector<double> features_from_three_samples(const ConcentrationProfile& raw, const PatientRecord& patient,
                                                FeatureSet set, const PopulationPriors& priors) {
  raw.validate();
  if (raw.points.size() != 3) throw Error(ErrorCode::kInvalidProfile, "expected exactly three samples");
  const auto& p = raw.points;
  if (nominal_slot(p[0].time) != kTroughSlot || nominal_slot(p[1].time) != kOneHourSlot) {
    throw Error(ErrorCode::kInvalidProfile, "samples must be the trough, 1 h and a later sample");
  }
  const double last_nominal = kNominalGrid[nominal_slot(p[2].time)];
  if (set == FeatureSet::kFull16) throw Error(ErrorCode::kConfiguration, "full16 needs a complete profile");
  if (!is_flexible(set)) {
    if (last_nominal != 3.0) throw Error(ErrorCode::kInvalidProfile, "fixed schemas need the 3 h sample");
    std::vector<double> v = {p[0].concentration, p[1].concentration, p[2].concentration};
    if (set == FeatureSet::kFixed3Demographics) {
      const auto demo = detail::demographic_values(patient);
      v.insert(v.end(), demo.begin(), demo.end());
      v.push_back(patient.txt_days);
    }
    return v;
  }
  bool candidate = false;
  for (const double t : kFlexibleLastTimes) candidate = candidate || t == last_nominal;
  if (!candidate) throw Error(ErrorCode::kInvalidProfile, "last sample must be near 2, 2.5, 3, 4 or 5 h");
  FlexibleEvent e{raw.patient_id, raw.visit, raw.dose_mg, last_nominal, p[0], p[1], p[2], 0.0};
  switch (set) {
    case FeatureSet::kFlexDeltaOnly: return approach_one_features(e, ApproachOneVariant::kDeltaOnly, patient).values;
    case FeatureSet::kFlexExactTimes: return approach_one_features(e, ApproachOneVariant::kExactTimes, patient).values;
    case FeatureSet::kFlexCombinedDemographics:
      return approach_one_features(e, ApproachOneVariant::kCombinedPlusDemographics, patient).values;
    case FeatureSet::kFlexCombined:
      return approach_one_features(e, ApproachOneVariant::kCombinedMinimal, patient).values;
    case FeatureSet::kFlexEstLinear: return approach_two_features(e, C3Strategy::kLinear, patient, priors).values;
    case FeatureSet::kFlexEstReverseLinear:
      return approach_two_features(e, C3Strategy::kReverseLinear, patient, priors).values;
    case FeatureSet::kFlexEstLogLinear:
      return approach_two_features(e, C3Strategy::kLogLinear, patient, priors).values;
    case FeatureSet::kFlexEstPopPk: return approach_two_features(e, C3Strategy::kPopPk, patient, priors).values;
    default: break;
  }
  throw Error(ErrorCode::kConfiguration, "unsupported feature set");
}

std::vector<double> parse_row(const std::string& text) {
  std::vector<double> v;
  for (const auto& cell : io::split_csv_line(text)) v.push_back(io::parse_double(cell));
  return v;
}

EvalReport predict_report(const std::string& name, const Dataset& d, const ModelArtifact& a) {
  std::vector<double> preds, base(d.size(), a.train_target_mean);
  for (const auto& row : d.rows) preds.push_back(a.model.predict(row));
  return make_report(name, d, preds, base);
}

void fill(std::string& flag, const std::string& from_config, const char* name) {
  if (flag.empty()) flag = from_config;
  if (flag.empty()) throw Error(ErrorCode::kConfiguration, std::string(name) + " is required (flag or config paths)");
}

int fail(const Error& e) {
  std::cerr << "error: " << e.code_name() << ": " << e.what() << "\n";
  return e.code() == ErrorCode::kIo ? 2 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Tacrolimus AUC prediction from sparse concentration samples"};
  app.require_subcommand(1);
  app.fallthrough();
  app.set_version_flag("--version", "tacro 1.0");

  std::string config_path;
  if (const char* env = std::getenv("TACRO_CONFIG")) config_path = env;
  std::optional<unsigned> threads;
  std::optional<std::uint64_t> seed;
  app.add_option("--config", config_path, "JSON run configuration (default: $TACRO_CONFIG)");
  app.add_option("--threads", threads, "Maximum worker threads (results do not depend on it)")
      ->check(CLI::Range(1u, 256u));
  app.add_option("--seed", seed, "Master seed for every random stream");

  // Options shared by several subcommands.
  std::string profiles, patients, features, model_path, out, params_path, background, row, feature_set_opt,
      cohort_opt, grid_opt;
  std::optional<std::size_t> k_folds, index;
  bool first_visit_only = false, noiseless = false;
  std::optional<int> n_rounds, max_depth;
  std::optional<double> learning_rate;

  auto* simulate = app.add_subcommand("simulate", "Generate a synthetic cohort (profiles, patients, truth CSVs)");
  simulate->add_option("--cohort", cohort_opt, "dev | test")->check(CLI::IsMember({"dev", "test"}));
  simulate->add_flag("--noiseless", noiseless, "Disable assay error");
  simulate->add_option("--out", out, "Output directory")->required();

  auto* preprocess = app.add_subcommand("preprocess", "Impute missing slots and compute reference AUCs");
  preprocess->add_option("--profiles", profiles, "Profile CSV");
  preprocess->add_option("--out", out, "Output directory")->required();

  auto* features_cmd = app.add_subcommand("features", "Build a feature matrix CSV");
  features_cmd->add_option("--profiles", profiles, "Profile CSV");
  features_cmd->add_option("--patients", patients, "Patient CSV");
  features_cmd->add_option("--feature-set", feature_set_opt, "Schema id (see 'schemas' in README)");
  features_cmd->add_flag("--first-visit-only", first_visit_only, "Keep only each patient's first dose interval");
  features_cmd->add_option("--out", out, "Output CSV")->required();

  const auto add_param_flags = [&](CLI::App* cmd) {
    cmd->add_option("--params", params_path, "GbtParams JSON or a 'tune' result");
    cmd->add_option("--n-rounds", n_rounds, "Boosting rounds");
    cmd->add_option("--max-depth", max_depth, "Maximum tree depth");
    cmd->add_option("--learning-rate", learning_rate, "Shrinkage");
  };

  auto* tune = app.add_subcommand("tune", "Grouped k-fold grid search");
  tune->add_option("--features", features, "Feature CSV");
  tune->add_option("--k", k_folds, "Number of folds");
  tune->add_option("--grid", grid_opt, "default | small")->check(CLI::IsMember({"default", "small"}));
  tune->add_option("--out", out, "Output JSON")->required();

  auto* train = app.add_subcommand("train", "Fit a model on a feature CSV");
  train->add_option("--features", features, "Feature CSV");
  add_param_flags(train);
  train->add_option("--out", out, "Model JSON")->required();

  auto* cv = app.add_subcommand("cv", "Leave-one-patient-out cross-validation");
  cv->add_option("--features", features, "Feature CSV");
  add_param_flags(cv);
  cv->add_option("--out", out, "Report JSON")->required();

  auto* evaluate = app.add_subcommand("evaluate", "Score a trained model on a feature CSV");
  evaluate->add_option("--model", model_path, "Model JSON");
  evaluate->add_option("--features", features, "Feature CSV");
  evaluate->add_option("--out", out, "Report JSON")->required();

  auto* predict = app.add_subcommand("predict", "Predict AUC for one event");
  predict->add_option("--model", model_path, "Model JSON");
  predict->add_option("--row", row, "Comma-separated feature values");
  predict->add_option("--features", features, "Feature CSV (with --index)");
  predict->add_option("--index", index, "Row of --features to predict");
  predict->add_option("--profiles", profiles, "Profile CSV holding one three-sample interval");
  predict->add_option("--patients", patients, "Patient CSV with the matching record");

  auto* explain = app.add_subcommand("explain", "SHAP attributions and feature ranking");
  explain->add_option("--model", model_path, "Model JSON");
  explain->add_option("--features", features, "Feature CSV with the events to explain");
  explain->add_option("--background", background, "Feature CSV for the background set (default: --features)");
  explain->add_option("--out", out, "Output directory")->required();

  auto* report = app.add_subcommand("report", "Full benchmark: every variant, dummy and MAP comparator");
  report->add_option("--grid", grid_opt, "default | small")->check(CLI::IsMember({"default", "small"}));
  report->add_option("--out", out, "Output directory (default: paths.reports)");

  auto* schemas = app.add_subcommand("schemas", "Print the feature schemas as JSON");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::string msg = e.what();
    std::replace(msg.begin(), msg.end(), '\n', ' ');
    std::cerr << "error: CONFIGURATION: " << msg << "\n";
    return 1;
  }

  try {
    RunConfig c = load_config(config_path);
    if (seed) c.seed = *seed;
    if (threads) c.threads = *threads;
    if (!cohort_opt.empty()) c.cohort = cohort_opt;
    if (noiseless) c.noise_on = false;
    if (!feature_set_opt.empty()) c.feature_set = feature_set_opt;
    if (first_visit_only) c.first_visit_only = true;
    if (k_folds) c.k_folds = *k_folds;
    if (!grid_opt.empty()) {
      c.grid_preset = grid_opt;
      c.grid.clear();
    }
    if (!params_path.empty()) c.params = params_from_file(params_path);
    if (n_rounds) c.params.n_rounds = *n_rounds;
    if (max_depth) c.params.max_depth = *max_depth;
    if (learning_rate) c.params.learning_rate = *learning_rate;
    const FeatureSet set = parse_feature_set(c.feature_set);
    c.params.validate();
    const CvOptions cv_options{c.threads};
    for (auto* cmd : {preprocess, features_cmd}) {
      if (*cmd) fill(profiles, c.profiles, "--profiles");
    }
    if (*features_cmd) fill(patients, c.patients, "--patients");
    for (auto* cmd : {tune, train, cv, evaluate, explain}) {
      if (*cmd) fill(features, c.features, "--features");
    }
    for (auto* cmd : {evaluate, predict, explain}) {
      if (*cmd) fill(model_path, c.model, "--model");
    }
    if (*report) fill(out, c.reports, "--out");

    if (*simulate) {
      const auto cohort = generate_cohort(cohort_config(c), derive_seed(c.seed, "cohort_" + c.cohort));
      std::vector<ConcentrationProfile> raw;
      for (const auto& s : cohort.profiles) raw.push_back(s.profile);
      const fs::path dir = out;
      write_csv(dir / "profiles.csv", io::profiles_csv(raw), c, "simulate");
      write_csv(dir / "patients.csv", io::patients_csv(cohort.patients), c, "simulate");
      write_csv(dir / "truth.csv", io::truth_csv(cohort), c, "simulate");
      std::cout << "wrote " << cohort.patients.size() << " patients, " << raw.size() << " profiles to " << out
                << "\n";
    } else if (*preprocess) {
      const auto in = read_inputs(profiles, "");
      std::vector<ConcentrationProfile> imputed;
      for (const auto& p : in.profiles) imputed.push_back(impute_missing_concentrations(p));
      const fs::path dir = out;
      write_csv(dir / "imputed.csv", io::profiles_csv(imputed), c, "preprocess");
      write_csv(dir / "reference_auc.csv", io::reference_auc_csv(in.profiles), c, "preprocess");
      std::cout << "imputed " << imputed.size() << " profiles\n";
    } else if (*features_cmd) {
      const auto in = read_inputs(profiles, patients);
      const auto samples = samples_of(in, c.first_visit_only);
      BuildOptions options{c.priors, [](const std::string& w) { std::cerr << "warning: " << w << "\n"; }};
      const auto d = build_dataset(samples, set, options);
      write_csv(out, io::features_csv(d), c, "features");
      std::cout << d.size() << " events x " << d.schema.size() << " features (" << d.schema.id << ")\n";
    } else if (*tune) {
      const auto d = read_features_for(features);
      const auto grid = resolve_grid(c);
      std::vector<GbtParams> seeded_grid;
      for (const auto& p : grid) seeded_grid.push_back(seeded(p, c));
      const auto r = grid_search(d, seeded_grid, c.k_folds, derive_seed(c.seed, "folds"), cv_options);
      write_json(out, {{"feature_set", d.schema.id}, {"search", r}}, c);
      std::cout << "best mean relative RMSE " << io::fmt(100 * r.best_score) << "% with "
                << json(r.best).dump() << "\n";
    } else if (*train) {
      const auto d = read_features_for(features);
      const auto m = train_gbt(d.rows, d.targets, seeded(c.params, c), d.schema.id);
      json j = m;
      j["train_target_mean"] = dummy_predict(d.targets).mean;
      write_json(out, j, c);
      std::cout << "trained " << m.trees.size() << " trees on " << d.size() << " events\n";
    } else if (*cv) {
      const auto d = read_features_for(features);
      const auto r = lopo_cv(d, seeded(c.params, c), cv_options);
      write_json(out, {{"evaluation", "lopo"}, {"report", r}}, c);
      std::cout << format_report_table(std::vector<EvalReport>{r});
    } else if (*evaluate) {
      const auto a = read_model(model_path);
      const auto d = read_features_for(features, &a.model);
      const auto r = predict_report(d.schema.id, d, a);
      write_json(out, {{"evaluation", "holdout"}, {"report", r}}, c);
      std::cout << format_report_table(std::vector<EvalReport>{r});
    } else if (*predict) {
      const auto a = read_model(model_path);
      std::vector<double> x;
      const int modes = !row.empty() + !features.empty() + !profiles.empty();
      if (modes != 1) throw Error(ErrorCode::kConfiguration, "give exactly one of --row, --features, --profiles");
      if (!row.empty()) {
        x = parse_row(row);
      } else if (!features.empty()) {
        const auto d = read_features_for(features, &a.model);
        if (!index || *index >= d.size()) throw Error(ErrorCode::kConfiguration, "--index is missing or out of range");
        x = d.rows[*index];
      } else {
        if (patients.empty()) throw Error(ErrorCode::kConfiguration, "--profiles needs --patients");
        const auto in = read_inputs(profiles, patients);
        if (in.profiles.size() != 1) throw Error(ErrorCode::kInvalidProfile, "expected one dose interval");
        x = features_from_three_samples(in.profiles[0], find_patient(in.patients, in.profiles[0].patient_id),
                                        parse_feature_set(a.model.schema_id), c.priors);
      }
      std::cout << io::fmt(a.model.predict(x)) << "\n";
    } else if (*explain) {
      const auto a = read_model(model_path);
      const auto d = read_features_for(features, &a.model);
      const auto bg_data = background.empty() ? d : read_features_for(background, &a.model);
      const auto bg = background_rows(bg_data, c.shap_background, c.seed);
      std::vector<Attribution> attributions(d.size());
      parallel_for(d.size(), c.threads, [&](std::size_t i) {
        attributions[i] = shap_values(a.model, d.rows[i], bg, d.schema.names);
      });
      const fs::path dir = out;
      write_csv(dir / "attributions.csv", io::attributions_csv(d, attributions), c, "explain");
      const auto ranks = rank_features(attributions);
      write_csv(dir / "ranking.csv", io::ranking_csv(ranks), c, "explain");
      for (std::size_t i = 0; i < ranks.size() && i < 5; ++i) {
        std::cout << ranks[i].rank << ". " << ranks[i].name << " " << io::fmt(ranks[i].mean_abs_phi) << "\n";
      }
    } else if (*report) {
      ExperimentConfig e;
      e.seed = c.seed;
      e.lopo_params = c.params;
      e.grid = resolve_grid(c);
      e.k_folds = c.k_folds;
      e.priors = c.priors;
      e.shap_background = c.shap_background;
      e.threads = c.threads;
      e.dev.noise_on = e.test.noise_on = c.noise_on;
      if (!c.feature_sets.empty()) {
        e.feature_sets.clear();
        for (const auto& id : c.feature_sets) e.feature_sets.push_back(parse_feature_set(id));
      }
      const auto r = run_experiment(e);
      const fs::path dir = out;
      io::write_text(dir / "report.json", report_json(r).dump(2) + "\n");
      std::vector<EvalReport> lopo, prospective;
      for (const auto& v : r.variants) {
        lopo.push_back(v.lopo);
        prospective.push_back(v.prospective.report);
      }
      const std::string table = "LOPO on development cohort\n" + format_report_table(lopo) +
                                "\nProspective on test cohort\n" + format_report_table(prospective);
      io::write_text(dir / "report.txt", table);
      std::cout << table;
    } else if (*schemas) {
      std::cout << io::schemas_json().dump(2) << "\n";
    }
  } catch (const Error& e) {
    return fail(e);
  } catch (const json::exception& e) {
    return fail(Error(ErrorCode::kSchema, e.what()));
  }
  return 0;
}
