#pragma once

// CSV and JSON file formats shared by the CLI.

#include <charconv>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include <nlohmann/json.hpp>

#include "tacro/error.hpp"
#include "tacro/eval_harness.hpp"
#include "tacro/feature_builder.hpp"
#include "tacro/pk_core.hpp"
#include "tacro/synth_cohort.hpp"
#include "tacro/tree_shap.hpp"

namespace tacro::io {

/// Shortest decimal that parses back to the same double.
inline std::string fmt(double v) {
  char buf[32];
  const auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  if (ec != std::errc{}) throw Error(ErrorCode::kIo, "number formatting failed");
  return {buf, end};
}

inline double parse_double(std::string_view s) {
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size()) {
    throw Error(ErrorCode::kSchema, "not a number: '" + std::string(s) + "'");
  }
  return v;
}

inline int parse_int(std::string_view s) {
  int v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size()) {
    throw Error(ErrorCode::kSchema, "not an integer: '" + std::string(s) + "'");
  }
  return v;
}

inline std::vector<std::string> split_csv_line(std::string_view line) {
  std::vector<std::string> cells;
  std::size_t start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    cells.emplace_back(line.substr(start, comma - start));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return cells;
}

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::size_t column(std::string_view name) const {
    for (std::size_t i = 0; i < header.size(); ++i) {
      if (header[i] == name) return i;
    }
    throw Error(ErrorCode::kSchema, "missing column '" + std::string(name) + "'");
  }
};

inline std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_text(const std::filesystem::path& path, std::string_view text) {
  if (path.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + path.string());
  out << text;
  if (!out) throw Error(ErrorCode::kIo, "write failed for " + path.string());
}

inline CsvTable parse_csv(std::string_view text) {
  CsvTable t;
  std::size_t start = 0;
  bool first = true;
  while (start < text.size()) {
    auto end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    auto line = text.substr(start, end - start);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    start = end + 1;
    if (line.empty()) continue;
    auto cells = split_csv_line(line);
    if (first) {
      t.header = std::move(cells);
      first = false;
    } else {
      if (cells.size() != t.header.size()) throw Error(ErrorCode::kSchema, "ragged CSV row");
      t.rows.push_back(std::move(cells));
    }
  }
  if (first) throw Error(ErrorCode::kSchema, "CSV has no header row");
  return t;
}

inline CsvTable read_csv(const std::filesystem::path& path) { return parse_csv(read_text(path)); }

// ---- profiles: patient_id,visit,dose_mg,time_h,conc_ugL,measured

inline std::string profiles_csv(const std::vector<ConcentrationProfile>& profiles) {
  std::string out = "patient_id,visit,dose_mg,time_h,conc_ugL,measured\n";
  for (const auto& p : profiles) {
    for (const auto& pt : p.points) {
      out += p.patient_id + "," + std::to_string(p.visit) + "," + fmt(p.dose_mg) + "," + fmt(pt.time) + "," +
             fmt(pt.concentration) + "," + (pt.measured ? "1" : "0") + "\n";
    }
  }
  return out;
}

/// Rows are grouped into profiles by (patient_id, visit) in first-seen order.
inline std::vector<ConcentrationProfile> parse_profiles(const CsvTable& t) {
  const auto c_id = t.column("patient_id"), c_visit = t.column("visit"), c_dose = t.column("dose_mg"),
             c_time = t.column("time_h"), c_conc = t.column("conc_ugL"), c_meas = t.column("measured");
  std::vector<ConcentrationProfile> profiles;
  std::map<std::pair<std::string, int>, std::size_t> index;
  for (const auto& row : t.rows) {
    const auto key = std::make_pair(row[c_id], parse_int(row[c_visit]));
    auto it = index.find(key);
    if (it == index.end()) {
      ConcentrationProfile p;
      p.patient_id = key.first;
      p.visit = key.second;
      p.dose_mg = parse_double(row[c_dose]);
      it = index.emplace(key, profiles.size()).first;
      profiles.push_back(std::move(p));
    }
    auto& p = profiles[it->second];
    if (row[c_meas] != "0" && row[c_meas] != "1") throw Error(ErrorCode::kSchema, "measured must be 0 or 1");
    p.points.push_back({parse_double(row[c_time]), parse_double(row[c_conc]), row[c_meas] == "1"});
  }
  for (const auto& p : profiles) p.validate();
  return profiles;
}

// ---- patients: patient_id,sex,weight_kg,height_cm,hct,txt_days,assay,sigma_add,sigma_prop

inline std::string patients_csv(const std::vector<PatientRecord>& patients) {
  std::string out = "patient_id,sex,weight_kg,height_cm,hct,txt_days,assay,sigma_add,sigma_prop\n";
  for (const auto& p : patients) {
    out += p.patient_id + "," + to_string(p.sex) + "," + fmt(p.weight_kg) + "," + fmt(p.height_cm) + "," +
           fmt(p.hematocrit) + "," + fmt(p.txt_days) + "," + to_string(p.assay) + "," + fmt(p.sigma_add) + "," +
           fmt(p.sigma_prop) + "\n";
  }
  return out;
}

inline std::vector<PatientRecord> parse_patients(const CsvTable& t) {
  const auto c_id = t.column("patient_id"), c_sex = t.column("sex"), c_w = t.column("weight_kg"),
             c_h = t.column("height_cm"), c_hct = t.column("hct"), c_txt = t.column("txt_days"),
             c_assay = t.column("assay"), c_sa = t.column("sigma_add"), c_sp = t.column("sigma_prop");
  std::vector<PatientRecord> out;
  for (const auto& row : t.rows) {
    PatientRecord p;
    p.patient_id = row[c_id];
    if (row[c_sex] != "male" && row[c_sex] != "female") throw Error(ErrorCode::kSchema, "sex must be male|female");
    p.sex = row[c_sex] == "male" ? Sex::kMale : Sex::kFemale;
    p.weight_kg = parse_double(row[c_w]);
    p.height_cm = parse_double(row[c_h]);
    p.hematocrit = parse_double(row[c_hct]);
    p.txt_days = parse_double(row[c_txt]);
    if (row[c_assay] != "LCMS" && row[c_assay] != "IMMUNO") throw Error(ErrorCode::kSchema, "assay must be LCMS|IMMUNO");
    p.assay = row[c_assay] == "IMMUNO" ? Assay::kImmuno : Assay::kLcms;
    p.sigma_add = parse_double(row[c_sa]);
    p.sigma_prop = parse_double(row[c_sp]);
    out.push_back(std::move(p));
  }
  return out;
}

// ---- ground truth: patient_id,visit,true_auc

inline std::string truth_csv(const Cohort& cohort) {
  std::string out = "patient_id,visit,true_auc\n";
  for (const auto& s : cohort.profiles) {
    out += s.profile.patient_id + "," + std::to_string(s.profile.visit) + "," + fmt(s.true_auc) + "\n";
  }
  return out;
}

// ---- reference AUC: patient_id,visit,reference_auc

inline std::string reference_auc_csv(const std::vector<ConcentrationProfile>& raw) {
  std::string out = "patient_id,visit,reference_auc\n";
  for (const auto& p : raw) {
    out += p.patient_id + "," + std::to_string(p.visit) + "," + fmt(reference_auc(p)) + "\n";
  }
  return out;
}

// ---- feature matrix: <schema names...>,patient_id,visit,target_auc

inline std::string features_csv(const Dataset& d) {
  std::string out;
  for (const auto& n : d.schema.names) out += n + ",";
  out += "patient_id,visit,target_auc\n";
  for (std::size_t i = 0; i < d.size(); ++i) {
    for (const double v : d.rows[i]) out += fmt(v) + ",";
    out += d.groups[i] + "," + std::to_string(d.visits[i]) + "," + fmt(d.targets[i]) + "\n";
  }
  return out;
}

inline Dataset parse_features(const CsvTable& t, std::string schema_id) {
  Dataset d;
  d.schema.id = std::move(schema_id);
  const auto c_id = t.column("patient_id"), c_visit = t.column("visit"), c_target = t.column("target_auc");
  std::vector<std::size_t> feature_cols;
  for (std::size_t i = 0; i < t.header.size(); ++i) {
    if (i == c_id || i == c_visit || i == c_target) continue;
    feature_cols.push_back(i);
    d.schema.names.push_back(t.header[i]);
  }
  for (const auto& row : t.rows) {
    std::vector<double> values;
    for (const auto c : feature_cols) values.push_back(parse_double(row[c]));
    d.rows.push_back(std::move(values));
    d.groups.push_back(row[c_id]);
    d.visits.push_back(parse_int(row[c_visit]));
    d.targets.push_back(parse_double(row[c_target]));
  }
  return d;
}

/// Matches a header against the known schemas; unknown layouts get "custom".
inline std::string infer_schema_id(const std::vector<std::string>& names) {
  for (const auto s : kAllFeatureSets) {
    if (schema_for(s).names == names) return std::string(feature_set_id(s));
  }
  return "custom";
}

inline Dataset read_features(const std::filesystem::path& path) {
  auto t = read_csv(path);
  auto d = parse_features(t, "");
  d.schema.id = infer_schema_id(d.schema.names);
  return d;
}

/// {schema_id: [slot names]} for every known schema.
inline nlohmann::json schemas_json() {
  nlohmann::json j = nlohmann::json::object();
  for (const auto s : kAllFeatureSets) j[std::string(feature_set_id(s))] = schema_for(s).names;
  return j;
}

// ---- MAP fits: patient_id,visit,cl,v,ka,auc_map,converged

inline std::string fits_csv(std::span<const ComparatorFit> fits) {
  std::string out = "patient_id,visit,cl,v,ka,auc_map,converged\n";
  for (const auto& f : fits) {
    out += f.patient_id + "," + std::to_string(f.visit) + "," + fmt(f.fit.params.cl) + "," + fmt(f.fit.params.v) +
           "," + fmt(f.fit.params.ka) + "," + fmt(f.auc) + "," + (f.fit.converged ? "1" : "0") + "\n";
  }
  return out;
}

// ---- attributions: patient_id,visit,base_value,phi_<name>...

inline std::string attributions_csv(const Dataset& d, std::span<const Attribution> attributions) {
  std::string out = "patient_id,visit,base_value";
  for (const auto& n : d.schema.names) out += ",phi_" + n;
  out += "\n";
  for (std::size_t i = 0; i < attributions.size(); ++i) {
    out += d.groups[i] + "," + std::to_string(d.visits[i]) + "," + fmt(attributions[i].base_value);
    for (const double p : attributions[i].phi) out += "," + fmt(p);
    out += "\n";
  }
  return out;
}

inline std::string ranking_csv(std::span<const FeatureRank> ranks) {
  std::string out = "feature,mean_abs_phi,rank\n";
  for (const auto& r : ranks) out += r.name + "," + fmt(r.mean_abs_phi) + "," + std::to_string(r.rank) + "\n";
  return out;
}

}  // namespace tacro::io
