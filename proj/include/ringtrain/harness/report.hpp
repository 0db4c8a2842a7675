#pragma once

#include <cstdio>
#include <fstream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "ringtrain/errors.hpp"
#include "ringtrain/profile.hpp"

namespace ringtrain {

inline constexpr const char* kVersion = "0.1.0";
inline constexpr const char* kReportHeader =
    "experiment,mode,model,K,alg,t_comp_s,t_comm_s,t_total_s,efficiency";

// t_comp / (t_comp + t_comm); a row with no time at all counts as fully
// efficient.
inline double efficiency(double t_comp, double t_comm) {
  const double total = t_comp + t_comm;
  return total > 0 ? t_comp / total : 1.0;
}

struct ReportRow {
  std::string experiment;
  std::string mode = "sim";
  std::string model;
  int K = 1;
  std::string alg;
  double t_comp = 0.0;
  double t_comm = 0.0;

  double t_total() const { return t_comp + t_comm; }
  double eff() const { return efficiency(t_comp, t_comm); }
};

struct ThermalSample {
  int iter = 0;
  double time_s = 0.0;
  double temp_c = 0.0;
  double multiplier = 1.0;
  double t_comp = 0.0;
};

struct ExperimentReport {
  std::string experiment;
  std::string mode = "sim";
  std::vector<ReportRow> rows;
  nlohmann::json meta = nlohmann::json::object();
  nlohmann::json derived = nlohmann::json::object();
  std::vector<std::string> failures;  // embedded assertion failures
  std::vector<ThermalSample> series;

  bool ok() const { return failures.empty(); }
  void check(bool cond, const std::string& what) {
    if (!cond) failures.push_back(what);
  }
  const ReportRow& row(const std::string& model, int K, const std::string& alg) const {
    for (const auto& r : rows)
      if (r.model == model && r.K == K && r.alg == alg) return r;
    throw NotFoundError("no row " + model + "/" + std::to_string(K) + "/" + alg);
  }
};

inline std::string fmt_num(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

inline void write_csv(std::ostream& os, const ExperimentReport& r) {
  os << kReportHeader << '\n';
  for (const auto& row : r.rows)
    os << row.experiment << ',' << row.mode << ',' << row.model << ',' << row.K << ','
       << row.alg << ',' << fmt_num(row.t_comp) << ',' << fmt_num(row.t_comm) << ','
       << fmt_num(row.t_total()) << ',' << fmt_num(row.eff()) << '\n';
}

inline void write_series_csv(std::ostream& os, const ExperimentReport& r) {
  os << "iter,time_s,temp_c,multiplier,t_comp_s\n";
  for (const auto& s : r.series)
    os << s.iter << ',' << fmt_num(s.time_s) << ',' << fmt_num(s.temp_c) << ','
       << fmt_num(s.multiplier) << ',' << fmt_num(s.t_comp) << '\n';
}

// No timestamps here: the sidecar must be as reproducible as the CSV.
inline nlohmann::json sidecar(const ExperimentReport& r) {
  nlohmann::json j;
  j["experiment"] = r.experiment;
  j["mode"] = r.mode;
  j["version"] = kVersion;
  j["bytes_per_mb"] = kBytesPerMB;
  j["time_base"] = r.mode == "sim" ? "virtual" : "wall";
  j["rows"] = r.rows.size();
  j["meta"] = r.meta;
  j["derived"] = r.derived;
  j["assertion_failures"] = r.failures;
  return j;
}

inline std::string csv_string(const ExperimentReport& r) {
  std::ostringstream os;
  write_csv(os, r);
  return os.str();
}

inline void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write " + path);
  out << text;
  if (!out) throw ConfigError("write failed: " + path);
}

inline std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open " + path);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

}  // namespace ringtrain
