#pragma once

// Serialization of estimate and sweep results, and the learner x estimator
// comparison table. Infinite values are written as the literal "inf" (a
// string in JSON), NaN as "nan".

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "orthoate/dataio.hpp"
#include "orthoate/error.hpp"
#include "orthoate/estimators.hpp"
#include "orthoate/simulation.hpp"

namespace orthoate {

inline constexpr int kReportSchemaVersion = 1;

enum class ReportFormat { csv, json };

inline ReportFormat parse_report_format(const std::string& s) {
  if (s == "csv") return ReportFormat::csv;
  if (s == "json") return ReportFormat::json;
  throw ConfigError("format must be csv or json, got '" + s + "'");
}

/// Shortest round-trip decimal form; "inf", "-inf" and "nan" otherwise.
inline std::string format_number(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

inline double parse_number(const std::string& s) {
  if (s == "inf") return std::numeric_limits<double>::infinity();
  if (s == "-inf") return -std::numeric_limits<double>::infinity();
  if (s == "nan" || s.empty()) return std::numeric_limits<double>::quiet_NaN();
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size()) throw ParseError("not a number: '" + s + "'");
  return v;
}

namespace detail {

using ordered_json = nlohmann::ordered_json;

inline ordered_json json_number(double v) {
  if (std::isfinite(v)) return v;
  return format_number(v);
}

/// CSV cell: line breaks become spaces, cells with commas or quotes are quoted.
inline std::string csv_text(std::string s) {
  for (char& c : s)
    if (c == '\n' || c == '\r') c = ' ';
  if (s.find_first_of(",\"") == std::string::npos) return s;
  std::string q = "\"";
  for (char c : s) {
    if (c == '"') q.push_back('"');
    q.push_back(c);
  }
  return q + "\"";
}

inline void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  out << content;
  if (!out) throw IoError("failed writing " + path);
}

}  // namespace detail

/// One estimator run on one dataset with one learner combination.
struct EstimateRecord {
  std::string dataset;
  std::string learner;
  EstimateReport report;
  std::optional<double> eps_ate;  // present when the dataset carries truth
  std::string error;               // non-empty when the run failed
};

inline const char* kEstimateCsvHeader =
    "schema_version,dataset,learner,estimator,r,k,R,treatment,theta,eps_ate,infinite,nan,floored,error";

inline std::string estimate_csv(const std::vector<EstimateRecord>& records) {
  std::ostringstream out;
  out << kEstimateCsvHeader << '\n';
  for (const auto& rec : records) {
    const EstimateReport& r = rec.report;
    const std::string eps = rec.eps_ate ? format_number(*rec.eps_ate) : "";
    const auto prefix = [&] {
      std::ostringstream p;
      p << kReportSchemaVersion << ',' << detail::csv_text(rec.dataset) << ',' << detail::csv_text(rec.learner) << ','
        << detail::csv_text(r.estimator.label()) << ',' << r.estimator.r << ',' << r.estimator.k << ',' << r.r_reps;
      return p.str();
    };
    if (r.theta.empty()) {
      out << prefix() << ",,,," << r.diagnostics.infinite << ',' << r.diagnostics.nan << ','
          << r.diagnostics.floored_propensities << ',' << detail::csv_text(rec.error) << '\n';
      continue;
    }
    for (std::size_t i = 0; i < r.theta.size(); ++i)
      out << prefix() << ',' << i << ',' << format_number(r.theta[i]) << ',' << eps << ',' << r.diagnostics.infinite
          << ',' << r.diagnostics.nan << ',' << r.diagnostics.floored_propensities << ','
          << detail::csv_text(rec.error) << '\n';
  }
  return out.str();
}

inline std::string estimate_json(const std::vector<EstimateRecord>& records) {
  using detail::json_number;
  detail::ordered_json root;
  root["schema_version"] = kReportSchemaVersion;
  root["records"] = detail::ordered_json::array();
  for (const auto& rec : records) {
    const EstimateReport& r = rec.report;
    detail::ordered_json j;
    j["dataset"] = rec.dataset;
    j["learner"] = rec.learner;
    j["estimator"] = r.estimator.label();
    j["r"] = r.estimator.r;
    j["k"] = r.estimator.k;
    j["R"] = r.r_reps;
    j["theta"] = detail::ordered_json::array();
    for (double t : r.theta) j["theta"].push_back(json_number(t));
    j["ate_pairwise"] = detail::ordered_json::array();
    for (const auto& row : r.ate_pairwise) {
      auto jr = detail::ordered_json::array();
      for (double v : row) jr.push_back(json_number(v));
      j["ate_pairwise"].push_back(jr);
    }
    j["eps_ate"] = rec.eps_ate ? json_number(*rec.eps_ate) : detail::ordered_json(nullptr);
    if (!r.moments_used.empty()) {
      j["moments"] = detail::ordered_json::array();
      for (const auto& m : r.moments_used) {
        auto jm = detail::ordered_json::array();
        for (double v : m.values()) jm.push_back(json_number(v));
        j["moments"].push_back(jm);
      }
    }
    j["diagnostics"] = {{"floored_propensities", r.diagnostics.floored_propensities},
                        {"infinite", r.diagnostics.infinite},
                        {"nan", r.diagnostics.nan}};
    j["error"] = rec.error;
    root["records"].push_back(std::move(j));
  }
  return root.dump(2) + "\n";
}

inline void write_report(const std::vector<EstimateRecord>& records, const std::string& path, ReportFormat format) {
  detail::write_file(path, format == ReportFormat::csv ? estimate_csv(records) : estimate_json(records));
}

/// Rows of a report CSV as a header-keyed table of raw cells.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::size_t column(const std::string& name) const {
    const auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw SchemaError("no column '" + name + "'");
    return static_cast<std::size_t>(it - header.begin());
  }
  double number(std::size_t row, const std::string& name) const { return parse_number(rows.at(row).at(column(name))); }
};

inline CsvTable read_csv_table(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  const auto split = [](const std::string& line) { return detail::split_csv_line(line); };
  CsvTable t;
  std::string line;
  if (!std::getline(in, line)) throw ParseError(path + ": empty file");
  t.header = split(line);
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    t.rows.push_back(split(line));
    if (t.rows.back().size() != t.header.size())
      throw ParseError(path + ": line " + std::to_string(line_no) + " has the wrong number of cells");
  }
  return t;
}

// ---------------------------------------------------------------------------
// Comparison table: learner rows x estimator columns of eps_ATE averaged over
// datasets, plus relative error reductions R_X = (eps_X - eps_ours) / eps_X of
// the first higher-order estimator against DR and DML.

struct ComparisonRow {
  std::string learner;
  std::vector<double> eps;  // one per ComparisonTable::estimators entry
  std::optional<double> r_dr;
  std::optional<double> r_dml;
  std::size_t n_datasets = 0;
  std::size_t n_dml_infinite = 0;
};

struct ComparisonTable {
  std::vector<std::string> estimators;
  std::vector<ComparisonRow> rows;
  bool filter_infinite = false;
};

inline ComparisonTable build_comparison(const std::vector<EstimateRecord>& records, bool filter_infinite) {
  ComparisonTable table;
  table.filter_infinite = filter_infinite;
  std::vector<std::string> learners;
  for (const auto& rec : records) {
    const std::string e = rec.report.estimator.label();
    if (std::find(table.estimators.begin(), table.estimators.end(), e) == table.estimators.end())
      table.estimators.push_back(e);
    if (std::find(learners.begin(), learners.end(), rec.learner) == learners.end()) learners.push_back(rec.learner);
  }
  std::string ours;
  for (const auto& rec : records)
    if (rec.report.estimator.kind == EstimatorKind::higher_order) {
      ours = rec.report.estimator.label();
      break;
    }

  const auto is_infinite = [](const EstimateRecord& r) {
    return !r.report.finite() || (r.eps_ate && !std::isfinite(*r.eps_ate));
  };
  for (const auto& learner : learners) {
    ComparisonRow row;
    row.learner = learner;
    std::vector<std::string> datasets;
    for (const auto& rec : records)
      if (rec.learner == learner && std::find(datasets.begin(), datasets.end(), rec.dataset) == datasets.end())
        datasets.push_back(rec.dataset);
    std::vector<std::string> kept;
    for (const auto& ds : datasets) {
      bool dml_inf = false;
      for (const auto& rec : records)
        if (rec.learner == learner && rec.dataset == ds && rec.report.estimator.kind == EstimatorKind::dml &&
            is_infinite(rec))
          dml_inf = true;
      if (dml_inf) ++row.n_dml_infinite;
      if (!(filter_infinite && dml_inf)) kept.push_back(ds);
    }
    row.n_datasets = kept.size();
    for (const auto& est : table.estimators) {
      std::vector<double> vals;
      bool inf = false;
      for (const auto& rec : records) {
        if (rec.learner != learner || rec.report.estimator.label() != est) continue;
        if (std::find(kept.begin(), kept.end(), rec.dataset) == kept.end()) continue;
        if (!rec.error.empty()) continue;
        if (is_infinite(rec)) {
          inf = true;
        } else if (rec.eps_ate) {
          vals.push_back(*rec.eps_ate);
        }
      }
      if (inf)
        row.eps.push_back(std::numeric_limits<double>::infinity());
      else
        row.eps.push_back(vals.empty() ? std::numeric_limits<double>::quiet_NaN() : mean(vals));
    }
    const auto eps_of = [&](const std::string& label) -> std::optional<double> {
      const auto it = std::find(table.estimators.begin(), table.estimators.end(), label);
      if (it == table.estimators.end()) return std::nullopt;
      return row.eps[static_cast<std::size_t>(it - table.estimators.begin())];
    };
    const auto reduction = [&](const std::string& base) -> std::optional<double> {
      const auto b = eps_of(base);
      const auto o = ours.empty() ? std::nullopt : eps_of(ours);
      if (!b || !o || !std::isfinite(*b) || !std::isfinite(*o) || *b == 0.0) return std::nullopt;
      return (*b - *o) / *b;
    };
    row.r_dr = reduction("dr");
    row.r_dml = reduction("dml");
    table.rows.push_back(std::move(row));
  }
  return table;
}

namespace detail {
/// Fixed-precision cell: "inf" for infinities, "\" for undefined ratios.
inline std::string table_cell(std::optional<double> v, bool percent = false) {
  if (!v) return "\\";
  if (std::isinf(*v)) return "inf";
  if (std::isnan(*v)) return "n/a";
  char buf[64];
  if (percent)
    std::snprintf(buf, sizeof buf, "%.2f%%", 100.0 * *v);
  else
    std::snprintf(buf, sizeof buf, "%.4f", *v);
  return buf;
}
}  // namespace detail

inline std::string comparison_csv(const ComparisonTable& t) {
  std::ostringstream out;
  out << "schema_version,learner";
  for (const auto& e : t.estimators) out << ',' << detail::csv_text(e);
  out << ",R_DR,R_DML,n_datasets,n_dml_infinite,filter_infinite\n";
  for (const auto& row : t.rows) {
    out << kReportSchemaVersion << ',' << detail::csv_text(row.learner);
    for (double v : row.eps) out << ',' << format_number(v);
    out << ',' << (row.r_dr ? format_number(*row.r_dr) : "\\") << ','
        << (row.r_dml ? format_number(*row.r_dml) : "\\") << ',' << row.n_datasets << ',' << row.n_dml_infinite << ','
        << t.filter_infinite << '\n';
  }
  return out.str();
}

inline std::string comparison_json(const ComparisonTable& t) {
  detail::ordered_json root;
  root["schema_version"] = kReportSchemaVersion;
  root["filter_infinite"] = t.filter_infinite;
  root["estimators"] = t.estimators;
  root["rows"] = detail::ordered_json::array();
  for (const auto& row : t.rows) {
    detail::ordered_json j;
    j["learner"] = row.learner;
    j["eps_ate"] = detail::ordered_json::object();
    for (std::size_t e = 0; e < t.estimators.size(); ++e) j["eps_ate"][t.estimators[e]] = detail::json_number(row.eps[e]);
    j["R_DR"] = row.r_dr ? detail::json_number(*row.r_dr) : detail::ordered_json("\\");
    j["R_DML"] = row.r_dml ? detail::json_number(*row.r_dml) : detail::ordered_json("\\");
    j["n_datasets"] = row.n_datasets;
    j["n_dml_infinite"] = row.n_dml_infinite;
    root["rows"].push_back(std::move(j));
  }
  return root.dump(2) + "\n";
}

/// Human-readable table in the "Model\Estimator" layout.
inline std::string render_comparison(const ComparisonTable& t) {
  std::vector<std::vector<std::string>> cells;
  std::vector<std::string> head{"Model\\Estimator"};
  for (const auto& e : t.estimators) head.push_back(e == "dr" ? "DR" : e == "dml" ? "DML" : e);
  head.insert(head.end(), {"R_DR", "R_DML", "datasets"});
  cells.push_back(head);
  for (const auto& row : t.rows) {
    std::vector<std::string> c{row.learner};
    for (double v : row.eps) c.push_back(detail::table_cell(v));
    c.push_back(detail::table_cell(row.r_dr, true));
    c.push_back(detail::table_cell(row.r_dml, true));
    std::string n = std::to_string(row.n_datasets);
    if (row.n_dml_infinite > 0)
      n += t.filter_infinite ? " (" + std::to_string(row.n_dml_infinite) + " dropped)"
                             : " (" + std::to_string(row.n_dml_infinite) + " inf)";
    c.push_back(n);
    cells.push_back(c);
  }
  std::vector<std::size_t> width(head.size(), 0);
  for (const auto& c : cells)
    for (std::size_t i = 0; i < c.size(); ++i) width[i] = std::max(width[i], c[i].size());
  std::ostringstream out;
  for (const auto& c : cells) {
    for (std::size_t i = 0; i < c.size(); ++i) {
      out << c[i] << std::string(width[i] - c[i].size(), ' ');
      out << (i + 1 < c.size() ? "  " : "\n");
    }
  }
  return out.str();
}

// ---------------------------------------------------------------------------
// Sweeps: long-format CSV of replications and a JSON summary per cell.

inline const char* kSweepCsvHeader = "schema_version,sweep,grid_value,estimator,learner,replication,eps_ate,error";

inline std::string sweep_csv(const SweepReport& rep) {
  std::ostringstream out;
  out << kSweepCsvHeader << '\n';
  for (const auto& r : rep.rows)
    out << kReportSchemaVersion << ',' << to_string(rep.kind) << ',' << format_number(r.grid_value) << ','
        << detail::csv_text(r.estimator) << ',' << detail::csv_text(r.learner) << ',' << r.replication << ','
        << format_number(r.eps_ate) << ',' << detail::csv_text(r.error) << '\n';
  return out.str();
}

inline std::string sweep_summary_json(const SweepReport& rep) {
  detail::ordered_json root;
  root["schema_version"] = kReportSchemaVersion;
  root["sweep"] = to_string(rep.kind);
  root["cells"] = detail::ordered_json::array();
  for (const auto& s : rep.summarize()) {
    detail::ordered_json j;
    j["grid_value"] = s.grid_value;
    j["estimator"] = s.estimator;
    j["learner"] = s.learner;
    j["replications"] = s.count;
    j["infinite"] = s.n_infinite;
    j["failed"] = s.n_failed;
    j["mean_eps_ate"] = detail::json_number(s.mean);
    j["median_eps_ate"] = detail::json_number(s.median);
    j["mean_eps_ate_finite"] = detail::json_number(s.mean_finite);
    root["cells"].push_back(std::move(j));
  }
  return root.dump(2) + "\n";
}

inline void write_sweep(const SweepReport& rep, const std::string& csv_path, const std::string& json_path) {
  detail::write_file(csv_path, sweep_csv(rep));
  detail::write_file(json_path, sweep_summary_json(rep));
}

}  // namespace orthoate
