#pragma once

// Dataset ingestion (canonical CSV) and run-configuration loading.
//
// CSV schema: UTF-8, mandatory header, '.' decimal separator, columns
//   y, d, z1..zp [, mu0..mu{n-1}]
// where d is an integer label in 0..n-1 and the optional mu columns carry
// the true conditional mean of every arm.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "orthoate/error.hpp"
#include "orthoate/estimators.hpp"
#include "orthoate/simulation.hpp"

namespace orthoate {

struct CsvSchema {
  std::string y_column = "y";
  std::string d_column = "d";
  std::string z_prefix = "z";
  std::string mu_prefix = "mu";
  /// 0 infers the count from the mu columns, else from the largest label.
  int n_treatments = 0;
};

namespace detail {

/// Splits one CSV line; double-quoted cells may contain commas and "" for a
/// literal quote. Unquoted cells are trimmed.
inline std::vector<std::string> split_csv_line(std::string_view line) {
  std::vector<std::string> out;
  std::string cell;
  bool quoted = false, was_quoted = false;
  const auto flush = [&] {
    if (!was_quoted) {
      const auto b = cell.find_first_not_of(" \t");
      const auto e = cell.find_last_not_of(" \t");
      cell = b == std::string::npos ? std::string{} : cell.substr(b, e - b + 1);
    }
    out.push_back(cell);
    cell.clear();
    was_quoted = false;
  };
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cell.push_back('"');
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cell.push_back(c);
      }
    } else if (c == '"' && cell.find_first_not_of(" \t") == std::string::npos) {
      cell.clear();
      quoted = was_quoted = true;
    } else if (c == ',') {
      flush();
    } else if (c != '\r' && !(was_quoted && (c == ' ' || c == '\t'))) {
      cell.push_back(c);
    }
  }
  flush();
  return out;
}

inline std::optional<double> parse_double(std::string_view s) {
  if (s.empty()) return std::nullopt;
  if (s.front() == '+') s.remove_prefix(1);
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size() || !std::isfinite(v)) return std::nullopt;
  return v;
}

/// Index of `prefix<k>` columns for k = first, first+1, ... until a gap.
inline std::vector<std::size_t> numbered_columns(const std::vector<std::string>& header, const std::string& prefix,
                                                 int first) {
  std::vector<std::size_t> cols;
  for (int k = first;; ++k) {
    const auto it = std::find(header.begin(), header.end(), prefix + std::to_string(k));
    if (it == header.end()) break;
    cols.push_back(static_cast<std::size_t>(it - header.begin()));
  }
  return cols;
}

}  // namespace detail

/// Parses CSV text; `origin` names the source in error messages.
inline Dataset parse_csv_dataset(std::istream& in, const CsvSchema& schema, const std::string& origin = "<input>") {
  std::string line;
  std::size_t line_no = 0;
  std::vector<std::string> header;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") != std::string::npos) break;
  }
  header = detail::split_csv_line(line);
  if (line_no == 0 || header.empty() || (header.size() == 1 && header[0].empty()))
    throw ParseError(origin + ": missing header row");

  const auto find_col = [&](const std::string& name) -> std::optional<std::size_t> {
    const auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) return std::nullopt;
    return static_cast<std::size_t>(it - header.begin());
  };
  std::vector<std::string> missing;
  const auto y_col = find_col(schema.y_column);
  const auto d_col = find_col(schema.d_column);
  if (!y_col) missing.push_back(schema.y_column);
  if (!d_col) missing.push_back(schema.d_column);
  const std::vector<std::size_t> z_cols = detail::numbered_columns(header, schema.z_prefix, 1);
  if (z_cols.empty()) missing.push_back(schema.z_prefix + "1");
  if (!missing.empty()) {
    std::string msg = origin + ": missing column(s):";
    for (const auto& m : missing) msg += " " + m;
    throw SchemaError(msg);
  }
  const std::vector<std::size_t> mu_cols = detail::numbered_columns(header, schema.mu_prefix, 0);

  Dataset ds;
  std::vector<double> z_values, mu_values;
  std::size_t data_row = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    ++data_row;
    const auto cells = detail::split_csv_line(line);
    const auto where = [&](std::size_t col) {
      return origin + ": row " + std::to_string(data_row) + " (line " + std::to_string(line_no) + "), column '" +
             header[col] + "'";
    };
    if (cells.size() != header.size())
      throw ParseError(origin + ": row " + std::to_string(data_row) + " (line " + std::to_string(line_no) +
                       ") has " + std::to_string(cells.size()) + " cells, header has " +
                       std::to_string(header.size()));
    const auto number = [&](std::size_t col) {
      const auto v = detail::parse_double(cells[col]);
      if (!v) throw ParseError(where(col) + ": '" + cells[col] + "' is not a finite number");
      return *v;
    };
    ds.y.push_back(number(*y_col));
    const double dv = number(*d_col);
    if (dv != std::floor(dv) || dv < 0) throw ParseError(where(*d_col) + ": label must be a non-negative integer");
    ds.d.push_back(static_cast<int>(dv));
    for (std::size_t c : z_cols) z_values.push_back(number(c));
    for (std::size_t c : mu_cols) mu_values.push_back(number(c));
  }
  if (ds.y.empty()) throw ParseError(origin + ": no data rows");

  const int max_label = *std::max_element(ds.d.begin(), ds.d.end());
  int n = schema.n_treatments;
  if (n == 0) n = mu_cols.empty() ? std::max(2, max_label + 1) : static_cast<int>(mu_cols.size());
  if (n < 2) throw SchemaError(origin + ": need at least two treatments");
  if (max_label >= n)
    throw SchemaError(origin + ": treatment label " + std::to_string(max_label) + " outside 0.." +
                      std::to_string(n - 1));
  if (!mu_cols.empty() && mu_cols.size() != static_cast<std::size_t>(n))
    throw SchemaError(origin + ": expected " + std::to_string(n) + " mu columns, found " +
                      std::to_string(mu_cols.size()));

  ds.n_treatments = n;
  ds.z = FeatureMatrix(ds.y.size(), z_cols.size(), std::move(z_values));
  if (!mu_cols.empty()) ds.truth = FeatureMatrix(ds.y.size(), mu_cols.size(), std::move(mu_values));
  ds.validate();
  return ds;
}

inline Dataset load_csv_dataset(const std::string& path, const CsvSchema& schema = {}) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  return parse_csv_dataset(in, schema, path);
}

/// Writes a dataset in the canonical schema (mu columns when truth exists).
inline void write_csv_dataset(const Dataset& ds, std::ostream& out) {
  out << "y,d";
  for (std::size_t j = 0; j < ds.z.cols(); ++j) out << ",z" << j + 1;
  if (ds.truth)
    for (std::size_t i = 0; i < ds.truth->cols(); ++i) out << ",mu" << i;
  out << '\n';
  char buf[64];
  const auto num = [&](double v) {
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
  };
  for (std::size_t m = 0; m < ds.size(); ++m) {
    out << num(ds.y[m]) << ',' << ds.d[m];
    for (double v : ds.z.row(m)) out << ',' << num(v);
    if (ds.truth)
      for (double v : ds.truth->row(m)) out << ',' << num(v);
    out << '\n';
  }
}

// ---------------------------------------------------------------------------
// Run configuration

struct DatasetEntry {
  std::string path;
  int n_treatments = 0;
};

struct SimulationSection {
  int n_treatments = 3;
  int p = 2;
  double r_c = 1.0;
  std::size_t q = 4000;
  int m = 20;
  std::uint64_t seed = 2024;
  std::vector<double> noise_sd;  // empty: defaults
  std::map<SweepKind, std::vector<double>> grids;
  bool redraw_params_per_replication = false;
};

struct VerifySection {
  std::vector<std::pair<int, int>> coefficient_orders;  // (r, k)
  double bernoulli_pi = 0.3;
  int random_moment_sets = 200;
  struct ScoreCheck {
    EstimatorSpec score;  // dml or higher_order
    int order = 2;
    bool first_order_only = false;
  };
  std::vector<ScoreCheck> orthogonality;
  std::int64_t n_draws = 200000;
  double epsilon = 1e-3;
  std::uint64_t seed = 7;
};

struct RunConfig {
  std::vector<DatasetEntry> datasets;
  std::vector<EstimatorSpec> estimators;
  std::vector<LearnerSpec> learners;
  int repetitions = 100;
  SplitRatios split{};
  std::uint64_t seed = 1;
  double propensity_floor = 0.0;
  TruthMode truth = TruthMode::estimation_fold;
  MomentSource moment_source = MomentSource::estimation_fold;
  std::string output_dir = "orthoate-out";
  std::string format = "csv";
  SimulationSection simulation;
  VerifySection verify;
};

namespace detail {

using json = nlohmann::json;

/// Collects every violation instead of stopping at the first one.
class ConfigReader {
 public:
  std::vector<std::string> errors;

  void reject_unknown(const json& obj, const std::string& where, std::initializer_list<const char*> known) {
    if (!obj.is_object()) {
      errors.push_back(where + ": expected an object");
      return;
    }
    for (const auto& [key, _] : obj.items()) {
      if (std::none_of(known.begin(), known.end(), [&](const char* k) { return key == k; }))
        errors.push_back(where + ": unknown key '" + key + "'");
    }
  }

  template <typename T>
  void read(const json& obj, const char* key, T& out, const std::string& where) {
    if (!obj.is_object() || !obj.contains(key)) return;
    try {
      out = obj.at(key).get<T>();
    } catch (const json::exception&) {
      errors.push_back(where + "." + key + ": wrong type");
    }
  }
};

inline std::optional<SweepKind> parse_sweep_kind(const std::string& s) {
  if (s == "confounding") return SweepKind::confounding;
  if (s == "dimension") return SweepKind::dimension;
  if (s == "samplesize") return SweepKind::samplesize;
  return std::nullopt;
}

inline std::optional<EstimatorSpec> parse_estimator(const json& e, ConfigReader& rd, const std::string& where) {
  rd.reject_unknown(e, where, {"kind", "r", "k"});
  if (!e.is_object()) return std::nullopt;
  std::string kind;
  rd.read(e, "kind", kind, where);
  EstimatorSpec spec;
  if (kind == "dr") {
    spec.kind = EstimatorKind::dr;
  } else if (kind == "dml") {
    spec.kind = EstimatorKind::dml;
  } else if (kind == "ho" || kind == "higher_order") {
    spec.kind = EstimatorKind::higher_order;
    rd.read(e, "r", spec.r, where);
    rd.read(e, "k", spec.k, where);
    if (spec.k < 2 || spec.k > spec.r)
      rd.errors.push_back(where + ": (r,k)=(" + std::to_string(spec.r) + "," + std::to_string(spec.k) +
                          "): k must satisfy 2 <= k <= r");
    if (spec.r > kMaxScoreOrder) rd.errors.push_back(where + ": r above 16 is not supported");
  } else {
    rd.errors.push_back(where + ": kind must be one of dr, dml, ho");
    return std::nullopt;
  }
  return spec;
}

inline void parse_forest(const json& j, ForestOptions& f, ConfigReader& rd, const std::string& where) {
  rd.reject_unknown(j, where, {"n_trees", "max_depth", "min_leaf", "max_features"});
  rd.read(j, "n_trees", f.n_trees, where);
  rd.read(j, "max_depth", f.max_depth, where);
  rd.read(j, "min_leaf", f.min_leaf, where);
  rd.read(j, "max_features", f.max_features, where);
  if (f.n_trees < 1) rd.errors.push_back(where + ".n_trees must be >= 1");
  if (f.min_leaf < 1) rd.errors.push_back(where + ".min_leaf must be >= 1");
  if (f.max_depth < 0) rd.errors.push_back(where + ".max_depth must be >= 0");
}

}  // namespace detail

/// Parses and validates a JSON run configuration. Every violation is
/// reported in one ConfigError.
inline RunConfig parse_run_config(const std::string& text) {
  using detail::json;
  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  detail::ConfigReader rd;
  RunConfig cfg;
  rd.reject_unknown(root, "config",
                    {"datasets", "estimators", "learners", "repetitions", "split", "seed", "propensity_floor",
                     "truth", "moment_source", "output_dir", "format", "simulation", "verify", "lasso", "logistic",
                     "forest"});
  if (!root.is_object()) throw ConfigError("config: expected a JSON object");

  if (root.contains("datasets")) {
    const json& ds = root["datasets"];
    if (!ds.is_array()) {
      rd.errors.push_back("datasets: expected an array");
    } else {
      for (std::size_t i = 0; i < ds.size(); ++i) {
        const std::string where = "datasets[" + std::to_string(i) + "]";
        DatasetEntry entry;
        if (ds[i].is_string()) {
          entry.path = ds[i].get<std::string>();
        } else {
          rd.reject_unknown(ds[i], where, {"path", "n_treatments"});
          rd.read(ds[i], "path", entry.path, where);
          rd.read(ds[i], "n_treatments", entry.n_treatments, where);
          if (entry.path.empty()) rd.errors.push_back(where + ": path is required");
        }
        cfg.datasets.push_back(entry);
      }
    }
  }

  // Learner hyper-parameters shared by every combination.
  RegressorSpec reg;
  ClassifierSpec cls;
  ForestOptions forest;
  if (root.contains("lasso")) {
    rd.reject_unknown(root["lasso"], "lasso", {"lambda_grid", "cv_folds", "max_iter", "tol"});
    rd.read(root["lasso"], "lambda_grid", reg.lambda_grid, "lasso");
    rd.read(root["lasso"], "cv_folds", reg.cv_folds, "lasso");
    rd.read(root["lasso"], "max_iter", reg.max_iter, "lasso");
    rd.read(root["lasso"], "tol", reg.tol, "lasso");
    if (reg.lambda_grid.empty()) rd.errors.push_back("lasso.lambda_grid must not be empty");
    for (double l : reg.lambda_grid)
      if (!(l >= 0)) rd.errors.push_back("lasso.lambda_grid entries must be >= 0");
  }
  if (root.contains("logistic")) {
    rd.reject_unknown(root["logistic"], "logistic", {"l2", "max_iter", "tol"});
    rd.read(root["logistic"], "l2", cls.l2, "logistic");
    rd.read(root["logistic"], "max_iter", cls.max_iter, "logistic");
    rd.read(root["logistic"], "tol", cls.tol, "logistic");
    if (!(cls.l2 >= 0)) rd.errors.push_back("logistic.l2 must be >= 0");
  }
  if (root.contains("forest")) detail::parse_forest(root["forest"], forest, rd, "forest");
  reg.forest = forest;
  cls.forest = forest;

  rd.read(root, "propensity_floor", cfg.propensity_floor, "config");
  if (!(cfg.propensity_floor >= 0 && cfg.propensity_floor < 0.5))
    rd.errors.push_back("propensity_floor must lie in [0, 0.5)");

  if (root.contains("estimators")) {
    const json& es = root["estimators"];
    if (!es.is_array()) {
      rd.errors.push_back("estimators: expected an array");
    } else {
      for (std::size_t i = 0; i < es.size(); ++i)
        if (auto spec = detail::parse_estimator(es[i], rd, "estimators[" + std::to_string(i) + "]"))
          cfg.estimators.push_back(*spec);
    }
  } else {
    cfg.estimators = {{EstimatorKind::dr, 0, 0}, {EstimatorKind::dml, 0, 0}, {EstimatorKind::higher_order, 2, 2}};
  }

  const auto add_learner = [&](const std::string& outcome, const std::string& propensity, double noise,
                               const std::string& where) {
    LearnerSpec l;
    l.regressor = reg;
    l.classifier = cls;
    l.propensity_floor = cfg.propensity_floor;
    l.propensity_noise_sd = noise;
    if (outcome == "lasso") l.outcome = OutcomeLearner::lasso;
    else if (outcome == "rf") l.outcome = OutcomeLearner::forest;
    else if (outcome == "oracle") l.outcome = OutcomeLearner::oracle;
    else rd.errors.push_back(where + ": outcome learner must be lasso, rf or oracle");
    if (propensity == "lr") l.propensity = PropensityLearner::logistic;
    else if (propensity == "rf") l.propensity = PropensityLearner::forest;
    else if (propensity == "oracle") l.propensity = PropensityLearner::oracle;
    else rd.errors.push_back(where + ": propensity learner must be lr, rf or oracle");
    if (!(noise >= 0)) rd.errors.push_back(where + ": propensity_noise_sd must be >= 0");
    cfg.learners.push_back(l);
  };
  if (root.contains("learners")) {
    const json& ls = root["learners"];
    if (!ls.is_array()) {
      rd.errors.push_back("learners: expected an array");
    } else {
      for (std::size_t i = 0; i < ls.size(); ++i) {
        const std::string where = "learners[" + std::to_string(i) + "]";
        rd.reject_unknown(ls[i], where, {"outcome", "propensity", "propensity_noise_sd"});
        std::string o = "lasso", p = "lr";
        double noise = 0.0;
        rd.read(ls[i], "outcome", o, where);
        rd.read(ls[i], "propensity", p, where);
        rd.read(ls[i], "propensity_noise_sd", noise, where);
        add_learner(o, p, noise, where);
      }
    }
  } else {
    add_learner("lasso", "lr", 0.0, "learners");
  }

  rd.read(root, "repetitions", cfg.repetitions, "config");
  if (cfg.repetitions < 1) rd.errors.push_back("repetitions must be >= 1");
  rd.read(root, "seed", cfg.seed, "config");
  rd.read(root, "output_dir", cfg.output_dir, "config");
  rd.read(root, "format", cfg.format, "config");
  if (cfg.format != "csv" && cfg.format != "json") rd.errors.push_back("format must be csv or json");

  if (root.contains("split")) {
    rd.reject_unknown(root["split"], "split", {"train", "valid", "test"});
    rd.read(root["split"], "train", cfg.split.train, "split");
    rd.read(root["split"], "valid", cfg.split.valid, "split");
    rd.read(root["split"], "test", cfg.split.test, "split");
    if (!(cfg.split.train > 0 && cfg.split.valid > 0 && cfg.split.test > 0))
      rd.errors.push_back("split ratios must be positive");
    if (std::abs(cfg.split.train + cfg.split.valid + cfg.split.test - 1.0) > 1e-9)
      rd.errors.push_back("split ratios must sum to 1");
  }

  std::string truth = "estimation_fold";
  rd.read(root, "truth", truth, "config");
  if (truth == "estimation_fold") cfg.truth = TruthMode::estimation_fold;
  else if (truth == "full_sample") cfg.truth = TruthMode::full_sample;
  else if (truth == "population") cfg.truth = TruthMode::population;
  else rd.errors.push_back("truth must be estimation_fold, full_sample or population");

  std::string msrc = "estimation_fold";
  rd.read(root, "moment_source", msrc, "config");
  if (msrc == "estimation_fold") cfg.moment_source = MomentSource::estimation_fold;
  else if (msrc == "training_fold") cfg.moment_source = MomentSource::training_fold;
  else rd.errors.push_back("moment_source must be estimation_fold or training_fold");

  if (root.contains("simulation")) {
    const json& s = root["simulation"];
    auto& sim = cfg.simulation;
    rd.reject_unknown(s, "simulation",
                      {"n_treatments", "p", "r_c", "q", "m", "seed", "noise_sd", "grids", "redraw_params_per_replication"});
    rd.read(s, "n_treatments", sim.n_treatments, "simulation");
    rd.read(s, "p", sim.p, "simulation");
    rd.read(s, "r_c", sim.r_c, "simulation");
    rd.read(s, "q", sim.q, "simulation");
    rd.read(s, "m", sim.m, "simulation");
    rd.read(s, "seed", sim.seed, "simulation");
    rd.read(s, "noise_sd", sim.noise_sd, "simulation");
    rd.read(s, "redraw_params_per_replication", sim.redraw_params_per_replication, "simulation");
    if (sim.n_treatments < 2) rd.errors.push_back("simulation.n_treatments must be >= 2");
    if (sim.p < 1) rd.errors.push_back("simulation.p must be >= 1");
    if (sim.m < 1) rd.errors.push_back("simulation.m must be >= 1");
    if (!sim.noise_sd.empty() && sim.noise_sd.size() != static_cast<std::size_t>(sim.n_treatments))
      rd.errors.push_back("simulation.noise_sd needs one entry per treatment");
    if (s.is_object() && s.contains("grids")) {
      const json& g = s["grids"];
      rd.reject_unknown(g, "simulation.grids", {"confounding", "dimension", "samplesize"});
      if (g.is_object())
        for (const auto& [key, val] : g.items()) {
          const auto kind = detail::parse_sweep_kind(key);
          if (!kind) continue;
          std::vector<double> grid;
          rd.read(g, key.c_str(), grid, "simulation.grids");
          if (grid.empty()) rd.errors.push_back("simulation.grids." + key + " must not be empty");
          sim.grids[*kind] = grid;
        }
    }
  }

  if (root.contains("verify")) {
    const json& v = root["verify"];
    auto& ver = cfg.verify;
    rd.reject_unknown(v, "verify",
                      {"coefficients", "bernoulli_pi", "random_moment_sets", "orthogonality", "n_draws", "epsilon", "seed"});
    if (v.is_object() && v.contains("coefficients")) {
      std::vector<std::vector<int>> orders;
      rd.read(v, "coefficients", orders, "verify");
      for (const auto& o : orders) {
        if (o.size() != 2) {
          rd.errors.push_back("verify.coefficients entries must be [r, k] pairs");
          continue;
        }
        if (o[1] < 2 || o[1] > o[0])
          rd.errors.push_back("verify.coefficients: (r,k)=(" + std::to_string(o[0]) + "," + std::to_string(o[1]) +
                              "): k must satisfy 2 <= k <= r");
        ver.coefficient_orders.emplace_back(o[0], o[1]);
      }
    }
    rd.read(v, "bernoulli_pi", ver.bernoulli_pi, "verify");
    rd.read(v, "random_moment_sets", ver.random_moment_sets, "verify");
    rd.read(v, "n_draws", ver.n_draws, "verify");
    rd.read(v, "epsilon", ver.epsilon, "verify");
    rd.read(v, "seed", ver.seed, "verify");
    if (!(ver.bernoulli_pi > 0 && ver.bernoulli_pi < 1)) rd.errors.push_back("verify.bernoulli_pi must lie in (0, 1)");
    if (v.is_object() && v.contains("orthogonality")) {
      const json& os = v["orthogonality"];
      if (!os.is_array()) {
        rd.errors.push_back("verify.orthogonality: expected an array");
      } else {
        for (std::size_t i = 0; i < os.size(); ++i) {
          const std::string where = "verify.orthogonality[" + std::to_string(i) + "]";
          rd.reject_unknown(os[i], where, {"kind", "r", "k", "order", "first_order_only"});
          json est = json::object();
          for (const char* key : {"kind", "r", "k"})
            if (os[i].is_object() && os[i].contains(key)) est[key] = os[i][key];
          VerifySection::ScoreCheck check;
          if (auto spec = detail::parse_estimator(est, rd, where)) {
            if (spec->kind == EstimatorKind::dr) rd.errors.push_back(where + ": dr has no score to check");
            check.score = *spec;
          }
          rd.read(os[i], "order", check.order, where);
          rd.read(os[i], "first_order_only", check.first_order_only, where);
          if (check.order < 1) rd.errors.push_back(where + ": order must be >= 1");
          ver.orthogonality.push_back(check);
        }
      }
    }
  }

  if (!rd.errors.empty()) {
    std::string msg = "invalid config (" + std::to_string(rd.errors.size()) + " problem(s)):";
    for (const auto& e : rd.errors) msg += "\n  - " + e;
    throw ConfigError(msg);
  }
  return cfg;
}

inline RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_run_config(ss.str());
}

}  // namespace orthoate
