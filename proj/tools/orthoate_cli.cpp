// orthoate_cli: simulate / sweep / estimate / verify front end.
//
// Exit codes: 0 success, 1 configuration or usage error, 2 partial failure
// (some dataset, learner or estimator failed; other results are written),
// 3 verification failure.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>

#include "orthoate/dataio.hpp"
#include "orthoate/orthogonality.hpp"
#include "orthoate/report.hpp"
#include "orthoate/simulation.hpp"

namespace fs = std::filesystem;
using namespace orthoate;

namespace {

constexpr int kExitConfig = 1;
constexpr int kExitPartial = 2;
constexpr int kExitVerify = 3;

struct Options {
  std::string config;
  std::string out;
  std::string format;
  std::string sweep;
  std::optional<std::uint64_t> seed;
  std::optional<double> floor;
  bool filter_infinite = false;
};

struct Loaded {
  RunConfig cfg;
  fs::path base_dir;  // relative dataset paths resolve against the config file
  std::string out_dir;
};

Loaded load(const Options& o) {
  Loaded l;
  l.cfg = load_run_config(o.config);
  l.base_dir = fs::path(o.config).parent_path();
  if (o.seed) l.cfg.seed = *o.seed;
  if (o.floor) {
    if (!(*o.floor >= 0 && *o.floor < 0.5)) throw ConfigError("--propensity-floor must lie in [0, 0.5)");
    l.cfg.propensity_floor = *o.floor;
    for (auto& learner : l.cfg.learners) learner.propensity_floor = *o.floor;
  }
  if (!o.format.empty()) l.cfg.format = o.format;
  parse_report_format(l.cfg.format);
  l.out_dir = o.out.empty() ? l.cfg.output_dir : o.out;
  std::error_code ec;
  fs::create_directories(l.out_dir, ec);
  if (ec) throw IoError("cannot create output directory " + l.out_dir + ": " + ec.message());
  return l;
}

std::string out_path(const Loaded& l, const std::string& name) { return (fs::path(l.out_dir) / name).string(); }

SimConfig sim_config(const SimulationSection& s) {
  SimConfig cfg = make_sim_config(s.n_treatments, s.p, s.r_c, s.q, s.m, s.seed);
  if (!s.noise_sd.empty()) cfg.noise_sd = s.noise_sd;
  cfg.validate();
  return cfg;
}

// ---------------------------------------------------------------------------
// simulate

int cmd_simulate(const Options& o) {
  const Loaded l = load(o);
  const SimConfig cfg = sim_config(l.cfg.simulation);
  std::vector<std::string> files;
  for (int m = 0; m < cfg.m; ++m) {
    const auto [ds, truth] = generate_dataset(cfg, static_cast<std::uint64_t>(m));
    char name[32];
    std::snprintf(name, sizeof name, "sim_%03d.csv", m);
    std::ostringstream csv;
    write_csv_dataset(ds, csv);
    detail::write_file(out_path(l, name), csv.str());
    files.push_back(name);
  }
  std::cout << "wrote " << files.size() << " datasets (Q=" << cfg.q << ", p=" << cfg.p << ", r_c=" << cfg.r_c
            << ", treatments=" << cfg.n_treatments << ") to " << l.out_dir << "\n";
  for (int i = 0; i < cfg.n_treatments; ++i)
    std::cout << "  theta_" << i << " (population) = " << format_number(population_theta(cfg.params, i)) << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// sweep

std::vector<double> default_grid(SweepKind k) {
  switch (k) {
    case SweepKind::confounding: return {0.25, 0.5, 0.75, 1.0};
    case SweepKind::dimension: return {2, 4, 8, 16};
    default: return {1000, 2000, 4000, 8000};
  }
}

int cmd_sweep(const Options& o) {
  const auto kind = detail::parse_sweep_kind(o.sweep);
  if (!kind) throw ConfigError("unknown sweep '" + o.sweep + "' (expected confounding, dimension or samplesize)");
  const Loaded l = load(o);
  const auto& sim = l.cfg.simulation;
  SimConfig base = sim_config(sim);
  SweepOptions opt;
  const auto it = sim.grids.find(*kind);
  opt.grid = it != sim.grids.end() ? it->second : default_grid(*kind);
  opt.ratios = l.cfg.split;
  opt.repetitions = l.cfg.repetitions;
  opt.truth = l.cfg.truth;
  opt.redraw_params_per_replication = sim.redraw_params_per_replication;
  // Validate every grid point before any work starts.
  for (double v : opt.grid) {
    SimConfig c = base;
    if (*kind == SweepKind::confounding) c.r_c = v;
    if (*kind == SweepKind::dimension) c.p = static_cast<int>(std::lround(v));
    try {
      c.params = draw_default_params(c.p, c.r_c, c.n_treatments, 1);
    } catch (const Error& e) {
      throw ConfigError("grid value " + format_number(v) + ": " + e.what());
    }
  }

  const SweepReport rep = run_sweep(base, *kind, opt, l.cfg.estimators, l.cfg.learners);
  const std::string stem = "sweep_" + to_string(*kind);
  write_sweep(rep, out_path(l, stem + ".csv"), out_path(l, stem + "_summary.json"));

  std::cout << to_string(*kind) << " sweep, M=" << base.m << ", R=" << opt.repetitions << "\n";
  std::cout << "grid_value  learner  estimator  median_eps  mean_eps  inf  failed\n";
  std::size_t failed = 0;
  for (const auto& s : rep.summarize()) {
    std::cout << format_number(s.grid_value) << "  " << s.learner << "  " << s.estimator << "  "
              << format_number(s.median) << "  " << format_number(s.mean) << "  " << s.n_infinite << "  "
              << s.n_failed << "\n";
    failed += s.n_failed;
  }
  std::cout << "wrote " << out_path(l, stem + ".csv") << "\n";
  return failed > 0 ? kExitPartial : 0;
}

// ---------------------------------------------------------------------------
// estimate

struct DatasetJob {
  std::string name;
  std::string path;
  int n_treatments = 0;
};

std::vector<EstimateRecord> run_dataset(const Loaded& l, const DatasetJob& job, std::size_t index) {
  const RunConfig& cfg = l.cfg;
  std::vector<EstimateRecord> out;
  const auto fail_all = [&](const std::string& learner, const std::string& msg) {
    for (const auto& spec : cfg.estimators) {
      EstimateRecord rec;
      rec.dataset = job.name;
      rec.learner = learner;
      rec.report.estimator = spec;
      rec.error = msg;
      out.push_back(rec);
    }
  };

  Dataset ds;
  SplitPlan split;
  std::optional<AteMatrix> truth;
  try {
    ds = load_csv_dataset(job.path, CsvSchema{.n_treatments = job.n_treatments});
    split = make_split(ds.size(), cfg.split, stream_seed(cfg.seed, {index, 0}));
    if (ds.truth) {
      switch (cfg.truth) {
        case TruthMode::estimation_fold: truth = pairwise_ate(sample_truth(ds, split.estimation_idx)); break;
        case TruthMode::full_sample: {
          std::vector<std::size_t> all(ds.size());
          std::iota(all.begin(), all.end(), std::size_t{0});
          truth = pairwise_ate(sample_truth(ds, all));
          break;
        }
        case TruthMode::population: throw SchemaError("truth 'population' needs a simulated design");
      }
    }
  } catch (const Error& e) {
    for (const auto& learner : cfg.learners) fail_all(learner.label(), e.what());
    return out;
  }

  for (std::size_t li = 0; li < cfg.learners.size(); ++li) {
    const LearnerSpec& learner = cfg.learners[li];
    const std::uint64_t seed = stream_seed(cfg.seed, {index, 1, li});
    FoldPredictions fp;
    std::vector<int> d_train;
    ProbabilityMatrix pi_train;
    try {
      const NuisanceFits fits = build_fits(learner, ds, split, nullptr, seed);
      fp = predict_fold(ds, split, fits);
      if (cfg.moment_source == MomentSource::training_fold) {
        d_train = select<int>(ds.d, split.training_idx);
        pi_train = fits.propensity->predict(ds.z.select_rows(split.training_idx));
        apply_propensity_floor(pi_train, fits.propensity_floor);
      }
    } catch (const Error& e) {
      fail_all(learner.label(), e.what());
      continue;
    }
    for (const auto& spec : cfg.estimators) {
      EstimateRecord rec;
      rec.dataset = job.name;
      rec.learner = learner.label();
      rec.report.estimator = spec;
      try {
        if (spec.kind == EstimatorKind::higher_order) {
          HigherOrderOptions opt;
          opt.r = spec.r;
          opt.k = spec.k;
          opt.repetitions = cfg.repetitions;
          opt.seed = stream_seed(seed, {2});
          opt.moment_source = cfg.moment_source;
          rec.report = cfg.moment_source == MomentSource::training_fold
                           ? estimate_higher_order(fp, opt, &d_train, &pi_train)
                           : estimate_higher_order(fp, opt);
        } else {
          rec.report = run_estimator(fp, spec, cfg.repetitions, 0);
        }
        if (truth) {
          if (!rec.report.finite())
            rec.eps_ate = std::numeric_limits<double>::infinity();
          else
            rec.eps_ate = epsilon_ate(std::span<const AteMatrix>(&rec.report.ate_pairwise, 1),
                                      std::span<const AteMatrix>(&*truth, 1));
        }
      } catch (const Error& e) {
        rec.error = e.what();
      }
      out.push_back(std::move(rec));
    }
  }
  return out;
}

int cmd_estimate(const Options& o) {
  const Loaded l = load(o);
  if (l.cfg.datasets.empty()) throw ConfigError("estimate needs at least one entry in 'datasets'");
  if (l.cfg.estimators.empty()) throw ConfigError("estimate needs at least one estimator");
  std::vector<DatasetJob> jobs;
  for (const auto& d : l.cfg.datasets) {
    fs::path p(d.path);
    if (p.is_relative()) p = l.base_dir / p;
    jobs.push_back({d.path, p.string(), d.n_treatments});
  }

  std::vector<std::vector<EstimateRecord>> slots(jobs.size());
  parallel_for(jobs.size(), resolve_workers(0), [&](std::size_t j) { slots[j] = run_dataset(l, jobs[j], j); });

  std::vector<EstimateRecord> records;
  for (auto& s : slots) records.insert(records.end(), std::make_move_iterator(s.begin()), std::make_move_iterator(s.end()));
  const ReportFormat fmt = parse_report_format(l.cfg.format);
  const std::string ext = fmt == ReportFormat::csv ? ".csv" : ".json";
  write_report(records, out_path(l, "estimates" + ext), fmt);
  const ComparisonTable table = build_comparison(records, o.filter_infinite);
  detail::write_file(out_path(l, "comparison" + ext), fmt == ReportFormat::csv ? comparison_csv(table) : comparison_json(table));

  std::size_t failures = 0;
  for (const auto& rec : records) {
    if (rec.error.empty()) continue;
    ++failures;
    std::cerr << "error: " << rec.dataset << " / " << rec.learner << " / " << rec.report.estimator.label() << ": "
              << rec.error << "\n";
  }
  for (const auto& rec : records) {
    if (!rec.error.empty()) continue;
    std::cout << rec.dataset << "  " << rec.learner << "  " << rec.report.estimator.label() << "  theta=";
    for (std::size_t i = 0; i < rec.report.theta.size(); ++i)
      std::cout << (i ? "," : "") << format_number(rec.report.theta[i]);
    if (rec.eps_ate) std::cout << "  eps_ate=" << format_number(*rec.eps_ate);
    if (rec.report.diagnostics.floored_propensities)
      std::cout << "  floored=" << rec.report.diagnostics.floored_propensities;
    std::cout << "\n";
  }
  std::cout << "\n" << render_comparison(table);
  std::cout << "wrote " << out_path(l, "estimates" + ext) << " and " << out_path(l, "comparison" + ext) << "\n";
  return failures > 0 ? kExitPartial : 0;
}

// ---------------------------------------------------------------------------
// verify

constexpr double kCoefficientTolerance = 1e-9;

/// Returns true when every (r, k) pair passes.
bool verify_coefficients(const Loaded& l) {
  const VerifySection& v = l.cfg.verify;
  if (v.coefficient_orders.empty()) throw ConfigError("verify.coefficients lists no (r,k) pairs");
  std::ostringstream csv;
  csv << "schema_version,r,k,moment_set,bar_b_r_recursion,bar_b_r_oracle,max_rel_diff,pass,error\n";
  bool all = true;
  std::cout << "coefficients (recursion vs direct solve, tolerance " << format_number(kCoefficientTolerance) << ")\n";
  for (const auto& [r, k] : v.coefficient_orders) {
    const int q = std::max(r, k - 1);
    std::vector<std::pair<std::string, Moments>> sets;
    sets.emplace_back("bernoulli", bernoulli_residual_moments(v.bernoulli_pi, q));
    Rng rng = make_stream(v.seed, {static_cast<std::uint64_t>(r), static_cast<std::uint64_t>(k)});
    for (int s = 0; s < v.random_moment_sets; ++s)
      sets.emplace_back("mixture" + std::to_string(s), random_mixture_moments(rng, q, r));
    double worst = 0.0;
    bool ok = true;
    for (const auto& [name, m] : sets) {
      std::string err;
      double diff = 0.0, rec_b = std::nan(""), ora_b = std::nan("");
      try {
        const OrthoCoefficients a = compute_coefficients(r, k, m);
        const OrthoCoefficients b = solve_coefficients_oracle(r, k, m);
        diff = coefficient_rel_diff(a, b);
        rec_b = a.bar_b_r;
        ora_b = b.bar_b_r;
      } catch (const Error& e) {
        err = e.what();
      }
      const bool pass = err.empty() && diff <= kCoefficientTolerance;
      ok = ok && pass;
      worst = std::max(worst, diff);
      csv << kReportSchemaVersion << ',' << r << ',' << k << ',' << name << ',' << format_number(rec_b) << ','
          << format_number(ora_b) << ',' << format_number(diff) << ',' << pass << ',' << detail::csv_text(err) << '\n';
    }
    std::cout << "  (" << r << "," << k << ")  " << sets.size() << " moment sets  max_rel_diff="
              << format_number(worst) << "  " << (ok ? "PASS" : "FAIL") << "\n";
    all = all && ok;
  }
  detail::write_file(out_path(l, "verify_coefficients.csv"), csv.str());
  return all;
}

bool verify_orthogonality(const Loaded& l) {
  const VerifySection& v = l.cfg.verify;
  const BinaryQuadraticModel model;
  std::ostringstream csv;
  csv << "schema_version,score,alpha_g,alpha_a,dir_g,dir_a,estimate,std_error,analytic_zero,violation,judged\n";
  bool all = true;
  std::cout << "orthogonality (Monte-Carlo Gateaux derivatives, " << v.n_draws << " draws, violation = |est| > 3 SE)\n";
  for (const auto& check : v.orthogonality) {
    ScoreFunction score = DmlScore{};
    if (check.score.kind == EstimatorKind::higher_order) {
      const Moments m = model.residual_moments(std::max(check.score.r, check.score.k - 1));
      score = HigherOrderScore{compute_coefficients(check.score.r, check.score.k, m), m};
    }
    OrthogonalityOptions opt;
    opt.order = check.order;
    opt.n_draws = v.n_draws;
    opt.epsilon = v.epsilon;
    opt.seed = v.seed;
    const OrthogonalityReport rep = check_orthogonality(score, model, opt);
    const int judged_up_to = check.first_order_only ? 1 : check.order;
    const bool ok = !rep.any_violation_up_to(judged_up_to);
    all = all && ok;
    std::cout << "  " << rep.score << "  order<=" << check.order << (check.first_order_only ? " (judged: order 1)" : "")
              << "  " << (ok ? "PASS" : "FAIL") << "\n";
    for (const auto& d : rep.derivatives) {
      const bool judged = d.alpha_g + d.alpha_a <= judged_up_to;
      csv << kReportSchemaVersion << ',' << detail::csv_text(rep.score) << ',' << d.alpha_g << ',' << d.alpha_a << ','
          << direction_name(d.dir_g) << ',' << direction_name(d.dir_a) << ',' << format_number(d.estimate) << ','
          << format_number(d.std_error) << ',' << d.analytic_zero << ',' << d.violation << ',' << judged << '\n';
      if (d.analytic_zero) continue;
      std::printf("    alpha=(%d,%d) %-8s %-8s est=% .5f se=%.5f %s\n", d.alpha_g, d.alpha_a,
                  direction_name(d.dir_g).c_str(), direction_name(d.dir_a).c_str(), d.estimate, d.std_error,
                  d.violation ? (judged ? "VIOLATION" : "violation (expected)") : "ok");
    }
    std::fflush(stdout);
  }
  detail::write_file(out_path(l, "verify_orthogonality.csv"), csv.str());
  return all;
}

int cmd_verify(const Options& o, bool coefficients, bool orthogonality) {
  const Loaded l = load(o);
  if (coefficients && l.cfg.verify.coefficient_orders.empty())
    throw ConfigError("verify.coefficients lists no (r,k) pairs");
  if (orthogonality && !coefficients && l.cfg.verify.orthogonality.empty())
    throw ConfigError("verify.orthogonality lists no scores");
  bool ok = true;
  if (coefficients) ok = verify_coefficients(l) && ok;
  if (orthogonality) ok = verify_orthogonality(l) && ok;
  std::cout << (ok ? "verification passed" : "verification FAILED") << "\n";
  return ok ? 0 : kExitVerify;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Higher-order orthogonal ATE estimation"};
  app.require_subcommand(1);
  Options o;

  const auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", o.config, "JSON run configuration")->required()->check(CLI::ExistingFile);
    sub->add_option("--out", o.out, "output directory (overrides output_dir)");
  };
  auto* simulate = app.add_subcommand("simulate", "write simulated datasets with truth columns");
  add_common(simulate);
  auto* sweep = app.add_subcommand("sweep", "run a simulation sweep");
  add_common(sweep);
  sweep->add_option("--sweep", o.sweep, "confounding, dimension or samplesize")->required();
  auto* estimate = app.add_subcommand("estimate", "estimate treatment effects on dataset files");
  add_common(estimate);
  estimate->add_flag("--filter-infinite", o.filter_infinite, "drop datasets where DML is infinite from the aggregate");
  estimate->add_option("--propensity-floor", o.floor, "clip propensities to [f, 1 - f] and renormalize");
  estimate->add_option("--seed", o.seed, "master seed");
  estimate->add_option("--format", o.format, "csv or json");
  auto* verify = app.add_subcommand("verify", "check score coefficients and orthogonality");
  add_common(verify);
  auto* verify_coef = app.add_subcommand("verify-coefficients", "check score coefficients only");
  add_common(verify_coef);
  auto* verify_orth = app.add_subcommand("verify-orthogonality", "check score orthogonality only");
  add_common(verify_orth);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  }

  try {
    if (simulate->parsed()) return cmd_simulate(o);
    if (sweep->parsed()) return cmd_sweep(o);
    if (estimate->parsed()) return cmd_estimate(o);
    if (verify->parsed()) return cmd_verify(o, true, true);
    if (verify_coef->parsed()) return cmd_verify(o, true, false);
    if (verify_orth->parsed()) return cmd_verify(o, false, true);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const ParseError& e) {
    std::cerr << "input error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const SchemaError& e) {
    std::cerr << "input error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const IoError& e) {
    std::cerr << "io error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitPartial;
  }
  return kExitConfig;
}
