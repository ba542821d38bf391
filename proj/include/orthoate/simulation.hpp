#pragma once

// Simulation design with known ground truth: Gaussian covariates, softmax
// treatment assignment on the first p * r_c covariates, and quadratic
// potential outcomes Y^i = e^{sqrt(d_i)} (a_i'Z + 1)^2 + xi^i.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <limits>
#include <memory>
#include <numeric>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "orthoate/error.hpp"
#include "orthoate/estimators.hpp"
#include "orthoate/matrix.hpp"
#include "orthoate/nuisance/nuisance.hpp"
#include "orthoate/random.hpp"

namespace orthoate {

struct SimParams {
  FeatureMatrix beta;            // n_treatments x (p * r_c)
  FeatureMatrix outcome_coeffs;  // n_treatments x p
  std::vector<double> d_levels;
};

struct SimConfig {
  int n_treatments = 3;
  int p = 2;
  double r_c = 1.0;
  std::size_t q = 4000;  // observations per dataset
  int m = 20;            // replications
  std::vector<double> noise_sd{3.0, 2.0, 1.0};
  SimParams params;
  std::uint64_t master_seed = 2024;

  int n_confounders() const {
    const double v = p * r_c;
    const long rounded = std::lround(v);
    if (std::abs(v - static_cast<double>(rounded)) > 1e-9 || rounded < 1)
      throw InvalidArgument("p * r_c must be a positive integer");
    return static_cast<int>(rounded);
  }

  void validate() const {
    if (n_treatments < 2) throw InvalidArgument("need at least two treatments");
    if (p < 1) throw InvalidArgument("p must be >= 1");
    if (!(r_c > 0 && r_c <= 1)) throw InvalidArgument("r_c must lie in (0, 1]");
    const int nc = n_confounders();
    if (noise_sd.size() != static_cast<std::size_t>(n_treatments))
      throw ShapeMismatch("noise_sd needs one entry per treatment");
    for (double s : noise_sd)
      if (!(s > 0)) throw InvalidArgument("noise_sd must be positive");
    if (params.beta.rows() != static_cast<std::size_t>(n_treatments) || params.beta.cols() != static_cast<std::size_t>(nc))
      throw ShapeMismatch("beta must be n_treatments x (p * r_c)");
    if (params.outcome_coeffs.rows() != static_cast<std::size_t>(n_treatments) ||
        params.outcome_coeffs.cols() != static_cast<std::size_t>(p))
      throw ShapeMismatch("outcome_coeffs must be n_treatments x p");
    if (params.d_levels.size() != static_cast<std::size_t>(n_treatments))
      throw ShapeMismatch("d_levels needs one entry per treatment");
    for (double d : params.d_levels)
      if (!(d > 0)) throw InvalidArgument("d_levels must be positive");
  }
};

/// Default noise scales: sd (3, 2, 1) for three arms, linearly spaced from 3
/// to 1 otherwise.
inline std::vector<double> default_noise_sd(int n_treatments) {
  if (n_treatments == 3) return {3.0, 2.0, 1.0};
  std::vector<double> sd(static_cast<std::size_t>(n_treatments));
  for (int i = 0; i < n_treatments; ++i) sd[static_cast<std::size_t>(i)] = 3.0 - 2.0 * i / (n_treatments - 1);
  return sd;
}

/// beta ~ U(-0.1, 0.1), outcome coefficients ~ U(0.1, 0.5), d = (0.1, 0.5, 1)
/// for three arms (linearly spaced in [0.1, 1] otherwise).
inline SimParams draw_default_params(int p, double r_c, int n_treatments, std::uint64_t seed) {
  SimConfig shape;
  shape.p = p;
  shape.r_c = r_c;
  const int nc = shape.n_confounders();
  if (n_treatments < 2) throw InvalidArgument("need at least two treatments");

  SimParams prm;
  Rng rng = make_stream(seed, {0x9a7a});
  prm.beta = FeatureMatrix(static_cast<std::size_t>(n_treatments), static_cast<std::size_t>(nc));
  for (std::size_t i = 0; i < prm.beta.rows(); ++i)
    for (std::size_t j = 0; j < prm.beta.cols(); ++j) prm.beta(i, j) = uniform(rng, -0.1, 0.1);
  prm.outcome_coeffs = FeatureMatrix(static_cast<std::size_t>(n_treatments), static_cast<std::size_t>(p));
  for (std::size_t i = 0; i < prm.outcome_coeffs.rows(); ++i)
    for (std::size_t j = 0; j < prm.outcome_coeffs.cols(); ++j) prm.outcome_coeffs(i, j) = uniform(rng, 0.1, 0.5);
  if (n_treatments == 3) {
    prm.d_levels = {0.1, 0.5, 1.0};
  } else {
    for (int i = 0; i < n_treatments; ++i) prm.d_levels.push_back(0.1 + 0.9 * i / (n_treatments - 1));
  }
  return prm;
}

/// Config with default parameters drawn for the given shape.
inline SimConfig make_sim_config(int n_treatments, int p, double r_c, std::size_t q, int m, std::uint64_t seed) {
  SimConfig cfg;
  cfg.n_treatments = n_treatments;
  cfg.p = p;
  cfg.r_c = r_c;
  cfg.q = q;
  cfg.m = m;
  cfg.master_seed = seed;
  cfg.noise_sd = default_noise_sd(n_treatments);
  cfg.params = draw_default_params(p, r_c, n_treatments, stream_seed(seed, {0x9a4a}));
  return cfg;
}

/// True treatment probabilities for one covariate row.
inline std::vector<double> true_propensity(const SimParams& prm, std::span<const double> z) {
  const std::size_t n = prm.beta.rows();
  std::vector<double> logits(n);
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0.0;
    for (std::size_t k = 0; k < prm.beta.cols(); ++k) s += prm.beta(i, k) * z[k];
    logits[i] = s;
  }
  detail::softmax_row(logits);
  return logits;
}

inline double true_outcome_mean(const SimParams& prm, int treatment, std::span<const double> z) {
  const auto i = static_cast<std::size_t>(treatment);
  double s = 1.0;
  for (std::size_t j = 0; j < prm.outcome_coeffs.cols(); ++j) s += prm.outcome_coeffs(i, j) * z[j];
  return std::exp(std::sqrt(prm.d_levels[i])) * s * s;
}

/// E[g^i(Z)] = e^{sqrt(d_i)} (||a_i||^2 + 1).
inline double population_theta(const SimParams& prm, int treatment) {
  double norm2 = 0.0;
  for (std::size_t j = 0; j < prm.outcome_coeffs.cols(); ++j) {
    const double a = prm.outcome_coeffs(static_cast<std::size_t>(treatment), j);
    norm2 += a * a;
  }
  return std::exp(std::sqrt(prm.d_levels[static_cast<std::size_t>(treatment)])) * (norm2 + 1.0);
}

/// E[(1{D = i} - pi_i(Z))^q] for q = 1..max_order, averaging the exact
/// conditional Bernoulli moments over `n_draws` covariate draws.
inline Moments population_residual_moments(const SimParams& prm, int treatment, int max_order,
                                           std::size_t n_draws, std::uint64_t seed) {
  if (n_draws == 0) throw InvalidArgument("n_draws must be >= 1");
  const std::size_t dim = prm.outcome_coeffs.cols();
  std::vector<CompensatedSum> acc(static_cast<std::size_t>(max_order));
  std::vector<double> z(dim);
  Rng rng = make_stream(seed, {0x3011});
  for (std::size_t s = 0; s < n_draws; ++s) {
    for (double& v : z) v = standard_normal(rng);
    const double pi = true_propensity(prm, z)[static_cast<std::size_t>(treatment)];
    const Moments c = bernoulli_residual_moments(pi, max_order);
    for (int q = 1; q <= max_order; ++q) acc[static_cast<std::size_t>(q - 1)].add(c[q]);
  }
  std::vector<double> m(static_cast<std::size_t>(max_order));
  for (std::size_t q = 0; q < m.size(); ++q) m[q] = acc[q].value() / static_cast<double>(n_draws);
  return Moments(std::move(m));
}

/// Inverse-CDF draw from a probability vector.
inline int sample_treatment(std::span<const double> probs, double u) {
  double c = 0.0;
  for (std::size_t i = 0; i + 1 < probs.size(); ++i) {
    c += probs[i];
    if (u < c) return static_cast<int>(i);
  }
  return static_cast<int>(probs.size() - 1);
}

struct SimTruth {
  std::vector<double> theta;       // mean of potential_means columns over all rows
  FeatureMatrix potential_means;   // g^i(Z_m)
  FeatureMatrix potential_outcomes;  // Y^i_m including noise
  FeatureMatrix propensities;      // pi^i(Z_m)
};

/// Dataset `replication` of the design. Each unit owns three random
/// streams (covariates, assignment, noise) addressed by (seed, replication,
/// unit), so a dataset is a pure function of (cfg, replication).
inline std::pair<Dataset, SimTruth> generate_dataset(const SimConfig& cfg, std::uint64_t replication) {
  cfg.validate();
  const std::size_t q = cfg.q, p = static_cast<std::size_t>(cfg.p);
  const auto n = static_cast<std::size_t>(cfg.n_treatments);
  if (q == 0) throw InvalidArgument("Q must be >= 1");

  Dataset ds;
  ds.n_treatments = cfg.n_treatments;
  ds.y.resize(q);
  ds.d.resize(q);
  ds.z = FeatureMatrix(q, p);
  SimTruth truth;
  truth.potential_means = FeatureMatrix(q, n);
  truth.potential_outcomes = FeatureMatrix(q, n);
  truth.propensities = FeatureMatrix(q, n);

  for (std::size_t m = 0; m < q; ++m) {
    Rng rz = make_stream(cfg.master_seed, {replication, 0, m});
    Rng rd = make_stream(cfg.master_seed, {replication, 1, m});
    Rng rx = make_stream(cfg.master_seed, {replication, 2, m});
    auto z = ds.z.row(m);
    for (double& v : z) v = standard_normal(rz);
    const std::vector<double> probs = true_propensity(cfg.params, z);
    std::copy(probs.begin(), probs.end(), truth.propensities.row(m).begin());
    ds.d[m] = sample_treatment(probs, uniform01(rd));
    for (std::size_t i = 0; i < n; ++i) {
      const double g = true_outcome_mean(cfg.params, static_cast<int>(i), z);
      truth.potential_means(m, i) = g;
      truth.potential_outcomes(m, i) = g + cfg.noise_sd[i] * standard_normal(rx);
    }
    ds.y[m] = truth.potential_outcomes(m, static_cast<std::size_t>(ds.d[m]));
  }
  std::vector<std::size_t> all(q);
  std::iota(all.begin(), all.end(), std::size_t{0});
  ds.truth = truth.potential_means;
  truth.theta = sample_truth(ds, all);
  return {std::move(ds), std::move(truth)};
}

/// True g^i of the design as an outcome model.
class TrueOutcomeModel final : public OutcomeModel {
 public:
  TrueOutcomeModel(SimParams prm, int treatment) : prm_(std::move(prm)), treatment_(treatment) {}
  std::vector<double> predict(const FeatureMatrix& x) const override {
    std::vector<double> out(x.rows());
    for (std::size_t m = 0; m < x.rows(); ++m) out[m] = true_outcome_mean(prm_, treatment_, x.row(m));
    return out;
  }

 private:
  SimParams prm_;
  int treatment_;
};

/// True pi of the design as a propensity model.
class TruePropensityModel final : public PropensityModel {
 public:
  explicit TruePropensityModel(SimParams prm) : prm_(std::move(prm)) {}
  int n_treatments() const override { return static_cast<int>(prm_.beta.rows()); }
  ProbabilityMatrix predict(const FeatureMatrix& x) const override {
    ProbabilityMatrix out(x.rows(), prm_.beta.rows());
    for (std::size_t m = 0; m < x.rows(); ++m) {
      const auto probs = true_propensity(prm_, x.row(m));
      std::copy(probs.begin(), probs.end(), out.row(m).begin());
    }
    return out;
  }

 private:
  SimParams prm_;
};

inline NuisanceFits oracle_fits(const SimParams& prm) {
  NuisanceFits fits;
  for (std::size_t i = 0; i < prm.beta.rows(); ++i)
    fits.outcome.push_back(std::make_shared<TrueOutcomeModel>(prm, static_cast<int>(i)));
  fits.propensity = std::make_shared<TruePropensityModel>(prm);
  return fits;
}

// ---------------------------------------------------------------------------
// Sweeps

enum class SweepKind { confounding, dimension, samplesize };

inline std::string to_string(SweepKind k) {
  switch (k) {
    case SweepKind::confounding: return "confounding";
    case SweepKind::dimension: return "dimension";
    default: return "samplesize";
  }
}

enum class OutcomeLearner { lasso, forest, oracle };
enum class PropensityLearner { logistic, forest, oracle };

/// A nuisance combination ("A+B"), optionally with propensity corruption.
struct LearnerSpec {
  OutcomeLearner outcome = OutcomeLearner::lasso;
  PropensityLearner propensity = PropensityLearner::logistic;
  RegressorSpec regressor{};
  ClassifierSpec classifier{};
  double propensity_noise_sd = 0.0;  // logit-space Gaussian corruption
  double propensity_floor = 0.0;

  std::string label() const {
    const char* o = outcome == OutcomeLearner::lasso ? "lasso" : outcome == OutcomeLearner::forest ? "rf" : "oracle";
    const char* p = propensity == PropensityLearner::logistic ? "lr" : propensity == PropensityLearner::forest ? "rf" : "oracle";
    std::string s = std::string(o) + "+" + p;
    if (propensity_noise_sd > 0) s += "~noise" + std::to_string(propensity_noise_sd).substr(0, 4);
    return s;
  }
};

/// Builds fitted (or true) nuisances for one learner combination.
inline NuisanceFits build_fits(const LearnerSpec& spec, const Dataset& ds, const SplitPlan& split,
                               const SimParams* truth_params, std::uint64_t seed) {
  NuisanceFits fits;
  fits.propensity_floor = spec.propensity_floor;
  const bool need_truth = spec.outcome == OutcomeLearner::oracle || spec.propensity == PropensityLearner::oracle;
  if (need_truth && !truth_params) throw InvalidArgument("oracle learners need the true design parameters");

  const FeatureMatrix z_train = ds.z.select_rows(split.training_idx);
  const std::vector<int> d_train = select<int>(ds.d, split.training_idx);
  for (int i = 0; i < ds.n_treatments; ++i) {
    if (spec.outcome == OutcomeLearner::oracle) {
      fits.outcome.push_back(std::make_shared<TrueOutcomeModel>(*truth_params, i));
      continue;
    }
    std::vector<std::size_t> rows;
    for (std::size_t idx : split.training_idx)
      if (ds.d[idx] == i) rows.push_back(idx);
    if (rows.size() < 2) throw MissingClass("training fold lacks treatment " + std::to_string(i));
    RegressorSpec reg = spec.regressor;
    reg.kind = spec.outcome == OutcomeLearner::lasso ? RegressorKind::lasso : RegressorKind::forest;
    const std::vector<double> y_arm = select<double>(ds.y, rows);
    fits.outcome.push_back(std::make_shared<FittedOutcomeModel>(
        fit_regressor(reg, ds.z.select_rows(rows), y_arm, stream_seed(seed, {1, static_cast<std::uint64_t>(i)}))));
  }
  std::shared_ptr<const PropensityModel> prop;
  if (spec.propensity == PropensityLearner::oracle) {
    prop = std::make_shared<TruePropensityModel>(*truth_params);
  } else {
    ClassifierSpec cls = spec.classifier;
    cls.kind = spec.propensity == PropensityLearner::logistic ? ClassifierKind::logistic : ClassifierKind::forest;
    prop = std::make_shared<FittedPropensityModel>(
        fit_classifier(cls, z_train, d_train, ds.n_treatments, stream_seed(seed, {2})));
  }
  if (spec.propensity_noise_sd > 0)
    prop = std::make_shared<LogitNoisePropensityModel>(prop, spec.propensity_noise_sd, stream_seed(seed, {3}));
  fits.propensity = std::move(prop);
  return fits;
}

enum class TruthMode { estimation_fold, full_sample, population };

struct SweepOptions {
  std::vector<double> grid;
  SplitRatios ratios{};
  int repetitions = 100;  // R of the higher-order estimator
  TruthMode truth = TruthMode::estimation_fold;
  bool redraw_params_per_replication = false;
  int workers = 0;  // 0: ORTHOATE_WORKERS or hardware concurrency
};

struct SweepRow {
  double grid_value = 0.0;
  std::string learner;
  std::string estimator;
  int replication = 0;
  double eps_ate = 0.0;  // +inf when the estimate is infinite, NaN on failure
  bool infinite = false;
  std::string error;
};

struct SweepSummary {
  double grid_value = 0.0;
  std::string learner;
  std::string estimator;
  std::size_t count = 0;
  std::size_t n_infinite = 0;
  std::size_t n_failed = 0;
  double mean = 0.0;
  double median = 0.0;
  double mean_finite = 0.0;
};

struct SweepReport {
  SweepKind kind = SweepKind::samplesize;
  std::vector<SweepRow> rows;

  std::vector<SweepSummary> summarize() const;
  /// eps_ate values of one (grid value, learner, estimator) cell.
  std::vector<double> cell(double grid_value, const std::string& learner, const std::string& estimator) const {
    std::vector<double> out;
    for (const auto& r : rows)
      if (r.grid_value == grid_value && r.learner == learner && r.estimator == estimator) out.push_back(r.eps_ate);
    return out;
  }
};

inline double median_of(std::vector<double> v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(v.begin(), v.end());
  const std::size_t h = v.size() / 2;
  return v.size() % 2 ? v[h] : 0.5 * (v[h - 1] + v[h]);
}

inline std::vector<SweepSummary> SweepReport::summarize() const {
  std::vector<SweepSummary> out;
  for (const auto& r : rows) {
    const bool seen = std::any_of(out.begin(), out.end(), [&](const SweepSummary& s) {
      return s.grid_value == r.grid_value && s.learner == r.learner && s.estimator == r.estimator;
    });
    if (seen) continue;
    SweepSummary s;
    s.grid_value = r.grid_value;
    s.learner = r.learner;
    s.estimator = r.estimator;
    std::vector<double> ok, finite;
    for (const auto& x : rows) {
      if (x.grid_value != r.grid_value || x.learner != r.learner || x.estimator != r.estimator) continue;
      ++s.count;
      if (!x.error.empty()) {
        ++s.n_failed;
        continue;
      }
      ok.push_back(x.eps_ate);
      if (x.infinite || !std::isfinite(x.eps_ate))
        ++s.n_infinite;
      else
        finite.push_back(x.eps_ate);
    }
    s.mean = ok.empty() ? std::numeric_limits<double>::quiet_NaN() : mean(ok);
    s.median = median_of(ok);
    s.mean_finite = finite.empty() ? std::numeric_limits<double>::quiet_NaN() : mean(finite);
    out.push_back(s);
  }
  return out;
}

inline int resolve_workers(int requested) {
  if (requested > 0) return requested;
  if (const char* env = std::getenv("ORTHOATE_WORKERS")) {
    const int v = std::atoi(env);
    if (v > 0) return v;
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

/// Runs `jobs` indexed tasks on a bounded pool; each task writes only its
/// own slot, so results do not depend on scheduling.
template <typename Fn>
void parallel_for(std::size_t jobs, int workers, Fn&& fn) {
  const std::size_t w = std::min<std::size_t>(static_cast<std::size_t>(std::max(1, workers)), jobs);
  if (w <= 1) {
    for (std::size_t j = 0; j < jobs; ++j) fn(j);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < w; ++t)
    pool.emplace_back([&] {
      for (std::size_t j = next++; j < jobs; j = next++) fn(j);
    });
  for (auto& th : pool) th.join();
}

/// Evaluates every (learner, estimator) pair on M replications of every grid
/// point. Parameters are drawn once per grid point from the master seed
/// (so a sample-size sweep keeps one design), or per replication on request.
inline SweepReport run_sweep(const SimConfig& base, SweepKind kind, const SweepOptions& opt,
                             const std::vector<EstimatorSpec>& estimators,
                             const std::vector<LearnerSpec>& learners) {
  if (opt.grid.empty()) throw InvalidArgument("sweep grid is empty");
  if (estimators.empty() || learners.empty()) throw InvalidArgument("sweep needs estimators and learners");
  if (base.m < 1) throw InvalidArgument("M must be >= 1");

  struct Job {
    std::size_t grid_index;
    int replication;
  };
  std::vector<Job> jobs;
  std::vector<SimConfig> configs;
  for (std::size_t g = 0; g < opt.grid.size(); ++g) {
    SimConfig cfg = base;
    const double v = opt.grid[g];
    switch (kind) {
      case SweepKind::confounding: cfg.r_c = v; break;
      case SweepKind::dimension: cfg.p = static_cast<int>(std::lround(v)); break;
      case SweepKind::samplesize: cfg.q = static_cast<std::size_t>(std::llround(v)); break;
    }
    cfg.noise_sd = base.noise_sd;
    cfg.params = draw_default_params(cfg.p, cfg.r_c, cfg.n_treatments, stream_seed(base.master_seed, {0x9a4a}));
    cfg.validate();
    configs.push_back(cfg);
    for (int m = 0; m < base.m; ++m) jobs.push_back({g, m});
  }

  const std::size_t per_job = learners.size() * estimators.size();
  std::vector<SweepRow> rows(jobs.size() * per_job);
  parallel_for(jobs.size(), resolve_workers(opt.workers), [&](std::size_t j) {
    const Job& job = jobs[j];
    SimConfig cfg = configs[job.grid_index];
    const auto rep = static_cast<std::uint64_t>(job.replication);
    if (opt.redraw_params_per_replication)
      cfg.params = draw_default_params(cfg.p, cfg.r_c, cfg.n_treatments,
                                       stream_seed(base.master_seed, {0x9a4a, rep + 1}));
    const std::uint64_t job_seed = stream_seed(base.master_seed, {0x70b, job.grid_index, rep});

    std::string setup_error;
    Dataset ds;
    SplitPlan split;
    std::vector<double> theta_true;
    try {
      auto generated = generate_dataset(cfg, rep);
      ds = std::move(generated.first);
      split = make_split(ds.size(), opt.ratios, stream_seed(job_seed, {1}));
      switch (opt.truth) {
        case TruthMode::estimation_fold: theta_true = sample_truth(ds, split.estimation_idx); break;
        case TruthMode::full_sample: theta_true = generated.second.theta; break;
        case TruthMode::population:
          for (int i = 0; i < cfg.n_treatments; ++i) theta_true.push_back(population_theta(cfg.params, i));
          break;
      }
    } catch (const Error& e) {
      setup_error = e.what();
    }
    const AteMatrix truth = setup_error.empty() ? pairwise_ate(theta_true) : AteMatrix{};

    for (std::size_t l = 0; l < learners.size(); ++l) {
      std::optional<FoldPredictions> fp;
      std::string learner_error = setup_error;
      if (learner_error.empty()) {
        try {
          fp = predict_fold(ds, split, build_fits(learners[l], ds, split, &cfg.params, stream_seed(job_seed, {2, l})));
        } catch (const Error& e) {
          learner_error = e.what();
        }
      }
      for (std::size_t e = 0; e < estimators.size(); ++e) {
        SweepRow& row = rows[j * per_job + l * estimators.size() + e];
        row.grid_value = opt.grid[job.grid_index];
        row.learner = learners[l].label();
        row.estimator = estimators[e].label();
        row.replication = job.replication;
        row.error = learner_error;
        if (!learner_error.empty()) {
          row.eps_ate = std::numeric_limits<double>::quiet_NaN();
          continue;
        }
        try {
          const EstimateReport rep_e = run_estimator(*fp, estimators[e], opt.repetitions, stream_seed(job_seed, {3, l}));
          row.infinite = !rep_e.finite();
          if (row.infinite) {
            row.eps_ate = std::numeric_limits<double>::infinity();
          } else {
            const AteMatrix est = rep_e.ate_pairwise;
            row.eps_ate = epsilon_ate(std::span<const AteMatrix>(&est, 1), std::span<const AteMatrix>(&truth, 1));
          }
        } catch (const Error& err) {
          row.error = err.what();
          row.eps_ate = std::numeric_limits<double>::quiet_NaN();
        }
      }
    }
  });

  SweepReport report;
  report.kind = kind;
  report.rows = std::move(rows);
  return report;
}

}  // namespace orthoate
