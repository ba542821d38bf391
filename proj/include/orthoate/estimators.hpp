#pragma once

// Mean-potential-outcome estimators on a single (training, estimation)
// split: regression adjustment (DR), the first-order DML estimator and the
// higher-order estimator with counterfactual-residual resampling.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "orthoate/error.hpp"
#include "orthoate/matrix.hpp"
#include "orthoate/nuisance/nuisance.hpp"
#include "orthoate/numeric.hpp"
#include "orthoate/random.hpp"
#include "orthoate/score.hpp"

namespace orthoate {

/// Observations (y, d, Z); `truth`, when present, holds the per-unit true
/// conditional means mu_i(Z) of every treatment arm (n_rows x n_treatments).
struct Dataset {
  std::vector<double> y;
  std::vector<int> d;
  FeatureMatrix z;
  int n_treatments = 2;
  std::optional<FeatureMatrix> truth;

  std::size_t size() const noexcept { return y.size(); }

  void validate() const {
    if (n_treatments < 2) throw InvalidArgument("dataset needs at least two treatments");
    if (d.size() != y.size() || z.rows() != y.size())
      throw ShapeMismatch("dataset columns have different lengths");
    for (int v : d)
      if (v < 0 || v >= n_treatments) throw InvalidArgument("treatment label out of range");
    if (truth && (truth->rows() != y.size() || truth->cols() != static_cast<std::size_t>(n_treatments)))
      throw ShapeMismatch("truth must be n_rows x n_treatments");
  }
};

struct SplitRatios {
  double train = 0.56;
  double valid = 0.14;
  double test = 0.30;
};

/// Estimation fold (the test portion) and training fold (train + valid).
struct SplitPlan {
  std::vector<std::size_t> estimation_idx;
  std::vector<std::size_t> training_idx;
  std::uint64_t seed = 0;

  void validate(std::size_t n) const {
    if (estimation_idx.empty() || training_idx.empty()) throw EmptyFold("split has an empty fold");
    std::vector<char> seen(n, 0);
    for (const auto* fold : {&estimation_idx, &training_idx})
      for (std::size_t i : *fold) {
        if (i >= n) throw InvalidArgument("split index out of range");
        if (seen[i]) throw InvalidArgument("split folds overlap");
        seen[i] = 1;
      }
    for (char s : seen)
      if (!s) throw InvalidArgument("split does not cover the dataset");
  }
};

inline SplitPlan make_split(std::size_t n, const SplitRatios& ratios, std::uint64_t seed) {
  if (!(ratios.train > 0 && ratios.valid > 0 && ratios.test > 0))
    throw InvalidArgument("split ratios must be positive");
  if (std::abs(ratios.train + ratios.valid + ratios.test - 1.0) > 1e-9)
    throw InvalidArgument("split ratios must sum to 1");
  const auto n_test = static_cast<std::size_t>(std::llround(static_cast<double>(n) * ratios.test));
  const auto n_valid = static_cast<std::size_t>(std::llround(static_cast<double>(n) * ratios.valid));
  if (n_test == 0 || n_valid == 0 || n_test + n_valid >= n)
    throw EmptyFold("split of " + std::to_string(n) + " rows leaves an empty fold");

  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  Rng rng = make_stream(seed, {0x5b117});
  for (std::size_t i = n; i > 1; --i) std::swap(perm[i - 1], perm[uniform_index(rng, i)]);

  SplitPlan plan;
  plan.seed = seed;
  plan.estimation_idx.assign(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(n_test));
  plan.training_idx.assign(perm.begin() + static_cast<std::ptrdiff_t>(n_test), perm.end());
  std::sort(plan.estimation_idx.begin(), plan.estimation_idx.end());
  std::sort(plan.training_idx.begin(), plan.training_idx.end());
  return plan;
}

/// Fitted nuisances: one outcome model per treatment arm and a joint
/// propensity model.
struct NuisanceFits {
  std::vector<std::shared_ptr<const OutcomeModel>> outcome;
  std::shared_ptr<const PropensityModel> propensity;
  double propensity_floor = 0.0;
};

/// Trains every nuisance on the training fold only: the arm-i regressor on
/// training rows with d = i, the classifier on all training rows.
inline NuisanceFits fit_nuisances(const Dataset& ds, const SplitPlan& split,
                                  const RegressorSpec& reg, const ClassifierSpec& cls,
                                  std::uint64_t seed, double propensity_floor = 0.0) {
  ds.validate();
  NuisanceFits fits;
  fits.propensity_floor = propensity_floor;
  const FeatureMatrix z_train = ds.z.select_rows(split.training_idx);
  const std::vector<int> d_train = select<int>(ds.d, split.training_idx);
  for (int i = 0; i < ds.n_treatments; ++i) {
    std::vector<std::size_t> rows;
    for (std::size_t idx : split.training_idx)
      if (ds.d[idx] == i) rows.push_back(idx);
    if (rows.size() < 2)
      throw MissingClass("training fold has fewer than two units with treatment " + std::to_string(i));
    const std::vector<double> y_arm = select<double>(ds.y, rows);
    fits.outcome.push_back(std::make_shared<FittedOutcomeModel>(
        fit_regressor(reg, ds.z.select_rows(rows), y_arm, stream_seed(seed, {1, static_cast<std::uint64_t>(i)}))));
  }
  fits.propensity = std::make_shared<FittedPropensityModel>(
      fit_classifier(cls, z_train, d_train, ds.n_treatments, stream_seed(seed, {2})));
  return fits;
}

/// Everything the estimators need from the estimation fold: outcomes,
/// labels and nuisance predictions, in the order of split.estimation_idx.
struct FoldPredictions {
  std::vector<std::size_t> rows;  // dataset row of each position
  std::vector<double> y;
  std::vector<int> d;
  FeatureMatrix g_hat;   // n_I x n_treatments
  ProbabilityMatrix pi_hat;  // n_I x n_treatments, floored if requested
  std::size_t floored = 0;
  int n_treatments = 2;

  std::size_t size() const noexcept { return y.size(); }
};

inline FoldPredictions predict_fold(const Dataset& ds, const SplitPlan& split, const NuisanceFits& fits) {
  ds.validate();
  if (fits.outcome.size() != static_cast<std::size_t>(ds.n_treatments) || !fits.propensity)
    throw ShapeMismatch("nuisance fits do not match the number of treatments");
  if (fits.propensity->n_treatments() != ds.n_treatments)
    throw ShapeMismatch("propensity model treatment count mismatch");
  if (split.estimation_idx.empty()) throw EmptyFold("empty estimation fold");

  FoldPredictions fp;
  fp.n_treatments = ds.n_treatments;
  fp.rows = split.estimation_idx;
  fp.y = select<double>(ds.y, fp.rows);
  fp.d = select<int>(ds.d, fp.rows);
  const FeatureMatrix z = ds.z.select_rows(fp.rows);
  fp.g_hat = FeatureMatrix(fp.rows.size(), static_cast<std::size_t>(ds.n_treatments));
  for (int i = 0; i < ds.n_treatments; ++i) {
    const std::vector<double> g = fits.outcome[static_cast<std::size_t>(i)]->predict(z);
    if (g.size() != fp.rows.size()) throw ShapeMismatch("outcome model returned wrong length");
    for (std::size_t m = 0; m < g.size(); ++m) fp.g_hat(m, static_cast<std::size_t>(i)) = g[m];
  }
  fp.pi_hat = fits.propensity->predict(z);
  if (fp.pi_hat.rows() != fp.rows.size() || fp.pi_hat.cols() != static_cast<std::size_t>(ds.n_treatments))
    throw ShapeMismatch("propensity model returned wrong shape");
  fp.floored = apply_propensity_floor(fp.pi_hat, fits.propensity_floor);
  return fp;
}

enum class EstimatorKind { dr, dml, higher_order };

struct EstimatorSpec {
  EstimatorKind kind = EstimatorKind::higher_order;
  int r = 2;
  int k = 2;

  std::string label() const {
    switch (kind) {
      case EstimatorKind::dr: return "dr";
      case EstimatorKind::dml: return "dml";
      default: return "ho(" + std::to_string(r) + "," + std::to_string(k) + ")";
    }
  }
  friend bool operator==(const EstimatorSpec&, const EstimatorSpec&) = default;
};

/// The three sums of the higher-order estimator for one treatment arm.
struct HigherOrderTerms {
  double regression = 0.0;      // (1/N) sum_I g_hat
  double factual = 0.0;         // (1/N) sum_{D = i} (y - g_hat) A
  double counterfactual = 0.0;  // R-average of (1/N) sum_{D != i} xi_hat A
  std::size_t residual_pool = 0;
  std::size_t counterfactual_units = 0;
};

struct Diagnostics {
  std::size_t floored_propensities = 0;
  bool infinite = false;
  bool nan = false;
};

struct EstimateReport {
  EstimatorSpec estimator;
  std::vector<double> theta;
  std::vector<std::vector<double>> ate_pairwise;
  std::vector<Moments> moments_used;
  std::vector<HigherOrderTerms> terms;
  int r_reps = 0;
  Diagnostics diagnostics;

  bool finite() const { return !diagnostics.infinite && !diagnostics.nan; }
};

inline std::vector<std::vector<double>> pairwise_ate(std::span<const double> theta) {
  std::vector<std::vector<double>> ate(theta.size(), std::vector<double>(theta.size(), 0.0));
  for (std::size_t i = 0; i < theta.size(); ++i)
    for (std::size_t k = 0; k < theta.size(); ++k) ate[i][k] = theta[i] - theta[k];
  return ate;
}

namespace detail {
inline void finish_report(EstimateReport& rep, std::size_t floored) {
  rep.diagnostics.floored_propensities = floored;
  for (double t : rep.theta) {
    if (std::isinf(t)) rep.diagnostics.infinite = true;
    if (std::isnan(t)) rep.diagnostics.nan = true;
  }
  rep.ate_pairwise = pairwise_ate(rep.theta);
}

inline double regression_term(const FoldPredictions& fp, int i) {
  CompensatedSum s;
  for (std::size_t m = 0; m < fp.size(); ++m) s.add(fp.g_hat(m, static_cast<std::size_t>(i)));
  return s.value() / static_cast<double>(fp.size());
}
}  // namespace detail

/// m[q] = (1/|I|) sum_I (1{d = i} - pi_hat_i)^q for q = 1..max_order.
inline Moments estimate_moments(std::span<const int> d, std::span<const double> pi_hat, int treatment,
                                int max_order) {
  if (d.size() != pi_hat.size()) throw ShapeMismatch("labels and predictions differ in length");
  if (d.empty()) throw EmptyFold("no units to estimate moments from");
  if (max_order < 1) throw InvalidArgument("max_order must be >= 1");
  std::vector<CompensatedSum> acc(static_cast<std::size_t>(max_order));
  for (std::size_t m = 0; m < d.size(); ++m) {
    if (!(pi_hat[m] >= 0.0 && pi_hat[m] <= 1.0)) throw InvalidArgument("propensity outside [0, 1]");
    const double nu = (d[m] == treatment ? 1.0 : 0.0) - pi_hat[m];
    double p = 1.0;
    for (int q = 1; q <= max_order; ++q) {
      p *= nu;
      acc[static_cast<std::size_t>(q - 1)].add(p);
    }
  }
  std::vector<double> m(static_cast<std::size_t>(max_order));
  for (int q = 1; q <= max_order; ++q)
    m[static_cast<std::size_t>(q - 1)] = acc[static_cast<std::size_t>(q - 1)].value() / static_cast<double>(d.size());
  return Moments(std::move(m));
}

inline EstimateReport estimate_dr(const FoldPredictions& fp) {
  EstimateReport rep;
  rep.estimator = {EstimatorKind::dr, 0, 0};
  for (int i = 0; i < fp.n_treatments; ++i) rep.theta.push_back(detail::regression_term(fp, i));
  detail::finish_report(rep, fp.floored);
  return rep;
}

/// (1/N) sum g_hat + (1/N) sum 1{D = i}(y - g_hat)/pi_hat, with no floor of
/// its own: zero propensities on treated units surface as +-inf or NaN in
/// the diagnostics.
inline EstimateReport estimate_dml(const FoldPredictions& fp) {
  EstimateReport rep;
  rep.estimator = {EstimatorKind::dml, 0, 0};
  const double n = static_cast<double>(fp.size());
  for (int i = 0; i < fp.n_treatments; ++i) {
    const auto col = static_cast<std::size_t>(i);
    CompensatedSum ipw;
    for (std::size_t m = 0; m < fp.size(); ++m)
      if (fp.d[m] == i) ipw.add((fp.y[m] - fp.g_hat(m, col)) / fp.pi_hat(m, col));
    rep.theta.push_back(detail::regression_term(fp, i) + ipw.value() / n);
  }
  detail::finish_report(rep, fp.floored);
  return rep;
}

enum class MomentSource { estimation_fold, training_fold, supplied };

/// Replacement for the uniform resampler: returns the residual used for
/// the unit at dataset row `row` of arm `treatment` in repetition `rep`.
using ResidualDraw =
    std::function<double(int treatment, std::size_t row, int rep, std::span<const double> pool)>;

struct HigherOrderOptions {
  int r = 2;
  int k = 2;
  int repetitions = 100;
  std::uint64_t seed = 0;
  MomentSource moment_source = MomentSource::estimation_fold;
  std::vector<Moments> supplied_moments;  // one per treatment when supplied
  ResidualDraw residual_draw;             // empty selects uniform resampling
};

/// Higher-order estimator for every arm i:
///   theta_i = (1/N) sum_I g_hat
///           + (1/N) sum_{I, D = i} (y - g_hat) A
///           + (1/R) sum_u (1/N) sum_{I, D != i} xi_{m,u} A,
/// where xi_{m,u} is drawn uniformly with replacement from the factual
/// residuals of arm i in I. Draws for (i, u) come from stream (seed, i, u).
/// `training_pi` is required only for MomentSource::training_fold.
inline EstimateReport estimate_higher_order(const FoldPredictions& fp, const HigherOrderOptions& opt,
                                            const std::vector<int>* training_d = nullptr,
                                            const ProbabilityMatrix* training_pi = nullptr) {
  if (opt.k < 2 || opt.k > opt.r) throw InvalidOrder("k must satisfy 2 <= k <= r");
  if (opt.repetitions < 1) throw InvalidArgument("R must be >= 1");
  const int q_max = std::max(opt.r, opt.k - 1);
  const double n = static_cast<double>(fp.size());

  EstimateReport rep;
  rep.estimator = {EstimatorKind::higher_order, opt.r, opt.k};
  rep.r_reps = opt.repetitions;

  for (int i = 0; i < fp.n_treatments; ++i) {
    const auto col = static_cast<std::size_t>(i);
    std::vector<double> pi_col(fp.size());
    for (std::size_t m = 0; m < fp.size(); ++m) pi_col[m] = fp.pi_hat(m, col);

    Moments moments;
    switch (opt.moment_source) {
      case MomentSource::estimation_fold:
        moments = estimate_moments(fp.d, pi_col, i, q_max);
        break;
      case MomentSource::training_fold: {
        if (!training_d || !training_pi) throw InvalidArgument("training-fold moments need training predictions");
        std::vector<double> tp(training_pi->rows());
        for (std::size_t m = 0; m < tp.size(); ++m) tp[m] = (*training_pi)(m, col);
        moments = estimate_moments(*training_d, tp, i, q_max);
        break;
      }
      case MomentSource::supplied:
        if (opt.supplied_moments.size() != static_cast<std::size_t>(fp.n_treatments))
          throw InvalidArgument("supplied moments must cover every treatment");
        moments = opt.supplied_moments[col];
        break;
    }
    const OrthoCoefficients coeffs = compute_coefficients(opt.r, opt.k, moments);

    HigherOrderTerms terms;
    terms.regression = detail::regression_term(fp, i);

    std::vector<double> pool;
    std::vector<std::size_t> counterfactual;  // positions in the fold
    CompensatedSum factual;
    for (std::size_t m = 0; m < fp.size(); ++m) {
      const int t = fp.d[m] == i ? 1 : 0;
      if (t == 1) {
        const double resid = fp.y[m] - fp.g_hat(m, col);
        pool.push_back(resid);
        factual.add(resid * correction_weight(1, fp.pi_hat(m, col), coeffs, moments));
      } else {
        counterfactual.push_back(m);
      }
    }
    if (pool.empty()) throw EmptyResidualSet("no units with treatment " + std::to_string(i) + " in the estimation fold");
    terms.factual = factual.value() / n;
    terms.residual_pool = pool.size();
    terms.counterfactual_units = counterfactual.size();

    std::vector<double> weights(counterfactual.size());
    for (std::size_t j = 0; j < counterfactual.size(); ++j)
      weights[j] = correction_weight(0, fp.pi_hat(counterfactual[j], col), coeffs, moments);

    CompensatedSum over_reps;
    for (int u = 0; u < opt.repetitions; ++u) {
      CompensatedSum s;
      if (opt.residual_draw) {
        for (std::size_t j = 0; j < counterfactual.size(); ++j)
          s.add(opt.residual_draw(i, fp.rows[counterfactual[j]], u, pool) * weights[j]);
      } else {
        Rng rng = make_stream(opt.seed, {static_cast<std::uint64_t>(i), static_cast<std::uint64_t>(u)});
        for (std::size_t j = 0; j < counterfactual.size(); ++j)
          s.add(pool[uniform_index(rng, pool.size())] * weights[j]);
      }
      over_reps.add(s.value() / n);
    }
    terms.counterfactual = over_reps.value() / static_cast<double>(opt.repetitions);

    rep.theta.push_back(terms.regression + terms.factual + terms.counterfactual);
    rep.moments_used.push_back(std::move(moments));
    rep.terms.push_back(terms);
  }
  detail::finish_report(rep, fp.floored);
  return rep;
}

/// Convenience overloads running the full fold preparation.
inline EstimateReport estimate_dr(const Dataset& ds, const SplitPlan& split, const NuisanceFits& fits) {
  return estimate_dr(predict_fold(ds, split, fits));
}
inline EstimateReport estimate_dml(const Dataset& ds, const SplitPlan& split, const NuisanceFits& fits) {
  return estimate_dml(predict_fold(ds, split, fits));
}
inline EstimateReport estimate_higher_order(const Dataset& ds, const SplitPlan& split, const NuisanceFits& fits,
                                            const HigherOrderOptions& opt) {
  const FoldPredictions fp = predict_fold(ds, split, fits);
  if (opt.moment_source != MomentSource::training_fold) return estimate_higher_order(fp, opt);
  const std::vector<int> d_train = select<int>(ds.d, split.training_idx);
  ProbabilityMatrix pi_train = fits.propensity->predict(ds.z.select_rows(split.training_idx));
  apply_propensity_floor(pi_train, fits.propensity_floor);
  return estimate_higher_order(fp, opt, &d_train, &pi_train);
}

inline EstimateReport run_estimator(const FoldPredictions& fp, const EstimatorSpec& spec, int repetitions,
                                    std::uint64_t seed) {
  switch (spec.kind) {
    case EstimatorKind::dr: return estimate_dr(fp);
    case EstimatorKind::dml: return estimate_dml(fp);
    default: {
      HigherOrderOptions opt;
      opt.r = spec.r;
      opt.k = spec.k;
      opt.repetitions = repetitions;
      opt.seed = seed;
      return estimate_higher_order(fp, opt);
    }
  }
}

/// True theta_i over the estimation fold from the dataset's truth columns.
inline std::vector<double> sample_truth(const Dataset& ds, std::span<const std::size_t> rows) {
  if (!ds.truth) throw SchemaError("dataset carries no truth columns");
  std::vector<double> theta;
  for (int i = 0; i < ds.n_treatments; ++i) {
    CompensatedSum s;
    for (std::size_t r : rows) s.add((*ds.truth)(r, static_cast<std::size_t>(i)));
    theta.push_back(s.value() / static_cast<double>(rows.size()));
  }
  return theta;
}

using AteMatrix = std::vector<std::vector<double>>;

/// Average over datasets of sum_{i != k} |ate_hat - ate| / sum_{i != k} |ate|.
inline double epsilon_ate(std::span<const AteMatrix> estimates, std::span<const AteMatrix> truths) {
  if (estimates.size() != truths.size()) throw ShapeMismatch("estimates and truths differ in count");
  if (estimates.empty()) throw InvalidArgument("epsilon_ate needs at least one dataset");
  CompensatedSum total;
  for (std::size_t m = 0; m < estimates.size(); ++m) {
    const AteMatrix& est = estimates[m];
    const AteMatrix& tru = truths[m];
    if (est.size() != tru.size()) throw ShapeMismatch("treatment counts differ");
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < tru.size(); ++i) {
      if (est[i].size() != tru.size() || tru[i].size() != tru.size()) throw ShapeMismatch("ATE matrix not square");
      for (std::size_t k = 0; k < tru.size(); ++k) {
        if (i == k) continue;
        num += std::abs(est[i][k] - tru[i][k]);
        den += std::abs(tru[i][k]);
      }
    }
    if (den == 0.0) throw ZeroDenominator("true pairwise ATEs are all zero in dataset " + std::to_string(m));
    total.add(num / den);
  }
  return total.value() / static_cast<double>(estimates.size());
}

inline double epsilon_ate(std::span<const EstimateReport> estimates, std::span<const AteMatrix> truths) {
  std::vector<AteMatrix> est;
  for (const auto& e : estimates) est.push_back(e.ate_pairwise);
  return epsilon_ate(std::span<const AteMatrix>(est), truths);
}

}  // namespace orthoate
