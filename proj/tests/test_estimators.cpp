#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "orthoate/estimators.hpp"
#include "orthoate/simulation.hpp"
#include "support.hpp"

using namespace orthoate;

namespace {

std::pair<Dataset, SimTruth> small_design(std::size_t q = 2000, std::uint64_t seed = 3) {
  const SimConfig cfg = make_sim_config(3, 2, 1.0, q, 1, seed);
  return generate_dataset(cfg, 0);
}

SimConfig small_config(std::size_t q = 2000, std::uint64_t seed = 3) { return make_sim_config(3, 2, 1.0, q, 1, seed); }

/// Outcome model recording every covariate row it is asked about.
class RecordingOutcome final : public OutcomeModel {
 public:
  explicit RecordingOutcome(std::shared_ptr<const OutcomeModel> base) : base_(std::move(base)) {}
  std::vector<double> predict(const FeatureMatrix& x) const override {
    for (std::size_t i = 0; i < x.rows(); ++i) seen.emplace(x.row(i).begin(), x.row(i).end());
    return base_->predict(x);
  }
  mutable std::set<std::vector<double>> seen;

 private:
  std::shared_ptr<const OutcomeModel> base_;
};

}  // namespace

TEST(Split, SmallArithmetic) {
  const SplitPlan s = make_split(10, {0.5, 0.2, 0.3}, 1);
  EXPECT_EQ(s.estimation_idx.size(), 3u);
  EXPECT_EQ(s.training_idx.size(), 7u);
  EXPECT_NO_THROW(s.validate(10));
}

TEST(Split, DeterministicUnderSeed) {
  const SplitPlan a = make_split(500, {}, 9), b = make_split(500, {}, 9), c = make_split(500, {}, 10);
  EXPECT_EQ(a.estimation_idx, b.estimation_idx);
  EXPECT_EQ(a.training_idx, b.training_idx);
  EXPECT_NE(a.estimation_idx, c.estimation_idx);
}

TEST(Split, DefaultRatios) {
  const SplitPlan s = make_split(10000, {}, 2);
  EXPECT_EQ(s.estimation_idx.size(), 3000u);
  EXPECT_EQ(s.training_idx.size(), 7000u);
}

TEST(Split, Errors) {
  EXPECT_THROW(make_split(2, {}, 1), EmptyFold);
  EXPECT_THROW(make_split(100, {0.5, 0.2, 0.2}, 1), InvalidArgument);
  EXPECT_THROW(make_split(100, {0.7, 0.0, 0.3}, 1), InvalidArgument);
  SplitPlan overlap{{0, 1}, {1, 2}, 0};
  EXPECT_THROW(overlap.validate(3), InvalidArgument);
  SplitPlan gap{{0}, {2}, 0};
  EXPECT_THROW(gap.validate(3), InvalidArgument);
}

TEST(Moments, HalfPropensityBalanced) {
  const std::vector<int> d{0, 1, 0, 1, 1, 0};
  const std::vector<double> pi(6, 0.5);
  const Moments m = estimate_moments(d, pi, 1, 4);
  EXPECT_NEAR(m[1], 0.0, 1e-15);
  EXPECT_NEAR(m[2], 0.25, 1e-15);
  EXPECT_NEAR(m[3], 0.0, 1e-15);
}

TEST(Moments, PerfectPropensityIsDegenerate) {
  const std::vector<int> d{0, 1, 1, 0};
  const std::vector<double> pi{0.0, 1.0, 1.0, 0.0};
  const Moments m = estimate_moments(d, pi, 1, 3);
  for (int q = 1; q <= 3; ++q) EXPECT_EQ(m[q], 0.0);
  EXPECT_THROW(compute_coefficients(2, 2, m), DegenerateMoment);
}

TEST(Moments, SingleUnit) {
  const Moments m = estimate_moments(std::vector<int>{2}, std::vector<double>{0.3}, 2, 5);
  for (int q = 1; q <= 5; ++q) EXPECT_EQ(m[q], ipow(0.7, q));
}

TEST(DirectRegression, ConstantPrediction) {
  auto [ds, truth] = small_design(300);
  const SplitPlan split = make_split(ds.size(), {}, 1);
  NuisanceFits fits;
  for (double c : {1.5, -2.0, 7.25}) fits.outcome.push_back(std::make_shared<ConstantOutcomeModel>(c));
  fits.propensity = std::make_shared<ConstantPropensityModel>(std::vector<double>{0.2, 0.3, 0.5});
  const EstimateReport rep = estimate_dr(ds, split, fits);
  EXPECT_EQ(rep.theta, (std::vector<double>{1.5, -2.0, 7.25}));
}

TEST(DirectRegression, PerfectOutcomeModelGivesFoldMean) {
  const SimConfig cfg = small_config(600);
  const auto [ds, truth] = generate_dataset(cfg, 0);
  const SplitPlan split = make_split(ds.size(), {}, 2);
  const EstimateReport rep = estimate_dr(ds, split, oracle_fits(cfg.params));
  const std::vector<double> expected = sample_truth(ds, split.estimation_idx);
  for (int i = 0; i < 3; ++i) EXPECT_NEAR(rep.theta[static_cast<std::size_t>(i)], expected[static_cast<std::size_t>(i)], 1e-12);
}

TEST(Dml, PerfectOutcomeModelMatchesDirectRegression) {
  SimConfig cfg = small_config(600);
  auto [ds, truth] = generate_dataset(cfg, 0);
  // Remove the noise so residuals vanish.
  for (std::size_t m = 0; m < ds.size(); ++m) ds.y[m] = truth.potential_means(m, static_cast<std::size_t>(ds.d[m]));
  const SplitPlan split = make_split(ds.size(), {}, 3);
  const auto fits = oracle_fits(cfg.params);
  const EstimateReport dml = estimate_dml(ds, split, fits), dr = estimate_dr(ds, split, fits);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(dml.theta[i], dr.theta[i], 1e-9);
}

TEST(Dml, ZeroPropensityOnTreatedUnitIsInfinite) {
  const support::ToyFixture f = support::load_toy_fixture();
  FoldPredictions fp = support::toy_predictions(f.ds);
  fp.pi_hat(0, 1) = 0.0;  // row 0 is treated with arm 1
  fp.pi_hat(0, 0) = 1.0;
  const EstimateReport rep = estimate_dml(fp);
  EXPECT_TRUE(std::isinf(rep.theta[1]));
  EXPECT_TRUE(rep.diagnostics.infinite);
  EXPECT_FALSE(rep.finite());
}

TEST(Dml, OracleNuisancesUnbiased) {
  const SimConfig cfg = small_config(100000, 12);
  const auto [ds, truth] = generate_dataset(cfg, 0);
  std::vector<std::size_t> all(ds.size());
  std::iota(all.begin(), all.end(), std::size_t{0});
  SplitPlan split;
  split.estimation_idx = all;
  const FoldPredictions fp = predict_fold(ds, split, oracle_fits(cfg.params));
  const EstimateReport rep = estimate_dml(fp);
  for (int i = 0; i < 3; ++i) {
    const auto col = static_cast<std::size_t>(i);
    std::vector<double> contrib(fp.size());
    for (std::size_t m = 0; m < fp.size(); ++m)
      contrib[m] = fp.g_hat(m, col) + (fp.d[m] == i ? (fp.y[m] - fp.g_hat(m, col)) / fp.pi_hat(m, col) : 0.0);
    const double se = std::sqrt(sample_variance(contrib) / static_cast<double>(fp.size()));
    EXPECT_LT(std::abs(rep.theta[col] - population_theta(cfg.params, i)), 3 * se) << i;
  }
}

TEST(HigherOrder, ToyFixtureHandComputation) {
  const support::ToyFixture f = support::load_toy_fixture();
  const FoldPredictions fp = support::toy_predictions(f.ds);
  HigherOrderOptions opt;
  opt.r = 2;
  opt.k = 2;
  opt.repetitions = 1;
  opt.residual_draw = support::toy_pinned_draw(f.expected);
  const EstimateReport ho = estimate_higher_order(fp, opt);
  const EstimateReport dr = estimate_dr(fp), dml = estimate_dml(fp);
  for (int i = 0; i < 2; ++i) {
    const auto& e = f.expected.at("arm" + std::to_string(i));
    const auto col = static_cast<std::size_t>(i);
    EXPECT_NEAR(dr.theta[col], e.at("dr").get<double>(), 1e-12);
    EXPECT_NEAR(dml.theta[col], e.at("dml").get<double>(), 1e-12);
    EXPECT_NEAR(ho.theta[col], e.at("ho22").get<double>(), 1e-12);
  }
}

TEST(HigherOrder, DecompositionIdentityWithOwnCounterfactuals) {
  const SimConfig cfg = small_config(3000, 21);
  const auto [ds, truth] = generate_dataset(cfg, 0);
  const SplitPlan split = make_split(ds.size(), {}, 4);
  const NuisanceFits fits = fit_nuisances(ds, split, {}, {}, 5);
  const FoldPredictions fp = predict_fold(ds, split, fits);

  HigherOrderOptions opt;
  opt.r = 3;
  opt.k = 2;
  opt.repetitions = 1;
  // Replace resampling by each unit's own (normally unobservable) residual.
  const SimTruth& tr = truth;
  std::vector<double> g_by_row(ds.size() * 3);
  for (std::size_t j = 0; j < fp.size(); ++j)
    for (std::size_t i = 0; i < 3; ++i) g_by_row[fp.rows[j] * 3 + i] = fp.g_hat(j, i);
  opt.residual_draw = [&](int i, std::size_t row, int, std::span<const double>) {
    const auto c = static_cast<std::size_t>(i);
    return tr.potential_outcomes(row, c) - g_by_row[row * 3 + c];
  };
  const EstimateReport rep = estimate_higher_order(fp, opt);

  for (int i = 0; i < 3; ++i) {
    const auto col = static_cast<std::size_t>(i);
    const Moments& m = rep.moments_used[col];
    const OrthoCoefficients c = compute_coefficients(3, 2, m);
    CompensatedSum direct;
    for (std::size_t j = 0; j < fp.size(); ++j) {
      const double y_i = tr.potential_outcomes(fp.rows[j], col);
      const int t = fp.d[j] == i ? 1 : 0;
      direct.add(fp.g_hat(j, col) + (y_i - fp.g_hat(j, col)) * correction_weight(t, fp.pi_hat(j, col), c, m));
    }
    EXPECT_NEAR(rep.theta[col], direct.value() / static_cast<double>(fp.size()), 1e-12 * std::max(1.0, std::abs(rep.theta[col])));
  }
}

TEST(HigherOrder, ReproducibleAndSeedSensitive) {
  const SimConfig cfg = small_config(2000, 31);
  const auto [ds, truth] = generate_dataset(cfg, 0);
  const SplitPlan split = make_split(ds.size(), {}, 1);
  const NuisanceFits fits = fit_nuisances(ds, split, {}, {}, 2);
  HigherOrderOptions opt;
  opt.seed = 123;
  opt.repetitions = 10;
  const EstimateReport a = estimate_higher_order(ds, split, fits, opt);
  const EstimateReport b = estimate_higher_order(ds, split, fit_nuisances(ds, split, {}, {}, 2), opt);
  EXPECT_EQ(a.theta, b.theta);
  EXPECT_EQ(a.ate_pairwise, b.ate_pairwise);
  opt.seed = 124;
  EXPECT_NE(a.theta, estimate_higher_order(ds, split, fits, opt).theta);
}

TEST(HigherOrder, PairwiseAntisymmetry) {
  const SimConfig cfg = small_config(1500, 41);
  const auto [ds, truth] = generate_dataset(cfg, 0);
  const SplitPlan split = make_split(ds.size(), {}, 1);
  const EstimateReport rep = estimate_higher_order(ds, split, fit_nuisances(ds, split, {}, {}, 2), {});
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t k = 0; k < 3; ++k) {
      EXPECT_EQ(rep.ate_pairwise[i][k], -rep.ate_pairwise[k][i]);
      EXPECT_EQ(rep.ate_pairwise[i][k], rep.theta[i] - rep.theta[k]);
    }
}

TEST(HigherOrder, EmptyResidualSet) {
  const support::ToyFixture f = support::load_toy_fixture();
  FoldPredictions fp = support::toy_predictions(f.ds);
  std::fill(fp.d.begin(), fp.d.end(), 1);  // arm 1 has no counterfactual units, arm 0 no pool
  try {
    estimate_higher_order(fp, {});
    FAIL() << "expected EmptyResidualSet";
  } catch (const EmptyResidualSet& e) {
    EXPECT_NE(std::string(e.what()).find("treatment 0"), std::string::npos);
  }
}

TEST(HigherOrder, TermBookkeeping) {
  const support::ToyFixture f = support::load_toy_fixture();
  FoldPredictions fp = support::toy_predictions(f.ds);
  std::fill(fp.d.begin(), fp.d.end(), 1);
  fp.d[0] = 0;
  HigherOrderOptions opt;
  opt.repetitions = 3;
  opt.moment_source = MomentSource::supplied;
  opt.supplied_moments = {bernoulli_residual_moments(0.2, 2), bernoulli_residual_moments(0.8, 2)};
  const EstimateReport a = estimate_higher_order(fp, opt);
  EXPECT_EQ(a.terms[0].residual_pool, 1u);
  EXPECT_EQ(a.terms[0].counterfactual_units, 5u);
  EXPECT_EQ(a.terms[1].residual_pool, 5u);
  EXPECT_EQ(a.terms[1].counterfactual_units, 1u);
  // Zero residual draws leave only the regression and factual sums.
  opt.residual_draw = [](int, std::size_t, int, std::span<const double>) { return 0.0; };
  const EstimateReport b = estimate_higher_order(fp, opt);
  for (std::size_t i = 0; i < 2; ++i) {
    EXPECT_EQ(b.terms[i].counterfactual, 0.0);
    EXPECT_EQ(b.theta[i], b.terms[i].regression + b.terms[i].factual);
  }
}

TEST(HigherOrder, OracleNuisancesUnbiasedCorrection) {
  // With true nuisances the two correction terms have mean zero; averaged
  // over replications the estimate matches the regression term.
  const SimConfig cfg = small_config(4000, 51);
  std::vector<double> diff;
  for (std::uint64_t rep = 0; rep < 60; ++rep) {
    const auto [ds, truth] = generate_dataset(cfg, rep);
    const SplitPlan split = make_split(ds.size(), {}, rep);
    HigherOrderOptions opt;
    opt.repetitions = 20;
    opt.seed = rep;
    const EstimateReport r = estimate_higher_order(ds, split, oracle_fits(cfg.params), opt);
    diff.push_back(r.theta[2] - r.terms[2].regression);
  }
  const double se = std::sqrt(sample_variance(diff) / static_cast<double>(diff.size()));
  EXPECT_LT(std::abs(mean(diff)), 3 * se);
}

TEST(HigherOrder, ResamplingVarianceScalesAsOneOverR) {
  // Data and fits fixed, only the resampling stream changes: the variance of
  // the counterfactual term falls as 1 / R.
  const SimConfig cfg = small_config(3000, 61);
  const auto [ds, truth] = generate_dataset(cfg, 0);
  const SplitPlan split = make_split(ds.size(), {}, 1);
  const FoldPredictions fp = predict_fold(ds, split, oracle_fits(cfg.params));
  const auto variance_at = [&](int R) {
    std::vector<double> v;
    for (std::uint64_t s = 0; s < 300; ++s) {
      HigherOrderOptions opt;
      opt.repetitions = R;
      opt.seed = 1000 + s;
      v.push_back(estimate_higher_order(fp, opt).terms[0].counterfactual);
    }
    return sample_variance(v);
  };
  const double ratio = variance_at(1) / variance_at(10);
  EXPECT_GT(ratio, 7.0);
  EXPECT_LT(ratio, 14.0);
}

TEST(HigherOrder, TrainingFoldMomentSwitch) {
  const SimConfig cfg = small_config(2000, 71);
  const auto [ds, truth] = generate_dataset(cfg, 0);
  const SplitPlan split = make_split(ds.size(), {}, 1);
  const NuisanceFits fits = fit_nuisances(ds, split, {}, {}, 2);
  HigherOrderOptions opt;
  opt.repetitions = 5;
  const EstimateReport a = estimate_higher_order(ds, split, fits, opt);
  opt.moment_source = MomentSource::training_fold;
  const EstimateReport b = estimate_higher_order(ds, split, fits, opt);
  EXPECT_NE(a.moments_used[0][2], b.moments_used[0][2]);
  const std::vector<int> d_train = select<int>(ds.d, split.training_idx);
  ProbabilityMatrix pi_train = fits.propensity->predict(ds.z.select_rows(split.training_idx));
  std::vector<double> col(pi_train.rows());
  for (std::size_t m = 0; m < col.size(); ++m) col[m] = pi_train(m, 0);
  EXPECT_EQ(b.moments_used[0], estimate_moments(d_train, col, 0, 2));
}

TEST(Hygiene, NuisanceFitsIgnoreEstimationFoldOutcomes) {
  const SimConfig cfg = small_config(1500, 81);
  const auto [ds, truth] = generate_dataset(cfg, 0);
  const SplitPlan split = make_split(ds.size(), {}, 1);
  Dataset poisoned = ds;
  for (std::size_t m : split.estimation_idx) {
    poisoned.y[m] = 1e6;
    poisoned.d[m] = (ds.d[m] + 1) % 3;
    for (double& v : poisoned.z.row(m)) v = -50.0;
  }
  RegressorSpec reg;
  ClassifierSpec cls;
  const NuisanceFits a = fit_nuisances(ds, split, reg, cls, 4);
  const NuisanceFits b = fit_nuisances(poisoned, split, reg, cls, 4);
  const FeatureMatrix probe = ds.z.select_rows(split.training_idx);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(a.outcome[i]->predict(probe), b.outcome[i]->predict(probe));
  EXPECT_EQ(a.propensity->predict(probe), b.propensity->predict(probe));
}

TEST(Hygiene, EstimatorsReadOnlyTheEstimationFold) {
  const SimConfig cfg = small_config(1500, 91);
  const auto [ds, truth] = generate_dataset(cfg, 0);
  const SplitPlan split = make_split(ds.size(), {}, 1);
  NuisanceFits fits = fit_nuisances(ds, split, {}, {}, 4);
  std::vector<std::shared_ptr<RecordingOutcome>> recorders;
  for (auto& o : fits.outcome) {
    recorders.push_back(std::make_shared<RecordingOutcome>(o));
    o = recorders.back();
  }
  Dataset poisoned = ds;
  for (std::size_t m : split.training_idx) {
    poisoned.y[m] = NAN;
    poisoned.d[m] = 0;
  }
  const std::vector<EstimatorSpec> specs{{EstimatorKind::dr, 0, 0}, {EstimatorKind::dml, 0, 0}, {EstimatorKind::higher_order, 2, 2}};
  for (const auto& spec : specs) {
    const EstimateReport a = run_estimator(predict_fold(ds, split, fits), spec, 10, 7);
    const EstimateReport b = run_estimator(predict_fold(poisoned, split, fits), spec, 10, 7);
    EXPECT_EQ(a.theta, b.theta) << spec.label();
  }
  std::set<std::vector<double>> fold_rows;
  for (std::size_t m : split.estimation_idx) fold_rows.emplace(ds.z.row(m).begin(), ds.z.row(m).end());
  for (const auto& r : recorders) EXPECT_EQ(r->seen, fold_rows);
}

TEST(EpsilonAte, Examples) {
  const AteMatrix t = pairwise_ate(std::vector<double>{1.0, 0.0});
  EXPECT_EQ(epsilon_ate(std::vector<AteMatrix>{t}, std::vector<AteMatrix>{t}), 0.0);
  const AteMatrix e = pairwise_ate(std::vector<double>{1.1, 0.0});
  EXPECT_NEAR(epsilon_ate(std::vector<AteMatrix>{e}, std::vector<AteMatrix>{t}), 0.1, 1e-15);
  const AteMatrix e3 = pairwise_ate(std::vector<double>{1.3, 0.0});
  EXPECT_NEAR(epsilon_ate(std::vector<AteMatrix>{e, e3}, std::vector<AteMatrix>{t, t}), 0.2, 1e-15);
}

TEST(EpsilonAte, Errors) {
  const AteMatrix zero = pairwise_ate(std::vector<double>{2.0, 2.0});
  EXPECT_THROW(epsilon_ate(std::vector<AteMatrix>{zero}, std::vector<AteMatrix>{zero}), ZeroDenominator);
  const AteMatrix t = pairwise_ate(std::vector<double>{1.0, 0.0});
  EXPECT_THROW(epsilon_ate(std::vector<AteMatrix>{t}, std::vector<AteMatrix>{}), ShapeMismatch);
  EXPECT_THROW(epsilon_ate(std::vector<AteMatrix>{}, std::vector<AteMatrix>{}), InvalidArgument);
  EXPECT_THROW(epsilon_ate(std::vector<AteMatrix>{pairwise_ate(std::vector<double>{1, 2, 3})}, std::vector<AteMatrix>{t}),
               ShapeMismatch);
}

TEST(CompensatedSum, KeepsInfinitiesAndCancellation) {
  CompensatedSum s;
  for (double x : {1.0, 1e100, 1.0, -1e100}) s.add(x);
  EXPECT_EQ(s.value(), 2.0);
  CompensatedSum inf;
  inf.add(1.0);
  inf.add(std::numeric_limits<double>::infinity());
  inf.add(-3.0);
  EXPECT_EQ(inf.value(), std::numeric_limits<double>::infinity());
}
