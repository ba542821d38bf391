#include <gtest/gtest.h>

#include <cmath>

#include "orthoate/nuisance/forest.hpp"
#include "orthoate/nuisance/nuisance.hpp"
#include "orthoate/random.hpp"

using namespace orthoate;

namespace {

FeatureMatrix gaussian_features(std::size_t n, std::size_t p, std::uint64_t seed) {
  Rng rng = make_stream(seed, {});
  FeatureMatrix x(n, p);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < p; ++j) x(i, j) = standard_normal(rng);
  return x;
}

}  // namespace

TEST(Forest, ConstantResponse) {
  const FeatureMatrix x = gaussian_features(100, 3, 1);
  const std::vector<double> y(100, 4.25);
  ForestOptions opt;
  opt.n_trees = 10;
  const ForestRegressorFit fit = fit_forest_regress(x, y, opt);
  for (double v : fit.predict(gaussian_features(20, 3, 2))) EXPECT_EQ(v, 4.25);
}

TEST(Forest, CheckerboardXor) {
  Rng rng = make_stream(3, {});
  const std::size_t n = 1000;
  FeatureMatrix x(n, 2);
  std::vector<int> d(n);
  for (std::size_t i = 0; i < n; ++i) {
    x(i, 0) = uniform(rng, -1, 1);
    x(i, 1) = uniform(rng, -1, 1);
    d[i] = (x(i, 0) > 0) != (x(i, 1) > 0) ? 1 : 0;
  }
  ForestOptions opt;
  opt.n_trees = 100;
  opt.max_depth = 10;
  opt.seed = 4;
  const ForestClassifierFit fit = fit_forest_classify(x, d, 2, opt);
  const FeatureMatrix p = fit.predict(x);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < n; ++i) correct += ((p(i, 1) > 0.5 ? 1 : 0) == d[i]);
  EXPECT_GT(static_cast<double>(correct) / n, 0.95);
}

TEST(Forest, DeterministicUnderSeed) {
  const FeatureMatrix x = gaussian_features(300, 4, 5);
  std::vector<double> y(300);
  for (std::size_t i = 0; i < 300; ++i) y[i] = x(i, 0) * x(i, 1) + std::sin(x(i, 2));
  ForestOptions opt;
  opt.n_trees = 20;
  opt.seed = 77;
  const auto a = fit_forest_regress(x, y, opt).predict(x);
  const auto b = fit_forest_regress(x, y, opt).predict(x);
  EXPECT_EQ(a, b);
  opt.seed = 78;
  EXPECT_NE(a, fit_forest_regress(x, y, opt).predict(x));
}

TEST(Forest, SingleFullTreeInterpolates) {
  const FeatureMatrix x = gaussian_features(60, 3, 6);
  std::vector<double> y(60);
  for (std::size_t i = 0; i < 60; ++i) y[i] = static_cast<double>(i) * 0.37 - 2.0;
  ForestOptions opt;
  opt.n_trees = 1;
  opt.max_depth = 0;  // unlimited
  opt.min_leaf = 1;
  opt.max_features = 3;
  opt.bootstrap = false;
  const auto pred = fit_forest_regress(x, y, opt).predict(x);
  for (std::size_t i = 0; i < 60; ++i) EXPECT_EQ(pred[i], y[i]);
}

TEST(Forest, ClassProbabilitiesSumToOne) {
  const FeatureMatrix x = gaussian_features(400, 2, 7);
  std::vector<int> d(400);
  Rng rng = make_stream(8, {});
  for (auto& v : d) v = static_cast<int>(uniform_index(rng, 3));
  ForestOptions opt;
  opt.n_trees = 15;
  const FeatureMatrix p = fit_forest_classify(x, d, 3, opt).predict(gaussian_features(50, 2, 9));
  ASSERT_EQ(p.cols(), 3u);
  for (std::size_t i = 0; i < p.rows(); ++i) {
    double s = 0;
    for (double v : p.row(i)) s += v;
    EXPECT_NEAR(s, 1.0, 1e-12);
  }
}

TEST(Forest, ProbabilitiesStayInUnitInterval) {
  // Labels fixed by the sign of x0 with 30 trees: pure leaves must give
  // exactly 0 and 1, never 1 + ulp.
  const FeatureMatrix x = gaussian_features(300, 2, 11);
  std::vector<int> d(300);
  for (std::size_t i = 0; i < d.size(); ++i) d[i] = x(i, 0) > 0 ? 1 : 0;
  ForestOptions opt;
  opt.n_trees = 30;
  const FeatureMatrix p = fit_forest_classify(x, d, 2, opt).predict(x);
  bool saw_exact = false;
  for (double v : p.data()) {
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
    saw_exact = saw_exact || v == 0.0 || v == 1.0;
  }
  EXPECT_TRUE(saw_exact);
}

TEST(Forest, ValidationAndShapes) {
  const FeatureMatrix x = gaussian_features(30, 2, 10);
  const std::vector<double> y(30, 1.0);
  ForestOptions bad;
  bad.min_leaf = 0;
  EXPECT_ANY_THROW(fit_forest_regress(x, y, bad));
  bad = {};
  bad.n_trees = 0;
  EXPECT_ANY_THROW(fit_forest_regress(x, y, bad));
  ForestOptions opt;
  opt.n_trees = 3;
  const auto fit = fit_forest_regress(x, y, opt);
  EXPECT_TRUE(fit.predict(FeatureMatrix(0, 2)).empty());
  EXPECT_THROW(fit.predict(FeatureMatrix(1, 5)), ShapeMismatch);
}
