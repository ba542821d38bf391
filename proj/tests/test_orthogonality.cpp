#include <gtest/gtest.h>

#include <cmath>

#include "orthoate/orthogonality.hpp"

using namespace orthoate;

namespace {

HigherOrderScore ho_score(const SyntheticModel& model, int r, int k) {
  const Moments m = model.residual_moments(std::max(r, k - 1));
  return {compute_coefficients(r, k, m), m};
}

}  // namespace

TEST(Stencil, WeightsDifferentiatePolynomials) {
  // Second central difference of x^2 is exactly 2.
  const auto s = detail::central_stencil(2, 0.1);
  double v = 0.0;
  for (const auto& [off, w] : s) v += w * (0.3 + off * 0.1) * (0.3 + off * 0.1);
  EXPECT_NEAR(v, 2.0, 1e-9);
  const auto s0 = detail::central_stencil(0, 0.1);
  ASSERT_EQ(s0.size(), 1u);
  EXPECT_EQ(s0[0].second, 1.0);
}

TEST(Model, TwoLevelMomentsAndInversePropensity) {
  const BinaryQuadraticModel model;
  const Moments m = model.residual_moments(4);
  EXPECT_NEAR(m[1], 0.0, 1e-15);
  EXPECT_NEAR(m[2], 0.21, 1e-15);
  EXPECT_NEAR(m[3], 0.0, 1e-15);  // the two levels cancel
  EXPECT_NEAR(m[4], 0.0777, 1e-15);
  EXPECT_NEAR(model.mean_inverse_propensity(), 0.5 * (1 / 0.3 + 1 / 0.7), 1e-15);
  EXPECT_NEAR(model.theta(), std::exp(1.0) * (0.09 + 0.04 + 1.0), 1e-12);
}

TEST(Orthogonality, TwoTwoScoreHasNoViolationThroughOrderTwo) {
  const BinaryQuadraticModel model;
  OrthogonalityOptions opt;
  opt.order = 2;
  opt.n_draws = 200000;
  const OrthogonalityReport rep = check_orthogonality(ho_score(model, 2, 2), model, opt);
  EXPECT_EQ(rep.score, "ho(2,2)");
  EXPECT_EQ(rep.derivatives.size(), 20u);  // (1+2+3 - 1 order-0) multi-indices x 4 direction pairs
  for (const auto& d : rep.derivatives)
    EXPECT_FALSE(d.violation) << "alpha=(" << d.alpha_g << "," << d.alpha_a << ") est=" << d.estimate
                              << " se=" << d.std_error;
}

TEST(Orthogonality, DmlViolatesMixedSecondOrder) {
  const BinaryQuadraticModel model;
  OrthogonalityOptions opt;
  opt.order = 2;
  const OrthogonalityReport rep = check_orthogonality(DmlScore{}, model, opt);
  EXPECT_FALSE(rep.any_violation_up_to(1));
  const DerivativeEstimate* d = rep.find(1, 1, Direction::constant, Direction::constant);
  ASSERT_NE(d, nullptr);
  EXPECT_LT(d->estimate, 0.0);
  EXPECT_GT(std::abs(d->estimate), 5.0 * d->std_error);
  EXPECT_TRUE(d->violation);
  // Analytic value -E[1 / pi(Z)] along constant directions.
  EXPECT_NEAR(d->estimate, -model.mean_inverse_propensity(), 4.0 * d->std_error);
}

TEST(Orthogonality, AffineInOutcomeArgument) {
  const BinaryQuadraticModel model;
  OrthogonalityOptions opt;
  opt.order = 3;
  opt.n_draws = 5000;
  const OrthogonalityReport rep = check_orthogonality(ho_score(model, 2, 2), model, opt);
  for (const auto& d : rep.derivatives) {
    if (d.alpha_g < 2) continue;
    EXPECT_TRUE(d.analytic_zero);
    EXPECT_EQ(d.estimate, 0.0);
    EXPECT_FALSE(d.violation);
  }
}

TEST(Orthogonality, DeterministicUnderSeed) {
  const BinaryQuadraticModel model;
  OrthogonalityOptions opt;
  opt.n_draws = 10000;
  opt.seed = 77;
  const auto a = check_orthogonality(DmlScore{}, model, opt);
  const auto b = check_orthogonality(DmlScore{}, model, opt);
  ASSERT_EQ(a.derivatives.size(), b.derivatives.size());
  for (std::size_t i = 0; i < a.derivatives.size(); ++i) {
    EXPECT_EQ(a.derivatives[i].estimate, b.derivatives[i].estimate);
    EXPECT_EQ(a.derivatives[i].std_error, b.derivatives[i].std_error);
  }
}

TEST(Orthogonality, FourTwoIsFirstOrderOrthogonal) {
  const BinaryQuadraticModel model;
  OrthogonalityOptions opt;
  opt.order = 1;
  const auto rep = check_orthogonality(ho_score(model, 4, 2), model, opt);
  EXPECT_FALSE(rep.any_violation());
}

TEST(Orthogonality, RejectsBadOptions) {
  const BinaryQuadraticModel model;
  OrthogonalityOptions opt;
  opt.order = 0;
  EXPECT_THROW(check_orthogonality(DmlScore{}, model, opt), InvalidArgument);
  opt.order = 2;
  opt.epsilon = 0.0;
  EXPECT_THROW(check_orthogonality(DmlScore{}, model, opt), InvalidArgument);
}
