#pragma once

// L1-penalised linear regression by cyclic coordinate descent on
// standardized features.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <span>
#include <vector>

#include "orthoate/error.hpp"
#include "orthoate/matrix.hpp"
#include "orthoate/random.hpp"

namespace orthoate {

struct LassoFit {
  Standardization standardization;
  double intercept = 0.0;
  std::vector<double> beta;  // slopes in standardized units
  double lambda = 0.0;
  int iterations = 0;
  bool converged = false;

  std::vector<double> predict(const FeatureMatrix& x) const {
    if (x.cols() != beta.size()) throw ShapeMismatch("lasso: column count mismatch");
    std::vector<double> out(x.rows(), intercept);
    for (std::size_t i = 0; i < x.rows(); ++i)
      for (std::size_t j = 0; j < beta.size(); ++j)
        out[i] += beta[j] * (x(i, j) - standardization.mean[j]) / standardization.scale[j];
    return out;
  }
};

namespace detail {
inline double soft_threshold(double v, double t) noexcept {
  if (v > t) return v - t;
  if (v < -t) return v + t;
  return 0.0;
}

inline void check_finite(const FeatureMatrix& x, std::span<const double> y) {
  if (!x.all_finite()) throw NonFinite("non-finite feature value");
  for (double v : y)
    if (!std::isfinite(v)) throw NonFinite("non-finite response value");
}
}  // namespace detail

/// Smallest lambda at which every slope is zero.
inline double lasso_lambda_max(const FeatureMatrix& x, std::span<const double> y) {
  const FeatureMatrix xs = Standardization::fit(x).apply(x);
  const double ybar = std::accumulate(y.begin(), y.end(), 0.0) / static_cast<double>(y.size());
  double best = 0.0;
  for (std::size_t j = 0; j < xs.cols(); ++j) {
    double dot = 0.0;
    for (std::size_t i = 0; i < xs.rows(); ++i) dot += xs(i, j) * (y[i] - ybar);
    best = std::max(best, std::abs(dot) / static_cast<double>(xs.rows()));
  }
  return best;
}

/// Minimises (1/2n)||y - b0 - X b||^2 + lambda ||b||_1 with b0 unpenalised.
inline LassoFit fit_lasso(const FeatureMatrix& x, std::span<const double> y, double lambda,
                          int max_iter = 1000, double tol = 1e-7) {
  if (x.rows() != y.size()) throw ShapeMismatch("lasso: X and y lengths differ");
  if (x.rows() < 2) throw InvalidArgument("lasso: need at least two rows");
  if (!(lambda >= 0)) throw InvalidArgument("lasso: lambda must be non-negative");
  detail::check_finite(x, y);

  LassoFit fit;
  fit.lambda = lambda;
  fit.standardization = Standardization::fit(x);
  const FeatureMatrix xs = fit.standardization.apply(x);
  const std::size_t n = xs.rows(), p = xs.cols();
  const double inv_n = 1.0 / static_cast<double>(n);

  const double ybar = std::accumulate(y.begin(), y.end(), 0.0) * inv_n;
  std::vector<double> resid(n);
  for (std::size_t i = 0; i < n; ++i) resid[i] = y[i] - ybar;

  std::vector<double> col_sq(p, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < p; ++j) col_sq[j] += xs(i, j) * xs(i, j) * inv_n;

  fit.beta.assign(p, 0.0);
  for (fit.iterations = 1; fit.iterations <= max_iter; ++fit.iterations) {
    double max_change = 0.0;
    for (std::size_t j = 0; j < p; ++j) {
      if (col_sq[j] < 1e-14) continue;
      const double old = fit.beta[j];
      double rho = 0.0;
      for (std::size_t i = 0; i < n; ++i) rho += xs(i, j) * resid[i];
      rho = rho * inv_n + col_sq[j] * old;
      const double updated = detail::soft_threshold(rho, lambda) / col_sq[j];
      const double delta = updated - old;
      if (delta != 0.0) {
        for (std::size_t i = 0; i < n; ++i) resid[i] -= delta * xs(i, j);
        fit.beta[j] = updated;
      }
      max_change = std::max(max_change, std::abs(delta));
    }
    if (max_change < tol) {
      fit.converged = true;
      break;
    }
  }
  fit.iterations = std::min(fit.iterations, max_iter);
  // Standardized columns have zero mean, so the intercept is the response mean.
  fit.intercept = ybar;
  return fit;
}

/// Picks lambda from a grid by k-fold cross-validated squared error, then
/// refits on all rows.
inline LassoFit fit_lasso_cv(const FeatureMatrix& x, std::span<const double> y,
                             std::span<const double> grid, int folds, std::uint64_t seed,
                             int max_iter = 1000, double tol = 1e-7) {
  if (grid.empty()) throw InvalidArgument("lasso: empty lambda grid");
  if (grid.size() == 1 || folds < 2 || x.rows() < static_cast<std::size_t>(2 * folds))
    return fit_lasso(x, y, grid[0], max_iter, tol);

  const std::size_t n = x.rows();
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  Rng rng = make_stream(seed, {0x1a550});
  for (std::size_t i = n; i > 1; --i) std::swap(perm[i - 1], perm[uniform_index(rng, i)]);

  double best_err = std::numeric_limits<double>::infinity();
  double best_lambda = grid[0];
  for (double lambda : grid) {
    double err = 0.0;
    for (int f = 0; f < folds; ++f) {
      std::vector<std::size_t> train, valid;
      for (std::size_t i = 0; i < n; ++i)
        (static_cast<int>(i % static_cast<std::size_t>(folds)) == f ? valid : train).push_back(perm[i]);
      const FeatureMatrix xt = x.select_rows(train);
      const std::vector<double> yt = select<double>(y, train);
      const LassoFit fit = fit_lasso(xt, yt, lambda, max_iter, tol);
      const std::vector<double> pred = fit.predict(x.select_rows(valid));
      for (std::size_t i = 0; i < valid.size(); ++i) {
        const double d = pred[i] - y[valid[i]];
        err += d * d;
      }
    }
    if (err < best_err) {
      best_err = err;
      best_lambda = lambda;
    }
  }
  return fit_lasso(x, y, best_lambda, max_iter, tol);
}

}  // namespace orthoate
