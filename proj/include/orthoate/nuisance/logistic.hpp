#pragma once

// Multinomial logistic regression fitted by full-batch gradient descent
// with Armijo backtracking on the L2-penalised mean negative log-likelihood.

#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "orthoate/error.hpp"
#include "orthoate/matrix.hpp"

namespace orthoate {

using ProbabilityMatrix = FeatureMatrix;

struct LogisticFit {
  Standardization standardization;
  int n_treatments = 2;
  // weights(c, 0) is the intercept of class c, weights(c, 1 + j) the slope.
  FeatureMatrix weights;
  std::vector<double> loss_history;  // loss after every accepted step
  int iterations = 0;
  bool converged = false;

  ProbabilityMatrix predict(const FeatureMatrix& x) const;
};

namespace detail {

inline void softmax_row(std::span<double> logits) {
  const double mx = *std::max_element(logits.begin(), logits.end());
  double total = 0.0;
  for (double& v : logits) {
    v = std::exp(v - mx);
    total += v;
  }
  for (double& v : logits) v /= total;
}

inline void class_logits(const FeatureMatrix& w, std::span<const double> xrow,
                         std::span<double> out) {
  for (std::size_t c = 0; c < w.rows(); ++c) {
    double s = w(c, 0);
    for (std::size_t j = 0; j < xrow.size(); ++j) s += w(c, j + 1) * xrow[j];
    out[c] = s;
  }
}

/// Mean negative log-likelihood plus (l2/2)||slopes||^2; fills grad when
/// non-null.
inline double logistic_objective(const FeatureMatrix& xs, std::span<const int> d,
                                 const FeatureMatrix& w, double l2, FeatureMatrix* grad) {
  const std::size_t n = xs.rows(), p = xs.cols(), k = w.rows();
  const double inv_n = 1.0 / static_cast<double>(n);
  std::vector<double> prob(k);
  double loss = 0.0;
  if (grad) *grad = FeatureMatrix(k, p + 1, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const auto xrow = xs.row(i);
    class_logits(w, xrow, prob);
    const double mx = *std::max_element(prob.begin(), prob.end());
    double total = 0.0;
    for (double v : prob) total += std::exp(v - mx);
    const double log_z = mx + std::log(total);
    loss -= (prob[static_cast<std::size_t>(d[i])] - log_z) * inv_n;
    if (grad) {
      for (std::size_t c = 0; c < k; ++c) {
        const double resid = std::exp(prob[c] - log_z) - (static_cast<std::size_t>(d[i]) == c ? 1.0 : 0.0);
        (*grad)(c, 0) += resid * inv_n;
        for (std::size_t j = 0; j < p; ++j) (*grad)(c, j + 1) += resid * xrow[j] * inv_n;
      }
    }
  }
  for (std::size_t c = 0; c < k; ++c)
    for (std::size_t j = 1; j <= p; ++j) {
      loss += 0.5 * l2 * w(c, j) * w(c, j);
      if (grad) (*grad)(c, j) += l2 * w(c, j);
    }
  return loss;
}

inline void check_labels(std::span<const int> d, int n_treatments) {
  if (n_treatments < 2) throw InvalidArgument("need at least two treatments");
  std::vector<std::size_t> counts(static_cast<std::size_t>(n_treatments), 0);
  for (int v : d) {
    if (v < 0 || v >= n_treatments) throw InvalidArgument("treatment label out of range");
    ++counts[static_cast<std::size_t>(v)];
  }
  for (std::size_t c = 0; c < counts.size(); ++c)
    if (counts[c] == 0) throw MissingClass("no observations for treatment " + std::to_string(c));
}

}  // namespace detail

inline ProbabilityMatrix LogisticFit::predict(const FeatureMatrix& x) const {
  if (x.cols() + 1 != weights.cols()) throw ShapeMismatch("logistic: column count mismatch");
  const FeatureMatrix xs = standardization.apply(x);
  ProbabilityMatrix out(x.rows(), static_cast<std::size_t>(n_treatments));
  for (std::size_t i = 0; i < x.rows(); ++i) {
    detail::class_logits(weights, xs.row(i), out.row(i));
    detail::softmax_row(out.row(i));
  }
  return out;
}

inline LogisticFit fit_logistic(const FeatureMatrix& x, std::span<const int> d, int n_treatments,
                                double l2 = 1e-4, int max_iter = 500, double tol = 1e-7) {
  if (x.rows() != d.size()) throw ShapeMismatch("logistic: X and labels lengths differ");
  if (!(l2 >= 0)) throw InvalidArgument("logistic: l2 must be non-negative");
  if (!x.all_finite()) throw NonFinite("non-finite feature value");
  detail::check_labels(d, n_treatments);

  LogisticFit fit;
  fit.n_treatments = n_treatments;
  fit.standardization = Standardization::fit(x);
  const FeatureMatrix xs = fit.standardization.apply(x);
  const std::size_t k = static_cast<std::size_t>(n_treatments), p = xs.cols();

  fit.weights = FeatureMatrix(k, p + 1, 0.0);
  FeatureMatrix grad;
  double loss = detail::logistic_objective(xs, d, fit.weights, l2, &grad);
  fit.loss_history.push_back(loss);
  double step = 1.0;

  for (fit.iterations = 1; fit.iterations <= max_iter; ++fit.iterations) {
    double gnorm2 = 0.0, gmax = 0.0;
    for (double g : grad.data()) {
      gnorm2 += g * g;
      gmax = std::max(gmax, std::abs(g));
    }
    if (gmax < tol) {
      fit.converged = true;
      break;
    }
    // Armijo backtracking along the negative gradient.
    FeatureMatrix trial;
    double trial_loss = loss;
    bool accepted = false;
    for (int bt = 0; bt < 60; ++bt) {
      trial = fit.weights;
      for (std::size_t c = 0; c < k; ++c)
        for (std::size_t j = 0; j <= p; ++j) trial(c, j) -= step * grad(c, j);
      trial_loss = detail::logistic_objective(xs, d, trial, l2, nullptr);
      if (trial_loss <= loss - 1e-4 * step * gnorm2) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) {
      fit.converged = true;  // no further decrease representable
      break;
    }
    fit.weights = std::move(trial);
    const double previous = loss;
    loss = detail::logistic_objective(xs, d, fit.weights, l2, &grad);
    fit.loss_history.push_back(loss);
    step = std::min(step * 2.0, 64.0);
    if (previous - loss < tol * std::max(1.0, std::abs(previous))) {
      fit.converged = true;
      break;
    }
  }
  fit.iterations = std::min(fit.iterations, max_iter);
  return fit;
}

}  // namespace orthoate
