#pragma once

// Uniform front end over the outcome and propensity learners. Estimators
// only see OutcomeModel / PropensityModel, so fitted learners, true
// nuisances of a simulation and test doubles are interchangeable.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "orthoate/error.hpp"
#include "orthoate/matrix.hpp"
#include "orthoate/nuisance/forest.hpp"
#include "orthoate/nuisance/lasso.hpp"
#include "orthoate/nuisance/logistic.hpp"
#include "orthoate/random.hpp"

namespace orthoate {

enum class RegressorKind { lasso, forest };
enum class ClassifierKind { logistic, forest };

struct RegressorFit {
  std::variant<LassoFit, ForestRegressorFit> model;

  RegressorKind kind() const {
    return std::holds_alternative<LassoFit>(model) ? RegressorKind::lasso : RegressorKind::forest;
  }
};

struct PropensityFit {
  std::variant<LogisticFit, ForestClassifierFit> model;
  int n_treatments = 2;

  ClassifierKind kind() const {
    return std::holds_alternative<LogisticFit>(model) ? ClassifierKind::logistic
                                                      : ClassifierKind::forest;
  }
};

inline std::vector<double> predict_outcome(const RegressorFit& fit, const FeatureMatrix& x) {
  return std::visit([&](const auto& m) { return m.predict(x); }, fit.model);
}

/// Class probabilities; rows sum to one.
inline ProbabilityMatrix predict_propensity(const PropensityFit& fit, const FeatureMatrix& x) {
  return std::visit([&](const auto& m) { return m.predict(x); }, fit.model);
}

/// Clamps every probability into [floor, 1 - floor] (rows are not
/// renormalised). Returns the number of clamped entries.
inline std::size_t apply_propensity_floor(ProbabilityMatrix& probs, double floor) {
  if (floor <= 0.0) return 0;
  if (floor >= 0.5) throw InvalidArgument("propensity floor must be below 0.5");
  std::size_t clamped = 0;
  for (std::size_t i = 0; i < probs.rows(); ++i)
    for (double& v : probs.row(i)) {
      const double c = std::clamp(v, floor, 1.0 - floor);
      if (c != v) ++clamped;
      v = c;
    }
  return clamped;
}

/// Prediction contract for g^i(.) of one treatment arm.
class OutcomeModel {
 public:
  virtual ~OutcomeModel() = default;
  virtual std::vector<double> predict(const FeatureMatrix& x) const = 0;
};

/// Prediction contract for (pi^1(.), ..., pi^n(.)).
class PropensityModel {
 public:
  virtual ~PropensityModel() = default;
  virtual int n_treatments() const = 0;
  virtual ProbabilityMatrix predict(const FeatureMatrix& x) const = 0;
};

class FittedOutcomeModel final : public OutcomeModel {
 public:
  explicit FittedOutcomeModel(RegressorFit fit) : fit_(std::move(fit)) {}
  std::vector<double> predict(const FeatureMatrix& x) const override { return predict_outcome(fit_, x); }
  const RegressorFit& fit() const noexcept { return fit_; }

 private:
  RegressorFit fit_;
};

class FittedPropensityModel final : public PropensityModel {
 public:
  explicit FittedPropensityModel(PropensityFit fit) : fit_(std::move(fit)) {}
  int n_treatments() const override { return fit_.n_treatments; }
  ProbabilityMatrix predict(const FeatureMatrix& x) const override { return predict_propensity(fit_, x); }

 private:
  PropensityFit fit_;
};

/// Constant predictions, for baselines and hand-worked fixtures.
class ConstantOutcomeModel final : public OutcomeModel {
 public:
  explicit ConstantOutcomeModel(double value) : value_(value) {}
  std::vector<double> predict(const FeatureMatrix& x) const override {
    return std::vector<double>(x.rows(), value_);
  }

 private:
  double value_;
};

class ConstantPropensityModel final : public PropensityModel {
 public:
  explicit ConstantPropensityModel(std::vector<double> probs) : probs_(std::move(probs)) {}
  int n_treatments() const override { return static_cast<int>(probs_.size()); }
  ProbabilityMatrix predict(const FeatureMatrix& x) const override {
    ProbabilityMatrix out(x.rows(), probs_.size());
    for (std::size_t i = 0; i < x.rows(); ++i) std::copy(probs_.begin(), probs_.end(), out.row(i).begin());
    return out;
  }

 private:
  std::vector<double> probs_;
};

/// Wraps a propensity model and perturbs its log-probabilities with i.i.d.
/// N(0, sd^2) noise before renormalising. Noise for the i-th row of a call
/// comes from stream (seed, i), so repeated calls on the same matrix agree.
class LogitNoisePropensityModel final : public PropensityModel {
 public:
  LogitNoisePropensityModel(std::shared_ptr<const PropensityModel> base, double sd, std::uint64_t seed)
      : base_(std::move(base)), sd_(sd), seed_(seed) {}
  int n_treatments() const override { return base_->n_treatments(); }
  ProbabilityMatrix predict(const FeatureMatrix& x) const override {
    ProbabilityMatrix p = base_->predict(x);
    for (std::size_t i = 0; i < p.rows(); ++i) {
      Rng rng = make_stream(seed_, {static_cast<std::uint64_t>(i)});
      auto row = p.row(i);
      for (double& v : row) v = std::log(std::max(v, 1e-300)) + sd_ * standard_normal(rng);
      detail::softmax_row(row);
    }
    return p;
  }

 private:
  std::shared_ptr<const PropensityModel> base_;
  double sd_;
  std::uint64_t seed_;
};

/// Learner choice and hyper-parameters for one nuisance.
struct RegressorSpec {
  RegressorKind kind = RegressorKind::lasso;
  std::vector<double> lambda_grid{1e-3, 1e-2, 1e-1};
  int cv_folds = 5;
  int max_iter = 1000;
  double tol = 1e-7;
  ForestOptions forest{};
};

struct ClassifierSpec {
  ClassifierKind kind = ClassifierKind::logistic;
  double l2 = 1e-4;
  int max_iter = 500;
  double tol = 1e-7;
  ForestOptions forest{};
};

inline std::string to_string(RegressorKind k) { return k == RegressorKind::lasso ? "lasso" : "rf"; }
inline std::string to_string(ClassifierKind k) { return k == ClassifierKind::logistic ? "lr" : "rf"; }

inline RegressorFit fit_regressor(const RegressorSpec& spec, const FeatureMatrix& x,
                                  std::span<const double> y, std::uint64_t seed) {
  if (spec.kind == RegressorKind::lasso)
    return {fit_lasso_cv(x, y, spec.lambda_grid, spec.cv_folds, seed, spec.max_iter, spec.tol)};
  ForestOptions opt = spec.forest;
  opt.seed = seed;
  return {fit_forest_regress(x, y, opt)};
}

inline PropensityFit fit_classifier(const ClassifierSpec& spec, const FeatureMatrix& x,
                                    std::span<const int> d, int n_treatments, std::uint64_t seed) {
  if (spec.kind == ClassifierKind::logistic)
    return {fit_logistic(x, d, n_treatments, spec.l2, spec.max_iter, spec.tol), n_treatments};
  ForestOptions opt = spec.forest;
  opt.seed = seed;
  return {fit_forest_classify(x, d, n_treatments, opt), n_treatments};
}

}  // namespace orthoate
