#pragma once

// Higher-order orthogonal score for the mean potential outcome of one
// treatment arm: coefficient construction (recursive and by direct solve),
// the polynomial correction weight A(D, Z; a) and the score itself.

#include <Eigen/Dense>

#include <cmath>
#include <span>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "orthoate/error.hpp"
#include "orthoate/numeric.hpp"
#include "orthoate/random.hpp"

namespace orthoate {

/// Smallest |E[nu^r]| that is inverted when building coefficients.
inline constexpr double kEpsilonMoment = 1e-8;

/// Residual moments m[q] = E[(1{D = d_i} - pi_i(Z))^q], q = 1..max_order.
class Moments {
 public:
  Moments() = default;

  explicit Moments(std::vector<double> values) : values_(std::move(values)) {
    if (values_.empty()) throw InvalidArgument("Moments: max_order must be >= 1");
    for (double v : values_) {
      if (!std::isfinite(v)) throw NonFinite("Moments: non-finite moment");
      // Residuals live in [-1, 1].
      if (std::abs(v) > 1.0 + 1e-12) throw InvalidArgument("Moments: |m[q]| > 1");
    }
    if (values_.size() >= 2 && values_[1] < 0.0)
      throw InvalidArgument("Moments: negative second moment");
  }

  int max_order() const noexcept { return static_cast<int>(values_.size()); }

  /// m[q] for 0 <= q <= max_order, with m[0] = 1.
  double operator[](int q) const {
    if (q == 0) return 1.0;
    if (q < 0 || q > max_order()) throw InvalidArgument("Moments: order out of range");
    return values_[static_cast<std::size_t>(q - 1)];
  }

  std::span<const double> values() const noexcept { return values_; }

  friend bool operator==(const Moments&, const Moments&) = default;

 private:
  std::vector<double> values_;
};

/// Exact moments of t - a where t ~ Bernoulli(pi). With a = pi these are
/// the true residual moments; a != pi gives the moments seen under a
/// misspecified propensity.
inline Moments bernoulli_residual_moments(double pi, int max_order, double a) {
  std::vector<double> m(static_cast<std::size_t>(max_order));
  for (int q = 1; q <= max_order; ++q)
    m[static_cast<std::size_t>(q - 1)] = pi * ipow(1.0 - a, q) + (1.0 - pi) * ipow(-a, q);
  return Moments(std::move(m));
}

inline Moments bernoulli_residual_moments(double pi, int max_order) {
  return bernoulli_residual_moments(pi, max_order, pi);
}

/// Coefficients (bar_b_r, b_1..b_{k-1}) of the correction weight.
struct OrthoCoefficients {
  int r = 2;
  int k = 2;
  double bar_b_r = 0.0;
  std::vector<double> b;  // b[q - 1] = b_q, size k - 1

  double b_q(int q) const { return b.at(static_cast<std::size_t>(q - 1)); }
};

namespace detail {
inline void check_orders(int r, int k, const Moments& moments) {
  if (k < 2 || k > r) throw InvalidOrder("k must satisfy 2 <= k <= r");
  if (r > kMaxScoreOrder) throw InvalidOrder("r above supported maximum of 16");
  if (r > moments.max_order()) throw InvalidOrder("moments do not reach order r");
}
}  // namespace detail

/// Builds the coefficients by the descending recursion
///   b_q = -sum_{u=1}^{k-1-q} b_{q+u} C(q+u, q) m[u] - bar_b_r C(r, q) m[r-q],
/// starting from b_{k-1}.
inline OrthoCoefficients compute_coefficients(int r, int k, const Moments& moments) {
  detail::check_orders(r, k, moments);
  const double m_r = moments[r];
  if (std::abs(m_r) < kEpsilonMoment)
    throw DegenerateMoment("|E[nu^" + std::to_string(r) + "]| below threshold; cannot invert");

  OrthoCoefficients c;
  c.r = r;
  c.k = k;
  c.bar_b_r = 1.0 / m_r;
  c.b.assign(static_cast<std::size_t>(k - 1), 0.0);
  for (int q = k - 1; q >= 1; --q) {
    double acc = -c.bar_b_r * static_cast<double>(binomial(r, q)) * moments[r - q];
    for (int u = 1; u <= k - 1 - q; ++u)
      acc -= c.b_q(q + u) * static_cast<double>(binomial(q + u, q)) * moments[u];
    c.b[static_cast<std::size_t>(q - 1)] = acc;
  }
  return c;
}

/// Independent route to the same coefficients: assemble the k x k system
/// over (bar_b_r, b_1..b_{k-1}) from the normalization E[A|Z] = 1 and the
/// vanishing of E[d^q A / da^q | Z] for q = 1..k-1, then solve it densely.
inline OrthoCoefficients solve_coefficients_oracle(int r, int k, const Moments& moments) {
  detail::check_orders(r, k, moments);
  if (std::abs(moments[r]) < kEpsilonMoment)
    throw DegenerateMoment("|E[nu^" + std::to_string(r) + "]| below threshold; system is singular");

  const auto falling = [](int n, int q) {
    double f = 1.0;
    for (int j = 0; j < q; ++j) f *= static_cast<double>(n - j);
    return f;
  };

  Eigen::MatrixXd lhs = Eigen::MatrixXd::Zero(k, k);
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(k);
  // Row 0: the centred terms drop out of E[A], leaving bar_b_r m[r] = 1.
  lhs(0, 0) = moments[r];
  rhs(0) = 1.0;
  for (int q = 1; q <= k - 1; ++q) {
    const double sign = (q % 2 == 0) ? 1.0 : -1.0;
    lhs(q, 0) = sign * falling(r, q) * moments[r - q];
    for (int u = q; u <= k - 1; ++u) lhs(q, u) = sign * falling(u, q) * moments[u - q];
  }

  Eigen::FullPivLU<Eigen::MatrixXd> lu(lhs);
  lu.setThreshold(1e-12);
  if (lu.rank() < k) throw SingularSystem("coefficient system is rank-deficient");
  const Eigen::VectorXd x = lu.solve(rhs);

  OrthoCoefficients c;
  c.r = r;
  c.k = k;
  c.bar_b_r = x(0);
  c.b.resize(static_cast<std::size_t>(k - 1));
  for (int q = 1; q <= k - 1; ++q) c.b[static_cast<std::size_t>(q - 1)] = x(q);
  return c;
}

/// Inputs of the score at one unit.
struct ScoreInput {
  int treated_indicator = 0;      // 1{D = d_i}
  double propensity = 0.5;        // a_i(Z)
  double outcome = 0.0;           // Y
  double outcome_prediction = 0;  // g_i(Z)
  double theta = 0.0;

  void validate() const {
    if (treated_indicator != 0 && treated_indicator != 1)
      throw InvalidArgument("treated_indicator must be 0 or 1");
    if (!(propensity > 0.0 && propensity < 1.0))
      throw InvalidArgument("propensity must lie in (0, 1)");
  }
};

/// A(t, a) = bar_b_r (t - a)^r + sum_q b_q ((t - a)^q - m[q]). No input
/// validation; the estimators call this on clamped predictions in bulk.
inline double correction_weight(int t, double a, const OrthoCoefficients& c,
                                const Moments& moments) noexcept {
  const double nu = static_cast<double>(t) - a;
  double acc = c.bar_b_r * ipow(nu, c.r);
  double p = 1.0;
  for (int q = 1; q < c.k; ++q) {
    p *= nu;
    acc += c.b[static_cast<std::size_t>(q - 1)] * (p - moments[q]);
  }
  return acc;
}

inline double eval_correction(const ScoreInput& in, const OrthoCoefficients& c,
                              const Moments& moments) {
  in.validate();
  return correction_weight(in.treated_indicator, in.propensity, c, moments);
}

/// n-th derivative of A with respect to the propensity argument a.
inline double correction_derivative(int t, double a, const OrthoCoefficients& c, int n) {
  const double nu = static_cast<double>(t) - a;
  const double sign = (n % 2 == 0) ? 1.0 : -1.0;
  const auto term = [&](int power) {
    if (power < n) return 0.0;
    double f = 1.0;
    for (int j = 0; j < n; ++j) f *= static_cast<double>(power - j);
    return sign * f * ipow(nu, power - n);
  };
  double acc = c.bar_b_r * term(c.r);
  for (int q = 1; q < c.k; ++q) acc += c.b[static_cast<std::size_t>(q - 1)] * term(q);
  return acc;
}

inline double eval_score(const ScoreInput& in, const OrthoCoefficients& c,
                         const Moments& moments) {
  const double a_weight = eval_correction(in, c, moments);
  return in.theta - in.outcome_prediction - (in.outcome - in.outcome_prediction) * a_weight;
}

/// First-order (inverse propensity) score:
///   theta - g - 1{D = d_i} (Y - g) / a.
inline double eval_dml_score(const ScoreInput& in) {
  in.validate();
  if (in.treated_indicator == 0) return in.theta - in.outcome_prediction;
  return in.theta - in.outcome_prediction -
         (in.outcome - in.outcome_prediction) / in.propensity;
}

/// Either a higher-order score or the first-order DML score.
struct HigherOrderScore {
  OrthoCoefficients coeffs;
  Moments moments;
};
struct DmlScore {};
using ScoreFunction = std::variant<HigherOrderScore, DmlScore>;

inline std::string score_label(const ScoreFunction& s) {
  if (const auto* h = std::get_if<HigherOrderScore>(&s))
    return "ho(" + std::to_string(h->coeffs.r) + "," + std::to_string(h->coeffs.k) + ")";
  return "dml";
}

/// psi evaluated without input validation (the Gateaux checker pushes the
/// propensity argument around inside (0, 1) itself).
inline double score_value(const ScoreFunction& s, int t, double y, double g, double a,
                          double theta) noexcept {
  if (const auto* h = std::get_if<HigherOrderScore>(&s))
    return theta - g - (y - g) * correction_weight(t, a, h->coeffs, h->moments);
  return t == 0 ? theta - g : theta - g - (y - g) / a;
}

/// Residual moments of a random Bernoulli mixture: with probability w_j the
/// unit has propensity pi_j and residual 1{treated} - pi_j. Such sequences
/// are realizable by construction. Draws whose r-th moment is too close to
/// zero to invert are rejected (odd orders vanish near pi = 0.5).
inline Moments random_mixture_moments(Rng& rng, int max_order, int r, double min_abs_mr = 1e-3) {
  for (;;) {
    const int comps = 1 + static_cast<int>(uniform_index(rng, 3));
    std::vector<double> w(static_cast<std::size_t>(comps)), pi(static_cast<std::size_t>(comps));
    double wsum = 0.0;
    for (int j = 0; j < comps; ++j) {
      w[static_cast<std::size_t>(j)] = uniform(rng, 0.1, 1.0);
      pi[static_cast<std::size_t>(j)] = uniform(rng, 0.05, 0.95);
      wsum += w[static_cast<std::size_t>(j)];
    }
    std::vector<double> m(static_cast<std::size_t>(max_order), 0.0);
    for (int j = 0; j < comps; ++j) {
      const Moments mj = bernoulli_residual_moments(pi[static_cast<std::size_t>(j)], max_order);
      for (int q = 1; q <= max_order; ++q) m[static_cast<std::size_t>(q - 1)] += w[static_cast<std::size_t>(j)] / wsum * mj[q];
    }
    if (std::abs(m[static_cast<std::size_t>(r - 1)]) >= min_abs_mr) return Moments(std::move(m));
  }
}

/// Largest componentwise difference between two coefficient sets, relative
/// to the largest coefficient magnitude of the pair.
inline double coefficient_rel_diff(const OrthoCoefficients& a, const OrthoCoefficients& b) {
  std::vector<double> va{a.bar_b_r}, vb{b.bar_b_r};
  va.insert(va.end(), a.b.begin(), a.b.end());
  vb.insert(vb.end(), b.b.begin(), b.b.end());
  double scale = 0.0, diff = 0.0;
  for (std::size_t i = 0; i < va.size(); ++i) {
    scale = std::max({scale, std::abs(va[i]), std::abs(vb[i])});
    diff = std::max(diff, std::abs(va[i] - vb[i]));
  }
  return scale > 0 ? diff / scale : diff;
}

}  // namespace orthoate
