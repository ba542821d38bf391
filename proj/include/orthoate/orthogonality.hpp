#pragma once

// Monte-Carlo check of the higher-order orthogonal condition: finite
// difference Gateaux derivatives of E[psi] in the two nuisance arguments,
// evaluated at the true nuisances of a synthetic model.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "orthoate/error.hpp"
#include "orthoate/numeric.hpp"
#include "orthoate/random.hpp"
#include "orthoate/score.hpp"

namespace orthoate {

/// One draw of (1{D = d_i}, Y^i, Z) together with the true nuisances.
struct ModelDraw {
  int treated = 0;
  double outcome = 0.0;     // potential outcome Y^i
  double g = 0.0;           // g^i(Z)
  double propensity = 0.5;  // pi^i(Z)
  std::vector<double> z;
};

/// Synthetic single-arm model exposing its true nuisances.
class SyntheticModel {
 public:
  virtual ~SyntheticModel() = default;
  virtual int dimension() const = 0;
  virtual void sample(Rng& rng, ModelDraw& out) const = 0;
  /// theta^i = E[g^i(Z)].
  virtual double theta() const = 0;
  /// Unconditional residual moments E[nu^q], q = 1..max_order.
  virtual Moments residual_moments(int max_order) const = 0;
  /// E[1 / pi^i(Z)].
  virtual double mean_inverse_propensity() const = 0;
};

/// Z ~ N(0, I_p); binary treatment; Y^i = e^{sqrt(d)} (a'Z + 1)^2 + sd * eps.
///
/// The propensity is either two-level, pi = low for z_1 < 0 and high
/// otherwise, or logistic in Z. With high = 1 - low the two-level law keeps
/// Var(nu | Z) constant, which is the independence the unconditional
/// moments of the score rely on through order two.
class BinaryQuadraticModel final : public SyntheticModel {
 public:
  enum class PropensityLaw { two_level, logistic };

  struct Params {
    std::vector<double> outcome_coeffs{0.3, 0.2};
    double d_level = 1.0;
    double noise_sd = 1.0;
    PropensityLaw law = PropensityLaw::two_level;
    double pi_low = 0.3;
    double pi_high = 0.7;
    double logit_intercept = -0.85;
    std::vector<double> logit_coeffs{0.4, -0.2};
  };

  explicit BinaryQuadraticModel(Params p) : p_(std::move(p)) {
    if (p_.outcome_coeffs.empty()) throw InvalidArgument("model needs at least one covariate");
    if (p_.law == PropensityLaw::logistic && p_.logit_coeffs.size() != p_.outcome_coeffs.size())
      throw ShapeMismatch("logit_coeffs must match the covariate dimension");
    if (p_.law == PropensityLaw::two_level &&
        !(p_.pi_low > 0 && p_.pi_low < 1 && p_.pi_high > 0 && p_.pi_high < 1))
      throw InvalidArgument("two-level propensities must lie in (0, 1)");
  }

  BinaryQuadraticModel() : BinaryQuadraticModel(Params{}) {}

  int dimension() const override { return static_cast<int>(p_.outcome_coeffs.size()); }

  double g(const std::vector<double>& z) const {
    double s = 1.0;
    for (std::size_t j = 0; j < z.size(); ++j) s += p_.outcome_coeffs[j] * z[j];
    return std::exp(std::sqrt(p_.d_level)) * s * s;
  }

  double propensity(const std::vector<double>& z) const {
    if (p_.law == PropensityLaw::two_level) return z[0] < 0.0 ? p_.pi_low : p_.pi_high;
    double s = p_.logit_intercept;
    for (std::size_t j = 0; j < z.size(); ++j) s += p_.logit_coeffs[j] * z[j];
    return 1.0 / (1.0 + std::exp(-s));
  }

  void sample(Rng& rng, ModelDraw& out) const override {
    out.z.resize(p_.outcome_coeffs.size());
    for (double& v : out.z) v = standard_normal(rng);
    out.g = g(out.z);
    out.propensity = propensity(out.z);
    out.treated = uniform01(rng) < out.propensity ? 1 : 0;
    out.outcome = out.g + p_.noise_sd * standard_normal(rng);
  }

  double theta() const override {
    double norm2 = 0.0;
    for (double a : p_.outcome_coeffs) norm2 += a * a;
    return std::exp(std::sqrt(p_.d_level)) * (norm2 + 1.0);
  }

  Moments residual_moments(int max_order) const override {
    if (p_.law == PropensityLaw::two_level) {
      std::vector<double> m(static_cast<std::size_t>(max_order));
      const Moments lo = bernoulli_residual_moments(p_.pi_low, max_order);
      const Moments hi = bernoulli_residual_moments(p_.pi_high, max_order);
      for (int q = 1; q <= max_order; ++q) m[static_cast<std::size_t>(q - 1)] = 0.5 * (lo[q] + hi[q]);
      return Moments(std::move(m));
    }
    // Conditional Bernoulli moments are exact; only the average over Z is
    // numerical, on a fixed quasi-large sample.
    std::vector<double> acc(static_cast<std::size_t>(max_order), 0.0);
    Rng rng = make_stream(0x5eed, {static_cast<std::uint64_t>(max_order)});
    std::vector<double> z(p_.outcome_coeffs.size());
    constexpr int kDraws = 1 << 20;
    for (int n = 0; n < kDraws; ++n) {
      for (double& v : z) v = standard_normal(rng);
      const double pi = propensity(z);
      for (int q = 1; q <= max_order; ++q)
        acc[static_cast<std::size_t>(q - 1)] += pi * ipow(1 - pi, q) + (1 - pi) * ipow(-pi, q);
    }
    for (double& v : acc) v /= kDraws;
    return Moments(std::move(acc));
  }

  double mean_inverse_propensity() const override {
    if (p_.law == PropensityLaw::two_level) return 0.5 * (1.0 / p_.pi_low + 1.0 / p_.pi_high);
    Rng rng = make_stream(0x5eed, {0xabcdef});
    std::vector<double> z(p_.outcome_coeffs.size());
    constexpr int kDraws = 1 << 20;
    double acc = 0.0;
    for (int n = 0; n < kDraws; ++n) {
      for (double& v : z) v = standard_normal(rng);
      acc += 1.0 / propensity(z);
    }
    return acc / kDraws;
  }

  const Params& params() const noexcept { return p_; }

 private:
  Params p_;
};

/// Fixed perturbation directions h(Z) for the nuisance arguments.
enum class Direction { constant, sigmoid };

inline double direction_value(Direction d, const std::vector<double>& z) {
  if (d == Direction::constant) return 1.0;
  double s = 0.0;
  for (double v : z) s += 1.0 / (1.0 + std::exp(-v));
  return s / static_cast<double>(z.size());
}

inline std::string direction_name(Direction d) {
  return d == Direction::constant ? "constant" : "sigmoid";
}

struct DerivativeEstimate {
  int alpha_g = 0;  // order in the outcome-regression argument
  int alpha_a = 0;  // order in the propensity argument
  Direction dir_g = Direction::constant;
  Direction dir_a = Direction::constant;
  double estimate = 0.0;
  double std_error = 0.0;
  bool analytic_zero = false;
  bool violation = false;
};

struct OrthogonalityReport {
  std::string score;
  int order = 0;
  std::vector<DerivativeEstimate> derivatives;

  bool any_violation() const {
    return std::any_of(derivatives.begin(), derivatives.end(),
                       [](const DerivativeEstimate& d) { return d.violation; });
  }
  /// Violations restricted to total order <= max_order.
  bool any_violation_up_to(int max_order) const {
    return std::any_of(derivatives.begin(), derivatives.end(), [&](const DerivativeEstimate& d) {
      return d.violation && d.alpha_g + d.alpha_a <= max_order;
    });
  }
  const DerivativeEstimate* find(int ag, int aa, Direction dg, Direction da) const {
    for (const auto& d : derivatives)
      if (d.alpha_g == ag && d.alpha_a == aa && d.dir_g == dg && d.dir_a == da) return &d;
    return nullptr;
  }
};

struct OrthogonalityOptions {
  int order = 2;
  double epsilon = 1e-3;
  std::int64_t n_draws = 200000;
  std::uint64_t seed = 1;
  std::vector<Direction> directions{Direction::constant, Direction::sigmoid};
};

namespace detail {

/// Central difference stencil of order n with step eps: pairs of
/// (offset in units of eps, weight), weights already divided by eps^n.
inline std::vector<std::pair<double, double>> central_stencil(int n, double eps) {
  std::vector<std::pair<double, double>> s;
  if (n == 0) {
    s.emplace_back(0.0, 1.0);
    return s;
  }
  const double scale = ipow(1.0 / eps, n);
  for (int j = 0; j <= n; ++j) {
    const double w = ((j % 2 == 0) ? 1.0 : -1.0) * static_cast<double>(binomial(n, j)) * scale;
    s.emplace_back(0.5 * n - j, w);
  }
  return s;
}

inline constexpr double kPropensityClampLo = 0.01;
inline constexpr double kPropensityClampHi = 0.99;
inline constexpr std::int64_t kChunk = 4096;

}  // namespace detail

/// Estimates every derivative D^alpha E[psi] with 1 <= |alpha| <= order
/// along each pair of directions. Moments inside the score are plug-in
/// constants and are not perturbed. Derivatives with alpha_g >= 2 are
/// reported as exact zeros since psi is affine in g.
inline OrthogonalityReport check_orthogonality(const ScoreFunction& score,
                                               const SyntheticModel& model,
                                               const OrthogonalityOptions& opt) {
  if (opt.order < 1) throw InvalidArgument("order must be >= 1");
  if (opt.order > 8) throw InvalidArgument("order above 8 is not supported");
  if (opt.n_draws < 2) throw InvalidArgument("n_draws must be >= 2");
  if (!(opt.epsilon > 0)) throw InvalidArgument("epsilon must be positive");

  OrthogonalityReport report;
  report.score = score_label(score);
  report.order = opt.order;

  struct Slot {
    DerivativeEstimate est;
    std::vector<std::pair<double, double>> sg, sa;
    CompensatedSum sum, sum_sq;
  };
  std::vector<Slot> slots;
  for (int total = 1; total <= opt.order; ++total)
    for (int ag = 0; ag <= total; ++ag) {
      const int aa = total - ag;
      for (Direction dg : opt.directions)
        for (Direction da : opt.directions) {
          Slot s;
          s.est.alpha_g = ag;
          s.est.alpha_a = aa;
          s.est.dir_g = dg;
          s.est.dir_a = da;
          s.est.analytic_zero = ag >= 2;
          s.sg = detail::central_stencil(ag, opt.epsilon);
          s.sa = detail::central_stencil(aa, opt.epsilon);
          slots.push_back(std::move(s));
        }
    }

  const double theta = model.theta();
  ModelDraw draw;
  const std::int64_t n_chunks = (opt.n_draws + detail::kChunk - 1) / detail::kChunk;
  for (std::int64_t c = 0; c < n_chunks; ++c) {
    Rng rng = make_stream(opt.seed, {static_cast<std::uint64_t>(c)});
    const std::int64_t end = std::min(opt.n_draws, (c + 1) * detail::kChunk);
    for (std::int64_t n = c * detail::kChunk; n < end; ++n) {
      model.sample(rng, draw);
      for (Slot& s : slots) {
        if (s.est.analytic_zero) continue;
        const double hg = direction_value(s.est.dir_g, draw.z);
        const double ha = direction_value(s.est.dir_a, draw.z);
        double v = 0.0;
        for (const auto& [og, wg] : s.sg)
          for (const auto& [oa, wa] : s.sa) {
            const double g = draw.g + og * opt.epsilon * hg;
            const double a = std::clamp(draw.propensity + oa * opt.epsilon * ha,
                                        detail::kPropensityClampLo, detail::kPropensityClampHi);
            v += wg * wa * score_value(score, draw.treated, draw.outcome, g, a, theta);
          }
        s.sum.add(v);
        s.sum_sq.add(v * v);
      }
    }
  }

  const double n = static_cast<double>(opt.n_draws);
  for (Slot& s : slots) {
    if (!s.est.analytic_zero) {
      const double mu = s.sum.value() / n;
      const double var = std::max(0.0, (s.sum_sq.value() - n * mu * mu) / (n - 1.0));
      s.est.estimate = mu;
      s.est.std_error = std::sqrt(var / n);
      s.est.violation = std::abs(mu) > 3.0 * s.est.std_error;
    }
    report.derivatives.push_back(s.est);
  }
  return report;
}

}  // namespace orthoate
