#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <span>

#include "orthoate/error.hpp"

namespace orthoate {

/// Neumaier-compensated running sum.
class CompensatedSum {
 public:
  void add(double x) noexcept {
    const double t = sum_ + x;
    if (!std::isfinite(t)) {  // keep +-inf / NaN instead of inf - inf
      sum_ = t;
      comp_ = 0.0;
      return;
    }
    if (std::abs(sum_) >= std::abs(x))
      comp_ += (sum_ - t) + x;
    else
      comp_ += (x - t) + sum_;
    sum_ = t;
  }
  double value() const noexcept { return std::isfinite(sum_) ? sum_ + comp_ : sum_; }

 private:
  double sum_ = 0.0;
  double comp_ = 0.0;
};

inline double compensated_sum(std::span<const double> xs) {
  CompensatedSum s;
  for (double x : xs) s.add(x);
  return s.value();
}

inline double mean(std::span<const double> xs) {
  return xs.empty() ? 0.0 : compensated_sum(xs) / static_cast<double>(xs.size());
}

/// Unbiased sample variance; 0 for fewer than two values.
inline double sample_variance(std::span<const double> xs) {
  if (xs.size() < 2) return 0.0;
  const double mu = mean(xs);
  CompensatedSum s;
  for (double x : xs) s.add((x - mu) * (x - mu));
  return s.value() / static_cast<double>(xs.size() - 1);
}

inline constexpr int kMaxScoreOrder = 16;

namespace detail {
constexpr auto make_pascal() {
  std::array<std::array<std::int64_t, kMaxScoreOrder + 1>, kMaxScoreOrder + 1> t{};
  for (int n = 0; n <= kMaxScoreOrder; ++n) {
    t[n][0] = 1;
    for (int j = 1; j <= n; ++j) t[n][j] = t[n - 1][j - 1] + (j <= n - 1 ? t[n - 1][j] : 0);
  }
  return t;
}
inline constexpr auto kPascal = make_pascal();
}  // namespace detail

/// Binomial coefficient C(n, j) for 0 <= j <= n <= 16, exact.
constexpr std::int64_t binomial(int n, int j) {
  if (n < 0 || n > kMaxScoreOrder || j < 0 || j > n)
    throw InvalidArgument("binomial: arguments out of supported range");
  return detail::kPascal[n][j];
}

/// x^n for small non-negative integer n by repeated multiplication.
constexpr double ipow(double x, int n) noexcept {
  double r = 1.0;
  for (int i = 0; i < n; ++i) r *= x;
  return r;
}

}  // namespace orthoate
