#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "orthoate/error.hpp"

namespace orthoate {

/// Dense row-major matrix of covariates.
class FeatureMatrix {
 public:
  FeatureMatrix() = default;
  FeatureMatrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), values_(rows * cols, fill) {}
  FeatureMatrix(std::size_t rows, std::size_t cols, std::vector<double> values)
      : rows_(rows), cols_(cols), values_(std::move(values)) {
    if (values_.size() != rows_ * cols_) throw ShapeMismatch("FeatureMatrix: size mismatch");
  }

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }

  double& operator()(std::size_t i, std::size_t j) noexcept { return values_[i * cols_ + j]; }
  double operator()(std::size_t i, std::size_t j) const noexcept { return values_[i * cols_ + j]; }

  std::span<const double> row(std::size_t i) const noexcept {
    return {values_.data() + i * cols_, cols_};
  }
  std::span<double> row(std::size_t i) noexcept { return {values_.data() + i * cols_, cols_}; }

  std::span<const double> data() const noexcept { return values_; }

  bool all_finite() const noexcept {
    for (double v : values_)
      if (!std::isfinite(v)) return false;
    return true;
  }

  FeatureMatrix select_rows(std::span<const std::size_t> idx) const {
    FeatureMatrix out(idx.size(), cols_);
    for (std::size_t r = 0; r < idx.size(); ++r) {
      const auto src = row(idx[r]);
      std::copy(src.begin(), src.end(), out.row(r).begin());
    }
    return out;
  }

  friend bool operator==(const FeatureMatrix&, const FeatureMatrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> values_;
};

template <typename T>
std::vector<T> select(std::span<const T> v, std::span<const std::size_t> idx) {
  std::vector<T> out;
  out.reserve(idx.size());
  for (std::size_t i : idx) out.push_back(v[i]);
  return out;
}

/// Per-column centring and scaling learnt on a training block.
struct Standardization {
  std::vector<double> mean;
  std::vector<double> scale;

  static Standardization fit(const FeatureMatrix& x) {
    Standardization s;
    const std::size_t n = x.rows(), p = x.cols();
    s.mean.assign(p, 0.0);
    s.scale.assign(p, 1.0);
    if (n == 0) return s;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < p; ++j) s.mean[j] += x(i, j);
    for (double& m : s.mean) m /= static_cast<double>(n);
    std::vector<double> ss(p, 0.0);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < p; ++j) {
        const double d = x(i, j) - s.mean[j];
        ss[j] += d * d;
      }
    for (std::size_t j = 0; j < p; ++j) {
      const double sd = std::sqrt(ss[j] / static_cast<double>(n));
      // Constant columns are left unscaled.
      s.scale[j] = sd > 1e-12 ? sd : 1.0;
    }
    return s;
  }

  FeatureMatrix apply(const FeatureMatrix& x) const {
    if (x.cols() != mean.size()) throw ShapeMismatch("Standardization: column count mismatch");
    FeatureMatrix out = x;
    for (std::size_t i = 0; i < x.rows(); ++i)
      for (std::size_t j = 0; j < x.cols(); ++j) out(i, j) = (x(i, j) - mean[j]) / scale[j];
    return out;
  }
};

}  // namespace orthoate
