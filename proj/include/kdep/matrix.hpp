#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

#include "kdep/errors.hpp"

namespace kdep {

// Dense row-major matrix of doubles: N samples by D channels. The one
// currency every module trades in.
class FeatureMatrix {
 public:
  FeatureMatrix() = default;

  FeatureMatrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), values_(rows * cols, fill) {
    if (rows == 0 || cols == 0) {
      throw DimensionError("FeatureMatrix requires at least 1 row and 1 column");
    }
  }

  static FeatureMatrix from_rows(
      std::initializer_list<std::initializer_list<double>> rows) {
    const std::size_t n = rows.size();
    const std::size_t d = n == 0 ? 0 : rows.begin()->size();
    FeatureMatrix m(n, d);
    std::size_t i = 0;
    for (const auto& row : rows) {
      if (row.size() != d) {
        throw DimensionError("ragged initializer for FeatureMatrix");
      }
      std::size_t j = 0;
      for (double v : row) m(i, j++) = v;
      ++i;
    }
    return m;
  }

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  bool empty() const { return values_.empty(); }

  double& operator()(std::size_t r, std::size_t c) {
    return values_[r * cols_ + c];
  }
  double operator()(std::size_t r, std::size_t c) const {
    return values_[r * cols_ + c];
  }

  std::span<double> row(std::size_t r) {
    return {values_.data() + r * cols_, cols_};
  }
  std::span<const double> row(std::size_t r) const {
    return {values_.data() + r * cols_, cols_};
  }

  double* data() { return values_.data(); }
  const double* data() const { return values_.data(); }
  std::size_t size() const { return values_.size(); }

  bool all_finite() const {
    return std::all_of(values_.begin(), values_.end(),
                       [](double v) { return std::isfinite(v); });
  }

  bool operator==(const FeatureMatrix& o) const {
    return rows_ == o.rows_ && cols_ == o.cols_ && values_ == o.values_;
  }

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> values_;
};

// Per-channel mean and population (1/N) standard deviation.
struct ChannelStats {
  std::vector<double> means;
  std::vector<double> stds;
  std::size_t channels = 0;
};

inline ChannelStats channel_stats(const FeatureMatrix& x) {
  if (!x.all_finite()) {
    throw NumericError("channel_stats: input contains NaN or Inf");
  }
  const std::size_t n = x.rows();
  const std::size_t d = x.cols();
  ChannelStats s;
  s.channels = d;
  s.means.assign(d, 0.0);
  s.stds.assign(d, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < d; ++j) s.means[j] += x(i, j);
  }
  for (std::size_t j = 0; j < d; ++j) s.means[j] /= static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < d; ++j) {
      const double dev = x(i, j) - s.means[j];
      s.stds[j] += dev * dev;
    }
  }
  for (std::size_t j = 0; j < d; ++j) {
    s.stds[j] = std::sqrt(s.stds[j] / static_cast<double>(n));
  }
  return s;
}

// Largest over smallest channel std. The denominator is floored at eps so
// a dead (constant) channel yields a finite, large ratio instead of Inf.
inline double std_ratio(const ChannelStats& stats, double eps) {
  if (eps <= 0.0) throw ParamError("std_ratio: eps must be positive");
  if (stats.stds.empty()) throw DimensionError("std_ratio: empty stats");
  double lo = stats.stds[0];
  double hi = stats.stds[0];
  for (double v : stats.stds) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  return hi / std::max(lo, eps);
}

}  // namespace kdep
