#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "hpcad/error.hpp"

namespace hpcad {

inline double mean(std::span<const double> values) {
  if (values.empty()) throw Error("mean: empty input");
  double sum = 0.0;
  for (double v : values) sum += v;
  return sum / static_cast<double>(values.size());
}

/// Unbiased sample variance (n-1 denominator).
inline double variance(std::span<const double> values) {
  if (values.size() < 2) throw Error("variance: need at least 2 values");
  const double m = mean(values);
  double ss = 0.0;
  for (double v : values) ss += (v - m) * (v - m);
  return ss / static_cast<double>(values.size() - 1);
}

inline double median(std::vector<double> values) {
  if (values.empty()) throw Error("median: empty input");
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  if (n % 2 == 1) return values[n / 2];
  return 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

/// Quantile with linear interpolation between order statistics.
inline double quantile(std::vector<double> values, double p) {
  if (values.empty()) throw Error("quantile: empty input");
  if (p < 0.0 || p > 1.0) throw Error("quantile: p outside [0,1]");
  std::sort(values.begin(), values.end());
  const double h = p * static_cast<double>(values.size() - 1);
  const std::size_t lo = static_cast<std::size_t>(h);
  if (lo + 1 >= values.size()) return values.back();
  const double frac = h - static_cast<double>(lo);
  return values[lo] + frac * (values[lo + 1] - values[lo]);
}

}  // namespace hpcad
