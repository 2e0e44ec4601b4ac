#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

namespace mmglmm {

// Empirical quantile of an ascending-sorted sample with linear interpolation
// between order statistics: position h = (n - 1) p on the 0-based index.
inline double sorted_quantile(std::span<const double> sorted, double p) {
  if (sorted.empty()) return std::nan("");
  if (p <= 0.0) return sorted.front();
  if (p >= 1.0) return sorted.back();
  const double h = static_cast<double>(sorted.size() - 1) * p;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

inline double quantile(std::vector<double> values, double p) {
  std::sort(values.begin(), values.end());
  return sorted_quantile(values, p);
}

}  // namespace mmglmm
