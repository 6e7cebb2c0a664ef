#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include "fusionfm/errors.hpp"

namespace fusionfm::flow {

// 1-D optimal transport between equal-size empirical distributions: after
// sorting, the i-th order statistics are matched.
struct WassersteinResult {
  double w1 = 0.0;
  double w2 = 0.0;  // the metric, i.e. sqrt of the mean squared matched gap
};

[[nodiscard]] inline WassersteinResult wasserstein_1d(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw DimensionError("wasserstein_1d expects equal-size samples");
  if (a.empty()) throw DimensionError("wasserstein_1d on empty samples");
  std::vector<double> sa(a.begin(), a.end()), sb(b.begin(), b.end());
  std::sort(sa.begin(), sa.end());
  std::sort(sb.begin(), sb.end());
  double s1 = 0.0, s2 = 0.0;
  for (std::size_t i = 0; i < sa.size(); ++i) {
    const double d = std::abs(sa[i] - sb[i]);
    s1 += d;
    s2 += d * d;
  }
  const double n = static_cast<double>(sa.size());
  return {s1 / n, std::sqrt(s2 / n)};
}

}  // namespace fusionfm::flow
