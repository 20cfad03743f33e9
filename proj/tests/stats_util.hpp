#pragma once

// Test oracles shared by the unit tests and the acceptance runner.

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "cndm/common.hpp"
#include "cndm/model.hpp"

namespace testutil {

/// One-sample Kolmogorov-Smirnov statistic against U(0, 1).
inline double ks_uniform(std::vector<double> u) {
  std::sort(u.begin(), u.end());
  const double n = static_cast<double>(u.size());
  double d = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    const double v = std::clamp(u[i], 0.0, 1.0);
    d = std::max({d, (static_cast<double>(i) + 1.0) / n - v, v - static_cast<double>(i) / n});
  }
  return d;
}

/// Central difference with one Richardson step: O(h^4) truncation error.
inline double richardson(const std::function<double(double)>& f, double x, double h) {
  const auto d = [&](double s) { return (f(x + s) - f(x - s)) / (2.0 * s); };
  return (4.0 * d(0.5 * h) - d(h)) / 3.0;
}

/// Textbook serial recurrence on complex numbers, written independently of
/// the library's scan types.
inline std::vector<cndm::cplx> naive_recurrence(const std::vector<cndm::cplx>& x0,
                                                const std::vector<cndm::cplx>& a,
                                                const std::vector<cndm::cplx>& b) {
  const std::size_t m = x0.size();
  const std::size_t n = b.size() / m;
  std::vector<cndm::cplx> out(n * m);
  std::vector<cndm::cplx> x = x0;
  for (std::size_t t = 0; t < n; ++t)
    for (std::size_t j = 0; j < m; ++j) {
      x[j] = a[t * m + j] * x[j] + b[t * m + j];
      out[t * m + j] = x[j];
    }
  return out;
}

}  // namespace testutil
