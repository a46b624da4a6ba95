#pragma once

// Small statistics toolbox: binomial intervals, two-sample KS, least
// squares and running moments.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

#include "reldiff/core.hpp"

namespace reldiff {

struct Interval {
  double lo = 0.0;
  double hi = 1.0;
};

/// Wilson score interval for k successes out of n at normal quantile z.
inline Interval wilson_interval(std::size_t k, std::size_t n, double z = 1.959963984540054) {
  if (n == 0) return {0.0, 1.0};
  const double nn = static_cast<double>(n);
  const double p = static_cast<double>(k) / nn;
  const double z2 = z * z;
  const double denom = 1.0 + z2 / nn;
  const double centre = (p + z2 / (2.0 * nn)) / denom;
  const double half = z * std::sqrt(p * (1.0 - p) / nn + z2 / (4.0 * nn * nn)) / denom;
  return {std::max(0.0, centre - half), std::min(1.0, centre + half)};
}

inline constexpr double kZOneSided95 = 1.6448536269514722;

/// One-sided test of H0: p >= bound at 95%. Rejected (returns false) only if
/// the one-sided Wilson upper bound falls below `bound`.
inline bool consistent_with_lower_bound(std::size_t k, std::size_t n, double bound) {
  return wilson_interval(k, n, kZOneSided95).hi >= bound;
}

/// One-sided 95% evidence that p > 0: the Wilson lower bound is positive.
/// With k = 0 the lower bound is exactly 0.
inline bool positive_at_95(std::size_t k, std::size_t n) {
  return k > 0 && wilson_interval(k, n, kZOneSided95).lo > 0.0;
}

struct KsResult {
  double statistic = 0.0;  // sup |F_a - F_b|
  double critical = 0.0;   // threshold at the requested level
  bool pass = true;
};

/// Asymptotic KS coefficient for a two-sided level of 0.27%, the tail mass
/// beyond three standard deviations: sqrt(-ln(0.0027 / 2) / 2).
inline const double kKsThreeSigma = std::sqrt(-std::log(0.0026997960632601866 / 2.0) / 2.0);

/// Two-sample Kolmogorov-Smirnov. `c_alpha` is the asymptotic coefficient
/// (1.36 for 5%, 1.63 for 1%, 1.73 for 0.5%, 1.95 for 0.1%).
inline KsResult ks_two_sample(std::vector<double> a, std::vector<double> b, double c_alpha = 1.36) {
  KsResult out;
  if (a.empty() || b.empty()) throw PreconditionError("KS needs two non-empty samples");
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  const double na = static_cast<double>(a.size()), nb = static_cast<double>(b.size());
  std::size_t i = 0, j = 0;
  double d = 0.0;
  while (i < a.size() && j < b.size()) {
    const double x = std::min(a[i], b[j]);
    while (i < a.size() && a[i] <= x) ++i;
    while (j < b.size() && b[j] <= x) ++j;
    d = std::max(d, std::abs(static_cast<double>(i) / na - static_cast<double>(j) / nb));
  }
  out.statistic = d;
  out.critical = c_alpha * std::sqrt((na + nb) / (na * nb));
  out.pass = d <= out.critical;
  return out;
}

struct LinearFit {
  double slope = kNaN;
  double intercept = kNaN;
  double slope_stderr = kNaN;
};

/// Ordinary least squares y = intercept + slope x.
inline LinearFit ols(const std::vector<double>& x, const std::vector<double>& y) {
  LinearFit out;
  const std::size_t n = std::min(x.size(), y.size());
  if (n < 2) return out;
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
  }
  if (sxx == 0.0) return out;
  out.slope = sxy / sxx;
  out.intercept = my - out.slope * mx;
  if (n > 2) {
    double rss = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double e = y[i] - out.intercept - out.slope * x[i];
      rss += e * e;
    }
    out.slope_stderr = std::sqrt(rss / static_cast<double>(n - 2) / sxx);
  }
  return out;
}

/// Welford accumulator; merge order is fixed by the caller, so results are
/// reproducible.
struct RunningStats {
  std::size_t n = 0;
  double mean = 0.0;
  double m2 = 0.0;

  void add(double x) {
    ++n;
    const double d = x - mean;
    mean += d / static_cast<double>(n);
    m2 += d * (x - mean);
  }
  double variance() const { return n > 1 ? m2 / static_cast<double>(n - 1) : kNaN; }
  double stderr_mean() const { return n > 1 ? std::sqrt(variance() / static_cast<double>(n)) : kNaN; }
};

}  // namespace reldiff
