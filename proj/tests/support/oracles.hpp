#pragma once

// Reference computations for the tests. None of these call into the code
// under test except for plain data types.

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <numbers>
#include <vector>

#include "reldiff/core.hpp"

namespace oracle {

using reldiff::Mat4;
using reldiff::Vec4;
using Metric = std::function<Mat4(const Vec4&)>;

/// Schwarzschild metric in (t, r, phi, psi), written out independently.
inline Mat4 polar_metric(double R, const Vec4& p) {
  Mat4 g{};
  const double r = p[1], f = 1.0 - R / r, s = std::sin(p[2]);
  g[0][0] = f;
  g[1][1] = -1.0 / f;
  g[2][2] = -r * r;
  g[3][3] = -r * r * s * s;
  return g;
}

/// Schwarzschild metric in Cartesian-like coordinates: pull back of the
/// polar metric through x = r (sin phi cos psi, sin phi sin psi, cos phi),
/// evaluated as g_ab = J^T g_polar J with J = d(polar)/d(cartesian).
inline Mat4 cartesian_metric(double R, const Vec4& x) {
  const double r = std::hypot(x[1], x[2], x[3]);
  const double rho = std::hypot(x[1], x[2]);
  const double phi = std::acos(x[3] / r), psi = std::atan2(x[2], x[1]);
  Mat4 J{};  // rows: t, r, phi, psi; columns: t, x, y, z
  J[0][0] = 1.0;
  for (int i = 0; i < 3; ++i) J[1][i + 1] = x[i + 1] / r;
  J[2][1] = x[1] * x[3] / (r * r * rho);
  J[2][2] = x[2] * x[3] / (r * r * rho);
  J[2][3] = -rho / (r * r);
  J[3][1] = -x[2] / (rho * rho);
  J[3][2] = x[1] / (rho * rho);
  const Mat4 gp = polar_metric(R, {x[0], r, phi, psi});
  Mat4 g{};
  for (int a = 0; a < 4; ++a)
    for (int b = 0; b < 4; ++b)
      for (int i = 0; i < 4; ++i) g[a][b] += J[i][a] * gp[i][i] * J[i][b];
  return g;
}

/// Gauss-Jordan inverse, independent of the library's.
inline Mat4 invert(Mat4 a) {
  Mat4 inv{};
  for (int i = 0; i < 4; ++i) inv[i][i] = 1.0;
  for (int c = 0; c < 4; ++c) {
    int piv = c;
    for (int r = c + 1; r < 4; ++r)
      if (std::abs(a[r][c]) > std::abs(a[piv][c])) piv = r;
    std::swap(a[c], a[piv]);
    std::swap(inv[c], inv[piv]);
    const double d = a[c][c];
    for (int k = 0; k < 4; ++k) {
      a[c][k] /= d;
      inv[c][k] /= d;
    }
    for (int r = 0; r < 4; ++r) {
      if (r == c) continue;
      const double m = a[r][c];
      for (int k = 0; k < 4; ++k) {
        a[r][k] -= m * a[c][k];
        inv[r][k] -= m * inv[c][k];
      }
    }
  }
  return inv;
}

/// Gamma^i_jk = 1/2 g^il (d_j g_lk + d_k g_lj - d_l g_jk) with fourth-order
/// central differences of step h.
inline std::array<Mat4, 4> christoffel_fd(const Metric& metric, const Vec4& p, double h) {
  std::array<Mat4, 4> dg{};  // dg[l] = d_l g
  for (int l = 0; l < 4; ++l) {
    auto at = [&](double k) {
      Vec4 q = p;
      q[l] += k * h;
      return metric(q);
    };
    const Mat4 p1 = at(1), m1 = at(-1), p2 = at(2), m2 = at(-2);
    for (int i = 0; i < 4; ++i)
      for (int j = 0; j < 4; ++j) dg[l][i][j] = (8.0 * (p1[i][j] - m1[i][j]) - (p2[i][j] - m2[i][j])) / (12.0 * h);
  }
  const Mat4 ginv = invert(metric(p));
  std::array<Mat4, 4> G{};
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j)
      for (int k = 0; k < 4; ++k) {
        double s = 0.0;
        for (int l = 0; l < 4; ++l) s += ginv[i][l] * (dg[j][l][k] + dg[k][l][j] - dg[l][j][k]);
        G[i][j][k] = 0.5 * s;
      }
  return G;
}

/// Composite Simpson rule on [a, b] with n (even) panels.
inline double simpson(const std::function<double(double)>& f, double a, double b, int n = 2000) {
  const double h = (b - a) / n;
  double s = f(a) + f(b);
  for (int i = 1; i < n; ++i) s += f(a + i * h) * (i % 2 ? 4.0 : 2.0);
  return s * h / 3.0;
}

/// CDF of the distance from the start of Brownian motion on H^3 with
/// generator Delta/2 * sigma^2 at time s. The heat kernel of Delta on H^3 is
/// (4 pi t)^{-3/2} (rho / sinh rho) exp(-t - rho^2 / (4 t)), so the radial
/// density is (4 pi t)^{-3/2} 4 pi rho sinh(rho) exp(-t - rho^2/(4t)) with
/// t = sigma^2 s / 2.
inline double h3_radial_cdf(double rho, double sigma, double s) {
  if (rho <= 0.0) return 0.0;
  const double t = 0.5 * sigma * sigma * s;
  const double c = 4.0 * std::numbers::pi * std::pow(4.0 * std::numbers::pi * t, -1.5);
  auto density = [&](double x) { return c * x * std::sinh(x) * std::exp(-t - x * x / (4.0 * t)); };
  return simpson(density, 0.0, rho, 4000);
}

/// One-sample Kolmogorov-Smirnov statistic sup |F_n - F|.
inline double ks_one_sample(std::vector<double> xs, const std::function<double(double)>& cdf) {
  std::sort(xs.begin(), xs.end());
  const double n = static_cast<double>(xs.size());
  double d = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double F = cdf(xs[i]);
    d = std::max({d, std::abs(static_cast<double>(i + 1) / n - F), std::abs(F - static_cast<double>(i) / n)});
  }
  return d;
}

/// Proper time of radial free fall from rest at r_max down to r, with
/// r = r_max (1 + cos eta) / 2 and tau = sqrt(r_max^3 / (4 R)) (eta + sin eta).
inline double radial_infall_time(double R, double r_max, double r) {
  const double eta = std::acos(2.0 * r / r_max - 1.0);
  return std::sqrt(r_max * r_max * r_max / (4.0 * R)) * (eta + std::sin(eta));
}

/// Coordinate angular frequency dphi/dt of a circular Schwarzschild geodesic.
inline double kepler_frequency(double R, double r) { return std::sqrt(R / (2.0 * r * r * r)); }

/// Standard normal CDF.
inline double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

}  // namespace oracle
