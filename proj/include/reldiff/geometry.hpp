#pragma once

// Closed-form Schwarzschild and Minkowski geometry: metric, Christoffel
// symbols, Lorentzian Gram-Schmidt, finite-difference Ricci tensor and
// parallel transport of frames along discrete paths.
//
// Charts
//   SchwarzschildPolar      (t, r, phi, psi), valid for r > R and sin(phi) != 0
//   SchwarzschildCartesian  (t, x1, x2, x3) with x = r (sin phi cos psi,
//                           sin phi sin psi, cos phi), valid for r > R
//   FlatCartesian           (t, x1, x2, x3), Minkowski, R ignored
//
// Units have c = 1; R is the central-body radius. R = 0 is allowed in every
// chart and reduces everything to flat space.

#include <array>
#include <cmath>
#include <string>

#include "reldiff/core.hpp"

namespace reldiff {

enum class ChartKind { SchwarzschildPolar, FlatCartesian, SchwarzschildCartesian };

struct Chart {
  ChartKind kind = ChartKind::FlatCartesian;
  double R = 0.0;

  static Chart polar(double R) { return {ChartKind::SchwarzschildPolar, R}; }
  static Chart cartesian(double R) { return {ChartKind::SchwarzschildCartesian, R}; }
  static Chart flat() { return {ChartKind::FlatCartesian, 0.0}; }

  bool is_cartesian() const { return kind != ChartKind::SchwarzschildPolar; }
  /// Central-body radius as seen by the geometry (0 for the flat chart).
  double body_radius() const { return kind == ChartKind::FlatCartesian ? 0.0 : R; }
};

inline std::string to_string(ChartKind k) {
  switch (k) {
    case ChartKind::SchwarzschildPolar: return "schwarzschild-polar";
    case ChartKind::SchwarzschildCartesian: return "schwarzschild-cartesian";
    case ChartKind::FlatCartesian: return "flat-cartesian";
  }
  return "unknown";
}

using SpacetimePoint = Vec4;
using TangentVector = Vec4;
using MetricTensor = Mat4;
/// gamma[i][j][k] = Gamma^i_{jk}
using ChristoffelField = std::array<Mat4, 4>;
using TransportMatrix = Mat4;
using Frame = std::array<TangentVector, 4>;

inline constexpr double kPolarAxisTolerance = 1e-12;

/// Areal radius of a point in the given chart.
inline double radius_of(const Chart& chart, const SpacetimePoint& p) {
  if (chart.kind == ChartKind::SchwarzschildPolar) return p[1];
  return spatial_norm(p);
}

inline void require_in_chart(const Chart& chart, const SpacetimePoint& p) {
  const double R = chart.body_radius();
  if (chart.kind == ChartKind::SchwarzschildPolar) {
    if (!(p[1] > R)) throw DomainError("point outside chart: r <= R");
    if (std::abs(std::sin(p[2])) < kPolarAxisTolerance)
      throw DomainError("point on the polar axis of the polar chart");
    return;
  }
  if (R > 0.0 && !(spatial_norm(p) > R)) throw DomainError("point outside chart: r <= R");
}

// ---------------------------------------------------------------------------
// Metric

inline MetricTensor metric_at(const Chart& chart, const SpacetimePoint& p) {
  require_in_chart(chart, p);
  MetricTensor g{};
  const double R = chart.body_radius();
  switch (chart.kind) {
    case ChartKind::FlatCartesian:
      g[0][0] = 1.0;
      g[1][1] = g[2][2] = g[3][3] = -1.0;
      return g;
    case ChartKind::SchwarzschildPolar: {
      const double r = p[1];
      const double f = 1.0 - R / r;
      const double s = std::sin(p[2]);
      g[0][0] = f;
      g[1][1] = -1.0 / f;
      g[2][2] = -r * r;
      g[3][3] = -r * r * s * s;
      return g;
    }
    case ChartKind::SchwarzschildCartesian: {
      // -dx^2 - (1/f - 1) dr^2 with dr = n . dx
      g[0][0] = 1.0;
      g[1][1] = g[2][2] = g[3][3] = -1.0;
      if (R == 0.0) return g;
      const double r = spatial_norm(p);
      const double h = R / (r - R);
      const double n[3] = {p[1] / r, p[2] / r, p[3] / r};
      g[0][0] = 1.0 - R / r;
      for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) g[i + 1][j + 1] -= h * n[i] * n[j];
      return g;
    }
  }
  return g;
}

/// v^i g_ij v^j
inline double pseudo_norm(const MetricTensor& g, const TangentVector& v) {
  double out = 0.0;
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 4; ++j) out += v[i] * g[i][j] * v[j];
  return out;
}

inline double pseudo_inner(const MetricTensor& g, const TangentVector& u, const TangentVector& v) {
  double out = 0.0;
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 4; ++j) out += u[i] * g[i][j] * v[j];
  return out;
}

// ---------------------------------------------------------------------------
// Christoffel symbols

inline ChristoffelField christoffel_at(const Chart& chart, const SpacetimePoint& p) {
  require_in_chart(chart, p);
  ChristoffelField G{};
  const double R = chart.body_radius();
  switch (chart.kind) {
    case ChartKind::FlatCartesian:
      return G;
    case ChartKind::SchwarzschildPolar: {
      const double r = p[1];
      const double sp = std::sin(p[2]);
      const double cp = std::cos(p[2]);
      const double k = R / (2.0 * r * (r - R));
      G[0][1][0] = G[0][0][1] = k;
      G[1][1][1] = -k;
      G[1][0][0] = R * (r - R) / (2.0 * r * r * r);
      G[1][2][2] = R - r;
      G[1][3][3] = (R - r) * sp * sp;
      G[2][1][2] = G[2][2][1] = 1.0 / r;
      G[3][1][3] = G[3][3][1] = 1.0 / r;
      G[2][3][3] = -sp * cp;
      G[3][2][3] = G[3][3][2] = cp / sp;
      return G;
    }
    case ChartKind::SchwarzschildCartesian: {
      if (R == 0.0) return G;
      // Polar symbols pushed through x = r n(phi, psi); the flat-space part
      // of the polar symbols is pure coordinate effect and cancels, leaving
      //   Gamma^t_{ti}  = R n_i / (2 r (r - R))
      //   Gamma^i_{tt}  = R (r - R) n_i / (2 r^3)
      //   Gamma^i_{jk}  = -R n_i n_j n_k / (2 r (r - R)) + R n_i (d_jk - n_j n_k) / r^2
      const double r = spatial_norm(p);
      const double n[3] = {p[1] / r, p[2] / r, p[3] / r};
      const double k = R / (2.0 * r * (r - R));
      const double ktt = R * (r - R) / (2.0 * r * r * r);
      const double kp = R / (r * r);
      for (int i = 0; i < 3; ++i) {
        G[0][0][i + 1] = G[0][i + 1][0] = k * n[i];
        G[i + 1][0][0] = ktt * n[i];
        for (int j = 0; j < 3; ++j)
          for (int l = 0; l < 3; ++l) {
            const double nn = n[j] * n[l];
            G[i + 1][j + 1][l + 1] = -k * n[i] * nn + kp * n[i] * ((j == l ? 1.0 : 0.0) - nn);
          }
      }
      return G;
    }
  }
  return G;
}

/// -Gamma^k_{ij} u^i v^j, the geodesic-spray contraction (symmetric in u, v).
inline TangentVector christoffel_contract(const ChristoffelField& G, const TangentVector& u,
                                          const TangentVector& v) {
  TangentVector out{};
  for (std::size_t k = 0; k < 4; ++k) {
    double acc = 0.0;
    for (std::size_t i = 0; i < 4; ++i) {
      if (u[i] == 0.0) continue;
      for (std::size_t j = 0; j < 4; ++j) acc += G[k][i][j] * u[i] * v[j];
    }
    out[k] = -acc;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Lorentzian Gram-Schmidt

/// Re-projects a nearly pseudo-orthonormal frame onto an exactly
/// pseudo-orthonormal one, e0 first so the velocity direction is kept.
/// Uses the modified (sequential) projection for round-off stability.
inline Frame lorentz_gram_schmidt(const MetricTensor& g, const Frame& frame) {
  Frame out = frame;
  const double n0 = pseudo_norm(g, out[0]);
  if (!(n0 > 0.0)) throw NumericalDegeneracy("e0 is not timelike");
  out[0] = (1.0 / std::sqrt(n0)) * out[0];
  if (!(out[0][0] > 0.0)) throw NumericalDegeneracy("e0 is not future-pointing");

  for (std::size_t j = 1; j < 4; ++j) {
    TangentVector v = out[j];
    // <e0,e0> = 1, <ea,ea> = -1 for spatial a
    v = v - pseudo_inner(g, v, out[0]) * out[0];
    for (std::size_t a = 1; a < j; ++a) v = v + pseudo_inner(g, v, out[a]) * out[a];
    const double nj = -pseudo_norm(g, v);
    if (!(nj > 0.0)) throw NumericalDegeneracy("spatial frame vector is not spacelike");
    out[j] = (1.0 / std::sqrt(nj)) * v;
  }
  return out;
}

/// Max-entry defect of <e_a, e_b> against diag(1, -1, -1, -1).
inline double frame_defect(const MetricTensor& g, const Frame& e) {
  double out = 0.0;
  for (std::size_t a = 0; a < 4; ++a)
    for (std::size_t b = 0; b < 4; ++b) {
      const double target = a == b ? (a == 0 ? 1.0 : -1.0) : 0.0;
      out = std::max(out, std::abs(pseudo_inner(g, e[a], e[b]) - target));
    }
  return out;
}

/// Completes a unit timelike e0 to a pseudo-orthonormal frame, using the
/// coordinate directions as spatial seeds.
inline Frame complete_frame(const MetricTensor& g, const TangentVector& e0) {
  Frame seed{e0, TangentVector{0, 1, 0, 0}, TangentVector{0, 0, 1, 0}, TangentVector{0, 0, 0, 1}};
  return lorentz_gram_schmidt(g, seed);
}

// ---------------------------------------------------------------------------
// Ricci tensor (test oracle)

/// Ricci tensor from central differences of christoffel_at with step h in
/// every coordinate.
inline Mat4 ricci_at(const Chart& chart, const SpacetimePoint& p, double h) {
  require_in_chart(chart, p);
  const double R = chart.body_radius();
  if (radius_of(chart, p) - R < 2.0 * h) throw DomainError("finite-difference stencil reaches r = R");

  std::array<ChristoffelField, 4> dG{};  // dG[a] = d/dx^a Gamma
  for (std::size_t a = 0; a < 4; ++a) {
    SpacetimePoint pp = p;
    SpacetimePoint pm = p;
    pp[a] += h;
    pm[a] -= h;
    const ChristoffelField Gp = christoffel_at(chart, pp);
    const ChristoffelField Gm = christoffel_at(chart, pm);
    for (std::size_t i = 0; i < 4; ++i)
      for (std::size_t j = 0; j < 4; ++j)
        for (std::size_t k = 0; k < 4; ++k) dG[a][i][j][k] = (Gp[i][j][k] - Gm[i][j][k]) / (2.0 * h);
  }
  const ChristoffelField G = christoffel_at(chart, p);

  // R_bd = d_a G^a_bd - d_d G^a_ba + G^a_ae G^e_bd - G^a_de G^e_ba
  Mat4 ric{};
  for (std::size_t b = 0; b < 4; ++b)
    for (std::size_t d = 0; d < 4; ++d) {
      double acc = 0.0;
      for (std::size_t a = 0; a < 4; ++a) {
        acc += dG[a][a][b][d] - dG[d][a][b][a];
        for (std::size_t e = 0; e < 4; ++e) acc += G[a][a][e] * G[e][b][d] - G[a][d][e] * G[e][b][a];
      }
      ric[b][d] = acc;
    }
  return ric;
}

// ---------------------------------------------------------------------------
// Parallel transport

/// A^k_j = Gamma^k_{jl} v^l
inline Mat4 connection_matrix(const ChristoffelField& G, const TangentVector& v) {
  Mat4 A{};
  for (std::size_t k = 0; k < 4; ++k)
    for (std::size_t j = 0; j < 4; ++j) {
      double acc = 0.0;
      for (std::size_t l = 0; l < 4; ++l) acc += G[k][j][l] * v[l];
      A[k][j] = acc;
    }
  return A;
}

/// One midpoint step of dM/ds = M A with A = Gamma . v. The caller supplies
/// Gamma and v evaluated at the midpoint of the step.
inline TransportMatrix transport_step(const TransportMatrix& M, const ChristoffelField& G,
                                      const TangentVector& v, double ds) {
  if (ds == 0.0) return M;
  const Mat4 A = connection_matrix(G, v);
  const Mat4 Ads = ds * A;
  const Mat4 step = identity4() + Ads + 0.5 * (Ads * Ads);
  return M * step;
}

/// Inverse transport accumulated along the straight coordinate chord from
/// `from` to `to`, integrated with classical RK4 (three Christoffel
/// evaluations). Only the chord enters, so the per-step map is an isometry
/// g(to) -> g(from) up to O(|dx|^5).
inline TransportMatrix transport_chord_step(const TransportMatrix& M, const Chart& chart,
                                            const SpacetimePoint& from, const SpacetimePoint& to) {
  const TangentVector dx = to - from;
  if (dx == TangentVector{}) return M;
  const SpacetimePoint mid = from + 0.5 * dx;
  const Mat4 A0 = connection_matrix(christoffel_at(chart, from), dx);
  const Mat4 Am = connection_matrix(christoffel_at(chart, mid), dx);
  const Mat4 A1 = connection_matrix(christoffel_at(chart, to), dx);
  const Mat4 k1 = M * A0;
  const Mat4 k2 = (M + 0.5 * k1) * Am;
  const Mat4 k3 = (M + 0.5 * k2) * Am;
  const Mat4 k4 = (M + k3) * A1;
  return M + (1.0 / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

// ---------------------------------------------------------------------------
// Chart conversions

/// Polar (t, r, phi, psi) -> Cartesian (t, x1, x2, x3).
inline SpacetimePoint polar_to_cartesian(const SpacetimePoint& p) {
  const double r = p[1];
  const double sp = std::sin(p[2]);
  return {p[0], r * sp * std::cos(p[3]), r * sp * std::sin(p[3]), r * std::cos(p[2])};
}

/// d(cartesian)/d(polar): J[a][i] = dx^a / dy^i.
inline Mat4 polar_to_cartesian_jacobian(const SpacetimePoint& p) {
  const double r = p[1];
  const double sp = std::sin(p[2]), cp = std::cos(p[2]);
  const double ss = std::sin(p[3]), cs = std::cos(p[3]);
  Mat4 J{};
  J[0][0] = 1.0;
  J[1][1] = sp * cs;
  J[1][2] = r * cp * cs;
  J[1][3] = -r * sp * ss;
  J[2][1] = sp * ss;
  J[2][2] = r * cp * ss;
  J[2][3] = r * sp * cs;
  J[3][1] = cp;
  J[3][2] = -r * sp;
  return J;
}

}  // namespace reldiff
