#pragma once

// Reduced Schwarzschild diffusions and the geodesic flow.
//
// State variables: r (areal radius), T = dr/ds, U = |dtheta/ds|, energy
// a = (1 - R/r) dt/ds and angular momentum b = r^2 U. The unit pseudo-norm
// relation ties them together:
//   a^2 = T^2 + (1 - R/r)(1 + b^2/r^2).
// Simulation runs on (r, b, T); a is always recovered from the identity.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "reldiff/core.hpp"
#include "reldiff/rng.hpp"
#include "reldiff/trajectory.hpp"

namespace reldiff {

using Mat3 = std::array<std::array<double, 3>, 3>;

struct ReducedState {
  double r = 0.0;
  double b = 0.0;
  double T = 0.0;
};

/// a = +sqrt(T^2 + (1 - R/r)(1 + b^2/r^2)), r > R.
inline double recover_a(double r, double b, double T, double R) {
  if (!(r > R)) throw DomainError("recover_a: r <= R");
  return std::sqrt(T * T + (1.0 - R / r) * (1.0 + (b * b) / (r * r)));
}

inline double recover_a(const ReducedState& x, double R) { return recover_a(x.r, x.b, x.T, R); }

/// Radial drift of T: (r - 3R/2) b^2 / r^4 - R / (2 r^2), without the noise-induced part.
inline double radial_force(double r, double b, double R) {
  const double r2 = r * r;
  return (r - 1.5 * R) * b * b / (r2 * r2) - R / (2.0 * r2);
}

// ---------------------------------------------------------------------------
// Generator coefficients

/// Drift vector and diffusion matrix of the (r, T, U) generator.
struct RtuCoeffs {
  std::array<double, 3> drift{};  // (r, T, U)
  Mat3 diffusion{};               // second-order coefficients doubled: L = drift.d + 1/2 sum diffusion_ij d_i d_j
};

inline RtuCoeffs rtu_generator_coeffs(double r, double T, double U, double R, double sigma) {
  if (!(r > R)) throw DomainError("rtu_generator_coeffs: r <= R");
  if (!(U > 0.0)) throw SingularDrift("rtu_generator_coeffs: U = 0 makes sigma^2/(2 r^2 U) singular");
  const double s2 = sigma * sigma;
  const double f = 1.0 - R / r;
  RtuCoeffs c;
  c.drift[0] = T;
  c.drift[1] = 1.5 * s2 * T + (r - 1.5 * R) * U * U - R / (2.0 * r * r);
  c.drift[2] = 1.5 * s2 * U - 2.0 * T * U / r + s2 / (2.0 * r * r * U);
  c.diffusion[1][1] = s2 * (T * T + f);
  c.diffusion[1][2] = c.diffusion[2][1] = s2 * T * U;
  c.diffusion[2][2] = s2 * (U * U + 1.0 / (r * r));
  return c;
}

/// Drift of (r, a, b, T) and the covariation matrix of the martingale parts
/// of (a, b, T).
struct Prop1Coeffs {
  std::array<double, 4> drift{};  // (r, a, b, T)
  Mat3 covariation{};             // over (M^a, M^b, M^T)
};

inline constexpr double kPseudoNormTolerance = 1e-6;

inline Prop1Coeffs prop1_coeffs(double r, double a, double b, double T, double R, double sigma) {
  if (!(r > R)) throw DomainError("prop1_coeffs: r <= R");
  const double f = 1.0 - R / r;
  const double residual = a * a - (T * T + f * (1.0 + b * b / (r * r)));
  if (std::abs(residual) > kPseudoNormTolerance * std::max(1.0, a * a))
    throw InconsistentState("state violates a^2 = T^2 + (1 - R/r)(1 + b^2/r^2)");
  const double s2 = sigma * sigma;
  if (s2 != 0.0 && !(b > 0.0)) throw SingularDrift("prop1_coeffs: b = 0 makes sigma^2 r^2/(2b) singular");

  Prop1Coeffs c;
  c.drift[0] = T;
  c.drift[1] = 1.5 * s2 * a;
  c.drift[2] = s2 == 0.0 ? 0.0 : 1.5 * s2 * b + s2 * r * r / (2.0 * b);
  c.drift[3] = 1.5 * s2 * T + radial_force(r, b, R);
  auto& K = c.covariation;
  K[0][0] = s2 * (a * a - 1.0 + R / r);
  K[0][1] = K[1][0] = s2 * a * b;
  K[0][2] = K[2][0] = s2 * a * T;
  K[1][1] = s2 * (b * b + r * r);
  K[1][2] = K[2][1] = s2 * b * T;
  K[2][2] = s2 * (T * T + f);
  return c;
}

// ---------------------------------------------------------------------------
// Reduced (r, b, T) stepping

enum class ReducedScheme {
  EulerMaruyama,  // Ito Euler-Maruyama
  HeunDrift,      // drift by trapezoidal predictor-corrector, noise at the left point
};

/// Independent N(0, ds) increments driving (b, T): w is shared, beta moves b
/// alone, gamma moves T alone.
struct ReducedNoise {
  double w = 0.0;
  double beta = 0.0;
  double gamma = 0.0;
};

struct ReducedStepResult {
  ReducedState state;
  bool hit_body = false;  // r <= R after the step
};

namespace detail {

struct ReducedDrift {
  double r, b, T;
};

inline ReducedDrift reduced_drift(const ReducedState& x, double R, double s2) {
  const double mb = s2 == 0.0 ? 0.0 : 1.5 * s2 * x.b + s2 * x.r * x.r / (2.0 * x.b);
  return {x.T, mb, 1.5 * s2 * x.T + radial_force(x.r, x.b, R)};
}

}  // namespace detail

/// One step of
///   dr = T ds
///   db = sigma (b dw + r dbeta) + (3 sigma^2 b / 2 + sigma^2 r^2 / (2b)) ds
///   dT = sigma (T dw + sqrt(1 - R/r) dgamma)
///        + (3 sigma^2 T / 2 + (r - 3R/2) b^2 / r^4 - R / (2 r^2)) ds
/// A negative b is reflected to |b|.
inline ReducedStepResult reduced_step(const ReducedState& x, double R, double sigma, double ds,
                                      const ReducedNoise& noise,
                                      ReducedScheme scheme = ReducedScheme::EulerMaruyama) {
  if (!(x.r > R)) throw DomainError("reduced_step: r <= R");
  const double s2 = sigma * sigma;
  if (s2 != 0.0 && !(x.b > 0.0)) throw SingularDrift("reduced_step: b must be positive when sigma != 0");

  const detail::ReducedDrift mu = detail::reduced_drift(x, R, s2);
  detail::ReducedDrift m = mu;
  if (scheme == ReducedScheme::HeunDrift) {
    const ReducedState pred{x.r + mu.r * ds, x.b + mu.b * ds, x.T + mu.T * ds};
    if (pred.r > 0.0 && (s2 == 0.0 || pred.b > 0.0)) {
      const detail::ReducedDrift mp = detail::reduced_drift(pred, R, s2);
      m = {0.5 * (mu.r + mp.r), 0.5 * (mu.b + mp.b), 0.5 * (mu.T + mp.T)};
    }
  }

  const double sqf = std::sqrt(1.0 - R / x.r);
  ReducedStepResult out;
  out.state.r = x.r + m.r * ds;
  out.state.b = x.b + sigma * (x.b * noise.w + x.r * noise.beta) + m.b * ds;
  out.state.T = x.T + sigma * (x.T * noise.w + sqf * noise.gamma) + m.T * ds;
  if (s2 != 0.0) {
    out.state.b = std::abs(out.state.b);
    if (out.state.b == 0.0) out.state.b = 1e-12 * x.r;
  }
  out.hit_body = !(out.state.r > R);
  return out;
}

struct ReducedSample {
  double s = 0.0;
  double r = 0.0;
  double b = 0.0;
  double T = 0.0;
  double a = 0.0;
};

/// Initial b = 0 with sigma != 0 sits on the entrance boundary; nudge it in.
inline double admissible_initial_b(double b0, double r0, double sigma) {
  if (sigma != 0.0 && b0 <= 0.0) return 1e-12 * r0;
  return b0;
}

/// Reduced-diffusion run with near-body step control ds * min(1, 1 - R/r).
/// The hit time is interpolated linearly to the threshold R (1 + eps_h).
inline Trajectory<ReducedSample> simulate_reduced(ReducedState x0, double R, double sigma, double ds,
                                                  std::uint64_t max_steps, StopRule stop,
                                                  std::uint64_t seed, std::uint64_t stride = 1,
                                                  std::uint64_t stream = 0,
                                                  ReducedScheme scheme = ReducedScheme::EulerMaruyama) {
  if (!(ds > 0.0)) throw PreconditionError("ds must be positive");
  if (!(x0.r > R)) throw DomainError("initial r <= R");
  if (stride == 0) stride = 1;
  x0.b = admissible_initial_b(x0.b, x0.r, sigma);

  Trajectory<ReducedSample> traj;
  traj.R = R;
  traj.sigma = sigma;
  traj.ds = ds;
  NormalStream normal(seed, stream);

  const double r_hit = R * (1.0 + stop.eps_h);
  ReducedState x = x0;
  double s = 0.0;
  traj.samples.push_back({s, x.r, x.b, x.T, recover_a(x, R)});
  if (R > 0.0 && x.r <= r_hit) {
    traj.exit = {ExitKind::HitBody, 0.0};
    return traj;
  }

  std::uint64_t k = 0;
  for (; k < max_steps; ++k) {
    if (s >= stop.s_max) break;
    double h = R > 0.0 ? ds * std::min(1.0, 1.0 - R / x.r) : ds;
    const bool clipped = h >= stop.s_max - s;
    if (clipped) h = stop.s_max - s;
    const double sq = std::sqrt(h);
    ReducedNoise nz{sq * normal(), sq * normal(), sq * normal()};
    const ReducedStepResult res = reduced_step(x, R, sigma, h, nz, scheme);
    const double s_new = clipped ? stop.s_max : s + h;

    if (res.hit_body || (R > 0.0 && res.state.r <= r_hit)) {
      const double frac = (x.r - r_hit) / (x.r - res.state.r);
      const double s_hit = s + h * std::clamp(frac, 0.0, 1.0);
      const double r_last = std::max(res.state.r, r_hit);
      traj.samples.push_back({s_hit, r_last, res.state.b, res.state.T, kNaN});
      traj.exit = {ExitKind::HitBody, s_hit};
      ++k;
      break;
    }
    x = res.state;
    s = s_new;
    const bool escaped = x.r >= stop.r_esc && x.T > 0.0;
    if ((k + 1) % stride == 0 || k + 1 == max_steps || escaped || clipped)
      traj.samples.push_back({s, x.r, x.b, x.T, recover_a(x, R)});
    if (escaped) {
      traj.exit = {ExitKind::EscapedRadius, s};
      ++k;
      break;
    }
  }
  traj.steps = k;
  if (traj.exit.kind == ExitKind::Running) traj.exit = {ExitKind::MaxSteps, s};
  return traj;
}

// ---------------------------------------------------------------------------
// Geodesic flow

struct GeodesicParams {
  double a = 1.0;
  double b = 0.0;
  double R = 0.0;
};

/// Radial and in-plane state of a timelike geodesic; a and b are constants.
struct GeodesicState {
  double r = 0.0;
  double T = 0.0;
  double t = 0.0;
  double phi = 0.0;  // angle in the invariant plane
};

/// a^2 >= (1 - R/r)(1 + b^2/r^2)
inline bool admissible(const GeodesicParams& p, double r, double tol = 0.0) {
  return p.a * p.a - (1.0 - p.R / r) * (1.0 + p.b * p.b / (r * r)) >= -tol;
}

/// Classical RK4 step of dr = T, dT = (r - 3R/2) b^2 / r^4 - R/(2 r^2),
/// dt = a / (1 - R/r), dphi = b / r^2.
inline GeodesicState geodesic_step(const GeodesicState& x, const GeodesicParams& p, double ds) {
  if (!(x.r > p.R)) throw DomainError("geodesic_step: r <= R");
  auto rhs = [&p](const GeodesicState& y) {
    return GeodesicState{y.T, radial_force(y.r, p.b, p.R), p.a / (1.0 - p.R / y.r), p.b / (y.r * y.r)};
  };
  auto axpy = [](const GeodesicState& y, double h, const GeodesicState& k) {
    return GeodesicState{y.r + h * k.r, y.T + h * k.T, y.t + h * k.t, y.phi + h * k.phi};
  };
  const GeodesicState k1 = rhs(x);
  const GeodesicState k2 = rhs(axpy(x, 0.5 * ds, k1));
  const GeodesicState k3 = rhs(axpy(x, 0.5 * ds, k2));
  const GeodesicState k4 = rhs(axpy(x, ds, k3));
  return {x.r + ds / 6.0 * (k1.r + 2 * k2.r + 2 * k3.r + k4.r),
          x.T + ds / 6.0 * (k1.T + 2 * k2.T + 2 * k3.T + k4.T),
          x.t + ds / 6.0 * (k1.t + 2 * k2.t + 2 * k3.t + k4.t),
          x.phi + ds / 6.0 * (k1.phi + 2 * k2.phi + 2 * k3.phi + k4.phi)};
}

/// Energy implied by (r, T) for a geodesic with angular momentum b.
inline double geodesic_energy(const GeodesicState& x, const GeodesicParams& p) {
  return recover_a(x.r, p.b, x.T, p.R);
}

// ---------------------------------------------------------------------------
// Orbit classification

enum class OrbitClass {
  RToInfinity,
  InfinityToR,
  RToR,
  InfinityToInfinity,
  RToR1orR1ToInfinity,
  Bounded,
  CircularStable,
  CircularUnstable,
};

inline std::string to_string(OrbitClass c) {
  switch (c) {
    case OrbitClass::RToInfinity: return "R_to_infinity";
    case OrbitClass::InfinityToR: return "infinity_to_R";
    case OrbitClass::RToR: return "R_to_R";
    case OrbitClass::InfinityToInfinity: return "infinity_to_infinity";
    case OrbitClass::RToR1orR1ToInfinity: return "R_to_R1_or_R1_to_infinity";
    case OrbitClass::Bounded: return "bounded";
    case OrbitClass::CircularStable: return "circular_stable";
    case OrbitClass::CircularUnstable: return "circular_unstable";
  }
  return "unknown";
}

inline bool is_unbounded(OrbitClass c) {
  return c == OrbitClass::RToInfinity || c == OrbitClass::InfinityToR ||
         c == OrbitClass::InfinityToInfinity;
}

/// C(r) = a^2 r^3 - (r - R)(r^2 + b^2) = r^3 T^2 on a geodesic.
struct RadialCubic {
  double k3, k2, k1, k0;  // C(r) = k3 r^3 + k2 r^2 + k1 r + k0

  explicit RadialCubic(const GeodesicParams& p)
      : k3(p.a * p.a - 1.0), k2(p.R), k1(-p.b * p.b), k0(p.R * p.b * p.b) {}

  double operator()(double r) const { return ((k3 * r + k2) * r + k1) * r + k0; }
  double d1(double r) const { return (3.0 * k3 * r + 2.0 * k2) * r + k1; }
  double d2(double r) const { return 6.0 * k3 * r + 2.0 * k2; }
  /// Scale used for relative tolerances at r.
  double scale(double r) const {
    return std::abs(k3) * r * r * r + std::abs(k2) * r * r + std::abs(k1) * r + std::abs(k0);
  }
};

struct CubicRoot {
  double r = 0.0;
  bool is_double = false;
};

struct OrbitClassification {
  OrbitClass kind = OrbitClass::Bounded;
  std::vector<CubicRoot> roots;  // roots of C in (R, inf), ascending
};

namespace detail {

inline double bisect_root(const RadialCubic& C, double lo, double hi) {
  double flo = C(lo);
  for (int it = 0; it < 200 && hi - lo > 1e-15 * std::max(1.0, std::abs(hi)); ++it) {
    const double mid = 0.5 * (lo + hi);
    const double fm = C(mid);
    if (fm == 0.0) return mid;
    if ((fm > 0.0) == (flo > 0.0)) {
      lo = mid;
      flo = fm;
    } else {
      hi = mid;
    }
  }
  return 0.5 * (lo + hi);
}

}  // namespace detail

inline constexpr double kDoubleRootTolerance = 1e-10;

/// Roots of the radial cubic in (R, inf). A critical point where |C| is
/// below tolerance is reported as a double root.
inline std::vector<CubicRoot> radial_cubic_roots(const GeodesicParams& p) {
  const RadialCubic C(p);
  const double R = p.R;
  // critical points of C: 3 k3 r^2 + 2 k2 r + k1 = 0
  std::vector<double> crit;
  const double qa = 3.0 * C.k3, qb = 2.0 * C.k2, qc = C.k1;
  if (qa == 0.0) {
    if (qb != 0.0) crit.push_back(-qc / qb);
  } else {
    const double disc = qb * qb - 4.0 * qa * qc;
    if (disc >= 0.0) {
      const double sq = std::sqrt(disc);
      const double q = -0.5 * (qb + std::copysign(sq, qb));
      if (q != 0.0) {
        crit.push_back(q / qa);
        crit.push_back(qc / q);
      } else {
        crit.push_back(0.0);
      }
    }
  }
  std::sort(crit.begin(), crit.end());

  std::vector<CubicRoot> roots;
  std::vector<double> knots{R};
  for (double c : crit) {
    if (!(c > R)) continue;
    if (std::abs(C(c)) <= kDoubleRootTolerance * std::max(1.0, C.scale(c))) {
      roots.push_back({c, true});
    }
    knots.push_back(c);
  }
  // upper bracket: far enough that C has the sign of its leading behavior
  double hi = std::max(1.0, knots.back()) * 2.0;
  const double far_sign = C.k3 != 0.0 ? C.k3 : C.k2;
  for (int it = 0; it < 2000 && (C(hi) > 0.0) != (far_sign > 0.0); ++it) hi *= 2.0;
  knots.push_back(hi);

  for (std::size_t i = 0; i + 1 < knots.size(); ++i) {
    const double lo = knots[i], up = knots[i + 1];
    const double flo = C(lo), fup = C(up);
    const bool lo_is_double = std::any_of(roots.begin(), roots.end(), [&](const CubicRoot& x) {
      return x.is_double && x.r == lo;
    });
    const bool up_is_double = std::any_of(roots.begin(), roots.end(), [&](const CubicRoot& x) {
      return x.is_double && x.r == up;
    });
    if (lo_is_double || up_is_double) continue;
    if ((flo > 0.0 && fup < 0.0) || (flo < 0.0 && fup > 0.0)) {
      roots.push_back({detail::bisect_root(C, lo, up), false});
    } else if (fup == 0.0 && i + 2 < knots.size()) {
      roots.push_back({up, false});
    }
  }
  std::sort(roots.begin(), roots.end(), [](const CubicRoot& x, const CubicRoot& y) { return x.r < y.r; });
  return roots;
}

/// Maps the root pattern of the radial cubic and (r0, sign T0) to the orbit
/// class. r0 must satisfy a^2 >= (1 - R/r0)(1 + b^2/r0^2).
inline OrbitClassification classify_orbit(const GeodesicParams& p, double r0, int signT0) {
  if (!(r0 > p.R)) throw DomainError("classify_orbit: r0 <= R");
  const RadialCubic C(p);
  const double tol = kDoubleRootTolerance * std::max(1.0, C.scale(r0));
  if (C(r0) < -tol)
    throw DomainError("inadmissible initial data: a^2 < (1 - R/r0)(1 + b^2/r0^2)");

  OrbitClassification out;
  out.roots = radial_cubic_roots(p);
  const double rtol = 1e-9 * std::max(1.0, r0);

  const CubicRoot* at_r0 = nullptr;
  for (const auto& x : out.roots)
    if (std::abs(x.r - r0) <= rtol) at_r0 = &x;

  if (at_r0 != nullptr && at_r0->is_double) {
    out.kind = C.d2(at_r0->r) < 0.0 ? OrbitClass::CircularStable : OrbitClass::CircularUnstable;
    return out;
  }

  // Allowed component [lo, hi] containing r0; lo = R or a root, hi = a root or inf.
  const CubicRoot* lo = nullptr;
  const CubicRoot* hi = nullptr;
  if (at_r0 != nullptr) {
    // Turning point: the allowed side is where C > 0.
    const bool region_above = C.d1(r0) > 0.0;
    for (const auto& x : out.roots) {
      if (&x == at_r0) continue;
      if (region_above && x.r > r0 && hi == nullptr) hi = &x;
      if (!region_above && x.r < r0) lo = &x;
    }
    if (region_above)
      lo = at_r0;
    else
      hi = at_r0;
  } else {
    for (const auto& x : out.roots) {
      if (x.r < r0) lo = &x;
      if (x.r > r0 && hi == nullptr) hi = &x;
    }
  }

  const bool lo_is_R = lo == nullptr;
  const bool hi_is_inf = hi == nullptr;
  if (lo_is_R && hi_is_inf) {
    out.kind = signT0 >= 0 ? OrbitClass::RToInfinity : OrbitClass::InfinityToR;
  } else if (lo_is_R) {
    out.kind = hi->is_double ? OrbitClass::RToR1orR1ToInfinity : OrbitClass::RToR;
  } else if (hi_is_inf) {
    out.kind = lo->is_double ? OrbitClass::RToR1orR1ToInfinity : OrbitClass::InfinityToInfinity;
  } else {
    out.kind = OrbitClass::Bounded;
  }
  return out;
}

/// (a, b) of the circular geodesic at radius r > 3R/2.
inline GeodesicParams circular_orbit_params(double R, double r) {
  if (!(r > 1.5 * R)) throw DomainError("no circular timelike geodesic at r <= 3R/2");
  const double f = 1.0 - R / r;
  const double a = f / std::sqrt(1.0 - 1.5 * R / r);
  const double b = r * std::sqrt(R / (2.0 * r - 3.0 * R));
  return {a, b, R};
}

}  // namespace reldiff
