#pragma once

// Stratonovich integrator for the frame-bundle diffusion
//
//   dxi = e0 ds
//   De0 = sigma sum_j e_j o dw^j
//   De_j = sigma e0 o dw^j
//
// written in coordinates as de^k_a = -Gamma^k_{li} e^l_a dxi^i + noise.
// Every step ends with Lorentzian Gram-Schmidt at the new point.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <vector>

#include "reldiff/core.hpp"
#include "reldiff/geometry.hpp"
#include "reldiff/minkowski.hpp"
#include "reldiff/rng.hpp"
#include "reldiff/schwarzschild.hpp"
#include "reldiff/trajectory.hpp"

namespace reldiff {

struct FrameState {
  SpacetimePoint p{};
  Frame e{};
  double s = 0.0;
};

struct FrameStepResult {
  FrameState state;
  bool hit_body = false;
  double raw_defect = 0.0;  // frame defect before re-projection
};

namespace detail {

struct FrameDelta {
  Vec4 dp{};
  Frame de{};
};

/// Drift h and noise increments dW evaluated at u.
inline FrameDelta frame_increment(const Chart& chart, const FrameState& u, double sigma, double h,
                                  const std::array<double, 3>& dW) {
  FrameDelta d;
  const ChristoffelField G = christoffel_at(chart, u.p);
  const TangentVector& e0 = u.e[0];
  d.dp = h * e0;
  for (std::size_t a = 0; a < 4; ++a) d.de[a] = h * christoffel_contract(G, u.e[a], e0);
  if (sigma != 0.0) {
    for (std::size_t j = 1; j < 4; ++j) {
      const double w = sigma * dW[j - 1];
      d.de[0] = d.de[0] + w * u.e[j];
      d.de[j] = d.de[j] + w * e0;
    }
  }
  return d;
}

inline FrameState apply(const FrameState& u, const FrameDelta& d, double weight) {
  FrameState out = u;
  out.p = u.p + weight * d.dp;
  for (std::size_t a = 0; a < 4; ++a) out.e[a] = u.e[a] + weight * d.de[a];
  return out;
}

inline bool inside_body(const Chart& chart, const SpacetimePoint& p, double threshold) {
  const double R = chart.body_radius();
  return R > 0.0 && radius_of(chart, p) <= threshold;
}

}  // namespace detail

/// Stepping schemes for the frame diffusion.
///
/// Heun: predictor-corrector on the coupled system. Its predictor evaluates
/// Gamma at the noise-kicked frame, which leaves a mean O(h^2) term
/// sigma^2 h Gamma(e_j, e_j) |dW|^2 in e0. Projected on the unit-norm
/// constraint that term is amplified by roughly a^3 / r^2, and the
/// re-projection turns it into a systematic loss of energy a.
///
/// Split: Strang splitting. Half a step of the geodesic flow of the frame
/// (deterministic Heun), the exact flow of the noise fields (a Lorentz boost
/// of the frame by sigma dW, which is norm-preserving at a fixed point),
/// then the other half step.
enum class FrameScheme { Split, Heun };

/// Exact flow of sigma sum_j dW^j V_j: boost of the frame with rapidity
/// sigma |dW| in the spatial frame direction dW / |dW|.
inline Frame boost_frame(const Frame& e, double sigma, const std::array<double, 3>& dW) {
  const double w[3] = {sigma * dW[0], sigma * dW[1], sigma * dW[2]};
  const double theta = std::sqrt(w[0] * w[0] + w[1] * w[1] + w[2] * w[2]);
  if (theta == 0.0) return e;
  const double n[3] = {w[0] / theta, w[1] / theta, w[2] / theta};
  const TangentVector E = n[0] * e[1] + n[1] * e[2] + n[2] * e[3];
  const double ch = std::cosh(theta), sh = std::sinh(theta);
  Frame out;
  out[0] = ch * e[0] + sh * E;
  const TangentVector shift = (ch - 1.0) * E + sh * e[0];
  for (std::size_t j = 1; j < 4; ++j) out[j] = e[j] + n[j - 1] * shift;
  return out;
}

namespace detail {

/// Deterministic Heun step of the geodesic flow of the frame. Returns false
/// if the predictor or the result reaches the hit threshold.
inline bool geodesic_frame_heun(const Chart& chart, FrameState& u, double h, double thr) {
  static constexpr std::array<double, 3> kNoNoise{};
  const FrameDelta d1 = frame_increment(chart, u, 0.0, h, kNoNoise);
  const FrameState pred = apply(u, d1, 1.0);
  if (inside_body(chart, pred.p, thr)) {
    u = pred;
    return false;
  }
  const FrameDelta d2 = frame_increment(chart, pred, 0.0, h, kNoNoise);
  u.p = u.p + 0.5 * (d1.dp + d2.dp);
  for (std::size_t a = 0; a < 4; ++a) u.e[a] = u.e[a] + 0.5 * (d1.de[a] + d2.de[a]);
  return !inside_body(chart, u.p, thr);
}

}  // namespace detail

/// One step of size h with Brownian increments dW ~ N(0, h), followed by
/// Lorentzian Gram-Schmidt at the new point. `hit_threshold` is the radius
/// at or below which the step reports a hit instead of evaluating the
/// geometry; it defaults to R.
inline FrameStepResult frame_sde_step(const FrameState& u, const Chart& chart, double sigma, double h,
                                      const std::array<double, 3>& dW, double hit_threshold = -1.0,
                                      FrameScheme scheme = FrameScheme::Split) {
  FrameStepResult out;
  if (h == 0.0 && dW == std::array<double, 3>{}) {
    out.state = u;
    return out;
  }
  const double thr = hit_threshold < 0.0 ? chart.body_radius() : hit_threshold;

  FrameState next = u;
  if (scheme == FrameScheme::Split) {
    if (!detail::geodesic_frame_heun(chart, next, 0.5 * h, thr)) {
      out.state = next;
      out.hit_body = true;
      return out;
    }
    if (sigma != 0.0) next.e = boost_frame(next.e, sigma, dW);
    if (!detail::geodesic_frame_heun(chart, next, 0.5 * h, thr)) {
      out.state = next;
      out.hit_body = true;
      return out;
    }
  } else {
    const detail::FrameDelta d1 = detail::frame_increment(chart, u, sigma, h, dW);
    const FrameState pred = detail::apply(u, d1, 1.0);
    if (detail::inside_body(chart, pred.p, thr)) {
      out.state = pred;
      out.hit_body = true;
      return out;
    }
    const detail::FrameDelta d2 = detail::frame_increment(chart, pred, sigma, h, dW);
    next.p = u.p + 0.5 * (d1.dp + d2.dp);
    for (std::size_t a = 0; a < 4; ++a) next.e[a] = u.e[a] + 0.5 * (d1.de[a] + d2.de[a]);
    if (detail::inside_body(chart, next.p, thr)) {
      out.state = next;
      out.hit_body = true;
      return out;
    }
  }
  next.s = u.s + h;
  const MetricTensor g = metric_at(chart, next.p);
  out.raw_defect = frame_defect(g, next.e);
  try {
    next.e = lorentz_gram_schmidt(g, next.e);
  } catch (const NumericalDegeneracy& ex) {
    throw StepSizeError(std::string("frame step left the frame bundle: ") + ex.what());
  }
  out.state = next;
  return out;
}

// ---------------------------------------------------------------------------
// Observables

/// Scalars of the reduced description read off a frame state.
struct FrameObservables {
  double r = 0.0;
  double T = 0.0;  // dr/ds
  double U = 0.0;  // angular speed |dtheta/ds|
  double a = 0.0;  // (1 - R/r) dt/ds
  double b = 0.0;  // r^2 U
};

inline FrameObservables frame_observables(const Chart& chart, const SpacetimePoint& p, const TangentVector& v) {
  FrameObservables o;
  const double R = chart.body_radius();
  if (chart.kind == ChartKind::SchwarzschildPolar) {
    o.r = p[1];
    o.T = v[1];
    const double sp = std::sin(p[2]);
    o.U = std::sqrt(v[2] * v[2] + sp * sp * v[3] * v[3]);
    o.b = o.r * o.r * o.U;
  } else {
    o.r = spatial_norm(p);
    if (o.r > 0.0) {
      const double x[3] = {p[1], p[2], p[3]};
      const double w[3] = {v[1], v[2], v[3]};
      o.T = (x[0] * w[0] + x[1] * w[1] + x[2] * w[2]) / o.r;
      const double c[3] = {x[1] * w[2] - x[2] * w[1], x[2] * w[0] - x[0] * w[2], x[0] * w[1] - x[1] * w[0]};
      o.b = std::sqrt(c[0] * c[0] + c[1] * c[1] + c[2] * c[2]);
      o.U = o.b / (o.r * o.r);
    }
  }
  o.a = (R > 0.0 ? 1.0 - R / o.r : 1.0) * v[0];
  return o;
}

/// Coordinate speed |dx/dt| of the velocity v (Cartesian charts).
inline double coordinate_speed(const TangentVector& v) {
  return std::sqrt(v[1] * v[1] + v[2] * v[2] + v[3] * v[3]) / v[0];
}

// ---------------------------------------------------------------------------
// Initial data

/// Frame at radius r0 in the equatorial plane with radial velocity T0 and
/// angular momentum b0, spatial frame completed from the coordinate axes.
/// Cartesian charts put the particle at (r0, 0, 0) moving in the x1-x2 plane.
inline FrameState initial_frame(const Chart& chart, double r0, double T0, double b0) {
  const double R = chart.body_radius();
  const double a = recover_a(r0, b0, T0, R);
  const double f = 1.0 - R / r0;
  FrameState u;
  TangentVector e0{};
  if (chart.kind == ChartKind::SchwarzschildPolar) {
    u.p = {0.0, r0, 0.5 * std::numbers::pi, 0.0};
    e0 = {a / f, T0, 0.0, b0 / (r0 * r0)};
  } else {
    u.p = {0.0, r0, 0.0, 0.0};
    e0 = {a / f, T0, b0 / r0, 0.0};
  }
  u.e = complete_frame(metric_at(chart, u.p), e0);
  return u;
}

/// Frame at the origin of flat space with e0 the rest frame.
inline FrameState rest_frame_at_origin() {
  FrameState u;
  u.e = {TangentVector{1, 0, 0, 0}, TangentVector{0, 1, 0, 0}, TangentVector{0, 0, 1, 0},
         TangentVector{0, 0, 0, 1}};
  return u;
}

// ---------------------------------------------------------------------------
// Simulation

struct FrameSample {
  double s = 0.0;
  SpacetimePoint p{};
  TangentVector e0{};
  double r = 0.0;
  double T = 0.0;
  double U = 0.0;
  double a = 0.0;
  double b = 0.0;
  std::optional<TransportMatrix> transport;  // inverse parallel transport to the start point
};

struct FrameRunOptions {
  std::uint64_t stride = 1;
  StopRule stop{};
  bool record_transport = false;  // Cartesian charts only
  std::uint64_t stream = 0;
  FrameScheme scheme = FrameScheme::Split;
};

inline FrameSample make_frame_sample(const Chart& chart, const FrameState& u,
                                     const std::optional<TransportMatrix>& M) {
  const FrameObservables o = frame_observables(chart, u.p, u.e[0]);
  return {u.s, u.p, u.e[0], o.r, o.T, o.U, o.a, o.b, M};
}

/// Step multiplier min(1, 1 - R/r, (r - R)/|dx/ds|). The first factor
/// resolves the horizon; the second keeps the coordinate chord of one step
/// below about ds times the distance to the body, since truncation error in
/// the coordinate frame is amplified by a^2 in the unit-norm constraint.
inline double frame_step_factor(const Chart& chart, const FrameState& u) {
  const double R = chart.body_radius();
  if (R == 0.0) return 1.0;
  const double r = radius_of(chart, u.p);
  const double f = 1.0 - R / r;
  double speed = 0.0;
  if (chart.kind == ChartKind::SchwarzschildPolar) {
    const double sp = std::sin(u.p[2]);
    speed = std::sqrt(u.e[0][1] * u.e[0][1] + r * r * (u.e[0][2] * u.e[0][2] + sp * sp * u.e[0][3] * u.e[0][3]));
  } else {
    speed = std::sqrt(u.e[0][1] * u.e[0][1] + u.e[0][2] * u.e[0][2] + u.e[0][3] * u.e[0][3]);
  }
  const double chord = speed > 0.0 ? (r - R) / speed : kInf;
  return std::min({1.0, f, chord});
}

/// Runs the frame diffusion until the body is hit, r >= r_esc with T > 0,
/// or max_steps. Effective step ds * frame_step_factor with N(0, h) noise.
inline Trajectory<FrameSample> simulate_frame(const FrameState& u0, const Chart& chart, double sigma, double ds,
                                              std::uint64_t max_steps, std::uint64_t seed,
                                              const FrameRunOptions& opt = {}) {
  if (!(ds > 0.0)) throw PreconditionError("ds must be positive");
  if (opt.record_transport && !chart.is_cartesian())
    throw PreconditionError("transport is recorded only in Cartesian charts");
  require_in_chart(chart, u0.p);
  const std::uint64_t stride = std::max<std::uint64_t>(1, opt.stride);
  const double R = chart.body_radius();
  const double r_hit = R * (1.0 + opt.stop.eps_h);

  Trajectory<FrameSample> traj;
  traj.R = R;
  traj.sigma = sigma;
  traj.ds = ds;
  NormalStream normal(seed, opt.stream);

  FrameState u = u0;
  std::optional<TransportMatrix> M;
  if (opt.record_transport) M = identity4();
  traj.samples.push_back(make_frame_sample(chart, u, M));
  if (R > 0.0 && radius_of(chart, u.p) <= r_hit) {
    traj.exit = {ExitKind::HitBody, u.s};
    return traj;
  }

  std::uint64_t k = 0;
  for (; k < max_steps; ++k) {
    const double r = radius_of(chart, u.p);
    if (u.s >= opt.stop.s_max) break;
    const bool clipped = ds * frame_step_factor(chart, u) >= opt.stop.s_max - u.s;
    const double h = clipped ? opt.stop.s_max - u.s : ds * frame_step_factor(chart, u);
    const double sq = std::sqrt(h);
    const std::array<double, 3> dW{sq * normal(), sq * normal(), sq * normal()};
    const FrameStepResult res = frame_sde_step(u, chart, sigma, h, dW, r_hit, opt.scheme);
    if (res.hit_body) {
      const double r_new = radius_of(chart, res.state.p);
      const double frac = r > r_new ? (r - r_hit) / (r - r_new) : 1.0;
      const double s_hit = u.s + h * std::clamp(frac, 0.0, 1.0);
      FrameSample last = make_frame_sample(chart, u, M);
      last.s = s_hit;
      traj.samples.push_back(last);
      traj.exit = {ExitKind::HitBody, s_hit};
      ++k;
      break;
    }
    if (M) *M = transport_chord_step(*M, chart, u.p, res.state.p);
    u = res.state;
    if (clipped) u.s = opt.stop.s_max;
    const FrameObservables o = frame_observables(chart, u.p, u.e[0]);
    const bool escaped = o.r >= opt.stop.r_esc && o.T > 0.0;
    if ((k + 1) % stride == 0 || k + 1 == max_steps || escaped || clipped)
      traj.samples.push_back(make_frame_sample(chart, u, M));
    if (escaped) {
      traj.exit = {ExitKind::EscapedRadius, u.s};
      ++k;
      break;
    }
  }
  traj.steps = k;
  if (traj.exit.kind == ExitKind::Running) traj.exit = {ExitKind::MaxSteps, u.s};
  return traj;
}

/// eta_s = M(s) e0(s): the velocity carried back to the start point by the
/// inverse parallel transport.
inline std::vector<TangentVector> eta_process(const Trajectory<FrameSample>& traj) {
  std::vector<TangentVector> out;
  out.reserve(traj.samples.size());
  for (const auto& smp : traj.samples) {
    if (!smp.transport) throw PreconditionError("trajectory carries no transport data");
    out.push_back(*smp.transport * smp.e0);
  }
  return out;
}

/// max_s |g(xi_0)(eta_s, eta_s) - 1|
inline double eta_norm_defect(const Trajectory<FrameSample>& traj, const Chart& chart) {
  if (traj.empty()) return 0.0;
  const MetricTensor g0 = metric_at(chart, traj.samples.front().p);
  double worst = 0.0;
  for (const auto& eta : eta_process(traj)) worst = std::max(worst, std::abs(pseudo_norm(g0, eta) - 1.0));
  return worst;
}

// ---------------------------------------------------------------------------
// Asymptotic direction

struct EscapeDirection {
  std::array<double, 3> direction{};
  double convergence_angle = 0.0;
  double terminal_speed = 0.0;  // |dx/dt| at the last sample
};

inline std::array<double, 3> spatial_direction(const TangentVector& v) {
  const double n = std::sqrt(v[1] * v[1] + v[2] * v[2] + v[3] * v[3]);
  if (n == 0.0) return {0.0, 0.0, 0.0};
  return {v[1] / n, v[2] / n, v[3] / n};
}

/// Direction of the spatial velocity at the end of an escaping Cartesian
/// trajectory, its angle to the direction at s_end / 2, and the terminal
/// coordinate speed.
inline EscapeDirection asymptotic_direction_schwarzschild(const Trajectory<FrameSample>& traj) {
  if (traj.exit.kind != ExitKind::EscapedRadius)
    throw PreconditionError("asymptotic direction needs an escaping trajectory");
  const FrameSample& last = traj.back();
  const FrameSample& mid = traj.samples[nearest_sample(traj, 0.5 * last.s)];
  EscapeDirection out;
  out.direction = spatial_direction(last.e0);
  out.convergence_angle = angle_between(out.direction, spatial_direction(mid.e0));
  out.terminal_speed = coordinate_speed(last.e0);
  return out;
}

}  // namespace reldiff
