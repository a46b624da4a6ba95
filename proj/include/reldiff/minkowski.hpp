#pragma once

// Relativistic diffusion in flat Minkowski space R^{1,D}: the velocity is a
// Brownian motion on the hyperboloid H^D (generator sigma^2/2 times the
// hyperbolic Laplacian) and the position integrates it, dxi/ds = B.
//
// Velocities are stored as (rapidity, unit direction) rather than embedded
// coordinates. The rapidity grows linearly in proper time, so cosh(rho)
// overflows a double after s ~ 700 at sigma = 1 and the embedded constraint
// B0^2 - |b|^2 = 1 is lost to cancellation long before that. Positions are
// kept as exp(log_scale) * mantissa for the same reason.

#include <array>
#include <cmath>
#include <cstdint>
#include <numeric>

#include "reldiff/core.hpp"
#include "reldiff/rng.hpp"
#include "reldiff/trajectory.hpp"

namespace reldiff {

template <std::size_t D>
using SpatialVec = std::array<double, D>;
template <std::size_t D>
using EmbeddedVec = std::array<double, D + 1>;

template <std::size_t N>
double dot(const std::array<double, N>& a, const std::array<double, N>& b) {
  double out = 0.0;
  for (std::size_t i = 0; i < N; ++i) out += a[i] * b[i];
  return out;
}

template <std::size_t N>
double norm(const std::array<double, N>& a) {
  return std::sqrt(dot(a, a));
}

/// Angle between two nonzero vectors, accurate for small angles.
template <std::size_t N>
double angle_between(const std::array<double, N>& u, const std::array<double, N>& v) {
  const double nu = norm(u), nv = norm(v);
  double chord2 = 0.0;
  for (std::size_t i = 0; i < N; ++i) {
    const double d = u[i] / nu - v[i] / nv;
    chord2 += d * d;
  }
  return 2.0 * std::asin(std::min(1.0, 0.5 * std::sqrt(chord2)));
}

/// Minkowski product with signature (+, -, ..., -).
template <std::size_t N>
double minkowski_inner(const std::array<double, N>& a, const std::array<double, N>& b) {
  double out = a[0] * b[0];
  for (std::size_t i = 1; i < N; ++i) out -= a[i] * b[i];
  return out;
}

/// Point of the upper hyperboloid H^D, B = (cosh rho, sinh rho * theta).
template <std::size_t D = 3>
class HyperboloidPoint {
  static_assert(D >= 2, "hyperbolic dimension must be at least 2");

 public:
  using Spatial = SpatialVec<D>;
  using Embedded = EmbeddedVec<D>;

  HyperboloidPoint() { direction_[0] = 1.0; }

  static HyperboloidPoint from_rapidity(double rho, Spatial dir) {
    if (!(rho >= 0.0)) throw DomainError("rapidity must be non-negative");
    const double n = norm(dir);
    HyperboloidPoint out;
    out.rapidity_ = rho;
    if (n > 0.0)
      for (std::size_t i = 0; i < D; ++i) out.direction_[i] = dir[i] / n;
    else if (rho != 0.0)
      throw DomainError("direction must be nonzero for positive rapidity");
    return out;
  }

  /// B = (sqrt(1 + |b|^2), b)
  static HyperboloidPoint from_spatial(const Spatial& b) {
    const double nb = norm(b);
    return from_rapidity(std::asinh(nb), nb > 0.0 ? b : Spatial{});
  }

  /// Accepts an embedded point if <B,B> = 1 within tol and B0 >= 1.
  static HyperboloidPoint from_embedded(const Embedded& B, double tol = 1e-9) {
    const double q = minkowski_inner(B, B);
    if (std::abs(q - 1.0) > tol * std::max(1.0, B[0] * B[0]) || !(B[0] > 0.0))
      throw DomainError("point is not on the upper unit hyperboloid");
    Spatial b{};
    for (std::size_t i = 0; i < D; ++i) b[i] = B[i + 1];
    return from_spatial(b);
  }

  double rapidity() const { return rapidity_; }
  const Spatial& direction() const { return direction_; }

  /// Embedded coordinates; overflow to inf for rapidity beyond ~710.
  Embedded embedded() const {
    Embedded B{};
    B[0] = std::cosh(rapidity_);
    const double sh = std::sinh(rapidity_);
    for (std::size_t i = 0; i < D; ++i) B[i + 1] = sh * direction_[i];
    return B;
  }

  double time_component() const { return std::cosh(rapidity_); }

  /// |v| = |b| / B0 = tanh(rho); rounds to 1 for rho > ~19.
  double coordinate_speed() const { return std::tanh(rapidity_); }

  /// log(1 - |v|), finite for every finite rapidity.
  double log_speed_deficit() const {
    return std::log(2.0) - 2.0 * rapidity_ - std::log1p(std::exp(-2.0 * rapidity_));
  }

  /// <B,B> evaluated from the embedded coordinates (meaningful for moderate rho).
  double minkowski_norm() const {
    const Embedded B = embedded();
    return minkowski_inner(B, B);
  }

  /// B scaled as exp(rho) * mantissa with a bounded mantissa.
  Embedded scaled_mantissa() const {
    const double E = std::exp(-2.0 * rapidity_);
    Embedded m{};
    m[0] = 0.5 * (1.0 + E);
    for (std::size_t i = 0; i < D; ++i) m[i + 1] = 0.5 * (1.0 - E) * direction_[i];
    return m;
  }

 private:
  double rapidity_ = 0.0;
  Spatial direction_{};
};

/// Applies the boost carrying (1, 0) to B onto the point
/// (cosh eps, sinh eps * nu) given in B's rest frame; nu is a unit vector.
template <std::size_t D>
HyperboloidPoint<D> boost_compose(const HyperboloidPoint<D>& B, double eps, const SpatialVec<D>& nu) {
  if (eps == 0.0) return B;
  const double rho = B.rapidity();
  const auto& th = B.direction();
  const double x0 = std::cosh(eps);
  SpatialVec<D> x{};
  const double she = std::sinh(eps);
  for (std::size_t i = 0; i < D; ++i) x[i] = she * nu[i];
  const double thx = dot(th, x);

  if (rho <= 20.0) {
    const double shr = std::sinh(rho), chr = std::cosh(rho);
    // y = x + ((b.x)/(B0 + 1) + x0) b with b = sinh(rho) theta
    const double coef = (shr * thx) / (chr + 1.0) + x0;
    SpatialVec<D> y{};
    for (std::size_t i = 0; i < D; ++i) y[i] = x[i] + coef * shr * th[i];
    const double ny = norm(y);
    if (ny == 0.0) return HyperboloidPoint<D>::from_rapidity(0.0, th);
    return HyperboloidPoint<D>::from_rapidity(std::asinh(ny), y);
  }

  // Same map divided through by exp(rho)/2.
  const double E = std::exp(-2.0 * rho);
  const double er = 2.0 * std::exp(-rho);
  const double along = (1.0 + E) * thx + (1.0 - E) * x0;
  SpatialVec<D> y{};
  for (std::size_t i = 0; i < D; ++i) y[i] = er * (x[i] - thx * th[i]) + along * th[i];
  const double ny = norm(y);
  const double rho_new = rho + std::log(0.5 * ny) + std::log1p(std::sqrt(1.0 + 4.0 * E / (ny * ny)));
  return HyperboloidPoint<D>::from_rapidity(rho_new, y);
}

/// One step of hyperbolic Brownian motion: Ito increment
/// sigma * W + (sigma^2 D / 2) B ds with W the tangent noise at B, followed by
/// renormalization onto H^D. `noise` holds D i.i.d. N(0, ds) variates; they
/// are mapped to the tangent space at B by the boost frame of B.
template <std::size_t D>
HyperboloidPoint<D> hbm_step(const HyperboloidPoint<D>& B, double sigma, double ds,
                             const SpatialVec<D>& noise) {
  if (sigma == 0.0) return B;
  // In B's rest frame the unnormalized update is (1 + sigma^2 D ds / 2, sigma n).
  const double c = 1.0 + 0.5 * sigma * sigma * static_cast<double>(D) * ds;
  const double sn = std::abs(sigma) * norm(noise);
  if (!(sn < c)) throw StepSizeError("hyperbolic step left the hyperboloid; reduce ds");
  if (sn == 0.0) return B;
  const double eps = std::atanh(sn / c);
  SpatialVec<D> nu = noise;
  const double scale = (sigma > 0.0 ? 1.0 : -1.0) / norm(noise);
  for (auto& v : nu) v *= scale;
  return boost_compose(B, eps, nu);
}

/// exp(log_scale) * mantissa, for positions that outgrow a double.
template <std::size_t N>
struct ScaledVector {
  double log_scale = 0.0;
  std::array<double, N> mantissa{};

  /// this += exp(log_factor) * v
  void add(double log_factor, const std::array<double, N>& v) {
    if (log_factor > log_scale) {
      const double shrink = std::exp(log_scale - log_factor);
      for (auto& m : mantissa) m *= shrink;
      log_scale = log_factor;
    }
    const double w = std::exp(log_factor - log_scale);
    for (std::size_t i = 0; i < N; ++i) mantissa[i] += w * v[i];
  }

  /// Plain value; may overflow.
  std::array<double, N> value() const {
    std::array<double, N> out = mantissa;
    const double s = std::exp(log_scale);
    for (auto& x : out) x *= s;
    return out;
  }
};

template <std::size_t D>
struct FlatSample {
  double s = 0.0;
  HyperboloidPoint<D> velocity;
  ScaledVector<D + 1> position;

  /// (xi^j / xi^0)_j
  SpatialVec<D> position_ratio() const {
    SpatialVec<D> out{};
    for (std::size_t i = 0; i < D; ++i) out[i] = position.mantissa[i + 1] / position.mantissa[0];
    return out;
  }
  /// log |xi_spatial|
  double log_spatial_radius() const {
    SpatialVec<D> sp{};
    for (std::size_t i = 0; i < D; ++i) sp[i] = position.mantissa[i + 1];
    return position.log_scale + std::log(norm(sp));
  }
};

template <std::size_t D>
struct FlatDiffusionState {
  ScaledVector<D + 1> position;
  HyperboloidPoint<D> velocity;
  double s = 0.0;
};

/// Simulates (xi, B) for n_steps of size ds, integrating the position with
/// the trapezoidal rule. Samples are kept every `stride` steps plus the last.
/// With a finite stop.r_esc the run ends once |xi_spatial| >= r_esc while
/// moving outward.
template <std::size_t D>
Trajectory<FlatSample<D>> simulate_flat(const EmbeddedVec<D>& xi0, const HyperboloidPoint<D>& B0,
                                        double sigma, double ds, std::uint64_t n_steps,
                                        std::uint64_t seed, std::uint64_t stride = 1,
                                        std::uint64_t stream = 0, StopRule stop = {}) {
  if (!(ds > 0.0)) throw PreconditionError("ds must be positive");
  if (stride == 0) stride = 1;
  Trajectory<FlatSample<D>> traj;
  traj.sigma = sigma;
  traj.ds = ds;

  NormalStream normal(seed, stream);
  const double sq = std::sqrt(ds);
  FlatDiffusionState<D> st;
  st.position.mantissa = xi0;
  st.velocity = B0;
  traj.samples.push_back({0.0, st.velocity, st.position});

  const double log_r_esc = std::log(stop.r_esc);
  std::uint64_t k = 0;
  for (; k < n_steps; ++k) {
    SpatialVec<D> noise{};
    for (auto& z : noise) z = sq * normal();
    const HyperboloidPoint<D> next = hbm_step(st.velocity, sigma, ds, noise);

    auto m0 = st.velocity.scaled_mantissa();
    auto m1 = next.scaled_mantissa();
    for (auto& x : m0) x *= 0.5 * ds;
    for (auto& x : m1) x *= 0.5 * ds;
    st.position.add(st.velocity.rapidity(), m0);
    st.position.add(next.rapidity(), m1);
    st.velocity = next;
    st.s = static_cast<double>(k + 1) * ds;

    const bool last = k + 1 == n_steps;
    FlatSample<D> sample{st.s, st.velocity, st.position};
    bool escaped = false;
    if (std::isfinite(log_r_esc)) {
      SpatialVec<D> sp{};
      for (std::size_t i = 0; i < D; ++i) sp[i] = st.position.mantissa[i + 1];
      escaped = sample.log_spatial_radius() >= log_r_esc && dot(sp, st.velocity.direction()) > 0.0;
    }
    if ((k + 1) % stride == 0 || last || escaped) traj.samples.push_back(sample);
    if (escaped) {
      traj.exit = {ExitKind::EscapedRadius, st.s};
      ++k;
      break;
    }
  }
  traj.steps = k;
  if (traj.exit.kind == ExitKind::Running) traj.exit = {ExitKind::MaxSteps, st.s};
  return traj;
}

template <std::size_t D>
struct FlatDirection {
  SpatialVec<D> direction{};
  double convergence_angle = kNaN;  // angle between estimates at s_end/2 and s_end
};

template <std::size_t D>
FlatDirection<D> flat_asymptotic_direction(const Trajectory<FlatSample<D>>& traj) {
  if (traj.empty() || !(traj.back().velocity.time_component() > 10.0))
    throw InsufficientLength("trajectory too short: B0 <= 10 at the end");
  const auto& last = traj.back();
  const auto& mid = traj.samples[nearest_sample(traj, 0.5 * last.s)];
  FlatDirection<D> out;
  out.direction = last.velocity.direction();
  out.convergence_angle = angle_between(mid.velocity.direction(), last.velocity.direction());
  return out;
}

}  // namespace reldiff
