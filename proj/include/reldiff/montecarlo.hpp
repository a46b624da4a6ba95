#pragma once

// Parallel ensembles with a determinism contract, and the estimators used
// against the escape/capture and energy-growth results.
//
// Path i draws its noise from NormalStream(master_seed, i) and writes its
// summary into slot i; the reduction then walks the slots in index order.
// Output therefore does not depend on the number of workers or on
// scheduling.

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <exception>
#include <limits>
#include <string>
#include <thread>
#include <vector>

#include "reldiff/core.hpp"
#include "reldiff/frame_bundle.hpp"
#include "reldiff/minkowski.hpp"
#include "reldiff/rng.hpp"
#include "reldiff/schwarzschild.hpp"
#include "reldiff/stats.hpp"
#include "reldiff/trajectory.hpp"

namespace reldiff {

enum class Model { Flat, SchwarzschildReduced, SchwarzschildFrame };

inline std::string to_string(Model m) {
  switch (m) {
    case Model::Flat: return "flat";
    case Model::SchwarzschildReduced: return "schwarzschild-reduced";
    case Model::SchwarzschildFrame: return "schwarzschild-frame";
  }
  return "unknown";
}

struct EnsembleConfig {
  Model model = Model::SchwarzschildReduced;
  double R = 1.0;
  double sigma = 1.0;
  // Schwarzschild initial data
  double r0 = 3.0;
  double T0 = 0.0;
  double b0 = 1.0;
  // flat initial data: spatial part of the initial 4-velocity
  std::array<double, 3> B0{0.0, 0.0, 0.0};
  double ds = 0.0;  // 0 selects 1e-3 / sigma^2 (1e-3 when sigma = 0)
  std::uint64_t max_steps = 10'000'000;
  std::uint64_t n_paths = 1000;
  std::uint64_t master_seed = 1;
  double eps_h = 1e-3;
  double r_esc = 0.0;  // 0 selects max(100 R, 10 r0)
  double s_max = kInf;
  std::uint64_t stride = 100;
  unsigned workers = 1;  // not part of the results
  ReducedScheme reduced_scheme = ReducedScheme::EulerMaruyama;
  FrameScheme frame_scheme = FrameScheme::Split;
  bool transport = false;  // frame model: accumulate inverse parallel transport
};

inline double effective_ds(const EnsembleConfig& cfg) {
  if (cfg.ds > 0.0) return cfg.ds;
  return cfg.sigma != 0.0 ? 1e-3 / (cfg.sigma * cfg.sigma) : 1e-3;
}

inline double effective_r_esc(const EnsembleConfig& cfg) {
  if (cfg.r_esc > 0.0) return cfg.r_esc;
  return default_escape_radius(cfg.R, cfg.r0);
}

inline void validate(const EnsembleConfig& cfg) {
  if (cfg.n_paths < 1) throw PreconditionError("n_paths must be at least 1");
  if (!(cfg.eps_h > 0.0)) throw PreconditionError("eps_h must be positive");
  if (cfg.r_esc < 0.0) throw PreconditionError("r_esc must be positive");
  if (cfg.ds < 0.0) throw PreconditionError("ds must be positive");
  if (!(cfg.s_max > 0.0)) throw PreconditionError("s_max must be positive");
  if (cfg.R < 0.0) throw PreconditionError("R must be non-negative");
  if (cfg.model != Model::Flat && !(cfg.r0 > cfg.R)) throw PreconditionError("r0 must exceed R");
  if (cfg.transport && cfg.model != Model::SchwarzschildFrame)
    throw PreconditionError("transport is only available for the frame model");
}

// ---------------------------------------------------------------------------
// Single-path estimators

/// log cosh(rho) without overflow.
inline double log_cosh(double rho) {
  const double x = std::abs(rho);
  return x + std::log1p(std::exp(-2.0 * x)) - std::log(2.0);
}

namespace detail {

inline LinearFit slope_second_half(const std::vector<double>& s, const std::vector<double>& loga, double sigma,
                                   ExitKind exit) {
  if (exit == ExitKind::HitBody) throw PreconditionError("log-a slope needs a surviving trajectory");
  if (s.empty()) throw InsufficientLength("empty trajectory");
  const double s_end = s.back();
  if (sigma != 0.0 && s_end < 10.0 / (sigma * sigma))
    throw InsufficientLength("trajectory shorter than 10 / sigma^2");
  std::vector<double> x, y;
  for (std::size_t i = 0; i < s.size(); ++i)
    if (s[i] >= 0.5 * s_end) {
      x.push_back(s[i]);
      y.push_back(loga[i]);
    }
  if (x.size() < 3) throw InsufficientLength("fewer than 3 samples in the second half");
  return ols(x, y);
}

}  // namespace detail

/// Least-squares slope of log a_s over the second half of the path.
inline LinearFit estimate_log_a_slope(const Trajectory<ReducedSample>& traj) {
  std::vector<double> s, la;
  for (const auto& x : traj.samples) {
    s.push_back(x.s);
    la.push_back(std::log(x.a));
  }
  return detail::slope_second_half(s, la, traj.sigma, traj.exit.kind);
}

inline LinearFit estimate_log_a_slope(const Trajectory<FrameSample>& traj) {
  std::vector<double> s, la;
  for (const auto& x : traj.samples) {
    s.push_back(x.s);
    la.push_back(std::log(x.a));
  }
  return detail::slope_second_half(s, la, traj.sigma, traj.exit.kind);
}

/// Flat space: a = B^0 = cosh(rho).
template <std::size_t D>
LinearFit estimate_log_a_slope(const Trajectory<FlatSample<D>>& traj) {
  std::vector<double> s, la;
  for (const auto& x : traj.samples) {
    s.push_back(x.s);
    la.push_back(log_cosh(x.velocity.rapidity()));
  }
  return detail::slope_second_half(s, la, traj.sigma, traj.exit.kind);
}

/// Coordinate speed |dx/dt| = (1 - R/r) sqrt(T^2 + b^2/r^2) / a.
inline double reduced_coordinate_speed(double r, double b, double T, double a, double R) {
  return (1.0 - R / r) * std::sqrt(T * T + b * b / (r * r)) / a;
}

// ---------------------------------------------------------------------------
// Ensemble

struct PathSummary {
  std::uint64_t index = 0;
  ExitKind exit = ExitKind::Running;
  double s_exit = kNaN;
  std::uint64_t steps = 0;
  double log_a_slope = kNaN;  // NaN when the path is captured or too short
  std::array<double, 3> direction{kNaN, kNaN, kNaN};
  double final_speed = kNaN;
  double convergence_angle = kNaN;
  double eta_defect = kNaN;
  bool failed = false;
  std::string error;
};

struct EnsembleStats {
  std::uint64_t n_paths = 0;
  std::uint64_t n_hit = 0;
  std::uint64_t n_escaped = 0;
  std::uint64_t n_unresolved = 0;  // step/time budget exhausted or numerical failure
  std::uint64_t n_failed = 0;
  double capture_fraction = 0.0;
  double escape_fraction = 0.0;
  double unresolved_fraction = 0.0;
  Interval capture_ci;
  Interval escape_ci;
  std::uint64_t slope_count = 0;
  double log_a_slope_mean = kNaN;
  double log_a_slope_stderr = kNaN;
  std::vector<std::array<double, 3>> directions;
  std::vector<double> terminal_speeds;
  std::vector<double> convergence_angles;
  double max_eta_defect = kNaN;
  std::uint64_t total_steps = 0;
  std::vector<PathSummary> paths;
};

/// Simulates path `index` of the ensemble and reduces it to a summary.
inline PathSummary run_path(const EnsembleConfig& cfg, std::uint64_t index) {
  PathSummary out;
  out.index = index;
  const double ds = effective_ds(cfg);
  StopRule stop{cfg.eps_h, effective_r_esc(cfg), cfg.s_max};

  auto try_slope = [&](const auto& traj) {
    try {
      out.log_a_slope = estimate_log_a_slope(traj).slope;
    } catch (const InsufficientLength&) {
    } catch (const PreconditionError&) {
    }
  };

  switch (cfg.model) {
    case Model::Flat: {
      if (cfg.r_esc <= 0.0) stop.r_esc = kInf;
      std::uint64_t n_steps = cfg.max_steps;
      if (std::isfinite(cfg.s_max))
        n_steps = std::min<std::uint64_t>(n_steps, static_cast<std::uint64_t>(std::llround(cfg.s_max / ds)));
      const auto traj = simulate_flat<3>(EmbeddedVec<3>{}, HyperboloidPoint<3>::from_spatial(cfg.B0), cfg.sigma, ds,
                                         n_steps, cfg.master_seed, cfg.stride, index, stop);
      out.exit = traj.exit.kind;
      out.s_exit = traj.exit.s_exit;
      out.steps = traj.steps;
      out.final_speed = traj.back().velocity.coordinate_speed();
      try_slope(traj);
      if (traj.back().velocity.time_component() > 10.0) {
        const auto d = flat_asymptotic_direction(traj);
        out.direction = d.direction;
        out.convergence_angle = d.convergence_angle;
      }
      break;
    }
    case Model::SchwarzschildReduced: {
      const auto traj = simulate_reduced({cfg.r0, cfg.b0, cfg.T0}, cfg.R, cfg.sigma, ds, cfg.max_steps, stop,
                                         cfg.master_seed, cfg.stride, index, cfg.reduced_scheme);
      out.exit = traj.exit.kind;
      out.s_exit = traj.exit.s_exit;
      out.steps = traj.steps;
      if (out.exit != ExitKind::HitBody) {
        const auto& x = traj.back();
        out.final_speed = reduced_coordinate_speed(x.r, x.b, x.T, x.a, cfg.R);
      }
      try_slope(traj);
      break;
    }
    case Model::SchwarzschildFrame: {
      const Chart chart = Chart::cartesian(cfg.R);
      FrameRunOptions opt;
      opt.stride = cfg.stride;
      opt.stop = stop;
      opt.record_transport = cfg.transport;
      opt.stream = index;
      opt.scheme = cfg.frame_scheme;
      const auto traj = simulate_frame(initial_frame(chart, cfg.r0, cfg.T0, cfg.b0), chart, cfg.sigma, ds,
                                       cfg.max_steps, cfg.master_seed, opt);
      out.exit = traj.exit.kind;
      out.s_exit = traj.exit.s_exit;
      out.steps = traj.steps;
      if (out.exit != ExitKind::HitBody) out.final_speed = coordinate_speed(traj.back().e0);
      if (out.exit == ExitKind::EscapedRadius) {
        const EscapeDirection d = asymptotic_direction_schwarzschild(traj);
        out.direction = d.direction;
        out.convergence_angle = d.convergence_angle;
      }
      if (cfg.transport) out.eta_defect = eta_norm_defect(traj, chart);
      try_slope(traj);
      break;
    }
  }
  return out;
}

/// Runs all paths on cfg.workers threads, then reduces in index order.
inline EnsembleStats run_ensemble(const EnsembleConfig& cfg) {
  validate(cfg);
  const std::uint64_t n = cfg.n_paths;
  std::vector<PathSummary> paths(n);

  auto work = [&](std::atomic<std::uint64_t>& next) {
    for (;;) {
      const std::uint64_t i = next.fetch_add(1);
      if (i >= n) return;
      try {
        paths[i] = run_path(cfg, i);
      } catch (const std::exception& ex) {
        paths[i] = PathSummary{};
        paths[i].index = i;
        paths[i].failed = true;
        paths[i].error = ex.what();
      }
    }
  };
  std::atomic<std::uint64_t> next{0};
  const unsigned workers = static_cast<unsigned>(std::clamp<std::uint64_t>(cfg.workers, 1, n));
  if (workers == 1) {
    work(next);
  } else {
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (unsigned w = 0; w < workers; ++w) pool.emplace_back(work, std::ref(next));
    for (auto& t : pool) t.join();
  }

  EnsembleStats st;
  st.n_paths = n;
  RunningStats slope;
  for (const auto& p : paths) {
    st.total_steps += p.steps;
    if (p.failed) {
      ++st.n_failed;
      ++st.n_unresolved;
      continue;
    }
    if (p.exit == ExitKind::HitBody)
      ++st.n_hit;
    else if (p.exit == ExitKind::EscapedRadius)
      ++st.n_escaped;
    else
      ++st.n_unresolved;
    if (std::isfinite(p.log_a_slope)) slope.add(p.log_a_slope);
    if (std::isfinite(p.direction[0])) {
      st.directions.push_back(p.direction);
      st.convergence_angles.push_back(p.convergence_angle);
    }
    if (p.exit == ExitKind::EscapedRadius && std::isfinite(p.final_speed)) st.terminal_speeds.push_back(p.final_speed);
    if (std::isfinite(p.eta_defect))
      st.max_eta_defect = std::isfinite(st.max_eta_defect) ? std::max(st.max_eta_defect, p.eta_defect) : p.eta_defect;
  }
  const double nn = static_cast<double>(n);
  st.capture_fraction = static_cast<double>(st.n_hit) / nn;
  st.escape_fraction = static_cast<double>(st.n_escaped) / nn;
  st.unresolved_fraction = static_cast<double>(st.n_unresolved) / nn;
  st.capture_ci = wilson_interval(st.n_hit, n);
  st.escape_ci = wilson_interval(st.n_escaped, n);
  st.slope_count = slope.n;
  st.log_a_slope_mean = slope.n > 0 ? slope.mean : kNaN;
  st.log_a_slope_stderr = slope.stderr_mean();
  st.paths = std::move(paths);
  return st;
}

// ---------------------------------------------------------------------------
// Generator consistency of the reduced diffusion

enum class TestFunction { r, T, b, T2, b2, rb, bT, rT };

inline constexpr std::array<TestFunction, 8> kAllTestFunctions{
    TestFunction::r,  TestFunction::T,  TestFunction::b,  TestFunction::T2,
    TestFunction::b2, TestFunction::rb, TestFunction::bT, TestFunction::rT};

inline std::string to_string(TestFunction f) {
  switch (f) {
    case TestFunction::r: return "r";
    case TestFunction::T: return "T";
    case TestFunction::b: return "b";
    case TestFunction::T2: return "T^2";
    case TestFunction::b2: return "b^2";
    case TestFunction::rb: return "r*b";
    case TestFunction::bT: return "b*T";
    case TestFunction::rT: return "r*T";
  }
  return "unknown";
}

inline double evaluate(TestFunction f, const ReducedState& x) {
  switch (f) {
    case TestFunction::r: return x.r;
    case TestFunction::T: return x.T;
    case TestFunction::b: return x.b;
    case TestFunction::T2: return x.T * x.T;
    case TestFunction::b2: return x.b * x.b;
    case TestFunction::rb: return x.r * x.b;
    case TestFunction::bT: return x.b * x.T;
    case TestFunction::rT: return x.r * x.T;
  }
  return kNaN;
}

/// L'f at x from the drift and covariation of prop1_coeffs:
/// L' = T d_r + mu_b d_b + mu_T d_T + 1/2 (K_bb d_bb + 2 K_bT d_bT + K_TT d_TT).
inline double generator_analytic(TestFunction f, const ReducedState& x, double R, double sigma) {
  const Prop1Coeffs c = prop1_coeffs(x.r, recover_a(x, R), x.b, x.T, R, sigma);
  const double mr = c.drift[0], mb = c.drift[2], mT = c.drift[3];
  const double Kbb = c.covariation[1][1], KbT = c.covariation[1][2], KTT = c.covariation[2][2];
  switch (f) {
    case TestFunction::r: return mr;
    case TestFunction::T: return mT;
    case TestFunction::b: return mb;
    case TestFunction::T2: return 2.0 * x.T * mT + KTT;
    case TestFunction::b2: return 2.0 * x.b * mb + Kbb;
    case TestFunction::rb: return x.r * mb + x.b * mr;
    case TestFunction::bT: return x.b * mT + x.T * mb + KbT;
    case TestFunction::rT: return x.r * mT + x.T * mr;
  }
  return kNaN;
}

struct GeneratorCheck {
  double empirical = kNaN;
  double analytic = kNaN;
  double std_error = kNaN;
  double z = kNaN;
};

/// Monte Carlo (E f(X_h) - f(x)) / h over n one-step samples of reduced_step,
/// compared with L'f(x). A deterministic increment (zero sample variance)
/// scores z = 0 when it matches the analytic value up to the round-off of
/// differencing f, and infinity otherwise.
inline GeneratorCheck generator_consistency(const ReducedState& x, double R, double sigma, TestFunction f,
                                            double h, std::uint64_t n, std::uint64_t seed,
                                            ReducedScheme scheme = ReducedScheme::EulerMaruyama) {
  if (!(h > 0.0) || n < 2) throw PreconditionError("generator check needs h > 0 and n >= 2");
  NormalStream normal(seed, 0);
  const double sq = std::sqrt(h);
  const double f0 = evaluate(f, x);
  RunningStats acc;
  for (std::uint64_t i = 0; i < n; ++i) {
    const ReducedNoise nz{sq * normal(), sq * normal(), sq * normal()};
    const ReducedStepResult res = reduced_step(x, R, sigma, h, nz, scheme);
    acc.add((evaluate(f, res.state) - f0) / h);
  }
  GeneratorCheck out;
  out.empirical = acc.mean;
  out.analytic = generator_analytic(f, x, R, sigma);
  out.std_error = acc.stderr_mean();
  const double diff = out.empirical - out.analytic;
  if (out.std_error > 0.0)
    out.z = diff / out.std_error;
  else
    out.z = std::abs(diff) <= 16.0 * std::numeric_limits<double>::epsilon() * (std::abs(f0) / h + std::abs(out.analytic))
                ? 0.0
                : kInf;
  return out;
}

}  // namespace reldiff
