#pragma once

// Self-checks run by `reldiff check`: closed-form goldens, curvature,
// metric compatibility, generator consistency, the flat limit of the frame
// diffusion and ensemble determinism.

#include <array>
#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include "reldiff/frame_bundle.hpp"
#include "reldiff/geometry.hpp"
#include "reldiff/io.hpp"
#include "reldiff/minkowski.hpp"
#include "reldiff/montecarlo.hpp"
#include "reldiff/rng.hpp"
#include "reldiff/schwarzschild.hpp"
#include "reldiff/stats.hpp"

namespace reldiff {

/// Deliberate defects used to confirm that the checks can fail.
enum class Fault { None, ChristoffelSign };

struct CheckResult {
  std::string name;
  bool pass = false;
  double value = kNaN;      // worst observed discrepancy or statistic
  double tolerance = kNaN;  // threshold it was held to
  std::string detail;
};

struct CheckReport {
  bool quick = false;
  std::vector<CheckResult> checks;
  bool pass() const {
    for (const auto& c : checks)
      if (!c.pass) return false;
    return true;
  }
  std::string json() const {
    std::vector<std::string> items;
    for (const auto& c : checks)
      items.push_back(JsonObject()
                          .str("name", c.name)
                          .boolean("pass", c.pass)
                          .num("value", c.value)
                          .num("tolerance", c.tolerance)
                          .str("detail", c.detail)
                          .dump());
    return JsonObject().boolean("quick", quick).boolean("pass", pass()).raw("checks", json_array_of(items)).dump();
  }
};

namespace checks {

inline CheckResult christoffel_golden(Fault fault) {
  // R = 1, r = 2, phi = pi/2
  const double R = 1.0, r = 2.0, phi = 0.5 * std::numbers::pi;
  ChristoffelField G = christoffel_at(Chart::polar(R), {0.0, r, phi, 0.0});
  if (fault == Fault::ChristoffelSign) G[1][1][1] = -G[1][1][1];
  struct Golden {
    int i, j, k;
    double value;
    const char* label;
  };
  const Golden goldens[] = {
      {0, 1, 0, 0.25, "t_rt"},          {1, 1, 1, -0.25, "r_rr"},
      {1, 0, 0, 0.0625, "r_tt"},        {1, 2, 2, -1.0, "r_phiphi"},
      {1, 3, 3, -1.0, "r_psipsi"},      {2, 1, 2, 0.5, "phi_rphi"},
      {3, 1, 3, 0.5, "psi_rpsi"},       {2, 3, 3, -std::sin(phi) * std::cos(phi), "phi_psipsi"},
      {3, 2, 3, std::cos(phi) / std::sin(phi), "psi_phipsi"},
  };
  CheckResult out{"christoffel_golden", true, 0.0, 1e-12, ""};
  for (const auto& g : goldens) {
    const double got = G[g.i][g.j][g.k];
    const double err = std::abs(got - g.value) / std::max(1.0, std::abs(g.value));
    out.value = std::max(out.value, err);
    if (err > out.tolerance) {
      out.pass = false;
      out.detail += std::string(out.detail.empty() ? "" : "; ") + "Gamma^" + g.label + " = " + json_number(got) +
                    ", expected " + json_number(g.value);
    }
  }
  return out;
}

inline CheckResult metric_golden() {
  const MetricTensor g = metric_at(Chart::polar(1.0), {0.0, 2.0, 0.5 * std::numbers::pi, 0.0});
  const double want[4] = {0.5, -2.0, -4.0, -4.0};
  CheckResult out{"metric_golden", true, 0.0, 1e-12, ""};
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) out.value = std::max(out.value, std::abs(g[i][j] - (i == j ? want[i] : 0.0)));
  out.pass = out.value <= out.tolerance;
  return out;
}

inline CheckResult ricci_vanishes() {
  CheckResult out{"ricci_vanishes", true, 0.0, 1e-6, "polar chart, R in {0.5,1,2}, r/R in {3,5,10}, 3 latitudes"};
  for (const double R : {0.5, 1.0, 2.0})
    for (const double k : {3.0, 5.0, 10.0})
      for (const double phi : {std::numbers::pi / 3.0, std::numbers::pi / 2.0, 2.0 * std::numbers::pi / 3.0}) {
        const double r = k * R;
        const Mat4 ric = ricci_at(Chart::polar(R), {0.0, r, phi, 0.3}, 1e-5 * r);
        out.value = std::max(out.value, max_abs_entry(ric));
      }
  out.pass = out.value <= out.tolerance;
  return out;
}

inline CheckResult metric_compatibility() {
  CheckResult out{"cartesian_metric_compatibility", true, 0.0, 1e-6, "relative, 32 random points"};
  Xoshiro256pp rng(20261016);
  const Chart chart = Chart::cartesian(1.0);
  for (int trial = 0; trial < 32; ++trial) {
    SpacetimePoint p{};
    do {
      for (auto& x : p) x = 20.0 * rng.uniform() - 10.0;
    } while (spatial_norm(p) < 1.5);
    const ChristoffelField G = christoffel_at(chart, p);
    const MetricTensor g = metric_at(chart, p);
    const double h = 1e-6 * spatial_norm(p);
    for (std::size_t k = 0; k < 4; ++k) {
      SpacetimePoint pp = p, pm = p;
      pp[k] += h;
      pm[k] -= h;
      const MetricTensor gp = metric_at(chart, pp), gm = metric_at(chart, pm);
      for (std::size_t i = 0; i < 4; ++i)
        for (std::size_t j = 0; j < 4; ++j) {
          double d = (gp[i][j] - gm[i][j]) / (2.0 * h);
          for (std::size_t l = 0; l < 4; ++l) d -= G[l][k][i] * g[l][j] + G[l][k][j] * g[i][l];
          out.value = std::max(out.value, std::abs(d) / std::max(1.0, max_abs_entry(g)));
        }
    }
  }
  out.pass = out.value <= out.tolerance;
  return out;
}

inline CheckResult gram_schmidt_idempotent() {
  CheckResult out{"gram_schmidt_idempotent", true, 0.0, 1e-12, ""};
  const Chart chart = Chart::cartesian(1.0);
  const FrameState u = initial_frame(chart, 4.0, 0.7, 2.5);
  const MetricTensor g = metric_at(chart, u.p);
  const Frame again = lorentz_gram_schmidt(g, u.e);
  for (std::size_t a = 0; a < 4; ++a)
    for (std::size_t i = 0; i < 4; ++i) out.value = std::max(out.value, std::abs(again[a][i] - u.e[a][i]));
  out.value = std::max(out.value, frame_defect(g, again));
  out.pass = out.value <= out.tolerance;
  return out;
}

/// Reference states (r, b, T) at R = 1, sigma = 1 for generator checks.
inline const std::array<ReducedState, 5> kReferenceStates{
    ReducedState{2.0, 1.0, 0.0}, ReducedState{3.0, 1.0, 0.5}, ReducedState{1.5, 0.5, -1.0},
    ReducedState{5.0, 2.0, 1.0}, ReducedState{10.0, 3.0, -2.0}};

inline CheckResult generator_consistency_check(std::uint64_t n) {
  CheckResult out{"generator_consistency", true, 0.0, 3.0, ""};
  std::uint64_t seed = 900;
  for (const auto& x : kReferenceStates)
    for (const TestFunction f : kAllTestFunctions) {
      const GeneratorCheck g = generator_consistency(x, 1.0, 1.0, f, 1e-3, n, seed++);
      out.value = std::max(out.value, std::abs(g.z));
      if (!(std::abs(g.z) <= out.tolerance)) {
        out.pass = false;
        out.detail += "f=" + to_string(f) + " at (r,b,T)=(" + json_number(x.r) + "," + json_number(x.b) + "," +
                      json_number(x.T) + ") z=" + json_number(g.z) + "; ";
      }
    }
  out.detail = "max |z| over 5 states x 8 test functions, n=" + std::to_string(n) +
               (out.detail.empty() ? "" : "; failing: " + out.detail);
  return out;
}

/// Rapidities arccosh <e0(s), e0(0)> of the flat-chart frame diffusion and of
/// direct hyperbolic Brownian motion at proper time s.
struct FlatLimitSamples {
  std::vector<double> frame;
  std::vector<double> hyperbolic;
};

inline FlatLimitSamples flat_limit_samples(std::size_t n, double s, double ds_frame, double ds_hbm,
                                           std::uint64_t seed) {
  FlatLimitSamples out;
  const Chart chart = Chart::flat();
  FrameRunOptions opt;
  opt.stride = 1u << 30;
  opt.stop.s_max = s;
  const auto steps = static_cast<std::uint64_t>(std::llround(s / ds_hbm));
  for (std::size_t i = 0; i < n; ++i) {
    opt.stream = i;
    const auto traj = simulate_frame(rest_frame_at_origin(), chart, 1.0, ds_frame, 1u << 30, seed, opt);
    out.frame.push_back(std::acosh(std::max(1.0, traj.back().e0[0])));
    const auto flat = simulate_flat<3>(EmbeddedVec<3>{}, HyperboloidPoint<3>{}, 1.0, ds_hbm, steps, seed + 1, 1u << 30, i);
    out.hyperbolic.push_back(flat.back().velocity.rapidity());
  }
  return out;
}

inline CheckResult flat_limit_equivalence(std::size_t n, double s) {
  const FlatLimitSamples smp = flat_limit_samples(n, s, 1e-2, 1e-3, 77);
  const KsResult ks = ks_two_sample(smp.frame, smp.hyperbolic, kKsThreeSigma);
  return {"flat_limit_equivalence", ks.pass, ks.statistic, ks.critical,
          "two-sample KS on arccosh<e0(s),e0(0)> at s=" + json_number(s) + ", n=" + std::to_string(n)};
}

inline CheckResult ensemble_determinism() {
  EnsembleConfig cfg;
  cfg.model = Model::SchwarzschildReduced;
  cfg.r0 = 3.0;
  cfg.T0 = 0.0;
  cfg.b0 = 1.0;
  cfg.n_paths = 64;
  cfg.master_seed = 5;
  cfg.workers = 1;
  const std::string one = stats_json(run_ensemble(cfg), cfg, "check");
  cfg.workers = 4;
  const std::string four = stats_json(run_ensemble(cfg), cfg, "check");
  return {"ensemble_determinism", one == four, one == four ? 0.0 : 1.0, 0.0, "stats JSON with 1 vs 4 workers"};
}

inline CheckResult orbit_classification() {
  CheckResult out{"orbit_classification", true, 0.0, 0.0, ""};
  auto expect = [&](const GeodesicParams& p, double r0, int sign, OrbitClass want) {
    const OrbitClass got = classify_orbit(p, r0, sign).kind;
    if (got != want) {
      out.pass = false;
      out.value += 1.0;
      out.detail += to_string(got) + " instead of " + to_string(want) + "; ";
    }
  };
  expect(circular_orbit_params(1.0, 4.0), 4.0, 1, OrbitClass::CircularStable);
  expect(circular_orbit_params(1.0, 2.0), 2.0, 1, OrbitClass::CircularUnstable);
  expect({1.5, 0.0, 1.0}, 3.0, 1, OrbitClass::RToInfinity);
  expect({0.9, 0.0, 1.0}, 5.0, -1, OrbitClass::RToR);
  return out;
}

}  // namespace checks

inline CheckReport run_checks(bool quick, Fault fault = Fault::None) {
  CheckReport rep;
  rep.quick = quick;
  rep.checks.push_back(checks::christoffel_golden(fault));
  rep.checks.push_back(checks::metric_golden());
  rep.checks.push_back(checks::ricci_vanishes());
  rep.checks.push_back(checks::metric_compatibility());
  rep.checks.push_back(checks::gram_schmidt_idempotent());
  rep.checks.push_back(checks::orbit_classification());
  rep.checks.push_back(checks::generator_consistency_check(quick ? 100'000 : 1'000'000));
  rep.checks.push_back(quick ? checks::flat_limit_equivalence(1000, 2.0) : checks::flat_limit_equivalence(10'000, 5.0));
  rep.checks.push_back(checks::ensemble_determinism());
  return rep;
}

}  // namespace reldiff
