#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "reldiff/io.hpp"
#include "reldiff/montecarlo.hpp"
#include "reldiff/rng.hpp"
#include "reldiff/stats.hpp"
#include "support/oracles.hpp"

using namespace reldiff;

TEST(Rng, StreamsAreReproducibleAndDistinct) {
  NormalStream a(1, 0), b(1, 0), c(1, 1), d(2, 0);
  for (int i = 0; i < 10; ++i) {
    const double x = a();
    EXPECT_EQ(x, b());
    EXPECT_NE(x, c());
    EXPECT_NE(x, d());
  }
}

TEST(Rng, NormalMomentsAndKs) {
  NormalStream n(42, 7);
  std::vector<double> xs(50000);
  RunningStats acc;
  for (auto& x : xs) {
    x = n();
    acc.add(x);
  }
  EXPECT_NEAR(acc.mean, 0.0, 4.0 / std::sqrt(50000.0));
  EXPECT_NEAR(acc.variance(), 1.0, 4.0 * std::sqrt(2.0 / 50000.0));
  EXPECT_LT(oracle::ks_one_sample(xs, oracle::normal_cdf), kKsThreeSigma / std::sqrt(50000.0));
}

TEST(Stats, WilsonIntervalKnownValues) {
  // 50 of 100: centre 0.5, half-width 1.96 * sqrt(0.25/100 + 1.96^2/40000) / (1 + 1.96^2/100)
  const Interval iv = wilson_interval(50, 100);
  EXPECT_NEAR(iv.lo, 0.4038315, 1e-6);
  EXPECT_NEAR(iv.hi, 0.5961685, 1e-6);
  EXPECT_EQ(wilson_interval(0, 10).lo, 0.0);
  EXPECT_GT(wilson_interval(0, 10).hi, 0.0);
}

TEST(Stats, OneSidedTests) {
  EXPECT_TRUE(consistent_with_lower_bound(2000, 4000, 0.5));
  EXPECT_FALSE(consistent_with_lower_bound(1900, 4000, 0.5));
  EXPECT_TRUE(positive_at_95(1, 4000));
  EXPECT_FALSE(positive_at_95(0, 4000));
}

TEST(Stats, KsDetectsShift) {
  NormalStream n(3, 0);
  std::vector<double> a(2000), b(2000), c(2000);
  for (auto& x : a) x = n();
  for (auto& x : b) x = n();
  for (auto& x : c) x = n() + 0.3;
  EXPECT_TRUE(ks_two_sample(a, b, kKsThreeSigma).pass);
  EXPECT_FALSE(ks_two_sample(a, c, kKsThreeSigma).pass);
  EXPECT_NEAR(kKsThreeSigma, 1.8183, 1e-3);
}

TEST(Stats, OlsRecoversLine) {
  std::vector<double> x, y;
  for (int i = 0; i < 10; ++i) {
    x.push_back(i);
    y.push_back(2.0 + 0.5 * i);
  }
  const LinearFit fit = ols(x, y);
  EXPECT_NEAR(fit.slope, 0.5, 1e-14);
  EXPECT_NEAR(fit.intercept, 2.0, 1e-13);
  EXPECT_NEAR(fit.slope_stderr, 0.0, 1e-14);
}

TEST(LogASlope, GeodesicHasZeroSlope) {
  const StopRule stop{1e-3, kInf, 20.0};
  const auto traj = simulate_reduced({30.0, 20.0, 0.0}, 1.0, 0.0, 1e-2, 100000, stop, 1, 10, 0,
                                     ReducedScheme::HeunDrift);
  EXPECT_NEAR(estimate_log_a_slope(traj).slope, 0.0, 1e-9);
}

TEST(LogASlope, ShortOrCapturedPathsAreRejected) {
  const auto short_traj = simulate_reduced({30.0, 2.0, 0.0}, 1.0, 1.0, 1e-3, 100, {}, 1);
  EXPECT_THROW(estimate_log_a_slope(short_traj), InsufficientLength);
  const auto hit = simulate_reduced({1.4, 0.1, -2.0}, 1.0, 0.0, 1e-3, 100000, {}, 1);
  EXPECT_THROW(estimate_log_a_slope(hit), PreconditionError);
}

namespace {

EnsembleConfig small_config() {
  EnsembleConfig cfg;
  cfg.model = Model::SchwarzschildReduced;
  cfg.r0 = 3.0;
  cfg.T0 = 0.0;
  cfg.b0 = 1.0;
  cfg.n_paths = 200;
  cfg.master_seed = 11;
  return cfg;
}

}  // namespace

TEST(Ensemble, FractionsPartitionUnity) {
  const EnsembleStats st = run_ensemble(small_config());
  EXPECT_EQ(st.n_hit + st.n_escaped + st.n_unresolved, st.n_paths);
  EXPECT_DOUBLE_EQ(st.capture_fraction + st.escape_fraction + st.unresolved_fraction, 1.0);
  EXPECT_LE(st.capture_ci.lo, st.capture_fraction);
  EXPECT_GE(st.capture_ci.hi, st.capture_fraction);
}

TEST(Ensemble, IdenticalAcrossWorkerCounts) {
  EnsembleConfig cfg = small_config();
  cfg.workers = 1;
  const std::string one = stats_json(run_ensemble(cfg), cfg, "t");
  for (const unsigned w : {2u, 3u, 8u}) {
    cfg.workers = w;
    EXPECT_EQ(stats_json(run_ensemble(cfg), cfg, "t"), one) << w << " workers";
  }
}

TEST(Ensemble, FrameModelIdenticalAcrossWorkerCounts) {
  EnsembleConfig cfg = small_config();
  cfg.model = Model::SchwarzschildFrame;
  cfg.n_paths = 24;
  cfg.r_esc = 30.0;
  cfg.transport = true;
  cfg.workers = 1;
  const std::string one = stats_json(run_ensemble(cfg), cfg, "t");
  cfg.workers = 8;
  EXPECT_EQ(stats_json(run_ensemble(cfg), cfg, "t"), one);
}

TEST(Ensemble, PathDependsOnlyOnIndex) {
  EnsembleConfig cfg = small_config();
  const PathSummary p = run_path(cfg, 17);
  cfg.n_paths = 5000;
  const PathSummary q = run_path(cfg, 17);
  EXPECT_EQ(p.s_exit, q.s_exit);
  EXPECT_EQ(p.exit, q.exit);
}

TEST(Ensemble, InvalidConfigRejected) {
  EnsembleConfig cfg = small_config();
  cfg.n_paths = 0;
  EXPECT_THROW(run_ensemble(cfg), PreconditionError);
  cfg = small_config();
  cfg.r0 = 0.5;
  EXPECT_THROW(run_ensemble(cfg), PreconditionError);
  cfg = small_config();
  cfg.transport = true;
  EXPECT_THROW(run_ensemble(cfg), PreconditionError);
}

TEST(Ensemble, BothOutcomesAtModerateInitialData) {
  EnsembleConfig cfg = small_config();
  cfg.n_paths = 1000;
  const EnsembleStats st = run_ensemble(cfg);
  EXPECT_TRUE(positive_at_95(st.n_hit, st.n_paths));
  EXPECT_TRUE(positive_at_95(st.n_escaped, st.n_paths));
}

// Growing budgets never leave more paths unresolved.
TEST(Ensemble, UnresolvedFractionShrinksAlongLadder) {
  EnsembleConfig cfg = small_config();
  cfg.n_paths = 300;
  cfg.r0 = 4.0;
  cfg.T0 = 0.0;
  cfg.b0 = 4.0;
  std::vector<double> unresolved;
  for (const auto& [steps, r_esc] : std::vector<std::pair<std::uint64_t, double>>{{200, 20.0}, {2000, 50.0}, {20000, 100.0}}) {
    cfg.max_steps = steps;
    cfg.r_esc = r_esc;
    unresolved.push_back(run_ensemble(cfg).unresolved_fraction);
  }
  EXPECT_GE(unresolved[0], unresolved[1]);
  EXPECT_GE(unresolved[1], unresolved[2]);
  EXPECT_GT(unresolved[0], unresolved[2]);
}

TEST(Ensemble, FlatModelSlopeAndDirections) {
  EnsembleConfig cfg;
  cfg.model = Model::Flat;
  cfg.sigma = 1.0;
  cfg.n_paths = 100;
  cfg.s_max = 20.0;
  cfg.master_seed = 3;
  const EnsembleStats st = run_ensemble(cfg);
  EXPECT_EQ(st.slope_count, 100u);
  EXPECT_NEAR(st.log_a_slope_mean, 1.0, 4.0 * st.log_a_slope_stderr + 0.02);
  EXPECT_EQ(st.directions.size(), 100u);
}

TEST(Io, JsonNumbersRoundTripExactly) {
  for (const double x : {0.1, 1.0 / 3.0, 6.02214076e23, -2.5e-300, 0.0}) {
    EXPECT_EQ(std::stod(json_number(x)), x);
  }
  EXPECT_EQ(json_number(kNaN), "null");
  EXPECT_EQ(json_number(kInf), "null");
  EXPECT_EQ(json_string("a\"b\\\n"), "\"a\\\"b\\\\\\n\"");
}

TEST(Io, PathCsvHeader) {
  const std::string csv = paths_csv(run_ensemble(small_config()));
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "path,exit,s_exit,log_a_slope,dir_x,dir_y,dir_z,final_speed");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 201);
}

TEST(Io, Fnv1aKnownValues) {
  EXPECT_EQ(fnv1a64_hex(""), "cbf29ce484222325");
  EXPECT_EQ(fnv1a64_hex("a"), "af63dc4c8601ec8c");
}
