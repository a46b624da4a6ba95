#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "reldiff/cli.hpp"
#include "reldiff/io.hpp"

using namespace reldiff;
namespace fs = std::filesystem;

namespace {

struct CliRun {
  int code = -1;
  std::string out;
  std::string err;
};

CliRun run(std::vector<std::string> args) {
  std::ostringstream out, err;
  CliRun r;
  r.code = run_cli(std::move(args), out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("reldiff_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }
  std::string path(const std::string& name) const { return (dir_ / name).string(); }
  fs::path dir_;
};

std::vector<nlohmann::json> jsonl(const std::string& text) {
  std::vector<nlohmann::json> out;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line))
    if (!line.empty()) out.push_back(nlohmann::json::parse(line));
  return out;
}

}  // namespace

TEST_F(CliTest, ReducedGeodesicKeepsAAndBConstant) {
  const CliRun r = run({"simulate", "schwarzschild-reduced", "--R", "1", "--sigma", "0", "--r0", "5", "--T0", "0", "--b0",
                     "2", "--steps", "5000", "--stride", "100", "--scheme", "heun-drift"});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto recs = jsonl(r.out);
  ASSERT_GT(recs.size(), 10u);
  const double a0 = recs.front()["a"].get<double>();
  for (std::size_t i = 0; i + 1 < recs.size(); ++i) {
    EXPECT_NEAR(recs[i]["a"].get<double>(), a0, 1e-9);
    EXPECT_EQ(recs[i]["b"].get<double>(), 2.0);
  }
  EXPECT_TRUE(recs.back().contains("exit"));
}

TEST_F(CliTest, SameSeedGivesIdenticalFiles) {
  const std::vector<std::string> base{"simulate", "schwarzschild-frame", "--seed", "42", "--steps", "2000",
                                      "--stride", "10", "--transport"};
  auto a = base, b = base;
  a.insert(a.end(), {"--out", path("a.jsonl")});
  b.insert(b.end(), {"--out", path("b.jsonl")});
  ASSERT_EQ(run(a).code, 0);
  ASSERT_EQ(run(b).code, 0);
  EXPECT_EQ(read_file(path("a.jsonl")), read_file(path("b.jsonl")));
}

TEST_F(CliTest, FlatRunStaysBelowLightSpeed) {
  const CliRun r = run({"simulate", "flat", "--sigma", "1", "--steps", "1000000", "--ds", "1e-3", "--stride", "100000"});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto recs = jsonl(r.out);
  const auto& last = recs[recs.size() - 2];
  EXPECT_LT(last["log_speed_deficit"].get<double>(), 0.0);
  EXPECT_LE(last["speed"].get<double>(), 1.0);
  EXPECT_DOUBLE_EQ(last["s"].get<double>(), 1000.0);
}

TEST_F(CliTest, VerifyRechecksPseudoNorm) {
  for (const std::string model : {"flat", "schwarzschild-reduced", "schwarzschild-frame"}) {
    const std::string file = path(model + ".jsonl");
    std::vector<std::string> args{"simulate", model, "--steps", "3000", "--stride", "100", "--out", file};
    if (model == "schwarzschild-frame") args.push_back("--transport");
    ASSERT_EQ(run(args).code, 0);
    const CliRun v = run({"verify", file});
    EXPECT_EQ(v.code, 0) << model << ": " << v.out;
    EXPECT_TRUE(nlohmann::json::parse(v.out)["pass"].get<bool>());
  }
}

TEST_F(CliTest, VerifyFlagsCorruptedRecord) {
  const std::string file = path("bad.jsonl");
  write_file(file, "{\"s\":0,\"r\":5,\"T\":0,\"b\":2,\"a\":1.5,\"R\":1}\n");
  EXPECT_EQ(run({"verify", file}).code, 1);
}

TEST_F(CliTest, EnsembleIdenticalAcrossWorkers) {
  const std::vector<std::string> base{"ensemble", "--n-paths", "60", "--r0", "3", "--seed", "9"};
  auto one = base, eight = base;
  one.insert(one.end(), {"--workers", "1"});
  eight.insert(eight.end(), {"--workers", "8"});
  const CliRun a = run(one), b = run(eight);
  ASSERT_EQ(a.code, 0) << a.err;
  EXPECT_EQ(a.out, b.out);
}

TEST_F(CliTest, WorkerCountFromEnvironment) {
  ::setenv(kWorkersEnv, "3", 1);
  EXPECT_EQ(cli::resolve_workers(0), 3u);
  EXPECT_EQ(cli::resolve_workers(5), 5u);
  ::setenv(kWorkersEnv, "zero", 1);
  EXPECT_EQ(run({"ensemble", "--n-paths", "2"}).code, 2);
  ::unsetenv(kWorkersEnv);
}

TEST_F(CliTest, EmptyEnsembleIsUsageError) { EXPECT_EQ(run({"ensemble", "--n-paths", "0"}).code, 2); }

TEST_F(CliTest, BadFlagsAreUsageErrors) {
  EXPECT_EQ(run({"simulate", "nowhere"}).code, 2);
  EXPECT_EQ(run({"simulate", "flat", "--bogus", "1"}).code, 2);
  EXPECT_EQ(run({"simulate", "schwarzschild-reduced", "--r0", "0.5"}).code, 2);
  EXPECT_EQ(run({"ensemble", "--scheme", "rk4"}).code, 2);
  EXPECT_EQ(run({}).code, 2);
  EXPECT_EQ(run({"--help"}).code, 0);
}

TEST_F(CliTest, ConfigFileWithFlagOverride) {
  const std::string conf = path("run.conf");
  write_file(conf, "# comment\nR = 1\nsigma = 1\nr0 = 3\nT0 = 0\nb0 = 1\nn_paths = 40\nseed = 5\n");
  const CliRun a = run({"ensemble", "--config", conf});
  ASSERT_EQ(a.code, 0) << a.err;
  const auto ja = nlohmann::json::parse(a.out);
  EXPECT_EQ(ja["n_paths"].get<int>(), 40);
  EXPECT_EQ(ja["config"]["master_seed"].get<int>(), 5);
  const CliRun b = run({"ensemble", "--config", conf, "--n-paths", "30"});
  ASSERT_EQ(b.code, 0) << b.err;
  EXPECT_EQ(nlohmann::json::parse(b.out)["n_paths"].get<int>(), 30);
  write_file(conf, "no equals sign here\n");
  EXPECT_EQ(run({"ensemble", "--config", conf}).code, 2);
}

TEST_F(CliTest, ShippedBoundConfigsParse) {
  for (const char* name : {"escape_bound.conf", "capture_bound.conf"}) {
    const std::string conf = std::string(RELDIFF_SOURCE_DIR) + "/configs/" + name;
    const CliRun r = run({"ensemble", "--config", conf, "--n-paths", "20"});
    ASSERT_EQ(r.code, 0) << name << ": " << r.err;
    const auto j = nlohmann::json::parse(r.out);
    EXPECT_EQ(j["config"]["n_paths"].get<int>(), 20);
  }
}

TEST_F(CliTest, EnsembleCsvAndManifestReplay) {
  const std::string out = path("stats.json"), csv = path("paths.csv"), man = path("manifest.json");
  const CliRun r = run({"ensemble", "--n-paths", "30", "--out", out, "--csv", csv, "--manifest", man});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto m = nlohmann::json::parse(read_file(man));
  EXPECT_EQ(m["outputs"].size(), 2u);
  EXPECT_EQ(m["master_seed"].get<int>(), 1);
  EXPECT_TRUE(m.contains("wall_time_s"));
  EXPECT_EQ(m["code_version"].get<std::string>(), kVersion);
  EXPECT_EQ(m["outputs"][0]["fnv1a64"].get<std::string>(), fnv1a64_hex(read_file(out)));
  const std::string csv_text = read_file(csv);
  EXPECT_EQ(csv_text.substr(0, csv_text.find('\n')), kPathCsvHeader);

  const CliRun ok = run({"replay", man});
  EXPECT_EQ(ok.code, 0) << ok.out << ok.err;

  // A tampered manifest digest is reported.
  auto bad = m;
  bad["outputs"][0]["fnv1a64"] = "0000000000000000";
  write_file(man, bad.dump());
  EXPECT_EQ(run({"replay", man}).code, 1);
}

TEST_F(CliTest, GeodesicClassification) {
  const CliRun r = run({"geodesic", "--R", "1", "--b", "0", "--a", "1.5", "--r0", "3", "--signT0", "+"});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto j = nlohmann::json::parse(r.out);
  EXPECT_TRUE(j["unbounded"].get<bool>());
  EXPECT_EQ(j["class"].get<std::string>(), "R_to_infinity");

  const GeodesicParams c = circular_orbit_params(1.0, 6.0);
  const CliRun circ = run({"geodesic", "--R", "1", "--a", json_number(c.a), "--b", json_number(c.b), "--r0", "6"});
  ASSERT_EQ(circ.code, 0) << circ.err;
  EXPECT_EQ(nlohmann::json::parse(circ.out)["class"].get<std::string>(), "circular_stable");

  const CliRun bad = run({"geodesic", "--R", "1", "--a", "0.5", "--b", "1", "--r0", "5"});
  EXPECT_EQ(bad.code, 2);
  EXPECT_NE(bad.err.find("a^2 >= (1 - R/r0)(1 + b^2/r0^2)"), std::string::npos);
}

TEST_F(CliTest, GeodesicIntegrationVerifies) {
  const std::string file = path("geo.jsonl");
  const CliRun r = run({"geodesic", "--R", "1", "--a", "0.995", "--b", "4", "--r0", "20", "--integrate", "--ds", "1e-2",
                     "--steps", "20000", "--stride", "100", "--out", file});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(run({"verify", file}).code, 0);
  EXPECT_EQ(run({"geodesic", "--integrate"}).code, 2);  // needs --out
}

TEST_F(CliTest, CheckDetectsInjectedChristoffelSignError) {
  const CliRun r = run({"check", "--quick", "--inject", "christoffel-sign"});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("christoffel_golden"), std::string::npos);
  const auto j = nlohmann::json::parse(r.out);
  EXPECT_FALSE(j["pass"].get<bool>());
}

TEST_F(CliTest, QuickCheckPasses) {
  const CliRun r = run({"check", "--quick"});
  EXPECT_EQ(r.code, 0) << r.out;
}
