#pragma once

// Command-line front end. run_cli parses the arguments of one subcommand,
// runs it and returns the exit code: 0 ok, 1 runtime or numerical failure,
// 2 usage error.
//
//   simulate {flat|schwarzschild-reduced|schwarzschild-frame}  one trajectory as JSONL
//   ensemble                                                   EnsembleStats JSON (+ per-path CSV)
//   geodesic                                                   orbit class and radial-cubic roots
//   check [--quick]                                            self-check report
//   verify <file.jsonl>                                        pseudo-norm identity from a file
//   replay <manifest.json>                                     re-run a manifest, compare digests

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "reldiff/checks.hpp"
#include "reldiff/core.hpp"
#include "reldiff/frame_bundle.hpp"
#include "reldiff/geometry.hpp"
#include "reldiff/io.hpp"
#include "reldiff/minkowski.hpp"
#include "reldiff/montecarlo.hpp"
#include "reldiff/schwarzschild.hpp"

namespace reldiff {

inline constexpr const char* kVersion = "0.1.0";
inline constexpr const char* kWorkersEnv = "RELDIFF_WORKERS";

class UsageError : public Error {
 public:
  using Error::Error;
};

namespace cli {

// ---------------------------------------------------------------------------
// Config files: "key = value" per line, '#' comments, flat namespace.

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

/// Keys are matched as long flag names; '_' and '-' are interchangeable.
inline std::string normalize_key(std::string key) {
  while (!key.empty() && key.front() == '-') key.erase(key.begin());
  std::replace(key.begin(), key.end(), '_', '-');
  return key;
}

inline std::vector<std::pair<std::string, std::string>> parse_config_text(const std::string& text) {
  std::vector<std::pair<std::string, std::string>> out;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw UsageError("config line " + std::to_string(lineno) + ": expected key = value");
    const std::string key = normalize_key(trim(line.substr(0, eq)));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) throw UsageError("config line " + std::to_string(lineno) + ": empty key");
    out.emplace_back(key, value);
  }
  return out;
}

inline bool has_flag(const std::vector<std::string>& args, const std::string& key) {
  const std::string flag = "--" + key;
  for (const auto& a : args)
    if (a == flag || a.rfind(flag + "=", 0) == 0) return true;
  return false;
}

/// Expands --config <file> into --key=value arguments placed right after the
/// subcommand name. Keys already given on the command line are skipped, so
/// flags override the file.
inline std::vector<std::string> expand_config(std::vector<std::string> args) {
  std::string path;
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (args[i] == "--config" && i + 1 < args.size()) path = args[i + 1];
    if (args[i].rfind("--config=", 0) == 0) path = args[i].substr(9);
  }
  if (path.empty() || args.empty()) return args;
  std::string text;
  try {
    text = read_file(path);
  } catch (const Error& e) {
    throw UsageError(e.what());
  }
  std::vector<std::string> extra;
  for (const auto& [key, value] : parse_config_text(text))
    if (!has_flag(args, key)) extra.push_back("--" + key + "=" + value);
  args.insert(args.begin() + 1, extra.begin(), extra.end());
  return args;
}

// ---------------------------------------------------------------------------
// Shared state of one invocation

struct Context {
  std::ostream& out;
  std::ostream& err;
  std::vector<std::string> args;
  std::vector<std::string> outputs;  // files written, in order
  std::uint64_t seed = 0;
  std::string config_json = "{}";
};

/// Writes to `path`, or to the context's stdout when path is empty or "-".
inline void emit(Context& ctx, const std::string& path, const std::string& content) {
  if (path.empty() || path == "-") {
    ctx.out << content;
    return;
  }
  write_file(path, content);
  ctx.outputs.push_back(path);
}

inline std::uint64_t count_from(double x, const char* what) {
  if (!(x >= 0.0) || x != std::floor(x) || x > 1.8e19)
    throw UsageError(std::string(what) + " must be a non-negative integer");
  return static_cast<std::uint64_t>(x);
}

/// Option values of a subcommand as a JSON object of strings (given or default).
inline std::string options_json(const CLI::App& app) {
  JsonObject o;
  for (const CLI::Option* opt : app.get_options()) {
    const std::string name = opt->get_single_name();
    if (name.empty() || name == "help" || name == "config" || name == "manifest") continue;
    std::string value;
    if (opt->count() > 0) {
      const auto& res = opt->results();
      for (std::size_t i = 0; i < res.size(); ++i) value += (i ? " " : "") + res[i];
    } else {
      value = opt->get_default_str();
    }
    o.str(name, value);
  }
  return o.dump();
}

inline unsigned resolve_workers(unsigned flag) {
  if (flag > 0) return flag;
  if (const char* env = std::getenv(kWorkersEnv)) {
    char* end = nullptr;
    const unsigned long v = std::strtoul(env, &end, 10);
    if (end == env || *end != '\0' || v == 0) throw UsageError(std::string(kWorkersEnv) + " must be a positive integer");
    return static_cast<unsigned>(v);
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

// ---------------------------------------------------------------------------
// Physical parameters shared by simulate and ensemble

struct PhysicalOptions {
  double R = 1.0;
  double sigma = 1.0;
  double r0 = 3.0;
  double T0 = 0.0;
  double b0 = 1.0;
  std::vector<double> xi0{0.0, 0.0, 0.0, 0.0};
  std::vector<double> B0{0.0, 0.0, 0.0};
  double ds = 0.0;
  std::uint64_t seed = 1;
  double stride = 1;
  double eps_h = 1e-3;
  double r_esc = 0.0;
  double s_max = kInf;
  std::string scheme;
  bool transport = false;
};

inline void add_physical(CLI::App* app, PhysicalOptions& p) {
  app->add_option("--R", p.R, "Schwarzschild radius")->capture_default_str();
  app->add_option("--sigma", p.sigma, "noise amplitude")->capture_default_str();
  app->add_option("--r0", p.r0, "initial areal radius")->capture_default_str();
  app->add_option("--T0", p.T0, "initial radial velocity dr/ds")->capture_default_str();
  app->add_option("--b0", p.b0, "initial angular momentum")->capture_default_str();
  app->add_option("--xi0", p.xi0, "flat: initial event (t x y z)")->expected(4);
  app->add_option("--B0", p.B0, "flat: initial velocity, spatial part (3) or embedded (4)")->expected(3, 4);
  app->add_option("--ds", p.ds, "proper-time step (default 1e-3 / sigma^2)");
  app->add_option("--seed", p.seed, "master seed")->capture_default_str();
  app->add_option("--stride", p.stride, "keep every n-th step");
  app->add_option("--eps-h", p.eps_h, "hit when r <= R (1 + eps_h)")->capture_default_str();
  app->add_option("--r-esc", p.r_esc, "escape radius (default max(100 R, 10 r0))");
  app->add_option("--s-max", p.s_max, "proper-time horizon");
  app->add_option("--scheme", p.scheme, "reduced: em | heun-drift; frame: split | heun");
  app->add_flag("--transport", p.transport, "frame: accumulate inverse parallel transport");
}

inline double default_ds(double sigma) { return sigma != 0.0 ? 1e-3 / (sigma * sigma) : 1e-3; }

inline ReducedScheme parse_reduced_scheme(const std::string& s) {
  if (s.empty() || s == "em") return ReducedScheme::EulerMaruyama;
  if (s == "heun-drift") return ReducedScheme::HeunDrift;
  throw UsageError("unknown reduced scheme '" + s + "' (em | heun-drift)");
}

inline FrameScheme parse_frame_scheme(const std::string& s) {
  if (s.empty() || s == "split") return FrameScheme::Split;
  if (s == "heun") return FrameScheme::Heun;
  throw UsageError("unknown frame scheme '" + s + "' (split | heun)");
}

inline Model parse_model(const std::string& s) {
  if (s == "flat") return Model::Flat;
  if (s == "schwarzschild-reduced") return Model::SchwarzschildReduced;
  if (s == "schwarzschild-frame") return Model::SchwarzschildFrame;
  throw UsageError("unknown model '" + s + "'");
}

inline HyperboloidPoint<3> flat_velocity(const std::vector<double>& B0) {
  try {
    if (B0.size() == 4) return HyperboloidPoint<3>::from_embedded({B0[0], B0[1], B0[2], B0[3]});
    return HyperboloidPoint<3>::from_spatial({B0[0], B0[1], B0[2]});
  } catch (const DomainError& e) {
    throw UsageError(std::string("--B0: ") + e.what());
  }
}

inline void require_schwarzschild_data(const PhysicalOptions& p) {
  if (!(p.R >= 0.0)) throw UsageError("--R must be non-negative");
  if (!(p.r0 > p.R)) throw UsageError("--r0 must exceed --R");
}

// ---------------------------------------------------------------------------
// Subcommands

struct SimulateArgs {
  std::string model;
  PhysicalOptions phys;
  double steps = 100000;
  std::string chart = "cartesian";
  std::string out;
};

inline int cmd_simulate(Context& ctx, const SimulateArgs& a) {
  const PhysicalOptions& p = a.phys;
  const Model model = parse_model(a.model);
  const double ds = p.ds > 0.0 ? p.ds : default_ds(p.sigma);
  if (p.ds < 0.0) throw UsageError("--ds must be positive");
  const std::uint64_t steps = count_from(a.steps, "--steps");
  const std::uint64_t stride = std::max<std::uint64_t>(1, count_from(p.stride, "--stride"));
  if (!(p.eps_h > 0.0)) throw UsageError("--eps-h must be positive");
  if (!(p.s_max > 0.0)) throw UsageError("--s-max must be positive");
  ctx.seed = p.seed;

  std::string text;
  switch (model) {
    case Model::Flat: {
      if (p.transport) throw UsageError("--transport applies to schwarzschild-frame only");
      StopRule stop;
      if (p.r_esc > 0.0) stop.r_esc = p.r_esc;
      const std::uint64_t n = std::isfinite(p.s_max)
                                  ? std::min<std::uint64_t>(steps, static_cast<std::uint64_t>(std::llround(p.s_max / ds)))
                                  : steps;
      const EmbeddedVec<3> xi0{p.xi0[0], p.xi0[1], p.xi0[2], p.xi0[3]};
      const auto traj = simulate_flat<3>(xi0, flat_velocity(p.B0), p.sigma, ds, n, p.seed, stride, 0, stop);
      text = trajectory_jsonl(traj, [](const FlatSample<3>& x) { return flat_record(x); });
      break;
    }
    case Model::SchwarzschildReduced: {
      require_schwarzschild_data(p);
      if (p.transport) throw UsageError("--transport applies to schwarzschild-frame only");
      const StopRule stop{p.eps_h, p.r_esc > 0.0 ? p.r_esc : default_escape_radius(p.R, p.r0), p.s_max};
      const auto traj = simulate_reduced({p.r0, p.b0, p.T0}, p.R, p.sigma, ds, steps, stop, p.seed, stride, 0,
                                         parse_reduced_scheme(p.scheme));
      text = trajectory_jsonl(traj, [&](const ReducedSample& x) { return reduced_record(x, p.R); });
      break;
    }
    case Model::SchwarzschildFrame: {
      require_schwarzschild_data(p);
      Chart chart;
      if (a.chart == "cartesian")
        chart = Chart::cartesian(p.R);
      else if (a.chart == "polar")
        chart = Chart::polar(p.R);
      else
        throw UsageError("--chart must be cartesian or polar");
      if (p.transport && !chart.is_cartesian()) throw UsageError("--transport needs --chart cartesian");
      FrameRunOptions opt;
      opt.stride = stride;
      opt.stop = {p.eps_h, p.r_esc > 0.0 ? p.r_esc : default_escape_radius(p.R, p.r0), p.s_max};
      opt.record_transport = p.transport;
      opt.scheme = parse_frame_scheme(p.scheme);
      const auto traj = simulate_frame(initial_frame(chart, p.r0, p.T0, p.b0), chart, p.sigma, ds, steps, p.seed, opt);
      text = trajectory_jsonl(traj, [&](const FrameSample& x) { return frame_record(x, chart); });
      break;
    }
  }
  emit(ctx, a.out, text);
  return 0;
}

struct EnsembleArgs {
  std::string model = "schwarzschild-reduced";
  PhysicalOptions phys;
  double n_paths = 1000;
  double max_steps = 1e7;
  unsigned workers = 0;
  std::string out;
  std::string csv;
};

inline EnsembleConfig ensemble_config(const EnsembleArgs& a) {
  const PhysicalOptions& p = a.phys;
  EnsembleConfig cfg;
  cfg.model = parse_model(a.model);
  cfg.R = p.R;
  cfg.sigma = p.sigma;
  cfg.r0 = p.r0;
  cfg.T0 = p.T0;
  cfg.b0 = p.b0;
  if (cfg.model == Model::Flat) {
    const HyperboloidPoint<3> B = flat_velocity(p.B0);
    const double sh = std::sinh(B.rapidity());
    for (std::size_t i = 0; i < 3; ++i) cfg.B0[i] = sh * B.direction()[i];
  } else {
    require_schwarzschild_data(p);
  }
  cfg.ds = p.ds;
  cfg.max_steps = count_from(a.max_steps, "--max-steps");
  cfg.n_paths = count_from(a.n_paths, "--n-paths");
  cfg.master_seed = p.seed;
  cfg.eps_h = p.eps_h;
  cfg.r_esc = p.r_esc;
  cfg.s_max = p.s_max;
  cfg.stride = std::max<std::uint64_t>(1, count_from(p.stride, "--stride"));
  cfg.transport = p.transport;
  if (cfg.model == Model::SchwarzschildFrame)
    cfg.frame_scheme = parse_frame_scheme(p.scheme);
  else if (cfg.model == Model::SchwarzschildReduced)
    cfg.reduced_scheme = parse_reduced_scheme(p.scheme);
  if (cfg.n_paths == 0) throw UsageError("--n-paths must be at least 1");
  cfg.workers = resolve_workers(a.workers);
  try {
    validate(cfg);
  } catch (const PreconditionError& e) {
    throw UsageError(e.what());
  }
  return cfg;
}

inline int cmd_ensemble(Context& ctx, const EnsembleArgs& a) {
  const EnsembleConfig cfg = ensemble_config(a);
  ctx.seed = cfg.master_seed;
  ctx.config_json = config_json(cfg);
  const EnsembleStats st = run_ensemble(cfg);
  emit(ctx, a.out, stats_json(st, cfg, kVersion));
  if (!a.csv.empty()) emit(ctx, a.csv, paths_csv(st));
  if (st.n_failed > 0)
    ctx.err << "warning: " << st.n_failed << " of " << st.n_paths << " paths failed numerically\n";
  return 0;
}

struct GeodesicArgs {
  double R = 1.0;
  double a = 1.0;
  double b = 0.0;
  double r0 = 3.0;
  std::string signT0 = "+";
  bool integrate = false;
  double ds = 1e-3;
  double steps = 100000;
  double stride = 1;
  double eps_h = 1e-3;
  double r_esc = 0.0;
  std::string out;
};

inline int parse_sign(const std::string& s) {
  if (s == "+" || s == "+1" || s == "1") return 1;
  if (s == "-" || s == "-1") return -1;
  throw UsageError("--signT0 must be + or -");
}

inline std::string geodesic_jsonl(const GeodesicParams& gp, double r0, int sign, double ds, std::uint64_t steps,
                                  std::uint64_t stride, double eps_h, double r_esc) {
  const double T2 = gp.a * gp.a - (1.0 - gp.R / r0) * (1.0 + gp.b * gp.b / (r0 * r0));
  GeodesicState x{r0, sign * std::sqrt(std::max(0.0, T2)), 0.0, 0.0};
  auto record = [&](const GeodesicState& y, double s) {
    return JsonObject()
        .num("s", s)
        .num("r", y.r)
        .num("T", y.T)
        .num("t", y.t)
        .num("phi", y.phi)
        .num("a", gp.a)
        .num("b", gp.b)
        .num("R", gp.R)
        .dump();
  };
  std::string text = record(x, 0.0) + "\n";
  ExitStatus exit;
  std::uint64_t k = 0;
  double s = 0.0;
  for (; k < steps; ++k) {
    x = geodesic_step(x, gp, ds);
    s = static_cast<double>(k + 1) * ds;
    const bool hit = gp.R > 0.0 && x.r <= gp.R * (1.0 + eps_h);
    const bool escaped = x.r >= r_esc && x.T > 0.0;
    if ((k + 1) % stride == 0 || k + 1 == steps || hit || escaped) text += record(x, s) + "\n";
    if (hit || escaped) {
      exit = {hit ? ExitKind::HitBody : ExitKind::EscapedRadius, s};
      ++k;
      break;
    }
  }
  if (exit.kind == ExitKind::Running) exit = {ExitKind::MaxSteps, s};
  return text + exit_record(exit, k) + "\n";
}

inline int cmd_geodesic(Context& ctx, const GeodesicArgs& g) {
  const int sign = parse_sign(g.signT0);
  if (!(g.R >= 0.0)) throw UsageError("--R must be non-negative");
  if (!(g.r0 > g.R)) throw UsageError("--r0 must exceed --R");
  const GeodesicParams gp{g.a, g.b, g.R};
  const RadialCubic C(gp);
  const double tol = kDoubleRootTolerance * std::max(1.0, C.scale(g.r0));
  if (C(g.r0) < -tol) {
    const double rhs = (1.0 - g.R / g.r0) * (1.0 + g.b * g.b / (g.r0 * g.r0));
    throw UsageError("inadmissible initial data: a^2 >= (1 - R/r0)(1 + b^2/r0^2) fails, a^2 = " +
                     json_number(g.a * g.a) + " < " + json_number(rhs));
  }
  const OrbitClassification oc = classify_orbit(gp, g.r0, sign);
  std::vector<std::string> roots;
  for (const auto& x : oc.roots) roots.push_back(JsonObject().num("r", x.r).boolean("double", x.is_double).dump());
  ctx.out << JsonObject()
                 .num("R", g.R)
                 .num("a", g.a)
                 .num("b", g.b)
                 .num("r0", g.r0)
                 .num("signT0", sign)
                 .str("class", to_string(oc.kind))
                 .boolean("unbounded", is_unbounded(oc.kind))
                 .raw("roots", json_array_of(roots))
                 .dump()
          << "\n";
  if (g.integrate) {
    if (g.out.empty()) throw UsageError("--integrate needs --out");
    if (!(g.ds > 0.0)) throw UsageError("--ds must be positive");
    const double r_esc = g.r_esc > 0.0 ? g.r_esc : default_escape_radius(g.R, g.r0);
    emit(ctx, g.out,
         geodesic_jsonl(gp, g.r0, sign, g.ds, count_from(g.steps, "--steps"),
                        std::max<std::uint64_t>(1, count_from(g.stride, "--stride")), g.eps_h, r_esc));
  }
  return 0;
}

inline int cmd_check(Context& ctx, bool quick, const std::string& inject) {
  Fault fault = Fault::None;
  if (inject == "christoffel-sign")
    fault = Fault::ChristoffelSign;
  else if (!inject.empty())
    throw UsageError("unknown fault '" + inject + "'");
  const CheckReport rep = run_checks(quick, fault);
  ctx.out << rep.json() << "\n";
  if (rep.pass()) return 0;
  ctx.err << "failing checks:";
  for (const auto& c : rep.checks)
    if (!c.pass) ctx.err << " " << c.name;
  ctx.err << "\n";
  return 1;
}

// ---------------------------------------------------------------------------
// verify: the unit pseudo-norm relation from the stored records alone

struct VerifyResult {
  std::uint64_t records = 0;
  std::uint64_t checked = 0;
  double max_defect = 0.0;
  std::uint64_t worst_line = 0;
};

inline double num_of(const nlohmann::json& j, const char* key) {
  const auto it = j.find(key);
  if (it == j.end() || !it->is_number()) return kNaN;
  return it->get<double>();
}

inline Vec4 vec4_of(const nlohmann::json& j) {
  Vec4 v{};
  if (!j.is_array() || j.size() != 4) throw InconsistentState("expected a 4-vector");
  for (std::size_t i = 0; i < 4; ++i) v[i] = j[i].is_number() ? j[i].get<double>() : kNaN;
  return v;
}

inline ChartKind chart_of(const std::string& name) {
  if (name == "schwarzschild-polar") return ChartKind::SchwarzschildPolar;
  if (name == "schwarzschild-cartesian") return ChartKind::SchwarzschildCartesian;
  if (name == "flat-cartesian") return ChartKind::FlatCartesian;
  throw InconsistentState("unknown chart '" + name + "'");
}

/// g(v, v) - 1 relative to the sum of the magnitudes of its terms.
inline double relative_norm_defect(const MetricTensor& g, const Vec4& v) {
  double q = 0.0, scale = 0.0;
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 4; ++j) {
      q += g[i][j] * v[i] * v[j];
      scale += std::abs(g[i][j] * v[i] * v[j]);
    }
  return std::abs(q - 1.0) / std::max(1.0, scale);
}

inline VerifyResult verify_jsonl(const std::string& text) {
  VerifyResult out;
  std::istringstream in(text);
  std::string line;
  std::uint64_t lineno = 0;
  std::optional<Vec4> x_start;
  auto note = [&](double d) {
    ++out.checked;
    if (!(d <= out.max_defect)) {
      out.max_defect = d;
      out.worst_line = lineno;
    }
  };
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    const nlohmann::json j = nlohmann::json::parse(line);
    if (j.contains("exit")) continue;
    ++out.records;
    if (j.contains("u") && j.contains("chart")) {
      const Chart chart{chart_of(j.at("chart").get<std::string>()), num_of(j, "R")};
      const Vec4 x = vec4_of(j.at("x"));
      note(relative_norm_defect(metric_at(chart, x), vec4_of(j.at("u"))));
      if (!x_start) x_start = x;
      if (j.contains("eta")) note(relative_norm_defect(metric_at(chart, *x_start), vec4_of(j.at("eta"))));
    } else if (j.contains("B")) {
      const Vec4 B = vec4_of(j.at("B"));
      if (!std::isfinite(B[0])) continue;  // embedded coordinates overflowed
      MetricTensor eta{};
      eta[0][0] = 1.0;
      for (std::size_t i = 1; i < 4; ++i) eta[i][i] = -1.0;
      note(relative_norm_defect(eta, B));
    } else if (j.contains("r") && j.contains("a")) {
      // (1 - R/r) tdot^2 - T^2 / (1 - R/r) - r^2 U^2 with tdot = a / (1 - R/r), U = b / r^2
      const double r = num_of(j, "r"), T = num_of(j, "T"), b = num_of(j, "b"), a = num_of(j, "a");
      const double R = num_of(j, "R");
      if (!std::isfinite(a)) continue;  // the hit sample carries no energy
      const double f = 1.0 - R / r;
      const double t1 = a * a / f, t2 = T * T / f, t3 = b * b / (r * r);
      note(std::abs(t1 - t2 - t3 - 1.0) / std::max(1.0, t1 + t2 + t3));
    } else {
      throw InconsistentState("line " + std::to_string(lineno) + ": unrecognized record");
    }
  }
  return out;
}

inline int cmd_verify(Context& ctx, const std::string& path, double tol) {
  std::string text;
  try {
    text = read_file(path);
  } catch (const Error& e) {
    throw UsageError(e.what());
  }
  VerifyResult v;
  try {
    v = verify_jsonl(text);
  } catch (const nlohmann::json::exception& e) {
    throw InconsistentState(std::string("malformed record: ") + e.what());
  }
  const bool pass = v.checked > 0 && v.max_defect <= tol;
  ctx.out << JsonObject()
                 .str("file", path)
                 .integer("records", v.records)
                 .integer("checked", v.checked)
                 .num("max_relative_defect", v.max_defect)
                 .integer("worst_line", v.worst_line)
                 .num("tolerance", tol)
                 .boolean("pass", pass)
                 .dump()
          << "\n";
  return pass ? 0 : 1;
}

// ---------------------------------------------------------------------------
// Manifests

inline std::string manifest_json(const Context& ctx, double wall_seconds) {
  std::vector<std::string> argv, outputs;
  for (const auto& a : ctx.args) argv.push_back(json_string(a));
  for (const auto& path : ctx.outputs) {
    const std::string data = read_file(path);
    outputs.push_back(
        JsonObject().str("path", path).integer("bytes", data.size()).str("fnv1a64", fnv1a64_hex(data)).dump());
  }
  return JsonObject()
             .str("code_version", kVersion)
             .raw("argv", json_array_of(argv))
             .integer("master_seed", ctx.seed)
             .raw("config", ctx.config_json)
             .num("wall_time_s", wall_seconds)
             .raw("outputs", json_array_of(outputs))
             .dump() +
         "\n";
}

/// argv without --manifest, so a replay does not rewrite the manifest.
inline std::vector<std::string> strip_manifest(const std::vector<std::string>& args) {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (args[i] == "--manifest") {
      ++i;
      continue;
    }
    if (args[i].rfind("--manifest=", 0) == 0) continue;
    out.push_back(args[i]);
  }
  return out;
}

}  // namespace cli

inline int run_cli(std::vector<std::string> args, std::ostream& out, std::ostream& err);

namespace cli {

/// Re-runs the manifest's argv (outputs are regenerated in place) and
/// compares each output digest with the recorded one.
inline int cmd_replay(Context& ctx, const std::string& path) {
  nlohmann::json m;
  try {
    m = nlohmann::json::parse(read_file(path));
  } catch (const std::exception& e) {
    throw UsageError(std::string("cannot read manifest: ") + e.what());
  }
  if (!m.contains("argv") || !m.contains("outputs")) throw UsageError("manifest lacks argv or outputs");
  const auto argv = strip_manifest(m.at("argv").get<std::vector<std::string>>());
  if (!argv.empty() && argv.front() == "replay") throw UsageError("manifest replays itself");
  std::ostringstream sink;
  const int code = run_cli(argv, sink, ctx.err);
  if (code != 0) {
    ctx.err << "replayed command exited with " << code << "\n";
    return 1;
  }
  std::uint64_t matched = 0;
  std::vector<std::string> mismatched;
  for (const auto& o : m.at("outputs")) {
    const std::string file = o.at("path").get<std::string>();
    const std::string data = read_file(file);
    if (fnv1a64_hex(data) == o.at("fnv1a64").get<std::string>() && data.size() == o.at("bytes").get<std::size_t>())
      ++matched;
    else
      mismatched.push_back(json_string(file));
  }
  const bool pass = mismatched.empty();
  ctx.out << JsonObject()
                 .integer("outputs", m.at("outputs").size())
                 .integer("matched", matched)
                 .raw("mismatched", json_array_of(mismatched))
                 .boolean("pass", pass)
                 .dump()
          << "\n";
  return pass ? 0 : 1;
}

}  // namespace cli

/// Runs one subcommand; `args` excludes the program name.
inline int run_cli(std::vector<std::string> args, std::ostream& out, std::ostream& err) {
  using namespace cli;
  const auto t0 = std::chrono::steady_clock::now();
  Context ctx{out, err, args, {}, 0, "{}"};

  CLI::App app{"Relativistic diffusions in Minkowski and Schwarzschild spacetimes", "reldiff"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);
  std::string manifest;
  std::string config_path;  // consumed by expand_config

  SimulateArgs sim;
  CLI::App* simulate = app.add_subcommand("simulate", "simulate one trajectory, JSONL output");
  simulate->add_option("model", sim.model, "flat | schwarzschild-reduced | schwarzschild-frame")
      ->required()
      ->check(CLI::IsMember({"flat", "schwarzschild-reduced", "schwarzschild-frame"}));
  add_physical(simulate, sim.phys);
  simulate->add_option("--steps", sim.steps, "maximum number of steps")->capture_default_str();
  simulate->add_option("--chart", sim.chart, "frame: cartesian | polar")->capture_default_str();
  simulate->add_option("--out", sim.out, "output file (default stdout)");
  simulate->add_option("--manifest", manifest, "write a run manifest");
  simulate->add_option("--config", config_path, "key = value file; flags override it");

  EnsembleArgs ens;
  CLI::App* ensemble = app.add_subcommand("ensemble", "Monte Carlo ensemble, EnsembleStats JSON");
  ensemble->add_option("--model", ens.model, "flat | schwarzschild-reduced | schwarzschild-frame")
      ->check(CLI::IsMember({"flat", "schwarzschild-reduced", "schwarzschild-frame"}))
      ->capture_default_str();
  add_physical(ensemble, ens.phys);
  ens.phys.stride = 100;
  ensemble->add_option("--n-paths", ens.n_paths, "number of paths")->capture_default_str();
  ensemble->add_option("--max-steps", ens.max_steps, "step budget per path")->capture_default_str();
  ensemble->add_option("--workers", ens.workers, std::string("worker threads (default $") + kWorkersEnv +
                                                     ", else hardware concurrency)");
  ensemble->add_option("--out", ens.out, "stats JSON file (default stdout)");
  ensemble->add_option("--csv", ens.csv, "per-path summary CSV");
  ensemble->add_option("--manifest", manifest, "write a run manifest");
  ensemble->add_option("--config", config_path, "key = value file; flags override it");

  GeodesicArgs geo;
  CLI::App* geodesic = app.add_subcommand("geodesic", "classify a timelike geodesic");
  geodesic->add_option("--R", geo.R, "Schwarzschild radius")->capture_default_str();
  geodesic->add_option("--a", geo.a, "energy")->capture_default_str();
  geodesic->add_option("--b", geo.b, "angular momentum")->capture_default_str();
  geodesic->add_option("--r0", geo.r0, "initial areal radius")->capture_default_str();
  geodesic->add_option("--signT0", geo.signT0, "sign of dr/ds at r0: + or -")->capture_default_str();
  geodesic->add_flag("--integrate", geo.integrate, "also integrate the geodesic (needs --out)");
  geodesic->add_option("--ds", geo.ds, "proper-time step for --integrate")->capture_default_str();
  geodesic->add_option("--steps", geo.steps, "maximum number of steps")->capture_default_str();
  geodesic->add_option("--stride", geo.stride, "keep every n-th step");
  geodesic->add_option("--eps-h", geo.eps_h, "hit when r <= R (1 + eps_h)")->capture_default_str();
  geodesic->add_option("--r-esc", geo.r_esc, "escape radius (default max(100 R, 10 r0))");
  geodesic->add_option("--out", geo.out, "trajectory JSONL file");
  geodesic->add_option("--manifest", manifest, "write a run manifest");
  geodesic->add_option("--config", config_path, "key = value file; flags override it");

  bool quick = false;
  std::string inject;
  CLI::App* check = app.add_subcommand("check", "run the self-check suites");
  check->add_flag("--quick", quick, "reduced sample sizes");
  check->add_option("--inject", inject)->group("");

  std::string verify_path;
  double verify_tol = kPseudoNormTolerance;
  CLI::App* verify = app.add_subcommand("verify", "re-check the pseudo-norm relation in a JSONL file");
  verify->add_option("file", verify_path, "JSONL from simulate or geodesic --integrate")->required();
  verify->add_option("--tol", verify_tol, "relative tolerance")->capture_default_str();

  std::string replay_path;
  CLI::App* replay = app.add_subcommand("replay", "re-run a manifest and compare output digests");
  replay->add_option("manifest", replay_path, "manifest JSON written with --manifest")->required();

  try {
    std::vector<std::string> expanded = expand_config(args);
    std::reverse(expanded.begin(), expanded.end());
    app.parse(expanded);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 2;
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << "\n";
    return 2;
  }

  int code = 0;
  try {
    if (simulate->parsed()) {
      code = cmd_simulate(ctx, sim);
      ctx.config_json = options_json(*simulate);
    } else if (ensemble->parsed()) {
      code = cmd_ensemble(ctx, ens);
    } else if (geodesic->parsed()) {
      code = cmd_geodesic(ctx, geo);
      ctx.config_json = options_json(*geodesic);
    } else if (check->parsed()) {
      code = cmd_check(ctx, quick, inject);
    } else if (verify->parsed()) {
      code = cmd_verify(ctx, verify_path, verify_tol);
    } else if (replay->parsed()) {
      code = cmd_replay(ctx, replay_path);
    }
    if (code == 0 && !manifest.empty()) {
      const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      write_file(manifest, manifest_json(ctx, wall));
    }
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
  return code;
}

inline int run_cli(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return run_cli(std::move(args), out, err);
}

}  // namespace reldiff
