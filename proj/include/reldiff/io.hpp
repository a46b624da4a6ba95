#pragma once

// Text output: a minimal JSON writer with 17-significant-digit numbers, and
// JSON-lines encoders for trajectories and ensemble summaries.
//
// Numbers go through printf("%.17g") so that a given double always prints to
// the same bytes; non-finite values are written as null.

#include <cinttypes>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <sstream>
#include <string>
#include <vector>

#include "reldiff/frame_bundle.hpp"
#include "reldiff/minkowski.hpp"
#include "reldiff/montecarlo.hpp"
#include "reldiff/schwarzschild.hpp"
#include "reldiff/trajectory.hpp"

namespace reldiff {

inline std::string json_number(double x) {
  if (!std::isfinite(x)) return "null";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

inline std::string json_string(const std::string& s) {
  std::string out = "\"";
  for (const char c : s) {
    switch (c) {
      case '"': out += "\\\""; break;
      case '\\': out += "\\\\"; break;
      case '\n': out += "\\n"; break;
      case '\t': out += "\\t"; break;
      case '\r': out += "\\r"; break;
      default:
        if (static_cast<unsigned char>(c) < 0x20) {
          char buf[8];
          std::snprintf(buf, sizeof buf, "\\u%04x", c);
          out += buf;
        } else {
          out += c;
        }
    }
  }
  return out + "\"";
}

template <class Range>
std::string json_number_array(const Range& xs) {
  std::string out = "[";
  bool first = true;
  for (const double x : xs) {
    if (!first) out += ",";
    first = false;
    out += json_number(x);
  }
  return out + "]";
}

/// Builds one JSON object; keys appear in insertion order.
class JsonObject {
 public:
  JsonObject& num(const std::string& key, double v) { return raw(key, json_number(v)); }
  JsonObject& integer(const std::string& key, std::uint64_t v) { return raw(key, std::to_string(v)); }
  JsonObject& str(const std::string& key, const std::string& v) { return raw(key, json_string(v)); }
  JsonObject& boolean(const std::string& key, bool v) { return raw(key, v ? "true" : "false"); }
  template <class Range>
  JsonObject& array(const std::string& key, const Range& xs) {
    return raw(key, json_number_array(xs));
  }
  JsonObject& raw(const std::string& key, const std::string& json) {
    if (!body_.empty()) body_ += ",";
    body_ += json_string(key) + ":" + json;
    return *this;
  }
  std::string dump() const { return "{" + body_ + "}"; }

 private:
  std::string body_;
};

inline std::string json_array_of(const std::vector<std::string>& items) {
  std::string out = "[";
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (i > 0) out += ",";
    out += items[i];
  }
  return out + "]";
}

// ---------------------------------------------------------------------------
// Trajectory records

inline std::string exit_record(const ExitStatus& e, std::uint64_t steps) {
  return JsonObject().str("exit", to_string(e.kind)).num("s_exit", e.s_exit).integer("steps", steps).dump();
}

inline std::string reduced_record(const ReducedSample& x, double R) {
  return JsonObject().num("s", x.s).num("r", x.r).num("T", x.T).num("b", x.b).num("a", x.a).num("R", R).dump();
}

inline std::string frame_record(const FrameSample& x, const Chart& chart) {
  JsonObject o;
  o.num("s", x.s).num("r", x.r).num("T", x.T).num("b", x.b).num("a", x.a).num("U", x.U).num("R", chart.R);
  o.str("chart", to_string(chart.kind)).array("x", x.p).array("u", x.e0);
  if (x.transport) o.array("eta", *x.transport * x.e0);  // velocity carried back to the start point
  return o.dump();
}

template <std::size_t D>
std::string flat_record(const FlatSample<D>& x) {
  const auto& v = x.velocity;
  JsonObject o;
  o.num("s", x.s).num("rapidity", v.rapidity()).array("direction", v.direction());
  o.array("B", v.embedded()).num("speed", v.coordinate_speed()).num("log_speed_deficit", v.log_speed_deficit());
  o.num("xi_log_scale", x.position.log_scale).array("xi_mantissa", x.position.mantissa);
  return o.dump();
}

template <class Sample, class Encode>
std::string trajectory_jsonl(const Trajectory<Sample>& traj, Encode encode) {
  std::string out;
  for (const auto& x : traj.samples) out += encode(x) + "\n";
  out += exit_record(traj.exit, traj.steps) + "\n";
  return out;
}

// ---------------------------------------------------------------------------
// Ensemble output

inline std::string interval_json(const Interval& iv) { return json_number_array(std::array<double, 2>{iv.lo, iv.hi}); }

inline std::string config_json(const EnsembleConfig& cfg) {
  JsonObject o;
  o.str("model", to_string(cfg.model)).num("R", cfg.R).num("sigma", cfg.sigma);
  o.num("r0", cfg.r0).num("T0", cfg.T0).num("b0", cfg.b0).array("B0", cfg.B0);
  o.num("ds", effective_ds(cfg)).integer("max_steps", cfg.max_steps).integer("n_paths", cfg.n_paths);
  o.integer("master_seed", cfg.master_seed).num("eps_h", cfg.eps_h).num("r_esc", effective_r_esc(cfg));
  o.num("s_max", cfg.s_max).integer("stride", cfg.stride);
  o.str("reduced_scheme", cfg.reduced_scheme == ReducedScheme::EulerMaruyama ? "em" : "heun-drift");
  o.str("frame_scheme", cfg.frame_scheme == FrameScheme::Split ? "split" : "heun");
  o.boolean("transport", cfg.transport);
  return o.dump();
}

/// EnsembleStats as one JSON document. Worker count and wall time are left
/// out so the document is a function of the configuration alone.
inline std::string stats_json(const EnsembleStats& st, const EnsembleConfig& cfg, const std::string& version) {
  std::vector<std::string> dirs;
  dirs.reserve(st.directions.size());
  for (const auto& d : st.directions) dirs.push_back(json_number_array(d));
  std::vector<std::string> failures;
  for (const auto& p : st.paths)
    if (p.failed && failures.size() < 20)
      failures.push_back(JsonObject().integer("path", p.index).str("error", p.error).dump());

  JsonObject o;
  o.raw("config", config_json(cfg));
  o.integer("n_paths", st.n_paths).integer("n_hit", st.n_hit).integer("n_escaped", st.n_escaped);
  o.integer("n_unresolved", st.n_unresolved).integer("n_failed", st.n_failed);
  o.num("capture_fraction", st.capture_fraction).raw("capture_ci95", interval_json(st.capture_ci));
  o.num("escape_fraction", st.escape_fraction).raw("escape_ci95", interval_json(st.escape_ci));
  o.num("unresolved_fraction", st.unresolved_fraction);
  o.raw("log_a_slope", JsonObject()
                           .num("mean", st.log_a_slope_mean)
                           .num("stderr", st.log_a_slope_stderr)
                           .integer("count", st.slope_count)
                           .dump());
  o.raw("direction_samples", json_array_of(dirs));
  o.array("terminal_coordinate_speed", st.terminal_speeds);
  o.array("convergence_angle", st.convergence_angles);
  o.num("max_eta_norm_defect", st.max_eta_defect);
  o.raw("runtime", JsonObject().str("code_version", version).integer("total_steps", st.total_steps).dump());
  o.raw("failures", json_array_of(failures));
  return o.dump() + "\n";
}

inline constexpr const char* kPathCsvHeader = "path,exit,s_exit,log_a_slope,dir_x,dir_y,dir_z,final_speed";

inline std::string csv_number(double x) { return std::isfinite(x) ? json_number(x) : ""; }

inline std::string paths_csv(const EnsembleStats& st) {
  std::string out = std::string(kPathCsvHeader) + "\n";
  for (const auto& p : st.paths) {
    out += std::to_string(p.index) + "," + (p.failed ? std::string("failed") : to_string(p.exit)) + ",";
    out += csv_number(p.s_exit) + "," + csv_number(p.log_a_slope) + ",";
    out += csv_number(p.direction[0]) + "," + csv_number(p.direction[1]) + "," + csv_number(p.direction[2]) + ",";
    out += csv_number(p.final_speed) + "\n";
  }
  return out;
}

// ---------------------------------------------------------------------------
// Files

inline void write_file(const std::string& path, const std::string& content) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error("cannot open " + path + " for writing");
  f << content;
  if (!f) throw Error("write failed: " + path);
}

inline std::string read_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error("cannot open " + path);
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

/// FNV-1a 64-bit digest, hex encoded; identifies output files in manifests.
inline std::string fnv1a64_hex(const std::string& data) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const unsigned char c : data) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016" PRIx64, h);
  return buf;
}

}  // namespace reldiff
