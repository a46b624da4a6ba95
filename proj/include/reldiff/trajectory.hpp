#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "reldiff/core.hpp"

namespace reldiff {

enum class ExitKind { Running, HitBody, EscapedRadius, MaxSteps };

inline std::string to_string(ExitKind k) {
  switch (k) {
    case ExitKind::Running: return "running";
    case ExitKind::HitBody: return "hit_body";
    case ExitKind::EscapedRadius: return "escaped_radius";
    case ExitKind::MaxSteps: return "max_steps";
  }
  return "unknown";
}

struct ExitStatus {
  ExitKind kind = ExitKind::Running;
  double s_exit = kNaN;  // proper time of the exit event; NaN while running
};

/// Stopping thresholds shared by the Schwarzschild simulators.
struct StopRule {
  double eps_h = 1e-3;  // HitBody when r <= R (1 + eps_h)
  double r_esc = kInf;  // EscapedRadius when r >= r_esc with T > 0
  double s_max = kInf;  // proper-time horizon; the last step is clipped to land on it
};

/// Default escape radius max(100 R, 10 r0).
inline double default_escape_radius(double R, double r0) { return std::max(100.0 * R, 10.0 * r0); }

/// Time-stamped samples of one simulated path plus its exit status.
template <class Sample>
struct Trajectory {
  std::vector<Sample> samples;
  ExitStatus exit;
  double R = 0.0;
  double sigma = 0.0;
  double ds = 0.0;
  std::uint64_t steps = 0;

  const Sample& back() const { return samples.back(); }
  bool empty() const { return samples.empty(); }
};

/// Index of the sample whose proper time is closest to s.
template <class Sample>
std::size_t nearest_sample(const Trajectory<Sample>& traj, double s) {
  std::size_t best = 0;
  double dist = kInf;
  for (std::size_t i = 0; i < traj.samples.size(); ++i) {
    const double d = std::abs(traj.samples[i].s - s);
    if (d < dist) {
      dist = d;
      best = i;
    }
  }
  return best;
}

}  // namespace reldiff
