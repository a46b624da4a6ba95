#pragma once

// Per-path random streams. A stream is keyed by (master_seed, path_index)
// through a SplitMix64 hash and drives a xoshiro256++ generator, so every
// path owns its generator and results do not depend on scheduling.

#include <cmath>
#include <cstdint>
#include <limits>

namespace reldiff {

inline std::uint64_t splitmix64_next(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Stateless mix of (master_seed, index) into a 64-bit stream key.
inline std::uint64_t stream_key(std::uint64_t master_seed, std::uint64_t index) {
  std::uint64_t s = master_seed;
  const std::uint64_t a = splitmix64_next(s);
  std::uint64_t t = a ^ (index * 0xd1b54a32d192ed03ULL + 0x8cb92ba72f3d8dd7ULL);
  return splitmix64_next(t);
}

class Xoshiro256pp {
 public:
  using result_type = std::uint64_t;

  explicit Xoshiro256pp(std::uint64_t key = 0) {
    std::uint64_t sm = key;
    for (auto& w : s_) w = splitmix64_next(sm);
  }

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  result_type operator()() {
    const std::uint64_t result = rotl(s_[0] + s_[3], 23) + s_[0];
    const std::uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = rotl(s_[3], 45);
    return result;
  }

  /// Uniform double in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }

 private:
  static std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }
  std::uint64_t s_[4];
};

/// Standard normal variates by the Marsaglia polar method. Deterministic
/// across platforms given the same engine sequence.
class NormalStream {
 public:
  explicit NormalStream(std::uint64_t key) : engine_(key) {}
  NormalStream(std::uint64_t master_seed, std::uint64_t index)
      : engine_(stream_key(master_seed, index)) {}

  double operator()() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u, v, q;
    do {
      u = 2.0 * engine_.uniform() - 1.0;
      v = 2.0 * engine_.uniform() - 1.0;
      q = u * u + v * v;
    } while (q >= 1.0 || q == 0.0);
    const double m = std::sqrt(-2.0 * std::log(q) / q);
    spare_ = v * m;
    has_spare_ = true;
    return u * m;
  }

  Xoshiro256pp& engine() { return engine_; }

 private:
  Xoshiro256pp engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace reldiff
