#pragma once

// Small fixed-size linear algebra and the error hierarchy shared by every
// module. Everything here is 4-dimensional: indices run over (t, x1, x2, x3)
// or (t, r, phi, psi) depending on the chart.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <limits>
#include <stdexcept>
#include <string>
#include <utility>

namespace reldiff {

using Vec4 = std::array<double, 4>;
using Mat4 = std::array<std::array<double, 4>, 4>;

inline constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
inline constexpr double kInf = std::numeric_limits<double>::infinity();

// ---------------------------------------------------------------------------
// Errors

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Point outside the chart (r <= R, or on the polar axis).
class DomainError : public Error {
 public:
  using Error::Error;
};

/// Gram-Schmidt hit a non-positive pseudo-norm where positivity is required.
class NumericalDegeneracy : public Error {
 public:
  using Error::Error;
};

/// A step left the constraint manifold; only happens for absurd step sizes.
class StepSizeError : public Error {
 public:
  using Error::Error;
};

class InsufficientLength : public Error {
 public:
  using Error::Error;
};

class PreconditionError : public Error {
 public:
  using Error::Error;
};

/// A drift coefficient with a 1/x singularity was evaluated at x = 0.
class SingularDrift : public Error {
 public:
  using Error::Error;
};

/// State violates the unit pseudo-norm identity.
class InconsistentState : public Error {
 public:
  using Error::Error;
};

// ---------------------------------------------------------------------------
// Vec4 / Mat4 helpers

inline Vec4 operator+(const Vec4& a, const Vec4& b) {
  return {a[0] + b[0], a[1] + b[1], a[2] + b[2], a[3] + b[3]};
}
inline Vec4 operator-(const Vec4& a, const Vec4& b) {
  return {a[0] - b[0], a[1] - b[1], a[2] - b[2], a[3] - b[3]};
}
inline Vec4 operator*(double s, const Vec4& a) {
  return {s * a[0], s * a[1], s * a[2], s * a[3]};
}
inline Vec4& operator+=(Vec4& a, const Vec4& b) {
  for (std::size_t i = 0; i < 4; ++i) a[i] += b[i];
  return a;
}

inline Mat4 identity4() {
  Mat4 m{};
  for (std::size_t i = 0; i < 4; ++i) m[i][i] = 1.0;
  return m;
}

inline Mat4 operator*(const Mat4& a, const Mat4& b) {
  Mat4 c{};
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t k = 0; k < 4; ++k) {
      const double aik = a[i][k];
      for (std::size_t j = 0; j < 4; ++j) c[i][j] += aik * b[k][j];
    }
  return c;
}

inline Mat4 operator+(const Mat4& a, const Mat4& b) {
  Mat4 c{};
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 4; ++j) c[i][j] = a[i][j] + b[i][j];
  return c;
}

inline Mat4 operator*(double s, const Mat4& a) {
  Mat4 c{};
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 4; ++j) c[i][j] = s * a[i][j];
  return c;
}

inline Vec4 operator*(const Mat4& m, const Vec4& v) {
  Vec4 out{};
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 4; ++j) out[i] += m[i][j] * v[j];
  return out;
}

/// Euclidean norm of the spatial part (components 1..3).
inline double spatial_norm(const Vec4& v) { return std::hypot(v[1], v[2], v[3]); }

inline double max_abs_entry(const Mat4& m) {
  double out = 0.0;
  for (const auto& row : m)
    for (double x : row) out = std::max(out, std::abs(x));
  return out;
}

/// Inverse by Gauss-Jordan with partial pivoting. Throws on singular input.
inline Mat4 inverse(Mat4 a) {
  Mat4 inv = identity4();
  for (std::size_t col = 0; col < 4; ++col) {
    std::size_t piv = col;
    for (std::size_t r = col + 1; r < 4; ++r)
      if (std::abs(a[r][col]) > std::abs(a[piv][col])) piv = r;
    if (a[piv][col] == 0.0) throw NumericalDegeneracy("singular 4x4 matrix");
    std::swap(a[piv], a[col]);
    std::swap(inv[piv], inv[col]);
    const double d = 1.0 / a[col][col];
    for (std::size_t j = 0; j < 4; ++j) {
      a[col][j] *= d;
      inv[col][j] *= d;
    }
    for (std::size_t r = 0; r < 4; ++r) {
      if (r == col) continue;
      const double f = a[r][col];
      if (f == 0.0) continue;
      for (std::size_t j = 0; j < 4; ++j) {
        a[r][j] -= f * a[col][j];
        inv[r][j] -= f * inv[col][j];
      }
    }
  }
  return inv;
}

}  // namespace reldiff
