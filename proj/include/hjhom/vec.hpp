#pragma once
#include <array>
#include <cmath>

namespace hjhom {

// Spatial/momentum vectors for dim 1..3. Unused trailing components are kept
// at exactly 0 so dot/norm over all three entries are always correct.
using Vec = std::array<double, 3>;
using Idx = std::array<int, 3>;

inline constexpr Vec vzero{0.0, 0.0, 0.0};

inline Vec operator+(const Vec& a, const Vec& b) { return {a[0] + b[0], a[1] + b[1], a[2] + b[2]}; }
inline Vec operator-(const Vec& a, const Vec& b) { return {a[0] - b[0], a[1] - b[1], a[2] - b[2]}; }
inline Vec operator*(double s, const Vec& a) { return {s * a[0], s * a[1], s * a[2]}; }
inline Vec operator*(const Vec& a, double s) { return s * a; }
inline Vec operator-(const Vec& a) { return {-a[0], -a[1], -a[2]}; }

inline double dot(const Vec& a, const Vec& b) { return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]; }
inline double norm2(const Vec& a) { return dot(a, a); }
inline double norm(const Vec& a) { return std::sqrt(norm2(a)); }

inline Vec unit(const Vec& a) {
  double n = norm(a);
  if (n == 0.0) return vzero;
  return (1.0 / n) * a;
}

} // namespace hjhom
