#pragma once

#include <array>
#include <cmath>
#include <cstddef>

// Forward-mode dual numbers with a compile-time number of partials. Used by
// the fat tape primitives (render, heatmaps, flow) to get exact per-pixel
// Jacobians w.r.t. the small cinematic parameter vector.

namespace ct {

template <int N>
struct Dual {
  double v = 0.0;
  std::array<double, N> d{};

  Dual() = default;
  Dual(double value) : v(value) {}  // NOLINT: implicit by design
  static Dual var(double value, int slot) {
    Dual r(value);
    r.d[slot] = 1.0;
    return r;
  }

  Dual operator-() const {
    Dual r(-v);
    for (int i = 0; i < N; ++i) r.d[i] = -d[i];
    return r;
  }

  Dual& operator+=(const Dual& o) {
    v += o.v;
    for (int i = 0; i < N; ++i) d[i] += o.d[i];
    return *this;
  }
  Dual& operator-=(const Dual& o) {
    v -= o.v;
    for (int i = 0; i < N; ++i) d[i] -= o.d[i];
    return *this;
  }
  Dual& operator*=(const Dual& o) {
    for (int i = 0; i < N; ++i) d[i] = d[i] * o.v + v * o.d[i];
    v *= o.v;
    return *this;
  }
};

template <int N>
inline Dual<N> operator+(Dual<N> a, const Dual<N>& b) { return a += b; }
template <int N>
inline Dual<N> operator-(Dual<N> a, const Dual<N>& b) { return a -= b; }
template <int N>
inline Dual<N> operator*(Dual<N> a, const Dual<N>& b) { return a *= b; }

template <int N>
inline Dual<N> operator/(const Dual<N>& a, const Dual<N>& b) {
  Dual<N> r(a.v / b.v);
  double inv = 1.0 / b.v;
  for (int i = 0; i < N; ++i) r.d[i] = (a.d[i] - r.v * b.d[i]) * inv;
  return r;
}

template <int N> inline Dual<N> operator+(double a, Dual<N> b) { b.v += a; return b; }
template <int N> inline Dual<N> operator+(Dual<N> a, double b) { a.v += b; return a; }
template <int N> inline Dual<N> operator-(double a, const Dual<N>& b) { return Dual<N>(a) - b; }
template <int N> inline Dual<N> operator-(Dual<N> a, double b) { a.v -= b; return a; }
template <int N>
inline Dual<N> operator*(double a, Dual<N> b) {
  b.v *= a;
  for (int i = 0; i < N; ++i) b.d[i] *= a;
  return b;
}
template <int N> inline Dual<N> operator*(Dual<N> a, double b) { return b * a; }
template <int N> inline Dual<N> operator/(Dual<N> a, double b) { return (1.0 / b) * a; }
template <int N> inline Dual<N> operator/(double a, const Dual<N>& b) { return Dual<N>(a) / b; }

template <int N> inline bool operator<(const Dual<N>& a, const Dual<N>& b) { return a.v < b.v; }
template <int N> inline bool operator>(const Dual<N>& a, const Dual<N>& b) { return a.v > b.v; }
template <int N> inline bool operator<(const Dual<N>& a, double b) { return a.v < b; }
template <int N> inline bool operator>(const Dual<N>& a, double b) { return a.v > b; }
template <int N> inline bool operator<=(const Dual<N>& a, double b) { return a.v <= b; }
template <int N> inline bool operator>=(const Dual<N>& a, double b) { return a.v >= b; }

template <int N>
inline Dual<N> exp(const Dual<N>& a) {
  Dual<N> r(std::exp(a.v));
  for (int i = 0; i < N; ++i) r.d[i] = r.v * a.d[i];
  return r;
}

template <int N>
inline Dual<N> log(const Dual<N>& a) {
  Dual<N> r(std::log(a.v));
  double inv = 1.0 / a.v;
  for (int i = 0; i < N; ++i) r.d[i] = a.d[i] * inv;
  return r;
}

template <int N>
inline Dual<N> sqrt(const Dual<N>& a) {
  Dual<N> r(std::sqrt(a.v));
  // Subgradient convention: derivative 0 at the origin.
  double inv = r.v > 0.0 ? 0.5 / r.v : 0.0;
  for (int i = 0; i < N; ++i) r.d[i] = a.d[i] * inv;
  return r;
}

template <int N>
inline Dual<N> sin(const Dual<N>& a) {
  Dual<N> r(std::sin(a.v));
  double c = std::cos(a.v);
  for (int i = 0; i < N; ++i) r.d[i] = c * a.d[i];
  return r;
}

template <int N>
inline Dual<N> cos(const Dual<N>& a) {
  Dual<N> r(std::cos(a.v));
  double s = -std::sin(a.v);
  for (int i = 0; i < N; ++i) r.d[i] = s * a.d[i];
  return r;
}

// clamp with gradient passed only on the interior.
template <int N>
inline Dual<N> clamp01(const Dual<N>& a) {
  if (a.v <= 0.0) return Dual<N>(0.0);
  if (a.v >= 1.0) return Dual<N>(1.0);
  return a;
}

template <int N>
inline Dual<N> max_with(const Dual<N>& a, double floor_v) {
  return a.v >= floor_v ? a : Dual<N>(floor_v);
}

inline double clamp01(double a) { return a <= 0.0 ? 0.0 : (a >= 1.0 ? 1.0 : a); }
inline double max_with(double a, double floor_v) { return a >= floor_v ? a : floor_v; }

// value() / partials accessors let templated code treat double and Dual alike.
inline double value_of(double v) { return v; }
template <int N>
inline double value_of(const Dual<N>& v) { return v.v; }

// Smoothstep window ramp: 0 for y<=0, 1 for y>=1, C1 in between.
template <typename T>
inline T smooth01(const T& y) {
  if (value_of(y) <= 0.0) return T(0.0);
  if (value_of(y) >= 1.0) return T(1.0);
  return y * y * (3.0 - 2.0 * y);
}

}  // namespace ct
