#pragma once

#include <array>
#include <cmath>

// Small fixed-size linear algebra templated on the scalar type, so the same
// camera/scene math runs on plain doubles and on dual numbers.

namespace ct {

template <typename T>
struct Vec3 {
  T x{}, y{}, z{};

  Vec3() = default;
  Vec3(T x_, T y_, T z_) : x(x_), y(y_), z(z_) {}

  Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
  Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
  Vec3 operator*(const T& s) const { return {x * s, y * s, z * s}; }
  Vec3 operator-() const { return {-x, -y, -z}; }
  Vec3& operator+=(const Vec3& o) {
    x += o.x; y += o.y; z += o.z;
    return *this;
  }
  Vec3& operator-=(const Vec3& o) {
    x -= o.x; y -= o.y; z -= o.z;
    return *this;
  }
};

template <typename T>
inline Vec3<T> operator*(double s, const Vec3<T>& v) { return {v.x * s, v.y * s, v.z * s}; }

template <typename T>
inline T dot(const Vec3<T>& a, const Vec3<T>& b) {
  return a.x * b.x + a.y * b.y + a.z * b.z;
}

template <typename T>
inline Vec3<T> cross(const Vec3<T>& a, const Vec3<T>& b) {
  return {a.y * b.z - a.z * b.y, a.z * b.x - a.x * b.z, a.x * b.y - a.y * b.x};
}

template <typename T>
inline T squared_norm(const Vec3<T>& v) { return dot(v, v); }

template <typename T>
inline T norm(const Vec3<T>& v) {
  using std::sqrt;
  return sqrt(dot(v, v));
}

template <typename T>
inline Vec3<T> normalized(const Vec3<T>& v) {
  T n = norm(v);
  return {v.x / n, v.y / n, v.z / n};
}

// Row-major 3x3 matrix.
template <typename T>
struct Mat3 {
  std::array<T, 9> m{};

  static Mat3 identity() {
    Mat3 r;
    r.m = {T(1), T(0), T(0), T(0), T(1), T(0), T(0), T(0), T(1)};
    return r;
  }

  T& operator()(int r, int c) { return m[r * 3 + c]; }
  const T& operator()(int r, int c) const { return m[r * 3 + c]; }

  Mat3 operator*(const Mat3& o) const {
    Mat3 r;
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) {
        T s = m[i * 3] * o.m[j] + m[i * 3 + 1] * o.m[3 + j] + m[i * 3 + 2] * o.m[6 + j];
        r.m[i * 3 + j] = s;
      }
    return r;
  }

  Vec3<T> operator*(const Vec3<T>& v) const {
    return {m[0] * v.x + m[1] * v.y + m[2] * v.z,
            m[3] * v.x + m[4] * v.y + m[5] * v.z,
            m[6] * v.x + m[7] * v.y + m[8] * v.z};
  }

  Mat3 transposed() const {
    Mat3 r;
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) r.m[i * 3 + j] = m[j * 3 + i];
    return r;
  }

  Mat3 operator+(const Mat3& o) const {
    Mat3 r;
    for (int i = 0; i < 9; ++i) r.m[i] = m[i] + o.m[i];
    return r;
  }

  Mat3 scaled(const T& s) const {
    Mat3 r;
    for (int i = 0; i < 9; ++i) r.m[i] = m[i] * s;
    return r;
  }

  // Multiply by the transpose: R^T * v.
  Vec3<T> transposed_times(const Vec3<T>& v) const {
    return {m[0] * v.x + m[3] * v.y + m[6] * v.z,
            m[1] * v.x + m[4] * v.y + m[7] * v.z,
            m[2] * v.x + m[5] * v.y + m[8] * v.z};
  }
};

using Vec3d = Vec3<double>;
using Mat3d = Mat3<double>;

struct Vec2d {
  double x{}, y{};
};

}  // namespace ct
