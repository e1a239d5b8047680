#pragma once

#include <cmath>

#include "ct/dual.hpp"
#include "ct/vec.hpp"

namespace ct {

// Rigid pose: rotation + translation, camera-to-world. The camera looks down
// its local +z axis.
struct SE3Pose {
  Mat3d rotation = Mat3d::identity();
  Vec3d translation{0.0, 0.0, 0.0};

  static SE3Pose identity() { return {}; }
};

// Rotation part of exp([w]x) via Rodrigues, templated so dual numbers flow
// through. Small-angle branch switches where both sides agree to ~1e-24.
template <typename T>
Mat3<T> so3_exp(const Vec3<T>& w) {
  using std::sqrt;
  using std::sin;
  using std::cos;
  T theta2 = dot(w, w);
  T a, b;  // sin(t)/t, (1-cos(t))/t^2
  if (value_of(theta2) < 1e-12) {
    a = 1.0 - theta2 * (1.0 / 6.0);
    b = 0.5 - theta2 * (1.0 / 24.0);
  } else {
    T theta = sqrt(theta2);
    a = sin(theta) / theta;
    b = (1.0 - cos(theta)) / theta2;
  }
  Mat3<T> K;  // [w]x
  K.m = {T(0), -w.z, w.y, w.z, T(0), -w.x, -w.y, w.x, T(0)};
  Mat3<T> K2 = K * K;
  Mat3<T> r = Mat3<T>::identity();
  for (int i = 0; i < 9; ++i) r.m[i] = r.m[i] + a * K.m[i] + b * K2.m[i];
  return r;
}

template <typename T>
struct Se3Transform {
  Mat3<T> rotation;
  Vec3<T> translation;
};

// Closed-form se(3) exponential. xi = (wx, wy, wz, tx, ty, tz): rotation
// first, translation second. Translation uses the V matrix.
template <typename T>
Se3Transform<T> se3_exp_t(const T xi[6]) {
  using std::sqrt;
  using std::sin;
  using std::cos;
  Vec3<T> w{xi[0], xi[1], xi[2]};
  Vec3<T> rho{xi[3], xi[4], xi[5]};
  T theta2 = dot(w, w);
  T b, c;  // (1-cos)/t^2, (t-sin)/t^3
  if (value_of(theta2) < 1e-12) {
    b = 0.5 - theta2 * (1.0 / 24.0);
    c = (1.0 / 6.0) - theta2 * (1.0 / 120.0);
  } else {
    T theta = sqrt(theta2);
    b = (1.0 - cos(theta)) / theta2;
    c = (theta - sin(theta)) / (theta2 * theta);
  }
  Mat3<T> K;
  K.m = {T(0), -w.z, w.y, w.z, T(0), -w.x, -w.y, w.x, T(0)};
  Mat3<T> K2 = K * K;
  Mat3<T> V = Mat3<T>::identity();
  for (int i = 0; i < 9; ++i) V.m[i] = V.m[i] + b * K.m[i] + c * K2.m[i];
  return {so3_exp(w), V * rho};
}

inline SE3Pose se3_exp(const double xi[6]) {
  auto t = se3_exp_t<double>(xi);
  return {t.rotation, t.translation};
}

// base composed with the local increment: base * exp(xi). At xi = 0 the
// increment is the exact identity, so the base comes back bit-exact.
template <typename T>
Se3Transform<T> apply_increment_t(const SE3Pose& base, const T xi[6]) {
  Se3Transform<T> inc = se3_exp_t(xi);
  Mat3<T> bR;
  for (int i = 0; i < 9; ++i) bR.m[i] = T(base.rotation.m[i]);
  Vec3<T> bt{T(base.translation.x), T(base.translation.y), T(base.translation.z)};
  return {bR * inc.rotation, bt + bR * inc.translation};
}

inline SE3Pose apply_increment(const SE3Pose& base, const double xi[6]) {
  bool all_zero = true;
  for (int i = 0; i < 6; ++i) all_zero = all_zero && xi[i] == 0.0;
  if (all_zero) return base;
  SE3Pose inc = se3_exp(xi);
  return {base.rotation * inc.rotation, base.translation + base.rotation * inc.translation};
}

inline SE3Pose compose(const SE3Pose& a, const SE3Pose& b) {
  return {a.rotation * b.rotation, a.translation + a.rotation * b.translation};
}

inline SE3Pose inverse(const SE3Pose& p) {
  Mat3d rt = p.rotation.transposed();
  return {rt, -(rt * p.translation)};
}

// Rotation log map (axis-angle vector). Angles near pi fall back to the
// largest-diagonal column extraction.
inline Vec3d so3_log(const Mat3d& R) {
  double tr = R(0, 0) + R(1, 1) + R(2, 2);
  double c = std::min(1.0, std::max(-1.0, (tr - 1.0) * 0.5));
  double theta = std::acos(c);
  if (theta < 1e-10) return {0.0, 0.0, 0.0};
  if (theta > M_PI - 1e-6) {
    // R ~= 2vv^T - I
    int k = 0;
    for (int i = 1; i < 3; ++i)
      if (R(i, i) > R(k, k)) k = i;
    Vec3d v;
    double d = std::sqrt(std::max(0.0, (R(k, k) + 1.0) * 0.5));
    double* vv = &v.x;
    vv[k] = d;
    for (int i = 0; i < 3; ++i)
      if (i != k) vv[i] = R(i, k) / (2.0 * d);
    return normalized(v) * theta;
  }
  double s = 0.5 / std::sin(theta);
  return Vec3d{(R(2, 1) - R(1, 2)) * s, (R(0, 2) - R(2, 0)) * s, (R(1, 0) - R(0, 1)) * s} * theta;
}

// Geodesic rotation interpolation R0 * exp(s * log(R0^T R1)).
inline Mat3d slerp(const Mat3d& r0, const Mat3d& r1, double s) {
  Vec3d w = so3_log(r0.transposed() * r1) * s;
  double xi[3] = {w.x, w.y, w.z};
  return r0 * so3_exp(Vec3d{xi[0], xi[1], xi[2]});
}

inline double rotation_angle_between(const Mat3d& a, const Mat3d& b) {
  return norm(so3_log(a.transposed() * b));
}

}  // namespace ct
