#pragma once

#include <array>

#include "ct/common.hpp"
#include "ct/se3.hpp"

namespace ct {

struct Resolution {
  int h = 64, w = 64;
  double diagonal() const { return std::sqrt(double(h) * h + double(w) * w); }
};

struct Ray {
  Vec3d origin;
  Vec3d direction;  // unit norm
};

// Depth guard for the projective singularity at z = 0, in scene units.
inline constexpr double kZMin = 1e-4;

// One camera's unknowns: a local se(3) increment about a reference pose,
// focal length in pixels, and the normalized clip time.
struct CinematicParams {
  SE3Pose base;
  std::array<double, 6> xi{};  // (wx, wy, wz, tx, ty, tz)
  double focal = 70.0;         // pixels, > 0
  double time = 0.0;           // m in [0, 1]

  SE3Pose pose() const { return apply_increment(base, xi.data()); }

  // Fold the increment into the base and reset it; used after each step so
  // the local parameterization stays near the origin.
  void reanchor() {
    base = pose();
    xi = {};
  }

  static CinematicParams at(const SE3Pose& pose, double focal, double time) {
    CinematicParams p;
    p.base = pose;
    p.focal = focal;
    p.time = time;
    return p;
  }
};

// Pinhole projection of a world point; principal point at the image center.
// u = focal * x/z + W/2, v = focal * y/z + H/2 in camera frame.
template <typename T>
struct Pixel2 {
  T u, v;
};

template <typename T>
Pixel2<T> project_t(const Vec3<T>& world, const Mat3<T>& cam_rot, const Vec3<T>& cam_t,
                    const T& focal, Resolution res) {
  Vec3<T> d{world.x - cam_t.x, world.y - cam_t.y, world.z - cam_t.z};
  Vec3<T> pc = cam_rot.transposed_times(d);
  return {focal * pc.x / pc.z + 0.5 * res.w, focal * pc.y / pc.z + 0.5 * res.h};
}

inline Vec2d project(const Vec3d& point, const SE3Pose& pose, double focal, Resolution res) {
  Vec3d pc = pose.rotation.transposed_times(point - pose.translation);
  if (pc.z <= kZMin)
    throw BehindCameraError("project: point at camera depth " + std::to_string(pc.z) +
                            " is behind the near guard");
  return {focal * pc.x / pc.z + 0.5 * res.w, focal * pc.y / pc.z + 0.5 * res.h};
}

// Camera-frame depth of a world point (positive in front of the camera).
inline double camera_depth(const Vec3d& point, const SE3Pose& pose) {
  Vec3d pc = pose.rotation.transposed_times(point - pose.translation);
  return pc.z;
}

inline Ray generate_ray(Vec2d pixel, const SE3Pose& pose, double focal, Resolution res) {
  Vec3d dir_cam{(pixel.x - 0.5 * res.w) / focal, (pixel.y - 0.5 * res.h) / focal, 1.0};
  return {pose.translation, normalized(pose.rotation * dir_cam)};
}

// Camera state templated on the scalar so renderer/proxy math can run on
// plain values or dual numbers. The packed parameter layout is
// [xi0..xi5, focal, time].
template <typename T>
struct CameraT {
  Mat3<T> rot;
  Vec3<T> pos;
  T focal;
  T time;
};

inline CameraT<double> camera_from_values(const SE3Pose& base, const double* p8) {
  SE3Pose pose = apply_increment(base, p8);
  return {pose.rotation, pose.translation, p8[6], p8[7]};
}

// Seeds the 8 parameter partials starting at `slot0` (for multi-camera duals).
template <int N>
CameraT<Dual<N>> camera_from_duals(const SE3Pose& base, const double* p8, int slot0 = 0) {
  Dual<N> xi[6];
  for (int i = 0; i < 6; ++i) xi[i] = Dual<N>::var(p8[i], slot0 + i);
  auto tf = apply_increment_t(base, xi);
  return {tf.rotation, tf.translation, Dual<N>::var(p8[6], slot0 + 6),
          Dual<N>::var(p8[7], slot0 + 7)};
}

}  // namespace ct
