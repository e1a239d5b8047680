#pragma once

#include <string>
#include <utility>
#include <vector>

#include "ct/common.hpp"
#include "ct/dual.hpp"
#include "ct/vec.hpp"

namespace ct {

// ---------------------------------------------------------------------------
// config

struct GaussianBlobPrim {
  Vec3d center;
  Vec3d sigma;      // per-axis std dev, scene units
  double amplitude = 1.0;
  Vec3d color{0.5, 0.5, 0.5};
};

// Soft axis-aligned box: density = amplitude * prod_d window(x_d) with
// smoothstep ramps of half-width `softness` outside [lo, hi]. Exactly zero
// beyond lo - softness / hi + softness.
struct SlabPrim {
  Vec3d lo, hi;
  double softness = 0.08;
  double amplitude = 1.0;
  Vec3d color{0.5, 0.5, 0.5};
};

struct ActorConfig {
  int joint_count = 0;
  std::vector<double> key_times;                 // strictly increasing, covering [0,1]
  std::vector<std::vector<Vec3d>> key_joints;    // [time sample][joint]
  std::vector<std::pair<int, int>> bones;        // joint index pairs; (j,j) makes a sphere
  std::vector<double> bone_radius;               // gaussian falloff sigma per bone
  std::vector<double> bone_amplitude;
  std::vector<Vec3d> bone_color;
};

struct SceneConfig {
  int schema_version = 1;
  std::string name;
  Vec3d bounds_min, bounds_max;
  Vec3d background_color{0.0, 0.0, 0.0};
  std::vector<GaussianBlobPrim> blobs;
  std::vector<SlabPrim> slabs;
  ActorConfig actor;
};

// Validated immutable scene. Background is static; the actor deforms by
// piecewise-linear interpolation of joint keyframes over m in [0,1].
struct DynamicScene {
  SceneConfig cfg;

  int joint_count() const { return cfg.actor.joint_count; }
  double diameter() const { return norm(cfg.bounds_max - cfg.bounds_min); }
};

// Validates the config (errors name the offending field) and freezes it.
DynamicScene build_scene(const SceneConfig& config);

// Shipped presets: "scene_a" and "scene_b" share the actor skeleton and its
// motion but differ in background primitives and bone appearance.
SceneConfig preset_scene_config(const std::string& name);
DynamicScene build_preset(const std::string& name);

// Structured-text (JSON) scene config with a schema_version field.
SceneConfig load_scene_config(const std::string& path);
void save_scene_config(const SceneConfig& cfg, const std::string& path);
SceneConfig parse_scene_config_json(const std::string& json_text);
std::string scene_config_to_json(const SceneConfig& cfg);

// ---------------------------------------------------------------------------
// evaluation (templated so duals flow through)

template <typename T>
std::vector<Vec3<T>> joints_at(const ActorConfig& actor, const T& m) {
  const auto& times = actor.key_times;
  std::size_t hi = 1;
  double mv = value_of(m);
  while (hi + 1 < times.size() && times[hi] < mv) ++hi;
  double t0 = times[hi - 1], t1 = times[hi];
  T s = (m - t0) * (1.0 / (t1 - t0));
  s = clamp01(s);
  std::vector<Vec3<T>> out(actor.key_joints[0].size());
  const auto& a = actor.key_joints[hi - 1];
  const auto& b = actor.key_joints[hi];
  T r = 1.0 - s;
  for (std::size_t j = 0; j < out.size(); ++j) {
    out[j].x = r * a[j].x + s * b[j].x;
    out[j].y = r * a[j].y + s * b[j].y;
    out[j].z = r * a[j].z + s * b[j].z;
  }
  return out;
}

inline std::vector<Vec3d> joints_3d(const DynamicScene& scene, double m) {
  return joints_at<double>(scene.cfg.actor, m);
}

template <typename T>
T blob_density(const GaussianBlobPrim& b, const Vec3<T>& x) {
  using std::exp;
  T dx = x.x - b.center.x, dy = x.y - b.center.y, dz = x.z - b.center.z;
  T q = dx * dx * (0.5 / (b.sigma.x * b.sigma.x)) + dy * dy * (0.5 / (b.sigma.y * b.sigma.y)) +
        dz * dz * (0.5 / (b.sigma.z * b.sigma.z));
  if (value_of(q) > 30.0) return T(0.0);  // exp(-30) ~ 1e-13, below quadrature noise
  return b.amplitude * exp(-q);
}

template <typename T>
T slab_axis_window(double lo, double hi, double soft, const T& x) {
  T up = smooth01((x - (lo - soft)) * (0.5 / soft));
  T dn = smooth01(((hi + soft) - x) * (0.5 / soft));
  return up * dn;
}

template <typename T>
T slab_density(const SlabPrim& s, const Vec3<T>& x) {
  if (value_of(x.x) < s.lo.x - s.softness || value_of(x.x) > s.hi.x + s.softness ||
      value_of(x.y) < s.lo.y - s.softness || value_of(x.y) > s.hi.y + s.softness ||
      value_of(x.z) < s.lo.z - s.softness || value_of(x.z) > s.hi.z + s.softness)
    return T(0.0);
  T w = slab_axis_window(s.lo.x, s.hi.x, s.softness, x.x) *
        slab_axis_window(s.lo.y, s.hi.y, s.softness, x.y) *
        slab_axis_window(s.lo.z, s.hi.z, s.softness, x.z);
  return s.amplitude * w;
}

// Squared distance from x to segment a-b with the projection parameter
// clamped to [0,1]; gradient passes through the interior branch only.
template <typename T>
T point_segment_dist2(const Vec3<T>& a, const Vec3<T>& b, const Vec3<T>& x, T* t_out = nullptr) {
  Vec3<T> v = b - a;
  T vv = dot(v, v);
  T t;
  if (value_of(vv) < 1e-18) {
    t = T(0.0);
  } else {
    t = clamp01(dot(x - a, v) / vv);
  }
  if (t_out) *t_out = t;
  Vec3<T> c{a.x + t * v.x, a.y + t * v.y, a.z + t * v.z};
  return squared_norm(x - c);
}

template <typename T>
T capsule_density(double amplitude, double radius, const Vec3<T>& a, const Vec3<T>& b,
                  const Vec3<T>& x) {
  using std::exp;
  T d2 = point_segment_dist2(a, b, x);
  T q = d2 * (0.5 / (radius * radius));
  if (value_of(q) > 30.0) return T(0.0);
  return amplitude * exp(-q);
}

template <typename T>
T background_density_at(const DynamicScene& scene, const Vec3<T>& x) {
  T sigma(0.0);
  for (const auto& b : scene.cfg.blobs) sigma += blob_density(b, x);
  for (const auto& s : scene.cfg.slabs) sigma += slab_density(s, x);
  return sigma;
}

template <typename T>
T actor_density_at(const DynamicScene& scene, const std::vector<Vec3<T>>& joints,
                   const Vec3<T>& x) {
  T sigma(0.0);
  const auto& actor = scene.cfg.actor;
  for (std::size_t bi = 0; bi < actor.bones.size(); ++bi) {
    const auto& [ja, jb] = actor.bones[bi];
    sigma += capsule_density(actor.bone_amplitude[bi], actor.bone_radius[bi], joints[ja],
                             joints[jb], x);
  }
  return sigma;
}

// Density and density-weighted color in one pass.
template <typename T>
struct FieldSample {
  T density{0.0};
  Vec3<T> weighted_color{T(0.0), T(0.0), T(0.0)};
};

template <typename T>
void accumulate_blob(const GaussianBlobPrim& b, const Vec3<T>& x, FieldSample<T>& acc) {
  T s = blob_density(b, x);
  if (value_of(s) == 0.0) return;
  acc.density += s;
  acc.weighted_color += Vec3<T>{T(b.color.x), T(b.color.y), T(b.color.z)} * s;
}

template <typename T>
void accumulate_slab(const SlabPrim& sl, const Vec3<T>& x, FieldSample<T>& acc) {
  T s = slab_density(sl, x);
  if (value_of(s) == 0.0) return;
  acc.density += s;
  acc.weighted_color += Vec3<T>{T(sl.color.x), T(sl.color.y), T(sl.color.z)} * s;
}

template <typename T>
void accumulate_bone(const DynamicScene& scene, std::size_t bi, const std::vector<Vec3<T>>& joints,
                     const Vec3<T>& x, FieldSample<T>& acc) {
  const auto& actor = scene.cfg.actor;
  const auto& [ja, jb] = actor.bones[bi];
  T s = capsule_density(actor.bone_amplitude[bi], actor.bone_radius[bi], joints[ja], joints[jb], x);
  if (value_of(s) == 0.0) return;
  acc.density += s;
  const Vec3d& c = actor.bone_color[bi];
  acc.weighted_color += Vec3<T>{T(c.x), T(c.y), T(c.z)} * s;
}

template <typename T>
FieldSample<T> field_sample_at(const DynamicScene& scene, const std::vector<Vec3<T>>& joints,
                               const Vec3<T>& x) {
  FieldSample<T> acc;
  for (const auto& b : scene.cfg.blobs) accumulate_blob(b, x, acc);
  for (const auto& s : scene.cfg.slabs) accumulate_slab(s, x, acc);
  for (std::size_t bi = 0; bi < scene.cfg.actor.bones.size(); ++bi)
    accumulate_bone(scene, bi, joints, x, acc);
  return acc;
}

// Density-weighted color with the background constant taking over in empty
// space (blend floor 1e-12).
template <typename T>
Vec3<T> blend_color(const DynamicScene& scene, const FieldSample<T>& s) {
  const Vec3d& bg = scene.cfg.background_color;
  T denom = s.density + 1e-12;
  return {(s.weighted_color.x + 1e-12 * bg.x) / denom, (s.weighted_color.y + 1e-12 * bg.y) / denom,
          (s.weighted_color.z + 1e-12 * bg.z) / denom};
}

inline double sample_density(const DynamicScene& scene, const Vec3d& x, double m) {
  auto joints = joints_at<double>(scene.cfg.actor, m);
  return field_sample_at(scene, joints, x).density;
}

inline Vec3d sample_color(const DynamicScene& scene, const Vec3d& x, double m) {
  auto joints = joints_at<double>(scene.cfg.actor, m);
  return blend_color(scene, field_sample_at(scene, joints, x));
}

}  // namespace ct
