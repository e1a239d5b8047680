#include "ct/scenario.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace ct {

const char* motion_name(MotionKind kind) {
  switch (kind) {
    case MotionKind::push_in: return "push-in";
    case MotionKind::arc: return "arc";
    case MotionKind::dolly_zoom: return "dolly-zoom";
    case MotionKind::handheld_jitter: return "handheld-jitter";
    case MotionKind::time_only: return "time-only";
    case MotionKind::focal_only: return "focal-only";
    case MotionKind::static_cam: return "static";
  }
  return "?";
}

MotionKind parse_motion(const std::string& name) {
  if (name == "push-in") return MotionKind::push_in;
  if (name == "arc") return MotionKind::arc;
  if (name == "dolly-zoom") return MotionKind::dolly_zoom;
  if (name == "handheld-jitter") return MotionKind::handheld_jitter;
  if (name == "time-only") return MotionKind::time_only;
  if (name == "focal-only") return MotionKind::focal_only;
  if (name == "static") return MotionKind::static_cam;
  throw ConfigError("unknown motion '" + name + "'");
}

namespace {

// camera looking at `target` with an upright image (180-degree roll keeps
// world-up at the top of the frame under the v-down pixel convention)
SE3Pose look_at(const Vec3d& pos, const Vec3d& target) {
  Vec3d z = normalized(target - pos);
  Vec3d up{0.0, 1.0, 0.0};
  Vec3d y_raw = -1.0 * up + dot(up, z) * z;
  Vec3d y = normalized(y_raw);
  Vec3d x = cross(y, z);
  SE3Pose p;
  p.rotation.m = {x.x, y.x, z.x, x.y, y.y, z.y, x.z, y.z, z.z};
  p.translation = pos;
  return p;
}

}  // namespace

Trajectory make_motion(MotionKind kind, int keyframes, const DynamicScene& scene,
                       std::uint64_t seed) {
  if (keyframes < 2) throw ConfigError("make_motion: needs at least 2 keyframes");
  (void)scene;
  Vec3d target{0.0, 0.1, 0.0};
  Rng rng(derive_seed(seed, 0x307101ULL));
  Trajectory traj;
  int n = keyframes;
  for (int i = 0; i < n; ++i) {
    double s = double(i) / (n - 1);
    CinematicParams p;
    switch (kind) {
      case MotionKind::push_in: {
        p = CinematicParams::at(look_at({0.0, 0.15, -7.6 + 2.4 * s}, target), 70.0, s);
        break;
      }
      case MotionKind::arc: {
        double psi = (-20.0 + 40.0 * s) * M_PI / 180.0;
        double r = 6.0;
        p = CinematicParams::at(look_at({r * std::sin(psi), 0.15, -r * std::cos(psi)}, target),
                                70.0, s);
        break;
      }
      case MotionKind::dolly_zoom: {
        Vec3d pos{0.0, 0.15, -8.6 + 3.2 * s};
        double dist = norm(target - pos);
        Vec3d pos0{0.0, 0.15, -8.6};
        double focal = 95.0 * dist / norm(target - pos0);
        p = CinematicParams::at(look_at(pos, target), focal, s);
        break;
      }
      case MotionKind::handheld_jitter: {
        Vec3d pos{0.0, 0.15, -7.2 + 1.6 * s};
        pos += Vec3d{gaussian(rng, 0.0, 0.05), gaussian(rng, 0.0, 0.04), gaussian(rng, 0.0, 0.05)};
        SE3Pose pose = look_at(pos, target);
        double ax[6] = {gaussian(rng, 0.0, 0.007), gaussian(rng, 0.0, 0.007),
                        gaussian(rng, 0.0, 0.004), 0, 0, 0};
        pose = compose(pose, se3_exp(ax));
        p = CinematicParams::at(pose, 70.0, s);
        break;
      }
      case MotionKind::time_only: {
        p = CinematicParams::at(look_at({0.0, 0.15, -6.0}, target), 70.0, s);
        break;
      }
      case MotionKind::focal_only: {
        p = CinematicParams::at(look_at({0.0, 0.15, -6.4}, target), 55.0 + 40.0 * s, 0.3);
        break;
      }
      case MotionKind::static_cam: {
        p = CinematicParams::at(look_at({0.0, 0.15, -6.0}, target), 70.0, 0.3);
        break;
      }
    }
    traj.push(i, p);
  }
  return traj;
}

CinematicParams make_init(const InitSpec& spec, const CinematicParams& gt_first,
                          const DynamicScene& scene, std::uint64_t seed) {
  Rng rng(derive_seed(seed, 0x1417ULL));
  switch (spec.kind) {
    case InitKind::same:
      return gt_first;
    case InitKind::perturbed: {
      CinematicParams p = gt_first;
      Vec3d dir = normalized(
          Vec3d{gaussian(rng), gaussian(rng), gaussian(rng)});
      p.base.translation += dir * (spec.sigma_translation_frac * scene.diameter());
      Vec3d ax = normalized(Vec3d{gaussian(rng), gaussian(rng), gaussian(rng)});
      double angle = spec.sigma_rotation_deg * M_PI / 180.0;
      double xi[6] = {ax.x * angle, ax.y * angle, ax.z * angle, 0, 0, 0};
      p.base = compose(p.base, se3_exp(xi));
      p.reanchor();
      return p;
    }
    case InitKind::random_in_bounds: {
      Vec3d pos{uniform(rng, -2.5, 2.5), uniform(rng, -0.4, 1.2), uniform(rng, -8.6, -4.6)};
      Vec3d target{uniform(rng, -0.4, 0.4), uniform(rng, -0.2, 0.4), uniform(rng, -0.3, 0.3)};
      SE3Pose pose;
      {
        Vec3d z = normalized(target - pos);
        Vec3d up{0.0, 1.0, 0.0};
        Vec3d y = normalized(-1.0 * up + dot(up, z) * z);
        Vec3d x = cross(y, z);
        pose.rotation.m = {x.x, y.x, z.x, x.y, y.y, z.y, x.z, y.z, z.z};
        pose.translation = pos;
      }
      return CinematicParams::at(pose, uniform(rng, 55.0, 95.0), uniform01(rng));
    }
  }
  throw ConfigError("make_init: bad init kind");
}

// ---------------------------------------------------------------------------

namespace {
using nlohmann::json;

const char* init_kind_name(InitKind k) {
  switch (k) {
    case InitKind::same: return "same";
    case InitKind::perturbed: return "perturbed";
    case InitKind::random_in_bounds: return "random-in-bounds";
  }
  return "?";
}

InitKind parse_init_kind(const std::string& s) {
  if (s == "same") return InitKind::same;
  if (s == "perturbed") return InitKind::perturbed;
  if (s == "random-in-bounds" || s == "random") return InitKind::random_in_bounds;
  throw ConfigError("unknown init kind '" + s + "'");
}

}  // namespace

std::string scenario_to_json(const Scenario& s) {
  json j;
  j["schema_version"] = 1;
  j["name"] = s.name;
  j["ref_scene"] = s.ref_scene;
  j["target_scene"] = s.target_scene;
  j["motion"] = motion_name(s.motion);
  j["keyframes"] = s.keyframes;
  j["init"] = {{"kind", init_kind_name(s.init.kind)},
               {"sigma_translation_frac", s.init.sigma_translation_frac},
               {"sigma_rotation_deg", s.init.sigma_rotation_deg}};
  j["arm"] = loss_arm_name(s.arm);
  j["resolution"] = {s.resolution.h, s.resolution.w};
  j["seed"] = s.seed;
  const OptimConfig& o = s.optim;
  j["optim"] = {{"iters_per_window", o.iters_per_window},
                {"lr", o.adam.lr},
                {"lr_rotation", o.lr_rotation},
                {"lr_translation_frac", o.lr_translation_frac},
                {"lr_focal_frac", o.lr_focal_frac},
                {"lr_time", o.lr_time},
                {"lr_decay", o.lr_decay},
                {"stop_tol", o.stop_tol},
                {"stop_patience", o.stop_patience},
                {"guidance_n", o.guidance_n},
                {"hold_factor", o.hold_factor},
                {"gradnorm", o.gradnorm},
                {"ot", {{"grid", o.ot.grid}, {"epsilon", o.ot.epsilon}, {"iters", o.ot.iters}}},
                {"quadrature",
                 {{"n_samples", o.quad.n_samples}, {"near", o.quad.near}, {"far", o.quad.far}}},
                {"heatmap",
                 {{"sigma_px", o.heatmap.sigma_px}, {"occlusion", o.heatmap.occlusion}}}};
  return j.dump(2);
}

Scenario parse_scenario_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const std::exception& e) {
    throw ConfigError(std::string("scenario: invalid JSON: ") + e.what());
  }
  Scenario s;
  s.name = j.value("name", "scenario");
  s.ref_scene = j.value("ref_scene", "scene_a");
  s.target_scene = j.value("target_scene", "scene_a");
  if (j.contains("motion")) s.motion = parse_motion(j.at("motion").get<std::string>());
  s.keyframes = j.value("keyframes", 20);
  if (s.keyframes < 2) throw ConfigError("scenario: keyframes must be >= 2");
  if (j.contains("init")) {
    const auto& ji = j.at("init");
    s.init.kind = parse_init_kind(ji.value("kind", "perturbed"));
    s.init.sigma_translation_frac = ji.value("sigma_translation_frac", 0.05);
    s.init.sigma_rotation_deg = ji.value("sigma_rotation_deg", 5.0);
    if (s.init.sigma_translation_frac < 0.0 || s.init.sigma_rotation_deg < 0.0)
      throw ConfigError("scenario: init sigmas must be nonnegative");
  }
  if (j.contains("arm")) s.arm = parse_loss_arm(j.at("arm").get<std::string>());
  if (j.contains("resolution")) {
    s.resolution.h = j.at("resolution")[0].get<int>();
    s.resolution.w = j.at("resolution")[1].get<int>();
  }
  s.seed = j.value("seed", 0ULL);
  if (j.contains("optim")) {
    const auto& jo = j.at("optim");
    OptimConfig& o = s.optim;
    o.iters_per_window = jo.value("iters_per_window", o.iters_per_window);
    o.adam.lr = jo.value("lr", o.adam.lr);
    o.lr_rotation = jo.value("lr_rotation", o.lr_rotation);
    o.lr_translation_frac = jo.value("lr_translation_frac", o.lr_translation_frac);
    o.lr_focal_frac = jo.value("lr_focal_frac", o.lr_focal_frac);
    o.lr_time = jo.value("lr_time", o.lr_time);
    o.lr_decay = jo.value("lr_decay", o.lr_decay);
    o.stop_tol = jo.value("stop_tol", o.stop_tol);
    o.stop_patience = jo.value("stop_patience", o.stop_patience);
    o.guidance_n = jo.value("guidance_n", o.guidance_n);
    o.hold_factor = jo.value("hold_factor", o.hold_factor);
    o.gradnorm = jo.value("gradnorm", o.gradnorm);
    if (jo.contains("ot")) {
      o.ot.grid = jo.at("ot").value("grid", o.ot.grid);
      o.ot.epsilon = jo.at("ot").value("epsilon", o.ot.epsilon);
      o.ot.iters = jo.at("ot").value("iters", o.ot.iters);
    }
    if (jo.contains("quadrature")) {
      o.quad.n_samples = jo.at("quadrature").value("n_samples", o.quad.n_samples);
      o.quad.near = jo.at("quadrature").value("near", o.quad.near);
      o.quad.far = jo.at("quadrature").value("far", o.quad.far);
    }
    if (jo.contains("heatmap")) {
      o.heatmap.sigma_px = jo.at("heatmap").value("sigma_px", o.heatmap.sigma_px);
      o.heatmap.occlusion = jo.at("heatmap").value("occlusion", o.heatmap.occlusion);
    }
  }
  s.optim.arm = s.arm;
  s.optim.seed = s.seed;
  return s;
}

Scenario load_scenario(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("load_scenario: cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_scenario_json(ss.str());
}

void save_scenario(const Scenario& s, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ConfigError("save_scenario: cannot open " + path);
  out << scenario_to_json(s) << "\n";
}

}  // namespace ct
