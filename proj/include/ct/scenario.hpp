#pragma once

#include "ct/optimizer.hpp"

namespace ct {

enum class MotionKind { push_in, arc, dolly_zoom, handheld_jitter, time_only, focal_only, static_cam };

const char* motion_name(MotionKind kind);
MotionKind parse_motion(const std::string& name);

// Scripted ground-truth camera motions around the preset actor.
Trajectory make_motion(MotionKind kind, int keyframes, const DynamicScene& scene,
                       std::uint64_t seed);

enum class InitKind { same, perturbed, random_in_bounds };

struct InitSpec {
  InitKind kind = InitKind::perturbed;
  double sigma_translation_frac = 0.05;  // of the scene diameter
  double sigma_rotation_deg = 5.0;
};

// Perturbs the first ground-truth camera per the init spec.
CinematicParams make_init(const InitSpec& spec, const CinematicParams& gt_first,
                          const DynamicScene& scene, std::uint64_t seed);

struct Scenario {
  std::string name = "scenario";
  std::string ref_scene = "scene_a";
  std::string target_scene = "scene_a";
  MotionKind motion = MotionKind::arc;
  int keyframes = 20;
  InitSpec init;
  LossArm arm = LossArm::flow_pose;
  Resolution resolution{64, 64};
  OptimConfig optim;
  std::uint64_t seed = 0;
};

Scenario parse_scenario_json(const std::string& text);
std::string scenario_to_json(const Scenario& s);
Scenario load_scenario(const std::string& path);
void save_scenario(const Scenario& s, const std::string& path);

}  // namespace ct
