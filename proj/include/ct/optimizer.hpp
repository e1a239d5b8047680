#pragma once

#include <array>

#include "ct/guidance.hpp"
#include "ct/losses.hpp"

namespace ct {

enum class LossArm { flow_pose, pose, flow, photometric, inerf };

const char* loss_arm_name(LossArm arm);
LossArm parse_loss_arm(const std::string& name);

struct AdamConfig {
  double lr = 1.0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct OptimConfig {
  int iters_per_window = 500;
  AdamConfig adam;
  // per-group learning rates; translation and focal scale with the scene
  // diameter and the initial focal length respectively
  double lr_rotation = 1e-2;        // radians
  double lr_translation_frac = 1e-2;  // x scene diameter
  double lr_focal_frac = 1e-2;        // x initial focal
  double lr_time = 1e-2;
  double lr_decay = 0.995;  // per-iteration multiplier on all groups
  double stop_tol = 1e-4;
  int stop_patience = 50;
  int guidance_n = 256;
  double guidance_floor = 0.05;
  double hold_factor = 0.1;  // soft hold on the camera carried over from the previous window
  double focal_min = 5.0;
  double focal_max = 500.0;
  OTConfig ot;
  LossWeights weights_init;
  bool gradnorm = true;
  LossArm arm = LossArm::flow_pose;
  QuadratureConfig quad;
  HeatmapConfig heatmap;
  std::uint64_t seed = 0;
};

struct IterationRecord {
  int iter = 0;
  double pose_term = 0.0;
  double flow_term = 0.0;
  double total = 0.0;
  double alpha = 0.0, beta = 0.0;
  double grad_norm_pose = 0.0, grad_norm_flow = 0.0;
};

struct WindowState {
  CinematicParams cam_a, cam_b;
  std::array<double, 16> adam_m{}, adam_v{};
  int adam_t = 0;
  LossWeights weights;
  int iterations = 0;
  std::vector<IterationRecord> history;
};

// Reference data for one two-camera window. Pose refs may be null for the
// pixel-loss arms; inerf_pixels are the fixed keypoint-driven subsets.
struct WindowRef {
  const ReferenceFrame* frame_a = nullptr;
  const ReferenceFrame* frame_b = nullptr;
  const FlowField* flow = nullptr;
  const PoseLossRef* pose_a = nullptr;
  const PoseLossRef* pose_b = nullptr;
  const std::vector<int>* inerf_pixels_a = nullptr;
  const std::vector<int>* inerf_pixels_b = nullptr;
};

struct AdamState {
  std::array<double, 16>* m;
  std::array<double, 16>* v;
  int* t;
};

// One bias-corrected Adam step on the packed 16-vector
// [xi_a(6), focal_a, time_a, xi_b(6), focal_b, time_b], followed by the
// projection: focal clamped to [focal_min, focal_max], time to [0, 1].
void adam_step(AdamState state, const std::array<double, 16>& grad,
               const std::array<double, 16>& lrs, const AdamConfig& cfg,
               std::array<double, 16>* params, double focal_min, double focal_max);

WindowState optimize_window(const WindowRef& ref, const CinematicParams& init_a,
                            const CinematicParams& init_b, const DynamicScene& scene,
                            Resolution res, const OptimConfig& cfg,
                            std::shared_ptr<const SampleJitter> jitter, bool hold_first,
                            std::uint64_t window_seed);

struct TransferResult {
  Trajectory trajectory;
  std::vector<WindowState> windows;
};

// Aborted transfers carry the frames recovered so far.
class TransferError : public NumericError {
 public:
  TransferError(const std::string& msg, Trajectory partial)
      : NumericError(msg), partial_trajectory(std::move(partial)) {}
  Trajectory partial_trajectory;
};

// Sliding-window optimization over the clip: window k optimizes cameras
// (k, k+1); camera k is warm-started from the previous window and softly
// held, camera k+1 starts at camera k's pose.
TransferResult transfer_clip(const ReferenceClip& reference, const DynamicScene& scene,
                             const CinematicParams& init, const OptimConfig& cfg);

// Keypoint-driven pixel subset for the inerf-style arm: the top-n pixels of
// the summed reference heatmaps.
std::vector<int> keypoint_pixels(const HeatmapStack& ref, int n);

}  // namespace ct
