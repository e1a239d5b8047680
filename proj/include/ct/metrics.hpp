#pragma once

#include <optional>

#include "ct/losses.hpp"
#include "ct/trajectory.hpp"

namespace ct {

struct EvalReport {
  double rmse_ate = 0.0;                 // scene units
  std::optional<double> pixel_error;     // same-scene runs only
  double joint_error = 0.0;              // pixels
  std::vector<double> per_frame_ate;
  std::vector<double> per_frame_je;
  int excluded_joints = 0;               // behind-camera exclusions across the clip
  bool success = true;
  std::string failure_stage;             // set when success is false

  std::string to_json() const;
};

// Translation-only RMSE between trajectories sharing the scene frame (no
// alignment applied).
double rmse_ate(const Trajectory& est, const Trajectory& gt);
std::vector<double> per_frame_ate(const Trajectory& est, const Trajectory& gt);

// Mean absolute color difference over pixels and frames.
double pixel_error(const std::vector<Tensor>& est_frames, const std::vector<Tensor>& ref_frames);

// Mean pixel distance between projections of the scene's ground-truth joints
// under estimated vs reference cinematic params (pose, focal and time all
// matter). Joints behind either camera are excluded and counted.
double joint_error(const Trajectory& est, const Trajectory& ref, const DynamicScene& scene,
                   Resolution res, int* excluded = nullptr,
                   std::vector<double>* per_frame = nullptr);

enum class LandscapeLoss { pose, photometric };

struct LandscapeSpec {
  int cells_per_side = 9;     // odd so the center cell sits at the gt params
  double half_extent = 0.75;  // world units of the (dx, dy) perturbation
};

// Loss over a grid of camera-translation perturbations around gt params,
// min-max normalized; render failures become NaN cells rather than aborting.
Tensor landscape_probe(LandscapeLoss kind, const DynamicScene& target_scene,
                       const ReferenceFrame& ref_frame, const CinematicParams& gt,
                       const LandscapeSpec& spec, Resolution res, const QuadratureConfig& quad,
                       const OTConfig& ot, const HeatmapConfig& hm_cfg, std::uint64_t jitter_seed);

// Index of the grid minimum (NaN cells skipped): (row, col).
std::pair<int, int> grid_argmin(const Tensor& grid);

double pearson_correlation(const std::vector<double>& xs, const std::vector<double>& ys);

}  // namespace ct
