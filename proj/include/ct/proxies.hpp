#pragma once

#include <optional>
#include <string>
#include <vector>

#include "ct/renderer.hpp"
#include "ct/trajectory.hpp"

namespace ct {

struct HeatmapConfig {
  double sigma_px = 0.0;      // splat std dev in pixels; <= 0 means 2% of the image diagonal
  bool occlusion = true;      // weight amplitudes by transmittance to the joint
  int occlusion_samples = 32;
  double resolved_sigma(Resolution res) const {
    return sigma_px > 0.0 ? sigma_px : 0.02 * res.diagonal();
  }
};

// Joint-confidence proxy: per joint, a gaussian splat at the projected joint
// with amplitude equal to the transmittance of the static background between
// camera and joint. Joints behind the camera contribute zero.
struct HeatmapStack {
  Tensor data;  // (H, W, J), nonnegative
  double sigma_px = 0.0;
  Resolution res;

  int joints() const { return data.shape.size() == 3 ? data.shape[2] : 0; }
  double at(int y, int x, int j) const {
    return data.data[(static_cast<std::size_t>(y) * res.w + x) * joints() + j];
  }
};

// Optical-flow proxy: geometric flow by depth reprojection, with actor-region
// pixels warped through the skeleton's time displacement.
struct FlowField {
  Tensor data;  // (H, W, 2) pixel displacements (u, v)
  Resolution res;

  double u(int y, int x) const { return data.data[(static_cast<std::size_t>(y) * res.w + x) * 2]; }
  double v(int y, int x) const {
    return data.data[(static_cast<std::size_t>(y) * res.w + x) * 2 + 1];
  }
};

struct ReferenceFrame {
  HeatmapStack heatmaps;
  std::optional<Tensor> color;  // (H, W, 3); present for internally rendered refs
};

struct ReferenceClip {
  std::vector<ReferenceFrame> frames;
  std::vector<FlowField> flows;  // size = frames.size() - 1
  std::string meta;              // "internal-render" | "external-file"
  Resolution res;
  int joint_count = 0;

  void validate() const;
};

// ---- value-path operations ----

HeatmapStack render_heatmaps(const CinematicParams& params, const DynamicScene& scene,
                             Resolution res, const HeatmapConfig& cfg);

FlowField induced_flow(const CinematicParams& params_t, const CinematicParams& params_t1,
                       const DynamicScene& scene, const RenderedFrame& frame_t);

FlowField induced_flow(const CinematicParams& params_t, const CinematicParams& params_t1,
                       const DynamicScene& scene, Resolution res, const QuadratureConfig& quad,
                       const SampleJitter& jitter);

// Renders heatmaps, colors and flows along a ground-truth trajectory,
// detached from any tape.
ReferenceClip make_reference(const Trajectory& traj, const DynamicScene& scene, Resolution res,
                             const QuadratureConfig& quad, const HeatmapConfig& hm_cfg,
                             std::uint64_t jitter_seed);

// Tensor-archive (CTRF) I/O: little-endian, header magic "CTRF", version,
// H, W, J, frame count; then per frame J float32 planes, then per flow 2
// float32 planes.
void save_reference(const ReferenceClip& clip, const std::string& path);
ReferenceClip load_reference(const std::string& path);

// ---- tape nodes ----

int render_heatmaps_node(Tape& tape, int params8, const SE3Pose& base, const DynamicScene& scene,
                         Resolution res, const HeatmapConfig& cfg);

// Flow between the window cameras; reads the depth/opacity channels of the
// first camera's frame node.
int induced_flow_node(Tape& tape, int params8_t, int params8_t1, int frame_t, const SE3Pose& base_t,
                      const SE3Pose& base_t1, const DynamicScene& scene, Resolution res);

}  // namespace ct
