#pragma once

#include <string>
#include <vector>

#include "ct/camera.hpp"

namespace ct {

struct Keyframe {
  int frame_index = 0;
  CinematicParams params;
};

// Ordered camera keyframes; frame indices strictly increasing. Times m are
// free per frame (timing may be optimized independently of frame order).
struct Trajectory {
  std::vector<Keyframe> keyframes;

  std::size_t size() const { return keyframes.size(); }
  void push(int frame_index, const CinematicParams& p);
  void validate() const;
};

// Rotation by slerp, translation/focal/time linearly, exact at keyframes.
// t outside [first, last] frame index throws.
CinematicParams interpolate_trajectory(const Trajectory& traj, double t);

// Plain-text tabular export, one row per frame:
// frame_index r00..r22 tx ty tz focal_px time_m (rotation row-major).
void save_trajectory(const Trajectory& traj, const std::string& path);
Trajectory load_trajectory(const std::string& path);

}  // namespace ct
