#include "ct/trajectory.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "ct/common.hpp"

namespace ct {

void Trajectory::push(int frame_index, const CinematicParams& p) {
  if (!keyframes.empty() && frame_index <= keyframes.back().frame_index)
    throw ConfigError("trajectory: frame indices must be strictly increasing (got " +
                      std::to_string(frame_index) + " after " +
                      std::to_string(keyframes.back().frame_index) + ")");
  keyframes.push_back({frame_index, p});
}

void Trajectory::validate() const {
  for (std::size_t i = 1; i < keyframes.size(); ++i)
    if (keyframes[i].frame_index <= keyframes[i - 1].frame_index)
      throw ConfigError("trajectory: frame indices must be strictly increasing");
  for (const auto& k : keyframes) {
    if (!(k.params.focal > 0.0)) throw ConfigError("trajectory: focal must be positive");
    if (k.params.time < 0.0 || k.params.time > 1.0)
      throw ConfigError("trajectory: time must be in [0,1]");
  }
}

CinematicParams interpolate_trajectory(const Trajectory& traj, double t) {
  if (traj.keyframes.empty()) throw ConfigError("interpolate_trajectory: empty trajectory");
  double lo = traj.keyframes.front().frame_index;
  double hi = traj.keyframes.back().frame_index;
  if (t < lo || t > hi)
    throw ConfigError("interpolate_trajectory: t=" + std::to_string(t) + " outside [" +
                      std::to_string(lo) + "," + std::to_string(hi) + "]");

  std::size_t hi_idx = 0;
  while (hi_idx < traj.keyframes.size() && traj.keyframes[hi_idx].frame_index < t) ++hi_idx;
  if (hi_idx == 0) return traj.keyframes.front().params;
  if (hi_idx == traj.keyframes.size()) return traj.keyframes.back().params;
  const Keyframe& a = traj.keyframes[hi_idx - 1];
  const Keyframe& b = traj.keyframes[hi_idx];
  if (t == b.frame_index) return b.params;

  double s = (t - a.frame_index) / double(b.frame_index - a.frame_index);
  SE3Pose pa = a.params.pose();
  SE3Pose pb = b.params.pose();
  SE3Pose p;
  p.rotation = slerp(pa.rotation, pb.rotation, s);
  p.translation = pa.translation * (1.0 - s) + pb.translation * s;
  double focal = a.params.focal * (1.0 - s) + b.params.focal * s;
  double time = a.params.time * (1.0 - s) + b.params.time * s;
  return CinematicParams::at(p, focal, time);
}

void save_trajectory(const Trajectory& traj, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ConfigError("save_trajectory: cannot open " + path);
  out << "# frame_index r00 r01 r02 r10 r11 r12 r20 r21 r22 tx ty tz focal_px time_m\n";
  char buf[512];
  for (const auto& k : traj.keyframes) {
    SE3Pose p = k.params.pose();
    int n = std::snprintf(buf, sizeof(buf),
                          "%d %.17g %.17g %.17g %.17g %.17g %.17g %.17g %.17g %.17g "
                          "%.17g %.17g %.17g %.17g %.17g\n",
                          k.frame_index, p.rotation.m[0], p.rotation.m[1], p.rotation.m[2],
                          p.rotation.m[3], p.rotation.m[4], p.rotation.m[5], p.rotation.m[6],
                          p.rotation.m[7], p.rotation.m[8], p.translation.x, p.translation.y,
                          p.translation.z, k.params.focal, k.params.time);
    out.write(buf, n);
  }
}

Trajectory load_trajectory(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("load_trajectory: cannot open " + path);
  Trajectory traj;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    int idx;
    SE3Pose p;
    double focal, time;
    if (!(ls >> idx >> p.rotation.m[0] >> p.rotation.m[1] >> p.rotation.m[2] >> p.rotation.m[3] >>
          p.rotation.m[4] >> p.rotation.m[5] >> p.rotation.m[6] >> p.rotation.m[7] >>
          p.rotation.m[8] >> p.translation.x >> p.translation.y >> p.translation.z >> focal >>
          time))
      throw ConfigError("load_trajectory: malformed row: " + line);
    traj.push(idx, CinematicParams::at(p, focal, time));
  }
  if (traj.keyframes.empty()) throw ConfigError("load_trajectory: no rows in " + path);
  return traj;
}

}  // namespace ct
