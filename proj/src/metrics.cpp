#include "ct/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "ct/renderer.hpp"

namespace ct {

std::vector<double> per_frame_ate(const Trajectory& est, const Trajectory& gt) {
  if (est.size() != gt.size())
    throw ShapeError("rmse_ate: trajectory lengths differ (" + std::to_string(est.size()) +
                     " vs " + std::to_string(gt.size()) + ")");
  std::vector<double> out(est.size());
  for (std::size_t i = 0; i < est.size(); ++i)
    out[i] = norm(est.keyframes[i].params.pose().translation -
                  gt.keyframes[i].params.pose().translation);
  return out;
}

double rmse_ate(const Trajectory& est, const Trajectory& gt) {
  auto errs = per_frame_ate(est, gt);
  double s = 0.0;
  for (double e : errs) s += e * e;
  return std::sqrt(s / static_cast<double>(errs.size()));
}

double pixel_error(const std::vector<Tensor>& est_frames, const std::vector<Tensor>& ref_frames) {
  if (est_frames.size() != ref_frames.size())
    throw ShapeError("pixel_error: frame counts differ");
  if (est_frames.empty()) throw ShapeError("pixel_error: no frames");
  double total = 0.0;
  long long count = 0;
  for (std::size_t i = 0; i < est_frames.size(); ++i) {
    require_same_shape("pixel_error", est_frames[i], ref_frames[i]);
    for (std::size_t k = 0; k < est_frames[i].data.size(); ++k)
      total += std::abs(est_frames[i].data[k] - ref_frames[i].data[k]);
    count += est_frames[i].size();
  }
  return total / static_cast<double>(count);
}

double joint_error(const Trajectory& est, const Trajectory& ref, const DynamicScene& scene,
                   Resolution res, int* excluded, std::vector<double>* per_frame) {
  if (est.size() != ref.size()) throw ShapeError("joint_error: trajectory lengths differ");
  int excl = 0;
  double total = 0.0;
  long long count = 0;
  if (per_frame) per_frame->clear();
  for (std::size_t i = 0; i < est.size(); ++i) {
    const auto& pe = est.keyframes[i].params;
    const auto& pr = ref.keyframes[i].params;
    auto joints_e = joints_3d(scene, std::clamp(pe.time, 0.0, 1.0));
    auto joints_r = joints_3d(scene, std::clamp(pr.time, 0.0, 1.0));
    SE3Pose pose_e = pe.pose();
    SE3Pose pose_r = pr.pose();
    double frame_total = 0.0;
    int frame_count = 0;
    for (std::size_t j = 0; j < joints_e.size(); ++j) {
      if (camera_depth(joints_e[j], pose_e) <= kZMin ||
          camera_depth(joints_r[j], pose_r) <= kZMin) {
        ++excl;
        continue;
      }
      Vec2d a = project(joints_e[j], pose_e, pe.focal, res);
      Vec2d b = project(joints_r[j], pose_r, pr.focal, res);
      frame_total += std::hypot(a.x - b.x, a.y - b.y);
      ++frame_count;
    }
    if (frame_count == 0)
      throw NumericError("joint_error: all joints excluded in frame " + std::to_string(i));
    total += frame_total;
    count += frame_count;
    if (per_frame) per_frame->push_back(frame_total / frame_count);
  }
  if (excluded) *excluded = excl;
  return total / static_cast<double>(count);
}

Tensor landscape_probe(LandscapeLoss kind, const DynamicScene& target_scene,
                       const ReferenceFrame& ref_frame, const CinematicParams& gt,
                       const LandscapeSpec& spec, Resolution res, const QuadratureConfig& quad,
                       const OTConfig& ot, const HeatmapConfig& hm_cfg,
                       std::uint64_t jitter_seed) {
  int n = spec.cells_per_side;
  if (n < 3) throw ConfigError("landscape_probe: needs at least a 3x3 grid");
  Tensor grid = Tensor::zeros({n, n});
  auto jitter = SampleJitter::make(res, quad, jitter_seed);

  PoseLossRef pose_ref;
  if (kind == LandscapeLoss::pose) pose_ref = make_pose_loss_ref(ref_frame.heatmaps, ot);
  if (kind == LandscapeLoss::photometric && !ref_frame.color)
    throw ConfigError("landscape_probe: photometric probe needs a reference color frame");

  for (int row = 0; row < n; ++row) {
    for (int col = 0; col < n; ++col) {
      double dy = (row - (n - 1) / 2.0) / ((n - 1) / 2.0) * spec.half_extent;
      double dx = (col - (n - 1) / 2.0) / ((n - 1) / 2.0) * spec.half_extent;
      CinematicParams probe = gt;
      probe.base.translation += Vec3d{dx, dy, 0.0};
      double value;
      try {
        if (kind == LandscapeLoss::pose) {
          HeatmapStack syn = render_heatmaps(probe, target_scene, res, hm_cfg);
          value = pose_loss_value(pose_ref, syn, ot);
        } else {
          RenderedFrame frame = render(probe, target_scene, res, quad, *jitter);
          Tensor color = Tensor::zeros({res.h, res.w, 3});
          for (long long p = 0; p < static_cast<long long>(res.h) * res.w; ++p)
            for (int c = 0; c < 3; ++c)
              color.data[static_cast<std::size_t>(p) * 3 + c] =
                  frame.data.data[static_cast<std::size_t>(p) * 5 + c];
          value = photometric_loss_value(*ref_frame.color, color);
        }
      } catch (const std::exception&) {
        value = std::nan("");  // recorded as missing, not fatal
      }
      grid.data[static_cast<std::size_t>(row) * n + col] = value;
    }
  }

  // min-max normalize over valid cells
  double mn = 1e300, mx = -1e300;
  for (double v : grid.data)
    if (std::isfinite(v)) {
      mn = std::min(mn, v);
      mx = std::max(mx, v);
    }
  if (mx > mn)
    for (auto& v : grid.data)
      if (std::isfinite(v)) v = (v - mn) / (mx - mn);
  return grid;
}

std::pair<int, int> grid_argmin(const Tensor& grid) {
  int n = grid.shape[0], m = grid.shape[1];
  int br = -1, bc = -1;
  double best = 1e300;
  for (int r = 0; r < n; ++r)
    for (int c = 0; c < m; ++c) {
      double v = grid.data[static_cast<std::size_t>(r) * m + c];
      if (std::isfinite(v) && v < best) {
        best = v;
        br = r;
        bc = c;
      }
    }
  if (br < 0) throw NumericError("grid_argmin: all cells missing");
  return {br, bc};
}

double pearson_correlation(const std::vector<double>& xs, const std::vector<double>& ys) {
  if (xs.size() != ys.size() || xs.size() < 2)
    throw ShapeError("pearson_correlation: needs two equal series of length >= 2");
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    mx += xs[i];
    my += ys[i];
  }
  mx /= static_cast<double>(xs.size());
  my /= static_cast<double>(ys.size());
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sxy += (xs[i] - mx) * (ys[i] - my);
    sxx += (xs[i] - mx) * (xs[i] - mx);
    syy += (ys[i] - my) * (ys[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) return 0.0;
  return sxy / std::sqrt(sxx * syy);
}

std::string EvalReport::to_json() const {
  std::ostringstream os;
  os.precision(17);
  os << "{\"rmse_ate\":" << rmse_ate;
  if (pixel_error) os << ",\"pixel_error\":" << *pixel_error;
  os << ",\"joint_error\":" << joint_error << ",\"excluded_joints\":" << excluded_joints
     << ",\"success\":" << (success ? "true" : "false");
  if (!failure_stage.empty()) os << ",\"failure_stage\":\"" << failure_stage << "\"";
  os << ",\"per_frame_ate\":[";
  for (std::size_t i = 0; i < per_frame_ate.size(); ++i)
    os << (i ? "," : "") << per_frame_ate[i];
  os << "],\"per_frame_je\":[";
  for (std::size_t i = 0; i < per_frame_je.size(); ++i) os << (i ? "," : "") << per_frame_je[i];
  os << "]}";
  return os.str();
}

}  // namespace ct
