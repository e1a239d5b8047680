#include "ct/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace ct {

namespace {

namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw ConfigError("cannot create output directory " + dir);
}

Tensor frame_colors(const RenderedFrame& f) {
  Tensor color = Tensor::zeros({f.res.h, f.res.w, 3});
  for (long long p = 0; p < static_cast<long long>(f.res.h) * f.res.w; ++p)
    for (int c = 0; c < 3; ++c)
      color.data[static_cast<std::size_t>(p) * 3 + c] =
          f.data.data[static_cast<std::size_t>(p) * 5 + c];
  return color;
}

void write_window_log(const std::string& path, const std::vector<WindowState>& windows) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot open log file " + path);
  out << "# window iter pose_term flow_term total alpha beta grad_norm_pose grad_norm_flow\n";
  char buf[256];
  for (std::size_t w = 0; w < windows.size(); ++w)
    for (const auto& r : windows[w].history) {
      int n = std::snprintf(buf, sizeof(buf), "%zu %d %.10g %.10g %.10g %.6g %.6g %.6g %.6g\n", w,
                            r.iter, r.pose_term, r.flow_term, r.total, r.alpha, r.beta,
                            r.grad_norm_pose, r.grad_norm_flow);
      out.write(buf, n);
    }
}

}  // namespace

double median(std::vector<double> v) {
  if (v.empty()) throw ConfigError("median: empty");
  std::sort(v.begin(), v.end());
  std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

std::string RunRecord::to_json(bool canonical) const {
  std::ostringstream os;
  os.precision(17);
  os << "{\"scenario\":" << scenario_to_json(scenario) << ",\"report\":" << report.to_json()
     << ",\"iterations\":" << iterations << ",\"peak_adjoint_pixels\":" << peak_adjoint_pixels
     << ",\"trajectory_path\":\"" << trajectory_path << "\""
     << ",\"wall_time_s\":" << (canonical ? 0.0 : wall_time_s) << "}";
  return os.str();
}

RunRecord cmd_copy_task(const Scenario& scenario, const std::string& out_dir) {
  ensure_dir(out_dir);
  auto t0 = Clock::now();

  DynamicScene ref_scene = build_preset(scenario.ref_scene);
  DynamicScene target_scene = build_preset(scenario.target_scene);
  Resolution res = scenario.resolution;
  OptimConfig cfg = scenario.optim;
  cfg.arm = scenario.arm;
  cfg.seed = scenario.seed;

  Trajectory gt = make_motion(scenario.motion, scenario.keyframes, ref_scene, scenario.seed);
  ReferenceClip reference =
      make_reference(gt, ref_scene, res, cfg.quad, cfg.heatmap, cfg.seed);
  CinematicParams init =
      make_init(scenario.init, gt.keyframes.front().params, target_scene, scenario.seed);

  RunRecord rec;
  rec.scenario = scenario;
  rec.peak_adjoint_pixels =
      2 * std::min<long long>(cfg.guidance_n, static_cast<long long>(res.h) * res.w);

  TransferResult result;
  bool ok = true;
  try {
    result = transfer_clip(reference, target_scene, init, cfg);
  } catch (const TransferError& e) {
    ok = false;
    rec.report.success = false;
    rec.report.failure_stage = e.what();
    rec.report.rmse_ate = -1.0;
    rec.report.joint_error = -1.0;
  }

  if (ok) {
    for (const auto& w : result.windows) rec.iterations += w.iterations;
    try {
      rec.report.rmse_ate = rmse_ate(result.trajectory, gt);
      rec.report.per_frame_ate = per_frame_ate(result.trajectory, gt);
      rec.report.joint_error = joint_error(result.trajectory, gt, target_scene, res,
                                           &rec.report.excluded_joints, &rec.report.per_frame_je);
      if (scenario.ref_scene == scenario.target_scene) {
        auto jitter = SampleJitter::make(res, cfg.quad, cfg.seed);
        std::vector<Tensor> est_colors, ref_colors;
        for (std::size_t i = 0; i < result.trajectory.size(); ++i) {
          est_colors.push_back(frame_colors(
              render(result.trajectory.keyframes[i].params, target_scene, res, cfg.quad, *jitter)));
          ref_colors.push_back(*reference.frames[i].color);
        }
        rec.report.pixel_error = pixel_error(est_colors, ref_colors);
      }
    } catch (const std::exception& e) {
      rec.report.success = false;
      rec.report.failure_stage = std::string("evaluation: ") + e.what();
    }
    rec.trajectory_path = out_dir + "/" + scenario.name + "_trajectory.txt";
    save_trajectory(result.trajectory, rec.trajectory_path);
    write_window_log(out_dir + "/" + scenario.name + "_log.txt", result.windows);
  }

  rec.wall_time_s = std::chrono::duration<double>(Clock::now() - t0).count();
  std::ofstream out(out_dir + "/" + scenario.name + "_record.json");
  out << rec.to_json() << "\n";
  return rec;
}

ParamAblation cmd_ablate_param(const std::string& kind, int runs, int clip_len,
                               const Scenario& base, const std::string& out_dir) {
  if (kind != "time" && kind != "focal")
    throw ConfigError("ablate-param: kind must be 'time' or 'focal'");
  ensure_dir(out_dir);
  bool is_time = kind == "time";

  DynamicScene scene = build_preset(base.ref_scene);
  Resolution res = base.resolution;
  OptimConfig cfg = base.optim;
  cfg.arm = LossArm::flow_pose;

  Trajectory gt = make_motion(is_time ? MotionKind::time_only : MotionKind::focal_only, clip_len,
                              scene, base.seed);
  ReferenceClip reference = make_reference(gt, scene, res, cfg.quad, cfg.heatmap, base.seed);

  ParamAblation out;
  out.kind = kind;
  for (int r = 0; r < runs; ++r) {
    Rng rng(derive_seed(base.seed, 0xab1a7e, static_cast<std::uint64_t>(r)));
    double init_value = is_time ? uniform01(rng) : uniform(rng, 50.0, 100.0);

    CinematicParams init = gt.keyframes.front().params;
    if (is_time)
      init.time = init_value;
    else
      init.focal = init_value;

    OptimConfig run_cfg = cfg;
    run_cfg.seed = derive_seed(base.seed, 0x5eed, static_cast<std::uint64_t>(r));
    double method_err = 0.0;
    try {
      TransferResult result = transfer_clip(reference, scene, init, run_cfg);
      for (std::size_t i = 0; i < gt.size(); ++i) {
        double got = is_time ? result.trajectory.keyframes[i].params.time
                             : result.trajectory.keyframes[i].params.focal;
        double want = is_time ? gt.keyframes[i].params.time : gt.keyframes[i].params.focal;
        method_err += std::abs(got - want);
      }
      method_err /= static_cast<double>(gt.size());
    } catch (const TransferError&) {
      method_err = is_time ? 1.0 : 50.0;  // full-range miss for failed runs
    }
    double control_err = 0.0;
    for (std::size_t i = 0; i < gt.size(); ++i) {
      double want = is_time ? gt.keyframes[i].params.time : gt.keyframes[i].params.focal;
      control_err += std::abs(init_value - want);
    }
    control_err /= static_cast<double>(gt.size());
    out.method_errors.push_back(method_err);
    out.control_errors.push_back(control_err);
  }
  out.method_median = median(out.method_errors);
  out.control_median = median(out.control_errors);

  std::ofstream f(out_dir + "/ablate_" + kind + ".json");
  f << out.to_json() << "\n";
  return out;
}

std::string ParamAblation::to_json() const {
  std::ostringstream os;
  os.precision(17);
  os << "{\"kind\":\"" << kind << "\",\"method_median\":" << method_median
     << ",\"control_median\":" << control_median << ",\"method_errors\":[";
  for (std::size_t i = 0; i < method_errors.size(); ++i) os << (i ? "," : "") << method_errors[i];
  os << "],\"control_errors\":[";
  for (std::size_t i = 0; i < control_errors.size(); ++i) os << (i ? "," : "") << control_errors[i];
  os << "]}";
  return os.str();
}

std::vector<GuidanceSweepRow> cmd_ablate_guidance(const std::vector<int>& sample_counts,
                                                  const Scenario& base, int seeds,
                                                  const std::string& out_dir) {
  ensure_dir(out_dir);
  long long total_px = static_cast<long long>(base.resolution.h) * base.resolution.w;
  for (int n : sample_counts)
    if (n < 1 || n > total_px)
      throw ConfigError("ablate-guidance: sample count " + std::to_string(n) + " outside [1, " +
                        std::to_string(total_px) + "]");

  std::vector<GuidanceSweepRow> rows;
  for (int n : sample_counts) {
    std::vector<double> ates, jes;
    for (int s = 0; s < seeds; ++s) {
      Scenario run = base;
      run.name = base.name + "_g" + std::to_string(n) + "_s" + std::to_string(s);
      run.optim.guidance_n = n;
      run.seed = derive_seed(base.seed, 0x5eed5, static_cast<std::uint64_t>(s));
      RunRecord rec = cmd_copy_task(run, out_dir);
      if (rec.report.success) {
        ates.push_back(rec.report.rmse_ate);
        jes.push_back(rec.report.joint_error);
      }
    }
    GuidanceSweepRow row;
    row.n = n;
    row.peak_adjoint_pixels = 2 * static_cast<int>(std::min<long long>(n, total_px));
    if (!ates.empty()) {
      double mean = 0.0;
      for (double a : ates) mean += a;
      mean /= static_cast<double>(ates.size());
      double var = 0.0;
      for (double a : ates) var += (a - mean) * (a - mean);
      row.ate_mean = mean;
      row.ate_std = ates.size() > 1 ? std::sqrt(var / (static_cast<double>(ates.size()) - 1)) : 0.0;
      double jmean = 0.0;
      for (double j : jes) jmean += j;
      row.je_mean = jmean / static_cast<double>(jes.size());
    } else {
      row.ate_mean = -1.0;
      row.je_mean = -1.0;
    }
    rows.push_back(row);
  }

  std::ofstream f(out_dir + "/guidance_sweep.json");
  f << "[";
  for (std::size_t i = 0; i < rows.size(); ++i) {
    f << (i ? "," : "") << "{\"n\":" << rows[i].n << ",\"ate_mean\":" << rows[i].ate_mean
      << ",\"ate_std\":" << rows[i].ate_std << ",\"je_mean\":" << rows[i].je_mean
      << ",\"peak_adjoint_pixels\":" << rows[i].peak_adjoint_pixels << "}";
  }
  f << "]\n";
  return rows;
}

LandscapeResult cmd_landscape(LandscapeLoss kind, const Scenario& base,
                              const std::string& out_dir) {
  ensure_dir(out_dir);
  DynamicScene ref_scene = build_preset(base.ref_scene);
  DynamicScene target_scene = build_preset(base.target_scene);
  Resolution res = base.resolution;
  const OptimConfig& cfg = base.optim;

  // probe around the middle keyframe of the motion
  Trajectory gt = make_motion(base.motion, std::max(base.keyframes, 3), ref_scene, base.seed);
  CinematicParams center = gt.keyframes[gt.size() / 2].params;

  ReferenceFrame ref;
  ref.heatmaps = render_heatmaps(center, ref_scene, res, cfg.heatmap);
  auto jitter = SampleJitter::make(res, cfg.quad, base.seed);
  ref.color = frame_colors(render(center, ref_scene, res, cfg.quad, *jitter));

  LandscapeSpec spec;
  Tensor grid = landscape_probe(kind, target_scene, ref, center, spec, res, cfg.quad, cfg.ot,
                                cfg.heatmap, base.seed);

  LandscapeResult out;
  out.grid = grid;
  out.matrix_path = out_dir + "/landscape_" +
                    (kind == LandscapeLoss::pose ? std::string("pose") : std::string("photometric")) +
                    "_" + base.ref_scene + "_to_" + base.target_scene + ".txt";
  std::ofstream f(out.matrix_path);
  f << "# normalized loss grid, " << spec.cells_per_side << "x" << spec.cells_per_side
    << ", half extent " << spec.half_extent << " scene units, rows = dy, cols = dx\n";
  int n = spec.cells_per_side;
  f.precision(10);
  for (int r = 0; r < n; ++r) {
    for (int c = 0; c < n; ++c)
      f << grid.data[static_cast<std::size_t>(r) * n + c] << (c + 1 == n ? '\n' : ' ');
  }
  // per-axis slices through the center
  f << "# center row slice\n";
  for (int c = 0; c < n; ++c)
    f << grid.data[static_cast<std::size_t>(n / 2) * n + c] << (c + 1 == n ? '\n' : ' ');
  f << "# center column slice\n";
  for (int r = 0; r < n; ++r)
    f << grid.data[static_cast<std::size_t>(r) * n + n / 2] << (r + 1 == n ? '\n' : ' ');
  return out;
}

void cmd_render_export(const std::string& trajectory_path, const std::string& scene_name,
                       int fps_multiplier, const Scenario& base, const std::string& out_dir) {
  if (fps_multiplier < 1) throw ConfigError("render-export: fps multiplier must be >= 1");
  ensure_dir(out_dir);
  DynamicScene scene = build_preset(scene_name);
  Trajectory traj = load_trajectory(trajectory_path);
  traj.validate();
  Resolution res = base.resolution;
  auto jitter = SampleJitter::make(res, base.optim.quad, base.seed);

  int n = static_cast<int>(traj.size());
  int frames = (n - 1) * fps_multiplier + 1;
  Trajectory dense;
  double first = traj.keyframes.front().frame_index;
  double last = traj.keyframes.back().frame_index;
  for (int i = 0; i < frames; ++i) {
    double t = first + (last - first) * double(i) / (frames - 1);
    CinematicParams p = interpolate_trajectory(traj, t);
    dense.push(i, p);
    RenderedFrame frame = render(p, scene, res, base.optim.quad, *jitter);
    char name[64];
    std::snprintf(name, sizeof(name), "/frame_%04d_synth.ppm", i);
    dump_ppm(frame, out_dir + name);
    std::snprintf(name, sizeof(name), "/frame_%04d_synth_depth.txt", i);
    dump_depth_grid(frame, out_dir + name);
  }
  save_trajectory(dense, out_dir + "/trajectory_export.txt");
}

}  // namespace ct
