#include <cmath>

#include "ct/metrics.hpp"
#include "ct/rng.hpp"
#include "doctest.h"

using namespace ct;

namespace {

Trajectory line_traj(int n, Vec3d start, Vec3d step, double focal = 70.0) {
  Trajectory t;
  for (int i = 0; i < n; ++i) {
    SE3Pose p;
    p.translation = start + step * double(i);
    t.push(i, CinematicParams::at(p, focal, n > 1 ? double(i) / (n - 1) : 0.0));
  }
  return t;
}

}  // namespace

TEST_CASE("rmse_ate") {
  Trajectory gt = line_traj(5, {0, 0, -6}, {0.1, 0, 0.05});
  CHECK(rmse_ate(gt, gt) == 0.0);

  Trajectory shifted = gt;
  for (auto& k : shifted.keyframes) k.params.base.translation.x += 1.0;
  CHECK(rmse_ate(shifted, gt) == doctest::Approx(1.0));

  Rng rng(6);
  Trajectory noisy = gt;
  double acc = 0.0;
  for (auto& k : noisy.keyframes) {
    Vec3d d{uniform(rng, -0.5, 0.5), uniform(rng, -0.5, 0.5), uniform(rng, -0.5, 0.5)};
    k.params.base.translation += d;
    acc += squared_norm(d);
  }
  CHECK(rmse_ate(noisy, gt) == doctest::Approx(std::sqrt(acc / 5.0)).epsilon(1e-12));

  Trajectory shorter = line_traj(4, {0, 0, -6}, {0.1, 0, 0.05});
  CHECK_THROWS_AS(rmse_ate(shorter, gt), ShapeError);
}

TEST_CASE("pixel_error") {
  Tensor a = Tensor::zeros({64, 64, 3});
  Tensor b = Tensor::full({64, 64, 3}, 1.0);
  CHECK(pixel_error({a, a}, {a, a}) == 0.0);
  CHECK(pixel_error({a, a}, {b, b}) == doctest::Approx(1.0));

  // one pixel differing by 0.5 in one of two 64x64 frames
  Tensor c = a;
  for (int ch = 0; ch < 3; ++ch) c.data[(10 * 64 + 20) * 3 + static_cast<std::size_t>(ch)] = 0.5;
  CHECK(pixel_error({c, a}, {a, a}) == doctest::Approx(0.5 / (2.0 * 4096.0)));

  CHECK_THROWS_AS(pixel_error({a}, {Tensor::zeros({32, 32, 3})}), ShapeError);
}

TEST_CASE("joint_error") {
  // single static joint at the origin, camera 5 units back
  SceneConfig cfg;
  cfg.bounds_min = {-3, -3, -3};
  cfg.bounds_max = {3, 3, 3};
  cfg.actor.joint_count = 1;
  cfg.actor.key_times = {0.0, 1.0};
  cfg.actor.key_joints = {{{0, 0, 0}}, {{0, 0, 0}}};
  cfg.actor.bones = {{0, 0}};
  cfg.actor.bone_radius = {0.1};
  cfg.actor.bone_amplitude = {1.0};
  cfg.actor.bone_color = {{0.5, 0.5, 0.5}};
  DynamicScene scene = build_scene(cfg);
  Resolution res{64, 64};

  Trajectory ref = line_traj(3, {0, 0, -5}, {0, 0, 0});
  CHECK(joint_error(ref, ref, scene, res) == 0.0);

  // camera shifted so the projection moves exactly 3 px
  Trajectory est = ref;
  double dx = 3.0 * 5.0 / 70.0;
  for (auto& k : est.keyframes) k.params.base.translation.x += dx;
  CHECK(joint_error(est, ref, scene, res) == doctest::Approx(3.0).epsilon(1e-9));

  // time offset on a static skeleton changes nothing
  Trajectory tshift = ref;
  for (auto& k : tshift.keyframes) k.params.time = std::min(1.0, k.params.time + 0.4);
  CHECK(joint_error(tshift, ref, scene, res) == doctest::Approx(0.0));

  // all joints behind the camera in one frame
  Trajectory behind = ref;
  behind.keyframes[1].params.base.translation = {0, 0, 5};
  double z180[6] = {0, M_PI, 0, 0, 0, 0};
  (void)z180;
  CHECK_THROWS_AS(joint_error(behind, ref, scene, res), NumericError);
}

TEST_CASE("landscape_probe finds the basin center on the same scene") {
  DynamicScene scene = build_preset("scene_a");
  Resolution res{64, 64};
  QuadratureConfig quad{32, 0.5, 13.0, true};
  SE3Pose pose;
  pose.translation = {0.0, 0.15, -5.6};
  CinematicParams gt = CinematicParams::at(pose, 70.0, 0.35);

  ReferenceFrame ref;
  ref.heatmaps = render_heatmaps(gt, scene, res, HeatmapConfig{});
  RenderedFrame frame = render(gt, scene, res, quad, 3);
  Tensor color = Tensor::zeros({res.h, res.w, 3});
  for (long long p = 0; p < 64 * 64; ++p)
    for (int c = 0; c < 3; ++c)
      color.data[static_cast<std::size_t>(p) * 3 + c] =
          frame.data.data[static_cast<std::size_t>(p) * 5 + c];
  ref.color = color;

  LandscapeSpec spec;
  spec.cells_per_side = 5;
  spec.half_extent = 0.6;
  OTConfig ot;
  Tensor pose_grid = landscape_probe(LandscapeLoss::pose, scene, ref, gt, spec, res, quad, ot,
                                     HeatmapConfig{}, 3);
  CHECK(pose_grid.shape == std::vector<int>{5, 5});
  auto [pr, pc] = grid_argmin(pose_grid);
  CHECK(pr == 2);
  CHECK(pc == 2);
  CHECK(pose_grid.data[2 * 5 + 2] == doctest::Approx(0.0));

  Tensor photo_grid = landscape_probe(LandscapeLoss::photometric, scene, ref, gt, spec, res, quad,
                                      ot, HeatmapConfig{}, 3);
  auto [qr, qc] = grid_argmin(photo_grid);
  CHECK(qr == 2);
  CHECK(qc == 2);
}

TEST_CASE("pearson_correlation") {
  std::vector<double> xs{1, 2, 3, 4, 5};
  std::vector<double> ys{10, 8, 6, 4, 2};
  CHECK(pearson_correlation(xs, xs) == doctest::Approx(1.0));
  CHECK(pearson_correlation(xs, ys) == doctest::Approx(-1.0));
  std::vector<double> flat{3, 3, 3, 3, 3};
  CHECK(pearson_correlation(xs, flat) == 0.0);
  CHECK_THROWS_AS(pearson_correlation(xs, {1, 2}), ShapeError);
}

TEST_CASE("eval report serializes") {
  EvalReport r;
  r.rmse_ate = 0.25;
  r.joint_error = 1.5;
  r.pixel_error = 0.01;
  r.per_frame_ate = {0.1, 0.3};
  std::string j = r.to_json();
  CHECK(j.find("\"rmse_ate\":0.25") != std::string::npos);
  CHECK(j.find("\"success\":true") != std::string::npos);
}
