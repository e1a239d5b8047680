#include <cmath>
#include <cstdio>
#include <fstream>

#include "ct/proxies.hpp"
#include "ct/rng.hpp"
#include "doctest.h"

using namespace ct;

namespace {

SceneConfig bare_scene(int joints = 1) {
  SceneConfig cfg;
  cfg.name = "bare";
  cfg.bounds_min = {-6, -6, -6};
  cfg.bounds_max = {6, 6, 6};
  cfg.background_color = {0.1, 0.1, 0.1};
  cfg.actor.joint_count = joints;
  cfg.actor.key_times = {0.0, 1.0};
  std::vector<Vec3d> pose(static_cast<std::size_t>(joints), Vec3d{0, 0, 0});
  for (int j = 1; j < joints; ++j) pose[static_cast<std::size_t>(j)] = {0.3 * j, 0.2 * j, 0.0};
  cfg.actor.key_joints = {pose, pose};
  for (int j = 0; j < joints; ++j) {
    cfg.actor.bones.push_back({j, j});
    cfg.actor.bone_radius.push_back(0.12);
    cfg.actor.bone_amplitude.push_back(0.0);
    cfg.actor.bone_color.push_back({0.7, 0.6, 0.5});
  }
  return cfg;
}

CinematicParams camera_at(double x, double y, double z, double focal = 70.0, double m = 0.0) {
  SE3Pose pose;
  pose.translation = {x, y, z};
  return CinematicParams::at(pose, focal, m);
}

std::pair<int, int> channel_argmax(const HeatmapStack& s, int j) {
  int bx = 0, by = 0;
  double best = -1.0;
  for (int y = 0; y < s.res.h; ++y)
    for (int x = 0; x < s.res.w; ++x)
      if (s.at(y, x, j) > best) {
        best = s.at(y, x, j);
        by = y;
        bx = x;
      }
  return {bx, by};
}

}  // namespace

TEST_CASE("render_heatmaps: on-axis joint peaks at the principal pixel with amplitude ~1") {
  DynamicScene scene = build_scene(bare_scene());
  Resolution res{64, 64};
  HeatmapConfig cfg;
  HeatmapStack s = render_heatmaps(camera_at(0, 0, -5), scene, res, cfg);
  auto [bx, by] = channel_argmax(s, 0);
  CHECK(std::abs(bx - 32) <= 1);
  CHECK(std::abs(by - 32) <= 1);
  double peak = s.at(by, bx, 0);
  CHECK(peak > 0.9);
  CHECK(peak <= 1.0);
}

TEST_CASE("render_heatmaps: joint behind an opaque slab is suppressed") {
  SceneConfig cfg = bare_scene();
  cfg.slabs.push_back({{-5, -5, -2.5}, {5, 5, -1.5}, 0.05, 60.0, {0.3, 0.3, 0.3}});
  DynamicScene scene = build_scene(cfg);
  Resolution res{64, 64};
  HeatmapStack s = render_heatmaps(camera_at(0, 0, -5), scene, res, HeatmapConfig{});
  double peak = 0.0;
  for (double v : s.data.data) peak = std::max(peak, v);
  CHECK(peak < 1e-3);

  HeatmapConfig no_occ;
  no_occ.occlusion = false;
  HeatmapStack s2 = render_heatmaps(camera_at(0, 0, -5), scene, res, no_occ);
  double peak2 = 0.0;
  for (double v : s2.data.data) peak2 = std::max(peak2, v);
  CHECK(peak2 > 0.9);
}

TEST_CASE("render_heatmaps: joints behind the camera contribute zero") {
  DynamicScene scene = build_scene(bare_scene());
  HeatmapStack s = render_heatmaps(camera_at(0, 0, 2.0), scene, {64, 64}, HeatmapConfig{});
  for (double v : s.data.data) CHECK(v == 0.0);
}

TEST_CASE("render_heatmaps: camera translation moves the channel argmax accordingly") {
  DynamicScene scene = build_scene(bare_scene());
  Resolution res{64, 64};
  double z = 5.0, focal = 70.0;
  HeatmapStack s0 = render_heatmaps(camera_at(0, 0, -z), scene, res, HeatmapConfig{});
  int k = 6;
  double dx = k * z / focal;  // projection moves -k pixels when the camera moves +dx
  HeatmapStack s1 = render_heatmaps(camera_at(dx, 0, -z), scene, res, HeatmapConfig{});
  auto [x0, y0] = channel_argmax(s0, 0);
  auto [x1, y1] = channel_argmax(s1, 0);
  CHECK(x0 - x1 == k);
  CHECK(y0 == y1);

  // translation covariance: the shifted channel matches the original
  double num = 0.0, na = 0.0, nb = 0.0;
  for (int y = 0; y < res.h; ++y)
    for (int x = 0; x + k < res.w; ++x) {
      double a = s0.at(y, x + k, 0);
      double b = s1.at(y, x, 0);
      num += a * b;
      na += a * a;
      nb += b * b;
    }
  CHECK(num / std::sqrt(na * nb) >= 0.99);
}

TEST_CASE("render_heatmaps node: gradient matches FD for all 8 params") {
  DynamicScene scene = build_preset("scene_a");
  Resolution res{32, 32};
  Tensor p8 = Tensor::zeros({8});
  p8.data = {0.01, -0.02, 0.015, 0.1, -0.05, 0.04, 68.0, 0.42};
  SE3Pose base;
  base.translation = {0.1, 0.2, -5.4};

  Rng rng(31);
  Tensor weights = Tensor::zeros({res.h, res.w, scene.joint_count()});
  for (auto& v : weights.data) v = uniform(rng, -1.0, 1.0);

  const DynamicScene* sc = &scene;
  auto builder = [sc, base, res, weights](Tape& t, const std::vector<int>& ids) {
    int hm = render_heatmaps_node(t, ids[0], base, *sc, res, HeatmapConfig{});
    return t.sum(t.mul(hm, t.constant(weights)));
  };
  CHECK(check_gradient(builder, {p8}, 1e-4) < 1e-3);
}

TEST_CASE("induced_flow: identical cameras on a static scene give zero flow") {
  SceneConfig cfg = bare_scene();
  cfg.slabs.push_back({{-5, -5, 2.0}, {5, 5, 2.8}, 0.05, 60.0, {0.4, 0.4, 0.4}});
  DynamicScene scene = build_scene(cfg);
  Resolution res{32, 32};
  QuadratureConfig quad{64, 0.5, 10.0, true};
  auto jitter = SampleJitter::make(res, quad, 1);
  CinematicParams cam = camera_at(0, 0, -4);
  FlowField flow = induced_flow(cam, cam, scene, res, quad, *jitter);
  for (double v : flow.data.data) CHECK(std::abs(v) < 1e-9);
}

TEST_CASE("induced_flow: x-translation against a fronto-parallel plane") {
  SceneConfig cfg = bare_scene();
  cfg.slabs.push_back({{-5, -5, 2.0}, {5, 5, 2.8}, 0.05, 80.0, {0.4, 0.4, 0.4}});
  DynamicScene scene = build_scene(cfg);
  Resolution res{32, 32};
  QuadratureConfig quad{256, 0.5, 10.0, false};
  auto jitter = SampleJitter::make(res, quad, 0);
  double z = 6.0, focal = 70.0, dx = 0.25;
  CinematicParams cam_t = camera_at(0, 0, -4, focal);
  CinematicParams cam_t1 = camera_at(dx, 0, -4, focal);
  FlowField flow = induced_flow(cam_t, cam_t1, scene, res, quad, *jitter);
  double expect_u = -focal * dx / z;
  for (int y = 12; y < 20; ++y)
    for (int x = 12; x < 20; ++x) {
      CHECK(flow.u(y, x) == doctest::Approx(expect_u).epsilon(0.05));
      CHECK(std::abs(flow.v(y, x)) < 0.05);
    }
}

TEST_CASE("induced_flow: pure time advance keeps static background at zero flow") {
  DynamicScene scene = build_preset("scene_a");
  Resolution res{32, 32};
  QuadratureConfig quad{64, 0.5, 13.0, true};
  auto jitter = SampleJitter::make(res, quad, 9);
  CinematicParams a = camera_at(0, 0.1, -5.6, 70.0, 0.2);
  CinematicParams b = a;
  b.time = 0.6;
  FlowField flow = induced_flow(a, b, scene, res, quad, *jitter);
  for (auto [y, x] : {std::pair<int, int>{2, 2}, {2, 29}, {29, 2}, {29, 29}}) {
    CHECK(std::abs(flow.u(y, x)) < 1e-9);
    CHECK(std::abs(flow.v(y, x)) < 1e-9);
  }
  double peak = 0.0;
  for (double v : flow.data.data) peak = std::max(peak, std::abs(v));
  CHECK(peak > 0.5);
}

TEST_CASE("induced_flow node: gradient matches FD through render depth and both cameras") {
  DynamicScene scene = build_preset("scene_a");
  Resolution res{24, 24};
  QuadratureConfig quad{32, 0.5, 13.0, true};
  auto jitter = SampleJitter::make(res, quad, 4);
  SE3Pose base_a, base_b;
  base_a.translation = {0.05, 0.1, -5.5};
  base_b.translation = {0.15, 0.12, -5.45};

  Tensor pa = Tensor::zeros({8});
  pa.data = {0.01, -0.01, 0.005, 0.02, -0.01, 0.03, 70.0, 0.30};
  Tensor pb = Tensor::zeros({8});
  pb.data = {-0.005, 0.008, -0.004, -0.02, 0.015, -0.01, 73.0, 0.38};

  Rng rng(12);
  Tensor weights = Tensor::zeros({res.h, res.w, 2});
  for (auto& v : weights.data) v = uniform(rng, -1.0, 1.0);

  const DynamicScene* sc = &scene;
  auto builder = [sc, base_a, base_b, res, quad, jitter, weights](Tape& t,
                                                                  const std::vector<int>& ids) {
    int frame = render_node(t, ids[0], base_a, *sc, res, quad, jitter);
    int flow = induced_flow_node(t, ids[0], ids[1], frame, base_a, base_b, *sc, res);
    return t.sum(t.mul(flow, t.constant(weights)));
  };
  CHECK(check_gradient(builder, {pa, pb}, 1e-4) < 1e-3);
}

TEST_CASE("induced_flow: approximate composition over three frames") {
  DynamicScene scene = build_preset("scene_a");
  Resolution res{48, 48};
  QuadratureConfig quad{96, 0.5, 13.0, false};
  auto jitter = SampleJitter::make(res, quad, 0);
  CinematicParams p0 = camera_at(0.0, 0.1, -5.6, 70.0, 0.0);
  CinematicParams p1 = camera_at(0.08, 0.1, -5.55, 70.0, 0.0);
  CinematicParams p2 = camera_at(0.16, 0.1, -5.5, 70.0, 0.0);

  RenderedFrame f0 = render(p0, scene, res, quad, *jitter);
  RenderedFrame f1 = render(p1, scene, res, quad, *jitter);
  FlowField f01 = induced_flow(p0, p1, scene, f0);
  FlowField f12 = induced_flow(p1, p2, scene, f1);
  FlowField f02 = induced_flow(p0, p2, scene, f0);

  auto bilinear = [&](const FlowField& f, double x, double y, int c) {
    int x0 = std::clamp(static_cast<int>(std::floor(x)), 0, res.w - 2);
    int y0 = std::clamp(static_cast<int>(std::floor(y)), 0, res.h - 2);
    double fx = std::clamp(x - x0, 0.0, 1.0), fy = std::clamp(y - y0, 0.0, 1.0);
    auto v = [&](int yy, int xx) {
      return f.data.data[(static_cast<std::size_t>(yy) * res.w + xx) * 2 +
                         static_cast<std::size_t>(c)];
    };
    return (1 - fy) * ((1 - fx) * v(y0, x0) + fx * v(y0, x0 + 1)) +
           fy * ((1 - fx) * v(y0 + 1, x0) + fx * v(y0 + 1, x0 + 1));
  };

  // smooth-region pixels: opaque, depth consistent with neighbors
  int checked = 0;
  double worst = 0.0;
  for (int y = 4; y < res.h - 4; y += 3)
    for (int x = 4; x < res.w - 4; x += 3) {
      if (f0.opacity(y, x) < 0.99) continue;
      double du = f01.u(y, x), dv = f01.v(y, x);
      double nu = bilinear(f01, x + 1.5, y + 1.5, 0);
      if (std::abs(nu - du) > 0.2) continue;  // skip depth discontinuities
      double cu = du + bilinear(f12, x + 0.5 + du, y + 0.5 + dv, 0);
      double cv = dv + bilinear(f12, x + 0.5 + du, y + 0.5 + dv, 1);
      double err = std::hypot(cu - f02.u(y, x), cv - f02.v(y, x));
      worst = std::max(worst, err);
      ++checked;
    }
  CHECK(checked > 50);
  CHECK(worst <= 0.5);
}

TEST_CASE("make_reference: counts, determinism, static trajectory") {
  DynamicScene scene = build_preset("scene_a");
  Resolution res{32, 32};
  QuadratureConfig quad{32, 0.5, 13.0, true};

  Trajectory traj;
  for (int i = 0; i < 20; ++i)
    traj.push(i, camera_at(0.02 * i, 0.1, -5.6 + 0.02 * i, 70.0, i / 19.0));

  ReferenceClip clip = make_reference(traj, scene, res, quad, HeatmapConfig{}, 7);
  CHECK(clip.frames.size() == 20);
  CHECK(clip.flows.size() == 19);
  CHECK(clip.joint_count == scene.joint_count());
  CHECK(clip.frames[0].color.has_value());

  ReferenceClip clip2 = make_reference(traj, scene, res, quad, HeatmapConfig{}, 7);
  CHECK(clip2.frames[5].heatmaps.data.data == clip.frames[5].heatmaps.data.data);
  CHECK(clip2.flows[3].data.data == clip.flows[3].data.data);

  // constant trajectory with frozen time: all flows identically zero
  Trajectory constant;
  constant.push(0, camera_at(0, 0.1, -5.6, 70.0, 0.3));
  constant.push(1, camera_at(0, 0.1, -5.6, 70.0, 0.3));
  constant.push(2, camera_at(0, 0.1, -5.6, 70.0, 0.3));
  ReferenceClip still = make_reference(constant, scene, res, quad, HeatmapConfig{}, 7);
  for (const auto& o : still.flows)
    for (double v : o.data.data) CHECK(std::abs(v) < 1e-9);

  Trajectory tooshort;
  tooshort.push(0, camera_at(0, 0, -5.6));
  CHECK_THROWS_AS(make_reference(tooshort, scene, res, quad, HeatmapConfig{}, 7), ConfigError);
}

TEST_CASE("reference archive round trip and error contracts") {
  DynamicScene scene = build_preset("scene_a");
  Resolution res{32, 32};
  QuadratureConfig quad{32, 0.5, 13.0, true};
  Trajectory traj;
  for (int i = 0; i < 4; ++i) traj.push(i, camera_at(0.05 * i, 0.1, -5.6, 70.0, i / 3.0));
  ReferenceClip clip = make_reference(traj, scene, res, quad, HeatmapConfig{}, 3);

  std::string path = "/tmp/ct_ref_test.ctrf";
  save_reference(clip, path);
  ReferenceClip back = load_reference(path);
  CHECK(back.meta == "external-file");
  CHECK(back.frames.size() == clip.frames.size());
  CHECK(back.flows.size() == clip.flows.size());
  double max_err = 0.0;
  for (std::size_t i = 0; i < clip.frames.size(); ++i)
    for (std::size_t k = 0; k < clip.frames[i].heatmaps.data.data.size(); ++k)
      max_err = std::max(max_err, std::abs(back.frames[i].heatmaps.data.data[k] -
                                           clip.frames[i].heatmaps.data.data[k]));
  CHECK(max_err < 1e-6);  // float32 round-off

  {
    std::ifstream in(path, std::ios::binary);
    std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    bytes.resize(bytes.size() / 2);
    std::ofstream out("/tmp/ct_ref_trunc.ctrf", std::ios::binary);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  }
  CHECK_THROWS_WITH_AS(load_reference("/tmp/ct_ref_trunc.ctrf"), doctest::Contains("truncated"),
                       ConfigError);

  {
    std::ofstream out("/tmp/ct_ref_bad.ctrf", std::ios::binary);
    out.write("NOPE", 4);
  }
  CHECK_THROWS_WITH_AS(load_reference("/tmp/ct_ref_bad.ctrf"), doctest::Contains("magic"),
                       ConfigError);

  std::remove(path.c_str());
  std::remove("/tmp/ct_ref_trunc.ctrf");
  std::remove("/tmp/ct_ref_bad.ctrf");
}
