#include <cmath>

#include "ct/renderer.hpp"
#include "ct/rng.hpp"
#include "doctest.h"

using namespace ct;

namespace {

// Minimal valid scene with everything switched off.
SceneConfig empty_scene_config() {
  SceneConfig cfg;
  cfg.name = "empty";
  cfg.bounds_min = {-5, -5, -5};
  cfg.bounds_max = {5, 5, 5};
  cfg.background_color = {0.2, 0.4, 0.6};
  cfg.actor.joint_count = 1;
  cfg.actor.key_times = {0.0, 1.0};
  cfg.actor.key_joints = {{{0, 0, 0}}, {{0, 0, 0}}};
  cfg.actor.bones = {{0, 0}};
  cfg.actor.bone_radius = {0.1};
  cfg.actor.bone_amplitude = {0.0};
  cfg.actor.bone_color = {{0.5, 0.5, 0.5}};
  return cfg;
}

CinematicParams default_camera() {
  SE3Pose pose;
  pose.translation = {0.0, 0.0, -5.5};
  return CinematicParams::at(pose, 70.0, 0.3);
}

double frame_max_abs_diff(const RenderedFrame& a, const RenderedFrame& b, int channels = 5) {
  double m = 0.0;
  for (int y = 0; y < a.res.h; ++y)
    for (int x = 0; x < a.res.w; ++x)
      for (int c = 0; c < channels; ++c)
        m = std::max(m, std::abs(a.data.data[(std::size_t(y) * a.res.w + x) * 5 + c] -
                                 b.data.data[(std::size_t(y) * b.res.w + x) * 5 + c]));
  return m;
}

}  // namespace

TEST_CASE("render: empty scene gives background and zero opacity") {
  DynamicScene scene = build_scene(empty_scene_config());
  Resolution res{16, 16};
  QuadratureConfig quad{32, 0.5, 10.0, true};
  RenderedFrame f = render(default_camera(), scene, res, quad, 7);
  for (int y = 0; y < res.h; ++y)
    for (int x = 0; x < res.w; ++x) {
      CHECK(f.color(y, x, 0) == doctest::Approx(0.2));
      CHECK(f.color(y, x, 2) == doctest::Approx(0.6));
      CHECK(f.opacity(y, x) == 0.0);
      CHECK(f.depth(y, x) == quad.far);  // sentinel
    }
}

TEST_CASE("render: opaque fronto-parallel slab reports its depth") {
  SceneConfig cfg = empty_scene_config();
  cfg.slabs.push_back({{-4.9, -4.9, 2.0}, {4.9, 4.9, 2.6}, 0.05, 80.0, {0.8, 0.1, 0.1}});
  DynamicScene scene = build_scene(cfg);
  Resolution res{16, 16};
  QuadratureConfig quad{64, 0.5, 10.0, true};
  CinematicParams cam = CinematicParams::at(SE3Pose::identity(), 70.0, 0.0);
  RenderedFrame f = render(cam, scene, res, quad, 3);
  double spacing = (quad.far - quad.near) / quad.n_samples;
  // slab face reached at z ~ 2.0 on axial rays, slightly longer off-axis
  for (int y = 4; y < 12; ++y)
    for (int x = 4; x < 12; ++x) {
      CHECK(f.opacity(y, x) > 0.999);
      CHECK(f.depth(y, x) > 1.95 - spacing);
      CHECK(f.depth(y, x) < 2.1 + spacing);
    }
}

TEST_CASE("render: 64-sample quadrature tracks a dense-sample oracle") {
  SceneConfig cfg = empty_scene_config();
  cfg.blobs.push_back({{0.0, 0.0, 0.5}, {0.5, 0.5, 0.5}, 12.0, {0.9, 0.6, 0.1}});
  DynamicScene scene = build_scene(cfg);
  Resolution res{24, 24};
  CinematicParams cam = default_camera();

  QuadratureConfig oracle_quad{4096, 0.5, 10.0, false};
  RenderedFrame oracle = render(cam, scene, res, oracle_quad, 0);

  QuadratureConfig quad{64, 0.5, 10.0, false};
  RenderedFrame f = render(cam, scene, res, quad, 0);
  CHECK(frame_max_abs_diff(f, oracle, 3) <= 5e-3);

  // refinement decreases the error against the dense oracle
  double prev = 1e9;
  for (int n : {16, 32, 64, 128}) {
    QuadratureConfig q{n, 0.5, 10.0, false};
    RenderedFrame fn = render(cam, scene, res, q, 0);
    double err = frame_max_abs_diff(fn, oracle, 3);
    CHECK(err <= prev * 1.05 + 1e-9);
    prev = err;
  }
}

TEST_CASE("render: deterministic given identical seeds") {
  DynamicScene scene = build_preset("scene_a");
  Resolution res{32, 32};
  QuadratureConfig quad{32, 0.5, 13.0, true};
  RenderedFrame a = render(default_camera(), scene, res, quad, 42);
  RenderedFrame b = render(default_camera(), scene, res, quad, 42);
  CHECK(a.data.data == b.data.data);
  RenderedFrame c = render(default_camera(), scene, res, quad, 43);
  CHECK(frame_max_abs_diff(a, c) > 0.0);
}

TEST_CASE("render rejects invalid quadrature") {
  DynamicScene scene = build_scene(empty_scene_config());
  Resolution res{8, 8};
  CHECK_THROWS_AS(render(default_camera(), scene, res, QuadratureConfig{32, 5.0, 3.0, true}, 0),
                  ConfigError);
  CHECK_THROWS_AS(render(default_camera(), scene, res, QuadratureConfig{1, 0.5, 3.0, true}, 0),
                  ConfigError);
  CinematicParams bad = default_camera();
  bad.focal = -5.0;
  CHECK_THROWS_AS(render(bad, scene, res, QuadratureConfig{32, 0.5, 3.0, true}, 0), ConfigError);
}

TEST_CASE("render_window") {
  DynamicScene scene = build_preset("scene_a");
  Resolution res{24, 24};
  QuadratureConfig quad{32, 0.5, 13.0, true};
  auto jitter = SampleJitter::make(res, quad, 11);
  CinematicParams cam = default_camera();

  SUBCASE("identical params give identical frames") {
    auto [a, b] = render_window(cam, cam, scene, res, quad, *jitter);
    CHECK(a.data.data == b.data.data);
  }

  SUBCASE("differing m on a static scene gives identical frames") {
    SceneConfig cfg = empty_scene_config();
    cfg.blobs.push_back({{0.0, 0.0, 0.5}, {0.5, 0.5, 0.5}, 12.0, {0.9, 0.6, 0.1}});
    DynamicScene stat = build_scene(cfg);
    CinematicParams c2 = cam;
    c2.time = 0.9;
    auto [a, b] = render_window(cam, c2, stat, res, quad, *jitter);
    CHECK(a.data.data == b.data.data);
  }

  SUBCASE("differing focal gives different frames") {
    CinematicParams c2 = cam;
    c2.focal = 95.0;
    auto [a, b] = render_window(cam, c2, scene, res, quad, *jitter);
    CHECK(frame_max_abs_diff(a, b) > 1e-3);
  }
}

TEST_CASE("render node: gradient of mean intensity matches FD for all 8 params") {
  DynamicScene scene = build_preset("scene_a");
  Resolution res{32, 32};
  QuadratureConfig quad{32, 0.5, 13.0, true};
  auto jitter = SampleJitter::make(res, quad, 5);

  SE3Pose base;
  base.translation = {0.3, 0.15, -5.2};
  double xi0[6] = {0.02, -0.03, 0.01, 0.0, 0.0, 0.0};
  base = apply_increment(base, xi0);

  Tensor p8 = Tensor::zeros({8});
  p8.data = {0.01, -0.005, 0.004, 0.05, -0.04, 0.06, 72.0, 0.37};

  const DynamicScene* sc = &scene;
  auto builder = [sc, base, res, quad, jitter](Tape& t, const std::vector<int>& ids) {
    int frame = render_node(t, ids[0], base, *sc, res, quad, jitter);
    int rgb = t.select_channels(frame, {0, 1, 2});
    return t.mean(rgb);
  };
  double err = check_gradient(builder, {p8}, 1e-4);
  CHECK(err < 1e-3);
}
