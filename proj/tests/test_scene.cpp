#include <cmath>
#include <cstdio>

#include "ct/dual.hpp"
#include "ct/rng.hpp"
#include "ct/scene.hpp"
#include "doctest.h"

using namespace ct;

TEST_CASE("presets are deterministic and differ as designed") {
  DynamicScene a1 = build_preset("scene_a");
  DynamicScene a2 = build_preset("scene_a");
  CHECK(scene_config_to_json(a1.cfg) == scene_config_to_json(a2.cfg));

  DynamicScene b = build_preset("scene_b");
  CHECK(a1.joint_count() == b.joint_count());
  CHECK(a1.cfg.actor.bones == b.cfg.actor.bones);
  CHECK(a1.cfg.blobs.size() != b.cfg.blobs.size());

  CHECK_THROWS_AS(build_preset("scene_z"), ConfigError);
}

TEST_CASE("build_scene rejects malformed configs naming the field") {
  SceneConfig cfg = preset_scene_config("scene_a");
  cfg.actor.bones[2] = {0, 99};
  CHECK_THROWS_WITH_AS(build_scene(cfg), doctest::Contains("bones"), ConfigError);

  SceneConfig cfg2 = preset_scene_config("scene_a");
  cfg2.actor.key_times = {0.0, 0.4, 0.4, 0.7, 1.0};
  CHECK_THROWS_WITH_AS(build_scene(cfg2), doctest::Contains("key_times"), ConfigError);

  SceneConfig cfg3 = preset_scene_config("scene_a");
  cfg3.blobs[0].color = {1.4, 0.0, 0.0};
  CHECK_THROWS_WITH_AS(build_scene(cfg3), doctest::Contains("color"), ConfigError);
}

TEST_CASE("scene config JSON round trip") {
  SceneConfig cfg = preset_scene_config("scene_b");
  std::string path = "/tmp/ct_scene_test.json";
  save_scene_config(cfg, path);
  SceneConfig back = load_scene_config(path);
  CHECK(scene_config_to_json(back) == scene_config_to_json(cfg));
  std::remove(path.c_str());

  CHECK_THROWS_AS(parse_scene_config_json("{ not json"), ConfigError);
  CHECK_THROWS_WITH_AS(parse_scene_config_json("{\"schema_version\": 1}"),
                       doctest::Contains("bounds"), ConfigError);
}

TEST_CASE("joints_3d keyframe interpolation") {
  DynamicScene scene = build_preset("scene_a");
  const auto& actor = scene.cfg.actor;

  SUBCASE("exact at stored samples") {
    for (std::size_t t = 0; t < actor.key_times.size(); ++t) {
      auto j = joints_3d(scene, actor.key_times[t]);
      for (int k = 0; k < actor.joint_count; ++k) {
        CHECK(j[static_cast<std::size_t>(k)].x == actor.key_joints[t][static_cast<std::size_t>(k)].x);
        CHECK(j[static_cast<std::size_t>(k)].y == actor.key_joints[t][static_cast<std::size_t>(k)].y);
      }
    }
  }

  SUBCASE("linear between samples") {
    double m = 0.5 * (actor.key_times[0] + actor.key_times[1]);
    auto j = joints_3d(scene, m);
    for (int k = 0; k < actor.joint_count; ++k) {
      Vec3d expect = 0.5 * (actor.key_joints[0][static_cast<std::size_t>(k)] +
                            actor.key_joints[1][static_cast<std::size_t>(k)]);
      CHECK(j[static_cast<std::size_t>(k)].x == doctest::Approx(expect.x));
      CHECK(j[static_cast<std::size_t>(k)].y == doctest::Approx(expect.y));
      CHECK(j[static_cast<std::size_t>(k)].z == doctest::Approx(expect.z));
    }
  }

  SUBCASE("time derivative matches FD at interior points") {
    double m = 0.37;  // inside the (0.25, 0.5) segment
    auto jd = joints_at(actor, Dual<1>::var(m, 0));
    double h = 1e-6;
    auto jp = joints_3d(scene, m + h);
    auto jm = joints_3d(scene, m - h);
    for (int k = 0; k < actor.joint_count; ++k) {
      double fd = (jp[static_cast<std::size_t>(k)].x - jm[static_cast<std::size_t>(k)].x) / (2 * h);
      CHECK(std::abs(jd[static_cast<std::size_t>(k)].x.d[0] - fd) <=
            1e-6 * std::max(1.0, std::abs(fd)));
    }
  }
}

TEST_CASE("sample_density") {
  DynamicScene scene = build_preset("scene_a");

  SUBCASE("far outside bounds") {
    CHECK(sample_density(scene, {50.0, 60.0, -70.0}, 0.3) <= 1e-12);
  }

  SUBCASE("at a blob center it is at least the amplitude") {
    const auto& b = scene.cfg.blobs[0];
    CHECK(sample_density(scene, b.center, 0.0) >= b.amplitude);
  }

  SUBCASE("capsule density equals the hand-evaluated gaussian of segment distance") {
    auto joints = joints_3d(scene, 0.0);
    const auto& actor = scene.cfg.actor;
    std::size_t bi = 4;  // left upper arm
    auto [ja, jb] = actor.bones[bi];
    Vec3d mid = 0.5 * (joints[static_cast<std::size_t>(ja)] + joints[static_cast<std::size_t>(jb)]);
    Vec3d probe = mid + Vec3d{0.0, 0.0, 0.09};

    Vec3d axis = joints[static_cast<std::size_t>(jb)] - joints[static_cast<std::size_t>(ja)];
    Vec3d rel = probe - joints[static_cast<std::size_t>(ja)];
    double t = dot(rel, axis) / dot(axis, axis);
    Vec3d closest = joints[static_cast<std::size_t>(ja)] + axis * t;
    double d2 = squared_norm(probe - closest);
    double expect = actor.bone_amplitude[bi] *
                    std::exp(-d2 / (2.0 * actor.bone_radius[bi] * actor.bone_radius[bi]));

    double got = capsule_density(actor.bone_amplitude[bi], actor.bone_radius[bi],
                                 joints[static_cast<std::size_t>(ja)],
                                 joints[static_cast<std::size_t>(jb)], probe);
    CHECK(std::abs(got - expect) <= 1e-12 * std::max(1.0, expect));
  }
}

TEST_CASE("sample_color") {
  DynamicScene scene = build_preset("scene_a");

  SUBCASE("single-primitive region returns that color") {
    const auto& b = scene.cfg.blobs[0];
    Vec3d c = sample_color(scene, b.center, 0.0);
    CHECK(c.x == doctest::Approx(b.color.x).epsilon(1e-6));
    CHECK(c.y == doctest::Approx(b.color.y).epsilon(1e-6));
  }

  SUBCASE("empty region returns the background constant") {
    Vec3d c = sample_color(scene, {40.0, 40.0, -40.0}, 0.5);
    CHECK(c.x == doctest::Approx(scene.cfg.background_color.x));
    CHECK(c.y == doctest::Approx(scene.cfg.background_color.y));
    CHECK(c.z == doctest::Approx(scene.cfg.background_color.z));
  }

  SUBCASE("two equal overlapping primitives mix evenly") {
    SceneConfig cfg = preset_scene_config("scene_a");
    cfg.blobs.clear();
    cfg.slabs.clear();
    cfg.blobs.push_back({{0.0, 1.0, 1.0}, {0.4, 0.4, 0.4}, 10.0, {1.0, 0.0, 0.0}});
    cfg.blobs.push_back({{0.0, 1.0, 1.0}, {0.4, 0.4, 0.4}, 10.0, {0.0, 0.0, 1.0}});
    for (auto& amp : cfg.actor.bone_amplitude) amp = 0.0;
    DynamicScene s = build_scene(cfg);
    Vec3d c = sample_color(s, {0.0, 1.0, 1.0}, 0.0);
    CHECK(c.x == doctest::Approx(0.5).epsilon(1e-9));
    CHECK(c.y == doctest::Approx(0.0).epsilon(1e-9));
    CHECK(c.z == doctest::Approx(0.5).epsilon(1e-9));
  }
}

TEST_CASE("density field is C1: dual gradients match FD at random interior points") {
  DynamicScene scene = build_preset("scene_a");
  Rng rng(2024);
  int checked = 0;
  for (int trial = 0; trial < 60 && checked < 12; ++trial) {
    Vec3d x{uniform(rng, -1.0, 1.0), uniform(rng, -1.2, 1.2), uniform(rng, -0.5, 0.7)};
    double m = uniform(rng, 0.26, 0.49);  // interior of one keyframe segment
    double v = sample_density(scene, x, m);
    if (v < 1e-4) continue;  // probe only where there is density
    ++checked;

    auto joints = joints_at(scene.cfg.actor, Dual<4>::var(m, 3));
    Vec3<Dual<4>> xd{Dual<4>::var(x.x, 0), Dual<4>::var(x.y, 1), Dual<4>::var(x.z, 2)};
    Dual<4> dv = field_sample_at(scene, joints, xd).density;

    double h = 1e-5;
    double fds[4];
    fds[0] = (sample_density(scene, {x.x + h, x.y, x.z}, m) -
              sample_density(scene, {x.x - h, x.y, x.z}, m)) / (2 * h);
    fds[1] = (sample_density(scene, {x.x, x.y + h, x.z}, m) -
              sample_density(scene, {x.x, x.y - h, x.z}, m)) / (2 * h);
    fds[2] = (sample_density(scene, {x.x, x.y, x.z + h}, m) -
              sample_density(scene, {x.x, x.y, x.z - h}, m)) / (2 * h);
    fds[3] = (sample_density(scene, x, m + h) - sample_density(scene, x, m - h)) / (2 * h);
    for (int k = 0; k < 4; ++k) {
      double scale = std::max({std::abs(fds[k]), std::abs(v), 1.0});
      CHECK(std::abs(dv.d[k] - fds[k]) / scale < 1e-5);
    }
  }
  CHECK(checked >= 8);
}

TEST_CASE("actor occupies a nonzero-density region for all m") {
  for (const char* name : {"scene_a", "scene_b"}) {
    DynamicScene scene = build_preset(name);
    for (double m = 0.0; m <= 1.0; m += 0.05) {
      auto joints = joints_3d(scene, m);
      double best = 0.0;
      for (const auto& j : joints) best = std::max(best, actor_density_at(scene, joints, j));
      CHECK(best > 1.0);
    }
  }
}
