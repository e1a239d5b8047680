#include <cmath>
#include <cstdio>

#include "ct/camera.hpp"
#include "ct/dual.hpp"
#include "ct/rng.hpp"
#include "ct/se3.hpp"
#include "ct/trajectory.hpp"
#include "doctest.h"

using namespace ct;

namespace {

double mat_max_abs_diff(const Mat3d& a, const Mat3d& b) {
  double m = 0.0;
  for (int i = 0; i < 9; ++i) m = std::max(m, std::abs(a.m[i] - b.m[i]));
  return m;
}

double orthonormality_defect(const Mat3d& r) {
  Mat3d e = r.transposed() * r;
  Mat3d id = Mat3d::identity();
  return mat_max_abs_diff(e, id);
}

}  // namespace

TEST_CASE("se3_exp closed-form cases") {
  double zero[6] = {0, 0, 0, 0, 0, 0};
  SE3Pose p = se3_exp(zero);
  CHECK(mat_max_abs_diff(p.rotation, Mat3d::identity()) == 0.0);
  CHECK(norm(p.translation) == 0.0);

  double zrot[6] = {0, 0, M_PI / 2.0, 0, 0, 0};
  p = se3_exp(zrot);
  Mat3d expect;
  expect.m = {0, -1, 0, 1, 0, 0, 0, 0, 1};
  CHECK(mat_max_abs_diff(p.rotation, expect) < 1e-12);
  CHECK(norm(p.translation) < 1e-15);

  double trans[6] = {0, 0, 0, 1, 2, 3};
  p = se3_exp(trans);
  CHECK(mat_max_abs_diff(p.rotation, Mat3d::identity()) == 0.0);
  CHECK(p.translation.x == doctest::Approx(1.0));
  CHECK(p.translation.y == doctest::Approx(2.0));
  CHECK(p.translation.z == doctest::Approx(3.0));
}

TEST_CASE("se3_exp(-xi) inverts se3_exp(xi) on random inputs") {
  Rng rng(42);
  for (int trial = 0; trial < 20; ++trial) {
    double xi[6], nxi[6];
    for (int i = 0; i < 6; ++i) {
      xi[i] = uniform(rng, -1.5, 1.5);
      nxi[i] = -xi[i];
    }
    SE3Pose a = se3_exp(xi);
    SE3Pose b = se3_exp(nxi);
    SE3Pose c = compose(a, b);
    CHECK(mat_max_abs_diff(c.rotation, Mat3d::identity()) < 1e-9);
    CHECK(norm(c.translation) < 1e-9);
    CHECK(orthonormality_defect(a.rotation) < 1e-9);
  }
}

TEST_CASE("apply_increment") {
  double xi[6] = {0.3, -0.2, 0.1, 0.5, 0.2, -0.4};
  SE3Pose base = se3_exp(xi);

  double zero[6] = {0, 0, 0, 0, 0, 0};
  SE3Pose same = apply_increment(base, zero);
  CHECK(mat_max_abs_diff(same.rotation, base.rotation) == 0.0);
  CHECK(same.translation.x == base.translation.x);

  SE3Pose viaid = apply_increment(SE3Pose::identity(), xi);
  CHECK(mat_max_abs_diff(viaid.rotation, base.rotation) < 1e-15);

  // composition against explicit matrix product
  Rng rng(7);
  double xi2[6];
  for (auto& v : xi2) v = uniform(rng, -0.8, 0.8);
  SE3Pose inc = se3_exp(xi2);
  SE3Pose got = apply_increment(base, xi2);
  SE3Pose expect = compose(base, inc);
  CHECK(mat_max_abs_diff(got.rotation, expect.rotation) < 1e-12);
  CHECK(norm(got.translation - expect.translation) < 1e-12);
}

TEST_CASE("project: pinhole algebra") {
  Resolution res{64, 64};
  SE3Pose id;

  Vec2d c = project({0.0, 0.0, 2.0}, id, 100.0, res);
  CHECK(c.x == doctest::Approx(32.0));
  CHECK(c.y == doctest::Approx(32.0));

  Vec2d p1 = project({1.0, 0.0, 2.0}, id, 100.0, res);
  CHECK(p1.x == doctest::Approx(100.0 * 0.5 + 32.0));
  CHECK(p1.y == doctest::Approx(32.0));

  Vec2d p2 = project({1.0, 0.0, 2.0}, id, 200.0, res);
  CHECK(p2.x - 32.0 == doctest::Approx(2.0 * (p1.x - 32.0)));

  CHECK_THROWS_AS(project({0.0, 0.0, -1.0}, id, 100.0, res), BehindCameraError);
}

TEST_CASE("project: focal derivative matches FD") {
  Resolution res{64, 64};
  double xi[6] = {0.2, 0.1, -0.3, 0.4, -0.2, 0.6};
  SE3Pose pose = se3_exp(xi);
  Vec3d point{0.7, -0.4, 3.0};
  double focal = 85.0;

  Mat3<Dual<1>> R;
  for (int i = 0; i < 9; ++i) R.m[i] = Dual<1>(pose.rotation.m[i]);
  Vec3<Dual<1>> t{Dual<1>(pose.translation.x), Dual<1>(pose.translation.y),
                  Dual<1>(pose.translation.z)};
  Vec3<Dual<1>> w{Dual<1>(point.x), Dual<1>(point.y), Dual<1>(point.z)};
  auto px = project_t(w, R, t, Dual<1>::var(focal, 0), res);

  double h = 1e-6;
  Vec2d up = project(point, pose, focal + h, res);
  Vec2d dn = project(point, pose, focal - h, res);
  double fd_u = (up.x - dn.x) / (2 * h), fd_v = (up.y - dn.y) / (2 * h);
  CHECK(std::abs(px.u.d[0] - fd_u) / std::max(std::abs(fd_u), 1e-8) < 1e-6);
  CHECK(std::abs(px.v.d[0] - fd_v) / std::max(std::abs(fd_v), 1e-8) < 1e-6);
}

TEST_CASE("generate_ray: round trips and axis cases") {
  Resolution res{64, 64};
  SE3Pose id;
  Ray center = generate_ray({32.0, 32.0}, id, 70.0, res);
  CHECK(center.origin.x == 0.0);
  CHECK(center.origin.y == 0.0);
  CHECK(center.origin.z == 0.0);
  CHECK(center.direction.z == doctest::Approx(1.0));
  CHECK(std::abs(center.direction.x) < 1e-15);

  Rng rng(99);
  double xi[6] = {0.4, -0.1, 0.2, 1.0, -0.5, 0.3};
  SE3Pose pose = se3_exp(xi);
  double max_err = 0.0;
  for (int i = 0; i < 100; ++i) {
    Vec2d px{uniform(rng, 0.0, 64.0), uniform(rng, 0.0, 64.0)};
    Ray r = generate_ray(px, pose, 85.0, res);
    CHECK(std::abs(norm(r.direction) - 1.0) < 1e-12);
    Vec3d point = r.origin + r.direction * uniform(rng, 0.5, 8.0);
    Vec2d back = project(point, pose, 85.0, res);
    max_err = std::max(max_err, std::hypot(back.x - px.x, back.y - px.y));
  }
  CHECK(max_err < 1e-9);
}

TEST_CASE("interpolate_trajectory") {
  Trajectory traj;
  double z90[6] = {0, 0, M_PI / 2.0, 0, 0, 0};
  traj.push(0, CinematicParams::at(SE3Pose::identity(), 100.0, 0.0));
  traj.push(10, CinematicParams::at(se3_exp(z90), 200.0, 1.0));

  SUBCASE("exact at keyframes") {
    auto p0 = interpolate_trajectory(traj, 0.0);
    CHECK(p0.focal == 100.0);
    auto p1 = interpolate_trajectory(traj, 10.0);
    CHECK(p1.focal == 200.0);
    CHECK(p1.time == 1.0);
  }

  SUBCASE("linear focal and slerp rotation at the midpoint") {
    auto mid = interpolate_trajectory(traj, 5.0);
    CHECK(mid.focal == doctest::Approx(150.0));
    CHECK(mid.time == doctest::Approx(0.5));
    double z45[6] = {0, 0, M_PI / 4.0, 0, 0, 0};
    SE3Pose expect = se3_exp(z45);
    CHECK(mat_max_abs_diff(mid.pose().rotation, expect.rotation) < 1e-12);
  }

  SUBCASE("continuity") {
    auto a = interpolate_trajectory(traj, 3.0 - 1e-9);
    auto b = interpolate_trajectory(traj, 3.0 + 1e-9);
    CHECK(std::abs(a.focal - b.focal) < 1e-6);
    CHECK(mat_max_abs_diff(a.pose().rotation, b.pose().rotation) < 1e-6);
  }

  SUBCASE("out of range") {
    CHECK_THROWS_AS(interpolate_trajectory(traj, -0.5), ConfigError);
    CHECK_THROWS_AS(interpolate_trajectory(traj, 10.5), ConfigError);
  }
}

TEST_CASE("trajectory export round trip") {
  Trajectory traj;
  Rng rng(3);
  for (int i = 0; i < 5; ++i) {
    double xi[6];
    for (auto& v : xi) v = uniform(rng, -0.6, 0.6);
    traj.push(i * 2, CinematicParams::at(se3_exp(xi), uniform(rng, 50, 120), uniform01(rng)));
  }
  std::string path = "/tmp/ct_traj_test.txt";
  save_trajectory(traj, path);
  Trajectory back = load_trajectory(path);
  REQUIRE(back.size() == traj.size());
  for (std::size_t i = 0; i < traj.size(); ++i) {
    CHECK(back.keyframes[i].frame_index == traj.keyframes[i].frame_index);
    CHECK(mat_max_abs_diff(back.keyframes[i].params.pose().rotation,
                           traj.keyframes[i].params.pose().rotation) < 1e-15);
    CHECK(back.keyframes[i].params.focal == doctest::Approx(traj.keyframes[i].params.focal));
    CHECK(back.keyframes[i].params.time == doctest::Approx(traj.keyframes[i].params.time));
  }
  std::remove(path.c_str());
}

TEST_CASE("trajectory frame indices must strictly increase") {
  Trajectory traj;
  traj.push(0, CinematicParams::at(SE3Pose::identity(), 70.0, 0.0));
  CHECK_THROWS_AS(traj.push(0, CinematicParams::at(SE3Pose::identity(), 70.0, 0.1)), ConfigError);
}
