#include <cmath>
#include <set>

#include "ct/guidance.hpp"
#include "ct/renderer.hpp"
#include "ct/rng.hpp"
#include "doctest.h"

using namespace ct;

namespace {

Tensor random_hwc(int h, int w, int c, Rng& rng, double lo = 0.0, double hi = 1.0) {
  Tensor t = Tensor::zeros({h, w, c});
  for (auto& v : t.data) v = uniform(rng, lo, hi);
  return t;
}

}  // namespace

TEST_CASE("guidance_map") {
  Rng rng(8);
  Tensor h_ref = random_hwc(8, 8, 3, rng);
  Tensor o_ref = random_hwc(8, 8, 2, rng, -1.0, 1.0);

  SUBCASE("identical inputs give an all-zero map") {
    GuidanceMap g = guidance_map(h_ref, h_ref, o_ref, o_ref);
    for (double v : g.data.data) CHECK(v == 0.0);
  }

  SUBCASE("single differing flow pixel dominates its addend") {
    Tensor o_syn = o_ref;
    o_syn.data[(3 * 8 + 5) * 2] += 2.0;
    GuidanceMap g = guidance_map(h_ref, h_ref, o_ref, o_syn);
    CHECK(g.data.data[3 * 8 + 5] == doctest::Approx(1.0));
    for (int p = 0; p < 64; ++p)
      if (p != 3 * 8 + 5) CHECK(g.data.data[static_cast<std::size_t>(p)] == doctest::Approx(0.0));
  }

  SUBCASE("values stay in [0, 2] on random inputs") {
    Tensor h_syn = random_hwc(8, 8, 3, rng);
    Tensor o_syn = random_hwc(8, 8, 2, rng, -1.0, 1.0);
    GuidanceMap g = guidance_map(h_ref, h_syn, o_ref, o_syn);
    for (double v : g.data.data) {
      CHECK(v >= 0.0);
      CHECK(v <= 2.0);
    }
  }
}

TEST_CASE("sample_pixels") {
  GuidanceMap g;
  g.res = {8, 8};
  g.data = Tensor::zeros({8, 8});

  SUBCASE("n = H*W returns every pixel") {
    auto s = sample_pixels(g, 64, 1);
    CHECK(s.size() == 64);
    for (int i = 0; i < 64; ++i) CHECK(s[static_cast<std::size_t>(i)] == i);
  }

  SUBCASE("single spike with zero floor always wins at n = 1") {
    g.data.data[37] = 3.0;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      auto s = sample_pixels(g, 1, seed, 0.0);
      REQUIRE(s.size() == 1);
      CHECK(s[0] == 37);
    }
  }

  SUBCASE("no duplicates, determinism under a fixed seed") {
    Rng rng(5);
    for (auto& v : g.data.data) v = uniform(rng, 0.0, 1.0);
    auto s1 = sample_pixels(g, 20, 99);
    auto s2 = sample_pixels(g, 20, 99);
    CHECK(s1 == s2);
    std::set<int> uniq(s1.begin(), s1.end());
    CHECK(uniq.size() == s1.size());
    auto s3 = sample_pixels(g, 20, 100);
    CHECK(s1 != s3);
  }

  SUBCASE("n outside range throws") {
    CHECK_THROWS_AS(sample_pixels(g, 0, 1), ConfigError);
    CHECK_THROWS_AS(sample_pixels(g, 65, 1), ConfigError);
  }

  SUBCASE("empirical single-draw frequencies track the stated density") {
    GuidanceMap small;
    small.res = {2, 2};
    small.data = Tensor::from({0.1, 0.4, 0.2, 0.3});
    // draw distribution with floor: w_i = g_i + 0.05 * mean(g)
    double mean = small.data.sum() / 4.0;
    double wsum = small.data.sum() + 4 * 0.05 * mean;
    int counts[4] = {0, 0, 0, 0};
    const int draws = 100000;
    for (int d = 0; d < draws; ++d) {
      auto s = sample_pixels(small, 1, 1000 + static_cast<std::uint64_t>(d));
      counts[s[0]]++;
    }
    for (int i = 0; i < 4; ++i) {
      double p = (small.data.data[static_cast<std::size_t>(i)] + 0.05 * mean) / wsum;
      double sigma = std::sqrt(p * (1 - p) * draws);
      CHECK(std::abs(counts[i] - p * draws) <= 3.0 * sigma);
    }
  }
}

TEST_CASE("apply_gradient_mask on the render node") {
  DynamicScene scene = build_preset("scene_a");
  Resolution res{16, 16};
  QuadratureConfig quad{16, 0.5, 13.0, true};
  auto jitter = SampleJitter::make(res, quad, 2);
  SE3Pose base;
  base.translation = {0.0, 0.1, -5.5};
  Tensor p8 = Tensor::zeros({8});
  p8.data = {0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 70.0, 0.3};

  Rng rng(17);
  Tensor weights = Tensor::zeros({res.h, res.w, 5});
  for (auto& v : weights.data) v = uniform(rng, -1.0, 1.0);

  auto build = [&](Tape& t, int* frame_out) {
    int pid = t.leaf(p8);
    int frame = render_node(t, pid, base, scene, res, quad, jitter);
    *frame_out = frame;
    int loss = t.sum(t.mul(frame, t.constant(weights)));
    return std::pair<int, int>(pid, loss);
  };

  // full mask = unmasked gradient
  Tape t1;
  int fr1;
  auto [pid1, loss1] = build(t1, &fr1);
  auto g_full = t1.grad(loss1, {pid1});
  std::vector<int> all_px(256);
  for (int i = 0; i < 256; ++i) all_px[static_cast<std::size_t>(i)] = i;
  apply_gradient_mask(t1, {fr1}, all_px, res);
  auto g_all = t1.grad(loss1, {pid1});
  for (int k = 0; k < 8; ++k)
    CHECK(g_all[0][static_cast<std::size_t>(k)] ==
          doctest::Approx(g_full[0][static_cast<std::size_t>(k)]).epsilon(1e-12));

  // empty mask = zero gradient
  apply_gradient_mask(t1, {fr1}, {}, res);
  auto g_none = t1.grad(loss1, {pid1});
  for (int k = 0; k < 8; ++k) CHECK(g_none[0][static_cast<std::size_t>(k)] == 0.0);

  // linear loss: masked gradient equals the sum of per-pixel contributions
  std::vector<int> sampled = {3, 40, 77, 130, 200, 255};
  apply_gradient_mask(t1, {fr1}, sampled, res);
  auto g_mask = t1.grad(loss1, {pid1});

  std::vector<double> expect(8, 0.0);
  for (int p : sampled) {
    Tape tp;
    int pid;
    int frame = render_node(tp, pid = tp.leaf(p8), base, scene, res, quad, jitter);
    // restrict the same linear loss to pixel p's entries
    std::vector<int> idx;
    std::vector<double> wsel;
    for (int c = 0; c < 5; ++c) {
      idx.push_back(p * 5 + c);
      wsel.push_back(weights.data[static_cast<std::size_t>(p) * 5 + c]);
    }
    int gathered = tp.gather(frame, idx);
    int loss_p = tp.sum(tp.mul(gathered, tp.constant(Tensor({5}, wsel))));
    auto gp = tp.grad(loss_p, {pid});
    for (int k = 0; k < 8; ++k) expect[static_cast<std::size_t>(k)] += gp[0][static_cast<std::size_t>(k)];
  }
  for (int k = 0; k < 8; ++k)
    CHECK(g_mask[0][static_cast<std::size_t>(k)] ==
          doctest::Approx(expect[static_cast<std::size_t>(k)]).epsilon(1e-9));

  // loss value itself is mask-invariant
  CHECK(t1.value(loss1)[0] == doctest::Approx(t1.value(loss1)[0]));
}
