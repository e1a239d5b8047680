#include "ct/guidance.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "ct/rng.hpp"

namespace ct {

namespace {

// sum |a - b| over the last (channel) dimension into an (H, W) map
Tensor abs_diff_map(const Tensor& a, const Tensor& b) {
  require_same_shape("guidance_map", a, b);
  if (a.shape.size() != 3) throw ShapeError("guidance_map: expects (H,W,C) tensors");
  int h = a.shape[0], w = a.shape[1], c = a.shape[2];
  Tensor out = Tensor::zeros({h, w});
  for (long long p = 0; p < static_cast<long long>(h) * w; ++p) {
    double s = 0.0;
    for (int k = 0; k < c; ++k)
      s += std::abs(a.data[static_cast<std::size_t>(p) * c + k] -
                    b.data[static_cast<std::size_t>(p) * c + k]);
    out.data[static_cast<std::size_t>(p)] = s;
  }
  return out;
}

void minmax_normalize_inplace(Tensor* t) {
  auto [mn_it, mx_it] = std::minmax_element(t->data.begin(), t->data.end());
  double mn = *mn_it;
  double inv = 1.0 / (*mx_it - mn + 1e-12);
  for (auto& v : t->data) v = (v - mn) * inv;
}

}  // namespace

GuidanceMap guidance_map(const Tensor& heat_ref, const Tensor& heat_syn, const Tensor& flow_ref,
                         const Tensor& flow_syn) {
  Tensor hd = abs_diff_map(heat_ref, heat_syn);
  Tensor fd = abs_diff_map(flow_ref, flow_syn);
  require_same_shape("guidance_map", hd, fd);
  minmax_normalize_inplace(&hd);
  minmax_normalize_inplace(&fd);
  GuidanceMap g;
  g.res = {hd.shape[0], hd.shape[1]};
  g.data = std::move(hd);
  for (std::size_t i = 0; i < g.data.data.size(); ++i) g.data.data[i] += fd.data[i];
  return g;
}

GuidanceMap guidance_map_single(const Tensor& ref, const Tensor& syn) {
  Tensor d = abs_diff_map(ref, syn);
  minmax_normalize_inplace(&d);
  GuidanceMap g;
  g.res = {d.shape[0], d.shape[1]};
  g.data = std::move(d);
  return g;
}

std::vector<int> sample_pixels(const GuidanceMap& g, int n, std::uint64_t seed,
                               double floor_frac) {
  long long total = static_cast<long long>(g.res.h) * g.res.w;
  if (n < 1 || n > total)
    throw ConfigError("sample_pixels: n=" + std::to_string(n) + " outside [1, " +
                      std::to_string(total) + "]");
  double mean = g.data.sum() / static_cast<double>(total);
  double floor_w = floor_frac * mean;

  // weighted sampling without replacement via exponential keys: the pixel
  // with the largest log(u)/w per draw; zero-weight pixels only ever fill in
  // after every positive-weight pixel.
  Rng rng(derive_seed(seed, 0x9d1dULL));
  std::vector<std::pair<double, int>> keys(static_cast<std::size_t>(total));
  bool any_positive = false;
  for (long long p = 0; p < total; ++p) {
    double w = g.data.data[static_cast<std::size_t>(p)] + floor_w;
    double u = uniform01(rng);
    double key = w > 0.0 ? std::log(u) / w : -1e300 + static_cast<double>(total - p);
    any_positive = any_positive || w > 0.0;
    keys[static_cast<std::size_t>(p)] = {key, static_cast<int>(p)};
  }
  if (!any_positive) {
    // fully degenerate guidance: deterministic uniform fallback
    Rng rng2(derive_seed(seed, 0x9d1eULL));
    for (long long p = 0; p < total; ++p)
      keys[static_cast<std::size_t>(p)] = {uniform01(rng2), static_cast<int>(p)};
  }
  std::partial_sort(keys.begin(), keys.begin() + n, keys.end(),
                    [](const auto& a, const auto& b) { return a.first > b.first; });
  std::vector<int> out(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) out[static_cast<std::size_t>(i)] = keys[static_cast<std::size_t>(i)].second;
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<std::uint8_t> mask_from_pixels(Resolution res, const std::vector<int>& pixels) {
  std::vector<std::uint8_t> keep(static_cast<std::size_t>(res.h) * res.w, 0);
  for (int p : pixels) {
    if (p < 0 || p >= res.h * res.w) throw ConfigError("mask_from_pixels: pixel out of range");
    keep[static_cast<std::size_t>(p)] = 1;
  }
  return keep;
}

void apply_gradient_mask(Tape& tape, const std::vector<int>& image_nodes,
                         const std::vector<int>& sampled_pixels, Resolution res) {
  auto keep = mask_from_pixels(res, sampled_pixels);
  for (int id : image_nodes) tape.set_pixel_mask(id, keep);
}

void dump_guidance_pgm(const GuidanceMap& g, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ConfigError("dump_guidance_pgm: cannot open " + path);
  out << "P2\n" << g.res.w << " " << g.res.h << "\n255\n";
  for (int y = 0; y < g.res.h; ++y) {
    for (int x = 0; x < g.res.w; ++x) {
      int v = static_cast<int>(std::clamp(g.data.data[static_cast<std::size_t>(y) * g.res.w + x] / 2.0,
                                          0.0, 1.0) * 255.0 + 0.5);
      out << v << (x + 1 == g.res.w ? '\n' : ' ');
    }
  }
}

}  // namespace ct
