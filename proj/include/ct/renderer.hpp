#pragma once

#include <memory>
#include <string>

#include "ct/camera.hpp"
#include "ct/rng.hpp"
#include "ct/scene.hpp"
#include "ct/tape.hpp"

namespace ct {

struct QuadratureConfig {
  int n_samples = 64;
  double near = 0.5;
  double far = 13.0;
  bool jitter = true;  // stratified jitter; false = midpoint rule (oracles)
};

// Per-run stratified sample offsets, fixed once per optimization run so FD
// perturbations see identical sample positions.
struct SampleJitter {
  int h = 0, w = 0, n = 0;
  std::vector<double> u;  // (h*w*n), in [0,1); 0.5 everywhere when disabled

  static std::shared_ptr<const SampleJitter> make(Resolution res, const QuadratureConfig& quad,
                                                  std::uint64_t seed);
  double at(int pixel, int sample) const {
    return u[static_cast<std::size_t>(pixel) * n + sample];
  }
};

// Color, expected-termination depth and opacity; channel-last packing
// [r, g, b, depth, opacity]. Where opacity < 1e-6 the depth holds the
// far-plane sentinel.
struct RenderedFrame {
  Tensor data;  // (H, W, 5)
  Resolution res;
  double far_plane = 0.0;

  double color(int y, int x, int c) const {
    return data.data[(static_cast<std::size_t>(y) * res.w + x) * 5 + c];
  }
  double depth(int y, int x) const {
    return data.data[(static_cast<std::size_t>(y) * res.w + x) * 5 + 3];
  }
  double opacity(int y, int x) const {
    return data.data[(static_cast<std::size_t>(y) * res.w + x) * 5 + 4];
  }
};

// Emission-absorption quadrature along per-pixel rays; value-only evaluation.
RenderedFrame render(const CinematicParams& params, const DynamicScene& scene, Resolution res,
                     const QuadratureConfig& quad, const SampleJitter& jitter);

inline RenderedFrame render(const CinematicParams& params, const DynamicScene& scene,
                            Resolution res, const QuadratureConfig& quad,
                            std::uint64_t jitter_seed = 0) {
  auto jit = SampleJitter::make(res, quad, jitter_seed);
  return render(params, scene, res, quad, *jit);
}

// Tape node producing the packed (H,W,5) frame image, differentiable w.r.t.
// the 8-vector parameter leaf [xi(6), focal, time] about `base`. Per-pixel
// Jacobians are evaluated lazily in the backward pass, only for pixels whose
// adjoints survive the gradient mask.
int render_node(Tape& tape, int params8, const SE3Pose& base, const DynamicScene& scene,
                Resolution res, const QuadratureConfig& quad,
                std::shared_ptr<const SampleJitter> jitter);

// Two independent renders sharing the tape for joint backward.
std::pair<int, int> render_window_nodes(Tape& tape, int params8_a, int params8_b,
                                        const SE3Pose& base_a, const SE3Pose& base_b,
                                        const DynamicScene& scene, Resolution res,
                                        const QuadratureConfig& quad,
                                        std::shared_ptr<const SampleJitter> jitter);

std::pair<RenderedFrame, RenderedFrame> render_window(const CinematicParams& a,
                                                      const CinematicParams& b,
                                                      const DynamicScene& scene, Resolution res,
                                                      const QuadratureConfig& quad,
                                                      const SampleJitter& jitter);

RenderedFrame frame_from_tensor(const Tensor& t, Resolution res, double far_plane);
Tensor pack_params8(const CinematicParams& p);

// Frame dumps: binary PPM (P6) for color, text float grid for depth.
void dump_ppm(const RenderedFrame& frame, const std::string& path);
void dump_depth_grid(const RenderedFrame& frame, const std::string& path);

}  // namespace ct
