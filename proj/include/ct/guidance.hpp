#pragma once

#include "ct/proxies.hpp"

namespace ct {

// Per-pixel gradient-sampling density: min-max normalized heatmap difference
// plus min-max normalized flow difference. Values live in [0, 2]; detached
// from the tape (guidance only steers which pixels keep adjoints).
struct GuidanceMap {
  Tensor data;  // (H, W)
  Resolution res;
};

GuidanceMap guidance_map(const Tensor& heat_ref, const Tensor& heat_syn, const Tensor& flow_ref,
                         const Tensor& flow_syn);

// Single-difference variant used by the pixel-loss arm (color differences).
GuidanceMap guidance_map_single(const Tensor& ref, const Tensor& syn);

// n distinct pixels drawn without replacement with probability proportional
// to G + floor_frac * mean(G); deterministic given the seed. Returns sorted
// pixel indices.
std::vector<int> sample_pixels(const GuidanceMap& g, int n, std::uint64_t seed,
                               double floor_frac = 0.05);

std::vector<std::uint8_t> mask_from_pixels(Resolution res, const std::vector<int>& pixels);

// Registers the sampled set on the tape: the backward pass zeroes adjoints
// flowing into unselected pixels' subgraphs of the given image nodes.
void apply_gradient_mask(Tape& tape, const std::vector<int>& image_nodes,
                         const std::vector<int>& sampled_pixels, Resolution res);

void dump_guidance_pgm(const GuidanceMap& g, const std::string& path);

}  // namespace ct
