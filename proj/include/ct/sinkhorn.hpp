#pragma once

#include <memory>
#include <vector>

#include "ct/camera.hpp"
#include "ct/tensor.hpp"

namespace ct {

// Entropic OT configuration. Costs are Euclidean grid-cell distances
// normalized by the grid diagonal, so epsilon is in units of the squared
// normalized diagonal (= 1).
struct OTConfig {
  int grid = 32;             // downsample target per side (average pooling)
  double epsilon = 0.05;     // entropic regularization
  int iters = 50;            // fixed Sinkhorn iterations
  double mass_floor = 1e-6;  // uniform floor added to near-empty channels
  // Implementation knobs: masses below support_rel * max are tapered to zero
  // (C1 soft truncation) and dropped from the support; degenerate inputs are
  // capped at max_support cells.
  double support_rel = 1e-6;
  int max_support = 320;
};

// One channel pooled, floored, normalized and truncated to its support.
// Keeps every intermediate needed to chain gradients back to the full-res
// channel.
struct PooledChannel {
  int grid = 0;
  int pool = 1;               // pooling factor per side (res / grid)
  int src_h = 0, src_w = 0;
  std::vector<int> support;   // kept cell indices (row-major on grid)
  std::vector<double> mass;   // normalized masses on the support (sum 1)
  // backward chain data
  std::vector<double> u_full;      // normalized masses before truncation (grid^2)
  std::vector<double> taper;       // soft truncation weight per support cell
  std::vector<double> taper_grad;  // d taper / d u at each support cell
  double q_sum = 0.0;              // sum after the floor branch
  bool floored = false;
  double kept_sum = 0.0;           // sum of tapered masses before renormalize
};

PooledChannel make_pooled_channel(const double* chan, int h, int w, const OTConfig& cfg);

// Accumulates d(loss)/d(channel) into a full-res buffer given the adjoint of
// the support masses.
void pooled_channel_backward(const PooledChannel& pc, const std::vector<double>& dmass,
                             double* dchan);

struct KernelEntry;  // cached cost/kernel matrices, internal

// Unrolled log-domain Sinkhorn between two pooled channels. The run stores
// per-iteration potentials so the exact adjoint of the unrolled iteration can
// be replayed backwards.
struct SinkhornRun {
  double value = 0.0;  // transport cost <P, C>
  // internal state for backward
  int n = 0, m = 0, iters = 0;
  double epsilon = 0.0;
  bool swapped = false;  // canonical argument order used internally
  std::shared_ptr<const KernelEntry> kernel;
  std::vector<double> f_hist;  // iters * n
  std::vector<double> g_hist;  // (iters+1) * m, g_hist[0] = 0
  std::vector<double> plan;    // n*m, final P
  std::vector<double> log_a, log_b;
};

// Computes <P, C>. Arguments are canonically ordered internally so the result
// is exactly symmetric under swapping A and B.
SinkhornRun sinkhorn_run(const PooledChannel& a, const PooledChannel& b, const OTConfig& cfg);

// Adjoints of the support masses of both channels for a scalar adjoint dW.
void sinkhorn_backward(const SinkhornRun& run, double dW, std::vector<double>* da,
                       std::vector<double>* db);

// Convenience value-only entry point on raw channels (used by landscape
// probes and tests).
double sinkhorn_wdist_value(const Tensor& a, const Tensor& b, Resolution res, const OTConfig& cfg);

}  // namespace ct
