#pragma once

#include "ct/proxies.hpp"
#include "ct/sinkhorn.hpp"

namespace ct {

struct LossWeights {
  double alpha = 1.0;  // pose weight
  double beta = 1.0;   // flow weight
  double gamma = 0.5;  // gradnorm asymmetry exponent
};

// ---- entropic w-distance between two single-channel images (tape) ----
// a and b are tape tensors with res.h * res.w entries. Differentiable in
// both; exactly symmetric in its arguments.
int sinkhorn_wdist_node(Tape& tape, int a, int b, Resolution res, const OTConfig& cfg);

// Reference-side data computed once per reference frame and reused across
// optimization iterations.
struct PoseLossRef {
  std::vector<PooledChannel> pooled;  // per joint channel
  Tensor s_matrix;                    // (J, J) inter-joint w-distances
  int joints = 0;
  Resolution res;
};

PoseLossRef make_pose_loss_ref(const HeatmapStack& ref, const OTConfig& cfg);

// J x J matrix of pairwise w-distances between the joint channels of one
// stack; symmetric with a zero diagonal, each unordered pair computed once.
Tensor inter_joint_matrix(const HeatmapStack& stack, const OTConfig& cfg);
int inter_joint_matrix_node(Tape& tape, int syn_stack, Resolution res, int joints,
                            const OTConfig& cfg);

// Sum_j d_w(ref_j, syn_j) + || S(ref) - S(syn) ||_F. Differentiable w.r.t.
// the synthesized stack only; the reference is detached.
int pose_loss(Tape& tape, const PoseLossRef& ref, int syn_stack, const OTConfig& cfg);
double pose_loss_value(const HeatmapStack& ref, const HeatmapStack& syn, const OTConfig& cfg);
double pose_loss_value(const PoseLossRef& ref, const HeatmapStack& syn, const OTConfig& cfg);

// Mean endpoint distance between flow fields.
int flow_loss(Tape& tape, const FlowField& ref, int syn_flow);
double flow_loss_value(const FlowField& ref, const FlowField& syn);

// Mean squared color error; syn_frame is a packed (H,W,5) render node.
int photometric_loss(Tape& tape, const Tensor& ref_color, int syn_frame);
double photometric_loss_value(const Tensor& ref_color, const Tensor& syn_color);

// alpha * mean(pose terms) + beta * mean(flow terms).
int total_loss(Tape& tape, const std::vector<int>& pose_terms, const std::vector<int>& flow_terms,
               const LossWeights& weights);

// Simplified gradient-norm balancing: each weight moves toward
// mean(w*G) * rate^gamma / G, then the pair is renormalized to sum 2 and
// clamped to [1e-3, 1e3]. Zero norms leave the weights unchanged.
LossWeights gradnorm_update(const LossWeights& weights, double grad_norm_pose,
                            double grad_norm_flow, double initial_pose, double initial_flow,
                            double current_pose, double current_flow);

}  // namespace ct
