#include "ct/losses.hpp"

#include <algorithm>
#include <cmath>
#include <memory>

namespace ct {

namespace {

std::vector<PooledChannel> pool_stack(const Tensor& stack, Resolution res, int joints,
                                      const OTConfig& cfg) {
  std::vector<PooledChannel> out;
  out.reserve(static_cast<std::size_t>(joints));
  std::vector<double> chan(static_cast<std::size_t>(res.h) * res.w);
  for (int j = 0; j < joints; ++j) {
    for (std::size_t p = 0; p < chan.size(); ++p)
      chan[p] = stack.data[p * static_cast<std::size_t>(joints) + static_cast<std::size_t>(j)];
    out.push_back(make_pooled_channel(chan.data(), res.h, res.w, cfg));
  }
  return out;
}

void scatter_channel_grad(const PooledChannel& pc, const std::vector<double>& dmass, int joints,
                          int channel, std::vector<double>* dstack) {
  std::vector<double> dchan(static_cast<std::size_t>(pc.src_h) * pc.src_w, 0.0);
  pooled_channel_backward(pc, dmass, dchan.data());
  for (std::size_t p = 0; p < dchan.size(); ++p)
    (*dstack)[p * static_cast<std::size_t>(joints) + static_cast<std::size_t>(channel)] += dchan[p];
}

}  // namespace

int sinkhorn_wdist_node(Tape& tape, int a, int b, Resolution res, const OTConfig& cfg) {
  const Tensor& av = tape.value(a);
  const Tensor& bv = tape.value(b);
  require_same_shape("sinkhorn_wdist", av, bv);
  if (av.size() != static_cast<long long>(res.h) * res.w)
    throw ShapeError("sinkhorn_wdist: tensor size does not match resolution");

  struct State {
    PooledChannel pa, pb;
    SinkhornRun run;
  };
  auto state = std::make_shared<State>();
  Tape* self = &tape;
  auto compute = [self, a, b, res, cfg, state]() {
    state->pa = make_pooled_channel(self->value(a).data.data(), res.h, res.w, cfg);
    state->pb = make_pooled_channel(self->value(b).data.data(), res.h, res.w, cfg);
    state->run = sinkhorn_run(state->pa, state->pb, cfg);
    return Tensor::scalar(state->run.value);
  };
  Tensor value = compute();
  int id = tape.custom("sinkhorn_wdist", {a, b}, std::move(value), compute, nullptr);
  tape.set_last_backward([self, a, b, state, id]() {
    double g = self->out_adj(id)[0];
    if (g == 0.0) return;
    std::vector<double> da, db;
    sinkhorn_backward(state->run, g, &da, &db);
    pooled_channel_backward(state->pa, da, self->adj(a).data());
    pooled_channel_backward(state->pb, db, self->adj(b).data());
  });
  return id;
}

PoseLossRef make_pose_loss_ref(const HeatmapStack& ref, const OTConfig& cfg) {
  PoseLossRef out;
  out.joints = ref.joints();
  out.res = ref.res;
  out.pooled = pool_stack(ref.data, ref.res, out.joints, cfg);
  int J = out.joints;
  out.s_matrix = Tensor::zeros({J, J});
  for (int i = 0; i < J; ++i)
    for (int j = i + 1; j < J; ++j) {
      double d = sinkhorn_run(out.pooled[static_cast<std::size_t>(i)],
                              out.pooled[static_cast<std::size_t>(j)], cfg)
                     .value;
      out.s_matrix.data[static_cast<std::size_t>(i) * J + j] = d;
      out.s_matrix.data[static_cast<std::size_t>(j) * J + i] = d;
    }
  return out;
}

Tensor inter_joint_matrix(const HeatmapStack& stack, const OTConfig& cfg) {
  return make_pose_loss_ref(stack, cfg).s_matrix;
}

int inter_joint_matrix_node(Tape& tape, int syn_stack, Resolution res, int joints,
                            const OTConfig& cfg) {
  struct State {
    std::vector<PooledChannel> pooled;
    std::vector<SinkhornRun> runs;  // for pairs (i, j), i < j, row-major order
  };
  auto state = std::make_shared<State>();
  Tape* self = &tape;
  int J = joints;
  auto compute = [self, syn_stack, res, J, cfg, state]() {
    state->pooled = pool_stack(self->value(syn_stack), res, J, cfg);
    state->runs.clear();
    Tensor s = Tensor::zeros({J, J});
    for (int i = 0; i < J; ++i)
      for (int j = i + 1; j < J; ++j) {
        state->runs.push_back(sinkhorn_run(state->pooled[static_cast<std::size_t>(i)],
                                           state->pooled[static_cast<std::size_t>(j)], cfg));
        double d = state->runs.back().value;
        s.data[static_cast<std::size_t>(i) * J + j] = d;
        s.data[static_cast<std::size_t>(j) * J + i] = d;
      }
    return s;
  };
  Tensor value = compute();
  int id = tape.custom("inter_joint_matrix", {syn_stack}, std::move(value), compute, nullptr);
  tape.set_last_backward([self, syn_stack, J, state, id]() {
    const auto& g = self->out_adj(id);
    auto& dstack = self->adj(syn_stack);
    std::size_t run_idx = 0;
    for (int i = 0; i < J; ++i)
      for (int j = i + 1; j < J; ++j, ++run_idx) {
        double dw = g[static_cast<std::size_t>(i) * J + j] + g[static_cast<std::size_t>(j) * J + i];
        if (dw == 0.0) continue;
        std::vector<double> da, db;
        sinkhorn_backward(state->runs[run_idx], dw, &da, &db);
        scatter_channel_grad(state->pooled[static_cast<std::size_t>(i)], da, J, i, &dstack);
        scatter_channel_grad(state->pooled[static_cast<std::size_t>(j)], db, J, j, &dstack);
      }
  });
  return id;
}

namespace {

// Sum over joints of d_w(ref_j, syn_j); reference side detached.
int channel_distance_sum_node(Tape& tape, const PoseLossRef& ref, int syn_stack,
                              const OTConfig& cfg) {
  struct State {
    std::vector<PooledChannel> pooled;
    std::vector<SinkhornRun> runs;
  };
  auto state = std::make_shared<State>();
  Tape* self = &tape;
  const PoseLossRef* refp = &ref;
  int J = ref.joints;
  Resolution res = ref.res;
  auto compute = [self, syn_stack, res, J, cfg, state, refp]() {
    state->pooled = pool_stack(self->value(syn_stack), res, J, cfg);
    state->runs.clear();
    double total = 0.0;
    for (int j = 0; j < J; ++j) {
      state->runs.push_back(sinkhorn_run(refp->pooled[static_cast<std::size_t>(j)],
                                         state->pooled[static_cast<std::size_t>(j)], cfg));
      total += state->runs.back().value;
    }
    return Tensor::scalar(total);
  };
  Tensor value = compute();
  int id = tape.custom("heatmap_wdist_sum", {syn_stack}, std::move(value), compute, nullptr);
  tape.set_last_backward([self, syn_stack, J, state, id]() {
    double g = self->out_adj(id)[0];
    if (g == 0.0) return;
    auto& dstack = self->adj(syn_stack);
    for (int j = 0; j < J; ++j) {
      std::vector<double> dref, dsyn;
      sinkhorn_backward(state->runs[static_cast<std::size_t>(j)], g, &dref, &dsyn);
      scatter_channel_grad(state->pooled[static_cast<std::size_t>(j)], dsyn, J, j, &dstack);
    }
  });
  return id;
}

}  // namespace

int pose_loss(Tape& tape, const PoseLossRef& ref, int syn_stack, const OTConfig& cfg) {
  const Tensor& sv = tape.value(syn_stack);
  if (sv.shape.size() != 3 || sv.shape[2] != ref.joints)
    throw ShapeError("pose_loss: joint count mismatch (reference J=" + std::to_string(ref.joints) +
                     ")");
  if (sv.shape[0] != ref.res.h || sv.shape[1] != ref.res.w)
    throw ShapeError("pose_loss: resolution mismatch");
  int dists = channel_distance_sum_node(tape, ref, syn_stack, cfg);
  int s_syn = inter_joint_matrix_node(tape, syn_stack, ref.res, ref.joints, cfg);
  int diff = tape.sub(s_syn, tape.constant(ref.s_matrix));
  int fro = tape.sqrt(tape.sum(tape.square(diff)));
  return tape.add(dists, fro);
}

double pose_loss_value(const PoseLossRef& ref, const HeatmapStack& syn, const OTConfig& cfg) {
  if (syn.joints() != ref.joints) throw ShapeError("pose_loss: joint count mismatch");
  auto pooled = pool_stack(syn.data, syn.res, syn.joints(), cfg);
  double total = 0.0;
  for (int j = 0; j < ref.joints; ++j)
    total += sinkhorn_run(ref.pooled[static_cast<std::size_t>(j)],
                          pooled[static_cast<std::size_t>(j)], cfg)
                 .value;
  int J = ref.joints;
  double fro = 0.0;
  for (int i = 0; i < J; ++i)
    for (int j = i + 1; j < J; ++j) {
      double d = sinkhorn_run(pooled[static_cast<std::size_t>(i)],
                              pooled[static_cast<std::size_t>(j)], cfg)
                     .value;
      double diff = d - ref.s_matrix.data[static_cast<std::size_t>(i) * J + j];
      fro += 2.0 * diff * diff;
    }
  return total + std::sqrt(fro);
}

double pose_loss_value(const HeatmapStack& ref, const HeatmapStack& syn, const OTConfig& cfg) {
  return pose_loss_value(make_pose_loss_ref(ref, cfg), syn, cfg);
}

int flow_loss(Tape& tape, const FlowField& ref, int syn_flow) {
  const Tensor& sv = tape.value(syn_flow);
  require_same_shape("flow_loss", sv, ref.data);
  int diff = tape.sub(syn_flow, tape.constant(ref.data));
  return tape.mean(tape.l2norm_lastdim(diff));
}

double flow_loss_value(const FlowField& ref, const FlowField& syn) {
  require_same_shape("flow_loss", ref.data, syn.data);
  double total = 0.0;
  std::size_t n = ref.data.data.size() / 2;
  for (std::size_t p = 0; p < n; ++p) {
    double du = syn.data.data[p * 2] - ref.data.data[p * 2];
    double dv = syn.data.data[p * 2 + 1] - ref.data.data[p * 2 + 1];
    total += std::sqrt(du * du + dv * dv);
  }
  return total / static_cast<double>(n);
}

int photometric_loss(Tape& tape, const Tensor& ref_color, int syn_frame) {
  int rgb = tape.select_channels(syn_frame, {0, 1, 2});
  require_same_shape("photometric_loss", tape.value(rgb), ref_color);
  int diff = tape.sub(rgb, tape.constant(ref_color));
  return tape.mean(tape.square(diff));
}

double photometric_loss_value(const Tensor& ref_color, const Tensor& syn_color) {
  require_same_shape("photometric_loss", ref_color, syn_color);
  double total = 0.0;
  for (std::size_t i = 0; i < ref_color.data.size(); ++i) {
    double d = syn_color.data[i] - ref_color.data[i];
    total += d * d;
  }
  return total / static_cast<double>(ref_color.data.size());
}

int total_loss(Tape& tape, const std::vector<int>& pose_terms, const std::vector<int>& flow_terms,
               const LossWeights& weights) {
  if (!(weights.alpha > 0.0) || !(weights.beta > 0.0))
    throw ConfigError("total_loss: weights must be positive");
  int out = -1;
  if (!pose_terms.empty()) {
    int pose_mean = pose_terms.size() == 1 ? pose_terms[0] : tape.mean(tape.concat(pose_terms));
    out = tape.scale(pose_mean, weights.alpha);
  }
  if (!flow_terms.empty()) {
    int flow_mean = flow_terms.size() == 1 ? flow_terms[0] : tape.mean(tape.concat(flow_terms));
    int f = tape.scale(flow_mean, weights.beta);
    out = out < 0 ? f : tape.add(out, f);
  }
  if (out < 0) throw ConfigError("total_loss: no loss terms");
  return out;
}

LossWeights gradnorm_update(const LossWeights& weights, double grad_norm_pose,
                            double grad_norm_flow, double initial_pose, double initial_flow,
                            double current_pose, double current_flow) {
  if (grad_norm_pose < 0.0 || grad_norm_flow < 0.0)
    throw ConfigError("gradnorm_update: norms must be nonnegative");
  if (!(initial_pose > 0.0) || !(initial_flow > 0.0))
    throw ConfigError("gradnorm_update: initial losses must be positive");
  if (grad_norm_pose == 0.0 && grad_norm_flow == 0.0) return weights;

  double rate_pose = current_pose / initial_pose;
  double rate_flow = current_flow / initial_flow;
  double mean_rate = 0.5 * (rate_pose + rate_flow);
  if (mean_rate <= 0.0) return weights;
  double rel_pose = rate_pose / mean_rate;
  double rel_flow = rate_flow / mean_rate;

  double g_pose = weights.alpha * grad_norm_pose;
  double g_flow = weights.beta * grad_norm_flow;
  double mean_g = 0.5 * (g_pose + g_flow);

  double target_pose = mean_g * std::pow(std::max(rel_pose, 0.0), weights.gamma);
  double target_flow = mean_g * std::pow(std::max(rel_flow, 0.0), weights.gamma);

  LossWeights out = weights;
  double cand_alpha = grad_norm_pose > 1e-12 ? target_pose / grad_norm_pose : weights.alpha;
  double cand_beta = grad_norm_flow > 1e-12 ? target_flow / grad_norm_flow : weights.beta;
  // relaxed multiplicative move toward the targets; a full jump lets one
  // loss collapse the other's weight within a few iterations
  constexpr double kStep = 0.2;
  cand_alpha = weights.alpha * std::pow(std::max(cand_alpha, 1e-12) / weights.alpha, kStep);
  cand_beta = weights.beta * std::pow(std::max(cand_beta, 1e-12) / weights.beta, kStep);
  double s = cand_alpha + cand_beta;
  if (s > 0.0) {
    cand_alpha *= 2.0 / s;
    cand_beta *= 2.0 / s;
  }
  out.alpha = std::clamp(cand_alpha, 1e-3, 1e3);
  out.beta = std::clamp(cand_beta, 1e-3, 1e3);
  return out;
}

}  // namespace ct
