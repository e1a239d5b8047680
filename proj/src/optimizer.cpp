#include "ct/optimizer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace ct {

const char* loss_arm_name(LossArm arm) {
  switch (arm) {
    case LossArm::flow_pose: return "flow+pose";
    case LossArm::pose: return "pose";
    case LossArm::flow: return "flow";
    case LossArm::photometric: return "photometric";
    case LossArm::inerf: return "inerf";
  }
  return "?";
}

LossArm parse_loss_arm(const std::string& name) {
  if (name == "flow+pose" || name == "flow_pose") return LossArm::flow_pose;
  if (name == "pose") return LossArm::pose;
  if (name == "flow") return LossArm::flow;
  if (name == "photometric" || name == "pixel") return LossArm::photometric;
  if (name == "inerf" || name == "inerf-style") return LossArm::inerf;
  throw ConfigError("unknown loss arm '" + name + "'");
}

void adam_step(AdamState state, const std::array<double, 16>& grad,
               const std::array<double, 16>& lrs, const AdamConfig& cfg,
               std::array<double, 16>* params, double focal_min, double focal_max) {
  *state.t += 1;
  double bc1 = 1.0 - std::pow(cfg.beta1, *state.t);
  double bc2 = 1.0 - std::pow(cfg.beta2, *state.t);
  for (int k = 0; k < 16; ++k) {
    auto ks = static_cast<std::size_t>(k);
    (*state.m)[ks] = cfg.beta1 * (*state.m)[ks] + (1.0 - cfg.beta1) * grad[ks];
    (*state.v)[ks] = cfg.beta2 * (*state.v)[ks] + (1.0 - cfg.beta2) * grad[ks] * grad[ks];
    double mhat = (*state.m)[ks] / bc1;
    double vhat = (*state.v)[ks] / bc2;
    (*params)[ks] -= cfg.lr * lrs[ks] * mhat / (std::sqrt(vhat) + cfg.eps);
  }
  for (int cam = 0; cam < 2; ++cam) {
    std::size_t f = static_cast<std::size_t>(cam * 8 + 6);
    std::size_t t = static_cast<std::size_t>(cam * 8 + 7);
    (*params)[f] = std::clamp((*params)[f], focal_min, focal_max);
    (*params)[t] = std::clamp((*params)[t], 0.0, 1.0);
  }
}

std::vector<int> keypoint_pixels(const HeatmapStack& ref, int n) {
  long long total = static_cast<long long>(ref.res.h) * ref.res.w;
  n = std::min<long long>(n, total);
  int J = ref.joints();
  std::vector<std::pair<double, int>> scored(static_cast<std::size_t>(total));
  for (long long p = 0; p < total; ++p) {
    double s = 0.0;
    for (int j = 0; j < J; ++j) s += ref.data.data[static_cast<std::size_t>(p) * J + j];
    scored[static_cast<std::size_t>(p)] = {s, static_cast<int>(p)};
  }
  std::stable_sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
    return a.first > b.first;  // ties resolve to the lower pixel index
  });
  std::vector<int> out(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) out[static_cast<std::size_t>(i)] = scored[static_cast<std::size_t>(i)].second;
  std::sort(out.begin(), out.end());
  return out;
}

namespace {

std::array<double, 16> pack_window(const CinematicParams& a, const CinematicParams& b) {
  std::array<double, 16> x{};
  for (int i = 0; i < 6; ++i) {
    x[static_cast<std::size_t>(i)] = a.xi[static_cast<std::size_t>(i)];
    x[static_cast<std::size_t>(8 + i)] = b.xi[static_cast<std::size_t>(i)];
  }
  x[6] = a.focal;
  x[7] = a.time;
  x[14] = b.focal;
  x[15] = b.time;
  return x;
}

void unpack_window(const std::array<double, 16>& x, CinematicParams* a, CinematicParams* b) {
  for (int i = 0; i < 6; ++i) {
    a->xi[static_cast<std::size_t>(i)] = x[static_cast<std::size_t>(i)];
    b->xi[static_cast<std::size_t>(i)] = x[static_cast<std::size_t>(8 + i)];
  }
  a->focal = x[6];
  a->time = x[7];
  b->focal = x[14];
  b->time = x[15];
}

double norm16(const std::vector<Tensor>& grads) {
  double s = 0.0;
  for (const auto& g : grads)
    for (double v : g.data) s += v * v;
  return std::sqrt(s);
}

double median_of_tail(const std::vector<double>& v, std::size_t end, std::size_t window) {
  std::size_t lo = end >= window ? end - window : 0;
  std::vector<double> tail(v.begin() + static_cast<std::ptrdiff_t>(lo),
                           v.begin() + static_cast<std::ptrdiff_t>(end));
  std::sort(tail.begin(), tail.end());
  return tail[tail.size() / 2];
}

}  // namespace

WindowState optimize_window(const WindowRef& ref, const CinematicParams& init_a,
                            const CinematicParams& init_b, const DynamicScene& scene,
                            Resolution res, const OptimConfig& cfg,
                            std::shared_ptr<const SampleJitter> jitter, bool hold_first,
                            std::uint64_t window_seed) {
  WindowState state;
  state.cam_a = init_a;
  state.cam_b = init_b;
  state.cam_a.reanchor();
  state.cam_b.reanchor();
  state.weights = cfg.weights_init;

  bool pose_arm = cfg.arm == LossArm::flow_pose || cfg.arm == LossArm::pose;
  bool flow_arm = cfg.arm == LossArm::flow_pose || cfg.arm == LossArm::flow;
  bool pixel_arm = cfg.arm == LossArm::photometric || cfg.arm == LossArm::inerf;
  if (pose_arm && (!ref.pose_a || !ref.pose_b))
    throw ConfigError("optimize_window: pose arm requires reference pose data");
  if ((pose_arm || flow_arm) && !ref.flow)
    throw ConfigError("optimize_window: cinematic arms require the reference flow");
  if (pixel_arm && (!ref.frame_a->color || !ref.frame_b->color))
    throw ConfigError("optimize_window: pixel arms require reference colors");
  if (cfg.arm == LossArm::inerf && (!ref.inerf_pixels_a || !ref.inerf_pixels_b))
    throw ConfigError("optimize_window: inerf arm requires keypoint pixel sets");

  // effective per-arm weights; gradnorm only balances the combined arm
  double alpha = pose_arm || pixel_arm ? state.weights.alpha : 0.0;
  double beta = flow_arm ? state.weights.beta : 0.0;
  if (cfg.arm == LossArm::pose || pixel_arm) {
    alpha = 1.0;
    beta = 0.0;
  }
  if (cfg.arm == LossArm::flow) {
    alpha = 0.0;
    beta = 1.0;
  }
  state.weights.alpha = std::max(alpha, 1e-3);
  state.weights.beta = std::max(beta, 1e-3);
  bool use_gradnorm = cfg.gradnorm && cfg.arm == LossArm::flow_pose;

  std::array<double, 16> lrs{};
  for (int cam = 0; cam < 2; ++cam) {
    double hold = (cam == 0 && hold_first) ? cfg.hold_factor : 1.0;
    double focal_init = cam == 0 ? init_a.focal : init_b.focal;
    for (int i = 0; i < 3; ++i) lrs[static_cast<std::size_t>(cam * 8 + i)] = cfg.lr_rotation * hold;
    for (int i = 3; i < 6; ++i)
      lrs[static_cast<std::size_t>(cam * 8 + i)] = cfg.lr_translation_frac * scene.diameter() * hold;
    lrs[static_cast<std::size_t>(cam * 8 + 6)] = cfg.lr_focal_frac * focal_init * hold;
    lrs[static_cast<std::size_t>(cam * 8 + 7)] = cfg.lr_time * hold;
  }

  double initial_pose = 0.0, initial_flow = 0.0;
  std::vector<double> totals;
  totals.reserve(static_cast<std::size_t>(cfg.iters_per_window));

  for (int iter = 0; iter < cfg.iters_per_window; ++iter) {
    Tape tape;
    int pa = tape.leaf(pack_params8(state.cam_a));
    int pb = tape.leaf(pack_params8(state.cam_b));
    auto [frame_a, frame_b] = render_window_nodes(tape, pa, pb, state.cam_a.base, state.cam_b.base,
                                                  scene, res, cfg.quad, jitter);

    int lpose = -1, lflow = -1, flow_id = -1, hm_a = -1, hm_b = -1;
    if (pose_arm || flow_arm) {
      // heatmaps and flow always run for guidance; only the scored terms
      // contribute adjoints
      hm_a = render_heatmaps_node(tape, pa, state.cam_a.base, scene, res, cfg.heatmap);
      hm_b = render_heatmaps_node(tape, pb, state.cam_b.base, scene, res, cfg.heatmap);
    }
    if (pose_arm) {
      int la = pose_loss(tape, *ref.pose_a, hm_a, cfg.ot);
      int lb = pose_loss(tape, *ref.pose_b, hm_b, cfg.ot);
      lpose = tape.mean(tape.concat({la, lb}));
    } else if (cfg.arm == LossArm::photometric) {
      int la = photometric_loss(tape, *ref.frame_a->color, frame_a);
      int lb = photometric_loss(tape, *ref.frame_b->color, frame_b);
      lpose = tape.mean(tape.concat({la, lb}));
    } else if (cfg.arm == LossArm::inerf) {
      auto subset_loss = [&](int frame, const Tensor& color, const std::vector<int>& px) {
        std::vector<int> idx;
        std::vector<double> ref_vals;
        idx.reserve(px.size() * 3);
        for (int p : px)
          for (int c = 0; c < 3; ++c) {
            idx.push_back(p * 5 + c);
            ref_vals.push_back(color.data[static_cast<std::size_t>(p) * 3 + c]);
          }
        int got = tape.gather(frame, idx);
        int d = tape.sub(got, tape.constant(Tensor({static_cast<int>(ref_vals.size())}, ref_vals)));
        return tape.mean(tape.square(d));
      };
      int la = subset_loss(frame_a, *ref.frame_a->color, *ref.inerf_pixels_a);
      int lb = subset_loss(frame_b, *ref.frame_b->color, *ref.inerf_pixels_b);
      lpose = tape.mean(tape.concat({la, lb}));
    }
    if (flow_arm || pose_arm) {
      flow_id = induced_flow_node(tape, pa, pb, frame_a, state.cam_a.base, state.cam_b.base, scene,
                                  res);
      if (flow_arm) lflow = flow_loss(tape, *ref.flow, flow_id);
    }

    double pose_val = lpose >= 0 ? tape.value(lpose)[0] : 0.0;
    double flow_val = lflow >= 0 ? tape.value(lflow)[0] : 0.0;
    double total_val = state.weights.alpha * pose_val + state.weights.beta * flow_val;
    if (!std::isfinite(total_val))
      throw NumericError("optimize_window: non-finite loss at iteration " + std::to_string(iter));

    // guidance maps from forward values; resampled every iteration
    if (cfg.arm != LossArm::inerf) {
      GuidanceMap ga, gb;
      if (hm_a >= 0) {
        const Tensor& flow_syn = tape.value(flow_id);
        ga = guidance_map(ref.frame_a->heatmaps.data, tape.value(hm_a), ref.flow->data, flow_syn);
        gb = guidance_map(ref.frame_b->heatmaps.data, tape.value(hm_b), ref.flow->data, flow_syn);
      } else {
        ga = guidance_map_single(*ref.frame_a->color,
                                 Tensor({res.h, res.w, 3}, [&] {
                                   std::vector<double> c(static_cast<std::size_t>(res.h) * res.w * 3);
                                   const auto& f = tape.value(frame_a).data;
                                   for (std::size_t p = 0; p < c.size() / 3; ++p)
                                     for (int k = 0; k < 3; ++k) c[p * 3 + k] = f[p * 5 + k];
                                   return c;
                                 }()));
        gb = guidance_map_single(*ref.frame_b->color,
                                 Tensor({res.h, res.w, 3}, [&] {
                                   std::vector<double> c(static_cast<std::size_t>(res.h) * res.w * 3);
                                   const auto& f = tape.value(frame_b).data;
                                   for (std::size_t p = 0; p < c.size() / 3; ++p)
                                     for (int k = 0; k < 3; ++k) c[p * 3 + k] = f[p * 5 + k];
                                   return c;
                                 }()));
      }
      int n = std::min<long long>(cfg.guidance_n, static_cast<long long>(res.h) * res.w);
      auto px_a = sample_pixels(ga, n, derive_seed(window_seed, 0xa, static_cast<std::uint64_t>(iter)),
                                cfg.guidance_floor);
      auto px_b = sample_pixels(gb, n, derive_seed(window_seed, 0xb, static_cast<std::uint64_t>(iter)),
                                cfg.guidance_floor);
      std::vector<int> nodes_a{frame_a}, nodes_b{frame_b};
      if (hm_a >= 0) nodes_a.push_back(hm_a);
      if (hm_b >= 0) nodes_b.push_back(hm_b);
      if (flow_id >= 0) nodes_a.push_back(flow_id);  // flow lives on frame a's pixel grid
      apply_gradient_mask(tape, nodes_a, px_a, res);
      apply_gradient_mask(tape, nodes_b, px_b, res);
    }

    std::array<double, 16> grad{};
    double gp_norm = 0.0, gf_norm = 0.0;
    if (lpose >= 0) {
      auto g = tape.grad(lpose, {pa, pb});
      gp_norm = norm16(g);
      for (int k = 0; k < 8; ++k) {
        grad[static_cast<std::size_t>(k)] += state.weights.alpha * g[0][static_cast<std::size_t>(k)];
        grad[static_cast<std::size_t>(8 + k)] += state.weights.alpha * g[1][static_cast<std::size_t>(k)];
      }
    }
    if (lflow >= 0) {
      auto g = tape.grad(lflow, {pa, pb});
      gf_norm = norm16(g);
      for (int k = 0; k < 8; ++k) {
        grad[static_cast<std::size_t>(k)] += state.weights.beta * g[0][static_cast<std::size_t>(k)];
        grad[static_cast<std::size_t>(8 + k)] += state.weights.beta * g[1][static_cast<std::size_t>(k)];
      }
    }

    IterationRecord rec;
    rec.iter = iter;
    rec.pose_term = pose_val;
    rec.flow_term = flow_val;
    rec.total = total_val;
    rec.alpha = state.weights.alpha;
    rec.beta = state.weights.beta;
    rec.grad_norm_pose = gp_norm;
    rec.grad_norm_flow = gf_norm;
    state.history.push_back(rec);
    totals.push_back(total_val);

    if (iter == 0) {
      initial_pose = std::max(pose_val, 1e-12);
      initial_flow = std::max(flow_val, 1e-12);
    } else if (use_gradnorm) {
      state.weights = gradnorm_update(state.weights, gp_norm, gf_norm, initial_pose, initial_flow,
                                      std::max(pose_val, 1e-12), std::max(flow_val, 1e-12));
    }

    std::array<double, 16> lrs_now = lrs;
    double decay = std::pow(cfg.lr_decay, iter);
    for (auto& v : lrs_now) v *= decay;
    std::array<double, 16> params = pack_window(state.cam_a, state.cam_b);
    adam_step(AdamState{&state.adam_m, &state.adam_v, &state.adam_t}, grad, lrs_now, cfg.adam,
              &params, cfg.focal_min, cfg.focal_max);
    unpack_window(params, &state.cam_a, &state.cam_b);
    state.cam_a.reanchor();
    state.cam_b.reanchor();
    state.iterations = iter + 1;

    // stop when the smoothed loss fails to improve by stop_tol over the
    // patience horizon
    std::size_t k = totals.size();
    if (static_cast<int>(k) > cfg.stop_patience + 5) {
      double now = median_of_tail(totals, k, 5);
      double before = median_of_tail(totals, k - static_cast<std::size_t>(cfg.stop_patience), 5);
      if (now > before * (1.0 - cfg.stop_tol)) break;
    }
  }
  return state;
}

TransferResult transfer_clip(const ReferenceClip& reference, const DynamicScene& scene,
                             const CinematicParams& init, const OptimConfig& cfg) {
  reference.validate();
  if (reference.frames.size() < 2)
    throw ConfigError("transfer_clip: reference needs at least 2 frames");
  bool pose_arm = cfg.arm == LossArm::flow_pose || cfg.arm == LossArm::pose;
  if (pose_arm && reference.joint_count != scene.joint_count())
    throw ConfigError("transfer_clip: reference joint count " +
                      std::to_string(reference.joint_count) + " does not match the scene's " +
                      std::to_string(scene.joint_count()));

  Resolution res = reference.res;
  auto jitter = SampleJitter::make(res, cfg.quad, cfg.seed);
  std::size_t n = reference.frames.size();

  std::vector<PoseLossRef> pose_refs;
  if (pose_arm) {
    pose_refs.reserve(n);
    for (const auto& f : reference.frames) pose_refs.push_back(make_pose_loss_ref(f.heatmaps, cfg.ot));
  }
  std::vector<std::vector<int>> inerf_px;
  if (cfg.arm == LossArm::inerf) {
    inerf_px.reserve(n);
    for (const auto& f : reference.frames)
      inerf_px.push_back(keypoint_pixels(f.heatmaps, cfg.guidance_n));
  }

  std::vector<CinematicParams> solved(n, init);
  TransferResult result;
  for (std::size_t k = 0; k + 1 < n; ++k) {
    WindowRef wref;
    wref.frame_a = &reference.frames[k];
    wref.frame_b = &reference.frames[k + 1];
    wref.flow = &reference.flows[k];
    if (pose_arm) {
      wref.pose_a = &pose_refs[k];
      wref.pose_b = &pose_refs[k + 1];
    }
    if (cfg.arm == LossArm::inerf) {
      wref.inerf_pixels_a = &inerf_px[k];
      wref.inerf_pixels_b = &inerf_px[k + 1];
    }
    CinematicParams init_a = solved[k];
    CinematicParams init_b = solved[k];  // next camera starts at the current one
    try {
      WindowState ws = optimize_window(wref, init_a, init_b, scene, res, cfg, jitter, k > 0,
                                       derive_seed(cfg.seed, 0x77, k));
      solved[k] = ws.cam_a;
      solved[k + 1] = ws.cam_b;
      result.windows.push_back(std::move(ws));
    } catch (const NumericError& e) {
      Trajectory partial;
      for (std::size_t i = 0; i < k; ++i) partial.push(static_cast<int>(i), solved[i]);
      throw TransferError(std::string(e.what()) + " (window " + std::to_string(k) + ")",
                          std::move(partial));
    }
  }
  for (std::size_t i = 0; i < n; ++i)
    result.trajectory.push(static_cast<int>(i), solved[i]);
  return result;
}

}  // namespace ct
