#include "ct/proxies.hpp"

#include <cstring>
#include <fstream>

#include "ct/parallel.hpp"

namespace ct {

void ReferenceClip::validate() const {
  if (frames.empty()) throw ConfigError("reference clip: no frames");
  if (flows.size() + 1 != frames.size())
    throw ConfigError("reference clip: flow count " + std::to_string(flows.size()) +
                      " must be frame count - 1");
  for (const auto& f : frames) {
    if (f.heatmaps.res.h != res.h || f.heatmaps.res.w != res.w)
      throw ConfigError("reference clip: inconsistent heatmap resolution");
    if (f.heatmaps.joints() != joint_count)
      throw ConfigError("reference clip: inconsistent joint count");
  }
  for (const auto& o : flows)
    if (o.res.h != res.h || o.res.w != res.w)
      throw ConfigError("reference clip: inconsistent flow resolution");
}

namespace {

template <typename T>
struct JointSplat {
  T u{0.0}, v{0.0}, amp{0.0};
  bool visible = false;
};

// Projected position and occlusion-weighted amplitude per joint. The
// transmittance integrates the static background only; bones meeting at a
// joint would otherwise occlude their own joint and cap the amplitude well
// below one.
template <typename T>
std::vector<JointSplat<T>> joint_splats(const CameraT<T>& cam, const DynamicScene& scene,
                                        Resolution res, const HeatmapConfig& cfg) {
  using std::exp;
  using std::sqrt;
  auto joints = joints_at(scene.cfg.actor, clamp01(cam.time));
  std::vector<JointSplat<T>> out(joints.size());
  for (std::size_t j = 0; j < joints.size(); ++j) {
    Vec3<T> d{joints[j].x - cam.pos.x, joints[j].y - cam.pos.y, joints[j].z - cam.pos.z};
    Vec3<T> pc = cam.rot.transposed_times(d);
    if (value_of(pc.z) <= kZMin) continue;  // behind the camera: zero contribution
    JointSplat<T>& s = out[j];
    s.visible = true;
    s.u = cam.focal * pc.x / pc.z + 0.5 * res.w;
    s.v = cam.focal * pc.y / pc.z + 0.5 * res.h;
    if (!cfg.occlusion) {
      s.amp = T(1.0);
      continue;
    }
    T dist = sqrt(dot(d, d));
    Vec3<T> dir{d.x / dist, d.y / dist, d.z / dist};
    int K = cfg.occlusion_samples;
    T tau(0.0);
    for (int k = 0; k < K; ++k) {
      T t = dist * ((k + 0.5) / K);
      Vec3<T> x{cam.pos.x + t * dir.x, cam.pos.y + t * dir.y, cam.pos.z + t * dir.z};
      tau += background_density_at(scene, x);
    }
    s.amp = exp(-tau * (dist * (1.0 / K)));
  }
  return out;
}

void splat_values(const std::vector<JointSplat<double>>& splats, Resolution res, double sigma,
                  Tensor* out) {
  int J = static_cast<int>(splats.size());
  double inv2s2 = 0.5 / (sigma * sigma);
  parallel_for(static_cast<long long>(res.h) * res.w, [&](long long p) {
    int iy = static_cast<int>(p) / res.w;
    int ix = static_cast<int>(p) % res.w;
    double px = ix + 0.5, py = iy + 0.5;
    double* row = &out->data[static_cast<std::size_t>(p) * J];
    for (int j = 0; j < J; ++j) {
      const auto& s = splats[static_cast<std::size_t>(j)];
      if (!s.visible) {
        row[j] = 0.0;
        continue;
      }
      double du = px - s.u, dv = py - s.v;
      row[j] = s.amp * std::exp(-(du * du + dv * dv) * inv2s2);
    }
  });
}

// ---------------- flow ----------------

constexpr double kFlowOpacityGate = 1e-3;
constexpr double kActorFractionGate = 0.5;

// One flow pixel. T is double for values or Dual<17> with slots 0..7 camera
// t, 8..15 camera t+1, 16 the depth sample. The opacity gate and the
// actor-region gate are decided on values; gradients flow only through the
// chosen branch.
template <typename T>
void flow_pixel(const CameraT<T>& cam_t, const CameraT<T>& cam_t1, const DynamicScene& scene,
                const std::vector<Vec3<T>>& joints_t, const std::vector<Vec3<T>>& joints_t1,
                const std::vector<Vec3d>& joints_value, int ix, int iy, const T& depth,
                double opacity, Resolution res, T out[2]) {
  using std::sqrt;
  out[0] = T(0.0);
  out[1] = T(0.0);
  if (opacity < kFlowOpacityGate) return;

  T px = (ix + 0.5) - 0.5 * res.w;
  T py = (iy + 0.5) - 0.5 * res.h;
  Vec3<T> dir_cam{px / cam_t.focal, py / cam_t.focal, T(1.0)};
  Vec3<T> dir = normalized(cam_t.rot * dir_cam);
  Vec3<T> X{cam_t.pos.x + depth * dir.x, cam_t.pos.y + depth * dir.y,
            cam_t.pos.z + depth * dir.z};

  // actor-dominance gate on values only
  Vec3d xv{value_of(X.x), value_of(X.y), value_of(X.z)};
  double rho_actor = actor_density_at(scene, joints_value, xv);
  double rho_bg = background_density_at(scene, xv);
  if (rho_actor > kActorFractionGate * (rho_actor + rho_bg)) {
    // warp through the skeleton displacement, bone-density weighted
    const auto& actor = scene.cfg.actor;
    T wsum(0.0);
    Vec3<T> disp{T(0.0), T(0.0), T(0.0)};
    for (std::size_t bi = 0; bi < actor.bones.size(); ++bi) {
      auto [ja, jb] = actor.bones[bi];
      T tproj;
      T d2 = point_segment_dist2(joints_t[static_cast<std::size_t>(ja)],
                                 joints_t[static_cast<std::size_t>(jb)], X, &tproj);
      T q = d2 * (0.5 / (actor.bone_radius[bi] * actor.bone_radius[bi]));
      if (value_of(q) > 30.0) continue;
      using std::exp;
      T w = actor.bone_amplitude[bi] * exp(-q);
      T r = 1.0 - tproj;
      std::size_t sa = static_cast<std::size_t>(ja), sb = static_cast<std::size_t>(jb);
      disp.x += w * (r * (joints_t1[sa].x - joints_t[sa].x) + tproj * (joints_t1[sb].x - joints_t[sb].x));
      disp.y += w * (r * (joints_t1[sa].y - joints_t[sa].y) + tproj * (joints_t1[sb].y - joints_t[sb].y));
      disp.z += w * (r * (joints_t1[sa].z - joints_t[sa].z) + tproj * (joints_t1[sb].z - joints_t[sb].z));
      wsum += w;
    }
    T inv = 1.0 / (wsum + 1e-12);
    X.x += disp.x * inv;
    X.y += disp.y * inv;
    X.z += disp.z * inv;
  }

  // project into the second camera; behind-camera points are guarded by the
  // z clamp and the flow magnitude clamp below
  Vec3<T> rel{X.x - cam_t1.pos.x, X.y - cam_t1.pos.y, X.z - cam_t1.pos.z};
  Vec3<T> pc = cam_t1.rot.transposed_times(rel);
  T z = max_with(pc.z, kZMin);
  T u = cam_t1.focal * pc.x / z + 0.5 * res.w;
  T v = cam_t1.focal * pc.y / z + 0.5 * res.h;
  out[0] = u - (ix + 0.5);
  out[1] = v - (iy + 0.5);

  double diag = res.diagonal();
  T n2 = out[0] * out[0] + out[1] * out[1];
  if (value_of(n2) > diag * diag) {
    T scale = diag / sqrt(n2);
    out[0] *= scale;
    out[1] *= scale;
  }
}

template <typename T>
struct FlowCtx {
  CameraT<T> cam_t, cam_t1;
  std::vector<Vec3<T>> joints_t, joints_t1;
  std::vector<Vec3d> joints_value;
};

template <typename T>
FlowCtx<T> make_flow_ctx(const CameraT<T>& cam_t, const CameraT<T>& cam_t1,
                         const DynamicScene& scene) {
  FlowCtx<T> ctx{cam_t, cam_t1, {}, {}, {}};
  ctx.joints_t = joints_at(scene.cfg.actor, clamp01(cam_t.time));
  ctx.joints_t1 = joints_at(scene.cfg.actor, clamp01(cam_t1.time));
  ctx.joints_value = joints_at<double>(scene.cfg.actor, clamp01(value_of(cam_t.time)));
  return ctx;
}

}  // namespace

// ---------------------------------------------------------------------------
// value paths

HeatmapStack render_heatmaps(const CinematicParams& params, const DynamicScene& scene,
                             Resolution res, const HeatmapConfig& cfg) {
  Tensor p8 = pack_params8(params);
  auto cam = camera_from_values(params.base, p8.data.data());
  auto splats = joint_splats(cam, scene, res, cfg);
  HeatmapStack stack;
  stack.res = res;
  stack.sigma_px = cfg.resolved_sigma(res);
  stack.data = Tensor::zeros({res.h, res.w, scene.joint_count()});
  splat_values(splats, res, stack.sigma_px, &stack.data);
  return stack;
}

FlowField induced_flow(const CinematicParams& params_t, const CinematicParams& params_t1,
                       const DynamicScene& scene, const RenderedFrame& frame_t) {
  Tensor p8a = pack_params8(params_t);
  Tensor p8b = pack_params8(params_t1);
  auto ctx = make_flow_ctx(camera_from_values(params_t.base, p8a.data.data()),
                           camera_from_values(params_t1.base, p8b.data.data()), scene);
  Resolution res = frame_t.res;
  FlowField flow;
  flow.res = res;
  flow.data = Tensor::zeros({res.h, res.w, 2});
  parallel_for(static_cast<long long>(res.h) * res.w, [&](long long p) {
    int iy = static_cast<int>(p) / res.w;
    int ix = static_cast<int>(p) % res.w;
    double out[2];
    flow_pixel(ctx.cam_t, ctx.cam_t1, scene, ctx.joints_t, ctx.joints_t1, ctx.joints_value, ix, iy,
               frame_t.depth(iy, ix), frame_t.opacity(iy, ix), res, out);
    flow.data.data[static_cast<std::size_t>(p) * 2] = out[0];
    flow.data.data[static_cast<std::size_t>(p) * 2 + 1] = out[1];
  });
  return flow;
}

FlowField induced_flow(const CinematicParams& params_t, const CinematicParams& params_t1,
                       const DynamicScene& scene, Resolution res, const QuadratureConfig& quad,
                       const SampleJitter& jitter) {
  RenderedFrame frame_t = render(params_t, scene, res, quad, jitter);
  return induced_flow(params_t, params_t1, scene, frame_t);
}

ReferenceClip make_reference(const Trajectory& traj, const DynamicScene& scene, Resolution res,
                             const QuadratureConfig& quad, const HeatmapConfig& hm_cfg,
                             std::uint64_t jitter_seed) {
  if (traj.size() < 2) throw ConfigError("make_reference: needs at least 2 keyframes");
  auto jitter = SampleJitter::make(res, quad, jitter_seed);
  ReferenceClip clip;
  clip.meta = "internal-render";
  clip.res = res;
  clip.joint_count = scene.joint_count();

  std::vector<RenderedFrame> frames;
  for (const auto& kf : traj.keyframes) {
    RenderedFrame f = render(kf.params, scene, res, quad, *jitter);
    ReferenceFrame rf;
    rf.heatmaps = render_heatmaps(kf.params, scene, res, hm_cfg);
    Tensor color = Tensor::zeros({res.h, res.w, 3});
    for (long long p = 0; p < static_cast<long long>(res.h) * res.w; ++p)
      for (int c = 0; c < 3; ++c)
        color.data[static_cast<std::size_t>(p) * 3 + c] =
            f.data.data[static_cast<std::size_t>(p) * 5 + c];
    rf.color = std::move(color);
    clip.frames.push_back(std::move(rf));
    frames.push_back(std::move(f));
  }
  for (std::size_t i = 0; i + 1 < traj.keyframes.size(); ++i)
    clip.flows.push_back(
        induced_flow(traj.keyframes[i].params, traj.keyframes[i + 1].params, scene, frames[i]));
  clip.validate();
  return clip;
}

// ---------------------------------------------------------------------------
// CTRF archive

namespace {

void write_u32(std::ofstream& out, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t read_u32(std::ifstream& in, const char* what) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4))
    throw ConfigError(std::string("load_reference: truncated file reading ") + what);
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

void write_plane(std::ofstream& out, const Tensor& t, int channels, int channel) {
  std::vector<float> plane(t.data.size() / static_cast<std::size_t>(channels));
  for (std::size_t p = 0; p < plane.size(); ++p)
    plane[p] = static_cast<float>(
        t.data[p * static_cast<std::size_t>(channels) + static_cast<std::size_t>(channel)]);
  out.write(reinterpret_cast<const char*>(plane.data()),
            static_cast<std::streamsize>(plane.size() * sizeof(float)));
}

void read_plane(std::ifstream& in, Tensor* t, int channels, int channel, const char* what) {
  std::size_t n = t->data.size() / static_cast<std::size_t>(channels);
  std::vector<float> plane(n);
  if (!in.read(reinterpret_cast<char*>(plane.data()),
               static_cast<std::streamsize>(n * sizeof(float))))
    throw ConfigError(std::string("load_reference: truncated file reading ") + what);
  for (std::size_t p = 0; p < n; ++p)
    t->data[p * static_cast<std::size_t>(channels) + static_cast<std::size_t>(channel)] =
        static_cast<double>(plane[p]);
}

}  // namespace

void save_reference(const ReferenceClip& clip, const std::string& path) {
  clip.validate();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("save_reference: cannot open " + path);
  out.write("CTRF", 4);
  write_u32(out, 1);
  write_u32(out, static_cast<std::uint32_t>(clip.res.h));
  write_u32(out, static_cast<std::uint32_t>(clip.res.w));
  write_u32(out, static_cast<std::uint32_t>(clip.joint_count));
  write_u32(out, static_cast<std::uint32_t>(clip.frames.size()));
  for (const auto& f : clip.frames)
    for (int j = 0; j < clip.joint_count; ++j)
      write_plane(out, f.heatmaps.data, clip.joint_count, j);
  for (const auto& o : clip.flows)
    for (int c = 0; c < 2; ++c) write_plane(out, o.data, 2, c);
}

ReferenceClip load_reference(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("load_reference: cannot open " + path);
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, "CTRF", 4) != 0)
    throw ConfigError("load_reference: bad magic (expected CTRF)");
  std::uint32_t version = read_u32(in, "version");
  if (version != 1)
    throw ConfigError("load_reference: unsupported version " + std::to_string(version));
  ReferenceClip clip;
  clip.meta = "external-file";
  clip.res.h = static_cast<int>(read_u32(in, "height"));
  clip.res.w = static_cast<int>(read_u32(in, "width"));
  clip.joint_count = static_cast<int>(read_u32(in, "joint count"));
  std::uint32_t frames = read_u32(in, "frame count");
  if (clip.res.h <= 0 || clip.res.w <= 0 || clip.joint_count <= 0 || frames < 1)
    throw ConfigError("load_reference: invalid header dimensions");
  HeatmapConfig hm;
  for (std::uint32_t i = 0; i < frames; ++i) {
    ReferenceFrame rf;
    rf.heatmaps.res = clip.res;
    rf.heatmaps.sigma_px = hm.resolved_sigma(clip.res);
    rf.heatmaps.data = Tensor::zeros({clip.res.h, clip.res.w, clip.joint_count});
    for (int j = 0; j < clip.joint_count; ++j)
      read_plane(in, &rf.heatmaps.data, clip.joint_count, j, "heatmap plane");
    clip.frames.push_back(std::move(rf));
  }
  for (std::uint32_t i = 0; i + 1 < frames; ++i) {
    FlowField o;
    o.res = clip.res;
    o.data = Tensor::zeros({clip.res.h, clip.res.w, 2});
    for (int c = 0; c < 2; ++c) read_plane(in, &o.data, 2, c, "flow plane");
    clip.flows.push_back(std::move(o));
  }
  clip.validate();
  return clip;
}

// ---------------------------------------------------------------------------
// tape nodes

int render_heatmaps_node(Tape& tape, int params8, const SE3Pose& base, const DynamicScene& scene,
                         Resolution res, const HeatmapConfig& cfg) {
  const Tensor& pv = tape.value(params8);
  if (pv.size() != 8) throw ShapeError("render_heatmaps_node: params leaf must have 8 entries");
  int J = scene.joint_count();
  double sigma = cfg.resolved_sigma(res);

  Tape* self = &tape;
  const DynamicScene* sc = &scene;
  auto compute = [self, params8, base, sc, res, cfg, sigma]() {
    auto cam = camera_from_values(base, self->value(params8).data.data());
    auto splats = joint_splats(cam, *sc, res, cfg);
    Tensor out = Tensor::zeros({res.h, res.w, static_cast<int>(splats.size())});
    splat_values(splats, res, sigma, &out);
    return out;
  };
  Tensor value = compute();
  int id = tape.custom("render_heatmaps", {params8}, std::move(value), compute, nullptr,
                       Tape::ImageLayout{res.h, res.w, J});
  tape.set_last_backward([self, params8, base, sc, res, cfg, sigma, J, id]() {
    const auto& g = self->out_adj(id);
    auto cam = camera_from_duals<8>(base, self->value(params8).data.data());
    auto splats = joint_splats(cam, *sc, res, cfg);
    double inv2s2 = 0.5 / (sigma * sigma);
    double pgrad[8] = {0, 0, 0, 0, 0, 0, 0, 0};
    for (long long p = 0; p < static_cast<long long>(res.h) * res.w; ++p) {
      const double* gp = &g[static_cast<std::size_t>(p) * J];
      bool nonzero = false;
      for (int j = 0; j < J; ++j) nonzero = nonzero || gp[j] != 0.0;
      if (!nonzero) continue;
      int iy = static_cast<int>(p) / res.w;
      int ix = static_cast<int>(p) % res.w;
      double px = ix + 0.5, py = iy + 0.5;
      for (int j = 0; j < J; ++j) {
        if (gp[j] == 0.0) continue;
        const auto& s = splats[static_cast<std::size_t>(j)];
        if (!s.visible) continue;
        double du = px - s.u.v, dv = py - s.v.v;
        double e = std::exp(-(du * du + dv * dv) * inv2s2);
        // H = amp * e(u,v); dH = e * damp + amp * e * 2*inv2s2 * (du*du' + dv*dv')
        double coef = gp[j] * e;
        double coef2 = coef * s.amp.v * 2.0 * inv2s2;
        for (int k = 0; k < 8; ++k)
          pgrad[k] += coef * s.amp.d[k] + coef2 * (du * s.u.d[k] + dv * s.v.d[k]);
      }
    }
    auto& da = self->adj(params8);
    for (int k = 0; k < 8; ++k) da[static_cast<std::size_t>(k)] += pgrad[k];
  });
  return id;
}

int induced_flow_node(Tape& tape, int params8_t, int params8_t1, int frame_t, const SE3Pose& base_t,
                      const SE3Pose& base_t1, const DynamicScene& scene, Resolution res) {
  Tape* self = &tape;
  const DynamicScene* sc = &scene;
  auto compute = [self, params8_t, params8_t1, frame_t, base_t, base_t1, sc, res]() {
    auto ctx = make_flow_ctx(camera_from_values(base_t, self->value(params8_t).data.data()),
                             camera_from_values(base_t1, self->value(params8_t1).data.data()), *sc);
    const Tensor& frame = self->value(frame_t);
    Tensor out = Tensor::zeros({res.h, res.w, 2});
    parallel_for(static_cast<long long>(res.h) * res.w, [&](long long p) {
      int iy = static_cast<int>(p) / res.w;
      int ix = static_cast<int>(p) % res.w;
      double fo[2];
      flow_pixel(ctx.cam_t, ctx.cam_t1, *sc, ctx.joints_t, ctx.joints_t1, ctx.joints_value, ix, iy,
                 frame.data[static_cast<std::size_t>(p) * 5 + 3],
                 frame.data[static_cast<std::size_t>(p) * 5 + 4], res, fo);
      out.data[static_cast<std::size_t>(p) * 2] = fo[0];
      out.data[static_cast<std::size_t>(p) * 2 + 1] = fo[1];
    });
    return out;
  };
  Tensor value = compute();
  int id = tape.custom("induced_flow", {params8_t, params8_t1, frame_t}, std::move(value), compute,
                       nullptr, Tape::ImageLayout{res.h, res.w, 2});
  tape.set_last_backward([self, params8_t, params8_t1, frame_t, base_t, base_t1, sc, res, id]() {
    const auto& g = self->out_adj(id);
    auto ctx = make_flow_ctx(camera_from_duals<17>(base_t, self->value(params8_t).data.data(), 0),
                             camera_from_duals<17>(base_t1, self->value(params8_t1).data.data(), 8),
                             *sc);
    const Tensor& frame = self->value(frame_t);
    std::vector<double> pgrad(16, 0.0);
    auto& dframe = self->adj(frame_t);
    for (long long p = 0; p < static_cast<long long>(res.h) * res.w; ++p) {
      double gu = g[static_cast<std::size_t>(p) * 2];
      double gv = g[static_cast<std::size_t>(p) * 2 + 1];
      if (gu == 0.0 && gv == 0.0) continue;
      int iy = static_cast<int>(p) / res.w;
      int ix = static_cast<int>(p) % res.w;
      Dual<17> depth = Dual<17>::var(frame.data[static_cast<std::size_t>(p) * 5 + 3], 16);
      Dual<17> fo[2];
      flow_pixel(ctx.cam_t, ctx.cam_t1, *sc, ctx.joints_t, ctx.joints_t1, ctx.joints_value, ix, iy,
                 depth, frame.data[static_cast<std::size_t>(p) * 5 + 4], res, fo);
      for (int k = 0; k < 16; ++k)
        pgrad[static_cast<std::size_t>(k)] += gu * fo[0].d[k] + gv * fo[1].d[k];
      dframe[static_cast<std::size_t>(p) * 5 + 3] += gu * fo[0].d[16] + gv * fo[1].d[16];
    }
    auto& da = self->adj(params8_t);
    auto& db = self->adj(params8_t1);
    for (int k = 0; k < 8; ++k) {
      da[static_cast<std::size_t>(k)] += pgrad[static_cast<std::size_t>(k)];
      db[static_cast<std::size_t>(k)] += pgrad[static_cast<std::size_t>(k + 8)];
    }
  });
  return id;
}

}  // namespace ct
