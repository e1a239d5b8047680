#include "ct/renderer.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <fstream>

#include "ct/parallel.hpp"

namespace ct {

std::shared_ptr<const SampleJitter> SampleJitter::make(Resolution res, const QuadratureConfig& quad,
                                                       std::uint64_t seed) {
  auto jit = std::make_shared<SampleJitter>();
  jit->h = res.h;
  jit->w = res.w;
  jit->n = quad.n_samples;
  std::size_t total = static_cast<std::size_t>(res.h) * res.w * quad.n_samples;
  if (!quad.jitter) {
    jit->u.assign(total, 0.5);
  } else {
    jit->u.resize(total);
    Rng rng(derive_seed(seed, 0x6a177e5ULL));
    for (auto& v : jit->u) v = uniform01(rng);
  }
  return jit;
}

namespace {

constexpr double kSupportQ = 30.0;        // primitive eval cutoff, exp(-30) ~ 1e-13
constexpr double kTransmitCutoff = 1e-7;  // stop marching once this opaque
constexpr double kOpacityFloor = 1e-8;
constexpr double kDepthSentinelOpacity = 1e-6;

struct Interval {
  double t0, t1;
  int kind;  // 0 blob, 1 slab, 2 actor
  int index;
};

bool ray_aabb(const Vec3d& o, const Vec3d& d, const Vec3d& lo, const Vec3d& hi, double tmin,
              double tmax, double* t0, double* t1) {
  const double* ov = &o.x;
  const double* dv = &d.x;
  const double* lv = &lo.x;
  const double* hv = &hi.x;
  for (int a = 0; a < 3; ++a) {
    if (std::abs(dv[a]) < 1e-15) {
      if (ov[a] < lv[a] || ov[a] > hv[a]) return false;
      continue;
    }
    double inv = 1.0 / dv[a];
    double ta = (lv[a] - ov[a]) * inv;
    double tb = (hv[a] - ov[a]) * inv;
    if (ta > tb) std::swap(ta, tb);
    tmin = std::max(tmin, ta);
    tmax = std::min(tmax, tb);
    if (tmin > tmax) return false;
  }
  *t0 = tmin;
  *t1 = tmax;
  return true;
}

template <typename T>
struct RenderCtx {
  const DynamicScene* scene = nullptr;
  CameraT<T> cam;
  std::vector<Vec3<T>> joints;
  Resolution res;
  QuadratureConfig quad;
  const SampleJitter* jitter = nullptr;
  // pruning geometry (value space)
  Vec3d cam_pos_v;
  std::vector<double> blob_r;  // conservative support radii
  Vec3d actor_lo, actor_hi;
};

constexpr int kMaxIntervals = 64;

template <typename T>
RenderCtx<T> make_ctx(const CameraT<T>& cam, const DynamicScene& scene, Resolution res,
                      const QuadratureConfig& quad, const SampleJitter& jitter) {
  if (scene.cfg.blobs.size() + scene.cfg.slabs.size() + 1 > kMaxIntervals)
    throw ConfigError("render: too many background primitives (max " +
                      std::to_string(kMaxIntervals - 1) + ")");
  RenderCtx<T> ctx;
  ctx.scene = &scene;
  ctx.cam = cam;
  ctx.joints = joints_at(scene.cfg.actor, clamp01(cam.time));
  ctx.res = res;
  ctx.quad = quad;
  ctx.jitter = &jitter;
  ctx.cam_pos_v = {value_of(cam.pos.x), value_of(cam.pos.y), value_of(cam.pos.z)};
  for (const auto& b : scene.cfg.blobs) {
    double smax = std::max(b.sigma.x, std::max(b.sigma.y, b.sigma.z));
    ctx.blob_r.push_back(std::sqrt(2.0 * kSupportQ) * smax);
  }
  double rmax = 0.0;
  for (double r : scene.cfg.actor.bone_radius) rmax = std::max(rmax, r);
  double inflate = std::sqrt(2.0 * kSupportQ) * rmax + 0.02;
  Vec3d lo{1e30, 1e30, 1e30}, hi{-1e30, -1e30, -1e30};
  for (const auto& j : ctx.joints) {
    Vec3d v{value_of(j.x), value_of(j.y), value_of(j.z)};
    lo.x = std::min(lo.x, v.x); lo.y = std::min(lo.y, v.y); lo.z = std::min(lo.z, v.z);
    hi.x = std::max(hi.x, v.x); hi.y = std::max(hi.y, v.y); hi.z = std::max(hi.z, v.z);
  }
  ctx.actor_lo = lo - Vec3d{inflate, inflate, inflate};
  ctx.actor_hi = hi + Vec3d{inflate, inflate, inflate};
  return ctx;
}

template <typename T>
int collect_intervals(const RenderCtx<T>& ctx, const Vec3d& o, const Vec3d& d, Interval* out,
                      int cap) {
  int n = 0;
  const auto& cfg = ctx.scene->cfg;
  double tn = ctx.quad.near, tf = ctx.quad.far;
  for (std::size_t i = 0; i < cfg.blobs.size(); ++i) {
    Vec3d co = cfg.blobs[i].center - o;
    double b = dot(d, co);
    double disc = b * b - (dot(co, co) - ctx.blob_r[i] * ctx.blob_r[i]);
    if (disc <= 0.0) continue;
    double s = std::sqrt(disc);
    double t0 = std::max(b - s, tn), t1 = std::min(b + s, tf);
    if (t0 <= t1 && n < cap) out[n++] = {t0, t1, 0, static_cast<int>(i)};
  }
  for (std::size_t i = 0; i < cfg.slabs.size(); ++i) {
    const auto& sl = cfg.slabs[i];
    Vec3d lo = sl.lo - Vec3d{sl.softness, sl.softness, sl.softness};
    Vec3d hi = sl.hi + Vec3d{sl.softness, sl.softness, sl.softness};
    double t0, t1;
    if (ray_aabb(o, d, lo, hi, tn, tf, &t0, &t1) && n < cap)
      out[n++] = {t0, t1, 1, static_cast<int>(i)};
  }
  {
    double t0, t1;
    if (ray_aabb(o, d, ctx.actor_lo, ctx.actor_hi, tn, tf, &t0, &t1) && n < cap)
      out[n++] = {t0, t1, 2, 0};
  }
  return n;
}

// Emission-absorption march for one pixel; writes [r,g,b,depth,opacity].
template <typename T>
void render_pixel(const RenderCtx<T>& ctx, int ix, int iy, T out[5]) {
  using std::exp;
  const auto& cfg = ctx.scene->cfg;
  T px = (ix + 0.5) - 0.5 * ctx.res.w;
  T py = (iy + 0.5) - 0.5 * ctx.res.h;
  Vec3<T> dir_cam{px / ctx.cam.focal, py / ctx.cam.focal, T(1.0)};
  Vec3<T> dir = normalized(ctx.cam.rot * dir_cam);
  const Vec3<T>& org = ctx.cam.pos;

  Vec3d d_v{value_of(dir.x), value_of(dir.y), value_of(dir.z)};
  Interval cands[kMaxIntervals];
  int n_cands = collect_intervals(ctx, ctx.cam_pos_v, d_v, cands, kMaxIntervals);

  int n = ctx.quad.n_samples;
  double seg = (ctx.quad.far - ctx.quad.near) / n;
  int pixel = iy * ctx.res.w + ix;

  T transmit(1.0);
  T acc[3] = {T(0.0), T(0.0), T(0.0)};
  T acc_depth(0.0), acc_alpha(0.0);

  double t_prev = ctx.quad.near + ctx.jitter->at(pixel, 0) * seg;
  for (int i = 0; i < n; ++i) {
    double t_i = t_prev;
    double t_next = (i + 1 < n) ? ctx.quad.near + (i + 1 + ctx.jitter->at(pixel, i + 1)) * seg
                                : ctx.quad.far;
    t_prev = t_next;
    double delta = t_next - t_i;

    FieldSample<T> fs;
    bool any = false;
    for (int k = 0; k < n_cands; ++k) {
      if (t_i < cands[k].t0 || t_i > cands[k].t1) continue;
      if (!any) any = true;
      Vec3<T> x{org.x + t_i * dir.x, org.y + t_i * dir.y, org.z + t_i * dir.z};
      switch (cands[k].kind) {
        case 0: accumulate_blob(cfg.blobs[static_cast<std::size_t>(cands[k].index)], x, fs); break;
        case 1: accumulate_slab(cfg.slabs[static_cast<std::size_t>(cands[k].index)], x, fs); break;
        default:
          for (std::size_t bi = 0; bi < cfg.actor.bones.size(); ++bi)
            accumulate_bone(*ctx.scene, bi, ctx.joints, x, fs);
      }
    }
    if (!any || value_of(fs.density) == 0.0) continue;

    T alpha = 1.0 - exp(-fs.density * delta);
    T w = transmit * alpha;
    Vec3<T> c = blend_color(*ctx.scene, fs);
    acc[0] += w * c.x;
    acc[1] += w * c.y;
    acc[2] += w * c.z;
    acc_depth += w * t_i;
    acc_alpha += w;
    transmit *= (1.0 - alpha);
    if (value_of(transmit) < kTransmitCutoff) break;
  }

  const Vec3d& bg = cfg.background_color;
  T residual = 1.0 - acc_alpha;
  out[0] = acc[0] + residual * bg.x;
  out[1] = acc[1] + residual * bg.y;
  out[2] = acc[2] + residual * bg.z;
  out[4] = acc_alpha;
  if (value_of(acc_alpha) < kDepthSentinelOpacity) {
    out[3] = T(ctx.quad.far);
  } else {
    out[3] = acc_depth / max_with(acc_alpha, kOpacityFloor);
  }
}

Tensor render_values(const SE3Pose& base, const double* p8, const DynamicScene& scene,
                     Resolution res, const QuadratureConfig& quad, const SampleJitter& jitter) {
  auto ctx = make_ctx(camera_from_values(base, p8), scene, res, quad, jitter);
  Tensor out = Tensor::zeros({res.h, res.w, 5});
  std::atomic<long long> bad_pixel{-1};
  parallel_for(static_cast<long long>(res.h) * res.w, [&](long long p) {
    int iy = static_cast<int>(p) / res.w;
    int ix = static_cast<int>(p) % res.w;
    double px[5];
    render_pixel(ctx, ix, iy, px);
    for (int c = 0; c < 5; ++c) {
      if (!std::isfinite(px[c])) bad_pixel.store(p);
      out.data[static_cast<std::size_t>(p) * 5 + c] = px[c];
    }
  });
  if (bad_pixel.load() >= 0) {
    long long p = bad_pixel.load();
    throw NumericError("render: non-finite value at pixel (" + std::to_string(p % res.w) + "," +
                       std::to_string(p / res.w) + ")");
  }
  return out;
}

}  // namespace

RenderedFrame frame_from_tensor(const Tensor& t, Resolution res, double far_plane) {
  RenderedFrame f;
  f.data = t;
  f.res = res;
  f.far_plane = far_plane;
  return f;
}

Tensor pack_params8(const CinematicParams& p) {
  Tensor t = Tensor::zeros({8});
  for (int i = 0; i < 6; ++i) t.data[static_cast<std::size_t>(i)] = p.xi[static_cast<std::size_t>(i)];
  t.data[6] = p.focal;
  t.data[7] = p.time;
  return t;
}

RenderedFrame render(const CinematicParams& params, const DynamicScene& scene, Resolution res,
                     const QuadratureConfig& quad, const SampleJitter& jitter) {
  if (!(params.focal > 0.0)) throw ConfigError("render: focal must be positive");
  if (!(quad.near < quad.far)) throw ConfigError("render: requires near < far");
  if (quad.n_samples < 2) throw ConfigError("render: requires n_samples >= 2");
  Tensor p8 = pack_params8(params);
  Tensor vals = render_values(params.base, p8.data.data(), scene, res, quad, jitter);
  return frame_from_tensor(vals, res, quad.far);
}

int render_node(Tape& tape, int params8, const SE3Pose& base, const DynamicScene& scene,
                Resolution res, const QuadratureConfig& quad,
                std::shared_ptr<const SampleJitter> jitter) {
  const Tensor& pv = tape.value(params8);
  if (pv.size() != 8) throw ShapeError("render_node: params leaf must have 8 entries");
  Tensor value = render_values(base, pv.data.data(), scene, res, quad, *jitter);

  Tape* self = &tape;
  const DynamicScene* sc = &scene;
  auto fwd = [self, params8, base, sc, res, quad, jitter]() {
    return render_values(base, self->value(params8).data.data(), *sc, res, quad, *jitter);
  };
  int id = tape.custom("render", {params8}, std::move(value), fwd, nullptr,
                       Tape::ImageLayout{res.h, res.w, 5});
  // Backward: dual-render only the pixels whose adjoints survived the mask.
  tape.set_last_backward([self, params8, base, sc, res, quad, jitter, id]() {
    const auto& g = self->out_adj(id);
    auto ctx = make_ctx(camera_from_duals<8>(base, self->value(params8).data.data()), *sc, res, quad,
                        *jitter);
    long long npix = static_cast<long long>(res.h) * res.w;
    std::vector<double> pgrad(8, 0.0);
    std::vector<double> partial(static_cast<std::size_t>(npix) * 8, 0.0);
    std::vector<std::uint8_t> touched(static_cast<std::size_t>(npix), 0);
    parallel_for(npix, [&](long long p) {
      const double* gp = &g[static_cast<std::size_t>(p) * 5];
      bool nonzero = false;
      for (int c = 0; c < 5; ++c) nonzero = nonzero || gp[c] != 0.0;
      if (!nonzero) return;
      touched[static_cast<std::size_t>(p)] = 1;
      int iy = static_cast<int>(p) / res.w;
      int ix = static_cast<int>(p) % res.w;
      Dual<8> px[5];
      render_pixel(ctx, ix, iy, px);
      double* row = &partial[static_cast<std::size_t>(p) * 8];
      for (int c = 0; c < 5; ++c) {
        if (gp[c] == 0.0) continue;
        for (int k = 0; k < 8; ++k) row[k] += gp[c] * px[c].d[k];
      }
    });
    for (long long p = 0; p < npix; ++p) {
      if (!touched[static_cast<std::size_t>(p)]) continue;
      const double* row = &partial[static_cast<std::size_t>(p) * 8];
      for (int k = 0; k < 8; ++k) pgrad[static_cast<std::size_t>(k)] += row[k];
    }
    auto& da = self->adj(params8);
    for (int k = 0; k < 8; ++k) da[static_cast<std::size_t>(k)] += pgrad[static_cast<std::size_t>(k)];
  });
  return id;
}

std::pair<int, int> render_window_nodes(Tape& tape, int params8_a, int params8_b,
                                        const SE3Pose& base_a, const SE3Pose& base_b,
                                        const DynamicScene& scene, Resolution res,
                                        const QuadratureConfig& quad,
                                        std::shared_ptr<const SampleJitter> jitter) {
  int a = render_node(tape, params8_a, base_a, scene, res, quad, jitter);
  int b = render_node(tape, params8_b, base_b, scene, res, quad, jitter);
  return {a, b};
}

std::pair<RenderedFrame, RenderedFrame> render_window(const CinematicParams& a,
                                                      const CinematicParams& b,
                                                      const DynamicScene& scene, Resolution res,
                                                      const QuadratureConfig& quad,
                                                      const SampleJitter& jitter) {
  return {render(a, scene, res, quad, jitter), render(b, scene, res, quad, jitter)};
}

void dump_ppm(const RenderedFrame& frame, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("dump_ppm: cannot open " + path);
  out << "P6\n" << frame.res.w << " " << frame.res.h << "\n255\n";
  for (int y = 0; y < frame.res.h; ++y)
    for (int x = 0; x < frame.res.w; ++x)
      for (int c = 0; c < 3; ++c) {
        double v = std::clamp(frame.color(y, x, c), 0.0, 1.0);
        out.put(static_cast<char>(static_cast<unsigned char>(v * 255.0 + 0.5)));
      }
}

void dump_depth_grid(const RenderedFrame& frame, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ConfigError("dump_depth_grid: cannot open " + path);
  out << "PF-GRID " << frame.res.w << " " << frame.res.h << "\n";
  char buf[64];
  for (int y = 0; y < frame.res.h; ++y) {
    for (int x = 0; x < frame.res.w; ++x) {
      int n = std::snprintf(buf, sizeof(buf), "%.9g%c", frame.depth(y, x),
                            x + 1 == frame.res.w ? '\n' : ' ');
      out.write(buf, n);
    }
  }
}

}  // namespace ct
