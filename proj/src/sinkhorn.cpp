#include "ct/sinkhorn.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <memory>
#include <numeric>

#include "ct/common.hpp"

namespace ct {

namespace {

constexpr double kKernelPathLimit = 500.0;  // max C/eps before per-row logsumexp

// Smoothstep taper between tau and 3*tau keeps support truncation C1, so
// support churn under parameter perturbations cannot kick finite differences.
inline void taper_weight(double u, double tau, double* w, double* dw) {
  if (u <= tau) {
    *w = 0.0;
    *dw = 0.0;
    return;
  }
  if (u >= 3.0 * tau) {
    *w = 1.0;
    *dw = 0.0;
    return;
  }
  double y = (u - tau) / (2.0 * tau);
  *w = y * y * (3.0 - 2.0 * y);
  *dw = 6.0 * y * (1.0 - y) / (2.0 * tau);
}

}  // namespace

PooledChannel make_pooled_channel(const double* chan, int h, int w, const OTConfig& cfg) {
  if (cfg.grid < 1 || h % cfg.grid != 0 || w % cfg.grid != 0 || h != w)
    throw ShapeError("sinkhorn: grid " + std::to_string(cfg.grid) +
                     " must divide the square resolution " + std::to_string(h) + "x" +
                     std::to_string(w));
  PooledChannel pc;
  pc.grid = cfg.grid;
  pc.pool = h / cfg.grid;
  pc.src_h = h;
  pc.src_w = w;
  int G = cfg.grid, P = pc.pool;
  int N = G * G;

  std::vector<double> pooled(static_cast<std::size_t>(N), 0.0);
  double inv_block = 1.0 / (P * P);
  for (int y = 0; y < h; ++y) {
    int gy = y / P;
    for (int x = 0; x < w; ++x) {
      double v = chan[static_cast<std::size_t>(y) * w + x];
      if (v < -1e-12) throw ConfigError("sinkhorn: channel has negative mass");
      pooled[static_cast<std::size_t>(gy) * G + x / P] += std::max(v, 0.0) * inv_block;
    }
  }

  double total = std::accumulate(pooled.begin(), pooled.end(), 0.0);
  pc.floored = total < cfg.mass_floor;
  double add = pc.floored ? cfg.mass_floor / N : 0.0;
  pc.q_sum = total + (pc.floored ? cfg.mass_floor : 0.0);

  pc.u_full.resize(static_cast<std::size_t>(N));
  for (int i = 0; i < N; ++i)
    pc.u_full[static_cast<std::size_t>(i)] = (pooled[static_cast<std::size_t>(i)] + add) / pc.q_sum;

  double tau = cfg.support_rel;
  for (int i = 0; i < N; ++i) {
    double wgt, dwgt;
    taper_weight(pc.u_full[static_cast<std::size_t>(i)], tau, &wgt, &dwgt);
    if (wgt > 0.0) {
      pc.support.push_back(i);
      pc.mass.push_back(pc.u_full[static_cast<std::size_t>(i)] * wgt);
      pc.taper.push_back(wgt);
      pc.taper_grad.push_back(dwgt);
    }
  }
  if (pc.support.empty()) {
    // everything below tau (extreme configs only): keep the argmax cell
    int best = static_cast<int>(std::max_element(pc.u_full.begin(), pc.u_full.end()) -
                                pc.u_full.begin());
    pc.support.push_back(best);
    pc.mass.push_back(pc.u_full[static_cast<std::size_t>(best)]);
    pc.taper.push_back(1.0);
    pc.taper_grad.push_back(0.0);
  }
  if (static_cast<int>(pc.support.size()) > cfg.max_support) {
    // degenerate near-uniform channel: keep the top cells by mass, ties to
    // the lowest index
    std::vector<int> order(pc.support.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int x, int y) {
      return pc.mass[static_cast<std::size_t>(x)] > pc.mass[static_cast<std::size_t>(y)];
    });
    order.resize(static_cast<std::size_t>(cfg.max_support));
    std::sort(order.begin(), order.end());
    PooledChannel trimmed = pc;
    trimmed.support.clear();
    trimmed.mass.clear();
    trimmed.taper.clear();
    trimmed.taper_grad.clear();
    for (int k : order) {
      trimmed.support.push_back(pc.support[static_cast<std::size_t>(k)]);
      trimmed.mass.push_back(pc.mass[static_cast<std::size_t>(k)]);
      trimmed.taper.push_back(pc.taper[static_cast<std::size_t>(k)]);
      trimmed.taper_grad.push_back(pc.taper_grad[static_cast<std::size_t>(k)]);
    }
    pc = std::move(trimmed);
  }

  pc.kept_sum = std::accumulate(pc.mass.begin(), pc.mass.end(), 0.0);
  for (auto& m : pc.mass) m /= pc.kept_sum;
  return pc;
}

void pooled_channel_backward(const PooledChannel& pc, const std::vector<double>& dmass,
                             double* dchan) {
  std::size_t ns = pc.support.size();
  // renormalize: mass_i = mtilde_i / kept_sum
  double dot = 0.0;
  for (std::size_t i = 0; i < ns; ++i) dot += dmass[i] * pc.mass[i];
  std::vector<double> du(ns);
  double du_dot_u = 0.0;
  for (std::size_t i = 0; i < ns; ++i) {
    double dmt = (dmass[i] - dot) / pc.kept_sum;
    int cell = pc.support[i];
    double u = pc.u_full[static_cast<std::size_t>(cell)];
    du[i] = dmt * (pc.taper[i] + u * pc.taper_grad[i]);
    du_dot_u += du[i] * u;
  }
  // u = q / q_sum; dq_g = (du_g - sum_k du_k u_k) / q_sum for every cell g
  double base = -du_dot_u / pc.q_sum;
  int G = pc.grid, P = pc.pool;
  double inv_block = 1.0 / (P * P);
  std::vector<double> dq(static_cast<std::size_t>(G) * G, base);
  for (std::size_t i = 0; i < ns; ++i)
    dq[static_cast<std::size_t>(pc.support[i])] += du[i] / pc.q_sum;
  for (int gy = 0; gy < G; ++gy)
    for (int gx = 0; gx < G; ++gx) {
      double g = dq[static_cast<std::size_t>(gy) * G + gx] * inv_block;
      if (g == 0.0) continue;
      for (int yy = gy * P; yy < (gy + 1) * P; ++yy)
        for (int xx = gx * P; xx < (gx + 1) * P; ++xx)
          dchan[static_cast<std::size_t>(yy) * pc.src_w + xx] += g;
    }
}

// ---------------------------------------------------------------------------

// Cost and Gibbs kernel for one pair of supports. Supports are stable across
// optimization iterations while masses move, so these are cached per thread
// and verified field-by-field against hash collisions.
struct KernelEntry {
  int grid = 0;
  double epsilon = 0.0;
  std::vector<int> sup_a, sup_b;
  std::vector<double> cost;
  std::vector<double> kernel;  // empty when the log-domain slow path is needed
  bool kernel_path = false;
};

namespace {

thread_local std::vector<std::pair<std::uint64_t, std::shared_ptr<const KernelEntry>>> g_kernel_map;
constexpr std::size_t kKernelCacheCap = 512;

std::uint64_t support_hash(int grid, double eps, const std::vector<int>& a,
                           const std::vector<int>& b) {
  std::uint64_t h = 1469598103934665603ULL;
  auto mix = [&h](std::uint64_t v) {
    h ^= v;
    h *= 1099511628211ULL;
  };
  mix(static_cast<std::uint64_t>(grid));
  std::uint64_t ebits;
  std::memcpy(&ebits, &eps, sizeof(ebits));
  mix(ebits);
  for (int v : a) mix(static_cast<std::uint64_t>(v) + 0x9e37ULL);
  mix(0xabcdULL);
  for (int v : b) mix(static_cast<std::uint64_t>(v) + 0x51edULL);
  return h;
}

std::shared_ptr<const KernelEntry> kernel_for(int grid, double eps, const std::vector<int>& sup_a,
                                              const std::vector<int>& sup_b) {
  std::uint64_t key = support_hash(grid, eps, sup_a, sup_b);
  for (const auto& [k, entry] : g_kernel_map) {
    if (k != key) continue;
    if (entry->grid == grid && entry->epsilon == eps && entry->sup_a == sup_a &&
        entry->sup_b == sup_b)
      return entry;
  }
  auto e = std::make_shared<KernelEntry>();
  e->grid = grid;
  e->epsilon = eps;
  e->sup_a = sup_a;
  e->sup_b = sup_b;
  int n = static_cast<int>(sup_a.size()), m = static_cast<int>(sup_b.size());
  double diag = std::max(1.0, std::hypot(double(grid - 1), double(grid - 1)));
  e->cost.resize(static_cast<std::size_t>(n) * m);
  for (int i = 0; i < n; ++i) {
    int ay = sup_a[static_cast<std::size_t>(i)] / grid;
    int ax = sup_a[static_cast<std::size_t>(i)] % grid;
    for (int j = 0; j < m; ++j) {
      int by = sup_b[static_cast<std::size_t>(j)] / grid;
      int bx = sup_b[static_cast<std::size_t>(j)] % grid;
      e->cost[static_cast<std::size_t>(i) * m + j] =
          std::hypot(double(ax - bx), double(ay - by)) / diag;
    }
  }
  double max_cost = e->cost.empty() ? 0.0 : *std::max_element(e->cost.begin(), e->cost.end());
  e->kernel_path = max_cost / eps <= kKernelPathLimit;
  if (e->kernel_path) {
    e->kernel.resize(e->cost.size());
    for (std::size_t k = 0; k < e->cost.size(); ++k) e->kernel[k] = std::exp(-e->cost[k] / eps);
  }
  if (g_kernel_map.size() >= kKernelCacheCap) g_kernel_map.clear();
  g_kernel_map.emplace_back(key, e);
  return e;
}

// lexicographic order on (support, mass) for the canonical argument order
bool channel_less(const PooledChannel& x, const PooledChannel& y) {
  if (x.support != y.support) return x.support < y.support;
  return x.mass < y.mass;
}

// y_i = sum_j exp((f_i + g_j - C_ij)/eps) * w_j    (rows = true)
// y_j = sum_i exp((f_i + g_j - C_ij)/eps) * w_i    (rows = false)
void plan_matvec(const SinkhornRun& run, const std::vector<double>& f, const std::vector<double>& g,
                 const std::vector<double>& w, bool rows, std::vector<double>* y,
                 std::vector<double>* fe_ws, std::vector<double>* ge_ws) {
  int n = run.n, m = run.m;
  double eps = run.epsilon;
  const KernelEntry& ke = *run.kernel;
  if (ke.kernel_path) {
    double sf = *std::max_element(f.begin(), f.end());
    double sg = *std::max_element(g.begin(), g.end());
    double cfac = std::exp((sf + sg) / eps);
    auto& fe = *fe_ws;
    auto& ge = *ge_ws;
    fe.resize(static_cast<std::size_t>(n));
    ge.resize(static_cast<std::size_t>(m));
    for (int i = 0; i < n; ++i)
      fe[static_cast<std::size_t>(i)] = std::exp((f[static_cast<std::size_t>(i)] - sf) / eps);
    for (int j = 0; j < m; ++j)
      ge[static_cast<std::size_t>(j)] = std::exp((g[static_cast<std::size_t>(j)] - sg) / eps);
    if (rows) {
      y->assign(static_cast<std::size_t>(n), 0.0);
      for (int i = 0; i < n; ++i) {
        const double* krow = &ke.kernel[static_cast<std::size_t>(i) * m];
        double acc = 0.0;
        for (int j = 0; j < m; ++j)
          acc += krow[j] * ge[static_cast<std::size_t>(j)] * w[static_cast<std::size_t>(j)];
        (*y)[static_cast<std::size_t>(i)] = acc * fe[static_cast<std::size_t>(i)] * cfac;
      }
    } else {
      y->assign(static_cast<std::size_t>(m), 0.0);
      for (int i = 0; i < n; ++i) {
        const double* krow = &ke.kernel[static_cast<std::size_t>(i) * m];
        double wi = fe[static_cast<std::size_t>(i)] * w[static_cast<std::size_t>(i)];
        if (wi == 0.0) continue;
        for (int j = 0; j < m; ++j) (*y)[static_cast<std::size_t>(j)] += krow[j] * wi;
      }
      for (int j = 0; j < m; ++j)
        (*y)[static_cast<std::size_t>(j)] *= ge[static_cast<std::size_t>(j)] * cfac;
    }
  } else {
    if (rows) {
      y->assign(static_cast<std::size_t>(n), 0.0);
      for (int i = 0; i < n; ++i) {
        double acc = 0.0;
        for (int j = 0; j < m; ++j)
          acc += std::exp((f[static_cast<std::size_t>(i)] + g[static_cast<std::size_t>(j)] -
                           ke.cost[static_cast<std::size_t>(i) * m + j]) / eps) *
                 w[static_cast<std::size_t>(j)];
        (*y)[static_cast<std::size_t>(i)] = acc;
      }
    } else {
      y->assign(static_cast<std::size_t>(m), 0.0);
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < m; ++j)
          (*y)[static_cast<std::size_t>(j)] +=
              std::exp((f[static_cast<std::size_t>(i)] + g[static_cast<std::size_t>(j)] -
                        ke.cost[static_cast<std::size_t>(i) * m + j]) / eps) *
              w[static_cast<std::size_t>(i)];
    }
  }
}

void check_finite(const std::vector<double>& v, const char* what) {
  for (double x : v)
    if (!std::isfinite(x))
      throw NumericError(std::string("sinkhorn: non-finite ") + what +
                         " during iterations (epsilon too small for this input)");
}

}  // namespace

SinkhornRun sinkhorn_run(const PooledChannel& a_in, const PooledChannel& b_in,
                         const OTConfig& cfg) {
  const PooledChannel* pa = &a_in;
  const PooledChannel* pb = &b_in;
  bool swapped = false;
  if (channel_less(*pb, *pa)) {
    std::swap(pa, pb);
    swapped = true;
  }
  const PooledChannel& a = *pa;
  const PooledChannel& b = *pb;

  if (cfg.iters < 1) throw ConfigError("sinkhorn: iters must be >= 1");
  if (cfg.epsilon <= 0.0) throw ConfigError("sinkhorn: epsilon must be > 0");

  SinkhornRun run;
  run.swapped = swapped;
  run.n = static_cast<int>(a.support.size());
  run.m = static_cast<int>(b.support.size());
  run.iters = cfg.iters;
  run.epsilon = cfg.epsilon;
  run.kernel = kernel_for(a.grid, cfg.epsilon, a.support, b.support);

  int n = run.n, m = run.m;
  const KernelEntry& ke = *run.kernel;

  run.log_a.resize(static_cast<std::size_t>(n));
  run.log_b.resize(static_cast<std::size_t>(m));
  for (int i = 0; i < n; ++i)
    run.log_a[static_cast<std::size_t>(i)] = std::log(a.mass[static_cast<std::size_t>(i)]);
  for (int j = 0; j < m; ++j)
    run.log_b[static_cast<std::size_t>(j)] = std::log(b.mass[static_cast<std::size_t>(j)]);

  run.f_hist.assign(static_cast<std::size_t>(cfg.iters) * n, 0.0);
  run.g_hist.assign(static_cast<std::size_t>(cfg.iters + 1) * m, 0.0);

  std::vector<double> f(static_cast<std::size_t>(n), 0.0), g(static_cast<std::size_t>(m), 0.0);
  std::vector<double> ws_a(static_cast<std::size_t>(std::max(n, m)));
  double eps = cfg.epsilon;

  auto row_update = [&]() {
    if (ke.kernel_path) {
      double sg = *std::max_element(g.begin(), g.end());
      for (int j = 0; j < m; ++j)
        ws_a[static_cast<std::size_t>(j)] = std::exp((g[static_cast<std::size_t>(j)] - sg) / eps);
      for (int i = 0; i < n; ++i) {
        const double* krow = &ke.kernel[static_cast<std::size_t>(i) * m];
        double s = 0.0;
        for (int j = 0; j < m; ++j) s += krow[j] * ws_a[static_cast<std::size_t>(j)];
        f[static_cast<std::size_t>(i)] =
            eps * run.log_a[static_cast<std::size_t>(i)] - sg - eps * std::log(s);
      }
    } else {
      for (int i = 0; i < n; ++i) {
        const double* crow = &ke.cost[static_cast<std::size_t>(i) * m];
        double mx = -1e300;
        for (int j = 0; j < m; ++j) mx = std::max(mx, g[static_cast<std::size_t>(j)] - crow[j]);
        double s = 0.0;
        for (int j = 0; j < m; ++j)
          s += std::exp((g[static_cast<std::size_t>(j)] - crow[j] - mx) / eps);
        f[static_cast<std::size_t>(i)] =
            eps * run.log_a[static_cast<std::size_t>(i)] - mx - eps * std::log(s);
      }
    }
  };
  auto col_update = [&]() {
    if (ke.kernel_path) {
      double sf = *std::max_element(f.begin(), f.end());
      std::vector<double>& s = ws_a;
      std::fill(s.begin(), s.begin() + m, 0.0);
      for (int i = 0; i < n; ++i) {
        const double* krow = &ke.kernel[static_cast<std::size_t>(i) * m];
        double w = std::exp((f[static_cast<std::size_t>(i)] - sf) / eps);
        for (int j = 0; j < m; ++j) s[static_cast<std::size_t>(j)] += krow[j] * w;
      }
      for (int j = 0; j < m; ++j)
        g[static_cast<std::size_t>(j)] = eps * run.log_b[static_cast<std::size_t>(j)] - sf -
                                         eps * std::log(s[static_cast<std::size_t>(j)]);
    } else {
      for (int j = 0; j < m; ++j) {
        double mx = -1e300;
        for (int i = 0; i < n; ++i)
          mx = std::max(mx,
                        f[static_cast<std::size_t>(i)] - ke.cost[static_cast<std::size_t>(i) * m + j]);
        double s = 0.0;
        for (int i = 0; i < n; ++i)
          s += std::exp(
              (f[static_cast<std::size_t>(i)] - ke.cost[static_cast<std::size_t>(i) * m + j] - mx) /
              eps);
        g[static_cast<std::size_t>(j)] =
            eps * run.log_b[static_cast<std::size_t>(j)] - mx - eps * std::log(s);
      }
    }
  };

  for (int l = 0; l < cfg.iters; ++l) {
    std::copy(g.begin(), g.end(), run.g_hist.begin() + static_cast<std::ptrdiff_t>(l) * m);
    row_update();
    col_update();
    check_finite(f, "potential");
    check_finite(g, "potential");
    std::copy(f.begin(), f.end(), run.f_hist.begin() + static_cast<std::ptrdiff_t>(l) * n);
  }
  std::copy(g.begin(), g.end(), run.g_hist.begin() + static_cast<std::ptrdiff_t>(cfg.iters) * m);

  run.plan.resize(static_cast<std::size_t>(n) * m);
  double w_cost = 0.0;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < m; ++j) {
      double p = std::exp((f[static_cast<std::size_t>(i)] + g[static_cast<std::size_t>(j)] -
                           ke.cost[static_cast<std::size_t>(i) * m + j]) / eps);
      run.plan[static_cast<std::size_t>(i) * m + j] = p;
      w_cost += p * ke.cost[static_cast<std::size_t>(i) * m + j];
    }
  if (!std::isfinite(w_cost))
    throw NumericError("sinkhorn: non-finite transport cost (epsilon too small for this input)");
  run.value = w_cost;
  return run;
}

void sinkhorn_backward(const SinkhornRun& run, double dW, std::vector<double>* da,
                       std::vector<double>* db) {
  int n = run.n, m = run.m;
  double eps = run.epsilon;
  const KernelEntry& ke = *run.kernel;
  std::vector<double> fbar(static_cast<std::size_t>(n), 0.0),
      gbar(static_cast<std::size_t>(m), 0.0);
  std::vector<double> loga_adj(static_cast<std::size_t>(n), 0.0),
      logb_adj(static_cast<std::size_t>(m), 0.0);

  // seed from W = <P, C>, P = exp((f+g-C)/eps)
  for (int i = 0; i < n; ++i) {
    double s = 0.0;
    for (int j = 0; j < m; ++j)
      s += run.plan[static_cast<std::size_t>(i) * m + j] *
           ke.cost[static_cast<std::size_t>(i) * m + j];
    fbar[static_cast<std::size_t>(i)] = dW * s / eps;
  }
  for (int j = 0; j < m; ++j) {
    double s = 0.0;
    for (int i = 0; i < n; ++i)
      s += run.plan[static_cast<std::size_t>(i) * m + j] *
           ke.cost[static_cast<std::size_t>(i) * m + j];
    gbar[static_cast<std::size_t>(j)] = dW * s / eps;
  }

  std::vector<double> f(static_cast<std::size_t>(n)), g(static_cast<std::size_t>(m)),
      gprev(static_cast<std::size_t>(m)), tmp, wj(static_cast<std::size_t>(m)),
      wi(static_cast<std::size_t>(n)), fe_ws, ge_ws;
  for (int l = run.iters - 1; l >= 0; --l) {
    std::copy(run.f_hist.begin() + static_cast<std::ptrdiff_t>(l) * n,
              run.f_hist.begin() + static_cast<std::ptrdiff_t>(l + 1) * n, f.begin());
    std::copy(run.g_hist.begin() + static_cast<std::ptrdiff_t>(l + 1) * m,
              run.g_hist.begin() + static_cast<std::ptrdiff_t>(l + 2) * m, g.begin());
    std::copy(run.g_hist.begin() + static_cast<std::ptrdiff_t>(l) * m,
              run.g_hist.begin() + static_cast<std::ptrdiff_t>(l + 1) * m, gprev.begin());

    // reverse g-update: g_j = eps*log b_j - eps*LSE_i((f_i - C_ij)/eps);
    // column softmax s_ij = exp((f_i + g_j - C_ij)/eps) / b_j
    for (int j = 0; j < m; ++j) {
      logb_adj[static_cast<std::size_t>(j)] += eps * gbar[static_cast<std::size_t>(j)];
      wj[static_cast<std::size_t>(j)] =
          gbar[static_cast<std::size_t>(j)] / std::exp(run.log_b[static_cast<std::size_t>(j)]);
    }
    plan_matvec(run, f, g, wj, /*rows=*/true, &tmp, &fe_ws, &ge_ws);
    for (int i = 0; i < n; ++i) fbar[static_cast<std::size_t>(i)] -= tmp[static_cast<std::size_t>(i)];

    // reverse f-update: f_i = eps*log a_i - eps*LSE_j((gprev_j - C_ij)/eps);
    // row softmax r_ij = exp((f_i + gprev_j - C_ij)/eps) / a_i
    for (int i = 0; i < n; ++i) {
      loga_adj[static_cast<std::size_t>(i)] += eps * fbar[static_cast<std::size_t>(i)];
      wi[static_cast<std::size_t>(i)] =
          fbar[static_cast<std::size_t>(i)] / std::exp(run.log_a[static_cast<std::size_t>(i)]);
    }
    plan_matvec(run, f, gprev, wi, /*rows=*/false, &gbar, &fe_ws, &ge_ws);
    for (int j = 0; j < m; ++j) gbar[static_cast<std::size_t>(j)] = -gbar[static_cast<std::size_t>(j)];
    std::fill(fbar.begin(), fbar.end(), 0.0);
  }

  std::vector<double> da_local(static_cast<std::size_t>(n)), db_local(static_cast<std::size_t>(m));
  for (int i = 0; i < n; ++i)
    da_local[static_cast<std::size_t>(i)] =
        loga_adj[static_cast<std::size_t>(i)] / std::exp(run.log_a[static_cast<std::size_t>(i)]);
  for (int j = 0; j < m; ++j)
    db_local[static_cast<std::size_t>(j)] =
        logb_adj[static_cast<std::size_t>(j)] / std::exp(run.log_b[static_cast<std::size_t>(j)]);
  if (run.swapped) {
    *da = std::move(db_local);
    *db = std::move(da_local);
  } else {
    *da = std::move(da_local);
    *db = std::move(db_local);
  }
}

double sinkhorn_wdist_value(const Tensor& a, const Tensor& b, Resolution res, const OTConfig& cfg) {
  require_same_shape("sinkhorn_wdist", a, b);
  PooledChannel pa = make_pooled_channel(a.data.data(), res.h, res.w, cfg);
  PooledChannel pb = make_pooled_channel(b.data.data(), res.h, res.w, cfg);
  return sinkhorn_run(pa, pb, cfg).value;
}

}  // namespace ct
