#include "ct/tape.hpp"

#include <algorithm>
#include <cmath>
#include <memory>

namespace ct {

int Tape::push_slot(Tensor v) {
  slots_.push_back(std::move(v));
  return static_cast<int>(slots_.size()) - 1;
}

int Tape::leaf(Tensor v) { return push_slot(std::move(v)); }

int Tape::custom(std::string name, std::vector<int> inputs, Tensor value,
                 std::function<Tensor()> fwd, std::function<void()> bwd,
                 std::optional<ImageLayout> image) {
  int out = push_slot(std::move(value));
  Node n;
  n.name = std::move(name);
  n.inputs = std::move(inputs);
  n.out = out;
  n.forward = std::move(fwd);
  n.backward = std::move(bwd);
  nodes_.push_back(std::move(n));
  if (image) declare_image(out, *image);
  return out;
}

void Tape::declare_image(int id, ImageLayout layout) {
  const auto& t = value(id);
  long long expect = static_cast<long long>(layout.h) * layout.w * layout.c;
  if (t.size() != expect)
    throw ShapeError("declare_image: tensor size " + std::to_string(t.size()) +
                     " does not match layout " + std::to_string(layout.h) + "x" +
                     std::to_string(layout.w) + "x" + std::to_string(layout.c));
  images_[id] = layout;
}

std::vector<double>& Tape::adj(int id) {
  auto& a = adj_[static_cast<std::size_t>(id)];
  if (a.empty()) a.assign(slots_[static_cast<std::size_t>(id)].data.size(), 0.0);
  return a;
}

// ---------------------------------------------------------------------------
// generic primitives

namespace {
struct BinCheck {
  static void same(const char* op, const Tensor& a, const Tensor& b) {
    require_same_shape(op, a, b);
  }
};
}  // namespace

int Tape::add(int a, int b) {
  BinCheck::same("add", value(a), value(b));
  Tensor out = value(a);
  for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] += value(b).data[i];
  Tape* self = this;
  int id = custom(
      "add", {a, b}, std::move(out),
      [self, a, b]() {
        Tensor r = self->value(a);
        for (std::size_t i = 0; i < r.data.size(); ++i) r.data[i] += self->value(b).data[i];
        return r;
      },
      nullptr);
  nodes_.back().backward = [self, a, b, id]() {
    const auto& g = self->out_adj(id);
    auto& da = self->adj(a);
    auto& db = self->adj(b);
    for (std::size_t i = 0; i < g.size(); ++i) {
      da[i] += g[i];
      db[i] += g[i];
    }
  };
  return id;
}

int Tape::sub(int a, int b) {
  BinCheck::same("sub", value(a), value(b));
  Tensor out = value(a);
  for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] -= value(b).data[i];
  Tape* self = this;
  int id = custom(
      "sub", {a, b}, std::move(out),
      [self, a, b]() {
        Tensor r = self->value(a);
        for (std::size_t i = 0; i < r.data.size(); ++i) r.data[i] -= self->value(b).data[i];
        return r;
      },
      nullptr);
  nodes_.back().backward = [self, a, b, id]() {
    const auto& g = self->out_adj(id);
    auto& da = self->adj(a);
    auto& db = self->adj(b);
    for (std::size_t i = 0; i < g.size(); ++i) {
      da[i] += g[i];
      db[i] -= g[i];
    }
  };
  return id;
}

int Tape::mul(int a, int b) {
  BinCheck::same("mul", value(a), value(b));
  Tensor out = value(a);
  for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] *= value(b).data[i];
  Tape* self = this;
  int id = custom(
      "mul", {a, b}, std::move(out),
      [self, a, b]() {
        Tensor r = self->value(a);
        for (std::size_t i = 0; i < r.data.size(); ++i) r.data[i] *= self->value(b).data[i];
        return r;
      },
      nullptr);
  nodes_.back().backward = [self, a, b, id]() {
    const auto& g = self->out_adj(id);
    const auto& va = self->value(a).data;
    const auto& vb = self->value(b).data;
    auto& da = self->adj(a);
    auto& db = self->adj(b);
    for (std::size_t i = 0; i < g.size(); ++i) {
      da[i] += g[i] * vb[i];
      db[i] += g[i] * va[i];
    }
  };
  return id;
}

int Tape::div(int a, int b) {
  BinCheck::same("div", value(a), value(b));
  Tensor out = value(a);
  for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] /= value(b).data[i];
  Tape* self = this;
  int id = custom(
      "div", {a, b}, std::move(out),
      [self, a, b]() {
        Tensor r = self->value(a);
        for (std::size_t i = 0; i < r.data.size(); ++i) r.data[i] /= self->value(b).data[i];
        return r;
      },
      nullptr);
  nodes_.back().backward = [self, a, b, id]() {
    const auto& g = self->out_adj(id);
    const auto& va = self->value(a).data;
    const auto& vb = self->value(b).data;
    auto& da = self->adj(a);
    auto& db = self->adj(b);
    for (std::size_t i = 0; i < g.size(); ++i) {
      da[i] += g[i] / vb[i];
      db[i] -= g[i] * va[i] / (vb[i] * vb[i]);
    }
  };
  return id;
}

int Tape::scale(int a, double c) {
  Tensor out = value(a);
  for (auto& v : out.data) v *= c;
  Tape* self = this;
  int id = custom(
      "scale", {a}, std::move(out),
      [self, a, c]() {
        Tensor r = self->value(a);
        for (auto& v : r.data) v *= c;
        return r;
      },
      nullptr);
  nodes_.back().backward = [self, a, c, id]() {
    const auto& g = self->out_adj(id);
    auto& da = self->adj(a);
    for (std::size_t i = 0; i < g.size(); ++i) da[i] += c * g[i];
  };
  return id;
}

int Tape::add_scalar(int a, double c) {
  Tensor out = value(a);
  for (auto& v : out.data) v += c;
  Tape* self = this;
  int id = custom(
      "add_scalar", {a}, std::move(out),
      [self, a, c]() {
        Tensor r = self->value(a);
        for (auto& v : r.data) v += c;
        return r;
      },
      nullptr);
  nodes_.back().backward = [self, a, id]() {
    const auto& g = self->out_adj(id);
    auto& da = self->adj(a);
    for (std::size_t i = 0; i < g.size(); ++i) da[i] += g[i];
  };
  return id;
}

int Tape::unary_elementwise(const char* name, int a, std::function<double(double)> f,
                            std::function<double(double, double)> df) {
  Tensor out = value(a);
  for (auto& v : out.data) v = f(v);
  Tape* self = this;
  int id = custom(
      name, {a}, std::move(out),
      [self, a, f]() {
        Tensor r = self->value(a);
        for (auto& v : r.data) v = f(v);
        return r;
      },
      nullptr);
  nodes_.back().backward = [self, a, df, id]() {
    const auto& g = self->out_adj(id);
    const auto& x = self->value(a).data;
    const auto& y = self->value(id).data;
    auto& da = self->adj(a);
    for (std::size_t i = 0; i < g.size(); ++i) da[i] += g[i] * df(x[i], y[i]);
  };
  return id;
}

int Tape::neg(int a) {
  return unary_elementwise("neg", a, [](double x) { return -x; },
                           [](double, double) { return -1.0; });
}

int Tape::exp(int a) {
  return unary_elementwise("exp", a, [](double x) { return std::exp(x); },
                           [](double, double y) { return y; });
}

int Tape::log(int a) {
  return unary_elementwise("log", a, [](double x) { return std::log(x); },
                           [](double x, double) { return 1.0 / x; });
}

int Tape::sqrt(int a) {
  // Subgradient convention: sqrt'(0) = 0 so exact-zero losses stay NaN-free.
  return unary_elementwise("sqrt", a, [](double x) { return std::sqrt(x); },
                           [](double, double y) { return y > 0.0 ? 0.5 / y : 0.0; });
}

int Tape::abs(int a) {
  // Subgradient convention: abs'(0) = 0.
  return unary_elementwise("abs", a, [](double x) { return std::abs(x); },
                           [](double x, double) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); });
}

int Tape::square(int a) {
  return unary_elementwise("square", a, [](double x) { return x * x; },
                           [](double x, double) { return 2.0 * x; });
}

int Tape::sum(int a) {
  Tensor out = Tensor::scalar(value(a).sum());
  Tape* self = this;
  int id = custom(
      "sum", {a}, std::move(out), [self, a]() { return Tensor::scalar(self->value(a).sum()); },
      nullptr);
  nodes_.back().backward = [self, a, id]() {
    double g = self->out_adj(id)[0];
    auto& da = self->adj(a);
    for (auto& v : da) v += g;
  };
  return id;
}

int Tape::mean(int a) {
  double n = static_cast<double>(value(a).size());
  Tensor out = Tensor::scalar(value(a).sum() / n);
  Tape* self = this;
  int id = custom(
      "mean", {a}, std::move(out),
      [self, a, n]() { return Tensor::scalar(self->value(a).sum() / n); }, nullptr);
  nodes_.back().backward = [self, a, n, id]() {
    double g = self->out_adj(id)[0] / n;
    auto& da = self->adj(a);
    for (auto& v : da) v += g;
  };
  return id;
}

int Tape::matmul(int a, int b) {
  const Tensor& A = value(a);
  const Tensor& B = value(b);
  if (A.shape.size() != 2 || B.shape.size() != 2 || A.shape[1] != B.shape[0])
    throw ShapeError("matmul: incompatible shapes " + Tensor::shape_string(A.shape) + " x " +
                     Tensor::shape_string(B.shape));
  int n = A.shape[0], k = A.shape[1], m = B.shape[1];
  auto compute = [](const Tensor& X, const Tensor& Y, int n_, int k_, int m_) {
    Tensor r = Tensor::zeros({n_, m_});
    for (int i = 0; i < n_; ++i)
      for (int l = 0; l < k_; ++l) {
        double x = X.data[static_cast<std::size_t>(i) * k_ + l];
        for (int j = 0; j < m_; ++j)
          r.data[static_cast<std::size_t>(i) * m_ + j] += x * Y.data[static_cast<std::size_t>(l) * m_ + j];
      }
    return r;
  };
  Tensor out = compute(A, B, n, k, m);
  Tape* self = this;
  int id = custom(
      "matmul", {a, b}, std::move(out),
      [self, a, b, n, k, m, compute]() { return compute(self->value(a), self->value(b), n, k, m); },
      nullptr);
  nodes_.back().backward = [self, a, b, n, k, m, id]() {
    const auto& g = self->out_adj(id);
    const auto& A_ = self->value(a).data;
    const auto& B_ = self->value(b).data;
    auto& da = self->adj(a);
    auto& db = self->adj(b);
    // dA = G * B^T ; dB = A^T * G
    for (int i = 0; i < n; ++i)
      for (int l = 0; l < k; ++l) {
        double s = 0.0;
        for (int j = 0; j < m; ++j)
          s += g[static_cast<std::size_t>(i) * m + j] * B_[static_cast<std::size_t>(l) * m + j];
        da[static_cast<std::size_t>(i) * k + l] += s;
      }
    for (int l = 0; l < k; ++l)
      for (int j = 0; j < m; ++j) {
        double s = 0.0;
        for (int i = 0; i < n; ++i)
          s += A_[static_cast<std::size_t>(i) * k + l] * g[static_cast<std::size_t>(i) * m + j];
        db[static_cast<std::size_t>(l) * m + j] += s;
      }
  };
  return id;
}

int Tape::gather(int a, std::vector<int> indices) {
  const Tensor& A = value(a);
  for (int idx : indices)
    if (idx < 0 || idx >= A.size())
      throw ShapeError("gather: index " + std::to_string(idx) + " out of range for " +
                       Tensor::shape_string(A.shape));
  Tensor out = Tensor::zeros({static_cast<int>(indices.size())});
  for (std::size_t i = 0; i < indices.size(); ++i)
    out.data[i] = A.data[static_cast<std::size_t>(indices[i])];
  Tape* self = this;
  auto idx = std::make_shared<std::vector<int>>(std::move(indices));
  int id = custom(
      "gather", {a}, std::move(out),
      [self, a, idx]() {
        Tensor r = Tensor::zeros({static_cast<int>(idx->size())});
        for (std::size_t i = 0; i < idx->size(); ++i)
          r.data[i] = self->value(a).data[static_cast<std::size_t>((*idx)[i])];
        return r;
      },
      nullptr);
  nodes_.back().backward = [self, a, idx, id]() {
    const auto& g = self->out_adj(id);
    auto& da = self->adj(a);
    for (std::size_t i = 0; i < idx->size(); ++i) da[static_cast<std::size_t>((*idx)[i])] += g[i];
  };
  return id;
}

int Tape::concat(const std::vector<int>& parts) {
  long long total = 0;
  for (int p : parts) total += value(p).size();
  Tensor out = Tensor::zeros({static_cast<int>(total)});
  std::size_t off = 0;
  for (int p : parts) {
    const auto& d = value(p).data;
    std::copy(d.begin(), d.end(), out.data.begin() + static_cast<std::ptrdiff_t>(off));
    off += d.size();
  }
  Tape* self = this;
  auto parts_copy = std::make_shared<std::vector<int>>(parts);
  int id = custom(
      "concat", parts, std::move(out),
      [self, parts_copy, total]() {
        Tensor r = Tensor::zeros({static_cast<int>(total)});
        std::size_t o = 0;
        for (int p : *parts_copy) {
          const auto& d = self->value(p).data;
          std::copy(d.begin(), d.end(), r.data.begin() + static_cast<std::ptrdiff_t>(o));
          o += d.size();
        }
        return r;
      },
      nullptr);
  nodes_.back().backward = [self, parts_copy, id]() {
    const auto& g = self->out_adj(id);
    std::size_t o = 0;
    for (int p : *parts_copy) {
      auto& dp = self->adj(p);
      for (std::size_t i = 0; i < dp.size(); ++i) dp[i] += g[o + i];
      o += dp.size();
    }
  };
  return id;
}

int Tape::select_channels(int a, std::vector<int> channels) {
  const Tensor& A = value(a);
  if (A.shape.size() != 3)
    throw ShapeError("select_channels: expects (H,W,C), got " + Tensor::shape_string(A.shape));
  int h = A.shape[0], w = A.shape[1], c = A.shape[2];
  for (int ch : channels)
    if (ch < 0 || ch >= c) throw ShapeError("select_channels: channel out of range");
  int cc = static_cast<int>(channels.size());
  auto compute = [h, w, c](const Tensor& X, const std::vector<int>& sel) {
    int cc_ = static_cast<int>(sel.size());
    Tensor r = Tensor::zeros({h, w, cc_});
    for (int p = 0; p < h * w; ++p)
      for (int k = 0; k < cc_; ++k)
        r.data[static_cast<std::size_t>(p) * cc_ + k] =
            X.data[static_cast<std::size_t>(p) * c + sel[static_cast<std::size_t>(k)]];
    return r;
  };
  Tensor out = compute(A, channels);
  Tape* self = this;
  auto chs = std::make_shared<std::vector<int>>(std::move(channels));
  int id = custom(
      "select_channels", {a}, std::move(out),
      [self, a, chs, compute]() { return compute(self->value(a), *chs); }, nullptr);
  nodes_.back().backward = [self, a, chs, h, w, c, cc, id]() {
    const auto& g = self->out_adj(id);
    auto& da = self->adj(a);
    for (int p = 0; p < h * w; ++p)
      for (int k = 0; k < cc; ++k)
        da[static_cast<std::size_t>(p) * c + (*chs)[static_cast<std::size_t>(k)]] +=
            g[static_cast<std::size_t>(p) * cc + k];
  };
  return id;
}

int Tape::l2norm_lastdim(int a) {
  const Tensor& A = value(a);
  if (A.shape.size() != 3)
    throw ShapeError("l2norm_lastdim: expects (H,W,C), got " + Tensor::shape_string(A.shape));
  int h = A.shape[0], w = A.shape[1], c = A.shape[2];
  auto compute = [h, w, c](const Tensor& X) {
    Tensor r = Tensor::zeros({h, w});
    for (int p = 0; p < h * w; ++p) {
      double s = 0.0;
      for (int k = 0; k < c; ++k) {
        double v = X.data[static_cast<std::size_t>(p) * c + k];
        s += v * v;
      }
      r.data[static_cast<std::size_t>(p)] = std::sqrt(s);
    }
    return r;
  };
  Tensor out = compute(A);
  Tape* self = this;
  int id = custom(
      "l2norm_lastdim", {a}, std::move(out), [self, a, compute]() { return compute(self->value(a)); },
      nullptr);
  nodes_.back().backward = [self, a, h, w, c, id]() {
    const auto& g = self->out_adj(id);
    const auto& x = self->value(a).data;
    const auto& y = self->value(id).data;
    auto& da = self->adj(a);
    for (int p = 0; p < h * w; ++p) {
      double yp = y[static_cast<std::size_t>(p)];
      if (yp <= 0.0) continue;  // subgradient 0 at the kink
      double gp = g[static_cast<std::size_t>(p)] / yp;
      for (int k = 0; k < c; ++k)
        da[static_cast<std::size_t>(p) * c + k] += gp * x[static_cast<std::size_t>(p) * c + k];
    }
  };
  return id;
}

int Tape::minmax_normalize(int a) {
  const Tensor& A = value(a);
  auto extrema = [](const Tensor& X) {
    std::size_t imin = 0, imax = 0;
    for (std::size_t i = 1; i < X.data.size(); ++i) {
      if (X.data[i] < X.data[imin]) imin = i;  // ties -> lowest index
      if (X.data[i] > X.data[imax]) imax = i;
    }
    return std::pair<std::size_t, std::size_t>(imin, imax);
  };
  auto compute = [extrema](const Tensor& X) {
    auto [imin, imax] = extrema(X);
    double mn = X.data[imin], mx = X.data[imax];
    double inv = 1.0 / (mx - mn + 1e-12);
    Tensor r = X;
    for (auto& v : r.data) v = (v - mn) * inv;
    return r;
  };
  Tensor out = compute(A);
  Tape* self = this;
  int id = custom(
      "minmax_normalize", {a}, std::move(out),
      [self, a, compute]() { return compute(self->value(a)); }, nullptr);
  nodes_.back().backward = [self, a, extrema, id]() {
    const auto& g = self->out_adj(id);
    const auto& x = self->value(a);
    const auto& y = self->value(id).data;
    auto [imin, imax] = extrema(x);
    double inv = 1.0 / (x.data[imax] - x.data[imin] + 1e-12);
    double gsum = 0.0, gy = 0.0;
    for (std::size_t i = 0; i < g.size(); ++i) {
      gsum += g[i];
      gy += g[i] * y[i];
    }
    auto& da = self->adj(a);
    for (std::size_t i = 0; i < g.size(); ++i) da[i] += g[i] * inv;
    da[imin] += (-gsum + gy) * inv;
    da[imax] -= gy * inv;
  };
  return id;
}

int Tape::record(const std::string& op_kind, const std::vector<int>& inputs) {
  auto need = [&](std::size_t n) {
    if (inputs.size() != n)
      throw ShapeError("record(" + op_kind + "): expects " + std::to_string(n) + " inputs, got " +
                       std::to_string(inputs.size()));
  };
  if (op_kind == "add") { need(2); return add(inputs[0], inputs[1]); }
  if (op_kind == "sub") { need(2); return sub(inputs[0], inputs[1]); }
  if (op_kind == "mul") { need(2); return mul(inputs[0], inputs[1]); }
  if (op_kind == "div") { need(2); return div(inputs[0], inputs[1]); }
  if (op_kind == "matmul") { need(2); return matmul(inputs[0], inputs[1]); }
  if (op_kind == "sum") { need(1); return sum(inputs[0]); }
  if (op_kind == "mean") { need(1); return mean(inputs[0]); }
  if (op_kind == "exp") { need(1); return exp(inputs[0]); }
  if (op_kind == "log") { need(1); return log(inputs[0]); }
  if (op_kind == "sqrt") { need(1); return sqrt(inputs[0]); }
  if (op_kind == "abs") { need(1); return abs(inputs[0]); }
  if (op_kind == "neg") { need(1); return neg(inputs[0]); }
  if (op_kind == "square") { need(1); return square(inputs[0]); }
  if (op_kind == "minmax_normalize") { need(1); return minmax_normalize(inputs[0]); }
  if (op_kind == "l2norm_lastdim") { need(1); return l2norm_lastdim(inputs[0]); }
  throw ShapeError("record: unknown op kind '" + op_kind + "'");
}

// ---------------------------------------------------------------------------

void Tape::replay() {
  for (auto& n : nodes_) slots_[static_cast<std::size_t>(n.out)] = n.forward();
}

void Tape::set_pixel_mask(int image_node_id, std::vector<std::uint8_t> keep) {
  auto it = images_.find(image_node_id);
  if (it == images_.end())
    throw ShapeError("set_pixel_mask: node " + std::to_string(image_node_id) +
                     " is not an image node");
  long long px = static_cast<long long>(it->second.h) * it->second.w;
  if (static_cast<long long>(keep.size()) != px)
    throw ShapeError("set_pixel_mask: mask size " + std::to_string(keep.size()) +
                     " does not match " + std::to_string(px) + " pixels");
  masks_[image_node_id] = std::move(keep);
}

void Tape::set_pixel_mask(const std::vector<int>& image_node_ids, std::vector<std::uint8_t> keep) {
  for (int id : image_node_ids) set_pixel_mask(id, keep);
}

void Tape::clear_pixel_mask() { masks_.clear(); }

std::vector<Tensor> Tape::grad(int output, const std::vector<int>& params) {
  const Tensor& out = value(output);
  if (!out.is_scalar())
    throw ShapeError("grad: output must be scalar, got shape " + Tensor::shape_string(out.shape));

  adj_.assign(slots_.size(), {});
  adj(output)[0] = 1.0;

  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
    auto& a = adj_[static_cast<std::size_t>(it->out)];
    if (a.empty()) continue;  // no adjoint reached this node
    auto mask_it = masks_.find(it->out);
    if (mask_it != masks_.end()) {
      const auto layout = images_.at(it->out);
      const auto& keep = mask_it->second;
      for (int p = 0; p < layout.h * layout.w; ++p) {
        if (keep[static_cast<std::size_t>(p)]) continue;
        for (int c = 0; c < layout.c; ++c) a[static_cast<std::size_t>(p) * layout.c + c] = 0.0;
      }
    }
    for (double v : a)
      if (std::isnan(v))
        throw NumericError("grad: NaN adjoint at node '" + it->name + "'");
    if (it->backward) it->backward();
  }

  std::vector<Tensor> grads;
  grads.reserve(params.size());
  for (int p : params) {
    auto& a = adj_[static_cast<std::size_t>(p)];
    Tensor g = Tensor::zeros(value(p).shape);
    if (!a.empty()) g.data = a;
    grads.push_back(std::move(g));
  }
  adj_.clear();
  return grads;
}

// ---------------------------------------------------------------------------

double check_gradient(const ScalarBuilder& f, const std::vector<Tensor>& params, double h) {
  std::vector<Tensor> analytic;
  {
    Tape tape;
    std::vector<int> ids;
    ids.reserve(params.size());
    for (const auto& p : params) ids.push_back(tape.leaf(p));
    int out = f(tape, ids);
    if (!tape.value(out).all_finite()) throw NumericError("check_gradient: non-finite value");
    analytic = tape.grad(out, ids);
  }

  auto eval = [&](const std::vector<Tensor>& pv) {
    Tape tape;
    std::vector<int> ids;
    ids.reserve(pv.size());
    for (const auto& p : pv) ids.push_back(tape.leaf(p));
    int out = f(tape, ids);
    double v = tape.value(out)[0];
    if (!std::isfinite(v)) throw NumericError("check_gradient: non-finite value at FD probe");
    return v;
  };

  double max_err = 0.0;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    for (std::size_t k = 0; k < params[pi].data.size(); ++k) {
      std::vector<Tensor> pv = params;
      pv[pi].data[k] += h;
      double fp = eval(pv);
      pv[pi].data[k] -= 2.0 * h;
      double fm = eval(pv);
      double fd = (fp - fm) / (2.0 * h);
      double err = std::abs(analytic[pi].data[k] - fd) / std::max(std::abs(fd), 1e-8);
      max_err = std::max(max_err, err);
    }
  }
  return max_err;
}

}  // namespace ct
