#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "ct/tensor.hpp"

namespace ct {

// Reverse-mode gradient tape over dense tensor operations. Nodes are
// tensor-valued primitives recorded in execution order; backward visits them
// in reverse exactly once. Image-shaped nodes (H x W x C) can have a pixel
// mask applied so that only selected pixels' subgraphs contribute adjoints.
class Tape {
 public:
  struct ImageLayout {
    int h = 0, w = 0, c = 0;
  };

  struct Node {
    std::string name;
    std::vector<int> inputs;
    int out = -1;
    std::function<Tensor()> forward;   // recompute output from current input slots
    std::function<void()> backward;    // reads adj(out), accumulates into adj(inputs)
  };

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // ---- leaves ----
  int leaf(Tensor v);
  int constant(Tensor v) { return leaf(std::move(v)); }

  // ---- generic primitives ----
  int add(int a, int b);
  int sub(int a, int b);
  int mul(int a, int b);
  int div(int a, int b);
  int scale(int a, double c);
  int add_scalar(int a, double c);
  int neg(int a);
  int exp(int a);
  int log(int a);
  int sqrt(int a);
  int abs(int a);
  int square(int a);
  int sum(int a);
  int mean(int a);
  int matmul(int a, int b);
  int gather(int a, std::vector<int> indices);
  int concat(const std::vector<int>& parts);
  int select_channels(int a, std::vector<int> channels);  // on (H,W,C) tensors
  int l2norm_lastdim(int a);                              // (H,W,C) -> (H,W)
  int minmax_normalize(int a);

  // Dispatch by op kind for the simple primitives.
  int record(const std::string& op_kind, const std::vector<int>& inputs);

  // Custom primitive with a hand-written adjoint. `fwd` recomputes the output
  // from current input slots (used by replay); `bwd` reads adj(out) and
  // accumulates into the inputs' adjoints. Pass a null bwd and call
  // set_last_backward() when the closure needs the new node's id.
  int custom(std::string name, std::vector<int> inputs, Tensor value,
             std::function<Tensor()> fwd, std::function<void()> bwd,
             std::optional<ImageLayout> image = std::nullopt);

  void set_last_backward(std::function<void()> bwd) { nodes_.back().backward = std::move(bwd); }

  // Declare an existing node's output as image-shaped (maskable).
  void declare_image(int id, ImageLayout layout);

  // ---- values ----
  const Tensor& value(int id) const { return slots_[static_cast<std::size_t>(id)]; }
  Tensor& mutable_value(int id) { return slots_[static_cast<std::size_t>(id)]; }
  int num_slots() const { return static_cast<int>(slots_.size()); }
  std::size_t num_nodes() const { return nodes_.size(); }

  // Recompute every node's forward value in recorded order.
  void replay();

  // ---- gradients ----
  // d value(output) / d value(param) for each param. Output must be scalar.
  // Params that never reach the output get zero gradients.
  std::vector<Tensor> grad(int output, const std::vector<int>& params);

  // ---- gradient masking (guidance hook) ----
  // Before backward traversal of a masked image node, zero the adjoint
  // entries of every pixel not kept (keep size h*w, nonzero = keep). Forward
  // values are untouched. Throws if an id is not an image node.
  void set_pixel_mask(int image_node_id, std::vector<std::uint8_t> keep);
  void set_pixel_mask(const std::vector<int>& image_node_ids, std::vector<std::uint8_t> keep);
  void clear_pixel_mask();
  bool has_pixel_mask() const { return !masks_.empty(); }

  bool is_image(int id) const { return images_.count(id) != 0; }
  ImageLayout image_layout(int id) const { return images_.at(id); }

  // Adjoint access for custom backward closures (valid during grad()).
  std::vector<double>& adj(int id);
  const std::vector<double>& out_adj(int id) const { return adj_[static_cast<std::size_t>(id)]; }
  bool has_adj(int id) const { return !adj_[static_cast<std::size_t>(id)].empty(); }

 private:
  int push_slot(Tensor v);
  int unary_elementwise(const char* name, int a, std::function<double(double)> f,
                        std::function<double(double, double)> df /* (x, y) -> dy/dx */);

  std::vector<Tensor> slots_;
  std::vector<Node> nodes_;
  std::unordered_map<int, ImageLayout> images_;
  std::unordered_map<int, std::vector<std::uint8_t>> masks_;

  // live only during grad()
  std::vector<std::vector<double>> adj_;
};

// Max over components of |analytic - central FD| / max(|central FD|, 1e-8)
// for a scalar-valued builder. The builder must be deterministic.
using ScalarBuilder = std::function<int(Tape&, const std::vector<int>&)>;
double check_gradient(const ScalarBuilder& f, const std::vector<Tensor>& params, double h);

}  // namespace ct
