#pragma once

#include <cstddef>
#include <initializer_list>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "ct/common.hpp"

namespace ct {

// Dense double-precision tensor, row-major, value semantics. Images use
// channel-last layout (H, W, C): flat = (y*W + x)*C + c.
struct Tensor {
  std::vector<int> shape;
  std::vector<double> data;

  Tensor() = default;
  Tensor(std::vector<int> s, std::vector<double> d) : shape(std::move(s)), data(std::move(d)) {
    if (static_cast<std::size_t>(num_elements(shape)) != data.size())
      throw ShapeError("tensor: data length " + std::to_string(data.size()) +
                       " does not match shape " + shape_string(shape));
  }

  static long long num_elements(const std::vector<int>& s) {
    long long n = 1;
    for (int d : s) n *= d;
    return n;
  }

  static std::string shape_string(const std::vector<int>& s) {
    std::ostringstream os;
    os << "[";
    for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
    os << "]";
    return os.str();
  }

  static Tensor zeros(std::vector<int> s) {
    auto n = num_elements(s);
    return Tensor(std::move(s), std::vector<double>(static_cast<std::size_t>(n), 0.0));
  }

  static Tensor full(std::vector<int> s, double v) {
    auto n = num_elements(s);
    return Tensor(std::move(s), std::vector<double>(static_cast<std::size_t>(n), v));
  }

  static Tensor scalar(double v) { return Tensor({1}, {v}); }

  static Tensor from(std::initializer_list<double> vals) {
    return Tensor({static_cast<int>(vals.size())}, std::vector<double>(vals));
  }

  long long size() const { return static_cast<long long>(data.size()); }
  bool is_scalar() const { return data.size() == 1; }

  double& operator[](std::size_t i) { return data[i]; }
  double operator[](std::size_t i) const { return data[i]; }

  bool same_shape(const Tensor& o) const { return shape == o.shape; }

  bool all_finite() const {
    for (double v : data)
      if (!std::isfinite(v)) return false;
    return true;
  }

  double sum() const {
    double s = 0.0;
    for (double v : data) s += v;
    return s;
  }
};

inline void require_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (!a.same_shape(b))
    throw ShapeError(std::string(op) + ": shape mismatch " + Tensor::shape_string(a.shape) +
                     " vs " + Tensor::shape_string(b.shape));
}

}  // namespace ct
