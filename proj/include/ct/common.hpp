#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace ct {

// Shape or dimension mismatch in a tensor/image operation.
class ShapeError : public std::runtime_error {
 public:
  explicit ShapeError(const std::string& msg) : std::runtime_error(msg) {}
};

// Malformed config, schema violation, bad file contents.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// Numerical failure (NaN/Inf) carrying the offending site.
class NumericError : public std::runtime_error {
 public:
  explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

// Point behind the camera where projection is undefined.
class BehindCameraError : public std::domain_error {
 public:
  explicit BehindCameraError(const std::string& msg) : std::domain_error(msg) {}
};

inline void check(bool cond, const std::string& msg) {
  if (!cond) throw std::runtime_error(msg);
}

inline bool is_finite(double v) { return std::isfinite(v); }

}  // namespace ct
