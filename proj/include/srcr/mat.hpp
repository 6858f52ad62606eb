#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "srcr/errors.hpp"

namespace srcr {

// Plain row-major matrix of doubles. Inert data carrier used outside the
// autodiff tape; see tensor.hpp for the differentiable counterpart.
struct Mat {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> v;

  Mat() = default;
  Mat(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), v(r * c, fill) {}
  Mat(std::size_t r, std::size_t c, std::vector<double> data)
      : rows(r), cols(c), v(std::move(data)) {
    if (v.size() != rows * cols)
      throw DimensionError("Mat: data length " + std::to_string(v.size()) + " does not match " +
                           std::to_string(rows) + "x" + std::to_string(cols));
  }

  double& at(std::size_t i, std::size_t j) { return v[i * cols + j]; }
  double at(std::size_t i, std::size_t j) const { return v[i * cols + j]; }
  double* row(std::size_t i) { return v.data() + i * cols; }
  const double* row(std::size_t i) const { return v.data() + i * cols; }

  std::string shape() const { return std::to_string(rows) + "x" + std::to_string(cols); }
};

inline double dot(const double* a, const double* b, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += a[i] * b[i];
  return s;
}

inline double sq_dist(const double* a, const double* b, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

inline double l2_norm(const double* a, std::size_t n) { return std::sqrt(dot(a, a, n)); }

}  // namespace srcr
