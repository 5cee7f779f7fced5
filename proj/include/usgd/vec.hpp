#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "usgd/errors.hpp"

namespace usgd {

using Vec = std::vector<double>;

inline void require_same_dim(std::span<const double> a, std::span<const double> b,
                             const char* where) {
  if (a.size() != b.size()) {
    throw InvalidInputError(std::string(where) + ": dimension mismatch (" +
                            std::to_string(a.size()) + " vs " + std::to_string(b.size()) + ")");
  }
}

inline double dot(std::span<const double> a, std::span<const double> b) {
  require_same_dim(a, b, "dot");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double squared_norm(std::span<const double> a) {
  double s = 0.0;
  for (double v : a) s += v * v;
  return s;
}

inline double norm(std::span<const double> a) { return std::sqrt(squared_norm(a)); }

// y += a * x
inline void axpy(double a, std::span<const double> x, Vec& y) {
  require_same_dim(x, y, "axpy");
  for (std::size_t i = 0; i < x.size(); ++i) y[i] += a * x[i];
}

inline void scale(Vec& x, double a) {
  for (double& v : x) v *= a;
}

inline bool all_finite(std::span<const double> a) {
  for (double v : a) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

}  // namespace usgd
