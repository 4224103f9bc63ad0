#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

namespace blockbp {

inline double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double norm1(std::span<const double> a) {
  double s = 0.0;
  for (double v : a) s += std::fabs(v);
  return s;
}

inline double norm2(std::span<const double> a) {
  double s = 0.0;
  for (double v : a) s += v * v;
  return std::sqrt(s);
}

inline double norm2_diff(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return std::sqrt(s);
}

inline void scale(std::span<double> a, double factor) {
  for (double& v : a) v *= factor;
}

/// a += factor * b
inline void axpy(std::span<double> a, double factor, std::span<const double> b) {
  for (std::size_t i = 0; i < a.size(); ++i) a[i] += factor * b[i];
}

}  // namespace blockbp
