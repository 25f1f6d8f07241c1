#pragma once

// Shared helpers for the test suites.

#include <cmath>
#include <random>

#include "mpm_parvi.hpp"

namespace testing_support {

using mpm_parvi::Mat;
using mpm_parvi::Vec;

inline Mat random_matrix(std::mt19937_64& rng, std::size_t d, double lo, double hi) {
  std::uniform_real_distribution<double> u(lo, hi);
  Mat m(d);
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = 0; j < d; ++j) m(i, j) = u(rng);
  return m;
}

/// Random F with det(F) in [det_lo, det_hi]: identity plus noise, rescaled.
inline Mat random_deformation(std::mt19937_64& rng, std::size_t d, double det_lo = 0.5, double det_hi = 2.0) {
  std::uniform_real_distribution<double> target(det_lo, det_hi);
  while (true) {
    Mat f = Mat::identity(d) + random_matrix(rng, d, -0.4, 0.4);
    const double j = mpm_parvi::determinant(f);
    if (!(j > 0.1)) continue;
    const double want = target(rng);
    f *= std::pow(want / j, 1.0 / static_cast<double>(d));
    return f;
  }
}

inline Mat rotation_2d(double theta) {
  return Mat(2, {std::cos(theta), -std::sin(theta), std::sin(theta), std::cos(theta)});
}

/// Random proper rotation in d = 2 or 3.
inline Mat random_rotation(std::mt19937_64& rng, std::size_t d) {
  std::uniform_real_distribution<double> ang(-3.14159, 3.14159);
  if (d == 2) return rotation_2d(ang(rng));
  const double a = ang(rng), b = ang(rng), c = ang(rng);
  Mat rz(3, {std::cos(a), -std::sin(a), 0, std::sin(a), std::cos(a), 0, 0, 0, 1});
  Mat ry(3, {std::cos(b), 0, std::sin(b), 0, 1, 0, -std::sin(b), 0, std::cos(b)});
  Mat rx(3, {1, 0, 0, 0, std::cos(c), -std::sin(c), 0, std::sin(c), std::cos(c)});
  return rz * ry * rx;
}

inline double max_abs_diff(const Mat& a, const Mat& b) { return mpm_parvi::max_abs(a - b); }
inline double max_abs_diff(const Vec& a, const Vec& b) { return mpm_parvi::max_abs(a - b); }

/// Uniform grid centred on the origin.
inline mpm_parvi::GridSpec centred_grid(std::size_t d, std::int64_t k, double h) {
  mpm_parvi::GridSpec g;
  g.dimension = d;
  g.nodes_per_dim = k;
  g.spacing = h;
  g.origin = Vec(d, -0.5 * h * static_cast<double>(k - 1));
  return g;
}

/// Uniform random point in the kernel's interior region of the grid.
inline Vec random_interior(std::mt19937_64& rng, mpm_parvi::KernelKind kernel, const mpm_parvi::GridSpec& g) {
  Vec x(g.dimension);
  for (std::size_t a = 0; a < g.dimension; ++a) {
    auto [lo, hi] = mpm_parvi::interior_bounds(kernel, g, a);
    x[a] = std::uniform_real_distribution<double>(lo, hi)(rng);
  }
  return x;
}

}  // namespace testing_support
