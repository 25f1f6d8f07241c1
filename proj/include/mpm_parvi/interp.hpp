#pragma once

// B-spline interpolation kernels and tensor-product weight stencils that
// connect a particle to the grid nodes inside the kernel support.

#include <array>
#include <cmath>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "mpm_parvi/errors.hpp"
#include "mpm_parvi/grid.hpp"
#include "mpm_parvi/tensor.hpp"

namespace mpm_parvi {

/// Linear is C0 only: its gradient jumps at integer offsets, so particles that
/// cross cell faces see discontinuous forces. Keep it for tests.
enum class KernelKind { Linear, Quadratic, Cubic };

inline std::string_view to_string(KernelKind k) {
  switch (k) {
    case KernelKind::Linear: return "linear";
    case KernelKind::Quadratic: return "quadratic";
    case KernelKind::Cubic: return "cubic";
  }
  return "?";
}

/// Support radius in grid-spacing units.
inline constexpr double support_radius(KernelKind k) noexcept {
  switch (k) {
    case KernelKind::Linear: return 1.0;
    case KernelKind::Quadratic: return 1.5;
    case KernelKind::Cubic: return 2.0;
  }
  return 0.0;
}

// Branch boundaries are closed from above: |r| < b belongs to the inner branch.
inline double kernel_eval(KernelKind k, double r) noexcept {
  const double a = std::abs(r);
  switch (k) {
    case KernelKind::Linear:
      return a < 1.0 ? 1.0 - a : 0.0;
    case KernelKind::Quadratic:
      if (a < 0.5) return 0.75 - a * a;
      if (a < 1.5) return 0.5 * (1.5 - a) * (1.5 - a);
      return 0.0;
    case KernelKind::Cubic:
      if (a < 1.0) return 0.5 * a * a * a - a * a + 2.0 / 3.0;
      if (a < 2.0) return (2.0 - a) * (2.0 - a) * (2.0 - a) / 6.0;
      return 0.0;
  }
  return 0.0;
}

/// dK/dr.
inline double kernel_grad(KernelKind k, double r) noexcept {
  const double a = std::abs(r);
  const double sign = r < 0.0 ? -1.0 : 1.0;
  switch (k) {
    case KernelKind::Linear:
      return (a < 1.0 && a > 0.0) ? -sign : 0.0;
    case KernelKind::Quadratic:
      if (a < 0.5) return -2.0 * r;
      if (a < 1.5) return -sign * (1.5 - a);
      return 0.0;
    case KernelKind::Cubic:
      if (a < 1.0) return sign * (1.5 * a * a - 2.0 * a);
      if (a < 2.0) return -sign * 0.5 * (2.0 - a) * (2.0 - a);
      return 0.0;
  }
  return 0.0;
}

/// Per-particle cache of the nodes with non-zero weight, their weights, the
/// weight gradients (scaled by 1/h) and the offsets x_i - x_p. Flat storage,
/// reused across iterations to avoid reallocation.
struct WeightStencil {
  std::size_t dim = 0;
  std::vector<std::uint64_t> nodes;
  std::vector<double> weights;
  std::vector<double> gradients;  // size() * dim
  std::vector<double> offsets;    // size() * dim, x_i - x_p

  std::size_t size() const noexcept { return nodes.size(); }
  std::span<const double> gradient(std::size_t j) const noexcept { return {gradients.data() + j * dim, dim}; }
  std::span<const double> offset(std::size_t j) const noexcept { return {offsets.data() + j * dim, dim}; }
  Vec gradient_vec(std::size_t j) const { return Vec(gradient(j)); }
  Vec offset_vec(std::size_t j) const { return Vec(offset(j)); }

  void clear() noexcept {
    nodes.clear();
    weights.clear();
    gradients.clear();
    offsets.clear();
  }
};

/// Interior bounds on each coordinate: a particle needs support_radius * h of
/// clearance from the outer grid nodes.
inline std::pair<double, double> interior_bounds(KernelKind k, const GridSpec& grid, std::size_t axis) {
  const double r = support_radius(k);
  const double lo = grid.origin[axis] + r * grid.spacing;
  const double hi = grid.origin[axis] + (static_cast<double>(grid.nodes_per_dim - 1) - r) * grid.spacing;
  return {lo, hi};
}

inline bool inside_interior(KernelKind k, const GridSpec& grid, const Vec& x) {
  for (std::size_t a = 0; a < grid.dimension; ++a) {
    const auto [lo, hi] = interior_bounds(k, grid, a);
    if (!(x[a] >= lo && x[a] <= hi)) return false;
  }
  return true;
}

/// Fills `out` with the tensor-product stencil of x_p. Throws OutOfDomain when
/// x_p violates the interior margin.
inline void build_stencil(KernelKind kernel, const GridSpec& grid, const Vec& xp, WeightStencil& out) {
  const std::size_t d = grid.dimension;
  detail::check_same(xp.dim(), d);
  const double radius = support_radius(kernel);
  const double inv_h = 1.0 / grid.spacing;

  // 1D factors per axis; at most 4 non-zero nodes per axis for the cubic kernel.
  constexpr std::size_t kMaxPerAxis = 4;
  std::array<std::array<std::int64_t, kMaxPerAxis>, kMaxDim> idx{};
  std::array<std::array<double, kMaxPerAxis>, kMaxDim> w{};
  std::array<std::array<double, kMaxPerAxis>, kMaxDim> dw{};
  std::array<std::size_t, kMaxDim> count{};

  for (std::size_t a = 0; a < d; ++a) {
    const auto [lo, hi] = interior_bounds(kernel, grid, a);
    if (!(xp[a] >= lo && xp[a] <= hi)) {
      throw OutOfDomain("particle coordinate " + std::to_string(xp[a]) + " on axis " + std::to_string(a) +
                        " outside interior [" + std::to_string(lo) + ", " + std::to_string(hi) + "]");
    }
    const double u = (xp[a] - grid.origin[a]) * inv_h;
    const auto first = static_cast<std::int64_t>(std::ceil(u - radius));
    const auto last = static_cast<std::int64_t>(std::floor(u + radius));
    std::size_t c = 0;
    for (std::int64_t i = first; i <= last; ++i) {
      const double r = u - static_cast<double>(i);
      const double k = kernel_eval(kernel, r);
      if (k == 0.0) continue;
      idx[a][c] = i;
      w[a][c] = k;
      dw[a][c] = kernel_grad(kernel, r) * inv_h;
      ++c;
    }
    count[a] = c;
  }

  std::size_t total = 1;
  for (std::size_t a = 0; a < d; ++a) total *= count[a];
  out.dim = d;
  out.nodes.resize(total);
  out.weights.resize(total);
  out.gradients.resize(total * d);
  out.offsets.resize(total * d);

  const auto k = static_cast<std::uint64_t>(grid.nodes_per_dim);
  std::array<std::size_t, kMaxDim> pos{};
  for (std::size_t n = 0; n < total; ++n) {
    std::uint64_t flat = 0;
    double weight = 1.0;
    for (std::size_t a = 0; a < d; ++a) {
      flat = flat * k + static_cast<std::uint64_t>(idx[a][pos[a]]);
      weight *= w[a][pos[a]];
    }
    out.nodes[n] = flat;
    out.weights[n] = weight;
    for (std::size_t a = 0; a < d; ++a) {
      double g = dw[a][pos[a]];
      for (std::size_t b = 0; b < d; ++b)
        if (b != a) g *= w[b][pos[b]];
      out.gradients[n * d + a] = g;
      out.offsets[n * d + a] =
          grid.origin[a] + grid.spacing * static_cast<double>(idx[a][pos[a]]) - xp[a];
    }
    // odometer, last axis fastest (matches the row-major flat index)
    for (std::size_t a = d; a-- > 0;) {
      if (++pos[a] < count[a]) break;
      pos[a] = 0;
    }
  }
}

inline WeightStencil build_stencil(KernelKind kernel, const GridSpec& grid, const Vec& xp) {
  WeightStencil s;
  build_stencil(kernel, grid, xp, s);
  return s;
}

}  // namespace mpm_parvi
