#pragma once

// Regular Cartesian background grid: geometry plus per-iteration nodal state.

#include <algorithm>
#include <cstdint>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "mpm_parvi/tensor.hpp"

namespace mpm_parvi {

/// Nodes whose mass is at or below this are inactive (unit total particle mass).
inline constexpr double kDefaultMassEpsilon = 1e-12;

using MultiIndex = std::vector<std::int64_t>;

struct GridSpec {
  std::size_t dimension = 1;
  std::int64_t nodes_per_dim = 4;
  double spacing = 1.0;
  Vec origin = Vec(1);

  void validate() const {
    detail::check_dim(dimension);
    if (nodes_per_dim < 4) throw std::invalid_argument("grid needs at least 4 nodes per dimension");
    if (!(spacing > 0.0) || !std::isfinite(spacing)) throw std::invalid_argument("grid spacing must be positive");
    detail::check_same(origin.dim(), dimension);
    (void)node_count();
  }

  /// k^d; throws when it does not fit in 63 bits.
  std::uint64_t node_count() const {
    std::uint64_t n = 1;
    const auto k = static_cast<std::uint64_t>(nodes_per_dim);
    for (std::size_t a = 0; a < dimension; ++a) {
      if (n > std::numeric_limits<std::int64_t>::max() / k) {
        throw std::overflow_error("grid node count overflows");
      }
      n *= k;
    }
    return n;
  }

  /// Row-major: the first index component is the most significant.
  std::uint64_t flat_index(std::span<const std::int64_t> index) const {
    detail::check_same(index.size(), dimension);
    std::uint64_t flat = 0;
    for (std::size_t a = 0; a < dimension; ++a) {
      if (index[a] < 0 || index[a] >= nodes_per_dim) {
        throw std::out_of_range("node index component " + std::to_string(index[a]) +
                                " outside [0, " + std::to_string(nodes_per_dim) + ")");
      }
      flat = flat * static_cast<std::uint64_t>(nodes_per_dim) + static_cast<std::uint64_t>(index[a]);
    }
    return flat;
  }

  MultiIndex unflatten(std::uint64_t flat) const {
    if (flat >= node_count()) throw std::out_of_range("flat node index out of range");
    MultiIndex m(dimension);
    const auto k = static_cast<std::uint64_t>(nodes_per_dim);
    for (std::size_t a = dimension; a-- > 0;) {
      m[a] = static_cast<std::int64_t>(flat % k);
      flat /= k;
    }
    return m;
  }

  friend bool operator==(const GridSpec&, const GridSpec&) = default;
};

inline Vec node_position(const GridSpec& spec, std::span<const std::int64_t> index) {
  (void)spec.flat_index(index);  // range check
  Vec x = spec.origin;
  for (std::size_t a = 0; a < spec.dimension; ++a) x[a] += spec.spacing * static_cast<double>(index[a]);
  return x;
}

inline Vec node_position(const GridSpec& spec, std::uint64_t flat) {
  const MultiIndex m = spec.unflatten(flat);
  return node_position(spec, m);
}

/// Snapshot of one node's state. The grid itself stores these as flat arrays.
struct NodalState {
  double mass = 0.0;
  Vec momentum;
  Vec velocity;
  Vec force_internal;
  Vec force_external;

  static NodalState zero(std::size_t d) { return {0.0, Vec(d), Vec(d), Vec(d), Vec(d)}; }
};

/// momentum / mass on active nodes, zero otherwise.
inline Vec nodal_velocity(const NodalState& s, double mass_epsilon = kDefaultMassEpsilon) {
  if (!(s.mass > mass_epsilon)) return Vec(s.momentum.dim());
  return s.momentum * (1.0 / s.mass);
}

/// Explicit Euler: v + dt (f_int + f_ext) / m on active nodes; inactive nodes stay at zero.
inline Vec apply_momentum_update(const NodalState& s, double dt,
                                 double mass_epsilon = kDefaultMassEpsilon) {
  if (!(s.mass > mass_epsilon)) return Vec(s.velocity.dim());
  Vec v = s.velocity;
  const double scale = dt / s.mass;
  for (std::size_t a = 0; a < v.dim(); ++a) {
    v[a] += scale * (s.force_internal[a] + s.force_external[a]);
  }
  return v;
}

enum class GridStorage { Dense, Sparse };

/// Nodal state storage. Nodes are addressed through "slots": for the dense
/// backend slot == flat index; the sparse backend hands out slots in first-touch
/// order and forgets them on reset.
class Grid {
 public:
  Grid() = default;
  Grid(GridSpec spec, GridStorage storage) : spec_(std::move(spec)), storage_(storage) {
    spec_.validate();
    d_ = spec_.dimension;
    if (storage_ == GridStorage::Dense) {
      const std::uint64_t n = spec_.node_count();
      resize_slots(static_cast<std::size_t>(n));
    }
  }

  const GridSpec& spec() const noexcept { return spec_; }
  GridStorage storage() const noexcept { return storage_; }
  std::size_t dim() const noexcept { return d_; }

  /// Slot for a node, allocating it in sparse mode.
  std::size_t slot(std::uint64_t flat) {
    if (storage_ == GridStorage::Dense) return static_cast<std::size_t>(flat);
    auto [it, inserted] = slot_of_flat_.try_emplace(flat, flat_of_slot_.size());
    if (inserted) {
      flat_of_slot_.push_back(flat);
      resize_slots(flat_of_slot_.size());
    }
    return it->second;
  }

  /// Slot if the node is allocated; -1 otherwise.
  std::int64_t find_slot(std::uint64_t flat) const {
    if (storage_ == GridStorage::Dense) return static_cast<std::int64_t>(flat);
    auto it = slot_of_flat_.find(flat);
    return it == slot_of_flat_.end() ? -1 : static_cast<std::int64_t>(it->second);
  }

  std::size_t slot_count() const noexcept { return mass_.size(); }
  std::uint64_t flat_of_slot(std::size_t s) const {
    return storage_ == GridStorage::Dense ? static_cast<std::uint64_t>(s) : flat_of_slot_[s];
  }

  double& mass(std::size_t s) noexcept { return mass_[s]; }
  double mass(std::size_t s) const noexcept { return mass_[s]; }
  std::span<double> momentum(std::size_t s) noexcept { return {momentum_.data() + s * d_, d_}; }
  std::span<double> velocity(std::size_t s) noexcept { return {velocity_.data() + s * d_, d_}; }
  std::span<double> updated_velocity(std::size_t s) noexcept { return {velocity_new_.data() + s * d_, d_}; }
  std::span<double> force_internal(std::size_t s) noexcept { return {force_int_.data() + s * d_, d_}; }
  std::span<double> force_external(std::size_t s) noexcept { return {force_ext_.data() + s * d_, d_}; }
  std::span<const double> momentum(std::size_t s) const noexcept { return {momentum_.data() + s * d_, d_}; }
  std::span<const double> velocity(std::size_t s) const noexcept { return {velocity_.data() + s * d_, d_}; }
  std::span<const double> updated_velocity(std::size_t s) const noexcept { return {velocity_new_.data() + s * d_, d_}; }
  std::span<const double> force_internal(std::size_t s) const noexcept { return {force_int_.data() + s * d_, d_}; }
  std::span<const double> force_external(std::size_t s) const noexcept { return {force_ext_.data() + s * d_, d_}; }

  // Whole-array views, used for per-worker merges.
  std::span<double> mass_array() noexcept { return mass_; }
  std::span<double> momentum_array() noexcept { return momentum_; }
  std::span<double> force_internal_array() noexcept { return force_int_; }
  std::span<double> force_external_array() noexcept { return force_ext_; }

  NodalState state(std::size_t s) const {
    NodalState n = NodalState::zero(d_);
    n.mass = mass_[s];
    for (std::size_t a = 0; a < d_; ++a) {
      n.momentum[a] = momentum_[s * d_ + a];
      n.velocity[a] = velocity_[s * d_ + a];
      n.force_internal[a] = force_int_[s * d_ + a];
      n.force_external[a] = force_ext_[s * d_ + a];
    }
    return n;
  }

  bool active(std::size_t s, double mass_epsilon) const noexcept { return mass_[s] > mass_epsilon; }

  /// v_i = (m_i v_i) / m_i on every node; zero where inactive.
  void compute_velocities(double mass_epsilon = kDefaultMassEpsilon) {
    for (std::size_t s = 0; s < slot_count(); ++s) {
      double* v = velocity_.data() + s * d_;
      if (!(mass_[s] > mass_epsilon)) {
        std::fill_n(v, d_, 0.0);
        continue;
      }
      const double inv = 1.0 / mass_[s];
      for (std::size_t a = 0; a < d_; ++a) v[a] = momentum_[s * d_ + a] * inv;
    }
  }

  /// Explicit Euler update into the updated-velocity array.
  void update_velocities(double dt, double mass_epsilon = kDefaultMassEpsilon) {
    for (std::size_t s = 0; s < slot_count(); ++s) {
      double* out = velocity_new_.data() + s * d_;
      if (!(mass_[s] > mass_epsilon)) {
        std::fill_n(out, d_, 0.0);
        continue;
      }
      const double scale = dt / mass_[s];
      for (std::size_t a = 0; a < d_; ++a) {
        const std::size_t k = s * d_ + a;
        out[a] = velocity_[k] + scale * (force_int_[k] + force_ext_[k]);
      }
    }
  }

  double total_mass() const noexcept {
    double m = 0.0;
    for (double x : mass_) m += x;
    return m;
  }

  Vec total_momentum() const {
    Vec p(d_);
    for (std::size_t s = 0; s < slot_count(); ++s)
      for (std::size_t a = 0; a < d_; ++a) p[a] += momentum_[s * d_ + a];
    return p;
  }

  /// Zeroes all nodal state; geometry is untouched.
  void reset() {
    if (storage_ == GridStorage::Sparse) {
      slot_of_flat_.clear();
      flat_of_slot_.clear();
      resize_slots(0);
      return;
    }
    std::fill(mass_.begin(), mass_.end(), 0.0);
    std::fill(momentum_.begin(), momentum_.end(), 0.0);
    std::fill(velocity_.begin(), velocity_.end(), 0.0);
    std::fill(velocity_new_.begin(), velocity_new_.end(), 0.0);
    std::fill(force_int_.begin(), force_int_.end(), 0.0);
    std::fill(force_ext_.begin(), force_ext_.end(), 0.0);
  }

 private:
  void resize_slots(std::size_t n) {
    mass_.resize(n, 0.0);
    momentum_.resize(n * d_, 0.0);
    velocity_.resize(n * d_, 0.0);
    velocity_new_.resize(n * d_, 0.0);
    force_int_.resize(n * d_, 0.0);
    force_ext_.resize(n * d_, 0.0);
  }

  GridSpec spec_;
  GridStorage storage_ = GridStorage::Dense;
  std::size_t d_ = 1;
  std::vector<double> mass_;
  std::vector<double> momentum_;
  std::vector<double> velocity_;
  std::vector<double> velocity_new_;
  std::vector<double> force_int_;
  std::vector<double> force_ext_;
  std::unordered_map<std::uint64_t, std::size_t> slot_of_flat_;
  std::vector<std::uint64_t> flat_of_slot_;
};

}  // namespace mpm_parvi
