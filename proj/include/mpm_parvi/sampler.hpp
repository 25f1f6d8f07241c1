#pragma once

// The MPM-ParVI loop: particles form an elastic body that deforms under an
// external force built from the target's score. Each iteration runs one
// explicit MPM cycle (stencils, P2G, grid update, G2P, grid reset).

#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "mpm_parvi/constitutive.hpp"
#include "mpm_parvi/errors.hpp"
#include "mpm_parvi/grid.hpp"
#include "mpm_parvi/interp.hpp"
#include "mpm_parvi/log.hpp"
#include "mpm_parvi/target.hpp"
#include "mpm_parvi/tensor.hpp"
#include "mpm_parvi/transfer.hpp"

namespace mpm_parvi {

enum class InitKind { Uniform, Gaussian };
enum class StorageChoice { Auto, Dense, Sparse };

/// Full run specification. Field names match the config-file keys; the
/// comment after each group names its config section.
struct SimConfig {
  // [simulation]
  std::size_t dimension = 1;
  std::size_t particles = 1000;
  double dt = 1e-3;
  std::int64_t iterations = 1000;
  KernelKind kernel = KernelKind::Cubic;
  TransferKind scheme = TransferKind::APIC;
  double flip_alpha = 0.0;
  double score_alpha = 1.0;
  AlphaSchedule::Kind alpha_schedule = AlphaSchedule::Kind::Constant;
  double alpha_start = 0.0;
  std::int64_t alpha_ramp_iterations = 0;
  ForceSite force_site = ForceSite::AtNodes;
  std::vector<double> gravity;  // empty: no gravity
  double damping = 0.0;         // drag rate c: nodal force -c m_i v_i
  std::uint64_t seed = 0;
  double cfl = 0.4;
  double mass_epsilon = kDefaultMassEpsilon;
  BoundaryPolicy boundary = BoundaryPolicy::Clamp;
  unsigned threads = 1;
  std::int64_t stop_window = 0;  // 0 disables the stop rule
  double stop_tol_rel = 1e-6;
  double stop_kinetic_floor = 0.0;

  // [grid]
  std::int64_t nodes_per_dim = 64;
  double length = 8.0;          // edge length of the cubic domain
  std::vector<double> origin;   // empty: domain centred on 0
  StorageChoice storage = StorageChoice::Auto;
  std::uint64_t sparse_threshold = std::uint64_t{1} << 22;

  // [material]
  ConstitutiveKind model = ConstitutiveKind::NeoHookean;
  double youngs_modulus = 1.0;
  double poissons_ratio = 0.0;
  double particle_volume = 0.0;  // 0: init bounding-box volume / particles

  // [target]
  TargetKind target = TargetKind::StdGaussian;
  std::vector<double> means;
  std::vector<double> covariances;
  std::vector<double> weights;
  std::vector<double> params;

  // [init]
  InitKind proposal = InitKind::Uniform;
  std::vector<double> low;         // uniform box; empty: central 50% of the domain
  std::vector<double> high;
  std::vector<double> mean;        // gaussian; empty: domain centre
  std::vector<double> covariance;  // gaussian, d*d; empty: identity

  // [output]
  std::int64_t snapshot_every = 100;  // 0: first and last only
  bool record_timing = false;         // wall_ms stays 0 unless set

  friend bool operator==(const SimConfig&, const SimConfig&) = default;

  GridSpec grid_spec() const {
    GridSpec g;
    g.dimension = dimension;
    g.nodes_per_dim = nodes_per_dim;
    g.spacing = length / static_cast<double>(nodes_per_dim - 1);
    g.origin = Vec(dimension, -0.5 * length);
    if (!origin.empty())
      for (std::size_t a = 0; a < dimension; ++a) g.origin[a] = origin[a];
    return g;
  }

  TargetSpec target_spec() const { return {target, dimension, means, covariances, weights, params}; }

  AlphaSchedule schedule() const { return {alpha_schedule, score_alpha, alpha_start, alpha_ramp_iterations}; }

  MaterialParams material() const { return lame_from_elastic(youngs_modulus, poissons_ratio); }
};

/// Axis-aligned box the initial particles are drawn from (gaussian: mean +- 3 sd).
inline std::pair<Vec, Vec> init_bounding_box(const SimConfig& c) {
  const GridSpec g = c.grid_spec();
  Vec lo(c.dimension), hi(c.dimension);
  for (std::size_t a = 0; a < c.dimension; ++a) {
    if (c.proposal == InitKind::Uniform) {
      lo[a] = c.low.empty() ? g.origin[a] + 0.25 * c.length : c.low[a];
      hi[a] = c.high.empty() ? g.origin[a] + 0.75 * c.length : c.high[a];
    } else {
      const double m = c.mean.empty() ? g.origin[a] + 0.5 * c.length : c.mean[a];
      const double var = c.covariance.empty() ? 1.0 : c.covariance[a * c.dimension + a];
      lo[a] = m - 3.0 * std::sqrt(var);
      hi[a] = m + 3.0 * std::sqrt(var);
    }
  }
  return {lo, hi};
}

inline double reference_particle_volume(const SimConfig& c) {
  if (c.particle_volume > 0.0) return c.particle_volume;
  const auto [lo, hi] = init_bounding_box(c);
  double v = 1.0;
  for (std::size_t a = 0; a < c.dimension; ++a) v *= hi[a] - lo[a];
  return v / static_cast<double>(c.particles);
}

/// Elastic wave speed sqrt((lambda + 2 mu) / rho0) with rho0 = m_p / V_p^0.
inline double elastic_wave_speed(const SimConfig& c) {
  const MaterialParams m = c.material();
  const double rho0 = (1.0 / static_cast<double>(c.particles)) / reference_particle_volume(c);
  return std::sqrt((m.lambda + 2.0 * m.mu) / rho0);
}

/// Largest stable step: cfl * h / (v_max + wave speed).
inline double stable_dt(const SimConfig& c, double v_max = 0.0) {
  return c.cfl * c.grid_spec().spacing / (v_max + elastic_wave_speed(c));
}

/// Collects every constraint violation; throws ConfigError if any.
inline void validate(const SimConfig& c) {
  std::vector<std::string> bad;
  auto fail = [&](std::string msg) { bad.push_back(std::move(msg)); };
  const std::size_t d = c.dimension;
  if (d < 1 || d > kMaxDim) {
    fail("dimension must be in [1, " + std::to_string(kMaxDim) + "]");
    throw ConfigError(bad);
  }
  if (c.particles < 1) fail("particles must be >= 1");
  if (!(c.dt > 0.0)) fail("dt must be positive");
  if (c.iterations < 0) fail("iterations must be >= 0");
  if (c.nodes_per_dim < 4) fail("nodes_per_dim must be >= 4");
  if (!(c.length > 0.0)) fail("length must be positive");
  if (!c.origin.empty() && c.origin.size() != d) fail("origin must have " + std::to_string(d) + " values");
  if (!(c.flip_alpha >= 0.0 && c.flip_alpha <= 1.0)) fail("flip_alpha must be in [0, 1]");
  if (!c.gravity.empty() && c.gravity.size() != d) fail("gravity must have " + std::to_string(d) + " values");
  if (!(c.damping >= 0.0)) fail("damping must be >= 0");
  if (c.damping * c.dt >= 1.0) fail("damping * dt must be < 1");
  if (!(c.cfl > 0.0)) fail("cfl must be positive");
  if (!(c.mass_epsilon >= 0.0)) fail("mass_epsilon must be >= 0");
  if (c.threads < 1) fail("threads must be >= 1");
  if (c.stop_window < 0) fail("stop_window must be >= 0");
  if (c.snapshot_every < 0) fail("snapshot_every must be >= 0");
  if (c.alpha_schedule == AlphaSchedule::Kind::LinearRamp && c.alpha_ramp_iterations < 1)
    fail("alpha_ramp_iterations must be >= 1 for a linear_ramp schedule");
  if (c.particle_volume < 0.0) fail("particle_volume must be >= 0");

  bool material_ok = true;
  try {
    (void)c.material();
  } catch (const std::exception& e) {
    fail(std::string("material: ") + e.what());
    material_ok = false;
  }
  try {
    (void)builtin_target(c.target_spec());
  } catch (const std::exception& e) {
    fail(std::string("target: ") + e.what());
  }

  if (c.proposal == InitKind::Uniform) {
    if (!c.low.empty() && c.low.size() != d) fail("low must have " + std::to_string(d) + " values");
    if (!c.high.empty() && c.high.size() != d) fail("high must have " + std::to_string(d) + " values");
  } else {
    if (!c.mean.empty() && c.mean.size() != d) fail("mean must have " + std::to_string(d) + " values");
    if (!c.covariance.empty()) {
      if (c.covariance.size() != d * d) {
        fail("covariance must have " + std::to_string(d * d) + " values");
      } else {
        Mat cov(d);
        for (std::size_t i = 0; i < d * d; ++i) cov(i / d, i % d) = c.covariance[i];
        try {
          (void)detail::cholesky(cov);
        } catch (const std::exception& e) {
          fail(std::string("covariance: ") + e.what());
        }
      }
    }
  }
  if (!bad.empty()) throw ConfigError(bad);

  // Geometry-dependent checks need the basic fields to be sane.
  const GridSpec g = c.grid_spec();
  const auto [lo, hi] = init_bounding_box(c);
  for (std::size_t a = 0; a < d; ++a) {
    const auto [ilo, ihi] = interior_bounds(c.kernel, g, a);
    if (c.proposal == InitKind::Uniform) {
      if (!(lo[a] < hi[a])) fail("low: init box is empty on axis " + std::to_string(a));
      if (lo[a] < ilo || hi[a] > ihi) {
        std::ostringstream os;
        os << "low: init box [" << lo[a] << ", " << hi[a] << "] on axis " << a << " violates the grid margin ["
           << ilo << ", " << ihi << "]";
        fail(os.str());
      }
    } else {
      const double m = 0.5 * (lo[a] + hi[a]);
      if (m < ilo || m > ihi) fail("mean: init mean on axis " + std::to_string(a) + " lies outside the grid interior");
    }
  }
  if (material_ok && bad.empty()) {
    const double bound = stable_dt(c);
    if (c.dt > bound) {
      std::ostringstream os;
      os.precision(17);
      os << "dt = " << c.dt << " exceeds the stability bound " << bound;
      fail(os.str());
    }
  }
  if (!bad.empty()) throw ConfigError(bad);
}

struct TelemetryRow {
  std::int64_t iteration = 0;
  double mean_log_density = 0.0;
  double kinetic_energy = 0.0;
  std::size_t f_reset_count = 0;  // cumulative
  double wall_ms = 0.0;
};

struct RunState {
  SimConfig config;
  GridSpec spec;
  std::shared_ptr<const TargetDensity> target;
  std::vector<Particle> particles;
  Grid grid;
  std::unique_ptr<NodeScoreTable> node_scores;  // AtNodes only
  std::vector<TelemetryRow> telemetry;
  std::int64_t iteration = 0;
  std::size_t f_resets = 0;
  std::size_t cfl_warnings = 0;
};

namespace detail {

inline TelemetryRow measure(const RunState& s, double wall_ms) {
  TelemetryRow row;
  row.iteration = s.iteration;
  double lp = 0.0, ke = 0.0;
  for (const auto& p : s.particles) {
    lp += s.target->log_density(p.position);
    ke += 0.5 * p.mass * dot(p.velocity, p.velocity);
  }
  row.mean_log_density = s.particles.empty() ? 0.0 : lp / static_cast<double>(s.particles.size());
  row.kinetic_energy = ke;
  row.f_reset_count = s.f_resets;
  row.wall_ms = wall_ms;
  return row;
}

inline std::vector<Vec> draw_initial_positions(const SimConfig& c) {
  const std::size_t d = c.dimension;
  const GridSpec g = c.grid_spec();
  std::mt19937_64 rng(c.seed);
  std::vector<Vec> xs;
  xs.reserve(c.particles);
  const auto [lo, hi] = init_bounding_box(c);
  if (c.proposal == InitKind::Uniform) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (std::size_t p = 0; p < c.particles; ++p) {
      Vec x(d);
      for (std::size_t a = 0; a < d; ++a) x[a] = lo[a] + (hi[a] - lo[a]) * u(rng);
      xs.push_back(x);
    }
    return xs;
  }
  // Gaussian proposal; draws outside the grid interior are redrawn.
  Mat cov = Mat::identity(d);
  if (!c.covariance.empty())
    for (std::size_t i = 0; i < d * d; ++i) cov(i / d, i % d) = c.covariance[i];
  const Mat chol = cholesky(cov);
  Vec mean(d);
  for (std::size_t a = 0; a < d; ++a) mean[a] = 0.5 * (lo[a] + hi[a]);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::size_t attempts = 0;
  while (xs.size() < c.particles) {
    if (++attempts > 1000 * c.particles) throw std::runtime_error("gaussian proposal mostly falls outside the grid");
    Vec z(d);
    for (std::size_t a = 0; a < d; ++a) z[a] = normal(rng);
    Vec x = mean + chol * z;
    if (inside_interior(c.kernel, g, x)) xs.push_back(x);
  }
  return xs;
}

}  // namespace detail

/// Draws the particles from the proposal (v = 0, F = I, B = 0), allocates the
/// grid and, for node-site forces, builds the score table once.
inline RunState initialize(const SimConfig& config) {
  validate(config);
  RunState s;
  s.config = config;
  s.spec = config.grid_spec();
  s.target = std::make_shared<const TargetDensity>(builtin_target(config.target_spec()));

  const bool dense = config.storage == StorageChoice::Dense ||
                     (config.storage == StorageChoice::Auto && s.spec.node_count() <= config.sparse_threshold);
  s.grid = Grid(s.spec, dense ? GridStorage::Dense : GridStorage::Sparse);

  const double mass = 1.0 / static_cast<double>(config.particles);
  const double volume0 = reference_particle_volume(config);
  for (const Vec& x : detail::draw_initial_positions(config)) {
    s.particles.push_back(Particle::at_rest(x, mass, volume0));
  }
  if (config.force_site == ForceSite::AtNodes) {
    s.node_scores = std::make_unique<NodeScoreTable>(s.target.get(), s.spec, dense);
  }
  s.telemetry.push_back(detail::measure(s, 0.0));
  return s;
}

/// One MPM cycle. Throws SingularMatrix (APIC with a degenerate D_p) or
/// std::runtime_error on non-finite particle positions.
inline void step(RunState& s) {
  const auto t0 = std::chrono::steady_clock::now();
  const SimConfig& c = s.config;
  const std::size_t d = c.dimension;
  const unsigned threads = c.threads;
  const std::int64_t n = s.iteration + 1;

  // (1) weights and gradients from x_p^n, once per iteration
  build_stencils(s.particles, c.kernel, s.spec, threads);

  // (2) P2G
  if (c.scheme == TransferKind::APIC) {
    p2g_apic(s.particles, s.grid, c.kernel, threads);
  } else {
    p2g_pic(s.particles, s.grid, threads);
  }

  // (3) nodal velocities
  s.grid.compute_velocities(c.mass_epsilon);

  // (4) internal forces
  assemble_internal_forces(s.particles, s.grid, ConstitutiveModel{c.model, c.material()}, threads);

  // external forces
  const double alpha = c.schedule().at(n);
  if (c.force_site == ForceSite::AtNodes) {
    if (alpha != 0.0) {
      for (std::size_t slot = 0; slot < s.grid.slot_count(); ++slot) {
        if (!s.grid.active(slot, c.mass_epsilon)) continue;
        const auto score = s.node_scores->at(s.grid.flat_of_slot(slot));
        auto f = s.grid.force_external(slot);
        for (std::size_t a = 0; a < d; ++a) f[a] += alpha * score[a];
      }
    }
  } else {
    external_force_at_particles_p2g(*s.target, alpha, s.particles, s.grid, threads);
  }
  if (!c.gravity.empty() || c.damping != 0.0) {
    for (std::size_t slot = 0; slot < s.grid.slot_count(); ++slot) {
      const double m = s.grid.mass(slot);
      if (!(m > c.mass_epsilon)) continue;
      auto f = s.grid.force_external(slot);
      const auto v = s.grid.velocity(slot);
      for (std::size_t a = 0; a < d; ++a) {
        if (!c.gravity.empty()) f[a] += m * c.gravity[a];
        f[a] -= c.damping * m * v[a];
      }
    }
  }

  // (5) explicit Euler on the grid
  s.grid.update_velocities(c.dt, c.mass_epsilon);

  // (6) G2P
  const G2PStats stats = g2p(s.particles, s.grid, {c.scheme, c.flip_alpha}, c.dt, c.kernel, c.boundary, threads);
  s.f_resets += stats.deformation_resets;

  // (7) reset
  s.grid.reset();

  double v_max = 0.0;
  for (const auto& p : s.particles) {
    if (!all_finite(p.position)) {
      throw std::runtime_error("non-finite particle position at iteration " + std::to_string(n));
    }
    v_max = std::max(v_max, max_abs(p.velocity));
  }
  if (c.dt > stable_dt(c, v_max)) {
    if (s.cfl_warnings++ == 0) {
      log::warn("dt exceeds the stability bound at iteration " + std::to_string(n) +
                " (v_max = " + std::to_string(v_max) + ")");
    }
  }

  s.iteration = n;
  double wall_ms = 0.0;
  if (c.record_timing) {
    wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  }
  s.telemetry.push_back(detail::measure(s, wall_ms));
}

struct StopParams {
  std::int64_t window = 0;
  double tol_rel = 1e-6;
  double kinetic_floor = 0.0;
};

/// Fires once at least window+1 rows exist and either the window-mean of the
/// mean log-density moved by less than tol_rel (relative) between the last two
/// windows offset by one row, or the latest kinetic energy is below the floor.
/// window = 0 disables the rule.
inline bool stop_rule(std::span<const TelemetryRow> rows, const StopParams& params) {
  if (params.window <= 0) return false;
  const auto w = static_cast<std::size_t>(params.window);
  if (rows.size() < w + 1) return false;
  if (rows.back().kinetic_energy < params.kinetic_floor) return true;
  const std::size_t end = rows.size();
  double now = 0.0, prev = 0.0;
  for (std::size_t i = end - w; i < end; ++i) now += rows[i].mean_log_density;
  for (std::size_t i = end - w - 1; i < end - 1; ++i) prev += rows[i].mean_log_density;
  now /= static_cast<double>(w);
  prev /= static_cast<double>(w);
  const double scale = std::max(std::abs(prev), 1e-12);
  return std::abs(now - prev) / scale < params.tol_rel;
}

struct RunResult {
  RunState state;
  bool stopped_early = false;

  std::vector<Vec> positions() const {
    std::vector<Vec> xs;
    xs.reserve(state.particles.size());
    for (const auto& p : state.particles) xs.push_back(p.position);
    return xs;
  }
};

using SnapshotObserver = std::function<void(const RunState&)>;

/// Iterates until `iterations` or the stop rule fires. The observer sees
/// iteration 0, every snapshot_every-th iteration and the final state.
inline RunResult run(const SimConfig& config, const SnapshotObserver& observer = {}) {
  RunResult r{initialize(config), false};
  RunState& s = r.state;
  if (observer) observer(s);
  const StopParams stop{config.stop_window, config.stop_tol_rel, config.stop_kinetic_floor};
  std::int64_t last_snapshot = 0;
  while (s.iteration < config.iterations) {
    step(s);
    if (observer && config.snapshot_every > 0 && s.iteration % config.snapshot_every == 0) {
      observer(s);
      last_snapshot = s.iteration;
    }
    if (stop_rule(s.telemetry, stop)) {
      r.stopped_early = s.iteration < config.iterations;
      break;
    }
  }
  if (observer && last_snapshot != s.iteration) observer(s);
  return r;
}

}  // namespace mpm_parvi
