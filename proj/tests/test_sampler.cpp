#include <catch_amalgamated.hpp>

#include <cstring>

#include "support.hpp"

using namespace mpm_parvi;
using Catch::Matchers::ContainsSubstring;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

SimConfig small_config(std::size_t d = 1) {
  SimConfig c;
  c.dimension = d;
  c.particles = d == 1 ? 200 : 400;
  c.nodes_per_dim = d == 1 ? 65 : 33;
  c.length = 16.0;
  c.iterations = 20;
  c.seed = 7;
  c.score_alpha = 0.01;
  c.damping = 2.0;
  c.dt = 0.5 * stable_dt(c);
  return c;
}

bool same_bits(double a, double b) { return std::memcmp(&a, &b, sizeof a) == 0; }

bool same_particles(const std::vector<Particle>& a, const std::vector<Particle>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t p = 0; p < a.size(); ++p) {
    const auto& x = a[p];
    const auto& y = b[p];
    for (std::size_t k = 0; k < x.position.dim(); ++k) {
      if (!same_bits(x.position[k], y.position[k]) || !same_bits(x.velocity[k], y.velocity[k])) return false;
      for (std::size_t l = 0; l < x.position.dim(); ++l) {
        if (!same_bits(x.deformation(k, l), y.deformation(k, l)) || !same_bits(x.affine(k, l), y.affine(k, l))) return false;
      }
    }
  }
  return true;
}

std::vector<TelemetryRow> series(const std::vector<double>& values) {
  std::vector<TelemetryRow> rows;
  for (std::size_t i = 0; i < values.size(); ++i) {
    TelemetryRow r;
    r.iteration = static_cast<std::int64_t>(i);
    r.mean_log_density = values[i];
    r.kinetic_energy = 1.0;
    rows.push_back(r);
  }
  return rows;
}

}  // namespace

TEST_CASE("initialisation is seeded and respects the proposal") {
  const SimConfig c = small_config(2);
  const RunState a = initialize(c), b = initialize(c);
  CHECK(same_particles(a.particles, b.particles));
  SimConfig other = c;
  other.seed = 8;
  CHECK_FALSE(same_particles(a.particles, initialize(other).particles));

  SimConfig box = c;
  box.low = {-3.0, -1.0};
  box.high = {2.0, 0.5};
  for (const auto& p : initialize(box).particles) {
    CHECK(p.position[0] >= -3.0);
    CHECK(p.position[0] <= 2.0);
    CHECK(p.position[1] >= -1.0);
    CHECK(p.position[1] <= 0.5);
    CHECK(p.velocity == Vec(2));
    CHECK(p.deformation == Mat::identity(2));
    CHECK(p.affine == Mat::zero(2));
  }
}

TEST_CASE("gaussian proposal N(0, 0.25 I) in 2D has mean near 0") {
  SimConfig c = small_config(2);
  c.particles = 1000;
  c.proposal = InitKind::Gaussian;
  c.covariance = {0.25, 0.0, 0.0, 0.25};
  c.dt = 0.5 * stable_dt(c);
  const RunState s = initialize(c);
  Vec mean(2);
  for (const auto& p : s.particles) mean += p.position;
  mean *= 1.0 / 1000.0;
  // 3 sigma / sqrt(M) = 3 * 0.5 / sqrt(1000) ~ 0.047
  CHECK(max_abs(mean) < 0.05);
}

TEST_CASE("null dynamics leave every particle bitwise in place") {
  for (auto scheme : {TransferKind::PIC, TransferKind::APIC, TransferKind::FlipBlend}) {
    SimConfig c = small_config(2);
    c.scheme = scheme;
    c.score_alpha = 0.0;
    RunState s = initialize(c);
    const auto before = s.particles;
    for (int i = 0; i < 10; ++i) step(s);
    CHECK(same_particles(before, s.particles));
  }
}

TEST_CASE("single particle hand trace: AtNodes, PIC, d=1") {
  SimConfig c;
  c.dimension = 1;
  c.particles = 1;
  c.nodes_per_dim = 17;
  c.length = 16.0;  // h = 1, nodes at -8..8
  c.scheme = TransferKind::PIC;
  c.force_site = ForceSite::AtNodes;
  c.score_alpha = 0.7;
  c.low = {-1.0};
  c.high = {1.0};
  c.dt = 0.01;
  RunState s = initialize(c);

  SECTION("particle on a node: three-node cubic stencil") {
    s.particles[0].position = Vec{2.0};
    step(s);
    // F = I so there is no internal force; each node i gets
    // v_i = dt * alpha * s(x_i) / (w_i m), and G2P sums w_i v_i.
    const double v = c.dt * 0.7 * (-1.0 - 2.0 - 3.0) / 1.0;
    CHECK_THAT(s.particles[0].velocity[0], WithinRel(v, 1e-14));
    CHECK_THAT(s.particles[0].position[0], WithinRel(2.0 + c.dt * v, 1e-14));
  }
  SECTION("particle off node: four-node stencil") {
    s.particles[0].position = Vec{0.25};
    step(s);
    const double v = c.dt * 0.7 * (1.0 + 0.0 - 1.0 - 2.0);
    CHECK_THAT(s.particles[0].velocity[0], WithinRel(v, 1e-14));
  }
}

TEST_CASE("two steps equal a run of length 2; T = 0 returns the initial state") {
  SimConfig c = small_config(1);
  RunState s = initialize(c);
  step(s);
  step(s);
  c.iterations = 2;
  const RunResult r = run(c);
  CHECK(same_particles(s.particles, r.state.particles));
  CHECK(r.state.telemetry.size() == 3);

  c.iterations = 0;
  int observed = 0;
  const RunResult zero = run(c, [&](const RunState& st) {
    ++observed;
    CHECK(st.iteration == 0);
  });
  CHECK(observed == 1);
  CHECK(same_particles(zero.state.particles, initialize(c).particles));
}

TEST_CASE("snapshot cadence") {
  SimConfig c = small_config(1);
  c.iterations = 25;
  c.snapshot_every = 10;
  std::vector<std::int64_t> seen;
  run(c, [&](const RunState& s) { seen.push_back(s.iteration); });
  CHECK(seen == std::vector<std::int64_t>{0, 10, 20, 25});
}

TEST_CASE("stop rule") {
  const StopParams p{10, 1e-3, 0.0};
  SECTION("disabled or too short") {
    CHECK_FALSE(stop_rule(series(std::vector<double>(50, -1.0)), {0, 1e-3, 0.0}));
    CHECK_FALSE(stop_rule(series(std::vector<double>(10, -1.0)), p));
  }
  SECTION("constant series fires as soon as the window fills") {
    CHECK(stop_rule(series(std::vector<double>(11, -1.0)), p));
  }
  SECTION("increasing series never fires") {
    std::vector<double> v;
    for (int n = 0; n <= 500; ++n) {
      v.push_back(static_cast<double>(n));
      CHECK_FALSE(stop_rule(series(v), p));
    }
  }
  SECTION("geometric convergence with ratio 1/2 fires at iteration 17") {
    // L_n = -1 - 2^-n. The window mean moves by (2^(10-E) - 2^-E) / 10, which
    // first drops below 1e-3 * |previous mean| at E = 17.
    std::vector<double> v;
    std::int64_t fired = -1;
    for (int n = 0; n <= 100 && fired < 0; ++n) {
      v.push_back(-1.0 - std::ldexp(1.0, -n));
      if (stop_rule(series(v), p)) fired = n;
    }
    CHECK(fired == 17);
  }
  SECTION("kinetic floor") {
    auto rows = series({1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11});
    rows.back().kinetic_energy = 1e-9;
    CHECK(stop_rule(rows, {10, 1e-3, 1e-6}));
    CHECK_FALSE(stop_rule(rows, {10, 1e-3, 1e-10}));
  }
}

TEST_CASE("run stops early when the stop rule fires") {
  SimConfig c = small_config(1);
  c.score_alpha = 0.0;
  c.iterations = 100;
  c.stop_window = 5;
  const RunResult r = run(c);
  CHECK(r.stopped_early);
  CHECK(r.state.iteration == 5);
}

TEST_CASE("total particle mass is bitwise constant") {
  SimConfig c = small_config(2);
  RunState s = initialize(c);
  const double m0 = total_particle_mass(s.particles);
  for (int i = 0; i < 20; ++i) {
    step(s);
    CHECK(same_bits(total_particle_mass(s.particles), m0));
  }
}

TEST_CASE("dense and sparse storage give identical trajectories") {
  for (auto site : {ForceSite::AtNodes, ForceSite::AtParticles}) {
    SimConfig c = small_config(2);
    c.force_site = site;
    c.storage = StorageChoice::Dense;
    const RunResult a = run(c);
    c.storage = StorageChoice::Sparse;
    const RunResult b = run(c);
    CHECK(same_particles(a.state.particles, b.state.particles));
  }
}

TEST_CASE("threaded runs are reproducible") {
  SimConfig c = small_config(2);
  c.threads = 4;
  CHECK(same_particles(run(c).state.particles, run(c).state.particles));
}

TEST_CASE("FlipBlend with flip_alpha = 0 equals PIC") {
  SimConfig c = small_config(2);
  c.iterations = 30;
  c.scheme = TransferKind::PIC;
  const RunResult pic = run(c);
  c.scheme = TransferKind::FlipBlend;
  c.flip_alpha = 0.0;
  CHECK(same_particles(pic.state.particles, run(c).state.particles));
}

TEST_CASE("linear kernel with APIC fails at run time with a singular D_p") {
  SimConfig c = small_config(1);
  c.kernel = KernelKind::Linear;
  c.scheme = TransferKind::APIC;
  RunState s = initialize(c);
  RunState ok = initialize(c);
  CHECK_NOTHROW(step(ok));
  s.particles[0].position = Vec{1.0};  // on a node: one-node stencil, D_p = 0
  CHECK_THROWS_AS(step(s), SingularMatrix);
}

TEST_CASE("config validation") {
  SECTION("margin violation") {
    SimConfig c = small_config(1);
    c.low = {-7.9};
    c.high = {0.0};
    CHECK_THROWS_WITH(validate(c), ContainsSubstring("grid margin"));
  }
  SECTION("dt above the stability bound quotes both numbers") {
    SimConfig c = small_config(1);
    const double bound = stable_dt(c);
    // independent recomputation: h = 0.25, rho0 = (1/M) / (8 / M) = 1/8, E = 1, nu = 0
    CHECK_THAT(bound, WithinRel(0.4 * 0.25 / std::sqrt(1.0 / 0.125), 1e-14));
    c.dt = 2.0 * bound;
    try {
      validate(c);
      FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
      REQUIRE(e.problems().size() == 1);
      std::ostringstream dt, b;
      dt.precision(17);
      b.precision(17);
      dt << c.dt;
      b << bound;
      CHECK_THAT(e.problems()[0], ContainsSubstring(dt.str()) && ContainsSubstring(b.str()));
    }
  }
  SECTION("k < 4 and several problems in one pass") {
    SimConfig c = small_config(1);
    c.nodes_per_dim = 3;
    c.particles = 0;
    c.flip_alpha = 2.0;
    try {
      validate(c);
      FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
      CHECK(e.problems().size() == 3);
    }
  }
}
