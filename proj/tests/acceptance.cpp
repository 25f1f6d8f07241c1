// Acceptance checks 1-11. Prints one PASS/FAIL line per criterion and exits
// non-zero if any fails. Each check also has a wall-time budget.
//
//   acceptance [criterion ...]     (default: all)

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "support.hpp"

using namespace mpm_parvi;
namespace fs = std::filesystem;
using testing_support::max_abs_diff;

namespace {

const fs::path kConfigs = MPM_PARVI_CONFIG_DIR;

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double a) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

ConstitutiveModel neo_model(double e, double nu) { return {ConstitutiveKind::NeoHookean, lame_from_elastic(e, nu)}; }

bool same_bits(const Vec& a, const Vec& b) {
  return a.dim() == b.dim() && std::memcmp(a.values().data(), b.values().data(), a.dim() * sizeof(double)) == 0;
}

// 1. first_pk_stress against central differences of energy_density.
Outcome constitutive_gradient() {
  std::mt19937_64 rng(1001);
  const ConstitutiveModel m = neo_model(2.0, 0.3);
  const double step = 1e-6;
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t d = 1 + static_cast<std::size_t>(trial % 3);
    const Mat f = testing_support::random_deformation(rng, d, 0.5, 2.0);
    const Mat p = first_pk_stress(m, f);
    Mat fd(d);
    for (std::size_t i = 0; i < d; ++i)
      for (std::size_t j = 0; j < d; ++j) {
        Mat up = f, dn = f;
        up(i, j) += step;
        dn(i, j) -= step;
        fd(i, j) = (energy_density(m, up) - energy_density(m, dn)) / (2.0 * step);
      }
    worst = std::max(worst, max_abs_diff(p, fd) / std::max(max_abs(p), 1.0));
  }
  bool identity_exact = true;
  for (std::size_t d = 1; d <= 3; ++d) {
    identity_exact = identity_exact && energy_density(m, Mat::identity(d)) == 0.0 &&
                     max_abs(first_pk_stress(m, Mat::identity(d))) == 0.0;
  }
  return {worst < 1e-5 && identity_exact,
          "max rel err " + fmt("%.2e", worst) + " (< 1e-5), Psi(I) = P(I) = 0 " + (identity_exact ? "exact" : "NOT exact")};
}

// 2. closed-form Cauchy stress and the stress-conversion cycles.
Outcome stress_identities() {
  using S = StressMeasure;
  const S all[] = {S::Cauchy, S::Kirchhoff, S::FirstPiolaKirchhoff, S::SecondPiolaKirchhoff};
  std::mt19937_64 rng(1002);
  const ConstitutiveModel m = neo_model(2.0, 0.3);
  double closed = 0.0, cycle = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t d = 1 + static_cast<std::size_t>(trial % 3);
    const Mat f = testing_support::random_deformation(rng, d, 0.5, 2.0);
    const Mat sigma = cauchy_stress(m, f);
    closed = std::max(closed, max_abs_diff(sigma, first_pk_stress(m, f) * transpose(f) * (1.0 / determinant(f))));
    const Mat ref[] = {sigma, sigma * determinant(f), first_pk_stress(m, f), inverse(f) * first_pk_stress(m, f)};
    for (int a = 0; a < 4; ++a)
      for (int b = 0; b < 4; ++b) {
        const Mat there = stress_convert(all[a], all[b], ref[a], f);
        cycle = std::max(cycle, max_abs_diff(there, ref[b]));
        cycle = std::max(cycle, max_abs_diff(stress_convert(all[b], all[a], there, f), ref[a]));
      }
  }
  return {closed < 1e-10 && cycle < 1e-10,
          "closed form vs (1/J) P F^T " + fmt("%.2e", closed) + ", conversion cycles " + fmt("%.2e", cycle) + " (< 1e-10)"};
}

// 3. partition of unity, gradient null sum, linear reproduction, D_p.
Outcome interpolation() {
  std::mt19937_64 rng(1003);
  double pou = 0.0, nullsum = 0.0, linear = 0.0, dp_err = 0.0;
  for (KernelKind k : {KernelKind::Linear, KernelKind::Quadratic, KernelKind::Cubic}) {
    for (std::size_t d = 1; d <= 3; ++d) {
      const GridSpec g = testing_support::centred_grid(d, 12, 0.37);
      for (int p = 0; p < 1000; ++p) {
        const Vec x = testing_support::random_interior(rng, k, g);
        const WeightStencil st = build_stencil(k, g, x);
        double w = 0.0;
        Vec grad(d), recon(d);
        Particle probe = Particle::at_rest(x, 1.0, 1.0);
        for (std::size_t j = 0; j < st.size(); ++j) {
          w += st.weights[j];
          grad += st.gradient_vec(j);
          recon += node_position(g, st.nodes[j]) * st.weights[j];
        }
        pou = std::max(pou, std::abs(w - 1.0));
        nullsum = std::max(nullsum, max_abs(grad));
        linear = std::max(linear, max_abs_diff(recon, x));
        if (k != KernelKind::Linear) {
          probe.stencil = st;
          dp_err = std::max(dp_err, max_abs_diff(compute_dp(probe), *closed_form_dp(k, g.spacing, d)));
        }
      }
    }
  }
  const bool ok = pou < 1e-12 && nullsum < 1e-10 && linear < 1e-10 && dp_err < 1e-10;
  return {ok, "|sum w - 1| " + fmt("%.1e", pou) + ", |sum grad w| " + fmt("%.1e", nullsum) + ", linear " +
                  fmt("%.1e", linear) + ", D_p " + fmt("%.1e", dp_err)};
}

std::vector<Particle> moving_particles(std::mt19937_64& rng, const GridSpec& g, std::size_t n) {
  std::uniform_real_distribution<double> mass(0.5, 2.0), vel(-1.0, 1.0);
  std::vector<Particle> ps;
  for (std::size_t p = 0; p < n; ++p) {
    Particle q = Particle::at_rest(testing_support::random_interior(rng, KernelKind::Cubic, g), mass(rng), 0.01);
    for (std::size_t a = 0; a < g.dimension; ++a) q.velocity[a] = vel(rng);
    q.affine = testing_support::random_matrix(rng, g.dimension, -0.5, 0.5);
    ps.push_back(q);
  }
  return ps;
}

// 4. P2G conservation of mass and momentum.
Outcome conservation() {
  std::mt19937_64 rng(1004);
  double worst = 0.0;
  for (std::size_t d = 1; d <= 3; ++d) {
    const GridSpec g = testing_support::centred_grid(d, 12, 0.5);
    for (int trial = 0; trial < 10; ++trial) {
      auto ps = moving_particles(rng, g, 500);
      build_stencils(ps, KernelKind::Cubic, g, 1);
      const double m = total_particle_mass(ps);
      const Vec mv = total_particle_momentum(ps);
      for (bool apic : {false, true}) {
        Grid grid(g, GridStorage::Dense);
        if (apic) p2g_apic(ps, grid, KernelKind::Cubic);
        else p2g_pic(ps, grid);
        worst = std::max(worst, std::abs(grid.total_mass() - m) / m);
        worst = std::max(worst, max_abs_diff(grid.total_momentum(), mv) / std::max(norm(mv), 1e-300));
      }
    }
  }
  return {worst < 1e-12, "max rel err " + fmt("%.2e", worst) + " (< 1e-12)"};
}

// 5. rigid rotation through P2G -> G2P.
Outcome affine_reproduction() {
  std::mt19937_64 rng(1005);
  const GridSpec g = testing_support::centred_grid(2, 24, 0.25);
  const Mat spin(2, {0.0, -1.0, 1.0, 0.0});
  auto field = [&](const Vec& x) { return spin * x; };
  std::vector<Particle> ps;
  const Mat dp = *closed_form_dp(KernelKind::Cubic, g.spacing, 2);
  for (int p = 0; p < 2000; ++p) {
    Particle q = Particle::at_rest(testing_support::random_interior(rng, KernelKind::Cubic, g), 1e-3, 1e-3);
    q.velocity = field(q.position);
    q.affine = spin * dp;
    ps.push_back(q);
  }
  build_stencils(ps, KernelKind::Cubic, g, 1);
  auto round_trip = [&](TransferKind kind) {
    auto copy = ps;
    Grid grid(g, GridStorage::Dense);
    if (kind == TransferKind::APIC) p2g_apic(copy, grid, KernelKind::Cubic);
    else p2g_pic(copy, grid);
    grid.compute_velocities();
    grid.update_velocities(0.0);
    g2p(copy, grid, {kind, 0.0}, 0.0, KernelKind::Cubic, BoundaryPolicy::None);
    double err = 0.0;
    for (std::size_t p = 0; p < ps.size(); ++p) err = std::max(err, max_abs_diff(copy[p].velocity, field(ps[p].position)));
    return err;
  };
  const double apic = round_trip(TransferKind::APIC), pic = round_trip(TransferKind::PIC);
  return {apic < 1e-8 && pic > apic, "APIC err " + fmt("%.2e", apic) + " (< 1e-8), PIC err " + fmt("%.2e", pic)};
}

// 6. alpha = 0 from rest: nothing moves.
Outcome null_dynamics() {
  SimConfig c;
  c.dimension = 2;
  c.particles = 500;
  c.nodes_per_dim = 32;
  c.score_alpha = 0.0;
  c.seed = 6;
  c.dt = 0.5 * stable_dt(c);
  RunState s = initialize(c);
  const auto before = s.particles;
  for (int i = 0; i < 100; ++i) step(s);
  std::size_t moved = 0;
  for (std::size_t p = 0; p < before.size(); ++p) moved += !same_bits(before[p].position, s.particles[p].position);
  return {moved == 0, std::to_string(moved) + " of " + std::to_string(before.size()) + " particles moved in 100 iterations"};
}

// 7. 1D standard normal.
Outcome gaussian_1d() {
  const SimConfig c = load_config(kConfigs / "gaussian_1d.cfg");
  const RunResult r = run(c);
  const Moments got = moments(r.positions());
  const auto oracle = direct_sample(c.target_spec(), c.particles, c.seed);
  const Moments ref = moments(oracle);
  const double mean = got.mean[0], sd = std::sqrt(got.covariance(0, 0));
  // Oracle sampling spread at M = 2000: se(mean) = 1/sqrt(M), se(sd) = 1/sqrt(2M).
  const double se_mean = 1.0 / std::sqrt(static_cast<double>(c.particles));
  const double se_sd = 1.0 / std::sqrt(2.0 * static_cast<double>(c.particles));
  const double oracle_mean = ref.mean[0], oracle_sd = std::sqrt(ref.covariance(0, 0));
  const bool oracle_ok = std::abs(oracle_mean) < 3.0 * se_mean && std::abs(oracle_sd - 1.0) < 3.0 * se_sd;
  const bool ok = std::abs(mean) < 0.1 && sd >= 0.85 && sd <= 1.15 && oracle_ok;
  return {ok, "mean " + fmt("%+.4f", mean) + " sd " + fmt("%.4f", sd) + " after " + std::to_string(r.state.iteration) +
                  " iterations; oracle mean " + fmt("%+.4f", oracle_mean) + " sd " + fmt("%.4f", oracle_sd) +
                  "; mmd " + fmt("%.4f", mmd_rbf(r.positions(), oracle))};
}

// 8. bimodal mixture at +-3: both half-lines keep >= 20%.
Outcome bimodal_1d() {
  const SimConfig c = load_config(kConfigs / "bimodal_1d.cfg");
  const RunResult r = run(c);
  std::size_t left = 0;
  for (const auto& x : r.positions()) left += x[0] < 0.0;
  const double fl = static_cast<double>(left) / static_cast<double>(c.particles);
  const Moments got = moments(r.positions());
  return {fl >= 0.2 && fl <= 0.8, "left " + fmt("%.3f", fl) + " right " + fmt("%.3f", 1.0 - fl) + " (each >= 0.20), sd " +
                                      fmt("%.3f", std::sqrt(got.covariance(0, 0)))};
}

// 9. two single-threaded runs write byte-identical files.
Outcome determinism() {
  SimConfig c = load_config(kConfigs / "gaussian_1d.cfg");
  c.iterations = 300;
  c.snapshot_every = 100;
  c.threads = 1;
  const fs::path root = fs::temp_directory_path() / "mpm_parvi_acceptance_determinism";
  fs::remove_all(root);
  for (const char* tag : {"a", "b"}) {
    const fs::path dir = root / tag;
    fs::create_directories(dir);
    const RunResult r = run(c, [&](const RunState& s) {
      write_snapshot(dir / ("snapshot_" + std::to_string(s.iteration) + ".csv"), s);
    });
    write_telemetry(dir / "telemetry.csv", r.state.telemetry);
  }
  std::size_t files = 0, differ = 0;
  for (const auto& e : fs::directory_iterator(root / "a")) {
    ++files;
    differ += read_text_file(e.path()) != read_text_file(root / "b" / e.path().filename());
  }
  fs::remove_all(root);
  return {files == 5 && differ == 0, std::to_string(files) + " files compared, " + std::to_string(differ) + " differ"};
}

// 10. per-iteration time at a fixed grid when M doubles. The three sizes are
// measured in interleaved rounds; each size keeps its best median, which
// filters out interference from other processes.
Outcome scaling() {
  auto make = [](std::size_t particles) {
    SimConfig c;
    c.dimension = 2;
    c.particles = particles;
    c.nodes_per_dim = 512;
    c.length = 16.0;
    c.storage = StorageChoice::Dense;
    c.score_alpha = 1e-4;
    c.seed = 10;
    c.record_timing = true;
    c.dt = 0.5 * stable_dt(c);
    RunState s = initialize(c);
    for (int i = 0; i < 3; ++i) step(s);
    return s;
  };
  const std::size_t sizes[] = {2000, 4000, 8000};
  std::vector<RunState> states;
  for (std::size_t m : sizes) states.push_back(make(m));
  double best[3] = {1e300, 1e300, 1e300};
  for (int round = 0; round < 5; ++round) {
    for (std::size_t k = 0; k < 3; ++k) {
      std::vector<double> ms;
      for (int i = 0; i < 21; ++i) {
        step(states[k]);
        ms.push_back(states[k].telemetry.back().wall_ms);
      }
      std::nth_element(ms.begin(), ms.begin() + 10, ms.end());
      best[k] = std::min(best[k], ms[10]);
    }
  }
  const double r1 = best[1] / best[0], r2 = best[2] / best[1];
  return {r1 <= 1.6 && r2 <= 1.6, "ms/iter " + fmt("%.2f", best[0]) + " / " + fmt("%.2f", best[1]) + " / " +
                                       fmt("%.2f", best[2]) + " for M = 2k/4k/8k on a 512^2 grid; ratios " +
                                       fmt("%.2f", r1) + ", " + fmt("%.2f", r2) + " (<= 1.6)"};
}

// 11. FlipBlend(0) trajectories equal PIC bit for bit.
Outcome scheme_reduction() {
  SimConfig c = load_config(kConfigs / "gaussian_1d.cfg");
  c.alpha_schedule = AlphaSchedule::Kind::Constant;
  c.scheme = TransferKind::PIC;
  RunState pic = initialize(c);
  c.scheme = TransferKind::FlipBlend;
  c.flip_alpha = 0.0;
  RunState blend = initialize(c);
  std::size_t mismatched_steps = 0;
  for (int i = 0; i < 50; ++i) {
    step(pic);
    step(blend);
    bool same = true;
    for (std::size_t p = 0; p < pic.particles.size(); ++p) {
      same = same && same_bits(pic.particles[p].position, blend.particles[p].position) &&
             same_bits(pic.particles[p].velocity, blend.particles[p].velocity);
    }
    mismatched_steps += !same;
  }
  return {mismatched_steps == 0, std::to_string(mismatched_steps) + " of 50 iterations differ"};
}

struct Criterion {
  int id;
  const char* name;
  double budget_s;
  std::function<Outcome()> check;
};

}  // namespace

int main(int argc, char** argv) {
  const std::vector<Criterion> all{
      {1, "constitutive gradient", 5, constitutive_gradient},
      {2, "stress identities", 5, stress_identities},
      {3, "interpolation", 30, interpolation},
      {4, "P2G conservation", 10, conservation},
      {5, "APIC affine reproduction", 10, affine_reproduction},
      {6, "null dynamics", 10, null_dynamics},
      {7, "1D standard Gaussian", 120, gaussian_1d},
      {8, "1D bimodal mixture", 120, bimodal_1d},
      {9, "determinism", 60, determinism},
      {10, "scaling", 180, scaling},
      {11, "scheme reduction", 60, scheme_reduction},
  };
  std::vector<int> selected;
  for (int i = 1; i < argc; ++i) selected.push_back(std::atoi(argv[i]));

  int failures = 0;
  for (const auto& c : all) {
    if (!selected.empty() && std::find(selected.begin(), selected.end(), c.id) == selected.end()) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.check();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const bool pass = o.pass && secs < c.budget_s;
    failures += !pass;
    std::printf("[%s] criterion %d: %s: %s; %.2f s (budget %.0f s)\n", pass ? "PASS" : "FAIL", c.id, c.name,
                o.detail.c_str(), secs, c.budget_s);
    std::fflush(stdout);
  }
  return failures == 0 ? 0 : 1;
}
