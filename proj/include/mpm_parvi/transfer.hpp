#pragma once

// Particle <-> grid transfers: PIC and APIC particle-to-grid, internal force
// assembly, and the grid-to-particle update of velocity, position, affine
// matrix and deformation gradient.

#include <algorithm>
#include <cmath>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "mpm_parvi/constitutive.hpp"
#include "mpm_parvi/grid.hpp"
#include "mpm_parvi/interp.hpp"
#include "mpm_parvi/parallel.hpp"
#include "mpm_parvi/tensor.hpp"

namespace mpm_parvi {

struct Particle {
  Vec position;
  Vec velocity;
  double mass = 0.0;     // constant for the whole run
  double volume0 = 0.0;  // reference volume
  Mat deformation;       // F, starts at identity
  Mat affine;            // APIC B, starts at zero
  WeightStencil stencil;

  static Particle at_rest(const Vec& x, double mass, double volume0) {
    const std::size_t d = x.dim();
    return {x, Vec(d), mass, volume0, Mat::identity(d), Mat::zero(d), {}};
  }
};

enum class TransferKind { PIC, APIC, FlipBlend };

inline std::string_view to_string(TransferKind k) {
  switch (k) {
    case TransferKind::PIC: return "pic";
    case TransferKind::APIC: return "apic";
    case TransferKind::FlipBlend: return "flip_blend";
  }
  return "?";
}

/// flip_alpha weights the FLIP increment in the blended velocity. It is unrelated
/// to the score amplification constant, which the sampler calls score_alpha.
struct TransferScheme {
  TransferKind kind = TransferKind::APIC;
  double flip_alpha = 0.0;
};

enum class BoundaryPolicy { Clamp, None };

/// Nodal channels that particle-to-grid scatters can accumulate into.
enum class NodeChannel { Momentum, ForceInternal, ForceExternal };

namespace detail {

inline std::span<double> channel_array(Grid& grid, NodeChannel c) {
  switch (c) {
    case NodeChannel::Momentum: return grid.momentum_array();
    case NodeChannel::ForceInternal: return grid.force_internal_array();
    case NodeChannel::ForceExternal: return grid.force_external_array();
  }
  return {};
}

// Accumulates per-particle contributions into the grid. With more than one
// worker (dense storage only) every worker fills private buffers which are
// merged in worker order, so results depend only on the thread count.
// emit(flat, mass, vec) adds `mass` to the nodal mass (if with_mass) and
// `vec` to the selected channel.
template <class PerParticle>
void scatter(Grid& grid, std::size_t count, unsigned threads, NodeChannel channel, bool with_mass,
             PerParticle&& per_particle) {
  const std::size_t d = grid.dim();
  const unsigned workers =
      grid.storage() == GridStorage::Dense ? effective_workers(count, threads) : 1u;
  if (workers == 1) {
    auto emit = [&](std::uint64_t flat, double m, const double* v) {
      const std::size_t s = grid.slot(flat);
      if (with_mass) grid.mass(s) += m;
      double* dst = channel_array(grid, channel).data() + s * d;
      for (std::size_t a = 0; a < d; ++a) dst[a] += v[a];
    };
    for (std::size_t p = 0; p < count; ++p) per_particle(p, emit);
    return;
  }
  const std::size_t n = grid.slot_count();
  std::vector<std::vector<double>> mass_buf(workers), vec_buf(workers);
  parallel_chunks(count, workers, [&](unsigned w, std::size_t b, std::size_t e) {
    if (with_mass) mass_buf[w].assign(n, 0.0);
    vec_buf[w].assign(n * d, 0.0);
    auto emit = [&](std::uint64_t flat, double m, const double* v) {
      const auto s = static_cast<std::size_t>(flat);
      if (with_mass) mass_buf[w][s] += m;
      double* dst = vec_buf[w].data() + s * d;
      for (std::size_t a = 0; a < d; ++a) dst[a] += v[a];
    };
    for (std::size_t p = b; p < e; ++p) per_particle(p, emit);
  });
  auto mass = grid.mass_array();
  auto vec = channel_array(grid, channel);
  for (unsigned w = 0; w < workers; ++w) {
    if (with_mass)
      for (std::size_t s = 0; s < n; ++s) mass[s] += mass_buf[w][s];
    for (std::size_t k = 0; k < n * d; ++k) vec[k] += vec_buf[w][k];
  }
}

}  // namespace detail

inline void build_stencils(std::span<Particle> particles, KernelKind kernel, const GridSpec& grid,
                           unsigned threads = 1) {
  parallel_chunks(particles.size(), threads, [&](unsigned, std::size_t b, std::size_t e) {
    for (std::size_t p = b; p < e; ++p) build_stencil(kernel, grid, particles[p].position, particles[p].stencil);
  });
}

/// m_i = sum_p w_ip m_p, (m v)_i = sum_p w_ip m_p v_p.
inline void p2g_pic(std::span<const Particle> particles, Grid& grid, unsigned threads = 1) {
  const std::size_t d = grid.dim();
  detail::scatter(grid, particles.size(), threads, NodeChannel::Momentum, true, [&](std::size_t p, auto& emit) {
    const Particle& pt = particles[p];
    const WeightStencil& st = pt.stencil;
    std::array<double, kMaxDim> mv{};
    for (std::size_t j = 0; j < st.size(); ++j) {
      const double wm = st.weights[j] * pt.mass;
      for (std::size_t a = 0; a < d; ++a) mv[a] = wm * pt.velocity[a];
      emit(st.nodes[j], wm, mv.data());
    }
  });
}

/// D_p = sum_i w_ip (x_i - x_p)(x_i - x_p)^T from the cached stencil.
inline Mat compute_dp(const Particle& particle) {
  const WeightStencil& st = particle.stencil;
  const std::size_t d = st.dim;
  Mat dp(d);
  for (std::size_t j = 0; j < st.size(); ++j) {
    const auto off = st.offset(j);
    for (std::size_t a = 0; a < d; ++a)
      for (std::size_t b = 0; b < d; ++b) dp(a, b) += st.weights[j] * off[a] * off[b];
  }
  return dp;
}

/// h^2/4 I (quadratic) and h^2/3 I (cubic); the linear kernel has no constant D_p.
inline std::optional<Mat> closed_form_dp(KernelKind kernel, double spacing, std::size_t dim) {
  switch (kernel) {
    case KernelKind::Quadratic: return Mat::scaled_identity(dim, 0.25 * spacing * spacing);
    case KernelKind::Cubic: return Mat::scaled_identity(dim, spacing * spacing / 3.0);
    case KernelKind::Linear: return std::nullopt;
  }
  return std::nullopt;
}

/// APIC: (m v)_i = sum_p w_ip m_p [v_p + B_p D_p^{-1} (x_i - x_p)]; masses as in PIC.
/// B_p D_p^{-1} is formed once per particle before the node loop. Throws
/// SingularMatrix when D_p cannot be inverted (possible with the linear kernel).
inline void p2g_apic(std::span<const Particle> particles, Grid& grid, KernelKind kernel, unsigned threads = 1) {
  const std::size_t d = grid.dim();
  std::vector<Mat> affine(particles.size());
  const auto closed = closed_form_dp(kernel, grid.spec().spacing, d);
  const std::optional<Mat> closed_inv = closed ? std::optional<Mat>(inverse(*closed)) : std::nullopt;
  parallel_chunks(particles.size(), threads, [&](unsigned, std::size_t b, std::size_t e) {
    for (std::size_t p = b; p < e; ++p) {
      const Mat dp_inv = closed_inv ? *closed_inv : inverse(compute_dp(particles[p]));
      affine[p] = particles[p].affine * dp_inv;
    }
  });
  detail::scatter(grid, particles.size(), threads, NodeChannel::Momentum, true, [&](std::size_t p, auto& emit) {
    const Particle& pt = particles[p];
    const WeightStencil& st = pt.stencil;
    const Mat& c = affine[p];
    std::array<double, kMaxDim> mv{};
    for (std::size_t j = 0; j < st.size(); ++j) {
      const double wm = st.weights[j] * pt.mass;
      const auto off = st.offset(j);
      for (std::size_t a = 0; a < d; ++a) {
        double v = pt.velocity[a];
        for (std::size_t b = 0; b < d; ++b) v += c(a, b) * off[b];
        mv[a] = wm * v;
      }
      emit(st.nodes[j], wm, mv.data());
    }
  });
}

namespace detail {

inline void scatter_stress(std::span<const Particle> particles, Grid& grid, const std::vector<Mat>& stress,
                           unsigned threads) {
  const std::size_t d = grid.dim();
  scatter(grid, particles.size(), threads, NodeChannel::ForceInternal, false, [&](std::size_t p, auto& emit) {
    const WeightStencil& st = particles[p].stencil;
    const Mat& s = stress[p];
    std::array<double, kMaxDim> f{};
    for (std::size_t j = 0; j < st.size(); ++j) {
      const auto g = st.gradient(j);
      for (std::size_t a = 0; a < d; ++a) {
        double v = 0.0;
        for (std::size_t b = 0; b < d; ++b) v += s(a, b) * g[b];
        f[a] = -v;
      }
      emit(st.nodes[j], 0.0, f.data());
    }
  });
}

}  // namespace detail

/// f_i^int = -sum_p V_p^0 P(F_p) F_p^T grad w_ip. The per-particle V_p^0 P F^T is
/// computed once per particle and cached before the node loop.
inline void assemble_internal_forces(std::span<const Particle> particles, Grid& grid,
                                     const ConstitutiveModel& model, unsigned threads = 1) {
  std::vector<Mat> stress(particles.size());
  parallel_chunks(particles.size(), threads, [&](unsigned, std::size_t b, std::size_t e) {
    for (std::size_t p = b; p < e; ++p) {
      const Mat& f = particles[p].deformation;
      stress[p] = first_pk_stress(model, f) * transpose(f) * particles[p].volume0;
    }
  });
  detail::scatter_stress(particles, grid, stress, threads);
}

/// Same forces through the current volume and Cauchy stress:
/// f_i^int = -sum_p V_p^n sigma_p grad w_ip with V_p^n = det(F_p) V_p^0.
inline void assemble_internal_forces_cauchy(std::span<const Particle> particles, Grid& grid,
                                            const ConstitutiveModel& model, unsigned threads = 1) {
  std::vector<Mat> stress(particles.size());
  parallel_chunks(particles.size(), threads, [&](unsigned, std::size_t b, std::size_t e) {
    for (std::size_t p = b; p < e; ++p) {
      const Mat& f = particles[p].deformation;
      stress[p] = cauchy_stress(model, f) * (determinant(f) * particles[p].volume0);
    }
  });
  detail::scatter_stress(particles, grid, stress, threads);
}

struct G2PStats {
  std::size_t deformation_resets = 0;
  std::size_t clamped = 0;
};

/// Grid-to-particle update using the grid's updated velocities.
///
///   PIC/APIC:  v_p = sum_i w_ip v_i^{n+1}
///   FlipBlend: v_p = (1-a) sum_i w_ip v_i^{n+1} + a (v_p + sum_i w_ip (v_i^{n+1} - v_i^n))
///   x_p += dt sum_i w_ip v_i^{n+1}              (all schemes)
///   B_p = sum_i w_ip v_i^{n+1} (x_i - x_p)^T     (APIC only)
///   F_p = (I + dt sum_i v_i^{n+1} grad w_ip^T) F_p
///
/// A deformation gradient whose determinant would drop to kSingularDeterminant
/// or below is reset to the identity and counted. With BoundaryPolicy::Clamp,
/// positions leaving the interior margin are clamped and the outward velocity
/// component is zeroed.
inline G2PStats g2p(std::span<Particle> particles, const Grid& grid, const TransferScheme& scheme, double dt,
                    KernelKind kernel, BoundaryPolicy boundary = BoundaryPolicy::Clamp, unsigned threads = 1) {
  const std::size_t d = grid.dim();
  const GridSpec& spec = grid.spec();
  std::array<std::pair<double, double>, kMaxDim> bounds{};
  for (std::size_t a = 0; a < d; ++a) bounds[a] = interior_bounds(kernel, spec, a);

  const unsigned workers = effective_workers(particles.size(), threads);
  std::vector<G2PStats> partial(workers);
  parallel_chunks(particles.size(), workers, [&](unsigned w, std::size_t b, std::size_t e) {
    for (std::size_t p = b; p < e; ++p) {
      Particle& pt = particles[p];
      const WeightStencil& st = pt.stencil;
      Vec v_pic(d), v_delta(d);
      Mat grad_v(d), affine(d);
      for (std::size_t j = 0; j < st.size(); ++j) {
        const std::int64_t s = grid.find_slot(st.nodes[j]);
        if (s < 0) continue;
        const auto slot = static_cast<std::size_t>(s);
        const auto vn = grid.updated_velocity(slot);
        const auto vo = grid.velocity(slot);
        const double wt = st.weights[j];
        const auto g = st.gradient(j);
        const auto off = st.offset(j);
        for (std::size_t a = 0; a < d; ++a) {
          v_pic[a] += wt * vn[a];
          v_delta[a] += wt * (vn[a] - vo[a]);
          for (std::size_t c = 0; c < d; ++c) {
            grad_v(a, c) += vn[a] * g[c];
            affine(a, c) += wt * vn[a] * off[c];
          }
        }
      }

      if (scheme.kind == TransferKind::FlipBlend && scheme.flip_alpha != 0.0) {
        const double fa = scheme.flip_alpha;
        Vec blended(d);
        for (std::size_t a = 0; a < d; ++a)
          blended[a] = (1.0 - fa) * v_pic[a] + fa * (pt.velocity[a] + v_delta[a]);
        pt.velocity = blended;
      } else {
        pt.velocity = v_pic;
      }
      if (scheme.kind == TransferKind::APIC) pt.affine = affine;

      for (std::size_t a = 0; a < d; ++a) pt.position[a] += dt * v_pic[a];

      Mat step = Mat::identity(d) + grad_v * dt;
      Mat f_new = step * pt.deformation;
      if (!(determinant(f_new) > kSingularDeterminant)) {
        f_new = Mat::identity(d);
        ++partial[w].deformation_resets;
      }
      pt.deformation = f_new;

      if (boundary == BoundaryPolicy::Clamp) {
        bool clamped = false;
        for (std::size_t a = 0; a < d; ++a) {
          const auto [lo, hi] = bounds[a];
          if (pt.position[a] < lo) {
            pt.position[a] = lo;
            pt.velocity[a] = std::max(pt.velocity[a], 0.0);
            clamped = true;
          } else if (pt.position[a] > hi) {
            pt.position[a] = hi;
            pt.velocity[a] = std::min(pt.velocity[a], 0.0);
            clamped = true;
          }
        }
        if (clamped) ++partial[w].clamped;
      }
    }
  });
  G2PStats total;
  for (const auto& s : partial) {
    total.deformation_resets += s.deformation_resets;
    total.clamped += s.clamped;
  }
  return total;
}

inline double total_particle_mass(std::span<const Particle> particles) {
  double m = 0.0;
  for (const auto& p : particles) m += p.mass;
  return m;
}

inline Vec total_particle_momentum(std::span<const Particle> particles) {
  Vec total(particles.empty() ? 1 : particles.front().position.dim());
  for (const auto& p : particles) total += p.velocity * p.mass;
  return total;
}

}  // namespace mpm_parvi
