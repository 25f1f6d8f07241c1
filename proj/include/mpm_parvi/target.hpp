#pragma once

// Target densities (log-density and score oracles) and the external force
// field built from the score.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <numbers>
#include <optional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "mpm_parvi/grid.hpp"
#include "mpm_parvi/log.hpp"
#include "mpm_parvi/tensor.hpp"
#include "mpm_parvi/transfer.hpp"

namespace mpm_parvi {

class TargetDensity {
 public:
  using LogDensityFn = std::function<double(const Vec&)>;
  using ScoreFn = std::function<Vec(const Vec&)>;

  TargetDensity() = default;
  TargetDensity(std::size_t dimension, LogDensityFn log_density, std::optional<ScoreFn> score = std::nullopt)
      : dimension_(dimension), log_density_(std::move(log_density)), score_(std::move(score)) {
    detail::check_dim(dimension);
  }

  std::size_t dimension() const noexcept { return dimension_; }
  bool has_analytic_score() const noexcept { return score_.has_value(); }
  const LogDensityFn& log_density_fn() const noexcept { return log_density_; }

  double log_density(const Vec& x) const { return log_density_(x); }
  Vec score(const Vec& x) const;

 private:
  std::size_t dimension_ = 1;
  LogDensityFn log_density_;
  std::optional<ScoreFn> score_;
};

/// Central-difference gradient of a log-density. Without an explicit step,
/// coordinate j uses 1e-5 * (1 + |x_j|). Throws std::domain_error when a probe
/// evaluates to a non-finite value.
inline Vec numerical_score(const TargetDensity::LogDensityFn& log_density, const Vec& x,
                           std::optional<double> step = std::nullopt) {
  if (step && !(*step > 0.0)) throw std::invalid_argument("finite-difference step must be positive");
  Vec g(x.dim());
  Vec probe = x;
  for (std::size_t j = 0; j < x.dim(); ++j) {
    const double h = step ? *step : 1e-5 * (1.0 + std::abs(x[j]));
    probe[j] = x[j] + h;
    const double up = log_density(probe);
    probe[j] = x[j] - h;
    const double down = log_density(probe);
    probe[j] = x[j];
    if (!std::isfinite(up) || !std::isfinite(down)) {
      throw std::domain_error("non-finite log-density while differencing coordinate " + std::to_string(j));
    }
    g[j] = (up - down) / (2.0 * h);
  }
  return g;
}

inline Vec TargetDensity::score(const Vec& x) const {
  if (score_) return (*score_)(x);
  return numerical_score(log_density_, x);
}

enum class TargetKind { StdGaussian, GaussianMixture, Banana, Donut };

inline std::string_view to_string(TargetKind k) {
  switch (k) {
    case TargetKind::StdGaussian: return "std_gaussian";
    case TargetKind::GaussianMixture: return "gaussian_mixture";
    case TargetKind::Banana: return "banana";
    case TargetKind::Donut: return "donut";
  }
  return "?";
}

/// Flat-list parameterisation, as written in run configs.
///
///   gaussian_mixture: means = K*d values; covariances = K*d*d values (empty = identity);
///                     weights = K values (empty = equal).
///   banana:           params = {a, b}: x0 ~ N(0, a^2), x1 | x0 ~ N(b (x0^2 - a^2), 1),
///                     other coordinates N(0, 1). Defaults {1, 0.5}. Needs d >= 2.
///   donut:            params = {radius, width}: log p = -(|x| - radius)^2 / (2 width^2).
///                     Defaults {2, 0.5}.
struct TargetSpec {
  TargetKind kind = TargetKind::StdGaussian;
  std::size_t dimension = 1;
  std::vector<double> means;
  std::vector<double> covariances;
  std::vector<double> weights;
  std::vector<double> params;

  friend bool operator==(const TargetSpec&, const TargetSpec&) = default;
};

namespace detail {

// Lower Cholesky factor; throws when the matrix is not symmetric positive definite.
inline Mat cholesky(const Mat& a) {
  const std::size_t d = a.dim();
  Mat l(d);
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = 0; j < d; ++j)
      if (std::abs(a(i, j) - a(j, i)) > 1e-12 * (1.0 + std::abs(a(i, j)))) {
        throw std::invalid_argument("covariance is not symmetric");
      }
  for (std::size_t j = 0; j < d; ++j) {
    double s = a(j, j);
    for (std::size_t k = 0; k < j; ++k) s -= l(j, k) * l(j, k);
    if (!(s > 0.0)) throw std::invalid_argument("covariance is not positive definite");
    l(j, j) = std::sqrt(s);
    for (std::size_t i = j + 1; i < d; ++i) {
      double t = a(i, j);
      for (std::size_t k = 0; k < j; ++k) t -= l(i, k) * l(j, k);
      l(i, j) = t / l(j, j);
    }
  }
  return l;
}

struct MixtureComponent {
  Vec mean;
  Mat precision;
  Mat chol;  // lower factor of the covariance
  double log_norm = 0.0;  // log weight - (d/2) log 2pi - (1/2) log det Sigma
};

inline std::vector<MixtureComponent> mixture_components(const TargetSpec& spec) {
  const std::size_t d = spec.dimension;
  if (spec.means.empty() || spec.means.size() % d != 0) {
    throw std::invalid_argument("gaussian_mixture: means must hold K*d values");
  }
  const std::size_t k = spec.means.size() / d;
  if (!spec.covariances.empty() && spec.covariances.size() != k * d * d) {
    throw std::invalid_argument("gaussian_mixture: covariances must hold K*d*d values");
  }
  if (!spec.weights.empty() && spec.weights.size() != k) {
    throw std::invalid_argument("gaussian_mixture: weights must hold K values");
  }
  double wsum = 0.0;
  for (std::size_t c = 0; c < k; ++c) {
    const double w = spec.weights.empty() ? 1.0 : spec.weights[c];
    if (!(w > 0.0) || !std::isfinite(w)) throw std::invalid_argument("gaussian_mixture: weights must be positive");
    wsum += w;
  }
  std::vector<MixtureComponent> out;
  for (std::size_t c = 0; c < k; ++c) {
    MixtureComponent comp;
    comp.mean = Vec(std::span<const double>(spec.means.data() + c * d, d));
    Mat cov = Mat::identity(d);
    if (!spec.covariances.empty()) {
      for (std::size_t i = 0; i < d; ++i)
        for (std::size_t j = 0; j < d; ++j) cov(i, j) = spec.covariances[c * d * d + i * d + j];
    }
    comp.chol = cholesky(cov);
    comp.precision = inverse_gauss(cov);
    double log_det = 0.0;
    for (std::size_t i = 0; i < d; ++i) log_det += 2.0 * std::log(comp.chol(i, i));
    const double w = (spec.weights.empty() ? 1.0 : spec.weights[c]) / wsum;
    comp.log_norm = std::log(w) - 0.5 * static_cast<double>(d) * std::log(2.0 * std::numbers::pi) - 0.5 * log_det;
    out.push_back(std::move(comp));
  }
  return out;
}

inline double param_or(const std::vector<double>& params, std::size_t i, double fallback) {
  return i < params.size() ? params[i] : fallback;
}

}  // namespace detail

/// Builds a target with an analytic score.
inline TargetDensity builtin_target(const TargetSpec& spec) {
  const std::size_t d = spec.dimension;
  detail::check_dim(d);
  switch (spec.kind) {
    case TargetKind::StdGaussian:
      return TargetDensity(
          d, [](const Vec& x) { return -0.5 * dot(x, x); }, [](const Vec& x) { return -x; });

    case TargetKind::GaussianMixture: {
      auto comps = std::make_shared<const std::vector<detail::MixtureComponent>>(detail::mixture_components(spec));
      auto log_terms = [comps](const Vec& x, std::vector<double>& terms) -> double {
        terms.resize(comps->size());
        for (std::size_t c = 0; c < comps->size(); ++c) {
          const auto& comp = (*comps)[c];
          const Vec r = x - comp.mean;
          terms[c] = comp.log_norm - 0.5 * dot(r, comp.precision * r);
        }
        return *std::max_element(terms.begin(), terms.end());
      };
      auto log_density = [log_terms](const Vec& x) {
        thread_local std::vector<double> terms;
        const double m = log_terms(x, terms);
        double s = 0.0;
        for (double t : terms) s += std::exp(t - m);
        return m + std::log(s);
      };
      auto score = [comps, log_terms](const Vec& x) {
        thread_local std::vector<double> terms;
        const double m = log_terms(x, terms);
        double total = 0.0;
        for (double& t : terms) total += (t = std::exp(t - m));
        Vec g(x.dim());
        for (std::size_t c = 0; c < comps->size(); ++c) {
          const auto& comp = (*comps)[c];
          g -= (comp.precision * (x - comp.mean)) * (terms[c] / total);
        }
        return g;
      };
      return TargetDensity(d, log_density, score);
    }

    case TargetKind::Banana: {
      if (d < 2) throw std::invalid_argument("banana target needs dimension >= 2");
      const double a = detail::param_or(spec.params, 0, 1.0);
      const double b = detail::param_or(spec.params, 1, 0.5);
      if (!(a > 0.0)) throw std::invalid_argument("banana: scale must be positive");
      auto log_density = [a, b](const Vec& x) {
        const double t = x[1] - b * (x[0] * x[0] - a * a);
        double s = -0.5 * x[0] * x[0] / (a * a) - 0.5 * t * t;
        for (std::size_t j = 2; j < x.dim(); ++j) s -= 0.5 * x[j] * x[j];
        return s;
      };
      auto score = [a, b](const Vec& x) {
        const double t = x[1] - b * (x[0] * x[0] - a * a);
        Vec g = -x;
        g[0] = -x[0] / (a * a) + 2.0 * b * x[0] * t;
        g[1] = -t;
        return g;
      };
      return TargetDensity(d, log_density, score);
    }

    case TargetKind::Donut: {
      const double radius = detail::param_or(spec.params, 0, 2.0);
      const double width = detail::param_or(spec.params, 1, 0.5);
      if (!(radius > 0.0) || !(width > 0.0)) throw std::invalid_argument("donut: radius and width must be positive");
      auto log_density = [radius, width](const Vec& x) {
        const double r = norm(x) - radius;
        return -0.5 * r * r / (width * width);
      };
      auto score = [radius, width](const Vec& x) {
        const double n = norm(x);
        if (n == 0.0) return Vec(x.dim());
        return x * (-(n - radius) / (width * width * n));
      };
      return TargetDensity(d, log_density, score);
    }
  }
  throw std::invalid_argument("unknown target");
}

/// Exact i.i.d. draws from a built-in target, used as a reference sample.
/// The donut has no direct sampler and throws std::invalid_argument.
inline std::vector<Vec> direct_sample(const TargetSpec& spec, std::size_t count, std::uint64_t seed) {
  const std::size_t d = spec.dimension;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<Vec> out;
  out.reserve(count);
  switch (spec.kind) {
    case TargetKind::StdGaussian:
      for (std::size_t i = 0; i < count; ++i) {
        Vec x(d);
        for (std::size_t a = 0; a < d; ++a) x[a] = normal(rng);
        out.push_back(x);
      }
      return out;
    case TargetKind::GaussianMixture: {
      const auto comps = detail::mixture_components(spec);
      // discrete_distribution normalises the weights itself
      std::vector<double> w(comps.size(), 1.0);
      if (!spec.weights.empty()) w = spec.weights;
      std::discrete_distribution<std::size_t> pick(w.begin(), w.end());
      for (std::size_t i = 0; i < count; ++i) {
        const auto& c = comps[pick(rng)];
        Vec z(d);
        for (std::size_t a = 0; a < d; ++a) z[a] = normal(rng);
        out.push_back(c.mean + c.chol * z);
      }
      return out;
    }
    case TargetKind::Banana: {
      if (d < 2) throw std::invalid_argument("banana target needs dimension >= 2");
      const double a = detail::param_or(spec.params, 0, 1.0);
      const double b = detail::param_or(spec.params, 1, 0.5);
      for (std::size_t i = 0; i < count; ++i) {
        Vec x(d);
        for (std::size_t j = 0; j < d; ++j) x[j] = normal(rng);
        x[0] *= a;
        x[1] += b * (x[0] * x[0] - a * a);
        out.push_back(x);
      }
      return out;
    }
    case TargetKind::Donut:
      throw std::invalid_argument("donut target has no direct sampler");
  }
  return out;
}

enum class ForceSite { AtNodes, AtParticles };

inline std::string_view to_string(ForceSite s) { return s == ForceSite::AtNodes ? "nodes" : "particles"; }

/// Score amplification over iterations. Constant by default; LinearRamp goes
/// from `start` to `value` over `ramp_iterations` iterations and then holds.
struct AlphaSchedule {
  enum class Kind { Constant, LinearRamp };
  Kind kind = Kind::Constant;
  double value = 1.0;
  double start = 0.0;
  std::int64_t ramp_iterations = 0;

  /// Alpha applied during iteration n (n >= 1).
  double at(std::int64_t n) const noexcept {
    if (kind == Kind::Constant || ramp_iterations <= 0) return value;
    if (n >= ramp_iterations) return value;
    const double t = static_cast<double>(n) / static_cast<double>(ramp_iterations);
    return start + (value - start) * t;
  }

  friend bool operator==(const AlphaSchedule&, const AlphaSchedule&) = default;
};

/// Cached per-node score table (alpha = 1). Dense grids fill it once up front;
/// sparse grids fill each node on first use. Entries never change afterwards.
class NodeScoreTable {
 public:
  NodeScoreTable() = default;
  NodeScoreTable(const TargetDensity* target, const GridSpec& spec, bool dense) : target_(target), spec_(spec), dense_(dense) {
    if (dense_) {
      const auto n = static_cast<std::size_t>(spec_.node_count());
      const std::size_t d = spec_.dimension;
      values_.assign(n * d, 0.0);
      for (std::size_t flat = 0; flat < n; ++flat) fill(flat, values_.data() + flat * d);
    }
  }

  /// Score at a node; writes d values.
  std::span<const double> at(std::uint64_t flat) {
    const std::size_t d = spec_.dimension;
    if (dense_) return {values_.data() + flat * d, d};
    auto [it, inserted] = sparse_.try_emplace(flat, values_.size());
    if (inserted) {
      values_.resize(values_.size() + d);
      fill(flat, values_.data() + it->second);
    }
    return {values_.data() + it->second, d};
  }

  std::size_t non_finite_nodes() const noexcept { return non_finite_; }
  std::span<const double> raw() const noexcept { return values_; }

 private:
  void fill(std::uint64_t flat, double* out) {
    const Vec x = node_position(spec_, flat);
    Vec s(spec_.dimension);
    bool ok = true;
    try {
      s = target_->score(x);
      ok = all_finite(s);
    } catch (const std::domain_error&) {
      ok = false;
    }
    if (!ok) {
      if (non_finite_++ == 0) log::warn("non-finite score at a grid node; its external force is set to zero");
      s = Vec(spec_.dimension);
    }
    std::copy_n(s.data(), spec_.dimension, out);
  }

  const TargetDensity* target_ = nullptr;
  GridSpec spec_;
  bool dense_ = true;
  std::vector<double> values_;
  std::unordered_map<std::uint64_t, std::size_t> sparse_;
  std::size_t non_finite_ = 0;
};

/// f_i^ext = alpha * score(x_i) for every node of a dense grid, flat row-major (N*d values).
inline std::vector<double> external_force_at_nodes(const TargetDensity& target, double alpha, const GridSpec& spec) {
  NodeScoreTable table(&target, spec, true);
  std::vector<double> out(table.raw().begin(), table.raw().end());
  for (double& v : out) v *= alpha;
  return out;
}

/// Accumulates f_i^ext += sum_p w_ip alpha score(x_p) into the grid. Particles
/// with a non-finite score contribute nothing.
inline void external_force_at_particles_p2g(const TargetDensity& target, double alpha,
                                            std::span<const Particle> particles, Grid& grid, unsigned threads = 1) {
  if (alpha == 0.0) return;
  const std::size_t d = grid.dim();
  std::vector<Vec> forces(particles.size());
  std::vector<unsigned char> bad(particles.size(), 0);
  parallel_chunks(particles.size(), threads, [&](unsigned, std::size_t b, std::size_t e) {
    for (std::size_t p = b; p < e; ++p) {
      Vec s(d);
      try {
        s = target.score(particles[p].position);
      } catch (const std::domain_error&) {
        bad[p] = 1;
      }
      if (!bad[p] && !all_finite(s)) bad[p] = 1;
      forces[p] = bad[p] ? Vec(d) : s * alpha;
    }
  });
  if (std::find(bad.begin(), bad.end(), 1) != bad.end()) {
    log::warn("non-finite score at a particle; its external force is set to zero");
  }
  detail::scatter(grid, particles.size(), threads, NodeChannel::ForceExternal, false, [&](std::size_t p, auto& emit) {
    const WeightStencil& st = particles[p].stencil;
    std::array<double, kMaxDim> f{};
    for (std::size_t j = 0; j < st.size(); ++j) {
      for (std::size_t a = 0; a < d; ++a) f[a] = st.weights[j] * forces[p][a];
      emit(st.nodes[j], 0.0, f.data());
    }
  });
}

}  // namespace mpm_parvi
