#pragma once

// Sample diagnostics: moments, per-axis histograms, 1D Gaussian KDE and the
// RBF maximum mean discrepancy.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "mpm_parvi/tensor.hpp"

namespace mpm_parvi {

/// Raised for samples too small or too flat for the requested statistic.
class DegenerateSample : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct Moments {
  Vec mean;
  Mat covariance;  // unbiased (n - 1)
};

inline Moments moments(std::span<const Vec> xs) {
  if (xs.size() < 2) throw DegenerateSample("moments need at least 2 samples");
  const std::size_t d = xs.front().dim();
  Vec mean(d);
  for (const Vec& x : xs) {
    if (x.dim() != d) throw std::invalid_argument("moments: mixed dimensions");
    mean += x;
  }
  mean *= 1.0 / static_cast<double>(xs.size());
  Mat cov(d);
  for (const Vec& x : xs) {
    const Vec r = x - mean;
    for (std::size_t i = 0; i < d; ++i)
      for (std::size_t j = i; j < d; ++j) cov(i, j) += r[i] * r[j];
  }
  const double inv = 1.0 / static_cast<double>(xs.size() - 1);
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = i; j < d; ++j) {
      cov(i, j) *= inv;
      cov(j, i) = cov(i, j);
    }
  return {mean, cov};
}

struct Histogram {
  std::vector<double> edges;  // bins + 1
  std::vector<std::size_t> counts;
};

/// Equal-width bins over [min, max]; the last bin is closed on the right.
inline Histogram histogram(std::span<const double> xs, std::size_t bins) {
  if (xs.empty()) throw DegenerateSample("histogram of an empty sample");
  if (bins == 0) throw std::invalid_argument("histogram needs at least one bin");
  auto [lo_it, hi_it] = std::minmax_element(xs.begin(), xs.end());
  double lo = *lo_it, hi = *hi_it;
  if (lo == hi) {
    lo -= 0.5;
    hi += 0.5;
  }
  Histogram h;
  h.edges.resize(bins + 1);
  const double width = (hi - lo) / static_cast<double>(bins);
  for (std::size_t b = 0; b <= bins; ++b) h.edges[b] = lo + width * static_cast<double>(b);
  h.edges.back() = hi;
  h.counts.assign(bins, 0);
  for (double x : xs) {
    auto b = static_cast<std::size_t>((x - lo) / width);
    h.counts[std::min(b, bins - 1)]++;
  }
  return h;
}

inline constexpr std::size_t kKdeGridPoints = 256;

struct KdeCurve {
  double bandwidth = 0.0;
  std::vector<double> grid;
  std::vector<double> density;
};

/// Silverman's rule 1.06 * sd * n^(-1/5).
inline double silverman_bandwidth(std::span<const double> xs) {
  if (xs.size() < 2) throw DegenerateSample("bandwidth needs at least 2 samples");
  double m = 0.0;
  for (double x : xs) m += x;
  m /= static_cast<double>(xs.size());
  double ss = 0.0;
  for (double x : xs) ss += (x - m) * (x - m);
  const double sd = std::sqrt(ss / static_cast<double>(xs.size() - 1));
  if (!(sd > 0.0)) throw DegenerateSample("zero-variance sample: pass an explicit bandwidth");
  return 1.06 * sd * std::pow(static_cast<double>(xs.size()), -0.2);
}

inline double kde_at(std::span<const double> xs, double bandwidth, double x) {
  const double norm = 1.0 / (static_cast<double>(xs.size()) * bandwidth * std::sqrt(2.0 * std::numbers::pi));
  double acc = 0.0;
  for (double s : xs) {
    const double z = (x - s) / bandwidth;
    acc += std::exp(-0.5 * z * z);
  }
  return acc * norm;
}

/// Gaussian KDE. An empty eval grid means 256 points over [min - 3b, max + 3b].
/// With an explicit bandwidth a single sample is allowed.
inline KdeCurve kde_1d(std::span<const double> xs, std::optional<double> bandwidth = std::nullopt,
                       std::span<const double> eval_grid = {}) {
  KdeCurve k;
  if (bandwidth) {
    if (xs.empty()) throw DegenerateSample("kde of an empty sample");
    if (!(*bandwidth > 0.0)) throw std::invalid_argument("kde bandwidth must be positive");
    k.bandwidth = *bandwidth;
  } else {
    k.bandwidth = silverman_bandwidth(xs);
  }
  if (eval_grid.empty()) {
    auto [lo_it, hi_it] = std::minmax_element(xs.begin(), xs.end());
    const double lo = *lo_it - 3.0 * k.bandwidth, hi = *hi_it + 3.0 * k.bandwidth;
    k.grid.resize(kKdeGridPoints);
    for (std::size_t i = 0; i < kKdeGridPoints; ++i)
      k.grid[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(kKdeGridPoints - 1);
  } else {
    k.grid.assign(eval_grid.begin(), eval_grid.end());
  }
  k.density.resize(k.grid.size());
  for (std::size_t i = 0; i < k.grid.size(); ++i) k.density[i] = kde_at(xs, k.bandwidth, k.grid[i]);
  return k;
}

inline double trapezoid(std::span<const double> x, std::span<const double> y) {
  double acc = 0.0;
  for (std::size_t i = 1; i < x.size(); ++i) acc += 0.5 * (y[i] + y[i - 1]) * (x[i] - x[i - 1]);
  return acc;
}

enum class MmdEstimator { Unbiased, Biased };

inline constexpr std::size_t kMedianHeuristicCap = 2000;

namespace detail {

inline double squared_distance(const Vec& a, const Vec& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.dim(); ++i) {
    const double t = a[i] - b[i];
    s += t * t;
  }
  return s;
}

inline bool lex_less(const Vec& a, const Vec& b) {
  return std::lexicographical_compare(a.values().begin(), a.values().end(), b.values().begin(), b.values().end());
}

inline std::vector<Vec> sorted_copy(std::span<const Vec> xs) {
  std::vector<Vec> v(xs.begin(), xs.end());
  std::sort(v.begin(), v.end(), lex_less);
  return v;
}

// Mean kernel value over pairs; `same` skips the diagonal.
inline double mean_kernel(const std::vector<Vec>& a, const std::vector<Vec>& b, double gamma, bool same) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < b.size(); ++j) {
      if (same && i == j) continue;
      acc += std::exp(-gamma * squared_distance(a[i], b[j]));
    }
  const double pairs = same ? static_cast<double>(a.size()) * static_cast<double>(a.size() - 1)
                            : static_cast<double>(a.size()) * static_cast<double>(b.size());
  return acc / pairs;
}

}  // namespace detail

/// Median pairwise distance of the pooled sample (strided subsample of at
/// most 2000 points taken in canonical order).
inline double median_heuristic(std::span<const Vec> a, std::span<const Vec> b) {
  std::vector<Vec> pooled(a.begin(), a.end());
  pooled.insert(pooled.end(), b.begin(), b.end());
  std::sort(pooled.begin(), pooled.end(), detail::lex_less);
  std::vector<Vec> sub;
  const std::size_t stride = (pooled.size() + kMedianHeuristicCap - 1) / kMedianHeuristicCap;
  for (std::size_t i = 0; i < pooled.size(); i += stride) sub.push_back(pooled[i]);
  std::vector<double> dist;
  dist.reserve(sub.size() * (sub.size() - 1) / 2);
  for (std::size_t i = 0; i < sub.size(); ++i)
    for (std::size_t j = i + 1; j < sub.size(); ++j) dist.push_back(std::sqrt(detail::squared_distance(sub[i], sub[j])));
  if (dist.empty()) return 1.0;
  auto mid = dist.begin() + static_cast<std::ptrdiff_t>(dist.size() / 2);
  std::nth_element(dist.begin(), mid, dist.end());
  return *mid > 0.0 ? *mid : 1.0;
}

/// MMD^2 with k(x, y) = exp(-|x - y|^2 / (2 l^2)); may be negative when unbiased.
inline double mmd2_rbf(std::span<const Vec> a, std::span<const Vec> b, std::optional<double> lengthscale = std::nullopt,
                       MmdEstimator estimator = MmdEstimator::Unbiased) {
  if (a.empty() || b.empty()) throw DegenerateSample("mmd needs non-empty samples");
  const std::size_t d = a.front().dim();
  for (const Vec& x : a)
    if (x.dim() != d) throw std::invalid_argument("mmd: dimension mismatch");
  for (const Vec& x : b)
    if (x.dim() != d) throw std::invalid_argument("mmd: dimension mismatch");
  const double l = lengthscale ? *lengthscale : median_heuristic(a, b);
  if (!(l > 0.0)) throw std::invalid_argument("mmd lengthscale must be positive");
  const double gamma = 1.0 / (2.0 * l * l);

  // Canonical order makes the result independent of argument order and
  // particle permutation bit for bit.
  std::vector<Vec> sa = detail::sorted_copy(a), sb = detail::sorted_copy(b);
  const bool b_first = sb.size() < sa.size() ||
                       (sb.size() == sa.size() &&
                        std::lexicographical_compare(sb.begin(), sb.end(), sa.begin(), sa.end(), detail::lex_less));
  if (b_first) std::swap(sa, sb);
  const bool unbiased = estimator == MmdEstimator::Unbiased;
  if (unbiased && (sa.size() < 2 || sb.size() < 2)) throw DegenerateSample("unbiased mmd needs 2+ samples per side");
  const double kaa = detail::mean_kernel(sa, sa, gamma, unbiased);
  const double kbb = detail::mean_kernel(sb, sb, gamma, unbiased);
  const double kab = detail::mean_kernel(sa, sb, gamma, false);
  return kaa + kbb - 2.0 * kab;
}

/// sqrt(max(MMD^2, 0)).
inline double mmd_rbf(std::span<const Vec> a, std::span<const Vec> b, std::optional<double> lengthscale = std::nullopt,
                      MmdEstimator estimator = MmdEstimator::Unbiased) {
  return std::sqrt(std::max(mmd2_rbf(a, b, lengthscale, estimator), 0.0));
}

struct SampleStats {
  Vec mean;
  Mat covariance;
  std::vector<Histogram> histograms;
  std::vector<KdeCurve> kdes;  // empty entry skipped when an axis has zero variance
  std::optional<double> mmd;
};

inline std::vector<double> axis_values(std::span<const Vec> xs, std::size_t axis) {
  std::vector<double> v;
  v.reserve(xs.size());
  for (const Vec& x : xs) v.push_back(x[axis]);
  return v;
}

/// Square-root rule bin count: ceil(sqrt(M)).
inline SampleStats sample_stats(std::span<const Vec> xs, std::span<const Vec> reference = {}, std::size_t bins = 0) {
  SampleStats s;
  const Moments m = moments(xs);
  s.mean = m.mean;
  s.covariance = m.covariance;
  if (bins == 0) bins = static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(xs.size()))));
  for (std::size_t a = 0; a < m.mean.dim(); ++a) {
    const auto vals = axis_values(xs, a);
    s.histograms.push_back(histogram(vals, bins));
    if (m.covariance(a, a) > 0.0) {
      s.kdes.push_back(kde_1d(vals));
    } else {
      s.kdes.push_back(KdeCurve{});
    }
  }
  if (!reference.empty()) s.mmd = mmd_rbf(xs, reference);
  return s;
}

}  // namespace mpm_parvi
