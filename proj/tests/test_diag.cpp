#include <catch_amalgamated.hpp>

#include <algorithm>
#include <numbers>
#include <numeric>

#include "support.hpp"

using namespace mpm_parvi;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

std::vector<Vec> normal_sample(std::mt19937_64& rng, std::size_t n, std::size_t d, double shift = 0.0) {
  std::normal_distribution<double> z(0.0, 1.0);
  std::vector<Vec> xs;
  for (std::size_t i = 0; i < n; ++i) {
    Vec x(d);
    for (std::size_t a = 0; a < d; ++a) x[a] = shift + z(rng);
    xs.push_back(x);
  }
  return xs;
}

}  // namespace

TEST_CASE("moments examples") {
  const std::vector<Vec> same(5, Vec{1.5, -2.0});
  const Moments m = moments(same);
  CHECK(m.mean == Vec{1.5, -2.0});
  CHECK(m.covariance == Mat::zero(2));

  const std::vector<Vec> pair{Vec{-1.0}, Vec{1.0}};
  const Moments p = moments(pair);
  CHECK(p.mean[0] == 0.0);
  CHECK(p.covariance(0, 0) == 2.0);

  std::mt19937_64 rng(11);
  const Moments big = moments(normal_sample(rng, 10000, 2));
  CHECK(max_abs(big.mean) < 0.05);
  CHECK(max_abs(big.covariance - Mat::identity(2)) < 0.1);
  CHECK(big.covariance(0, 1) == big.covariance(1, 0));

  CHECK_THROWS_AS(moments(std::vector<Vec>{Vec{1.0}}), DegenerateSample);
}

TEST_CASE("histogram counts sum to M") {
  std::mt19937_64 rng(12);
  std::uniform_int_distribution<int> bins(1, 60);
  for (int trial = 0; trial < 30; ++trial) {
    const auto xs = axis_values(normal_sample(rng, 500, 1), 0);
    const Histogram h = histogram(xs, static_cast<std::size_t>(bins(rng)));
    CHECK(std::accumulate(h.counts.begin(), h.counts.end(), std::size_t{0}) == 500);
    CHECK(h.edges.size() == h.counts.size() + 1);
    CHECK(h.edges.front() == *std::min_element(xs.begin(), xs.end()));
    CHECK(h.edges.back() == *std::max_element(xs.begin(), xs.end()));
  }
  const std::vector<double> flat(7, 3.0);
  const Histogram f = histogram(flat, 4);
  CHECK(std::accumulate(f.counts.begin(), f.counts.end(), std::size_t{0}) == 7);
}

TEST_CASE("kde single-kernel closed form and peak location") {
  const std::vector<double> one{0.7};
  const double b = 0.3;
  const std::vector<double> at{0.7};
  const KdeCurve k = kde_1d(one, b, at);
  CHECK_THAT(k.density[0], WithinRel(1.0 / std::sqrt(2.0 * std::numbers::pi * b * b), 1e-14));

  std::mt19937_64 rng(13);
  std::normal_distribution<double> cluster(4.0, 0.05);
  std::vector<double> xs;
  for (int i = 0; i < 200; ++i) xs.push_back(cluster(rng));
  const KdeCurve c = kde_1d(xs);
  const auto peak = std::max_element(c.density.begin(), c.density.end()) - c.density.begin();
  CHECK_THAT(c.grid[static_cast<std::size_t>(peak)], WithinAbs(4.0, 0.05));
  CHECK(c.grid.size() == kKdeGridPoints);
}

TEST_CASE("auto-bandwidth kde integrates to one") {
  std::mt19937_64 rng(14);
  std::uniform_int_distribution<int> size(2, 400);
  std::uniform_real_distribution<double> scale(0.01, 10.0);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> xs;
    const int n = size(rng);
    const double s = scale(rng);
    std::normal_distribution<double> z(0.0, s);
    for (int i = 0; i < n; ++i) xs.push_back(z(rng) + (i % 3 == 0 ? 5.0 * s : 0.0));
    const KdeCurve k = kde_1d(xs);
    CHECK_THAT(trapezoid(k.grid, k.density), WithinAbs(1.0, 1e-3));
  }
}

TEST_CASE("kde argument errors") {
  const std::vector<double> flat(5, 2.0);
  CHECK_THROWS_AS(kde_1d(flat), DegenerateSample);
  CHECK_NOTHROW(kde_1d(flat, 0.5));
  CHECK_THROWS_AS(kde_1d(flat, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(kde_1d(std::vector<double>{1.0}), DegenerateSample);
}

TEST_CASE("mmd self, separation and biased identity") {
  std::mt19937_64 rng(15);
  const auto all = normal_sample(rng, 2000, 1);
  const std::vector<Vec> a(all.begin(), all.begin() + 1000), b(all.begin() + 1000, all.end());
  const double self = mmd_rbf(a, b);
  const auto far = normal_sample(rng, 1000, 1, 5.0);
  const double sep = mmd_rbf(a, far);
  CHECK(sep > 10.0 * self);
  // Unbiased MMD^2 between same-law samples has standard error of order 1/n.
  CHECK(std::abs(mmd2_rbf(a, b)) < 3.0 * 2.0 / 1000.0);

  CHECK(mmd2_rbf(a, a, std::nullopt, MmdEstimator::Biased) == 0.0);
  CHECK(mmd2_rbf(a, a) <= 1e-12);
  CHECK(mmd_rbf(a, a) >= 0.0);

  CHECK_THROWS_AS(mmd2_rbf(a, normal_sample(rng, 10, 2)), std::invalid_argument);
  CHECK_THROWS_AS(mmd2_rbf(a, std::vector<Vec>{}), DegenerateSample);
}

TEST_CASE("mmd is symmetric and permutation invariant bit for bit") {
  std::mt19937_64 rng(16);
  for (std::size_t d : {1u, 2u, 3u}) {
    auto a = normal_sample(rng, 150, d);
    auto b = normal_sample(rng, 120, d, 0.5);
    const double ab = mmd_rbf(a, b), ba = mmd_rbf(b, a);
    CHECK(ab == ba);
    std::shuffle(a.begin(), a.end(), rng);
    std::shuffle(b.begin(), b.end(), rng);
    CHECK(mmd_rbf(a, b) == ab);
    CHECK(mmd_rbf(b, a, 0.8) == mmd_rbf(a, b, 0.8));
  }
}

TEST_CASE("sample statistics are permutation invariant") {
  std::mt19937_64 rng(17);
  auto xs = normal_sample(rng, 300, 2);
  const auto ref = normal_sample(rng, 200, 2);
  const SampleStats s = sample_stats(xs, ref);
  std::shuffle(xs.begin(), xs.end(), rng);
  const SampleStats t = sample_stats(xs, ref);
  CHECK(max_abs(s.mean - t.mean) < 1e-14);
  CHECK(max_abs(s.covariance - t.covariance) < 1e-14);
  REQUIRE(s.histograms.size() == 2);
  for (std::size_t a = 0; a < 2; ++a) {
    CHECK(s.histograms[a].counts == t.histograms[a].counts);
    CHECK(s.histograms[a].counts.size() == 18);  // ceil(sqrt(300))
    for (std::size_t i = 0; i < s.kdes[a].density.size(); ++i)
      CHECK_THAT(s.kdes[a].density[i], WithinAbs(t.kdes[a].density[i], 1e-14));
  }
  REQUIRE(s.mmd);
  CHECK(*s.mmd == *t.mmd);
}

TEST_CASE("covariance is symmetric positive semidefinite") {
  std::mt19937_64 rng(18);
  for (int trial = 0; trial < 20; ++trial) {
    const Moments m = moments(normal_sample(rng, 5, 3));
    CHECK(max_abs(m.covariance - transpose(m.covariance)) == 0.0);
    for (int k = 0; k < 10; ++k) {
      const Vec u = normal_sample(rng, 1, 3)[0];
      CHECK(dot(u, m.covariance * u) >= -1e-12);
    }
  }
}
