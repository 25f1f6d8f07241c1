#pragma once

// Small dense vectors and matrices whose dimension is chosen at run time.
// Storage is inline (no heap) with a fixed capacity of kMaxDim.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>

#include "mpm_parvi/errors.hpp"

namespace mpm_parvi {

inline constexpr std::size_t kMaxDim = 6;

namespace detail {
inline void check_dim(std::size_t d) {
  if (d < 1 || d > kMaxDim) {
    throw std::invalid_argument("dimension " + std::to_string(d) + " outside [1, " +
                                std::to_string(kMaxDim) + "]");
  }
}
inline void check_same(std::size_t a, std::size_t b) {
  if (a != b) {
    throw std::invalid_argument("dimension mismatch: " + std::to_string(a) + " vs " +
                                std::to_string(b));
  }
}
}  // namespace detail

class Vec {
 public:
  Vec() = default;
  explicit Vec(std::size_t dim) : dim_(dim) { detail::check_dim(dim); }
  Vec(std::size_t dim, double fill) : Vec(dim) { std::fill_n(c_.begin(), dim, fill); }
  Vec(std::initializer_list<double> values) : Vec(values.size()) {
    std::copy(values.begin(), values.end(), c_.begin());
  }
  explicit Vec(std::span<const double> values) : Vec(values.size()) {
    std::copy(values.begin(), values.end(), c_.begin());
  }

  std::size_t dim() const noexcept { return dim_; }
  double& operator[](std::size_t i) noexcept { return c_[i]; }
  double operator[](std::size_t i) const noexcept { return c_[i]; }
  std::span<double> values() noexcept { return {c_.data(), dim_}; }
  std::span<const double> values() const noexcept { return {c_.data(), dim_}; }
  double* data() noexcept { return c_.data(); }
  const double* data() const noexcept { return c_.data(); }

  Vec& operator+=(const Vec& o) {
    detail::check_same(dim_, o.dim_);
    for (std::size_t i = 0; i < dim_; ++i) c_[i] += o.c_[i];
    return *this;
  }
  Vec& operator-=(const Vec& o) {
    detail::check_same(dim_, o.dim_);
    for (std::size_t i = 0; i < dim_; ++i) c_[i] -= o.c_[i];
    return *this;
  }
  Vec& operator*=(double s) noexcept {
    for (std::size_t i = 0; i < dim_; ++i) c_[i] *= s;
    return *this;
  }

  friend Vec operator+(Vec a, const Vec& b) { return a += b; }
  friend Vec operator-(Vec a, const Vec& b) { return a -= b; }
  friend Vec operator-(Vec a) { return a *= -1.0; }
  friend Vec operator*(Vec a, double s) noexcept { return a *= s; }
  friend Vec operator*(double s, Vec a) noexcept { return a *= s; }

  friend bool operator==(const Vec& a, const Vec& b) noexcept {
    if (a.dim_ != b.dim_) return false;
    return std::equal(a.c_.begin(), a.c_.begin() + a.dim_, b.c_.begin());
  }

 private:
  std::size_t dim_ = 0;
  std::array<double, kMaxDim> c_{};
};

/// Square d x d matrix, row-major.
class Mat {
 public:
  Mat() = default;
  explicit Mat(std::size_t dim) : dim_(dim) { detail::check_dim(dim); }
  Mat(std::size_t dim, std::initializer_list<double> row_major) : Mat(dim) {
    if (row_major.size() != dim * dim) throw std::invalid_argument("Mat: wrong entry count");
    std::copy(row_major.begin(), row_major.end(), a_.begin());
  }

  static Mat zero(std::size_t dim) { return Mat(dim); }
  static Mat identity(std::size_t dim) {
    Mat m(dim);
    for (std::size_t i = 0; i < dim; ++i) m(i, i) = 1.0;
    return m;
  }
  static Mat scaled_identity(std::size_t dim, double s) {
    Mat m(dim);
    for (std::size_t i = 0; i < dim; ++i) m(i, i) = s;
    return m;
  }

  std::size_t dim() const noexcept { return dim_; }
  double& operator()(std::size_t r, std::size_t c) noexcept { return a_[r * dim_ + c]; }
  double operator()(std::size_t r, std::size_t c) const noexcept { return a_[r * dim_ + c]; }
  std::span<const double> values() const noexcept { return {a_.data(), dim_ * dim_}; }

  Mat& operator+=(const Mat& o) {
    detail::check_same(dim_, o.dim_);
    for (std::size_t i = 0; i < dim_ * dim_; ++i) a_[i] += o.a_[i];
    return *this;
  }
  Mat& operator-=(const Mat& o) {
    detail::check_same(dim_, o.dim_);
    for (std::size_t i = 0; i < dim_ * dim_; ++i) a_[i] -= o.a_[i];
    return *this;
  }
  Mat& operator*=(double s) noexcept {
    for (std::size_t i = 0; i < dim_ * dim_; ++i) a_[i] *= s;
    return *this;
  }

  friend Mat operator+(Mat a, const Mat& b) { return a += b; }
  friend Mat operator-(Mat a, const Mat& b) { return a -= b; }
  friend Mat operator*(Mat a, double s) noexcept { return a *= s; }
  friend Mat operator*(double s, Mat a) noexcept { return a *= s; }

  friend Mat operator*(const Mat& a, const Mat& b) {
    detail::check_same(a.dim_, b.dim_);
    Mat out(a.dim_);
    const std::size_t d = a.dim_;
    for (std::size_t i = 0; i < d; ++i)
      for (std::size_t k = 0; k < d; ++k) {
        const double aik = a(i, k);
        for (std::size_t j = 0; j < d; ++j) out(i, j) += aik * b(k, j);
      }
    return out;
  }

  friend Vec operator*(const Mat& a, const Vec& x) {
    detail::check_same(a.dim_, x.dim());
    Vec out(a.dim_);
    for (std::size_t i = 0; i < a.dim_; ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < a.dim_; ++j) s += a(i, j) * x[j];
      out[i] = s;
    }
    return out;
  }

  friend bool operator==(const Mat& a, const Mat& b) noexcept {
    if (a.dim_ != b.dim_) return false;
    return std::equal(a.a_.begin(), a.a_.begin() + a.dim_ * a.dim_, b.a_.begin());
  }

 private:
  std::size_t dim_ = 0;
  std::array<double, kMaxDim * kMaxDim> a_{};
};

inline double dot(const Vec& a, const Vec& b) {
  detail::check_same(a.dim(), b.dim());
  double s = 0.0;
  for (std::size_t i = 0; i < a.dim(); ++i) s += a[i] * b[i];
  return s;
}

inline double norm(const Vec& a) { return std::sqrt(dot(a, a)); }

inline double max_abs(const Vec& a) noexcept {
  double m = 0.0;
  for (double v : a.values()) m = std::max(m, std::abs(v));
  return m;
}

inline double max_abs(const Mat& a) noexcept {
  double m = 0.0;
  for (double v : a.values()) m = std::max(m, std::abs(v));
  return m;
}

/// a bᵀ
inline Mat outer(const Vec& a, const Vec& b) {
  detail::check_same(a.dim(), b.dim());
  Mat m(a.dim());
  for (std::size_t i = 0; i < a.dim(); ++i)
    for (std::size_t j = 0; j < a.dim(); ++j) m(i, j) = a[i] * b[j];
  return m;
}

inline Mat transpose(const Mat& a) {
  Mat t(a.dim());
  for (std::size_t i = 0; i < a.dim(); ++i)
    for (std::size_t j = 0; j < a.dim(); ++j) t(j, i) = a(i, j);
  return t;
}

inline double trace(const Mat& a) noexcept {
  double s = 0.0;
  for (std::size_t i = 0; i < a.dim(); ++i) s += a(i, i);
  return s;
}

/// Frobenius inner product A:B.
inline double contract(const Mat& a, const Mat& b) {
  detail::check_same(a.dim(), b.dim());
  double s = 0.0;
  for (std::size_t i = 0; i < a.dim() * a.dim(); ++i) s += a.values()[i] * b.values()[i];
  return s;
}

namespace detail {

// LU with partial pivoting on a copy. Returns the determinant; fills `inv` when requested.
inline double gauss_eliminate(const Mat& a, Mat* inv) {
  const std::size_t d = a.dim();
  Mat lu = a;
  Mat rhs = Mat::identity(d);
  double det = 1.0;
  for (std::size_t col = 0; col < d; ++col) {
    std::size_t pivot = col;
    for (std::size_t r = col + 1; r < d; ++r)
      if (std::abs(lu(r, col)) > std::abs(lu(pivot, col))) pivot = r;
    if (lu(pivot, col) == 0.0) {
      if (inv) throw SingularMatrix("matrix is singular");
      return 0.0;
    }
    if (pivot != col) {
      for (std::size_t j = 0; j < d; ++j) {
        std::swap(lu(pivot, j), lu(col, j));
        std::swap(rhs(pivot, j), rhs(col, j));
      }
      det = -det;
    }
    const double p = lu(col, col);
    det *= p;
    for (std::size_t r = col + 1; r < d; ++r) {
      const double f = lu(r, col) / p;
      if (f == 0.0) continue;
      for (std::size_t j = col; j < d; ++j) lu(r, j) -= f * lu(col, j);
      for (std::size_t j = 0; j < d; ++j) rhs(r, j) -= f * rhs(col, j);
    }
  }
  if (inv) {
    // back substitution, one right-hand-side column at a time
    Mat x(d);
    for (std::size_t c = 0; c < d; ++c) {
      for (std::size_t ri = d; ri-- > 0;) {
        double s = rhs(ri, c);
        for (std::size_t j = ri + 1; j < d; ++j) s -= lu(ri, j) * x(j, c);
        x(ri, c) = s / lu(ri, ri);
      }
    }
    *inv = x;
  }
  return det;
}

}  // namespace detail

inline double determinant(const Mat& a) {
  switch (a.dim()) {
    case 1:
      return a(0, 0);
    case 2:
      return a(0, 0) * a(1, 1) - a(0, 1) * a(1, 0);
    case 3:
      return a(0, 0) * (a(1, 1) * a(2, 2) - a(1, 2) * a(2, 1)) -
             a(0, 1) * (a(1, 0) * a(2, 2) - a(1, 2) * a(2, 0)) +
             a(0, 2) * (a(1, 0) * a(2, 1) - a(1, 1) * a(2, 0));
    default:
      return detail::gauss_eliminate(a, nullptr);
  }
}

/// Inverse by partial-pivot Gaussian elimination, any dimension.
inline Mat inverse_gauss(const Mat& a) {
  Mat inv(a.dim());
  detail::gauss_eliminate(a, &inv);
  return inv;
}

/// Inverse; closed-form cofactors for d <= 3, elimination otherwise.
inline Mat inverse(const Mat& a) {
  const std::size_t d = a.dim();
  if (d > 3) return inverse_gauss(a);
  const double det = determinant(a);
  if (det == 0.0 || !std::isfinite(det)) throw SingularMatrix("matrix is singular");
  Mat inv(d);
  if (d == 1) {
    inv(0, 0) = 1.0 / a(0, 0);
  } else if (d == 2) {
    inv(0, 0) = a(1, 1) / det;
    inv(0, 1) = -a(0, 1) / det;
    inv(1, 0) = -a(1, 0) / det;
    inv(1, 1) = a(0, 0) / det;
  } else {
    inv(0, 0) = (a(1, 1) * a(2, 2) - a(1, 2) * a(2, 1)) / det;
    inv(0, 1) = (a(0, 2) * a(2, 1) - a(0, 1) * a(2, 2)) / det;
    inv(0, 2) = (a(0, 1) * a(1, 2) - a(0, 2) * a(1, 1)) / det;
    inv(1, 0) = (a(1, 2) * a(2, 0) - a(1, 0) * a(2, 2)) / det;
    inv(1, 1) = (a(0, 0) * a(2, 2) - a(0, 2) * a(2, 0)) / det;
    inv(1, 2) = (a(0, 2) * a(1, 0) - a(0, 0) * a(1, 2)) / det;
    inv(2, 0) = (a(1, 0) * a(2, 1) - a(1, 1) * a(2, 0)) / det;
    inv(2, 1) = (a(0, 1) * a(2, 0) - a(0, 0) * a(2, 1)) / det;
    inv(2, 2) = (a(0, 0) * a(1, 1) - a(0, 1) * a(1, 0)) / det;
  }
  return inv;
}

inline bool all_finite(const Vec& v) noexcept {
  return std::all_of(v.values().begin(), v.values().end(),
                     [](double x) { return std::isfinite(x); });
}

inline bool all_finite(const Mat& m) noexcept {
  return std::all_of(m.values().begin(), m.values().end(),
                     [](double x) { return std::isfinite(x); });
}

}  // namespace mpm_parvi
