#pragma once

// Hyper-elastic and linear-elastic material laws mapping a deformation
// gradient F to an energy density and stresses.

#include <cmath>
#include <stdexcept>
#include <string>
#include <string_view>

#include "mpm_parvi/errors.hpp"
#include "mpm_parvi/tensor.hpp"

namespace mpm_parvi {

/// det(F) at or below this value is treated as a singular (inverted or collapsed) deformation.
inline constexpr double kSingularDeterminant = 1e-10;

struct MaterialParams {
  double youngs_modulus = 1.0;
  double poissons_ratio = 0.0;
  double mu = 0.5;      // shear modulus
  double lambda = 0.0;  // second Lame parameter

  friend bool operator==(const MaterialParams&, const MaterialParams&) = default;
};

/// mu = E / (2(1+nu)), lambda = E nu / ((1+nu)(1-2nu)).
inline MaterialParams lame_from_elastic(double youngs_modulus, double poissons_ratio) {
  if (!(youngs_modulus > 0.0) || !std::isfinite(youngs_modulus)) {
    throw std::domain_error("Young's modulus must be positive and finite");
  }
  if (!(poissons_ratio > -1.0 && poissons_ratio < 0.5)) {
    throw std::domain_error("Poisson's ratio must lie in (-1, 0.5), got " +
                            std::to_string(poissons_ratio));
  }
  MaterialParams p;
  p.youngs_modulus = youngs_modulus;
  p.poissons_ratio = poissons_ratio;
  p.mu = youngs_modulus / (2.0 * (1.0 + poissons_ratio));
  p.lambda = youngs_modulus * poissons_ratio / ((1.0 + poissons_ratio) * (1.0 - 2.0 * poissons_ratio));
  return p;
}

enum class ConstitutiveKind { NeoHookean, LinearElastic };

inline std::string_view to_string(ConstitutiveKind k) {
  return k == ConstitutiveKind::NeoHookean ? "neo_hookean" : "linear_elastic";
}

struct ConstitutiveModel {
  ConstitutiveKind kind = ConstitutiveKind::NeoHookean;
  MaterialParams params;
};

namespace detail {

inline double checked_det(const Mat& f) {
  const double j = determinant(f);
  if (!(j > kSingularDeterminant)) {
    throw SingularDeformation("singular deformation gradient: det(F) = " + std::to_string(j), j);
  }
  return j;
}

// Small-strain tensor eps = (F + F^T)/2 - I.
inline Mat small_strain(const Mat& f) {
  Mat eps = (f + transpose(f)) * 0.5;
  eps -= Mat::identity(f.dim());
  return eps;
}

}  // namespace detail

/// sigma = lambda tr(eps) I + 2 mu eps.
inline Mat linear_elastic_stress(const MaterialParams& params, const Mat& eps) {
  Mat s = eps * (2.0 * params.mu);
  const double t = params.lambda * trace(eps);
  for (std::size_t i = 0; i < eps.dim(); ++i) s(i, i) += t;
  return s;
}

/// Elastic energy density Psi(F).
///
/// Neo-Hookean: (mu/2)(tr(F^T F) - d) - mu log J + (lambda/2) log^2 J.
/// Linear elastic: mu eps:eps + (lambda/2) tr(eps)^2 with the small-strain eps.
inline double energy_density(const ConstitutiveModel& model, const Mat& f) {
  const auto& p = model.params;
  if (model.kind == ConstitutiveKind::NeoHookean) {
    const double j = detail::checked_det(f);
    const double log_j = std::log(j);
    const double tr_ftf = contract(f, f);
    return 0.5 * p.mu * (tr_ftf - static_cast<double>(f.dim())) - p.mu * log_j +
           0.5 * p.lambda * log_j * log_j;
  }
  const Mat eps = detail::small_strain(f);
  const double tr = trace(eps);
  return p.mu * contract(eps, eps) + 0.5 * p.lambda * tr * tr;
}

/// First Piola-Kirchhoff stress P = dPsi/dF.
///
/// Neo-Hookean: mu (F - F^{-T}) + lambda log(J) F^{-T}.
inline Mat first_pk_stress(const ConstitutiveModel& model, const Mat& f) {
  const auto& p = model.params;
  const double j = detail::checked_det(f);
  if (model.kind == ConstitutiveKind::NeoHookean) {
    const Mat f_inv_t = transpose(inverse(f));
    return (f - f_inv_t) * p.mu + f_inv_t * (p.lambda * std::log(j));
  }
  return linear_elastic_stress(p, detail::small_strain(f));
}

/// sigma = (1/J) P F^T, valid for any model.
inline Mat cauchy_from_first_pk(const Mat& pk1, const Mat& f) {
  const double j = detail::checked_det(f);
  return pk1 * transpose(f) * (1.0 / j);
}

/// Cauchy stress. Neo-Hookean uses the closed form (1/J)[mu (F F^T - I) + lambda log(J) I].
inline Mat cauchy_stress(const ConstitutiveModel& model, const Mat& f) {
  if (model.kind == ConstitutiveKind::NeoHookean) {
    const auto& p = model.params;
    const double j = detail::checked_det(f);
    Mat s = (f * transpose(f) - Mat::identity(f.dim())) * p.mu;
    const double diag = p.lambda * std::log(j);
    for (std::size_t i = 0; i < f.dim(); ++i) s(i, i) += diag;
    return s * (1.0 / j);
  }
  return cauchy_from_first_pk(first_pk_stress(model, f), f);
}

enum class StressMeasure { Cauchy, Kirchhoff, FirstPiolaKirchhoff, SecondPiolaKirchhoff };

/// Converts between the four stress measures for a given deformation gradient.
/// Each off-diagonal pair uses its direct relation (no intermediate measure).
inline Mat stress_convert(StressMeasure from, StressMeasure to, const Mat& stress, const Mat& f) {
  const double j = detail::checked_det(f);
  if (from == to) return stress;
  using S = StressMeasure;
  const Mat ft = transpose(f);
  const Mat f_inv = inverse(f);
  const Mat f_inv_t = transpose(f_inv);
  switch (to) {
    case S::Cauchy:
      switch (from) {
        case S::Kirchhoff: return stress * (1.0 / j);
        case S::FirstPiolaKirchhoff: return stress * ft * (1.0 / j);
        case S::SecondPiolaKirchhoff: return f * stress * ft * (1.0 / j);
        default: break;
      }
      break;
    case S::Kirchhoff:
      switch (from) {
        case S::Cauchy: return stress * j;
        case S::FirstPiolaKirchhoff: return stress * ft;
        case S::SecondPiolaKirchhoff: return f * stress * ft;
        default: break;
      }
      break;
    case S::FirstPiolaKirchhoff:
      switch (from) {
        case S::Cauchy: return stress * f_inv_t * j;
        case S::Kirchhoff: return stress * f_inv_t;
        case S::SecondPiolaKirchhoff: return f * stress;
        default: break;
      }
      break;
    case S::SecondPiolaKirchhoff:
      switch (from) {
        case S::Cauchy: return f_inv * stress * f_inv_t * j;
        case S::Kirchhoff: return f_inv * stress * f_inv_t;
        case S::FirstPiolaKirchhoff: return f_inv * stress;
        default: break;
      }
      break;
  }
  throw std::logic_error("unreachable stress conversion");
}

}  // namespace mpm_parvi
