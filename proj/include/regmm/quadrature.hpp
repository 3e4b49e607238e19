#pragma once

#include "regmm/measures.hpp"
#include "regmm/potential.hpp"

#include <string>
#include <vector>

namespace regmm {

/// Integration settings for g(x) = exp(-phi*(x) - (alpha/2)|x|^2).
///
/// In 1D the integral is exact and `radius`/`resolution` are only used when a
/// density is tabulated. In 2D the second axis is sampled at `resolution`
/// midpoints of [-R, R] and the first axis is integrated in closed form along
/// each sampled row.
struct QuadratureSpec {
  double alpha = 1.0;
  /// Truncation radius R; values <= 0 select truncation_radius().
  double radius = 0.0;
  int resolution = 512;
  double tail_tolerance = 1e-10;
  /// When positive, mass_profile_2d compares against a half-resolution pass
  /// and records a warning if the estimated error exceeds this value.
  double warn_tolerance = 0.0;
  /// 2D only: also compute the first absolute moment (an extra grid pass).
  bool absolute_moment = true;
};

/// R = max|y| + sqrt((2/alpha) log(1/eps)) + max|y|/alpha.
double truncation_radius(const Potential& p, double alpha, double tail_tolerance);

/// Radius of `spec` after resolving the automatic choice.
double effective_radius(const Potential& p, const QuadratureSpec& spec);

/// log(Phi(hi) - Phi(lo)) for lo < hi, either end possibly infinite, with
/// full relative accuracy in both tails.
double log_normal_cdf_difference(double lo, double hi);

/// log of the integral of exp(-(a x - b) - (alpha/2) x^2) over [l, r].
double log_gauss_affine_integral(double a, double b, double alpha, double l, double r);

/// Integral of exp(-(a x - b) - (alpha/2) x^2) over [l, r]; l, r may be infinite.
double gauss_affine_integral(double a, double b, double alpha, double l, double r);

/// Mass and conditional moments of exp(-(a x - b) - (alpha/2) x^2) on [l, r].
struct GaussianSegment {
  double log_mass = 0.0;
  double mean = 0.0;
  double second = 0.0;
  double abs_first = 0.0;
};

GaussianSegment gaussian_segment(double a, double b, double alpha, double l, double r);

/// Total mass Z of g and the mass of every cell of the potential.
struct MassProfile {
  double z = 0.0;
  double log_z = 0.0;
  /// Unnormalized cell masses m_j (sum to Z).
  Vector cell_mass;
  /// m_j / Z, computed in log space.
  Vector cell_fraction;
  /// Row j holds the integral of x over cell j against rho = g / Z.
  PointMatrix cell_first_moment;
  /// Moments of rho = g / Z.
  MomentSummary density_moments;
  std::vector<std::string> warnings;
};

MassProfile mass_profile_1d(const Potential& p, double alpha);
MassProfile mass_profile_2d(const Potential& p, const QuadratureSpec& spec);
MassProfile mass_profile(const Potential& p, const QuadratureSpec& spec);

}  // namespace regmm
