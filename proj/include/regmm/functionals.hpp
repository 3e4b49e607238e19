#pragma once

#include "regmm/measures.hpp"
#include "regmm/solver.hpp"

namespace regmm {

/// Entropy, second moment and maximal correlation of rho against mu, with
/// F = entropy + maxcorr + (alpha/2) m2.
struct FunctionalBreakdown {
  double entropy = 0.0;
  double m2 = 0.0;
  double maxcorr = 0.0;
  double total = 0.0;
  double w2sq = 0.0;
};

/// Midpoint sum of rho log rho, with 0 log 0 = 0.
double entropy_grid(const GridDensity& rho);

/// Entropy of the centered Gaussian in R^d with second moment m2.
double gaussian_entropy(int d, double m2);

/// Smallest entropy among centered densities with second moment m2.
double entropy_lower_bound(int d, double m2);

/// Largest total support handled by the network-flow solver.
inline constexpr Eigen::Index kNetworkSupportLimit = 400;

/// Exact W2 between discrete measures: quantile coupling in 1D, min-cost
/// flow in 2D.
double w2_discrete(const DiscreteMeasure& mu, const DiscreteMeasure& nu);

/// Exact W2 by successive shortest paths on the bipartite transport network.
/// Throws size-limit-exceeded beyond kNetworkSupportLimit support points.
double w2_discrete_network(const DiscreteMeasure& mu, const DiscreteMeasure& nu);

/// W2 between 1D grid densities by inverting their piecewise-linear CDFs on
/// `mesh` quantile levels.
double w2_grid_1d(const GridDensity& rho, const GridDensity& sigma, int mesh = 10000);

/// Exact W2 between 1D grid densities read as histograms (piecewise constant
/// on the grid cells).
double w2_grid_1d_exact(const GridDensity& rho, const GridDensity& sigma);

/// Quantile of the histogram of a 1D grid density at level q in [0, 1].
double grid_quantile_1d(const GridDensity& rho, double q);

/// W2 between a grid density, taken as its weighted node cloud, and a
/// discrete measure. Exact for the cloud in 1D; 2D grids are coarsened to
/// `max_points` cells first.
double w2_grid_discrete(const GridDensity& rho, const DiscreteMeasure& mu, int max_points = 200);

/// Maximal correlation through T = (M2(rho) + M2(mu) - W2^2) / 2.
double max_correlation(const DiscreteMeasure& rho, const DiscreteMeasure& mu);
double max_correlation(const GridDensity& rho, const DiscreteMeasure& mu);

/// Maximal correlation between a solved density and its own target, from the
/// optimal cell coupling: sum_j <y_j, integral of x over cell j>.
double max_correlation(const SolveReport& report);

FunctionalBreakdown functional_F(const GridDensity& rho, const DiscreteMeasure& mu, double alpha);

/// F of a solved density against its own target, evaluated in closed form
/// from the cell integrals (no tabulation).
FunctionalBreakdown functional_F(const SolveReport& report);

/// Both sides of the two translation identities
///   F_mu(rho + v) = F_mu(rho) + <v, b(mu)> + (alpha/2)|v|^2 + alpha <v, b(rho)>
///   F_{mu + v}(rho) = F_mu(rho) + <v, b(rho)>.
struct TranslationCheck {
  double lhs1 = 0.0;
  double rhs1 = 0.0;
  double lhs2 = 0.0;
  double rhs2 = 0.0;
};

TranslationCheck translation_identities(const GridDensity& rho, const DiscreteMeasure& mu, const Vector& v,
                                        double alpha);

/// Cbar = -(d/alpha) log d + (2/alpha + 1)(M + d) + (2/alpha^2) B^2.
double second_moment_cbar(int d, double alpha, double m, double b);

/// Largest root of log m = (alpha / (2d)) m, or 1 when there is none.
double second_moment_threshold(int d, double alpha);

/// max{threshold, Cbar}: a priori bound on M2 of the minimizer for targets
/// with M2 <= m and |b| <= b.
double second_moment_bound(int d, double alpha, double m, double b);

/// Density at time t of the displacement interpolation between 1D grid
/// densities (read as histograms), tabulated on `bounds` with `resolution` nodes.
GridDensity displacement_interpolation_1d(const GridDensity& rho0, const GridDensity& rho1, double t,
                                          Interval bounds, int resolution);

/// Merges blocks of grid nodes into their weighted barycenters until at most
/// `max_points` remain.
DiscreteMeasure coarsen(const GridDensity& rho, int max_points);

}  // namespace regmm
