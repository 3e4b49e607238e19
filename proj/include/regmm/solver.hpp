#pragma once

#include "regmm/measures.hpp"
#include "regmm/potential.hpp"
#include "regmm/quadrature.hpp"

#include <optional>
#include <string>
#include <vector>

namespace regmm {

/// Stopping tolerance on max_j |m_j/Z - mu_j| used when none is configured.
double default_mass_tolerance(int dim);

struct SolverConfig {
  double alpha = 1.0;
  /// Values <= 0 select default_mass_tolerance(dim).
  double tol_mass = 0.0;
  int max_iter = 500;
  double shrink = 0.5;
  double sufficient_increase = 1e-4;
  /// Number of L-BFGS correction pairs; 0 gives plain gradient ascent. The
  /// default keeps every pair for the problem sizes in use, which matters for
  /// supports with nearly coincident points.
  int history = 400;
  /// Quadrature used for 2D problems and for the tabulation radius. Its
  /// alpha is overwritten by `alpha`.
  QuadratureSpec quadrature;
};

struct TraceEntry {
  double dual_value = 0.0;
  double residual = 0.0;
};

struct SolveReport {
  Potential potential;
  DiscreteMeasure target;
  double alpha = 1.0;
  double log_z = 0.0;
  /// Normalized cell masses m_j / Z.
  Vector cell_mass;
  double residual_linf = 0.0;
  double dual_value = 0.0;
  int iterations = 0;
  bool converged = false;
  std::vector<TraceEntry> trace;
  /// Quadrature actually used (radius resolved).
  QuadratureSpec quadrature;
  /// Moments of the reconstructed density.
  MomentSummary density_moments;
  /// Row j: integral of x over cell j against the density.
  PointMatrix cell_first_moment;
  std::vector<std::string> warnings;
};

struct DualEvaluation {
  double value = 0.0;
  Vector gradient;
  MassProfile profile;
};

/// G(phi) = log Z(phi) - <phi, mu> with its gradient m/Z - mu.
DualEvaluation evaluate_dual(const Potential& phi, const DiscreteMeasure& mu, const QuadratureSpec& spec);

double dual_value(const Potential& phi, const DiscreteMeasure& mu, double alpha);
double dual_value(const Potential& phi, const DiscreteMeasure& mu, const QuadratureSpec& spec);
Vector dual_gradient(const Potential& phi, const DiscreteMeasure& mu, double alpha);
Vector dual_gradient(const Potential& phi, const DiscreteMeasure& mu, const QuadratureSpec& spec);

/// phi_j = |y_j|^2 / 2, gauged against mu.
Vector initial_phi(const DiscreteMeasure& mu);

/// Maximizes the regularized dual by L-BFGS ascent with backtracking.
/// Returns the best iterate; `converged` is false when max_iter is exhausted
/// or the line search stalls before reaching tol_mass.
SolveReport solve(const DiscreteMeasure& mu, const SolverConfig& cfg, const std::optional<Vector>& phi0 = std::nullopt);

/// Report at a fixed potential without iterating; `converged` compares the
/// residual at phi with the tolerance.
SolveReport evaluate_report(const DiscreteMeasure& mu, const Vector& phi, const SolverConfig& cfg);

/// Tabulates rho = exp(-phi* - (alpha/2)|x|^2 - log Z) on [-R, R]^d with
/// `spec.resolution` nodes per axis (R from `spec`, else from the report),
/// rescaled so the midpoint sum is one.
/// Throws not-converged for reports that did not converge unless `allow_unconverged`.
GridDensity reconstruct_density(const SolveReport& report, const QuadratureSpec& spec, bool allow_unconverged = false);

/// Spread (max - min) of log rho + u + (alpha/2)|x|^2 over the nodes of the
/// tabulation carrying at least the tail tolerance of mass.
double optimality_residual(const SolveReport& report, const QuadratureSpec& spec);

/// The quadrature a report should be tabulated with: the report's own radius
/// and the given resolution.
QuadratureSpec tabulation_spec(const SolveReport& report, int resolution);

}  // namespace regmm
