#pragma once

#include "regmm/functionals.hpp"
#include "regmm/measures.hpp"
#include "regmm/solver.hpp"

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace regmm {

/// Perturbation experiment over a measure family. Each family member mu is
/// paired with nu = perturb(mu, s) for every scale s of the ladder.
struct ExperimentConfig {
  double alpha = 1.0;
  int dim = 1;
  FamilyKind family = FamilyKind::TwoPointSplit;
  /// Family parameters; max_m2 / max_barycenter double as the constants M and
  /// B of the bound and cap the perturbed measures too.
  FamilyParams params;
  std::uint64_t seed = 0;
  /// Strictly decreasing positive perturbation scales.
  std::vector<double> ladder;
  /// Slack tolerance factor: an inequality passes when slack >= -tolerance (1 + magnitude).
  double tolerance = 1e-3;
  /// Tabulation nodes per axis for the densities.
  int grid_resolution = 0;
  double tol_mass = 0.0;
  int max_iter = 500;
  int jobs = 1;
  std::string output;
};

/// Validates ranges (ladder order, alpha, caps) and throws invalid-params.
void validate(const ExperimentConfig& cfg);

/// Resolution used when grid_resolution is 0: 65536 in 1D, 512 in 2D.
int default_grid_resolution(int dim);

struct StabilityRecord {
  double w2_inputs = 0.0;
  double w2_outputs = 0.0;
  double gap_sum = 0.0;
  double cross_sum = 0.0;
  double bound_c = 0.0;
  double slack_strongconv = 0.0;
  double slack_triangle = 0.0;
  double slack_theorem = 0.0;
  bool converged_mu = false;
  bool converged_nu = false;
  /// Not part of the CSV.
  int member = 0;
  double scale = 0.0;
};

/// Stability constant sqrt(2K / alpha) with K = 4 sqrt(Cm + M + 2 B^2 / alpha)
/// and Cm = second_moment_bound(d, alpha, M, B).
double stability_constant(int d, double alpha, double m, double b);

/// The perturbed partner of mu at scale s for the given family.
DiscreteMeasure perturb(const DiscreteMeasure& mu, FamilyKind kind, double scale, std::uint64_t seed);

/// Solves both measures and evaluates one record. Non-converged solves give a
/// flagged record with NaN distances.
StabilityRecord stability_record(const DiscreteMeasure& mu, const DiscreteMeasure& nu, const ExperimentConfig& cfg);

struct StabilityPair {
  DiscreteMeasure mu;
  DiscreteMeasure nu;
  int member = 0;
  double scale = 0.0;
};

/// The (mu, nu) pairs of an experiment, ordered by member then scale. The
/// perturbed measures are capped to the configured M and B.
std::vector<StabilityPair> stability_pairs(const ExperimentConfig& cfg);

/// One record per pair of stability_pairs, in the same order.
std::vector<StabilityRecord> run_stability(const ExperimentConfig& cfg);

/// True when all three inequalities hold within the configured tolerance.
bool record_passes(const StabilityRecord& r, double tolerance);

/// W2 between the solution for mu and a re-solve started from a perturbed
/// initial potential: the resolution limit of w2_outputs.
double numerical_floor(const DiscreteMeasure& mu, const ExperimentConfig& cfg);

struct ExponentFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r2 = 0.0;
  std::vector<std::size_t> used;
  std::vector<std::size_t> excluded;
};

/// Least-squares fit of log w2_outputs against log w2_inputs, skipping
/// non-converged records and outputs below 10 x floor. Throws
/// insufficient-data with fewer than 4 usable records or under two decades.
ExponentFit fit_exponent(const std::vector<StabilityRecord>& records, double floor);

void write_stability_csv(std::ostream& out, const std::vector<StabilityRecord>& records);

enum class MomentMapKind { Quadratic, SoftplusCombo };

MomentMapKind moment_map_kind_from_string(const std::string& name);
const char* to_string(MomentMapKind kind);

struct RoundtripRow {
  int n = 0;
  double w2_density = 0.0;  ///< W2(rho_N, rho_bar)
  double w2_target = 0.0;   ///< W2(mu, mu_N)
  bool converged = false;
  int iterations = 0;
};

struct RoundtripReport {
  MomentMapKind kind = MomentMapKind::Quadratic;
  double alpha = 1.0;
  std::vector<RoundtripRow> rows;
  /// Decay rates -d log W2 / d log N fitted over the rows.
  double rate_density = 0.0;
  double rate_target = 0.0;
};

/// Reference density exp(-u - (alpha/2) x^2) / Z on a fine 1D grid.
GridDensity roundtrip_reference(MomentMapKind kind, double alpha);

/// u'(x) for the moment map.
double moment_map_derivative(MomentMapKind kind, double x);

/// Quantile quantization of mu = (u')_# rho_bar with n equal atoms.
DiscreteMeasure roundtrip_target(MomentMapKind kind, const GridDensity& reference, int n);

/// Each solve gets at least 4N iterations.
RoundtripReport run_roundtrip(MomentMapKind kind, double alpha, const std::vector<int>& sizes,
                              const SolverConfig& solver = {});

struct SweepRow {
  double alpha = 0.0;
  bool converged = false;
  double residual = 0.0;
  double m2 = 0.0;
  Vector barycenter;
  double barycenter_gap = 0.0;  ///< |b(rho) + b(mu) / alpha|
  FunctionalBreakdown functional;
  double bound = 0.0;
  bool within_bound = false;
  std::vector<std::string> warnings;
};

/// Solves mu for each alpha (decreasing) and reports moments, the functional
/// breakdown and the a priori second-moment bound.
std::vector<SweepRow> run_alpha_sweep(const DiscreteMeasure& mu, const std::vector<double>& alphas,
                                      const SolverConfig& cfg = {});

void write_sweep_csv(std::ostream& out, const std::vector<SweepRow>& rows);
void write_roundtrip_csv(std::ostream& out, const RoundtripReport& report);

/// Runs f(0), ..., f(count - 1) on `jobs` threads with a fixed assignment
/// (task k on worker k mod jobs). Results are stored by index.
template <class T, class F>
std::vector<T> parallel_map(std::size_t count, int jobs, F f);

}  // namespace regmm

#include "regmm/detail/parallel.hpp"
