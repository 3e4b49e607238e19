#include "regmm/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numbers>
#include <numeric>
#include <ostream>
#include <random>

namespace regmm {
namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::uint64_t mix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t task_seed(std::uint64_t seed, std::size_t member, std::size_t scale) {
  return mix(mix(mix(seed) ^ member) ^ scale);
}

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

SolverConfig solver_config(const ExperimentConfig& cfg) {
  SolverConfig sc;
  sc.alpha = cfg.alpha;
  sc.tol_mass = cfg.tol_mass;
  sc.max_iter = cfg.max_iter;
  sc.quadrature.resolution = cfg.dim == 2 ? std::max(cfg.grid_resolution, 64) : 512;
  return sc;
}

int resolution_of(const ExperimentConfig& cfg) {
  return cfg.grid_resolution > 0 ? cfg.grid_resolution : default_grid_resolution(cfg.dim);
}

// Densities of two reports tabulated on one common grid.
std::pair<GridDensity, GridDensity> common_tabulation(const SolveReport& a, const SolveReport& b, int resolution) {
  QuadratureSpec spec = tabulation_spec(a, resolution);
  spec.radius = std::max(a.quadrature.radius, b.quadrature.radius);
  return {reconstruct_density(a, spec), reconstruct_density(b, spec)};
}

struct Coupling {
  double w2 = 0.0;
  double corr = 0.0;
};

// W2 and maximal correlation between a density and a discrete measure. 2D
// grids are coarsened so that the transport network stays within its limit.
Coupling couple(const GridDensity& rho, const DiscreteMeasure& mu) {
  DiscreteMeasure cloud =
      rho.dim() == 1
          ? to_discrete(rho, 0.0)
          : coarsen(rho, static_cast<int>(std::min<Eigen::Index>(200, kNetworkSupportLimit - mu.size())));
  const double w2 = w2_discrete(cloud, mu);
  return {w2, 0.5 * (moments(cloud).m2 + moments(mu).m2 - w2 * w2)};
}

double w2_densities(const GridDensity& a, const GridDensity& b) {
  if (a.dim() == 1) return w2_grid_1d_exact(a, b);
  return w2_discrete(coarsen(a, 200), coarsen(b, 200));
}

bool holds(double larger, double slack, double tolerance) {
  const double smaller = larger - slack;
  return slack >= -tolerance * (1.0 + std::max(std::abs(larger), std::abs(smaller)));
}

double fit_slope(const std::vector<double>& x, const std::vector<double>& y, double* intercept, double* r2) {
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
    syy += (y[i] - my) * (y[i] - my);
  }
  const double slope = sxy / sxx;
  if (intercept) *intercept = my - slope * mx;
  if (r2) *r2 = syy > 0.0 ? (sxy * sxy) / (sxx * syy) : 1.0;
  return slope;
}

double softplus(double t) { return t > 0.0 ? t + std::log1p(std::exp(-t)) : std::log1p(std::exp(t)); }

double moment_map_value(MomentMapKind kind, double x) {
  switch (kind) {
    case MomentMapKind::Quadratic: return 0.5 * x * x;
    case MomentMapKind::SoftplusCombo: return softplus(2.0 * x) + 0.25 * x * x;
  }
  return 0.0;
}

}  // namespace

int default_grid_resolution(int dim) { return dim == 2 ? 512 : 65536; }

void validate(const ExperimentConfig& cfg) {
  auto fail = [](const std::string& what) { throw Error(ErrorCode::InvalidParams, what); };
  if (!(cfg.alpha > 0.0)) fail("alpha must be positive");
  if (cfg.dim != 1 && cfg.dim != 2) fail("dim must be 1 or 2");
  if (cfg.ladder.empty()) fail("ladder is empty");
  for (std::size_t i = 0; i < cfg.ladder.size(); ++i) {
    if (!(cfg.ladder[i] > 0.0) || !std::isfinite(cfg.ladder[i])) fail("ladder scales must be positive");
    if (i > 0 && !(cfg.ladder[i] < cfg.ladder[i - 1])) fail("ladder must be strictly decreasing");
  }
  if (!(cfg.tolerance > 0.0)) fail("tolerance must be positive");
  if (cfg.grid_resolution < 0) fail("grid resolution must be nonnegative");
  if (cfg.max_iter < 1) fail("max_iter must be positive");
  if (cfg.jobs < 1) fail("jobs must be positive");
  if (!(cfg.params.max_m2 > 0.0) || !(cfg.params.max_barycenter >= 0.0)) fail("moment caps must be positive");
}

double stability_constant(int d, double alpha, double m, double b) {
  const double cm = second_moment_bound(d, alpha, m, b);
  const double k = 4.0 * std::sqrt(cm + m + 2.0 * b * b / alpha);
  return std::sqrt(2.0 * k / alpha);
}

DiscreteMeasure perturb(const DiscreteMeasure& mu, FamilyKind kind, double scale, std::uint64_t seed) {
  const int d = mu.dim();
  if (kind == FamilyKind::DiracShift) {
    Vector v = Vector::Zero(d);
    v[0] = scale;
    return translate(mu, v);
  }
  PointMatrix pts = mu.points();
  if (kind == FamilyKind::TwoPointSplit) {
    // Push every atom away from the barycenter by `scale`.
    const Vector b = moments(mu).barycenter;
    for (Eigen::Index i = 0; i < pts.rows(); ++i) {
      Vector dir = pts.row(i).transpose() - b;
      const double norm = dir.norm();
      if (norm > 0.0) {
        dir /= norm;
      } else {
        dir = Vector::Zero(d);
        dir[0] = i % 2 == 0 ? -1.0 : 1.0;
      }
      pts.row(i) += scale * dir.transpose();
    }
    return DiscreteMeasure(std::move(pts), mu.weights());
  }
  std::mt19937_64 rng(seed);
  for (Eigen::Index i = 0; i < pts.rows(); ++i) {
    if (d == 1) {
      pts(i, 0) += uniform01(rng) < 0.5 ? -scale : scale;
    } else {
      const double theta = 2.0 * std::numbers::pi * uniform01(rng);
      pts(i, 0) += scale * std::cos(theta);
      pts(i, 1) += scale * std::sin(theta);
    }
  }
  return DiscreteMeasure(std::move(pts), mu.weights());
}

StabilityRecord stability_record(const DiscreteMeasure& mu, const DiscreteMeasure& nu, const ExperimentConfig& cfg) {
  const SolverConfig sc = solver_config(cfg);
  const SolveReport rm = solve(mu, sc);
  const SolveReport rn = solve(nu, sc);
  StabilityRecord r;
  r.converged_mu = rm.converged;
  r.converged_nu = rn.converged;
  r.w2_inputs = w2_discrete(mu, nu);
  if (!rm.converged || !rn.converged) {
    r.w2_outputs = r.gap_sum = r.cross_sum = r.bound_c = kNaN;
    r.slack_strongconv = r.slack_triangle = r.slack_theorem = kNaN;
    return r;
  }

  const auto [rho_mu, rho_nu] = common_tabulation(rm, rn, resolution_of(cfg));
  r.w2_outputs = w2_densities(rho_mu, rho_nu);

  const Coupling nu_nu = couple(rho_nu, nu);
  const Coupling nu_mu = couple(rho_nu, mu);
  const Coupling mu_mu = couple(rho_mu, mu);
  const Coupling mu_nu = couple(rho_mu, nu);
  // Entropy and second moment cancel in the gap; only correlations remain.
  r.gap_sum = nu_mu.corr - nu_nu.corr + mu_nu.corr - mu_mu.corr;
  r.cross_sum = nu_nu.w2 + nu_mu.w2 + mu_mu.w2 + mu_nu.w2;

  const MomentSummary a = moments(mu);
  const MomentSummary b = moments(nu);
  const double m = std::isfinite(cfg.params.max_m2) ? cfg.params.max_m2 : std::max(a.m2, b.m2);
  const double bb = std::isfinite(cfg.params.max_barycenter) ? cfg.params.max_barycenter
                                                             : std::max(a.barycenter.norm(), b.barycenter.norm());
  r.bound_c = stability_constant(mu.dim(), cfg.alpha, m, bb);

  r.slack_strongconv = r.gap_sum - 0.5 * cfg.alpha * r.w2_outputs * r.w2_outputs;
  r.slack_triangle = r.cross_sum * r.w2_inputs - r.gap_sum;
  r.slack_theorem = r.bound_c * std::sqrt(r.w2_inputs) - r.w2_outputs;
  return r;
}

bool record_passes(const StabilityRecord& r, double tolerance) {
  if (!r.converged_mu || !r.converged_nu) return false;
  return holds(r.gap_sum, r.slack_strongconv, tolerance) &&
         holds(r.cross_sum * r.w2_inputs, r.slack_triangle, tolerance) &&
         holds(r.bound_c * std::sqrt(r.w2_inputs), r.slack_theorem, tolerance);
}

std::vector<StabilityPair> stability_pairs(const ExperimentConfig& cfg) {
  validate(cfg);
  FamilyParams params = cfg.params;
  params.dim = cfg.dim;
  const std::vector<DiscreteMeasure> members = make_family(cfg.family, params, cfg.seed);
  std::vector<StabilityPair> pairs;
  for (std::size_t i = 0; i < members.size(); ++i) {
    for (std::size_t k = 0; k < cfg.ladder.size(); ++k) {
      DiscreteMeasure nu = perturb(members[i], cfg.family, cfg.ladder[k], task_seed(cfg.seed, i, k));
      if (std::isfinite(cfg.params.max_m2) || std::isfinite(cfg.params.max_barycenter)) {
        nu = enforce_moment_caps(nu, cfg.params.max_m2, cfg.params.max_barycenter);
      }
      pairs.push_back({members[i], std::move(nu), static_cast<int>(i), cfg.ladder[k]});
    }
  }
  return pairs;
}

std::vector<StabilityRecord> run_stability(const ExperimentConfig& cfg) {
  const std::vector<StabilityPair> pairs = stability_pairs(cfg);
  return parallel_map<StabilityRecord>(pairs.size(), cfg.jobs, [&](std::size_t k) {
    StabilityRecord r = stability_record(pairs[k].mu, pairs[k].nu, cfg);
    r.member = pairs[k].member;
    r.scale = pairs[k].scale;
    return r;
  });
}

double numerical_floor(const DiscreteMeasure& mu, const ExperimentConfig& cfg) {
  const SolverConfig sc = solver_config(cfg);
  const SolveReport first = solve(mu, sc);
  std::mt19937_64 rng(task_seed(cfg.seed, 0xf1004, 0));
  Vector phi0 = first.potential.phi();
  for (Eigen::Index j = 0; j < phi0.size(); ++j) phi0[j] += 1e-2 * (uniform01(rng) - 0.5);
  const SolveReport second = solve(mu, sc, phi0);
  if (!first.converged || !second.converged) {
    throw Error(ErrorCode::NotConverged, "floor estimate needs two converged solves");
  }
  const auto [a, b] = common_tabulation(first, second, resolution_of(cfg));
  return w2_densities(a, b);
}

ExponentFit fit_exponent(const std::vector<StabilityRecord>& records, double floor) {
  ExponentFit fit;
  std::vector<double> x, y;
  for (std::size_t i = 0; i < records.size(); ++i) {
    const StabilityRecord& r = records[i];
    const bool usable = r.converged_mu && r.converged_nu && r.w2_inputs > 0.0 && std::isfinite(r.w2_outputs) &&
                        r.w2_outputs > 0.0 && r.w2_outputs >= 10.0 * floor;
    if (!usable) {
      fit.excluded.push_back(i);
      continue;
    }
    fit.used.push_back(i);
    x.push_back(std::log(r.w2_inputs));
    y.push_back(std::log(r.w2_outputs));
  }
  if (x.size() < 4) throw Error(ErrorCode::InsufficientData, "exponent fit needs at least 4 usable records");
  const auto [lo, hi] = std::minmax_element(x.begin(), x.end());
  if (*hi - *lo < 2.0 * std::log(10.0) * (1.0 - 1e-12)) {
    throw Error(ErrorCode::InsufficientData, "w2_inputs span less than two decades");
  }
  fit.slope = fit_slope(x, y, &fit.intercept, &fit.r2);
  return fit;
}

void write_stability_csv(std::ostream& out, const std::vector<StabilityRecord>& records) {
  out << "w2_inputs,w2_outputs,gap_sum,cross_sum,bound_C,slack_strongconv,slack_triangle,slack_theorem,"
         "converged_mu,converged_nu\n";
  for (const StabilityRecord& r : records) {
    out << format_double(r.w2_inputs) << ',' << format_double(r.w2_outputs) << ',' << format_double(r.gap_sum) << ','
        << format_double(r.cross_sum) << ',' << format_double(r.bound_c) << ',' << format_double(r.slack_strongconv)
        << ',' << format_double(r.slack_triangle) << ',' << format_double(r.slack_theorem) << ','
        << (r.converged_mu ? "true" : "false") << ',' << (r.converged_nu ? "true" : "false") << '\n';
  }
}

MomentMapKind moment_map_kind_from_string(const std::string& name) {
  if (name == "quadratic") return MomentMapKind::Quadratic;
  if (name == "softplus-combo") return MomentMapKind::SoftplusCombo;
  throw Error(ErrorCode::InvalidParams, "unknown moment map '" + name + "'");
}

const char* to_string(MomentMapKind kind) {
  return kind == MomentMapKind::Quadratic ? "quadratic" : "softplus-combo";
}

double moment_map_derivative(MomentMapKind kind, double x) {
  switch (kind) {
    case MomentMapKind::Quadratic: return x;
    // d/dx softplus(2x) = 2 sigmoid(2x)
    case MomentMapKind::SoftplusCombo: return 2.0 / (1.0 + std::exp(-2.0 * x)) + 0.5 * x;
  }
  return 0.0;
}

GridDensity roundtrip_reference(MomentMapKind kind, double alpha) {
  if (!(alpha > 0.0)) throw Error(ErrorCode::InvalidParams, "alpha must be positive");
  // Both potentials are at least (1/4)x^2 - 2|x|, so the tails vanish well inside this window.
  const double half = 12.0 / std::sqrt(std::min(alpha + 0.5, 1.0)) + 4.0;
  return GridDensity::tabulate({Interval{-half, half}}, {1 << 17}, [&](const Vector& x) {
    return std::exp(-moment_map_value(kind, x[0]) - 0.5 * alpha * x[0] * x[0]);
  });
}

DiscreteMeasure roundtrip_target(MomentMapKind kind, const GridDensity& reference, int n) {
  if (n < 1) throw Error(ErrorCode::InvalidParams, "target size must be positive");
  PointMatrix pts(n, 1);
  for (int i = 0; i < n; ++i) {
    pts(i, 0) = moment_map_derivative(kind, grid_quantile_1d(reference, (i + 0.5) / n));
  }
  return DiscreteMeasure(std::move(pts), Vector::Constant(n, 1.0 / n));
}

namespace {

// W2 between (u')_# of the reference histogram and its n-atom quantile
// quantization: atom i takes the mass between quantiles i/n and (i+1)/n,
// integrated piece by piece with three-point Gauss-Legendre.
double w2_to_quantization(MomentMapKind kind, const GridDensity& reference, int n) {
  std::vector<double> edges(static_cast<std::size_t>(n - 1));
  std::vector<double> atoms(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    atoms[i] = moment_map_derivative(kind, grid_quantile_1d(reference, (i + 0.5) / n));
    if (i > 0) edges[i - 1] = grid_quantile_1d(reference, static_cast<double>(i) / n);
  }
  const double lo = reference.bounds()[0].lo;
  const double h = reference.spacing(0);
  const Vector& v = reference.values();
  const double total = v.sum() * h;

  static const double node[3] = {-std::sqrt(0.6), 0.0, std::sqrt(0.6)};
  static const double weight[3] = {5.0 / 9.0, 8.0 / 9.0, 5.0 / 9.0};
  double sum = 0.0;
  std::size_t atom = 0;
  for (Eigen::Index k = 0; k < v.size(); ++k) {
    if (v[k] <= 0.0) continue;
    const double density = v[k] / total;
    double a = lo + static_cast<double>(k) * h;
    const double b = a + h;
    while (a < b) {
      while (atom < edges.size() && edges[atom] <= a) ++atom;
      const double end = atom < edges.size() ? std::min(b, edges[atom]) : b;
      const double mid = 0.5 * (a + end);
      const double half = 0.5 * (end - a);
      for (int g = 0; g < 3; ++g) {
        const double diff = moment_map_derivative(kind, mid + half * node[g]) - atoms[atom];
        sum += weight[g] * half * density * diff * diff;
      }
      a = end;
    }
  }
  return std::sqrt(sum);
}

}  // namespace

RoundtripReport run_roundtrip(MomentMapKind kind, double alpha, const std::vector<int>& sizes,
                              const SolverConfig& solver) {
  if (sizes.empty()) throw Error(ErrorCode::InvalidParams, "size ladder is empty");
  RoundtripReport out;
  out.kind = kind;
  out.alpha = alpha;
  const GridDensity reference = roundtrip_reference(kind, alpha);
  SolverConfig sc = solver;
  sc.alpha = alpha;
  for (int n : sizes) {
    const DiscreteMeasure target = roundtrip_target(kind, reference, n);
    // Quasi-Newton iterations grow about linearly with the number of atoms.
    sc.max_iter = std::max(solver.max_iter, 4 * n);
    const SolveReport report = solve(target, sc);
    RoundtripRow row;
    row.n = n;
    row.converged = report.converged;
    row.iterations = report.iterations;
    row.w2_target = w2_to_quantization(kind, reference, n);
    row.w2_density = report.converged
                         ? w2_grid_1d_exact(reconstruct_density(report, tabulation_spec(report, 1 << 16)), reference)
                         : kNaN;
    out.rows.push_back(row);
  }
  std::vector<double> logn, ld, lt;
  for (const RoundtripRow& r : out.rows) {
    if (!r.converged) continue;
    logn.push_back(std::log(static_cast<double>(r.n)));
    ld.push_back(std::log(r.w2_density));
    lt.push_back(std::log(r.w2_target));
  }
  if (logn.size() >= 2) {
    out.rate_density = -fit_slope(logn, ld, nullptr, nullptr);
    out.rate_target = -fit_slope(logn, lt, nullptr, nullptr);
  } else {
    out.rate_density = out.rate_target = kNaN;
  }
  return out;
}

std::vector<SweepRow> run_alpha_sweep(const DiscreteMeasure& mu, const std::vector<double>& alphas,
                                      const SolverConfig& cfg) {
  if (alphas.empty()) throw Error(ErrorCode::InvalidParams, "alpha list is empty");
  for (std::size_t i = 0; i < alphas.size(); ++i) {
    if (!(alphas[i] > 0.0)) throw Error(ErrorCode::InvalidParams, "alphas must be positive");
    if (i > 0 && !(alphas[i] < alphas[i - 1])) throw Error(ErrorCode::InvalidParams, "alphas must be decreasing");
  }
  const MomentSummary target = moments(mu);
  std::vector<SweepRow> rows;
  for (double alpha : alphas) {
    SolverConfig sc = cfg;
    sc.alpha = alpha;
    if (mu.dim() == 2 && sc.quadrature.warn_tolerance <= 0.0) sc.quadrature.warn_tolerance = 1e-6;
    const SolveReport report = solve(mu, sc);
    SweepRow row;
    row.alpha = alpha;
    row.converged = report.converged;
    row.residual = report.residual_linf;
    row.m2 = report.density_moments.m2;
    row.barycenter = report.density_moments.barycenter;
    row.barycenter_gap = (row.barycenter + target.barycenter / alpha).norm();
    row.functional = functional_F(report);
    row.bound = second_moment_bound(mu.dim(), alpha, target.m2, target.barycenter.norm());
    row.within_bound = row.m2 <= row.bound;
    row.warnings = report.warnings;
    if (!report.converged) row.warnings.push_back("not-converged");
    // Width of one tabulation cell against the density's own scale.
    if (2.0 * report.quadrature.radius / sc.quadrature.resolution > 0.25 / std::sqrt(alpha + row.m2)) {
      row.warnings.push_back("resolution-limit");
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

void write_sweep_csv(std::ostream& out, const std::vector<SweepRow>& rows) {
  out << "alpha,converged,residual,m2,bound,within_bound,barycenter_x,barycenter_y,barycenter_gap,entropy,maxcorr,"
         "total,flags\n";
  for (const SweepRow& r : rows) {
    std::string flags;
    for (const std::string& w : r.warnings) flags += (flags.empty() ? "" : ";") + w;
    out << format_double(r.alpha) << ',' << (r.converged ? "true" : "false") << ',' << format_double(r.residual)
        << ',' << format_double(r.m2) << ',' << format_double(r.bound) << ',' << (r.within_bound ? "true" : "false")
        << ',' << format_double(r.barycenter[0]) << ',' << (r.barycenter.size() > 1 ? format_double(r.barycenter[1]) : "")
        << ',' << format_double(r.barycenter_gap) << ',' << format_double(r.functional.entropy) << ','
        << format_double(r.functional.maxcorr) << ',' << format_double(r.functional.total) << ",\"" << flags << "\"\n";
  }
}

void write_roundtrip_csv(std::ostream& out, const RoundtripReport& report) {
  out << "n,w2_density,w2_target,converged,iterations\n";
  for (const RoundtripRow& r : report.rows) {
    out << r.n << ',' << format_double(r.w2_density) << ',' << format_double(r.w2_target) << ','
        << (r.converged ? "true" : "false") << ',' << r.iterations << '\n';
  }
  out << "# rate_density," << format_double(report.rate_density) << '\n';
  out << "# rate_target," << format_double(report.rate_target) << '\n';
}

}  // namespace regmm
