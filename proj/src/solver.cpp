#include "regmm/solver.hpp"

#include <cmath>
#include <deque>
#include <limits>

namespace regmm {

namespace {

QuadratureSpec with_alpha(QuadratureSpec spec, double alpha) {
  spec.alpha = alpha;
  return spec;
}

void check_support(const Potential& phi, const DiscreteMeasure& mu) {
  if (phi.size() != mu.size() || phi.dim() != mu.dim() || phi.support() != mu.points()) {
    throw Error(ErrorCode::InvalidParams, "potential and measure must share their support");
  }
}

struct Pair {
  Vector s;
  Vector y;
  double rho;
};

// Two-loop recursion for the inverse Hessian of -G applied to the ascent gradient.
Vector lbfgs_direction(const std::deque<Pair>& memory, const Vector& gradient) {
  Vector q = gradient;
  std::vector<double> a(memory.size());
  for (std::size_t k = memory.size(); k-- > 0;) {
    a[k] = memory[k].rho * memory[k].s.dot(q);
    q -= a[k] * memory[k].y;
  }
  if (!memory.empty()) {
    const Pair& last = memory.back();
    q *= last.s.dot(last.y) / last.y.squaredNorm();
  }
  for (std::size_t k = 0; k < memory.size(); ++k) {
    const double b = memory[k].rho * memory[k].y.dot(q);
    q += (a[k] - b) * memory[k].s;
  }
  return q;
}


SolveReport build_report(const Potential& phi, const DiscreteMeasure& mu, const SolverConfig& cfg,
                         const QuadratureSpec& spec, DualEvaluation current, int iterations, bool converged,
                         std::vector<TraceEntry> trace, double tol) {
  const double residual = current.gradient.cwiseAbs().maxCoeff();
  SolveReport report{phi,
                     mu,
                     cfg.alpha,
                     current.profile.log_z,
                     current.profile.cell_fraction,
                     residual,
                     current.value,
                     iterations,
                     converged,
                     std::move(trace),
                     spec,
                     {},
                     {},
                     {}};

  QuadratureSpec final_spec = spec;
  if (mu.dim() == 2) final_spec.warn_tolerance = tol;
  const MassProfile final_profile = mass_profile(phi, final_spec);
  report.density_moments = final_profile.density_moments;
  report.cell_first_moment = final_profile.cell_first_moment;
  report.warnings = final_profile.warnings;
  if (!converged) {
    report.warnings.push_back("max-iter-exceeded: residual " + std::to_string(report.residual_linf) + " after " +
                              std::to_string(iterations) + " iterations");
  }
  return report;
}

}  // namespace

double default_mass_tolerance(int dim) { return dim == 1 ? 1e-8 : 1e-5; }

DualEvaluation evaluate_dual(const Potential& phi, const DiscreteMeasure& mu, const QuadratureSpec& spec) {
  check_support(phi, mu);
  DualEvaluation out;
  QuadratureSpec inner = spec;
  inner.absolute_moment = false;
  inner.warn_tolerance = 0.0;
  out.profile = mass_profile(phi, inner);
  out.value = out.profile.log_z - mu.weights().dot(phi.phi());
  out.gradient = out.profile.cell_fraction - mu.weights();
  return out;
}

double dual_value(const Potential& phi, const DiscreteMeasure& mu, double alpha) {
  QuadratureSpec spec;
  spec.alpha = alpha;
  return dual_value(phi, mu, spec);
}

double dual_value(const Potential& phi, const DiscreteMeasure& mu, const QuadratureSpec& spec) {
  return evaluate_dual(phi, mu, spec).value;
}

Vector dual_gradient(const Potential& phi, const DiscreteMeasure& mu, double alpha) {
  QuadratureSpec spec;
  spec.alpha = alpha;
  return dual_gradient(phi, mu, spec);
}

Vector dual_gradient(const Potential& phi, const DiscreteMeasure& mu, const QuadratureSpec& spec) {
  return evaluate_dual(phi, mu, spec).gradient;
}

Vector initial_phi(const DiscreteMeasure& mu) {
  const Vector half_sq = 0.5 * mu.points().rowwise().squaredNorm();
  return half_sq.array() - mu.weights().dot(half_sq);
}

SolveReport solve(const DiscreteMeasure& mu, const SolverConfig& cfg, const std::optional<Vector>& phi0) {
  if (!(cfg.alpha > 0.0)) throw Error(ErrorCode::InvalidParams, "alpha must be positive");
  if (cfg.max_iter < 1) throw Error(ErrorCode::InvalidParams, "max_iter must be at least 1");
  if (!(cfg.shrink > 0.0 && cfg.shrink < 1.0) || !(cfg.sufficient_increase > 0.0 && cfg.sufficient_increase < 0.5)) {
    throw Error(ErrorCode::InvalidParams, "invalid line-search parameters");
  }
  if (phi0 && phi0->size() != mu.size()) throw Error(ErrorCode::InvalidParams, "initial phi has wrong length");

  const double tol = cfg.tol_mass > 0.0 ? cfg.tol_mass : default_mass_tolerance(mu.dim());
  QuadratureSpec spec = with_alpha(cfg.quadrature, cfg.alpha);

  Potential phi = gauged(Potential(mu.points(), phi0 ? *phi0 : initial_phi(mu)), mu.weights());
  spec.radius = effective_radius(phi, spec);

  DualEvaluation current = evaluate_dual(phi, mu, spec);
  auto residual_of = [](const DualEvaluation& e) { return e.gradient.cwiseAbs().maxCoeff(); };

  std::vector<TraceEntry> trace{{current.value, residual_of(current)}};
  std::deque<Pair> memory;
  int iterations = 0;
  bool converged = residual_of(current) <= tol;

  while (!converged && iterations < cfg.max_iter) {
    const Vector& g = current.gradient;
    Vector direction = memory.empty() ? g : lbfgs_direction(memory, g);
    double slope = g.dot(direction);
    if (!(slope > 0.0)) {
      memory.clear();
      direction = g;
      slope = g.squaredNorm();
    }

    double step = 1.0;
    std::optional<DualEvaluation> accepted;
    Potential trial = phi;
    for (int k = 0; k < 60; ++k) {
      trial = gauged(phi.with_phi(phi.phi() + step * direction), mu.weights());
      DualEvaluation e = evaluate_dual(trial, mu, spec);
      const double gain = e.value - current.value;
      if (gain >= cfg.sufficient_increase * step * slope) {
        accepted = std::move(e);
        break;
      }
      // Below floating-point resolution of G the sufficient-increase test is
      // noise; accept a step that keeps G within roundoff and shrinks the residual.
      const double noise = 1e-14 * (1.0 + std::abs(current.value));
      if (step * slope < noise && gain >= -noise && residual_of(e) < residual_of(current)) {
        accepted = std::move(e);
        break;
      }
      step *= cfg.shrink;
    }

    if (!accepted) {
      if (!memory.empty()) {
        memory.clear();
        continue;
      }
      break;  // stalled
    }

    Pair pair{trial.phi() - phi.phi(), -(accepted->gradient - current.gradient), 0.0};
    const double curvature = pair.s.dot(pair.y);
    if (curvature > 1e-12 * pair.s.norm() * pair.y.norm() && cfg.history > 0) {
      pair.rho = 1.0 / curvature;
      memory.push_back(std::move(pair));
      if (static_cast<int>(memory.size()) > cfg.history) memory.pop_front();
    }

    phi = trial;
    current = std::move(*accepted);
    ++iterations;
    trace.push_back({current.value, residual_of(current)});
    converged = residual_of(current) <= tol;
  }

  return build_report(phi, mu, cfg, spec, std::move(current), iterations, converged, std::move(trace), tol);
}

SolveReport evaluate_report(const DiscreteMeasure& mu, const Vector& phi, const SolverConfig& cfg) {
  if (!(cfg.alpha > 0.0)) throw Error(ErrorCode::InvalidParams, "alpha must be positive");
  if (phi.size() != mu.size()) throw Error(ErrorCode::InvalidParams, "phi has wrong length");
  const double tol = cfg.tol_mass > 0.0 ? cfg.tol_mass : default_mass_tolerance(mu.dim());
  QuadratureSpec spec = with_alpha(cfg.quadrature, cfg.alpha);
  const Potential p = gauged(Potential(mu.points(), phi), mu.weights());
  spec.radius = effective_radius(p, spec);
  DualEvaluation current = evaluate_dual(p, mu, spec);
  const double residual = current.gradient.cwiseAbs().maxCoeff();
  std::vector<TraceEntry> trace{{current.value, residual}};
  return build_report(p, mu, cfg, spec, std::move(current), 0, residual <= tol, std::move(trace), tol);
}

QuadratureSpec tabulation_spec(const SolveReport& report, int resolution) {
  QuadratureSpec spec = report.quadrature;
  spec.resolution = resolution;
  return spec;
}

GridDensity reconstruct_density(const SolveReport& report, const QuadratureSpec& spec, bool allow_unconverged) {
  if (!report.converged && !allow_unconverged) {
    throw Error(ErrorCode::NotConverged, "cannot reconstruct the density of a non-converged solve");
  }
  const Potential& p = report.potential;
  const double radius = spec.radius > 0.0 ? spec.radius : report.quadrature.radius;
  const int d = p.dim();
  std::vector<Interval> bounds(static_cast<std::size_t>(d), Interval{-radius, radius});
  std::vector<int> resolution(static_cast<std::size_t>(d), spec.resolution);
  Eigen::Index count = 1;
  for (int r : resolution) count *= r;

  GridDensity shape(bounds, resolution, Vector::Zero(count), std::numeric_limits<double>::infinity());
  Vector values(count);
  for (Eigen::Index k = 0; k < count; ++k) {
    const Vector x = shape.node(k);
    values[k] = std::exp(-conjugate_value(p, x) - 0.5 * report.alpha * x.squaredNorm() - report.log_z);
  }
  // The midpoint sum differs from the exact Z by the tabulation error.
  values /= values.sum() * shape.cell_volume();
  return GridDensity(std::move(bounds), std::move(resolution), std::move(values));
}

double optimality_residual(const SolveReport& report, const QuadratureSpec& spec) {
  const GridDensity rho = reconstruct_density(report, spec);
  const double dv = rho.cell_volume();
  const double threshold = spec.tail_tolerance;
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  for (Eigen::Index k = 0; k < rho.size(); ++k) {
    const double v = rho.values()[k];
    if (v * dv < threshold) continue;
    const Vector x = rho.node(k);
    const double stationarity =
        std::log(v) + moment_map_value(report.potential, report.log_z, x) + 0.5 * report.alpha * x.squaredNorm();
    lo = std::min(lo, stationarity);
    hi = std::max(hi, stationarity);
  }
  return hi >= lo ? hi - lo : 0.0;
}

}  // namespace regmm
