// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 on any failure.

#include "regmm/functionals.hpp"
#include "regmm/harness.hpp"
#include "regmm/io.hpp"
#include "regmm/solver.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <random>
#include <sstream>
#include <string>
#include <vector>

using namespace regmm;

namespace {

// Criterion 1
constexpr double kDiracTol = 1e-8;
constexpr int kDiracProbes = 100;
constexpr double kDiracSeconds = 1.0;
// Criteria 2 and 3
constexpr int kInstances1d = 50;
constexpr int kMaxAtoms1d = 50;
constexpr int kInstances2d = 10;
constexpr int kMaxAtoms2d = 20;
constexpr int kGrid2d = 512;
constexpr double kResidual1d = 1e-8;
constexpr double kResidual2d = 1e-4;
constexpr double kBarycenter1d = 1e-7;
constexpr double kBarycenter2d = 1e-3;
constexpr double kPushforwardSeconds = 120.0;
// Criterion 4
constexpr int kGradientPotentials = 20;
constexpr double kGradientRelTol = 1e-6;
constexpr int kConcavityPairs = 100;
// Criterion 5
constexpr int kTranslationTriples = 20;
constexpr double kTranslationTol = 1e-3;
// Criterion 6
constexpr int kEntropyDensities = 100;
constexpr double kEntropySlack = 1e-3;
constexpr double kEntropyGaussianTol = 1e-4;
// Criterion 7
constexpr double kStabilityTol = 1e-3;
constexpr int kStabilityPairs = 50;
constexpr double kStabilitySeconds = 300.0;
// Criterion 9
constexpr double kRoundtripNoise = 0.10;
constexpr double kRoundtripFinal = 5e-3;

struct Outcome {
  bool pass = true;
  std::string detail;
};

int failures = 0;

void report(int id, const char* name, const Outcome& o) {
  std::printf("criterion %2d %s  %s  (%s)\n", id, o.pass ? "PASS" : "FAIL", name, o.detail.c_str());
  std::fflush(stdout);
  if (!o.pass) ++failures;
}

std::string fmt(const char* f, double a) {
  char buf[96];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

class Timer {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

DiscreteMeasure random_measure(std::mt19937_64& rng, int n, int dim, double spread) {
  PointMatrix y(n, dim);
  Vector w(n);
  for (int j = 0; j < n; ++j) {
    for (int k = 0; k < dim; ++k) y(j, k) = spread * (2.0 * uniform01(rng) - 1.0);
    w[j] = 0.1 + uniform01(rng);
  }
  return DiscreteMeasure(y, w / w.sum());
}

struct Solved {
  DiscreteMeasure mu;
  SolveReport report;
};

// Instances shared by criteria 2, 3 and 8.
std::vector<Solved> solved_instances;

Outcome single_dirac() {
  Timer t;
  Outcome o;
  double worst = 0.0;
  for (double alpha : {0.5, 1.0, 2.0}) {
    for (double y0 : {0.0, 2.0, -2.0}) {
      const DiscreteMeasure mu = DiscreteMeasure::dirac(Vector::Constant(1, y0));
      SolverConfig cfg;
      cfg.alpha = alpha;
      const SolveReport r = solve(mu, cfg);
      const double mean = -y0 / alpha;
      worst = std::max(worst, std::abs(r.density_moments.barycenter[0] - mean));
      worst = std::max(worst, std::abs(r.density_moments.m2 - (1.0 / alpha + mean * mean)));
      for (int k = 0; k < kDiracProbes; ++k) {
        const Vector x = Vector::Constant(1, -6.0 + 12.0 * k / (kDiracProbes - 1));
        const double u = x[0] * y0 + 0.5 * std::log(2.0 * std::numbers::pi / alpha) + y0 * y0 / (2.0 * alpha);
        worst = std::max(worst, std::abs(moment_map_value(r.potential, r.log_z, x) - u));
      }
      o.pass = o.pass && r.converged;
    }
  }
  const double secs = t.seconds();
  o.pass = o.pass && worst <= kDiracTol && secs < kDiracSeconds;
  o.detail = fmt("max error %.2e", worst) + fmt(", %.3f s", secs);
  return o;
}

Outcome pushforward() {
  Timer t;
  std::mt19937_64 rng(2024);
  double worst1 = 0.0, worst2 = 0.0;
  bool converged = true;
  for (int i = 0; i < kInstances1d + kInstances2d; ++i) {
    const bool two = i >= kInstances1d;
    const int n = 1 + static_cast<int>(uniform01(rng) * (two ? kMaxAtoms2d : kMaxAtoms1d));
    SolverConfig cfg;
    cfg.alpha = 0.25 + 3.75 * uniform01(rng);
    cfg.quadrature.resolution = kGrid2d;
    const DiscreteMeasure mu = random_measure(rng, n, two ? 2 : 1, two ? 2.0 : 3.0);
    SolveReport r = solve(mu, cfg);
    converged = converged && r.converged;
    (two ? worst2 : worst1) = std::max(two ? worst2 : worst1, r.residual_linf);
    solved_instances.push_back({mu, std::move(r)});
  }
  const double secs = t.seconds();
  Outcome o;
  o.pass = converged && worst1 <= kResidual1d && worst2 <= kResidual2d && secs < kPushforwardSeconds;
  o.detail = fmt("1D max residual %.2e", worst1) + fmt(", 2D %.2e", worst2) + fmt(", %.1f s", secs);
  return o;
}

Outcome barycenter_identity() {
  double worst1 = 0.0, worst2 = 0.0;
  for (const Solved& s : solved_instances) {
    const double gap = (s.report.density_moments.barycenter + moments(s.mu).barycenter / s.report.alpha).norm();
    (s.mu.dim() == 1 ? worst1 : worst2) = std::max(s.mu.dim() == 1 ? worst1 : worst2, gap);
  }
  Outcome o;
  o.pass = !solved_instances.empty() && worst1 <= kBarycenter1d && worst2 <= kBarycenter2d;
  o.detail = fmt("1D max gap %.2e", worst1) + fmt(", 2D %.2e", worst2);
  return o;
}

Outcome dual_correctness() {
  std::mt19937_64 rng(77);
  double worst_rel = 0.0;
  for (int i = 0; i < kGradientPotentials; ++i) {
    const int dim = i % 2 == 0 ? 1 : 2;
    const int n = 2 + static_cast<int>(uniform01(rng) * 8);
    const DiscreteMeasure mu = random_measure(rng, n, dim, 2.0);
    QuadratureSpec spec;
    spec.alpha = 0.5 + 1.5 * uniform01(rng);
    spec.resolution = 256;
    Vector phi(n);
    for (int j = 0; j < n; ++j) phi[j] = uniform01(rng) - 0.5;
    phi.array() -= mu.weights().dot(phi);
    const Potential p(mu.points(), phi);
    spec.radius = effective_radius(p, spec);
    const Vector g = dual_gradient(p, mu, spec);
    const double h = 1e-5;
    double err = 0.0;
    for (int j = 0; j < n; ++j) {
      Vector up = phi, down = phi;
      up[j] += h;
      down[j] -= h;
      const double fd = (dual_value(p.with_phi(up), mu, spec) - dual_value(p.with_phi(down), mu, spec)) / (2.0 * h);
      err = std::max(err, std::abs(fd - g[j]));
    }
    worst_rel = std::max(worst_rel, err / std::max(g.cwiseAbs().maxCoeff(), 1e-300));
  }

  int violations = 0;
  for (int i = 0; i < kConcavityPairs; ++i) {
    const int n = 2 + static_cast<int>(uniform01(rng) * 10);
    const DiscreteMeasure mu = random_measure(rng, n, 1, 3.0);
    const double alpha = 0.25 + 3.75 * uniform01(rng);
    Vector a(n), b(n);
    for (int j = 0; j < n; ++j) {
      a[j] = 4.0 * (uniform01(rng) - 0.5);
      b[j] = 4.0 * (uniform01(rng) - 0.5);
    }
    const Potential pa(mu.points(), a);
    const double ga = dual_value(pa, mu, alpha);
    const double gb = dual_value(pa.with_phi(b), mu, alpha);
    const double gm = dual_value(pa.with_phi(0.5 * (a + b)), mu, alpha);
    if (gm < 0.5 * (ga + gb) - 1e-12 * (1.0 + std::abs(ga) + std::abs(gb))) ++violations;
  }
  Outcome o;
  o.pass = worst_rel <= kGradientRelTol && violations == 0;
  o.detail = fmt("max relative gradient error %.2e", worst_rel) + fmt(", %.0f concavity violations", violations);
  return o;
}

// Mixture of Gaussians with exact mean and variance.
struct Mixture {
  std::vector<double> w, m, s;
  double mean() const {
    double v = 0.0;
    for (std::size_t k = 0; k < w.size(); ++k) v += w[k] * m[k];
    return v;
  }
  double second() const {
    double v = 0.0;
    for (std::size_t k = 0; k < w.size(); ++k) v += w[k] * (s[k] * s[k] + m[k] * m[k]);
    return v;
  }
  double operator()(double x) const {
    double v = 0.0;
    for (std::size_t k = 0; k < w.size(); ++k) {
      const double z = (x - m[k]) / s[k];
      v += w[k] * std::exp(-0.5 * z * z) / (s[k] * std::sqrt(2.0 * std::numbers::pi));
    }
    return v;
  }
};

Mixture random_mixture(std::mt19937_64& rng) {
  Mixture mix;
  const int parts = 1 + static_cast<int>(uniform01(rng) * 4);
  double total = 0.0;
  for (int k = 0; k < parts; ++k) {
    mix.w.push_back(0.2 + uniform01(rng));
    mix.m.push_back(6.0 * (uniform01(rng) - 0.5));
    mix.s.push_back(0.3 + 1.2 * uniform01(rng));
    total += mix.w.back();
  }
  for (double& w : mix.w) w /= total;
  return mix;
}

Outcome translation_identities_check() {
  std::mt19937_64 rng(5);
  double worst = 0.0;
  for (int i = 0; i < kTranslationTriples; ++i) {
    const Mixture mix = random_mixture(rng);
    const GridDensity rho =
        GridDensity::tabulate({Interval{-12.0, 12.0}}, {4096}, [&](const Vector& x) { return mix(x[0]); });
    const DiscreteMeasure mu = random_measure(rng, 1 + static_cast<int>(uniform01(rng) * 10), 1, 3.0);
    const Vector v = Vector::Constant(1, 2.0 * uniform01(rng) - 1.0);
    const double alpha = 0.5 + 1.5 * uniform01(rng);
    const TranslationCheck c = translation_identities(rho, mu, v, alpha);
    worst = std::max({worst, std::abs(c.lhs1 - c.rhs1), std::abs(c.lhs2 - c.rhs2)});
  }
  Outcome o;
  o.pass = worst <= kTranslationTol;
  o.detail = fmt("max identity gap %.2e", worst);
  return o;
}

Outcome max_entropy() {
  std::mt19937_64 rng(6);
  const double bound = -0.5 * std::log(2.0 * std::numbers::pi * std::numbers::e);
  double worst = std::numeric_limits<double>::infinity();
  for (int i = 0; i < kEntropyDensities; ++i) {
    const Mixture mix = random_mixture(rng);
    const double mean = mix.mean();
    const double sd = std::sqrt(mix.second() - mean * mean);
    // Standardized: centered with unit second moment.
    const GridDensity rho = GridDensity::tabulate({Interval{-15.0, 15.0}}, {8192},
                                                  [&](const Vector& x) { return sd * mix(sd * x[0] + mean); });
    worst = std::min(worst, entropy_grid(rho) - bound);
  }
  const GridDensity gauss = GridDensity::tabulate({Interval{-15.0, 15.0}}, {8192},
                                                  [](const Vector& x) { return std::exp(-0.5 * x[0] * x[0]); });
  const double gauss_gap = std::abs(entropy_grid(gauss) - bound);
  Outcome o;
  o.pass = worst >= -kEntropySlack && gauss_gap <= kEntropyGaussianTol;
  o.detail = fmt("min excess over the Gaussian bound %.2e", worst) + fmt(", Gaussian gap %.2e", gauss_gap);
  return o;
}

ExperimentConfig stability_config(FamilyKind kind) {
  ExperimentConfig cfg;
  cfg.alpha = 1.0;
  cfg.dim = 1;
  cfg.family = kind;
  cfg.params.max_m2 = 4.0;
  cfg.params.max_barycenter = 1.0;
  cfg.params.splits = {0.2, 0.6, 1.0, 1.4, 1.8};
  cfg.params.cloud_count = 5;
  cfg.params.cloud_size = 12;
  cfg.params.radius = 2.0;
  cfg.seed = 2;
  cfg.ladder = {0.3, 0.1, 0.03, 0.01, 0.003};
  cfg.tolerance = kStabilityTol;
  cfg.jobs = 4;
  return cfg;
}

std::vector<StabilityPair> stability_inputs;

Outcome stability_chain() {
  Timer t;
  int total = 0, passed = 0;
  double worst = std::numeric_limits<double>::infinity();
  for (FamilyKind kind : {FamilyKind::TwoPointSplit, FamilyKind::RandomCloud}) {
    const ExperimentConfig cfg = stability_config(kind);
    for (const StabilityRecord& r : run_stability(cfg)) {
      ++total;
      if (record_passes(r, kStabilityTol)) ++passed;
      if (r.converged_mu && r.converged_nu) {
        worst = std::min({worst, r.slack_strongconv, r.slack_triangle, r.slack_theorem});
      }
    }
    for (StabilityPair& p : stability_pairs(cfg)) stability_inputs.push_back(std::move(p));
  }
  const double secs = t.seconds();
  Outcome o;
  o.pass = total == kStabilityPairs && passed == total && secs < kStabilitySeconds;
  o.detail = std::to_string(passed) + "/" + std::to_string(total) + " records pass" +
             fmt(", smallest slack %.2e", worst) + fmt(", %.1f s", secs);
  return o;
}

Outcome second_moment_bound_check() {
  int checked = 0, violations = 0;
  double tightest = std::numeric_limits<double>::infinity();
  auto check = [&](const DiscreteMeasure& mu, const SolveReport& r) {
    const MomentSummary m = moments(mu);
    const double bound = second_moment_bound(mu.dim(), r.alpha, m.m2, m.barycenter.norm());
    ++checked;
    if (!r.converged || !(r.density_moments.m2 <= bound)) ++violations;
    tightest = std::min(tightest, bound - r.density_moments.m2);
  };
  for (const Solved& s : solved_instances) check(s.mu, s.report);
  SolverConfig cfg;
  cfg.alpha = 1.0;
  for (const StabilityPair& p : stability_inputs) {
    check(p.mu, solve(p.mu, cfg));
    check(p.nu, solve(p.nu, cfg));
  }
  const double cbar = second_moment_cbar(1, 1.0, 1.0, 1.0);
  Outcome o;
  o.pass = checked == kInstances1d + kInstances2d + 2 * kStabilityPairs && violations == 0 && cbar == 8.0;
  o.detail = std::to_string(checked) + " instances, " + std::to_string(violations) + " above the bound" +
             fmt(", smallest margin %.3g", tightest) + fmt(", Cbar(1,1,1,1) = %.17g", cbar);
  return o;
}

Outcome roundtrip() {
  const RoundtripReport rep = run_roundtrip(MomentMapKind::Quadratic, 1.0, {25, 50, 100, 200, 400});
  bool ok = true;
  std::string values;
  for (std::size_t i = 0; i < rep.rows.size(); ++i) {
    const RoundtripRow& r = rep.rows[i];
    ok = ok && r.converged;
    if (i > 0) ok = ok && r.w2_density <= (1.0 + kRoundtripNoise) * rep.rows[i - 1].w2_density;
    values += (i ? " " : "") + fmt("%.3e", r.w2_density);
  }
  ok = ok && !rep.rows.empty() && rep.rows.back().w2_density <= kRoundtripFinal;
  return {ok, "W2 by N: " + values};
}

std::string stability_csv(const ExperimentConfig& cfg) {
  std::ostringstream out;
  write_stability_csv(out, run_stability(cfg));
  return out.str();
}

Outcome determinism() {
  bool same = true;
  ExperimentConfig cfg = stability_config(FamilyKind::RandomCloud);
  cfg.params.cloud_count = 2;
  cfg.ladder = {0.1, 0.01};
  cfg.jobs = 1;
  const std::string a = stability_csv(cfg);
  cfg.jobs = 3;
  same = same && a == stability_csv(cfg);

  std::mt19937_64 rng(8);
  for (int dim : {1, 2}) {
    const DiscreteMeasure mu = random_measure(rng, 6, dim, 2.0);
    SolverConfig sc;
    sc.quadrature.resolution = 256;
    same = same && dump(report_to_json(solve(mu, sc))) == dump(report_to_json(solve(mu, sc)));
  }

  auto roundtrip_csv = [] {
    std::ostringstream out;
    write_roundtrip_csv(out, run_roundtrip(MomentMapKind::SoftplusCombo, 1.0, {25, 50}));
    return out.str();
  };
  same = same && roundtrip_csv() == roundtrip_csv();

  PointMatrix y(2, 1);
  y << -1.0, 1.0;
  const DiscreteMeasure pair(y, Vector::Constant(2, 0.5));
  auto sweep_csv = [&] {
    std::ostringstream out;
    write_sweep_csv(out, run_alpha_sweep(pair, {2.0, 1.0, 0.5}));
    return out.str();
  };
  same = same && sweep_csv() == sweep_csv();
  return {same, "stability CSV (1 and 3 jobs), report JSON (1D, 2D), round-trip and sweep CSV"};
}

}  // namespace

int main() {
  report(1, "single-Dirac closed form", single_dirac());
  report(2, "pushforward residual", pushforward());
  report(3, "barycenter identity", barycenter_identity());
  report(4, "dual gradient and concavity", dual_correctness());
  report(5, "translation identities", translation_identities_check());
  report(6, "maximum entropy bound", max_entropy());
  report(7, "stability inequalities", stability_chain());
  report(8, "second-moment a priori bound", second_moment_bound_check());
  report(9, "sufficiency round trip", roundtrip());
  report(10, "determinism", determinism());
  std::printf("%d of 10 criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
