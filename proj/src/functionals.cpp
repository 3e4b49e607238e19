#include "regmm/functionals.hpp"

#include <algorithm>
#include <cmath>
#include <iterator>
#include <limits>
#include <numbers>
#include <numeric>
#include <vector>

namespace regmm {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

struct WeightedPoint {
  double x;
  double w;
};

std::vector<WeightedPoint> sorted_line(const DiscreteMeasure& m) {
  std::vector<WeightedPoint> out(static_cast<std::size_t>(m.size()));
  for (Eigen::Index i = 0; i < m.size(); ++i) out[static_cast<std::size_t>(i)] = {m.points()(i, 0), m.weights()[i]};
  std::sort(out.begin(), out.end(), [](const WeightedPoint& a, const WeightedPoint& b) { return a.x < b.x; });
  return out;
}

// Monotone coupling of two weighted point sets on the line.
double w2sq_quantile(const DiscreteMeasure& mu, const DiscreteMeasure& nu) {
  const std::vector<WeightedPoint> a = sorted_line(mu);
  const std::vector<WeightedPoint> b = sorted_line(nu);
  std::size_t i = 0;
  std::size_t j = 0;
  double ra = a[0].w;
  double rb = b[0].w;
  double total = 0.0;
  while (i < a.size() && j < b.size()) {
    const double dx = a[i].x - b[j].x;
    if (ra <= rb) {
      total += ra * dx * dx;
      rb -= ra;
      if (++i < a.size()) ra = a[i].w;
      if (rb <= 0.0 && ++j < b.size()) rb = b[j].w;
    } else {
      total += rb * dx * dx;
      ra -= rb;
      if (++j < b.size()) rb = b[j].w;
    }
  }
  return total;
}

// Edges of the histogram CDF: cdf[k] is the mass left of bounds.lo + k h.
std::vector<double> histogram_cdf(const GridDensity& rho) {
  const auto n = static_cast<std::size_t>(rho.size());
  std::vector<double> cdf(n + 1, 0.0);
  for (std::size_t k = 0; k < n; ++k) cdf[k + 1] = cdf[k] + std::max(0.0, rho.values()[static_cast<Eigen::Index>(k)]);
  const double total = cdf.back();
  for (double& c : cdf) c /= total;
  return cdf;
}

// Inverse of the piecewise-linear CDF at level q.
double histogram_quantile(const GridDensity& rho, const std::vector<double>& cdf, double q) {
  const double lo = rho.bounds()[0].lo;
  const double h = rho.spacing(0);
  if (q <= 0.0) {
    const auto first = std::upper_bound(cdf.begin(), cdf.end(), 0.0) - cdf.begin();
    return lo + h * static_cast<double>(std::max<std::ptrdiff_t>(first - 1, 0));
  }
  if (q >= 1.0) {
    const auto last = std::lower_bound(cdf.begin(), cdf.end(), 1.0) - cdf.begin();
    return lo + h * static_cast<double>(last);
  }
  const auto k = static_cast<std::size_t>(std::upper_bound(cdf.begin(), cdf.end(), q) - cdf.begin());
  // cdf[k - 1] <= q < cdf[k]
  const double frac = (q - cdf[k - 1]) / (cdf[k] - cdf[k - 1]);
  return lo + h * (static_cast<double>(k - 1) + frac);
}

void require_1d_grid(const GridDensity& rho) {
  if (rho.dim() != 1) throw Error(ErrorCode::InvalidParams, "expected a 1D grid density");
}

DiscreteMeasure cloud_of(const GridDensity& rho, int max_points) {
  if (rho.dim() == 1) return to_discrete(rho, 0.0);
  return coarsen(rho, max_points);
}

}  // namespace

double entropy_grid(const GridDensity& rho) {
  double sum = 0.0;
  for (Eigen::Index k = 0; k < rho.size(); ++k) {
    const double v = rho.values()[k];
    if (v > 0.0) sum += v * std::log(v);
  }
  return sum * rho.cell_volume();
}

double gaussian_entropy(int d, double m2) {
  if (d < 1) throw Error(ErrorCode::InvalidParams, "dimension must be positive");
  if (!(m2 > 0.0)) throw Error(ErrorCode::NonPositiveMoment, "second moment must be positive");
  return -0.5 * d * std::log((2.0 / d) * std::numbers::pi * std::numbers::e * m2);
}

double entropy_lower_bound(int d, double m2) { return gaussian_entropy(d, m2); }

double w2_discrete(const DiscreteMeasure& mu, const DiscreteMeasure& nu) {
  if (mu.dim() != nu.dim()) throw Error(ErrorCode::InvalidParams, "measures differ in dimension");
  if (mu.dim() == 1) return std::sqrt(std::max(0.0, w2sq_quantile(mu, nu)));
  return w2_discrete_network(mu, nu);
}

double w2_discrete_network(const DiscreteMeasure& mu, const DiscreteMeasure& nu) {
  if (mu.dim() != nu.dim()) throw Error(ErrorCode::InvalidParams, "measures differ in dimension");
  const Eigen::Index n1 = mu.size();
  const Eigen::Index n2 = nu.size();
  if (n1 + n2 > kNetworkSupportLimit) {
    throw Error(ErrorCode::SizeLimitExceeded, "network W2 supports at most " + std::to_string(kNetworkSupportLimit) +
                                                  " points in total, got " + std::to_string(n1 + n2));
  }

  Eigen::MatrixXd cost(n1, n2);
  for (Eigen::Index i = 0; i < n1; ++i) {
    for (Eigen::Index j = 0; j < n2; ++j) cost(i, j) = (mu.points().row(i) - nu.points().row(j)).squaredNorm();
  }

  // Nodes: 0 source, 1..n1 supplies, n1+1..n1+n2 demands, n1+n2+1 sink.
  const Eigen::Index nodes = n1 + n2 + 2;
  const Eigen::Index sink = nodes - 1;
  auto supply = [&](Eigen::Index i) { return 1 + i; };
  auto demand = [&](Eigen::Index j) { return 1 + n1 + j; };

  Eigen::MatrixXd flow = Eigen::MatrixXd::Zero(n1, n2);
  Vector supply_left = mu.weights();
  Vector demand_left = nu.weights();
  constexpr double eps = 1e-15;
  Vector potential = Vector::Zero(nodes);
  Vector dist(nodes);
  std::vector<Eigen::Index> parent(static_cast<std::size_t>(nodes));
  std::vector<char> done(static_cast<std::size_t>(nodes));

  for (int round = 0; round < 100 * static_cast<int>(nodes * nodes) && supply_left.sum() > 1e-13; ++round) {
    dist.setConstant(kInf);
    std::fill(parent.begin(), parent.end(), -1);
    std::fill(done.begin(), done.end(), 0);
    dist[0] = 0.0;
    auto relax = [&](Eigen::Index from, Eigen::Index to, double c) {
      const double reduced = std::max(0.0, c + potential[from] - potential[to]);
      if (dist[from] + reduced < dist[to]) {
        dist[to] = dist[from] + reduced;
        parent[static_cast<std::size_t>(to)] = from;
      }
    };
    for (;;) {
      Eigen::Index u = -1;
      for (Eigen::Index k = 0; k < nodes; ++k) {
        if (!done[static_cast<std::size_t>(k)] && dist[k] < kInf && (u < 0 || dist[k] < dist[u])) u = k;
      }
      if (u < 0) break;
      done[static_cast<std::size_t>(u)] = 1;
      if (u == 0) {
        for (Eigen::Index i = 0; i < n1; ++i) {
          if (supply_left[i] > eps) relax(0, supply(i), 0.0);
        }
      } else if (u <= n1) {
        const Eigen::Index i = u - 1;
        for (Eigen::Index j = 0; j < n2; ++j) relax(u, demand(j), cost(i, j));
      } else if (u < sink) {
        const Eigen::Index j = u - 1 - n1;
        for (Eigen::Index i = 0; i < n1; ++i) {
          if (flow(i, j) > eps) relax(u, supply(i), -cost(i, j));
        }
        if (demand_left[j] > eps) relax(u, sink, 0.0);
      }
    }
    if (dist[sink] == kInf) break;
    for (Eigen::Index k = 0; k < nodes; ++k) potential[k] += std::min(dist[k], dist[sink]);

    // Bottleneck along the path, then push.
    double amount = kInf;
    for (Eigen::Index v = sink; v != 0;) {
      const Eigen::Index u = parent[static_cast<std::size_t>(v)];
      if (u == 0) {
        amount = std::min(amount, supply_left[v - 1]);
      } else if (v == sink) {
        amount = std::min(amount, demand_left[u - 1 - n1]);
      } else if (u > n1) {
        amount = std::min(amount, flow(v - 1, u - 1 - n1));
      }
      v = u;
    }
    for (Eigen::Index v = sink; v != 0;) {
      const Eigen::Index u = parent[static_cast<std::size_t>(v)];
      if (u == 0) {
        supply_left[v - 1] -= amount;
      } else if (v == sink) {
        demand_left[u - 1 - n1] -= amount;
      } else if (u <= n1) {
        flow(u - 1, v - 1 - n1) += amount;
      } else {
        flow(v - 1, u - 1 - n1) -= amount;
      }
      v = u;
    }
  }
  return std::sqrt(std::max(0.0, (flow.array() * cost.array()).sum()));
}

double w2_grid_1d(const GridDensity& rho, const GridDensity& sigma, int mesh) {
  require_1d_grid(rho);
  require_1d_grid(sigma);
  if (mesh < 1) throw Error(ErrorCode::InvalidParams, "quantile mesh must be positive");
  const std::vector<double> a = histogram_cdf(rho);
  const std::vector<double> b = histogram_cdf(sigma);
  double sum = 0.0;
  for (int i = 0; i < mesh; ++i) {
    const double q = (i + 0.5) / mesh;
    const double d = histogram_quantile(rho, a, q) - histogram_quantile(sigma, b, q);
    sum += d * d;
  }
  return std::sqrt(sum / mesh);
}

double w2_grid_1d_exact(const GridDensity& rho, const GridDensity& sigma) {
  require_1d_grid(rho);
  require_1d_grid(sigma);
  const std::vector<double> a = histogram_cdf(rho);
  const std::vector<double> b = histogram_cdf(sigma);
  std::vector<double> levels;
  levels.reserve(a.size() + b.size());
  std::merge(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(levels));
  levels.erase(std::unique(levels.begin(), levels.end()), levels.end());
  // The quantile difference is linear between merged levels.
  double sum = 0.0;
  double d0 = histogram_quantile(rho, a, levels.front()) - histogram_quantile(sigma, b, levels.front());
  for (std::size_t i = 1; i < levels.size(); ++i) {
    const double d1 = histogram_quantile(rho, a, levels[i]) - histogram_quantile(sigma, b, levels[i]);
    sum += (levels[i] - levels[i - 1]) * (d0 * d0 + d0 * d1 + d1 * d1) / 3.0;
    d0 = d1;
  }
  return std::sqrt(std::max(0.0, sum));
}

double grid_quantile_1d(const GridDensity& rho, double q) {
  require_1d_grid(rho);
  return histogram_quantile(rho, histogram_cdf(rho), q);
}

double w2_grid_discrete(const GridDensity& rho, const DiscreteMeasure& mu, int max_points) {
  if (rho.dim() != mu.dim()) throw Error(ErrorCode::InvalidParams, "density and measure differ in dimension");
  return w2_discrete(cloud_of(rho, max_points), mu);
}

double max_correlation(const DiscreteMeasure& rho, const DiscreteMeasure& mu) {
  const double w2 = w2_discrete(rho, mu);
  return 0.5 * (moments(rho).m2 + moments(mu).m2 - w2 * w2);
}

double max_correlation(const GridDensity& rho, const DiscreteMeasure& mu) {
  if (rho.dim() != mu.dim()) throw Error(ErrorCode::InvalidParams, "density and measure differ in dimension");
  return max_correlation(cloud_of(rho, 200), mu);
}

double max_correlation(const SolveReport& report) {
  const PointMatrix& y = report.potential.support();
  return (y.array() * report.cell_first_moment.array()).sum();
}

FunctionalBreakdown functional_F(const GridDensity& rho, const DiscreteMeasure& mu, double alpha) {
  if (rho.dim() != mu.dim()) throw Error(ErrorCode::InvalidParams, "density and measure differ in dimension");
  const DiscreteMeasure cloud = cloud_of(rho, 200);
  FunctionalBreakdown out;
  out.entropy = entropy_grid(rho);
  out.m2 = moments(rho).m2;
  const double w2 = w2_discrete(cloud, mu);
  out.w2sq = w2 * w2;
  out.maxcorr = 0.5 * (moments(cloud).m2 + moments(mu).m2 - out.w2sq);
  out.total = out.entropy + out.maxcorr + 0.5 * alpha * out.m2;
  return out;
}

FunctionalBreakdown functional_F(const SolveReport& report) {
  FunctionalBreakdown out;
  const double corr = max_correlation(report);
  // log rho = -phi* - (alpha/2)|x|^2 - log Z, and phi* = <x, y_j> - phi_j on cell j.
  const double mean_conjugate = corr - report.potential.phi().dot(report.cell_mass);
  out.m2 = report.density_moments.m2;
  out.entropy = -mean_conjugate - 0.5 * report.alpha * out.m2 - report.log_z;
  out.maxcorr = corr;
  out.w2sq = std::max(0.0, out.m2 + moments(report.target).m2 - 2.0 * corr);
  out.total = out.entropy + out.maxcorr + 0.5 * report.alpha * out.m2;
  return out;
}

TranslationCheck translation_identities(const GridDensity& rho, const DiscreteMeasure& mu, const Vector& v,
                                        double alpha) {
  const GridDensity moved_rho = translate(rho, v);
  const DiscreteMeasure moved_mu = translate(mu, v);
  const double base = functional_F(rho, mu, alpha).total;
  const Vector b_rho = moments(rho).barycenter;
  const Vector b_mu = moments(mu).barycenter;
  TranslationCheck out;
  out.lhs1 = functional_F(moved_rho, mu, alpha).total;
  out.rhs1 = base + v.dot(b_mu) + 0.5 * alpha * v.squaredNorm() + alpha * v.dot(b_rho);
  out.lhs2 = functional_F(rho, moved_mu, alpha).total;
  out.rhs2 = base + v.dot(b_rho);
  return out;
}

double second_moment_cbar(int d, double alpha, double m, double b) {
  if (d < 1 || !(alpha > 0.0) || !(m >= 0.0) || !(b >= 0.0)) {
    throw Error(ErrorCode::InvalidParams, "second-moment bound needs alpha > 0 and m, b >= 0");
  }
  return -(d / alpha) * std::log(static_cast<double>(d)) + (2.0 / alpha + 1.0) * (m + d) +
         (2.0 / (alpha * alpha)) * b * b;
}

double second_moment_threshold(int d, double alpha) {
  if (d < 1 || !(alpha > 0.0)) throw Error(ErrorCode::InvalidParams, "threshold needs positive arguments");
  const double c = alpha / (2.0 * d);
  auto f = [c](double m) { return std::log(m) - c * m; };
  // f peaks at 1/c; without a positive peak the inequality holds everywhere.
  const double peak = std::max(1.0, 1.0 / c);
  if (f(peak) <= 0.0) return 1.0;
  double lo = peak;
  double hi = 1e16;
  if (f(hi) > 0.0) throw Error(ErrorCode::InvalidParams, "threshold exceeds the search range");
  for (int k = 0; k < 200 && hi - lo > 1e-12 * hi; ++k) {
    const double mid = 0.5 * (lo + hi);
    (f(mid) > 0.0 ? lo : hi) = mid;
  }
  return hi;
}

double second_moment_bound(int d, double alpha, double m, double b) {
  const double cbar = second_moment_cbar(d, alpha, m, b);
  return std::max(second_moment_threshold(d, alpha), cbar);
}

GridDensity displacement_interpolation_1d(const GridDensity& rho0, const GridDensity& rho1, double t,
                                          Interval bounds, int resolution) {
  require_1d_grid(rho0);
  require_1d_grid(rho1);
  if (!(t >= 0.0 && t <= 1.0)) throw Error(ErrorCode::InvalidParams, "interpolation time must lie in [0, 1]");
  if (resolution < 1) throw Error(ErrorCode::InvalidParams, "resolution must be positive");
  const std::vector<double> c0 = histogram_cdf(rho0);
  const std::vector<double> c1 = histogram_cdf(rho1);

  // Both quantile functions are linear between consecutive CDF levels, so on
  // the merged levels the interpolated quantile function is exactly piecewise linear.
  std::vector<double> q_levels;
  q_levels.reserve(c0.size() + c1.size());
  std::merge(c0.begin(), c0.end(), c1.begin(), c1.end(), std::back_inserter(q_levels));
  q_levels.erase(std::unique(q_levels.begin(), q_levels.end()), q_levels.end());
  std::vector<double> x_levels(q_levels.size());
  for (std::size_t i = 0; i < q_levels.size(); ++i) {
    x_levels[i] = (1.0 - t) * histogram_quantile(rho0, c0, q_levels[i]) + t * histogram_quantile(rho1, c1, q_levels[i]);
  }
  auto cdf_at = [&](double x) {
    if (x <= x_levels.front()) return 0.0;
    if (x >= x_levels.back()) return 1.0;
    const auto k = static_cast<std::size_t>(std::upper_bound(x_levels.begin(), x_levels.end(), x) - x_levels.begin());
    const double span = x_levels[k] - x_levels[k - 1];
    const double frac = span > 0.0 ? (x - x_levels[k - 1]) / span : 1.0;
    return q_levels[k - 1] + frac * (q_levels[k] - q_levels[k - 1]);
  };

  const double h = bounds.length() / resolution;
  Vector values(resolution);
  double prev = cdf_at(bounds.lo);
  for (int k = 0; k < resolution; ++k) {
    const double next = cdf_at(bounds.lo + (k + 1) * h);
    values[k] = (next - prev) / h;
    prev = next;
  }
  const double total = values.sum() * h;
  if (!(total > 0.0)) throw Error(ErrorCode::DomainOverflow, "interpolated density lies outside the bounds");
  values /= total;
  return GridDensity({bounds}, {resolution}, std::move(values));
}

DiscreteMeasure coarsen(const GridDensity& rho, int max_points) {
  if (max_points < 1) throw Error(ErrorCode::InvalidParams, "max_points must be positive");
  const int d = rho.dim();
  const double dv = rho.cell_volume();
  for (int factor = 1;; ++factor) {
    std::vector<int> blocks(static_cast<std::size_t>(d));
    for (int k = 0; k < d; ++k) blocks[static_cast<std::size_t>(k)] = (rho.resolution()[k] + factor - 1) / factor;
    const int count = std::accumulate(blocks.begin(), blocks.end(), 1, std::multiplies<>());
    Vector mass = Vector::Zero(count);
    PointMatrix first = PointMatrix::Zero(count, d);
    for (Eigen::Index flat = 0; flat < rho.size(); ++flat) {
      const double m = rho.values()[flat] * dv;
      if (!(m > 0.0)) continue;
      Eigen::Index rest = flat;
      Eigen::Index block = 0;
      Eigen::Index stride = 1;
      for (int k = 0; k < d; ++k) {
        const int i = static_cast<int>(rest % rho.resolution()[k]);
        rest /= rho.resolution()[k];
        block += (i / factor) * stride;
        stride *= blocks[static_cast<std::size_t>(k)];
      }
      mass[block] += m;
      first.row(block) += m * rho.node(flat).transpose();
    }
    const double total = mass.sum();
    std::vector<Eigen::Index> kept;
    for (Eigen::Index b = 0; b < count; ++b) {
      if (mass[b] > 1e-14 * total) kept.push_back(b);
    }
    if (static_cast<int>(kept.size()) > max_points) continue;
    PointMatrix p(static_cast<Eigen::Index>(kept.size()), d);
    Vector w(static_cast<Eigen::Index>(kept.size()));
    for (std::size_t i = 0; i < kept.size(); ++i) {
      p.row(static_cast<Eigen::Index>(i)) = first.row(kept[i]) / mass[kept[i]];
      w[static_cast<Eigen::Index>(i)] = mass[kept[i]];
    }
    w /= w.sum();
    return DiscreteMeasure(std::move(p), std::move(w));
  }
}

}  // namespace regmm
