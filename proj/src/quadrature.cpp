#include "regmm/quadrature.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

namespace regmm {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kLogSqrt2Pi = 0.91893853320467274178;  // log(sqrt(2 pi))

// log Q(z), Q the standard normal upper tail.
double log_upper_tail(double z) {
  if (z == kInf) return -kInf;
  if (z < 35.0) return std::log(0.5 * std::erfc(z / std::numbers::sqrt2));
  // Asymptotic Mills ratio; truncation error below 1e-13 for z >= 35.
  const double iz2 = 1.0 / (z * z);
  const double series = 1.0 - iz2 * (1.0 - 3.0 * iz2 * (1.0 - 5.0 * iz2 * (1.0 - 7.0 * iz2 * (1.0 - 9.0 * iz2))));
  return -0.5 * z * z - std::log(z) - kLogSqrt2Pi + std::log(series);
}

double log_normal_pdf(double z) {
  if (std::isinf(z)) return -kInf;
  return -0.5 * z * z - kLogSqrt2Pi;
}

// log(exp(a) - exp(b)) for a >= b.
double log_diff_exp(double a, double b) {
  if (b == -kInf) return a;
  return a + std::log(-std::expm1(b - a));
}

double log_sum_exp(const Vector& v) {
  const double m = v.maxCoeff();
  if (m == -kInf) return -kInf;
  return m + std::log((v.array() - m).exp().sum());
}

}  // namespace

double truncation_radius(const Potential& p, double alpha, double tail_tolerance) {
  if (!(alpha > 0.0) || !(tail_tolerance > 0.0 && tail_tolerance < 1.0)) {
    throw Error(ErrorCode::InvalidParams, "alpha must be positive and tail tolerance in (0, 1)");
  }
  const double ymax = p.support().rowwise().norm().maxCoeff();
  return ymax + std::sqrt((2.0 / alpha) * std::log(1.0 / tail_tolerance)) + ymax / alpha;
}

double effective_radius(const Potential& p, const QuadratureSpec& spec) {
  return spec.radius > 0.0 ? spec.radius : truncation_radius(p, spec.alpha, spec.tail_tolerance);
}

double log_normal_cdf_difference(double lo, double hi) {
  if (!(lo < hi)) throw Error(ErrorCode::InvalidInterval, "normal CDF difference needs lo < hi");
  if (lo >= 0.0) return log_diff_exp(log_upper_tail(lo), log_upper_tail(hi));
  if (hi <= 0.0) return log_diff_exp(log_upper_tail(-hi), log_upper_tail(-lo));
  const double erf_hi = hi == kInf ? 1.0 : std::erf(hi / std::numbers::sqrt2);
  const double erf_lo = lo == -kInf ? -1.0 : std::erf(lo / std::numbers::sqrt2);
  return std::log(0.5 * (erf_hi - erf_lo));
}

double log_gauss_affine_integral(double a, double b, double alpha, double l, double r) {
  if (!(alpha > 0.0)) throw Error(ErrorCode::InvalidParams, "alpha must be positive");
  if (!(l < r)) throw Error(ErrorCode::InvalidInterval, "integration interval needs l < r");
  const double root = std::sqrt(alpha);
  const double shift = a / alpha;
  return b + a * a / (2.0 * alpha) + 0.5 * std::log(2.0 * std::numbers::pi / alpha) +
         log_normal_cdf_difference(root * (l + shift), root * (r + shift));
}

double gauss_affine_integral(double a, double b, double alpha, double l, double r) {
  return std::exp(log_gauss_affine_integral(a, b, alpha, l, r));
}

GaussianSegment gaussian_segment(double a, double b, double alpha, double l, double r) {
  GaussianSegment seg;
  seg.log_mass = log_gauss_affine_integral(a, b, alpha, l, r);

  const double s = 1.0 / std::sqrt(alpha);
  const double c = -a / alpha;
  const double zl = (l - c) / s;
  const double zr = (r - c) / s;
  const double log_p = log_normal_cdf_difference(zl, zr);
  const double ratio_l = std::exp(log_normal_pdf(zl) - log_p);
  const double ratio_r = std::exp(log_normal_pdf(zr) - log_p);
  const double ez = ratio_l - ratio_r;
  const double zl_term = std::isinf(zl) ? 0.0 : zl * ratio_l;
  const double zr_term = std::isinf(zr) ? 0.0 : zr * ratio_r;
  const double ez2 = 1.0 + zl_term - zr_term;
  seg.mean = c + s * ez;
  seg.second = c * c + 2.0 * c * s * ez + s * s * ez2;

  if (r <= 0.0) {
    seg.abs_first = -seg.mean;
  } else if (l >= 0.0) {
    seg.abs_first = seg.mean;
  } else {
    const GaussianSegment left = gaussian_segment(a, b, alpha, l, 0.0);
    const GaussianSegment right = gaussian_segment(a, b, alpha, 0.0, r);
    const double wl = std::exp(left.log_mass - seg.log_mass);
    const double wr = std::exp(right.log_mass - seg.log_mass);
    seg.abs_first = -wl * left.mean + wr * right.mean;
  }
  return seg;
}

MassProfile mass_profile_1d(const Potential& p, double alpha) {
  if (p.dim() != 1) throw Error(ErrorCode::InvalidParams, "mass_profile_1d requires a 1D potential");
  if (!(alpha > 0.0)) throw Error(ErrorCode::InvalidParams, "alpha must be positive");
  const CellDecomposition1D env = envelope_1d(p);

  const Eigen::Index n = p.size();
  Vector log_mass = Vector::Constant(n, -kInf);
  std::vector<GaussianSegment> segs(env.active.size());
  for (std::size_t k = 0; k < env.active.size(); ++k) {
    const Eigen::Index j = env.active[k];
    const double l = k == 0 ? -kInf : env.breakpoints[k - 1];
    const double r = k + 1 == env.active.size() ? kInf : env.breakpoints[k];
    if (!(l < r)) continue;
    segs[k] = gaussian_segment(p.support()(j, 0), p.phi()[j], alpha, l, r);
    log_mass[j] = segs[k].log_mass;
  }

  MassProfile out;
  out.log_z = log_sum_exp(log_mass);
  out.z = std::exp(out.log_z);
  out.cell_mass = log_mass.array().exp();
  out.cell_fraction = (log_mass.array() - out.log_z).exp();

  out.density_moments.barycenter = Vector::Zero(1);
  out.cell_first_moment = PointMatrix::Zero(n, 1);
  for (std::size_t k = 0; k < env.active.size(); ++k) {
    const double w = out.cell_fraction[env.active[k]];
    if (w == 0.0) continue;
    out.cell_first_moment(env.active[k], 0) += w * segs[k].mean;
    out.density_moments.barycenter[0] += w * segs[k].mean;
    out.density_moments.m1 += w * segs[k].abs_first;
    out.density_moments.m2 += w * segs[k].second;
  }
  return out;
}

namespace {

struct RowSegment {
  Eigen::Index cell;
  double log_mass;
  double x2;
  double l;
  double r;
};

// Exact integrals along the row at height x2 of every cell crossing it.
class RowIntegrator {
 public:
  RowIntegrator(const Potential& p, double alpha) : p_(p), alpha_(alpha), slopes_(static_cast<std::size_t>(p.size())) {
    for (Eigen::Index j = 0; j < p.size(); ++j) slopes_[static_cast<std::size_t>(j)] = p.support()(j, 0);
  }

  const std::vector<double>& slopes() const { return slopes_; }

  CellDecomposition1D envelope(double x2, std::vector<double>& intercepts) const {
    intercepts.resize(slopes_.size());
    for (Eigen::Index j = 0; j < p_.size(); ++j) {
      intercepts[static_cast<std::size_t>(j)] = p_.support()(j, 1) * x2 - p_.phi()[j];
    }
    return upper_envelope(slopes_, intercepts);
  }

  // Appends the segments of the row, with `log_weight` added to each log mass.
  void segments(double x2, double log_weight, std::vector<RowSegment>& out) const {
    std::vector<double> intercepts;
    const CellDecomposition1D env = envelope(x2, intercepts);
    const double row_log = log_weight - 0.5 * alpha_ * x2 * x2;
    for (std::size_t k = 0; k < env.active.size(); ++k) {
      const Eigen::Index j = env.active[k];
      const double l = k == 0 ? -kInf : env.breakpoints[k - 1];
      const double r = k + 1 == env.active.size() ? kInf : env.breakpoints[k];
      if (!(l < r)) continue;
      const double b = -intercepts[static_cast<std::size_t>(j)];
      const double log_seg = log_gauss_affine_integral(slopes_[static_cast<std::size_t>(j)], b, alpha_, l, r) + row_log;
      if (log_seg == -kInf) continue;
      out.push_back({j, log_seg, x2, l, r});
    }
  }

  // Per-cell row masses scaled by exp(-log_scale).
  Vector masses(double x2, double log_scale) const {
    std::vector<RowSegment> segs;
    segments(x2, -log_scale, segs);
    Vector out = Vector::Zero(p_.size());
    for (const RowSegment& s : segs) out[s.cell] += std::exp(s.log_mass);
    return out;
  }

  // Active cells along the row; changes exactly where the row crosses a vertex.
  std::vector<Eigen::Index> signature(double x2) const {
    std::vector<double> intercepts;
    return envelope(x2, intercepts).active;
  }

 private:
  const Potential& p_;
  double alpha_;
  std::vector<double> slopes_;
};

struct RowNode {
  double x2;
  double log_weight;
};

constexpr double kGaussNode[4] = {-0.86113631159405257522, -0.33998104358485626480, 0.33998104358485626480,
                                  0.86113631159405257522};
constexpr double kGaussWeight[4] = {0.34785484513745385737, 0.65214515486254614263, 0.65214515486254614263,
                                    0.34785484513745385737};

Vector gauss4(const RowIntegrator& rows, double a, double b, double log_scale) {
  const double mid = 0.5 * (a + b);
  const double half = 0.5 * (b - a);
  Vector sum = kGaussWeight[0] * half * rows.masses(mid + half * kGaussNode[0], log_scale);
  for (int k = 1; k < 4; ++k) sum += kGaussWeight[k] * half * rows.masses(mid + half * kGaussNode[k], log_scale);
  return sum;
}

void push_gauss4(double a, double b, std::vector<RowNode>& nodes) {
  const double mid = 0.5 * (a + b);
  const double half = 0.5 * (b - a);
  for (int k = 0; k < 4; ++k) nodes.push_back({mid + half * kGaussNode[k], std::log(half * kGaussWeight[k])});
}

// Bisects [a, b] until the four-point rule agrees with its two halves.
void refine(const RowIntegrator& rows, double a, double b, const Vector& whole, double log_scale, double tol, int depth,
            std::vector<RowNode>& nodes) {
  const double m = 0.5 * (a + b);
  const Vector left = gauss4(rows, a, m, log_scale);
  const Vector right = gauss4(rows, m, b, log_scale);
  if (depth == 0 || (left + right - whole).cwiseAbs().maxCoeff() <= tol) {
    push_gauss4(a, m, nodes);
    push_gauss4(m, b, nodes);
    return;
  }
  refine(rows, a, m, left, log_scale, 0.5 * tol, depth - 1, nodes);
  refine(rows, m, b, right, log_scale, 0.5 * tol, depth - 1, nodes);
}

// Quadrature nodes in x2 on `panels` equal panels of [-R, R]. Panels are split
// at vertex crossings so each piece is smooth, then refined adaptively.
std::vector<RowNode> row_nodes(const RowIntegrator& rows, double radius, int panels) {
  const double h = 2.0 * radius / panels;
  double log_scale = -kInf;
  for (int i = 0; i < panels; ++i) {
    std::vector<RowSegment> segs;
    rows.segments(-radius + (i + 0.5) * h, 0.0, segs);
    for (const RowSegment& s : segs) log_scale = std::max(log_scale, s.log_mass);
  }
  if (log_scale == -kInf) throw Error(ErrorCode::InvalidParams, "density integrates to zero on the grid");

  std::vector<RowNode> nodes;
  auto add_piece = [&](double a, double b) {
    if (!(b > a)) return;
    const double tol = 1e-12 * (b - a) / (2.0 * radius);
    refine(rows, a, b, gauss4(rows, a, b, log_scale), log_scale, tol, 30, nodes);
  };

  const double resolution = 1e-13 * (1.0 + radius);
  std::vector<Eigen::Index> left_sig = rows.signature(-radius);
  for (int i = 0; i < panels; ++i) {
    double a = -radius + i * h;
    const double b = i + 1 == panels ? radius : a + h;
    const std::vector<Eigen::Index> right_sig = rows.signature(b);
    // Peel off change points from the left until the remainder is uniform.
    while (left_sig != right_sig) {
      double lo = a;
      double hi = b;
      while (hi - lo > resolution) {
        const double mid = 0.5 * (lo + hi);
        if (rows.signature(mid) == left_sig) {
          lo = mid;
        } else {
          hi = mid;
        }
      }
      add_piece(a, hi);
      a = hi;
      // A change confined to a single point leaves the signature as it was.
      left_sig = rows.signature(std::min(b, hi + resolution));
    }
    add_piece(a, b);
    left_sig = right_sig;
  }
  return nodes;
}

MassProfile integrate_rows(const Potential& p, double alpha, double radius, int rows) {
  const Eigen::Index n = p.size();
  const RowIntegrator integrator(p, alpha);
  const std::vector<double>& slopes = integrator.slopes();
  const std::vector<RowNode> nodes = row_nodes(integrator, radius, std::max(1, rows / 4));

  std::vector<RowSegment> segs;
  segs.reserve(nodes.size() * 4);
  for (const RowNode& node : nodes) integrator.segments(node.x2, node.log_weight, segs);
  double max_log = -kInf;
  for (const RowSegment& s : segs) max_log = std::max(max_log, s.log_mass);
  if (max_log == -kInf) throw Error(ErrorCode::InvalidParams, "density integrates to zero on the grid");

  Vector acc = Vector::Zero(n);
  double total = 0.0;
  PointMatrix first = PointMatrix::Zero(n, 2);
  double m2 = 0.0;
  for (const RowSegment& s : segs) {
    const double w = std::exp(s.log_mass - max_log);
    acc[s.cell] += w;
    total += w;
    if (w < 1e-300) continue;
    const GaussianSegment g = gaussian_segment(slopes[static_cast<std::size_t>(s.cell)], 0.0, alpha, s.l, s.r);
    first(s.cell, 0) += w * g.mean;
    first(s.cell, 1) += w * s.x2;
    m2 += w * (g.second + s.x2 * s.x2);
  }

  MassProfile out;
  out.log_z = max_log + std::log(total);
  out.z = std::exp(out.log_z);
  out.cell_fraction = acc / total;
  out.cell_mass = Vector(n);
  for (Eigen::Index j = 0; j < n; ++j) {
    out.cell_mass[j] = acc[j] > 0.0 ? std::exp(max_log + std::log(acc[j])) : 0.0;
  }
  out.cell_first_moment = first / total;
  out.density_moments.barycenter = out.cell_first_moment.colwise().sum().transpose();
  out.density_moments.m2 = m2 / total;
  return out;
}

}  // namespace

MassProfile mass_profile_2d(const Potential& p, const QuadratureSpec& spec) {
  if (p.dim() != 2) throw Error(ErrorCode::InvalidParams, "mass_profile_2d requires a 2D potential");
  if (!(spec.alpha > 0.0)) throw Error(ErrorCode::InvalidParams, "alpha must be positive");
  if (spec.resolution < 64) throw Error(ErrorCode::InvalidParams, "resolution must be at least 64 per axis");
  const double radius = effective_radius(p, spec);

  MassProfile out = integrate_rows(p, spec.alpha, radius, spec.resolution);

  if (spec.absolute_moment) {
    const int res = spec.resolution;
    const double h = 2.0 * radius / res;
    double num = 0.0;
    double den = 0.0;
    Vector x(2);
    // Scaled by Z so the exponentials stay in range.
    const double log_scale = out.log_z - 2.0 * std::log(h);
    for (int i1 = 0; i1 < res; ++i1) {
      x[1] = -radius + (i1 + 0.5) * h;
      for (int i0 = 0; i0 < res; ++i0) {
        x[0] = -radius + (i0 + 0.5) * h;
        const double g = std::exp(-conjugate_value(p, x) - 0.5 * spec.alpha * x.squaredNorm() - log_scale);
        num += g * x.norm();
        den += g;
      }
    }
    out.density_moments.m1 = den > 0.0 ? num / den : 0.0;
  } else {
    out.density_moments.m1 = std::numeric_limits<double>::quiet_NaN();
  }

  if (spec.warn_tolerance > 0.0) {
    const MassProfile coarse = integrate_rows(p, spec.alpha, radius, spec.resolution / 2);
    // The coarse pass error dominates the difference, so this bounds the fine error.
    const double estimate = (out.cell_fraction - coarse.cell_fraction).cwiseAbs().maxCoeff();
    if (estimate > spec.warn_tolerance) {
      out.warnings.push_back("resolution-too-low: estimated cell-mass error " + std::to_string(estimate) +
                             " exceeds " + std::to_string(spec.warn_tolerance));
    }
  }
  return out;
}

MassProfile mass_profile(const Potential& p, const QuadratureSpec& spec) {
  return p.dim() == 1 ? mass_profile_1d(p, spec.alpha) : mass_profile_2d(p, spec);
}

}  // namespace regmm
