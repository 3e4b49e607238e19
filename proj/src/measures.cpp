#include "regmm/measures.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace regmm {

namespace {

void require(bool ok, ErrorCode code, const std::string& what) {
  if (!ok) throw Error(code, what);
}

}  // namespace

DiscreteMeasure::DiscreteMeasure(PointMatrix points, Vector weights, double sum_tolerance) {
  const Eigen::Index n = points.rows();
  const Eigen::Index d = points.cols();
  require(d == 1 || d == 2, ErrorCode::InvalidMeasure, "dimension must be 1 or 2");
  require(n >= 1, ErrorCode::InvalidMeasure, "measure needs at least one point");
  require(weights.size() == n, ErrorCode::InvalidMeasure, "points and weights differ in length");
  require(points.allFinite(), ErrorCode::InvalidMeasure, "non-finite coordinate");
  for (Eigen::Index i = 0; i < n; ++i) {
    require(std::isfinite(weights[i]) && weights[i] > 0.0, ErrorCode::InvalidMeasure,
            "weight " + std::to_string(i) + " is not strictly positive");
  }
  const double total = weights.sum();
  require(std::abs(total - 1.0) <= sum_tolerance, ErrorCode::InvalidMeasure,
          "weights sum to " + std::to_string(total));

  // Group identical points; the merged point keeps the position of its first occurrence.
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  auto row_less = [&](Eigen::Index a, Eigen::Index b) {
    for (Eigen::Index k = 0; k < d; ++k) {
      if (points(a, k) != points(b, k)) return points(a, k) < points(b, k);
    }
    return a < b;
  };
  std::sort(order.begin(), order.end(), row_less);

  std::vector<Eigen::Index> representative(static_cast<std::size_t>(n));
  for (std::size_t k = 0; k < order.size(); ++k) {
    const Eigen::Index i = order[k];
    if (k > 0 && points.row(i) == points.row(order[k - 1])) {
      representative[static_cast<std::size_t>(i)] = representative[static_cast<std::size_t>(order[k - 1])];
    } else {
      representative[static_cast<std::size_t>(i)] = i;
    }
  }

  std::vector<Eigen::Index> slot(static_cast<std::size_t>(n), -1);
  Eigen::Index unique = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (representative[static_cast<std::size_t>(i)] == i) slot[static_cast<std::size_t>(i)] = unique++;
  }
  points_.resize(unique, d);
  weights_ = Vector::Zero(unique);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Eigen::Index s = slot[static_cast<std::size_t>(representative[static_cast<std::size_t>(i)])];
    if (representative[static_cast<std::size_t>(i)] == i) points_.row(s) = points.row(i);
    weights_[s] += weights[i];
  }
  weights_ /= total;
}

DiscreteMeasure DiscreteMeasure::dirac(const Vector& at) {
  PointMatrix p(1, at.size());
  p.row(0) = at.transpose();
  return DiscreteMeasure(std::move(p), Vector::Ones(1));
}

GridDensity::GridDensity(std::vector<Interval> bounds, std::vector<int> resolution, Vector values,
                         double normalization_tolerance)
    : bounds_(std::move(bounds)), resolution_(std::move(resolution)), values_(std::move(values)) {
  require(bounds_.size() == 1 || bounds_.size() == 2, ErrorCode::InvalidParams, "grid dimension must be 1 or 2");
  require(resolution_.size() == bounds_.size(), ErrorCode::InvalidParams, "resolution/bounds length mismatch");
  Eigen::Index expected = 1;
  for (std::size_t k = 0; k < bounds_.size(); ++k) {
    require(std::isfinite(bounds_[k].lo) && std::isfinite(bounds_[k].hi) && bounds_[k].lo < bounds_[k].hi,
            ErrorCode::InvalidParams, "grid bounds must be finite with lo < hi");
    require(resolution_[k] >= 1, ErrorCode::InvalidParams, "grid resolution must be positive");
    expected *= resolution_[k];
  }
  require(values_.size() == expected, ErrorCode::InvalidParams, "grid value count mismatch");
  require(values_.allFinite() && (values_.array() >= 0.0).all(), ErrorCode::InvalidMeasure,
          "grid values must be finite and nonnegative");
  const double mass = total_mass();
  require(std::abs(mass - 1.0) <= normalization_tolerance, ErrorCode::InvalidMeasure,
          "grid density has mass " + std::to_string(mass));
}

GridDensity GridDensity::tabulate(std::vector<Interval> bounds, std::vector<int> resolution,
                                  const std::function<double(const Vector&)>& f, bool normalize) {
  Eigen::Index count = 1;
  for (int r : resolution) count *= r;
  GridDensity shape(bounds, resolution, Vector::Constant(count, 0.0), std::numeric_limits<double>::infinity());
  Vector values(count);
  for (Eigen::Index k = 0; k < count; ++k) values[k] = f(shape.node(k));
  if (normalize) {
    const double mass = values.sum() * shape.cell_volume();
    require(mass > 0.0 && std::isfinite(mass), ErrorCode::InvalidMeasure, "cannot normalize zero density");
    values /= mass;
  }
  return GridDensity(std::move(bounds), std::move(resolution), std::move(values));
}

double GridDensity::cell_volume() const {
  double v = 1.0;
  for (int k = 0; k < dim(); ++k) v *= spacing(k);
  return v;
}

Vector GridDensity::node(Eigen::Index flat) const {
  Vector x(dim());
  x[0] = coordinate(0, static_cast<int>(flat % resolution_[0]));
  if (dim() == 2) x[1] = coordinate(1, static_cast<int>(flat / resolution_[0]));
  return x;
}

MomentSummary moments(const DiscreteMeasure& m) {
  MomentSummary s;
  s.barycenter = m.points().transpose() * m.weights();
  const Vector norms = m.points().rowwise().norm();
  s.m1 = m.weights().dot(norms);
  s.m2 = m.weights().dot(norms.cwiseAbs2());
  return s;
}

MomentSummary moments(const GridDensity& m) {
  MomentSummary s;
  s.barycenter = Vector::Zero(m.dim());
  const double dv = m.cell_volume();
  for (Eigen::Index k = 0; k < m.size(); ++k) {
    const double w = m.values()[k] * dv;
    if (w == 0.0) continue;
    const Vector x = m.node(k);
    s.barycenter += w * x;
    const double r2 = x.squaredNorm();
    s.m1 += w * std::sqrt(r2);
    s.m2 += w * r2;
  }
  return s;
}

DiscreteMeasure translate(const DiscreteMeasure& m, const Vector& v) {
  require(v.size() == m.dim() && v.allFinite(), ErrorCode::InvalidParams, "translation vector mismatch");
  PointMatrix p = m.points();
  p.rowwise() += v.transpose();
  return DiscreteMeasure(std::move(p), m.weights());
}

GridDensity translate(const GridDensity& m, const Vector& v, GridShift mode, double tail_tolerance) {
  require(v.size() == m.dim() && v.allFinite(), ErrorCode::InvalidParams, "translation vector mismatch");
  if (mode == GridShift::MoveBounds) {
    std::vector<Interval> b = m.bounds();
    for (int k = 0; k < m.dim(); ++k) {
      b[k].lo += v[k];
      b[k].hi += v[k];
    }
    return GridDensity(std::move(b), m.resolution(), m.values(), std::numeric_limits<double>::infinity());
  }

  const double dv = m.cell_volume();
  double lost = 0.0;
  for (Eigen::Index k = 0; k < m.size(); ++k) {
    const Vector x = m.node(k) + v;
    for (int a = 0; a < m.dim(); ++a) {
      if (x[a] < m.bounds()[a].lo || x[a] > m.bounds()[a].hi) {
        lost += m.values()[k] * dv;
        break;
      }
    }
  }
  if (lost > tail_tolerance) {
    throw Error(ErrorCode::DomainOverflow, "translated density leaves the grid (lost mass " + std::to_string(lost) + ")");
  }

  // Multilinear interpolation of the old values at x - v; zero outside the node hull.
  const int n0 = m.resolution()[0];
  const int n1 = m.dim() == 2 ? m.resolution()[1] : 1;
  auto value_at = [&](int i, int j) -> double {
    if (i < 0 || i >= n0 || j < 0 || j >= n1) return 0.0;
    return m.values()[static_cast<Eigen::Index>(j) * n0 + i];
  };
  Vector out(m.size());
  for (Eigen::Index k = 0; k < m.size(); ++k) {
    const Vector src = m.node(k) - v;
    double fi[2] = {0.0, 0.0};
    int ii[2] = {0, 0};
    for (int a = 0; a < m.dim(); ++a) {
      const double s = (src[a] - m.bounds()[a].lo) / m.spacing(a) - 0.5;
      const double fl = std::floor(s);
      ii[a] = static_cast<int>(fl);
      fi[a] = s - fl;
    }
    if (m.dim() == 1) {
      out[k] = (1.0 - fi[0]) * value_at(ii[0], 0) + fi[0] * value_at(ii[0] + 1, 0);
    } else {
      out[k] = (1.0 - fi[0]) * (1.0 - fi[1]) * value_at(ii[0], ii[1]) + fi[0] * (1.0 - fi[1]) * value_at(ii[0] + 1, ii[1]) +
               (1.0 - fi[0]) * fi[1] * value_at(ii[0], ii[1] + 1) + fi[0] * fi[1] * value_at(ii[0] + 1, ii[1] + 1);
    }
  }
  const double mass = out.sum() * dv;
  require(mass > 0.0, ErrorCode::DomainOverflow, "translated density is empty");
  out /= mass;
  return GridDensity(m.bounds(), m.resolution(), std::move(out));
}

DiscreteMeasure to_discrete(const GridDensity& m, double mass_threshold) {
  const double dv = m.cell_volume();
  std::vector<Eigen::Index> kept;
  for (Eigen::Index k = 0; k < m.size(); ++k) {
    if (m.values()[k] * dv >= mass_threshold && m.values()[k] > 0.0) kept.push_back(k);
  }
  require(!kept.empty(), ErrorCode::InvalidMeasure, "no grid node carries the threshold mass");
  PointMatrix p(static_cast<Eigen::Index>(kept.size()), m.dim());
  Vector w(static_cast<Eigen::Index>(kept.size()));
  for (std::size_t i = 0; i < kept.size(); ++i) {
    p.row(static_cast<Eigen::Index>(i)) = m.node(kept[i]).transpose();
    w[static_cast<Eigen::Index>(i)] = m.values()[kept[i]] * dv;
  }
  w /= w.sum();
  return DiscreteMeasure(std::move(p), std::move(w));
}

DiscreteMeasure enforce_moment_caps(const DiscreteMeasure& m, double max_m2, double max_barycenter) {
  require(max_m2 > 0.0 && max_barycenter > 0.0, ErrorCode::InvalidParams, "moment caps must be positive");
  const MomentSummary s = moments(m);
  if (s.m2 <= max_m2 && s.barycenter.norm() <= max_barycenter) return m;

  const double nb = s.barycenter.norm();
  double target = std::min(nb, max_barycenter);
  if (target * target >= max_m2) target = std::sqrt(0.5 * max_m2);
  const Vector b_new = nb > 0.0 ? Vector(s.barycenter * (target / nb)) : s.barycenter;

  const double variance = std::max(0.0, s.m2 - nb * nb);
  double scale = 1.0;
  if (target * target + variance > max_m2 && variance > 0.0) {
    scale = std::sqrt((max_m2 - target * target) / variance) * (1.0 - 1e-12);
  }
  PointMatrix p = m.points();
  for (Eigen::Index i = 0; i < p.rows(); ++i) {
    p.row(i) = (b_new + scale * (m.point(i) - s.barycenter)).transpose();
  }
  return DiscreteMeasure(std::move(p), m.weights());
}

FamilyKind family_kind_from_string(const std::string& name) {
  if (name == "dirac-shift") return FamilyKind::DiracShift;
  if (name == "two-point-split") return FamilyKind::TwoPointSplit;
  if (name == "random-cloud") return FamilyKind::RandomCloud;
  throw Error(ErrorCode::InvalidParams, "unknown family kind '" + name + "'");
}

const char* to_string(FamilyKind kind) {
  switch (kind) {
    case FamilyKind::DiracShift: return "dirac-shift";
    case FamilyKind::TwoPointSplit: return "two-point-split";
    case FamilyKind::RandomCloud: return "random-cloud";
  }
  return "unknown";
}

std::vector<DiscreteMeasure> make_family(FamilyKind kind, const FamilyParams& params, std::uint64_t seed) {
  const int d = params.dim;
  require(d == 1 || d == 2, ErrorCode::InvalidParams, "family dimension must be 1 or 2");
  std::vector<DiscreteMeasure> out;

  switch (kind) {
    case FamilyKind::DiracShift: {
      require(!params.shifts.empty(), ErrorCode::InvalidParams, "dirac-shift needs at least one shift");
      for (double t : params.shifts) {
        require(std::isfinite(t), ErrorCode::InvalidParams, "shift must be finite");
        Vector at = Vector::Zero(d);
        at[0] = t;
        out.push_back(DiscreteMeasure::dirac(at));
      }
      break;
    }
    case FamilyKind::TwoPointSplit: {
      require(!params.splits.empty(), ErrorCode::InvalidParams, "two-point-split needs at least one split");
      for (double a : params.splits) {
        require(std::isfinite(a) && a > 0.0, ErrorCode::InvalidParams, "split half-width must be positive");
        PointMatrix p = PointMatrix::Zero(2, d);
        p(0, 0) = -a;
        p(1, 0) = a;
        out.emplace_back(std::move(p), Vector::Constant(2, 0.5));
      }
      break;
    }
    case FamilyKind::RandomCloud: {
      require(params.cloud_size >= 1 && params.cloud_size <= 200, ErrorCode::InvalidParams,
              "cloud size must lie in [1, 200]");
      require(params.cloud_count >= 1, ErrorCode::InvalidParams, "cloud count must be positive");
      require(std::isfinite(params.radius) && params.radius > 0.0, ErrorCode::InvalidParams,
              "cloud radius must be positive");
      std::mt19937_64 rng(seed);
      for (int c = 0; c < params.cloud_count; ++c) {
        PointMatrix p(params.cloud_size, d);
        Vector w(params.cloud_size);
        for (int i = 0; i < params.cloud_size; ++i) {
          for (int k = 0; k < d; ++k) p(i, k) = params.radius * (2.0 * uniform01(rng) - 1.0);
          w[i] = 0.5 + uniform01(rng);
        }
        w /= w.sum();
        out.emplace_back(std::move(p), std::move(w));
      }
      break;
    }
  }

  const bool capped = std::isfinite(params.max_m2) || std::isfinite(params.max_barycenter);
  if (capped) {
    const double cap_m2 = std::isfinite(params.max_m2) ? params.max_m2 : std::numeric_limits<double>::max();
    const double cap_b =
        std::isfinite(params.max_barycenter) ? params.max_barycenter : std::numeric_limits<double>::max();
    for (auto& m : out) m = enforce_moment_caps(m, cap_m2, cap_b);
  }
  return out;
}

}  // namespace regmm
