#include "regmm/potential.hpp"

#include <algorithm>
#include <numeric>

namespace regmm {

Potential::Potential(PointMatrix support, Vector phi) : support_(std::move(support)), phi_(std::move(phi)) {
  if (support_.cols() != 1 && support_.cols() != 2) {
    throw Error(ErrorCode::InvalidParams, "potential dimension must be 1 or 2");
  }
  if (support_.rows() < 1 || phi_.size() != support_.rows()) {
    throw Error(ErrorCode::InvalidParams, "phi and support differ in length");
  }
  if (!phi_.allFinite() || !support_.allFinite()) {
    throw Error(ErrorCode::InvalidParams, "potential values must be finite");
  }
}

Potential gauged(const Potential& p, const Vector& weights) {
  if (weights.size() != p.size()) throw Error(ErrorCode::InvalidParams, "gauge weights mismatch");
  const double shift = weights.dot(p.phi()) / weights.sum();
  return p.with_phi(p.phi().array() - shift);
}

double conjugate_value(const Potential& p, const Vector& x) {
  return (p.support() * x - p.phi()).maxCoeff();
}

Eigen::Index cell_index(const Potential& p, const Vector& x) {
  const Vector affine = p.support() * x - p.phi();
  Eigen::Index best = 0;
  for (Eigen::Index j = 1; j < affine.size(); ++j) {
    if (affine[j] > affine[best]) best = j;
  }
  return best;
}

Vector transport_map(const Potential& p, const Vector& x) {
  return p.support().row(cell_index(p, x)).transpose();
}

double moment_map_value(const Potential& p, double log_z, const Vector& x) {
  return conjugate_value(p, x) + log_z;
}

CellDecomposition1D upper_envelope(std::span<const double> slopes, std::span<const double> intercepts) {
  const std::size_t n = slopes.size();
  if (n == 0 || intercepts.size() != n) throw Error(ErrorCode::InvalidParams, "envelope needs matching lines");

  std::vector<Eigen::Index> order(n);
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) {
    if (slopes[a] != slopes[b]) return slopes[a] < slopes[b];
    if (intercepts[a] != intercepts[b]) return intercepts[a] > intercepts[b];
    return a < b;
  });

  auto crossing = [&](Eigen::Index a, Eigen::Index b) {
    return (intercepts[a] - intercepts[b]) / (slopes[b] - slopes[a]);
  };

  std::vector<Eigen::Index> hull;
  hull.reserve(n);
  for (std::size_t k = 0; k < n; ++k) {
    const Eigen::Index line = order[k];
    if (!hull.empty() && slopes[hull.back()] == slopes[line]) continue;  // parallel and lower
    while (hull.size() >= 2 &&
           crossing(hull.back(), line) <= crossing(hull[hull.size() - 2], hull.back())) {
      hull.pop_back();
    }
    hull.push_back(line);
  }

  CellDecomposition1D out;
  out.active = hull;
  out.breakpoints.reserve(hull.size() - 1);
  for (std::size_t k = 1; k < hull.size(); ++k) out.breakpoints.push_back(crossing(hull[k - 1], hull[k]));
  return out;
}

CellDecomposition1D envelope_1d(const Potential& p) {
  if (p.dim() != 1) throw Error(ErrorCode::InvalidParams, "envelope_1d requires a 1D potential");
  std::vector<double> slopes(static_cast<std::size_t>(p.size()));
  std::vector<double> intercepts(slopes.size());
  for (Eigen::Index j = 0; j < p.size(); ++j) {
    slopes[static_cast<std::size_t>(j)] = p.support()(j, 0);
    intercepts[static_cast<std::size_t>(j)] = -p.phi()[j];
  }
  return upper_envelope(slopes, intercepts);
}

}  // namespace regmm
