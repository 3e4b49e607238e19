#pragma once

#include "regmm/core.hpp"

#include <span>
#include <vector>

namespace regmm {

/// Dual variable phi on the support {y_j} of a discrete measure. It
/// parametrizes the max-affine convex function
///   phi*(x) = max_j (<x, y_j> - phi_j),
/// whose gradient sends the cell of index j onto y_j.
class Potential {
 public:
  Potential(PointMatrix support, Vector phi);

  int dim() const { return static_cast<int>(support_.cols()); }
  Eigen::Index size() const { return support_.rows(); }
  const PointMatrix& support() const { return support_; }
  const Vector& phi() const { return phi_; }

  Potential with_phi(Vector phi) const { return Potential(support_, std::move(phi)); }

 private:
  PointMatrix support_;
  Vector phi_;
};

/// Shifts phi by a constant so that sum_j weights_j phi_j = 0.
Potential gauged(const Potential& p, const Vector& weights);

double conjugate_value(const Potential& p, const Vector& x);

/// Smallest index attaining the maximum in conjugate_value.
Eigen::Index cell_index(const Potential& p, const Vector& x);

/// y_{cell_index(x)}, the gradient of phi* wherever the maximum is unique.
Vector transport_map(const Potential& p, const Vector& x);

/// u(x) = phi*(x) + log Z, the moment map recovered from a solve.
double moment_map_value(const Potential& p, double log_z, const Vector& x);

/// Upper envelope of a family of lines on R. `breakpoints` is increasing and
/// `active[k]` is the line attaining the maximum on
/// (breakpoints[k-1], breakpoints[k]) with breakpoints[-1] = -inf and
/// breakpoints[K-1] = +inf.
struct CellDecomposition1D {
  std::vector<double> breakpoints;
  std::vector<Eigen::Index> active;
};

/// Envelope of x -> slopes[j] * x + intercepts[j]. Among lines of equal slope
/// the one with the larger intercept (then lower index) survives.
CellDecomposition1D upper_envelope(std::span<const double> slopes, std::span<const double> intercepts);

CellDecomposition1D envelope_1d(const Potential& p);

}  // namespace regmm
