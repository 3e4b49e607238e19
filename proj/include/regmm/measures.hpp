#pragma once

#include "regmm/core.hpp"

#include <cstdint>
#include <functional>
#include <limits>
#include <random>
#include <vector>

namespace regmm {

/// Finitely supported probability measure on R^d, d in {1, 2}.
///
/// Construction validates the data, merges duplicate support points by summing
/// their weights, and rescales the weights so they sum to one. Weights whose
/// sum differs from one by more than `sum_tolerance` are rejected.
class DiscreteMeasure {
 public:
  DiscreteMeasure(PointMatrix points, Vector weights, double sum_tolerance = 1e-9);

  static DiscreteMeasure dirac(const Vector& at);

  int dim() const { return static_cast<int>(points_.cols()); }
  Eigen::Index size() const { return points_.rows(); }
  const PointMatrix& points() const { return points_; }
  const Vector& weights() const { return weights_; }
  Vector point(Eigen::Index i) const { return points_.row(i).transpose(); }

 private:
  PointMatrix points_;
  Vector weights_;
};

struct Interval {
  double lo = 0.0;
  double hi = 1.0;
  double length() const { return hi - lo; }
};

/// Density tabulated at the midpoints of a tensor grid (d in {1, 2}).
/// Values are stored with axis 0 varying fastest.
class GridDensity {
 public:
  GridDensity(std::vector<Interval> bounds, std::vector<int> resolution, Vector values,
              double normalization_tolerance = 1e-6);

  /// Evaluates `f` at every node. With `normalize`, values are rescaled so the
  /// midpoint sum is exactly one.
  static GridDensity tabulate(std::vector<Interval> bounds, std::vector<int> resolution,
                              const std::function<double(const Vector&)>& f, bool normalize = true);

  int dim() const { return static_cast<int>(bounds_.size()); }
  const std::vector<Interval>& bounds() const { return bounds_; }
  const std::vector<int>& resolution() const { return resolution_; }
  const Vector& values() const { return values_; }
  Eigen::Index size() const { return values_.size(); }

  double spacing(int axis) const { return bounds_[axis].length() / resolution_[axis]; }
  double cell_volume() const;
  double coordinate(int axis, int i) const { return bounds_[axis].lo + (i + 0.5) * spacing(axis); }
  Vector node(Eigen::Index flat) const;
  double total_mass() const { return values_.sum() * cell_volume(); }

 private:
  std::vector<Interval> bounds_;
  std::vector<int> resolution_;
  Vector values_;
};

struct MomentSummary {
  Vector barycenter;
  double m1 = 0.0;
  double m2 = 0.0;
};

MomentSummary moments(const DiscreteMeasure& m);
MomentSummary moments(const GridDensity& m);

DiscreteMeasure translate(const DiscreteMeasure& m, const Vector& v);

enum class GridShift {
  /// Move the bounds with the density; exact and never overflows.
  MoveBounds,
  /// Keep the bounds and resample by linear interpolation.
  Resample,
};

/// Pushforward of a grid density by x -> x + v. In `Resample` mode a
/// domain-overflow error is raised when more than `tail_tolerance` of the mass
/// would leave the bounds.
GridDensity translate(const GridDensity& m, const Vector& v, GridShift mode = GridShift::MoveBounds,
                      double tail_tolerance = 1e-10);

/// Weighted point cloud of the grid nodes whose mass is at least `mass_threshold`.
DiscreteMeasure to_discrete(const GridDensity& m, double mass_threshold = 1e-10);

/// Moves the barycenter into the closed ball of radius `max_barycenter` and
/// contracts about it until M2 <= max_m2. Measures already inside are returned
/// unchanged.
DiscreteMeasure enforce_moment_caps(const DiscreteMeasure& m, double max_m2, double max_barycenter);

enum class FamilyKind { DiracShift, TwoPointSplit, RandomCloud };

FamilyKind family_kind_from_string(const std::string& name);
const char* to_string(FamilyKind kind);

struct FamilyParams {
  int dim = 1;
  /// dirac-shift: locations t of delta_t (placed on the first axis).
  std::vector<double> shifts;
  /// two-point-split: half-widths a of (delta_{-a} + delta_{a}) / 2.
  std::vector<double> splits;
  /// random-cloud: number of clouds, points per cloud (<= 200), box radius.
  int cloud_count = 1;
  int cloud_size = 10;
  double radius = 1.0;
  double max_m2 = std::numeric_limits<double>::infinity();
  double max_barycenter = std::numeric_limits<double>::infinity();
};

std::vector<DiscreteMeasure> make_family(FamilyKind kind, const FamilyParams& params, std::uint64_t seed);

/// Uniform double in [0, 1) built from the raw engine output so that streams
/// are identical across standard library implementations.
inline double uniform01(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

}  // namespace regmm
