#include "oracles.hpp"
#include "regmm/measures.hpp"
#include "regmm/potential.hpp"

#include <doctest.h>

#include <random>

using namespace regmm;

namespace {

PointMatrix column(std::initializer_list<double> xs) {
  PointMatrix p(static_cast<Eigen::Index>(xs.size()), 1);
  Eigen::Index i = 0;
  for (double x : xs) p(i++, 0) = x;
  return p;
}

Vector vec(std::initializer_list<double> xs) {
  Vector v(static_cast<Eigen::Index>(xs.size()));
  Eigen::Index i = 0;
  for (double x : xs) v[i++] = x;
  return v;
}

}  // namespace

TEST_CASE("conjugate of a three-point potential") {
  const Potential p(column({0.0, 1.0, 2.0}), vec({0.0, 0.4, 1.2}));
  const Vector x = Vector::Constant(1, 0.7);
  CHECK(conjugate_value(p, x) == doctest::Approx(0.3).epsilon(1e-15));
  CHECK(cell_index(p, x) == 1);
  CHECK(transport_map(p, x)[0] == 1.0);
  CHECK(moment_map_value(p, 2.0, x) == doctest::Approx(2.3));
}

TEST_CASE("ties resolve to the smallest index") {
  const Potential p(column({-1.0, 1.0}), vec({0.0, 0.0}));
  CHECK(cell_index(p, Vector::Zero(1)) == 0);
}

TEST_CASE("gauge fixing") {
  const Potential p(column({-1.0, 0.0, 2.0}), vec({3.0, 1.0, -0.5}));
  const Vector w = vec({0.2, 0.3, 0.5});
  const Potential g = gauged(p, w);
  CHECK(std::abs(w.dot(g.phi())) <= 1e-15);
  const Vector diff = g.phi() - p.phi();
  CHECK((diff.array() - diff[0]).abs().maxCoeff() <= 1e-15);
}

TEST_CASE("upper envelope matches enumeration") {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 300; ++trial) {
    const int n = 1 + trial % 12;
    PointMatrix y(n, 1);
    Vector phi(n);
    for (int j = 0; j < n; ++j) {
      // Coarse values produce repeated slopes and exact ties.
      y(j, 0) = std::round(8.0 * uniform01(rng)) / 2.0 - 2.0;
      phi[j] = std::round(6.0 * uniform01(rng)) / 3.0;
    }
    const Potential p(y, phi);
    const CellDecomposition1D env = envelope_1d(p);
    REQUIRE(env.active.size() == env.breakpoints.size() + 1);
    for (std::size_t k = 1; k < env.breakpoints.size(); ++k) CHECK(env.breakpoints[k - 1] < env.breakpoints[k]);

    for (int s = 0; s < 40; ++s) {
      const double x = 12.0 * uniform01(rng) - 6.0;
      std::size_t k = 0;
      while (k < env.breakpoints.size() && x > env.breakpoints[k]) ++k;
      const Eigen::Index j = env.active[k];
      const oracle::BruteMax best = oracle::brute_conjugate(y, phi, Vector::Constant(1, x));
      CHECK(y(j, 0) * x - phi[j] == doctest::Approx(best.value).epsilon(1e-13));
      CHECK(conjugate_value(p, Vector::Constant(1, x)) == doctest::Approx(best.value).epsilon(1e-13));
    }
  }
}

TEST_CASE("conjugate is convex and its cells are consistent in 2D") {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    const int n = 2 + trial % 9;
    PointMatrix y(n, 2);
    Vector phi(n);
    for (int j = 0; j < n; ++j) {
      y(j, 0) = 4.0 * uniform01(rng) - 2.0;
      y(j, 1) = 4.0 * uniform01(rng) - 2.0;
      phi[j] = uniform01(rng);
    }
    const Potential p(y, phi);
    for (int s = 0; s < 30; ++s) {
      Vector a(2), b(2);
      for (int k = 0; k < 2; ++k) {
        a[k] = 10.0 * uniform01(rng) - 5.0;
        b[k] = 10.0 * uniform01(rng) - 5.0;
      }
      const double t = uniform01(rng);
      const Vector mid = t * a + (1.0 - t) * b;
      CHECK(conjugate_value(p, mid) <= t * conjugate_value(p, a) + (1.0 - t) * conjugate_value(p, b) + 1e-12);
      CHECK(cell_index(p, a) == oracle::brute_conjugate(y, phi, a).index);
    }
  }
}

TEST_CASE("potential validation") {
  CHECK_THROWS_AS(Potential(column({0.0, 1.0}), vec({0.0})), Error);
  CHECK_THROWS_AS(Potential(column({0.0, 1.0}), vec({0.0, NAN})), Error);
}
