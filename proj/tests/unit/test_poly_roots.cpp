#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "bdflow/errors.hpp"
#include "bdflow/poly_roots.hpp"
#include "bdflow/rng.hpp"
#include "bdflow/stability.hpp"

using namespace bdflow;

namespace {

double nearest(const std::vector<Complex>& roots, Complex z) {
  double best = INFINITY;
  for (auto r : roots) best = std::min(best, std::abs(r - z));
  return best;
}

}  // namespace

TEST_SUITE("poly_roots") {
  TEST_CASE("quadratic with real roots") {
    const auto r = poly_roots(std::vector<double>{1.0, 0.0, -1.0});
    REQUIRE(r.size() == 2);
    CHECK(nearest(r, 1.0) < 1e-12);
    CHECK(nearest(r, -1.0) < 1e-12);
  }

  TEST_CASE("constructed cubic") {
    const std::vector<Complex> want{0.3, 0.7, -0.2};
    const auto r = poly_roots(polynomial_from_roots(want));
    REQUIRE(r.size() == 3);
    for (auto w : want) CHECK(nearest(r, w) < 1e-10);
  }

  TEST_CASE("complex conjugate pair and repeated roots") {
    const auto r = poly_roots(std::vector<double>{1.0, 0.0, 1.0});
    CHECK(nearest(r, Complex(0, 1)) < 1e-12);
    CHECK(nearest(r, Complex(0, -1)) < 1e-12);
    const auto d = poly_roots(std::vector<double>{1.0, -2.0, 1.0});
    for (auto z : d) CHECK(std::abs(z - 1.0) < 1e-6);
  }

  TEST_CASE("random degree up to eight") {
    CounterRng rng(31, 1);
    for (int trial = 0; trial < 50; ++trial) {
      const int degree = 1 + static_cast<int>(rng.below(8));
      std::vector<Complex> want;
      for (int i = 0; i < degree; ++i) want.emplace_back(rng.uniform(-1.5, 1.5), rng.uniform(-1.5, 1.5));
      const auto coeffs = polynomial_from_roots(want);
      const auto r = poly_roots(coeffs);
      REQUIRE(r.size() == want.size());
      for (auto z : r) CHECK(std::abs(poly_eval(coeffs, z)) < 1e-9);
    }
  }

  TEST_CASE("companion root against matrix powers") {
    CounterRng rng(5, 2);
    const auto scheme = bdf_scheme(3);
    for (int trial = 0; trial < 20; ++trial) {
      CompanionBlock block{rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0), scheme.xi_values};
      const auto roots = poly_roots(block.characteristic());
      double largest = 0.0;
      for (auto z : roots) largest = std::max(largest, std::abs(z));
      CHECK(largest == doctest::Approx(block.spectral_radius()).epsilon(1e-12));
      const Eigen::EigenSolver<Matrix> eig(block.dense());
      CHECK(std::abs(eig.eigenvalues().cwiseAbs().maxCoeff() - largest) < 1e-8);
      CHECK(gelfand_radius(block.dense(), 4000) == doctest::Approx(largest).epsilon(1e-3));
    }
  }

  TEST_CASE("invalid input") {
    CHECK_THROWS_AS(poly_roots(std::vector<double>{0.0, 1.0, 2.0}), InvalidArgument);
    CHECK_THROWS_AS(poly_roots(std::vector<double>{}), InvalidArgument);
  }
}
