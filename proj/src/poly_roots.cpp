#include "bdflow/poly_roots.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include "bdflow/errors.hpp"

namespace bdflow {

Complex poly_eval(const std::vector<Complex>& coeffs, Complex z) {
  Complex acc{0.0, 0.0};
  for (const Complex& c : coeffs) acc = acc * z + c;
  return acc;
}

namespace {

double residual_scale(const std::vector<Complex>& c, Complex z) {
  double cmax = 0.0;
  for (const Complex& v : c) cmax = std::max(cmax, std::abs(v));
  const double d = static_cast<double>(c.size() - 1);
  return cmax * std::pow(std::max(1.0, std::abs(z)), d);
}

}  // namespace

std::vector<Complex> poly_roots(const std::vector<Complex>& coeffs, double tol) {
  if (coeffs.empty() || std::abs(coeffs.front()) == 0.0)
    throw InvalidArgument("poly_roots: leading coefficient must be nonzero");
  const std::size_t degree = coeffs.size() - 1;
  if (degree > 8) throw InvalidArgument("poly_roots: degree above 8 is not supported");
  if (degree == 0) return {};

  std::vector<Complex> c(coeffs.size());
  for (std::size_t i = 0; i < c.size(); ++i) c[i] = coeffs[i] / coeffs.front();
  if (degree == 1) return {-c[1]};

  double radius = 0.0;
  for (std::size_t i = 1; i < c.size(); ++i) radius = std::max(radius, std::abs(c[i]));
  radius += 1.0;

  std::vector<Complex> z(degree);
  for (std::size_t k = 0; k < degree; ++k) {
    const double angle = 2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(degree) + 0.4;
    z[k] = std::polar(radius, angle);
  }

  auto converged = [&] {
    for (const Complex& r : z) {
      if (std::abs(poly_eval(c, r)) > 1e-3 * tol * residual_scale(c, r)) return false;
    }
    return true;
  };

  for (int it = 0; it < kRootMaxIterations; ++it) {
    double largest_step = 0.0;
    for (std::size_t k = 0; k < degree; ++k) {
      Complex denom{1.0, 0.0};
      for (std::size_t j = 0; j < degree; ++j) {
        if (j != k) denom *= z[k] - z[j];
      }
      if (std::abs(denom) == 0.0) denom = Complex{1e-300, 0.0};
      const Complex step = poly_eval(c, z[k]) / denom;
      z[k] -= step;
      largest_step = std::max(largest_step, std::abs(step) / (1.0 + std::abs(z[k])));
    }
    if (largest_step < 1e-15 || converged()) break;
  }

  double worst = 0.0;
  for (const Complex& r : z) {
    if (!std::isfinite(r.real()) || !std::isfinite(r.imag())) throw NumericalFailure("poly_roots: nonfinite root");
    worst = std::max(worst, std::abs(poly_eval(c, r)) / residual_scale(c, r));
  }
  if (worst >= tol) {
    std::ostringstream msg;
    msg << "poly_roots: no convergence after " << kRootMaxIterations << " iterations (relative residual " << worst
        << ")";
    throw NumericalFailure(msg.str());
  }
  return z;
}

std::vector<Complex> poly_roots(const std::vector<double>& coeffs, double tol) {
  std::vector<Complex> c(coeffs.begin(), coeffs.end());
  return poly_roots(c, tol);
}

std::vector<Complex> polynomial_from_roots(const std::vector<Complex>& roots) {
  std::vector<Complex> c{Complex{1.0, 0.0}};
  for (const Complex& r : roots) {
    std::vector<Complex> next(c.size() + 1, Complex{0.0, 0.0});
    for (std::size_t i = 0; i < c.size(); ++i) {
      next[i] += c[i];
      next[i + 1] -= r * c[i];
    }
    c = std::move(next);
  }
  return c;
}

}  // namespace bdflow
