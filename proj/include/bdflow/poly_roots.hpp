#pragma once

#include <complex>
#include <vector>

namespace bdflow {

using Complex = std::complex<double>;

inline constexpr int kRootMaxIterations = 500;
inline constexpr double kRootTolerance = 1e-12;

/// All roots of c[0] z^d + c[1] z^{d-1} + ... + c[d] (highest degree first)
/// by Durand-Kerner simultaneous iteration. Starting points lie on a circle of
/// radius 1 + max |c_i / c_0|. Throws NumericalFailure when the iteration cap
/// is hit without every root meeting |p(r)| < tol * max|c| * max(1, |r|)^d.
std::vector<Complex> poly_roots(const std::vector<Complex>& coeffs, double tol = kRootTolerance);
std::vector<Complex> poly_roots(const std::vector<double>& coeffs, double tol = kRootTolerance);

/// Monic coefficients (highest degree first) of prod (z - r_i).
std::vector<Complex> polynomial_from_roots(const std::vector<Complex>& roots);

Complex poly_eval(const std::vector<Complex>& coeffs, Complex z);

}  // namespace bdflow
