#include "bdflow/numcore.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "bdflow/errors.hpp"
#include "bdflow/rng.hpp"

namespace bdflow {

FunctionObjective::FunctionObjective(std::size_t dimension, ValueFn value, GradientFn gradient,
                                     std::optional<double> smoothness,
                                     std::optional<double> convexity)
    : dimension_(dimension),
      value_(std::move(value)),
      gradient_(std::move(gradient)),
      smoothness_(smoothness),
      convexity_(convexity) {
  if (dimension_ == 0) throw InvalidArgument("objective dimension must be positive");
}

FunctionObjective half_square(std::size_t dimension, double curvature) {
  return FunctionObjective(
      dimension, [curvature](const Vector& x) { return 0.5 * curvature * x.squaredNorm(); },
      [curvature](const Vector& x) -> Vector { return curvature * x; }, curvature, curvature);
}

FunctionObjective cosine_objective() {
  return FunctionObjective(
      1, [](const Vector& x) { return std::cos(x[0]); },
      [](const Vector& x) -> Vector { return Vector::Constant(1, -std::sin(x[0])); }, 1.0, -1.0);
}

std::string_view to_string(SpectrumKind kind) {
  switch (kind) {
    case SpectrumKind::Uniform12: return "uniform12";
    case SpectrumKind::Squared: return "squared";
    case SpectrumKind::Exponential: return "exponential";
    case SpectrumKind::Custom: return "custom";
  }
  return "custom";
}

SpectrumKind parse_spectrum_kind(std::string_view name) {
  if (name == "uniform12") return SpectrumKind::Uniform12;
  if (name == "squared") return SpectrumKind::Squared;
  if (name == "exponential") return SpectrumKind::Exponential;
  if (name == "custom") return SpectrumKind::Custom;
  throw InvalidArgument("unknown spectrum kind '" + std::string(name) + "'");
}

Spectrum::Spectrum(std::vector<double> eigenvalues, SpectrumKind kind, std::uint64_t seed)
    : values_(std::move(eigenvalues)), kind_(kind), seed_(seed) {
  if (values_.empty()) throw InvalidArgument("spectrum must contain at least one eigenvalue");
  for (double d : values_) {
    if (!std::isfinite(d) || d < 0.0)
      throw InvalidArgument("spectrum eigenvalues must be finite and nonnegative");
  }
  std::sort(values_.begin(), values_.end());
}

Spectrum make_spectrum(SpectrumKind kind, std::size_t n, std::uint64_t seed) {
  if (n == 0) throw InvalidArgument("make_spectrum: n must be positive");
  std::vector<double> d(n);
  switch (kind) {
    case SpectrumKind::Uniform12: {
      CounterRng rng(seed, /*stream=*/1);
      for (auto& v : d) v = rng.uniform(1.0, 2.0);
      break;
    }
    case SpectrumKind::Squared: {
      const double nn = static_cast<double>(n) * static_cast<double>(n);
      for (std::size_t i = 1; i <= n; ++i) d[i - 1] = static_cast<double>(i * i) / nn;
      break;
    }
    case SpectrumKind::Exponential:
      for (std::size_t i = 1; i <= n; ++i) d[i - 1] = std::exp(-static_cast<double>(i));
      break;
    case SpectrumKind::Custom:
      throw InvalidArgument("make_spectrum: custom spectra are built from explicit eigenvalues");
  }
  return Spectrum(std::move(d), kind, seed);
}

QuadraticProblem::QuadraticProblem(Spectrum spectrum, Matrix basis, std::uint64_t seed)
    : spectrum_(std::move(spectrum)), basis_(std::move(basis)), seed_(seed) {
  const auto n = static_cast<Eigen::Index>(spectrum_.size());
  if (basis_.rows() != n || basis_.cols() != n)
    throw InvalidArgument("quadratic basis must be n x n for an n-point spectrum");
}

Vector QuadraticProblem::eigenvalue_vector() const {
  return Eigen::Map<const Vector>(spectrum_.values().data(),
                                  static_cast<Eigen::Index>(spectrum_.size()));
}

double QuadraticProblem::value(const Vector& x) const {
  const Vector y = basis_.transpose() * x;
  return 0.5 * y.cwiseProduct(y).dot(eigenvalue_vector());
}

Vector QuadraticProblem::gradient(const Vector& x) const {
  const Vector y = basis_.transpose() * x;
  return basis_ * eigenvalue_vector().cwiseProduct(y);
}

Matrix QuadraticProblem::dense() const {
  return basis_ * eigenvalue_vector().asDiagonal() * basis_.transpose();
}

Matrix random_orthonormal(std::size_t n, std::uint64_t seed) {
  if (n == 0) throw InvalidArgument("random_orthonormal: n must be positive");
  const auto m = static_cast<Eigen::Index>(n);
  CounterRng rng(seed, /*stream=*/2);
  Matrix g(m, m);
  for (Eigen::Index j = 0; j < m; ++j)
    for (Eigen::Index i = 0; i < m; ++i) g(i, j) = rng.normal();

  Eigen::HouseholderQR<Matrix> qr(g);
  Matrix q = qr.householderQ() * Matrix::Identity(m, m);
  const Matrix& r = qr.matrixQR();
  for (Eigen::Index i = 0; i < m; ++i) {
    if (r(i, i) < 0.0) q.col(i) = -q.col(i);
  }
  return q;
}

QuadraticProblem make_quadratic(const Spectrum& spectrum, std::uint64_t seed) {
  return QuadraticProblem(spectrum, random_orthonormal(spectrum.size(), seed), seed);
}

namespace {

std::vector<Rational> over(std::int64_t denominator, std::initializer_list<std::int64_t> numerators) {
  std::vector<Rational> out;
  for (auto n : numerators) out.emplace_back(n, denominator);
  return out;
}

double to_double(const Rational& r) {
  return static_cast<double>(r.numerator()) / static_cast<double>(r.denominator());
}

}  // namespace

double BdfScheme::abs_weight_sum() const {
  double s = 0.0;
  for (double v : xi_values) s += std::abs(v);
  return s;
}

bool BdfScheme::has_negative_weight() const {
  return std::any_of(xi_values.begin(), xi_values.end(), [](double v) { return v < 0.0; });
}

BdfScheme bdf_scheme(int tau) {
  BdfScheme s;
  s.tau = tau;
  switch (tau) {
    case 1: s.xi_bar = Rational(1); s.xi = over(1, {1}); break;
    case 2: s.xi_bar = Rational(2, 3); s.xi = over(3, {-1, 4}); break;
    case 3: s.xi_bar = Rational(6, 11); s.xi = over(11, {2, -9, 18}); break;
    case 4: s.xi_bar = Rational(12, 25); s.xi = over(25, {-3, 16, -36, 48}); break;
    case 5: s.xi_bar = Rational(60, 137); s.xi = over(137, {12, -75, 200, -300, 300}); break;
    case 6: s.xi_bar = Rational(60, 147); s.xi = over(147, {-10, 72, -225, 400, -450, 360}); break;
    default: throw InvalidArgument("bdf_scheme: order must be in [1, 6], got " + std::to_string(tau));
  }
  s.delta_exact = delta_rational(s);
  s.xi_bar_value = to_double(s.xi_bar);
  s.xi_values.clear();
  for (const auto& r : s.xi) s.xi_values.push_back(to_double(r));
  s.delta = to_double(s.delta_exact);
  return s;
}

namespace {

Rational delta_with_offset(const BdfScheme& scheme, int offset) {
  const int tau = scheme.tau;
  Rational inner_total(0);
  for (int j = 1; j <= tau - 1; ++j) {
    for (int i = 1; i <= j; ++i) {
      const auto& x = scheme.xi[static_cast<std::size_t>(i - 1)];
      inner_total += Rational(tau - offset - i) * x * x;
    }
  }
  return Rational(tau - 1) * inner_total;
}

}  // namespace

Rational delta_rational(const BdfScheme& scheme) { return delta_with_offset(scheme, 0); }
double delta(const BdfScheme& scheme) { return to_double(delta_rational(scheme)); }
Rational delta_shifted_rational(const BdfScheme& scheme) { return delta_with_offset(scheme, 1); }
double delta_shifted(const BdfScheme& scheme) { return to_double(delta_shifted_rational(scheme)); }

std::string to_string(const Rational& r) {
  std::ostringstream os;
  os << r.numerator();
  if (r.denominator() != 1) os << '/' << r.denominator();
  return os.str();
}

void to_json(nlohmann::json& j, const BdfScheme& scheme) {
  std::vector<std::string> xi;
  for (const auto& r : scheme.xi) xi.push_back(to_string(r));
  j = nlohmann::json{{"tau", scheme.tau},
                     {"xi_bar", to_string(scheme.xi_bar)},
                     {"xi", xi},
                     {"delta", scheme.delta},
                     {"delta_exact", to_string(scheme.delta_exact)}};
}

void to_json(nlohmann::json& j, const Spectrum& spectrum) {
  j = nlohmann::json{{"eigenvalues", spectrum.values()},
                     {"seed", spectrum.seed()},
                     {"kind", std::string(to_string(spectrum.kind()))}};
}

}  // namespace bdflow
