#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>
#include <boost/rational.hpp>
#include <nlohmann/json.hpp>

namespace bdflow {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using Rational = boost::rational<std::int64_t>;

class QuadraticProblem;

/// A differentiable objective f: R^n -> R.
///
/// `smoothness()` is the declared Lipschitz constant L of the gradient and
/// `convexity()` the declared modulus mu (negative for weakly convex). Both are
/// optional; operations that need them (auto inner step, rate checks) fail with
/// InvalidArgument when they are absent.
class Objective {
 public:
  virtual ~Objective() = default;

  virtual std::size_t dimension() const = 0;
  virtual double value(const Vector& x) const = 0;
  virtual Vector gradient(const Vector& x) const = 0;
  virtual std::optional<double> smoothness() const { return std::nullopt; }
  virtual std::optional<double> convexity() const { return std::nullopt; }
  /// The underlying quadratic when f is one (possibly behind a transparent wrapper).
  virtual const QuadraticProblem* quadratic() const { return nullptr; }
};

/// Objective assembled from callables. Mostly for scalar test problems.
class FunctionObjective final : public Objective {
 public:
  using ValueFn = std::function<double(const Vector&)>;
  using GradientFn = std::function<Vector(const Vector&)>;

  FunctionObjective(std::size_t dimension, ValueFn value, GradientFn gradient,
                    std::optional<double> smoothness = std::nullopt,
                    std::optional<double> convexity = std::nullopt);

  std::size_t dimension() const override { return dimension_; }
  double value(const Vector& x) const override { return value_(x); }
  Vector gradient(const Vector& x) const override { return gradient_(x); }
  std::optional<double> smoothness() const override { return smoothness_; }
  std::optional<double> convexity() const override { return convexity_; }

 private:
  std::size_t dimension_;
  ValueFn value_;
  GradientFn gradient_;
  std::optional<double> smoothness_;
  std::optional<double> convexity_;
};

/// f(x) = (curvature/2) |x|^2 in `dimension` variables.
FunctionObjective half_square(std::size_t dimension = 1, double curvature = 1.0);
/// f(x) = cos(x) on R; 1-smooth and (-1)-weakly convex, infimum -1.
FunctionObjective cosine_objective();

enum class SpectrumKind { Uniform12, Squared, Exponential, Custom };

std::string_view to_string(SpectrumKind kind);
SpectrumKind parse_spectrum_kind(std::string_view name);

/// Eigenvalues of a symmetric PSD quadratic, sorted ascending.
class Spectrum {
 public:
  explicit Spectrum(std::vector<double> eigenvalues, SpectrumKind kind = SpectrumKind::Custom,
                    std::uint64_t seed = 0);

  const std::vector<double>& values() const { return values_; }
  std::size_t size() const { return values_.size(); }
  double mu() const { return values_.front(); }
  double L() const { return values_.back(); }
  SpectrumKind kind() const { return kind_; }
  std::uint64_t seed() const { return seed_; }

 private:
  std::vector<double> values_;
  SpectrumKind kind_;
  std::uint64_t seed_;
};

/// uniform12: i.i.d. U[1,2]; squared: d_i = i^2/n^2; exponential: d_i = exp(-i).
Spectrum make_spectrum(SpectrumKind kind, std::size_t n, std::uint64_t seed = 0);

/// f(x) = 1/2 x^T U diag(d) U^T x.
class QuadraticProblem final : public Objective {
 public:
  QuadraticProblem(Spectrum spectrum, Matrix basis, std::uint64_t seed);

  std::size_t dimension() const override { return spectrum_.size(); }
  double value(const Vector& x) const override;
  Vector gradient(const Vector& x) const override;
  std::optional<double> smoothness() const override { return spectrum_.L(); }
  std::optional<double> convexity() const override { return spectrum_.mu(); }
  const QuadraticProblem* quadratic() const override { return this; }

  const Spectrum& spectrum() const { return spectrum_; }
  const Matrix& basis() const { return basis_; }
  std::uint64_t seed() const { return seed_; }
  Vector eigenvalue_vector() const;
  /// U D U^T as a dense matrix.
  Matrix dense() const;

 private:
  Spectrum spectrum_;
  Matrix basis_;
  std::uint64_t seed_;
};

/// Orthonormal factor of a seeded standard-Gaussian matrix (Householder QR,
/// columns flipped so the triangular factor has a positive diagonal).
Matrix random_orthonormal(std::size_t n, std::uint64_t seed);
QuadraticProblem make_quadratic(const Spectrum& spectrum, std::uint64_t seed);

/// Backwards differentiation formula constants.
///
/// `xi[i-1]` is the weight of x^{k+i}; the last entry multiplies the most
/// recent iterate. Exact rationals are kept next to their double conversions.
struct BdfScheme {
  int tau = 1;
  Rational xi_bar{1};
  std::vector<Rational> xi{Rational{1}};
  Rational delta_exact{0};

  double xi_bar_value = 1.0;
  std::vector<double> xi_values{1.0};
  double delta = 0.0;

  /// Sum of |xi_i|; 1 when all weights are nonnegative.
  double abs_weight_sum() const;
  bool has_negative_weight() const;
};

BdfScheme bdf_scheme(int tau);

/// (tau-1) sum_{j=1}^{tau-1} sum_{i=1}^{j} (tau-i) xi_i^2, exactly.
Rational delta_rational(const BdfScheme& scheme);
double delta(const BdfScheme& scheme);
/// Same sum with (tau-1-i) weights, the variant used by the inexact nonconvex bound.
Rational delta_shifted_rational(const BdfScheme& scheme);
double delta_shifted(const BdfScheme& scheme);

std::string to_string(const Rational& r);

void to_json(nlohmann::json& j, const BdfScheme& scheme);
void to_json(nlohmann::json& j, const Spectrum& spectrum);

}  // namespace bdflow
