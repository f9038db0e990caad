#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "bdflow/numcore.hpp"
#include "bdflow/poly_roots.hpp"

namespace bdflow {

/// max_i |1 - alpha d_i|
double rho_gd(double alpha, const Spectrum& s);
/// 1 - z + z^2/2 - z^3/6 + z^4/24
double rk4_polynomial(double z);
double rho_rk4(double alpha, const Spectrum& s);
/// max_i 1 / (1 + alpha d_i)
double rho_ppm_exact(double alpha, const Spectrum& s);

/// Scalar action of m inner GD steps on one eigendirection:
/// a = a0^m, b = (beta/alpha) sum_{j<m} a0^j with a0 = 1 - beta/alpha - beta lambda.
struct InnerFactors {
  double a = 0.0;
  double b = 0.0;
};
InnerFactors inner_factors(double alpha, double beta, int m, double lambda);

double rho_appm(double alpha, double beta, int m, const Spectrum& s);

/// Per-eigenvalue reduction of the block companion matrix.
struct CompanionBlock {
  double a = 0.0;
  double b = 0.0;
  std::vector<double> xi;  // oldest first

  /// z^tau - (a + xi_tau b) z^{tau-1} - xi_{tau-1} b z^{tau-2} - ... - xi_1 b
  std::vector<Complex> characteristic() const;
  /// Dense tau x tau companion in the (newest ... oldest) state ordering.
  Matrix dense() const;
  double spectral_radius() const;
};

/// Spectral radius of the tau-BDM iteration matrix with alpha = alpha_bar * xi_bar.
double rho_bdm(double alpha_bar, double beta, int m, const BdfScheme& scheme, const Spectrum& s);

using RhoFunction = std::function<double(double)>;

struct StabilityLimit {
  double step = 0.0;
  bool found = false;      // false when rho > 1 on the whole scan
  bool at_upper = false;   // true when rho <= 1 up to the top of the range
};

/// Largest step of the first contiguous rho <= 1 interval found by a forward
/// scan (geometric when lo > 0), refined by bisection.
StabilityLimit stability_limit(const RhoFunction& rho, double lo, double hi, int scan_points = 2000);

struct Optimum {
  double step = 0.0;
  double rho = 0.0;
};

/// 1000-point scan followed by golden-section refinement around the best cell.
Optimum optimal_step(const RhoFunction& rho, double lo, double hi, int grid_points = 1000);

/// Dense block companion (tau n x tau n) of the tau-BDM iteration on q.
Matrix block_companion(double alpha_bar, double beta, int m, const BdfScheme& scheme, const QuadraticProblem& q);
/// |M^k|_2^{1/k}, accumulated with rescaling.
double gelfand_radius(const Matrix& M, int k);
/// gelfand_radius of the block companion built on a seeded quadratic with spectrum s (n <= 20).
double gelfand_estimate(double alpha_bar, double beta, int m, const BdfScheme& scheme, const Spectrum& s, int k,
                        std::uint64_t seed = 0);

enum class RhoKind { Gd, Rk4, PpmExact, Appm, Bdm };

std::string_view to_string(RhoKind kind);
RhoKind parse_rho_kind(std::string_view name);

/// A method whose radius is a function of one step parameter: alpha for the
/// explicit methods and exact PPM, the inner step beta for APPM and BDM.
struct RhoMethod {
  RhoKind kind = RhoKind::Gd;
  int tau = 1;
  int m = 4;
  double alpha_bar = 1.0;

  bool steps_beta() const { return kind == RhoKind::Appm || kind == RhoKind::Bdm; }
  double rho(double step, const Spectrum& s) const;
  RhoFunction bind(const Spectrum& s) const;
  std::string label() const;
};

struct StabilityReport {
  RhoMethod method;
  std::vector<double> spectrum;
  std::vector<double> grid;
  std::vector<double> rho;
  StabilityLimit limit;
  Optimum optimum;
};

/// Evaluates rho on a geometric grid over [lo, hi] and searches limit and optimum on the same range.
StabilityReport stability_report(const RhoMethod& method, const Spectrum& s, double lo, double hi, int count);

/// Columns method,tau,m,alpha,beta,rho; one row per grid point.
std::string to_csv(const StabilityReport& report);
void to_json(nlohmann::json& j, const StabilityReport& report);

}  // namespace bdflow
