#pragma once

#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "bdflow/integrators.hpp"
#include "bdflow/numcore.hpp"

namespace bdflow {

inline constexpr double kRateSlack = 1e-9;
// Absolute allowance, relative to the bound's constant, for round-off once a
// geometric bound falls below machine precision.
inline constexpr double kRateFloor = 1e-12;

struct RateCheckReport {
  std::string theorem;
  std::string variant;
  bool asserted = true;              // false when a hypothesis is unmet
  std::vector<std::string> unmet;
  std::vector<std::string> notes;

  double rate = 0.0;                 // per-block contraction (linear bounds)
  double c0 = 0.0, c1 = 0.0, c2 = 0.0;
  double delta = 0.0;
  double gamma = 0.0;
  double alpha = 0.0;
  double mu = 0.0;

  std::vector<long> k;
  std::vector<double> observed;
  std::vector<double> bound;
  long violations = 0;
  double max_violation_ratio = 0.0;  // max observed / bound over asserted points

  bool passed() const { return !asserted || violations == 0; }
};

/// Linear rate for mu-strongly convex f with exact solves. Nonnegative
/// coefficients give (1/(1+alpha mu))^{floor(n/tau)}; otherwise the factor
/// sum|xi_i|/(1+alpha mu) is used. Requires a trace with keep_iterates and
/// record_every = 1.
RateCheckReport check_strong_exact(const RunTrace& trace, double mu, double alpha, const BdfScheme& scheme,
                                   const Vector& x_star);

/// Same with a gamma-contractive inner solve: factor sum|xi_i| (gamma + (1+gamma)/(1+alpha mu)).
/// Asserted only when gamma < alpha mu / (2 + alpha mu) and the factor is at most 1.
RateCheckReport check_strong_approx(const RunTrace& trace, double mu, double alpha, const BdfScheme& scheme,
                                    double gamma, const Vector& x_star);

/// min_{s<=k} |grad f(x^{s+tau+1})|^2 <= C1/(alpha k) + C2 delta/(alpha^2 k) with
/// C1 = f(x^tau) - f_star and C2 = 2 sum_{s<tau} |x^{s+1} - x^s|^2.
RateCheckReport check_nonconvex_exact(const RunTrace& trace, double mu, double alpha, const BdfScheme& scheme,
                                      double f_star);

/// Inexact variant; gamma is measured against the previous iterate and delta uses the shifted weights.
RateCheckReport check_nonconvex_approx(const RunTrace& trace, double mu, double alpha, const BdfScheme& scheme,
                                       double gamma, double f_star);

/// Chained bound (sum xi)^{floor(n/tau)} max_{j<tau} a_j for a sequence with
/// a_n <= sum_i xi_i a_{n-tau-1+i}. Needs xi_i >= 0 and sum xi <= 1.
std::vector<double> sublinear_chain_bound(const std::vector<double>& a, const std::vector<double>& xi);

/// gamma = (1 - (alpha mu + 1)/(alpha L + 1))^m for m inner GD steps with beta = alpha/(alpha L + 1).
double inner_gd_gamma(double alpha, double mu, double L, int m);

void to_json(nlohmann::json& j, const RateCheckReport& report);

}  // namespace bdflow
