#include "bdflow/theorems.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "bdflow/errors.hpp"

namespace bdflow {

namespace {

void require_trace(const RunTrace& trace) {
  if (trace.iterates.empty()) throw InvalidArgument("rate check needs recorded iterates (keep_iterates)");
  if (trace.iterates.size() != trace.recorded_at.size())
    throw InvalidArgument("rate check needs iterates aligned with recorded metrics");
  for (std::size_t i = 0; i < trace.recorded_at.size(); ++i) {
    if (trace.recorded_at[i] != static_cast<long>(i))
      throw InvalidArgument("rate check needs every iterate recorded (record_every = 1)");
  }
}

void assess(RateCheckReport& r, double scale) {
  const double floor = kRateFloor * std::max(scale, 1e-300);
  r.violations = 0;
  r.max_violation_ratio = 0.0;
  for (std::size_t i = 0; i < r.observed.size(); ++i) {
    const double obs = r.observed[i], b = r.bound[i];
    if (b > 0.0) r.max_violation_ratio = std::max(r.max_violation_ratio, obs / b);
    if (!r.asserted) continue;
    if (!(obs <= b * (1.0 + kRateSlack) + floor)) ++r.violations;
  }
}

RateCheckReport strong_check(const RunTrace& trace, double mu, double alpha, const BdfScheme& scheme, double gamma,
                             const Vector& x_star, bool approximate) {
  if (!(mu > 0.0)) throw InvalidArgument("strong convexity check needs mu > 0");
  if (!(alpha > 0.0)) throw InvalidArgument("step alpha must be positive");
  if (!(gamma >= 0.0) || gamma >= 1.0) throw InvalidArgument("gamma must lie in [0, 1)");
  require_trace(trace);

  RateCheckReport r;
  r.theorem = approximate ? "strong_approx" : "strong_exact";
  r.alpha = alpha;
  r.mu = mu;
  r.gamma = gamma;
  r.delta = scheme.delta;
  const double weight = scheme.abs_weight_sum();
  const double ppm = 1.0 / (1.0 + alpha * mu);
  r.variant = scheme.has_negative_weight() ? "abs_xi" : "nonnegative_xi";
  r.rate = weight * (approximate ? gamma + (1.0 + gamma) * ppm : ppm);

  if (approximate) {
    const double threshold = alpha * mu / (2.0 + alpha * mu);
    r.notes.push_back("gate gamma < alpha mu / (2 + alpha mu), i.e. alpha > 2 gamma / (mu (1 - gamma))");
    if (!(gamma < threshold)) {
      r.asserted = false;
      r.unmet.push_back("gamma >= alpha mu / (2 + alpha mu)");
    }
  }
  if (r.rate > 1.0) {
    r.asserted = false;
    r.unmet.push_back(scheme.has_negative_weight() ? "sum|xi| contraction factor exceeds 1"
                                                    : "contraction factor exceeds 1");
  }
  if (trace.reason == Termination::Diverged || trace.reason == Termination::NumericalFailure)
    r.notes.push_back("trace ended early: " + std::string(to_string(trace.reason)));

  const auto tau = static_cast<std::size_t>(scheme.tau);
  const std::size_t count = trace.iterates.size();
  for (std::size_t j = 0; j < std::min(tau, count); ++j) r.c0 = std::max(r.c0, (trace.iterates[j] - x_star).norm());
  for (std::size_t n = 0; n < count; ++n) {
    r.k.push_back(static_cast<long>(n));
    r.observed.push_back((trace.iterates[n] - x_star).norm());
    const double blocks = std::floor(static_cast<double>(n) / static_cast<double>(tau));
    r.bound.push_back(n < tau ? r.c0 : r.c0 * std::pow(r.rate, blocks));
  }
  assess(r, r.c0);
  return r;
}

RateCheckReport nonconvex_check(const RunTrace& trace, double mu, double alpha, const BdfScheme& scheme, double gamma,
                                double f_star, bool approximate) {
  if (mu > 0.0) throw InvalidArgument("nonconvex check expects mu <= 0");
  if (!(alpha > 0.0)) throw InvalidArgument("step alpha must be positive");
  if (!(gamma >= 0.0) || gamma >= 1.0) throw InvalidArgument("gamma must lie in [0, 1)");
  require_trace(trace);

  RateCheckReport r;
  r.theorem = approximate ? "nonconvex_approx" : "nonconvex_exact";
  r.variant = approximate ? "gamma_vs_previous_iterate" : "exact";
  r.alpha = alpha;
  r.mu = mu;
  r.gamma = gamma;
  const int tau = scheme.tau;
  r.delta = approximate ? delta_shifted(scheme) : scheme.delta;
  const double am = std::abs(mu);

  if (tau > 1) {
    const double cap = approximate ? 1.0 / (2.0 * tau - 2.0) : 1.0 / (tau - 1.0);
    if (!(r.delta < cap)) {
      r.asserted = false;
      r.unmet.push_back(approximate ? "delta >= 1/(2 tau - 2)" : "delta >= 1/(tau - 1)");
    }
  }
  const double numer = 2.0 - 2.0 * (tau - 1) * r.delta - (approximate ? 16.0 * gamma * gamma : 0.0);
  if (am > 0.0) {
    double limit = numer / am;
    if (approximate) limit = std::min(limit, 1.0 / am);
    if (!(alpha < limit)) {
      r.asserted = false;
      r.unmet.push_back("alpha above the admissible window");
    }
  } else if (approximate && !(numer > 0.0)) {
    r.asserted = false;
    r.unmet.push_back("2 - 2(tau-1) delta - 16 gamma^2 <= 0");
  }
  if (approximate && scheme.has_negative_weight()) r.notes.push_back("scheme has negative coefficients");

  const auto t = static_cast<std::size_t>(tau);
  const std::size_t count = trace.iterates.size();
  if (count <= t + 1) {
    r.notes.push_back("trace too short for any k >= 1");
    return r;
  }
  r.c1 = trace.objective[t] - f_star;
  if (r.c1 < 0.0) r.notes.push_back("f_star exceeds f(x^tau)");
  for (std::size_t s = 0; s < t; ++s) r.c2 += (trace.iterates[s + 1] - trace.iterates[s]).squaredNorm();
  r.c2 *= 2.0;

  double running = std::numeric_limits<double>::infinity();
  for (std::size_t idx = t + 1; idx < count; ++idx) {
    const double g = trace.gradient_norm[idx];
    running = std::min(running, g * g);
    const long k = static_cast<long>(idx - t - 1);
    if (k == 0) continue;
    r.k.push_back(k);
    r.observed.push_back(running);
    r.bound.push_back(r.c1 / (alpha * k) + r.c2 * r.delta / (alpha * alpha * k));
  }
  const double g0 = trace.gradient_norm.front();
  assess(r, 1.0 + g0 * g0 + std::abs(r.c1) / alpha);
  return r;
}

}  // namespace

RateCheckReport check_strong_exact(const RunTrace& trace, double mu, double alpha, const BdfScheme& scheme,
                                   const Vector& x_star) {
  return strong_check(trace, mu, alpha, scheme, 0.0, x_star, false);
}

RateCheckReport check_strong_approx(const RunTrace& trace, double mu, double alpha, const BdfScheme& scheme,
                                    double gamma, const Vector& x_star) {
  return strong_check(trace, mu, alpha, scheme, gamma, x_star, true);
}

RateCheckReport check_nonconvex_exact(const RunTrace& trace, double mu, double alpha, const BdfScheme& scheme,
                                      double f_star) {
  return nonconvex_check(trace, mu, alpha, scheme, 0.0, f_star, false);
}

RateCheckReport check_nonconvex_approx(const RunTrace& trace, double mu, double alpha, const BdfScheme& scheme,
                                       double gamma, double f_star) {
  return nonconvex_check(trace, mu, alpha, scheme, gamma, f_star, true);
}

std::vector<double> sublinear_chain_bound(const std::vector<double>& a, const std::vector<double>& xi) {
  if (xi.empty()) throw InvalidArgument("chain bound needs coefficients");
  const std::size_t tau = xi.size();
  double sum = 0.0;
  for (double v : xi) {
    if (v < 0.0) throw InvalidArgument("chain bound needs nonnegative coefficients");
    sum += v;
  }
  if (sum > 1.0 + 1e-12) throw InvalidArgument("chain bound needs sum of coefficients <= 1");
  if (a.size() < tau) throw InvalidArgument("sequence shorter than tau");

  for (std::size_t n = tau; n < a.size(); ++n) {
    double rhs = 0.0;
    for (std::size_t i = 0; i < tau; ++i) rhs += xi[i] * a[n - tau + i];
    if (a[n] > rhs + 1e-12 * std::max(1.0, std::abs(rhs)))
      throw InvalidArgument("sequence violates the recurrence at n = " + std::to_string(n));
  }

  double c0 = 0.0;
  for (std::size_t j = 0; j < tau; ++j) c0 = std::max(c0, a[j]);
  std::vector<double> bound(a.size());
  for (std::size_t n = 0; n < a.size(); ++n) {
    bound[n] = c0 * std::pow(sum, std::floor(static_cast<double>(n) / static_cast<double>(tau)));
    if (a[n] > bound[n] * (1.0 + kRateSlack) + kRateFloor * c0)
      throw NumericalFailure("chained bound violated at n = " + std::to_string(n));
  }
  return bound;
}

double inner_gd_gamma(double alpha, double mu, double L, int m) {
  if (!(alpha > 0.0) || m < 0) throw InvalidArgument("inner_gd_gamma: alpha > 0 and m >= 0 required");
  return std::pow(1.0 - (alpha * mu + 1.0) / (alpha * L + 1.0), m);
}

void to_json(nlohmann::json& j, const RateCheckReport& r) {
  j = nlohmann::json{{"theorem", r.theorem},
                     {"variant", r.variant},
                     {"asserted", r.asserted},
                     {"passed", r.passed()},
                     {"unmet", r.unmet},
                     {"notes", r.notes},
                     {"rate", r.rate},
                     {"c0", r.c0},
                     {"c1", r.c1},
                     {"c2", r.c2},
                     {"delta", r.delta},
                     {"gamma", r.gamma},
                     {"alpha", r.alpha},
                     {"mu", r.mu},
                     {"points", r.observed.size()},
                     {"violations", r.violations},
                     {"max_violation_ratio", r.max_violation_ratio}};
}

}  // namespace bdflow
