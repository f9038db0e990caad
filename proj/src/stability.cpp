#include "bdflow/stability.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include <Eigen/SVD>

#include "bdflow/errors.hpp"
#include "bdflow/report_io.hpp"

namespace bdflow {

namespace {

constexpr double kStableThreshold = 1.0 + 1e-12;

void require_nonnegative(double v, const char* what) {
  if (!(v >= 0.0)) throw InvalidArgument(std::string(what) + " must be nonnegative");
}

void require_inner(double alpha, double beta, int m) {
  if (!(alpha > 0.0)) throw InvalidArgument("alpha must be positive");
  if (!(beta > 0.0)) throw InvalidArgument("beta must be positive");
  if (m < 1) throw InvalidArgument("m must be at least 1");
}

double finite_or_inf(double v) { return std::isnan(v) ? std::numeric_limits<double>::infinity() : v; }

std::vector<double> scan_grid(double lo, double hi, int count) {
  std::vector<double> g(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) {
    const double t = count == 1 ? 0.0 : static_cast<double>(i) / (count - 1);
    g[static_cast<std::size_t>(i)] = lo > 0.0 ? lo * std::pow(hi / lo, t) : lo + (hi - lo) * t;
  }
  return g;
}

}  // namespace

double rho_gd(double alpha, const Spectrum& s) {
  require_nonnegative(alpha, "alpha");
  double r = 0.0;
  for (double d : s.values()) r = std::max(r, std::abs(1.0 - alpha * d));
  return r;
}

double rk4_polynomial(double z) { return 1.0 - z + z * z / 2.0 - z * z * z / 6.0 + z * z * z * z / 24.0; }

double rho_rk4(double alpha, const Spectrum& s) {
  require_nonnegative(alpha, "alpha");
  double r = 0.0;
  for (double d : s.values()) r = std::max(r, std::abs(rk4_polynomial(alpha * d)));
  return r;
}

double rho_ppm_exact(double alpha, const Spectrum& s) {
  require_nonnegative(alpha, "alpha");
  return 1.0 / (1.0 + alpha * s.mu());
}

InnerFactors inner_factors(double alpha, double beta, int m, double lambda) {
  require_inner(alpha, beta, m);
  const double a0 = 1.0 - beta / alpha - beta * lambda;
  double power = 1.0, sum = 0.0;
  for (int j = 0; j < m; ++j) {
    sum += power;
    power *= a0;
  }
  return {power, beta / alpha * sum};
}

double rho_appm(double alpha, double beta, int m, const Spectrum& s) {
  double r = 0.0;
  for (double d : s.values()) {
    const auto f = inner_factors(alpha, beta, m, d);
    r = std::max(r, finite_or_inf(std::abs(f.a + f.b)));
  }
  return r;
}

std::vector<Complex> CompanionBlock::characteristic() const {
  const std::size_t tau = xi.size();
  std::vector<Complex> c(tau + 1);
  c[0] = 1.0;
  c[1] = -(a + xi[tau - 1] * b);
  for (std::size_t k = 2; k <= tau; ++k) c[k] = -xi[tau - k] * b;
  return c;
}

Matrix CompanionBlock::dense() const {
  const auto tau = static_cast<Eigen::Index>(xi.size());
  Matrix M = Matrix::Zero(tau, tau);
  M(0, 0) = a + xi.back() * b;
  for (Eigen::Index k = 1; k < tau; ++k) M(0, k) = xi[static_cast<std::size_t>(tau - 1 - k)] * b;
  for (Eigen::Index k = 1; k < tau; ++k) M(k, k - 1) = 1.0;
  return M;
}

double CompanionBlock::spectral_radius() const {
  if (xi.empty()) throw InvalidArgument("companion block needs at least one coefficient");
  if (!std::isfinite(a) || !std::isfinite(b)) return std::numeric_limits<double>::infinity();
  if (xi.size() == 1) return std::abs(a + xi[0] * b);
  double r = 0.0;
  for (const Complex& z : poly_roots(characteristic())) r = std::max(r, std::abs(z));
  return r;
}

double rho_bdm(double alpha_bar, double beta, int m, const BdfScheme& scheme, const Spectrum& s) {
  if (!(alpha_bar > 0.0)) throw InvalidArgument("alpha_bar must be positive");
  const double alpha = alpha_bar * scheme.xi_bar_value;
  double r = 0.0;
  for (double d : s.values()) {
    const auto f = inner_factors(alpha, beta, m, d);
    CompanionBlock block{f.a, f.b, scheme.xi_values};
    r = std::max(r, block.spectral_radius());
  }
  return r;
}

StabilityLimit stability_limit(const RhoFunction& rho, double lo, double hi, int scan_points) {
  if (!(hi > lo) || lo < 0.0) throw InvalidArgument("stability_limit: need 0 <= lo < hi");
  if (scan_points < 2) throw InvalidArgument("stability_limit: need at least two scan points");
  const auto grid = scan_grid(lo, hi, scan_points);
  auto stable = [&](double step) { return finite_or_inf(rho(step)) <= kStableThreshold; };

  std::size_t i = 0;
  while (i < grid.size() && !stable(grid[i])) ++i;
  if (i == grid.size()) return {};
  std::size_t j = i + 1;
  while (j < grid.size() && stable(grid[j])) ++j;
  if (j == grid.size()) return {hi, true, true};

  double good = grid[j - 1], bad = grid[j];
  for (int it = 0; it < 200 && bad - good > 1e-13 * bad; ++it) {
    const double mid = 0.5 * (good + bad);
    (stable(mid) ? good : bad) = mid;
  }
  return {good, true, false};
}

Optimum optimal_step(const RhoFunction& rho, double lo, double hi, int grid_points) {
  if (!(hi > lo) || lo < 0.0) throw InvalidArgument("optimal_step: need 0 <= lo < hi");
  if (grid_points < 3) throw InvalidArgument("optimal_step: need at least three grid points");
  const auto grid = scan_grid(lo, hi, grid_points);
  std::size_t best = 0;
  double best_rho = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const double r = finite_or_inf(rho(grid[i]));
    if (r < best_rho) {
      best_rho = r;
      best = i;
    }
  }
  double a = grid[best == 0 ? 0 : best - 1];
  double b = grid[std::min(best + 1, grid.size() - 1)];
  const double phi = (std::sqrt(5.0) - 1.0) / 2.0;
  double c = b - phi * (b - a), d = a + phi * (b - a);
  double fc = finite_or_inf(rho(c)), fd = finite_or_inf(rho(d));
  for (int it = 0; it < 200 && b - a > 1e-14 * std::max(1.0, b); ++it) {
    if (fc < fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - phi * (b - a);
      fc = finite_or_inf(rho(c));
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + phi * (b - a);
      fd = finite_or_inf(rho(d));
    }
  }
  Optimum out{grid[best], best_rho};
  if (fc < out.rho) out = {c, fc};
  if (fd < out.rho) out = {d, fd};
  return out;
}

Matrix block_companion(double alpha_bar, double beta, int m, const BdfScheme& scheme, const QuadraticProblem& q) {
  const double alpha = alpha_bar * scheme.xi_bar_value;
  require_inner(alpha, beta, m);
  const auto n = static_cast<Eigen::Index>(q.dimension());
  const auto tau = static_cast<Eigen::Index>(scheme.tau);
  const Matrix I = Matrix::Identity(n, n);
  const Matrix A = (1.0 - beta / alpha) * I - beta * q.dense();
  Matrix power = I, sum = Matrix::Zero(n, n);
  for (int j = 0; j < m; ++j) {
    sum += power;
    power = A * power;
  }
  const Matrix B = (beta / alpha) * sum;

  Matrix M = Matrix::Zero(tau * n, tau * n);
  M.block(0, 0, n, n) = power + scheme.xi_values.back() * B;
  for (Eigen::Index k = 1; k < tau; ++k)
    M.block(0, k * n, n, n) = scheme.xi_values[static_cast<std::size_t>(tau - 1 - k)] * B;
  for (Eigen::Index k = 1; k < tau; ++k) M.block(k * n, (k - 1) * n, n, n) = I;
  return M;
}

double gelfand_radius(const Matrix& M, int k) {
  if (k < 1) throw InvalidArgument("gelfand_radius: k must be positive");
  if (M.rows() != M.cols() || M.rows() == 0) throw InvalidArgument("gelfand_radius: square matrix required");
  Matrix P = M;
  double log_scale = 0.0;
  for (int i = 1; i <= k; ++i) {
    if (i > 1) P = M * P;
    const double s = P.norm();
    if (s == 0.0) return 0.0;
    if (!std::isfinite(s)) throw NumericalFailure("gelfand_radius: overflow despite rescaling");
    P /= s;
    log_scale += std::log(s);
  }
  Eigen::JacobiSVD<Matrix> svd(P);
  const double top = svd.singularValues()(0);
  if (!(top > 0.0) || !std::isfinite(top)) throw NumericalFailure("gelfand_radius: degenerate power");
  return std::exp((log_scale + std::log(top)) / k);
}

double gelfand_estimate(double alpha_bar, double beta, int m, const BdfScheme& scheme, const Spectrum& s, int k,
                        std::uint64_t seed) {
  if (s.size() > 20) throw InvalidArgument("gelfand_estimate: dense route limited to n <= 20");
  const QuadraticProblem q = make_quadratic(s, seed);
  return gelfand_radius(block_companion(alpha_bar, beta, m, scheme, q), k);
}

std::string_view to_string(RhoKind kind) {
  switch (kind) {
    case RhoKind::Gd: return "gd";
    case RhoKind::Rk4: return "rk4";
    case RhoKind::PpmExact: return "ppm_exact";
    case RhoKind::Appm: return "ppm";
    case RhoKind::Bdm: return "bdm";
  }
  return "gd";
}

RhoKind parse_rho_kind(std::string_view name) {
  if (name == "gd") return RhoKind::Gd;
  if (name == "rk4" || name == "rk44") return RhoKind::Rk4;
  if (name == "ppm_exact") return RhoKind::PpmExact;
  if (name == "ppm" || name == "appm") return RhoKind::Appm;
  if (name == "bdm") return RhoKind::Bdm;
  throw InvalidArgument("unknown stability method '" + std::string(name) + "'");
}

double RhoMethod::rho(double step, const Spectrum& s) const {
  switch (kind) {
    case RhoKind::Gd: return rho_gd(step, s);
    case RhoKind::Rk4: return rho_rk4(step, s);
    case RhoKind::PpmExact: return rho_ppm_exact(step, s);
    case RhoKind::Appm: return rho_appm(alpha_bar, step, m, s);
    case RhoKind::Bdm: return rho_bdm(alpha_bar, step, m, bdf_scheme(tau), s);
  }
  return 0.0;
}

RhoFunction RhoMethod::bind(const Spectrum& s) const {
  if (kind == RhoKind::Bdm) {
    const BdfScheme scheme = bdf_scheme(tau);
    const double ab = alpha_bar;
    const int mm = m;
    return [scheme, ab, mm, s](double beta) { return rho_bdm(ab, beta, mm, scheme, s); };
  }
  const RhoMethod self = *this;
  return [self, s](double step) { return self.rho(step, s); };
}

std::string RhoMethod::label() const {
  switch (kind) {
    case RhoKind::Gd: return "GD";
    case RhoKind::Rk4: return "RK44";
    case RhoKind::PpmExact: return "PPM-exact";
    case RhoKind::Appm: return "PPM";
    case RhoKind::Bdm: return "BDM" + std::to_string(tau);
  }
  return "?";
}

StabilityReport stability_report(const RhoMethod& method, const Spectrum& s, double lo, double hi, int count) {
  if (count < 2) throw InvalidArgument("grid count must be at least 2");
  if (!(lo > 0.0) || !(hi > lo)) throw InvalidArgument("grid bounds must satisfy 0 < lo < hi");
  StabilityReport report;
  report.method = method;
  report.spectrum = s.values();
  const RhoFunction f = method.bind(s);
  report.grid = scan_grid(lo, hi, count);
  report.rho.reserve(report.grid.size());
  for (double step : report.grid) report.rho.push_back(f(step));
  report.limit = stability_limit(f, lo, hi);
  report.optimum = optimal_step(f, lo, hi);
  return report;
}

namespace {

double effective_alpha(const RhoMethod& m) {
  return m.kind == RhoKind::Bdm ? m.alpha_bar * bdf_scheme(m.tau).xi_bar_value : m.alpha_bar;
}

}  // namespace

std::string to_csv(const StabilityReport& report) {
  std::ostringstream o;
  o << "method,tau,m,alpha,beta,rho\n";
  const auto& mt = report.method;
  for (std::size_t i = 0; i < report.grid.size(); ++i) {
    o << mt.label() << ',' << mt.tau << ',';
    if (mt.steps_beta()) {
      o << mt.m << ',' << format_double(effective_alpha(mt)) << ',' << format_double(report.grid[i]);
    } else {
      o << ",," << format_double(report.grid[i]);
    }
    o << ',' << format_double(report.rho[i]) << '\n';
  }
  return o.str();
}

void to_json(nlohmann::json& j, const StabilityReport& report) {
  const auto& mt = report.method;
  j = nlohmann::json{{"method", mt.label()},
                     {"kind", std::string(to_string(mt.kind))},
                     {"tau", mt.tau},
                     {"step_parameter", mt.steps_beta() ? "beta" : "alpha"},
                     {"spectrum", report.spectrum},
                     {"stability_limit", report.limit.step},
                     {"limit_found", report.limit.found},
                     {"limit_at_range_end", report.limit.at_upper},
                     {"optimal_step", report.optimum.step},
                     {"optimal_rho", report.optimum.rho}};
  if (mt.steps_beta()) {
    j["m"] = mt.m;
    j["alpha_bar"] = mt.alpha_bar;
    j["alpha"] = effective_alpha(mt);
  }
}

}  // namespace bdflow
