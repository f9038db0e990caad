#include "bdflow/integrators.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>

#include "bdflow/errors.hpp"

namespace bdflow {

namespace {

void require_nonnegative_step(double alpha, const char* what) {
  if (!(alpha >= 0.0) || !std::isfinite(alpha))
    throw InvalidArgument(std::string(what) + ": step size must be finite and nonnegative");
}

void require_finite(const Vector& v, const char* what) {
  if (!v.allFinite()) throw NumericalFailure(std::string(what) + ": nonfinite value");
}

// Forwards to another objective and counts gradient evaluations.
class CountingObjective final : public Objective {
 public:
  explicit CountingObjective(const Objective& base) : base_(base) {}

  std::size_t dimension() const override { return base_.dimension(); }
  double value(const Vector& x) const override { return base_.value(x); }
  Vector gradient(const Vector& x) const override {
    ++calls_;
    return base_.gradient(x);
  }
  std::optional<double> smoothness() const override { return base_.smoothness(); }
  std::optional<double> convexity() const override { return base_.convexity(); }
  const QuadraticProblem* quadratic() const override { return base_.quadratic(); }

  long calls() const { return calls_; }

 private:
  const Objective& base_;
  mutable long calls_ = 0;
};

}  // namespace

double InnerSolveSpec::resolve_beta(const Objective& f, double alpha) const {
  if (beta) {
    if (!(*beta > 0.0)) throw InvalidArgument("inner step beta must be positive");
    return *beta;
  }
  const auto L = f.smoothness();
  if (!L) throw InvalidArgument("auto inner step needs a declared smoothness constant L");
  return alpha / (alpha * *L + 1.0);
}

History::History(std::size_t tau) : slots_(tau) {
  if (tau == 0) throw InvalidArgument("history length must be positive");
}

void History::push(Vector x) {
  const std::size_t cap = slots_.size();
  if (size_ < cap) {
    slots_[(start_ + size_) % cap] = std::move(x);
    ++size_;
  } else {
    slots_[start_] = std::move(x);
    start_ = (start_ + 1) % cap;
  }
}

const Vector& History::operator[](std::size_t i) const {
  if (i >= size_) throw StateError("history index out of range");
  return slots_[(start_ + i) % slots_.size()];
}

const Vector& History::newest() const {
  if (size_ == 0) throw StateError("history is empty");
  return (*this)[size_ - 1];
}

Vector History::combine(std::span<const double> weights) const {
  if (!full()) throw StateError("history not full: multistep update needs tau iterates");
  if (weights.size() != slots_.size()) throw InvalidArgument("weight count must equal history length");
  Vector out = Vector::Zero((*this)[0].size());
  for (std::size_t i = 0; i < size_; ++i) out += weights[i] * (*this)[i];
  return out;
}

Vector gd_step(const Objective& f, const Vector& x, double alpha) {
  require_nonnegative_step(alpha, "gd_step");
  const Vector g = f.gradient(x);
  require_finite(g, "gd_step gradient");
  return x - alpha * g;
}

Vector rk4_step(const Objective& f, const Vector& x, double alpha) {
  require_nonnegative_step(alpha, "rk4_step");
  const Vector k1 = -f.gradient(x);
  require_finite(k1, "rk4_step stage 1");
  const Vector k2 = -f.gradient(x + 0.5 * alpha * k1);
  require_finite(k2, "rk4_step stage 2");
  const Vector k3 = -f.gradient(x + 0.5 * alpha * k2);
  require_finite(k3, "rk4_step stage 3");
  const Vector k4 = -f.gradient(x + alpha * k3);
  require_finite(k4, "rk4_step stage 4");
  return x + (alpha / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

Vector exact_prox_quadratic(const QuadraticProblem& q, const Vector& anchor, double alpha) {
  require_nonnegative_step(alpha, "exact_prox_quadratic");
  const Matrix& u = q.basis();
  const Vector shrink = (1.0 + alpha * q.eigenvalue_vector().array()).inverse().matrix();
  return u * shrink.cwiseProduct(u.transpose() * anchor);
}

Vector inner_gd_prox(const Objective& f, const Vector& anchor, double alpha,
                     const InnerSolveSpec& spec, const Vector& x0) {
  if (!(alpha > 0.0)) throw InvalidArgument("inner_gd_prox: alpha must be positive");
  if (spec.m < 0) throw InvalidArgument("inner_gd_prox: m must be nonnegative");
  if (spec.m == 0) return x0;
  const double beta = spec.resolve_beta(f, alpha);
  Vector x = x0;
  for (int i = 0; i < spec.m; ++i) {
    x -= beta * (f.gradient(x) + (x - anchor) / alpha);
    require_finite(x, "inner_gd_prox");
  }
  return x;
}

Vector reference_prox(const Objective& f, const Vector& anchor, double alpha,
                      std::optional<double> beta) {
  if (const auto* q = f.quadratic()) {
    return exact_prox_quadratic(*q, anchor, alpha);
  }
  if (!(alpha > 0.0)) throw InvalidArgument("reference_prox: alpha must be positive");
  InnerSolveSpec spec{0, beta, InnerMode::InnerGd};
  const double step = spec.resolve_beta(f, alpha);
  Vector x = anchor;
  for (int i = 0; i < kReferenceInnerSteps; ++i) {
    const Vector g = f.gradient(x) + (x - anchor) / alpha;
    if (g.norm() <= 1e-14 * std::max(1.0, x.norm())) break;
    x -= step * g;
    require_finite(x, "reference_prox");
  }
  return x;
}

Vector prox(const Objective& f, const Vector& anchor, double alpha, const InnerSolveSpec& spec) {
  switch (spec.mode) {
    case InnerMode::ExactQuadratic: {
      const auto* q = f.quadratic();
      if (q == nullptr) throw InvalidArgument("exact_quadratic inner mode needs a QuadraticProblem");
      return exact_prox_quadratic(*q, anchor, alpha);
    }
    case InnerMode::Reference:
      return reference_prox(f, anchor, alpha, spec.beta);
    case InnerMode::InnerGd:
      break;
  }
  return inner_gd_prox(f, anchor, alpha, spec, anchor);
}

Vector bdm_anchor(const History& hist, const BdfScheme& scheme) {
  if (hist.capacity() != static_cast<std::size_t>(scheme.tau))
    throw InvalidArgument("history length does not match the scheme order");
  return hist.combine(scheme.xi_values);
}

Vector bdm_step(const Objective& f, const History& hist, const BdfScheme& scheme,
                double alpha_bar, const InnerSolveSpec& spec) {
  if (!(alpha_bar > 0.0)) throw InvalidArgument("bdm_step: alpha_bar must be positive");
  const Vector anchor = bdm_anchor(hist, scheme);
  Vector x = prox(f, anchor, alpha_bar * scheme.xi_bar_value, spec);
  require_finite(x, "bdm_step");
  return x;
}

Vector normalize_gradient(const Vector& g, double eps) {
  const double n = g.norm();
  if (n == 0.0) return Vector::Zero(g.size());
  return g / (n + eps);
}

double measure_gamma(const Objective& f, const Vector& anchor, double alpha,
                     const InnerSolveSpec& spec) {
  const Vector p = reference_prox(f, anchor, alpha, spec.beta);
  const double denom = (p - anchor).norm();
  if (denom < 1e-14) return 0.0;
  const Vector approx = prox(f, anchor, alpha, spec);
  return (p - approx).norm() / denom;
}

double measure_gamma_displacement(const Objective& f, const Vector& anchor, const Vector& previous,
                                  double alpha, const InnerSolveSpec& spec) {
  const Vector p = reference_prox(f, anchor, alpha, spec.beta);
  const Vector approx = prox(f, anchor, alpha, spec);
  const double denom = (approx - previous).norm();
  if (denom < 1e-14) return 0.0;
  return (approx - p).norm() / denom;
}

std::string_view to_string(MethodKind kind) {
  switch (kind) {
    case MethodKind::Gd: return "gd";
    case MethodKind::Rk4: return "rk4";
    case MethodKind::Ppm: return "ppm";
    case MethodKind::Bdm: return "bdm";
  }
  return "gd";
}

MethodKind parse_method_kind(std::string_view name) {
  if (name == "gd") return MethodKind::Gd;
  if (name == "rk4" || name == "rk44") return MethodKind::Rk4;
  if (name == "ppm") return MethodKind::Ppm;
  if (name == "bdm") return MethodKind::Bdm;
  throw InvalidArgument("unknown method '" + std::string(name) + "'");
}

double MethodSpec::effective_alpha() const {
  if (kind == MethodKind::Bdm) return alpha_bar * bdf_scheme(tau).xi_bar_value;
  return alpha_bar;
}

long MethodSpec::gradient_cost() const {
  switch (kind) {
    case MethodKind::Gd: return 1;
    case MethodKind::Rk4: return 4;
    case MethodKind::Ppm:
    case MethodKind::Bdm:
      return inner.mode == InnerMode::InnerGd ? inner.m : 0;
  }
  return 0;
}

std::string MethodSpec::label() const {
  switch (kind) {
    case MethodKind::Gd: return "GD";
    case MethodKind::Rk4: return "RK44";
    case MethodKind::Ppm: return "PPM";
    case MethodKind::Bdm: return "BDM" + std::to_string(tau);
  }
  return "?";
}

namespace {

std::string_view to_string(InnerMode mode) {
  switch (mode) {
    case InnerMode::InnerGd: return "inner_gd";
    case InnerMode::ExactQuadratic: return "exact_quadratic";
    case InnerMode::Reference: return "reference";
  }
  return "inner_gd";
}

InnerMode parse_inner_mode(std::string_view name) {
  if (name == "inner_gd") return InnerMode::InnerGd;
  if (name == "exact_quadratic" || name == "exact") return InnerMode::ExactQuadratic;
  if (name == "reference") return InnerMode::Reference;
  throw InvalidArgument("unknown inner mode '" + std::string(name) + "'");
}

}  // namespace

void to_json(nlohmann::json& j, const MethodSpec& spec) {
  j = nlohmann::json{{"method", std::string(to_string(spec.kind))},
                     {"tau", spec.tau},
                     {"alpha_bar", spec.alpha_bar},
                     {"inner_m", spec.inner.m},
                     {"normalized", spec.normalized},
                     {"inner_mode", std::string(to_string(spec.inner.mode))}};
  if (spec.inner.beta) {
    j["inner_beta"] = *spec.inner.beta;
  } else {
    j["inner_beta"] = "auto";
  }
}

void from_json(const nlohmann::json& j, MethodSpec& spec) {
  static const std::vector<std::string> known = {"method",   "tau",        "alpha_bar", "inner_m",
                                                 "inner_beta", "normalized", "inner_mode"};
  for (const auto& [key, _] : j.items()) {
    if (std::find(known.begin(), known.end(), key) == known.end())
      throw InvalidArgument("unknown method key '" + key + "'");
  }
  MethodSpec out;
  out.kind = parse_method_kind(j.at("method").get<std::string>());
  out.tau = j.value("tau", out.kind == MethodKind::Bdm ? 2 : 1);
  out.alpha_bar = j.value("alpha_bar", out.alpha_bar);
  out.inner.m = j.value("inner_m", out.inner.m);
  out.normalized = j.value("normalized", false);
  if (j.contains("inner_mode")) out.inner.mode = parse_inner_mode(j.at("inner_mode").get<std::string>());
  if (j.contains("inner_beta")) {
    const auto& b = j.at("inner_beta");
    if (b.is_string()) {
      if (b.get<std::string>() != "auto") throw InvalidArgument("inner_beta must be a number or \"auto\"");
      out.inner.beta.reset();
    } else {
      out.inner.beta = b.get<double>();
    }
  }
  if (out.kind == MethodKind::Ppm) out.tau = 1;
  if (out.kind == MethodKind::Bdm) (void)bdf_scheme(out.tau);
  spec = out;
}

std::string_view to_string(Termination t) {
  switch (t) {
    case Termination::BudgetExhausted: return "budget";
    case Termination::IterationCap: return "iteration_cap";
    case Termination::Diverged: return "diverged";
    case Termination::NumericalFailure: return "numerical_failure";
  }
  return "budget";
}

double RunTrace::final_objective() const {
  if (reason == Termination::Diverged || reason == Termination::NumericalFailure || objective.empty())
    return std::numeric_limits<double>::infinity();
  return objective.back();
}

RunTrace run(const MethodSpec& method, const Objective& f, const Vector& x0, const RunOptions& options) {
  if (static_cast<std::size_t>(x0.size()) != f.dimension())
    throw InvalidArgument("run: initial point dimension does not match the objective");
  if (options.record_every < 1) throw InvalidArgument("run: record_every must be >= 1");

  const auto started = std::chrono::steady_clock::now();
  std::optional<NormalizedObjective> normalized;
  if (method.normalized) normalized.emplace(f, options.normalize_eps);
  const Objective& step_f = method.normalized ? static_cast<const Objective&>(*normalized) : f;
  CountingObjective counted(step_f);

  const long cost = method.gradient_cost();
  if (cost == 0 && !options.max_iterations)
    throw InvalidArgument("run: steps that cost no gradient calls need max_iterations");
  if (cost > 0 && options.budget < cost)
    throw InvalidArgument("run: budget is smaller than the cost of one step");

  const bool multistep = method.kind == MethodKind::Ppm || method.kind == MethodKind::Bdm;
  const BdfScheme scheme = bdf_scheme(method.kind == MethodKind::Bdm ? method.tau : 1);
  const double alpha = method.effective_alpha();

  RunTrace trace;
  auto record = [&](long iteration, const Vector& x) {
    trace.recorded_at.push_back(iteration);
    trace.objective.push_back(f.value(x));
    trace.gradient_norm.push_back(f.gradient(x).norm());
    if (options.keep_iterates) trace.iterates.push_back(x);
  };

  Vector x = x0;
  record(0, x);
  History hist(static_cast<std::size_t>(scheme.tau));
  hist.push(x);
  if (multistep && options.warmup == Warmup::RepeatInitial) {
    while (!hist.full()) hist.push(x);
  }

  try {
    while (true) {
      if (options.max_iterations && trace.iterations >= *options.max_iterations) {
        trace.reason = Termination::IterationCap;
        break;
      }
      if (cost > 0 && counted.calls() + cost > options.budget) {
        trace.reason = Termination::BudgetExhausted;
        break;
      }

      Vector next;
      switch (method.kind) {
        case MethodKind::Gd: next = gd_step(counted, x, alpha); break;
        case MethodKind::Rk4: next = rk4_step(counted, x, alpha); break;
        case MethodKind::Ppm:
        case MethodKind::Bdm: {
          // Warm-up: plain (approximate) PPM with the same alpha until tau iterates exist.
          const Vector anchor = hist.full() ? bdm_anchor(hist, scheme) : hist.newest();
          next = prox(counted, anchor, alpha, method.inner);
          if (options.measure_gamma) {
            const Vector p = reference_prox(step_f, anchor, alpha, method.inner.beta);
            const double err = (next - p).norm();
            const double to_anchor = (p - anchor).norm();
            const double moved = (next - x).norm();
            trace.gamma_anchor.push_back(to_anchor < 1e-14 ? 0.0 : err / to_anchor);
            trace.gamma_displacement.push_back(moved < 1e-14 ? 0.0 : err / moved);
          }
          break;
        }
      }
      ++trace.iterations;
      x = std::move(next);
      if (multistep) hist.push(x);

      if (!x.allFinite() || x.norm() > options.divergence_norm) {
        trace.reason = Termination::Diverged;
        trace.message = "iterate left the finite region at iteration " + std::to_string(trace.iterations);
        break;
      }
      if (trace.iterations % options.record_every == 0) {
        record(trace.iterations, x);
        if (!std::isfinite(trace.objective.back())) {
          trace.reason = Termination::Diverged;
          trace.message = "nonfinite objective";
          break;
        }
      }
    }
  } catch (const NumericalFailure& e) {
    const bool overflow = !x.allFinite() || x.norm() > options.divergence_norm;
    trace.reason = overflow ? Termination::Diverged : Termination::NumericalFailure;
    trace.message = e.what();
  }

  if (trace.recorded_at.back() != trace.iterations && x.allFinite()) record(trace.iterations, x);
  trace.gradient_calls = counted.calls();
  trace.final_iterate = x;
  trace.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return trace;
}

}  // namespace bdflow
