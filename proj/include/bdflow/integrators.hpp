#pragma once

#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "bdflow/numcore.hpp"

namespace bdflow {

// How the proximal subproblem argmin f(x) + |x - v|^2 / (2 alpha) is solved.
//  - InnerGd: m gradient steps of size beta on the subproblem.
//  - ExactQuadratic: closed form U (I + alpha D)^{-1} U^T v, quadratics only.
//  - Reference: long inner GD (up to 1e4 steps, stops at a stationary point);
//    the high-accuracy oracle used for non-quadratic objectives.
enum class InnerMode { InnerGd, ExactQuadratic, Reference };

struct InnerSolveSpec {
  int m = 8;
  std::optional<double> beta;  // nullopt means auto: alpha / (alpha L + 1)
  InnerMode mode = InnerMode::InnerGd;

  /// Resolved inner step. Auto requires a declared smoothness constant.
  double resolve_beta(const Objective& f, double alpha) const;
};

inline constexpr int kReferenceInnerSteps = 10000;

/// The tau most recent iterates, oldest first.
class History {
 public:
  explicit History(std::size_t tau);

  void push(Vector x);
  bool full() const { return size_ == slots_.size(); }
  std::size_t size() const { return size_; }
  std::size_t capacity() const { return slots_.size(); }
  /// i = 0 is the oldest stored iterate.
  const Vector& operator[](std::size_t i) const;
  const Vector& newest() const;
  /// sum_i weights[i] * (*this)[i]; requires a full history.
  Vector combine(std::span<const double> weights) const;

 private:
  std::vector<Vector> slots_;
  std::size_t start_ = 0;
  std::size_t size_ = 0;
};

Vector gd_step(const Objective& f, const Vector& x, double alpha);
Vector rk4_step(const Objective& f, const Vector& x, double alpha);
Vector exact_prox_quadratic(const QuadraticProblem& q, const Vector& anchor, double alpha);
/// m steps of GD on f(x) + |x - anchor|^2 / (2 alpha), starting at x0.
Vector inner_gd_prox(const Objective& f, const Vector& anchor, double alpha,
                     const InnerSolveSpec& spec, const Vector& x0);
/// prox_{alpha f}(anchor) according to spec.mode; inner GD is warm-started at the anchor.
Vector prox(const Objective& f, const Vector& anchor, double alpha, const InnerSolveSpec& spec);
/// High-accuracy prox: exact for quadratics, Reference mode otherwise.
Vector reference_prox(const Objective& f, const Vector& anchor, double alpha,
                      std::optional<double> beta = std::nullopt);

/// sum_i xi_i x^{k+i} over a full history.
Vector bdm_anchor(const History& hist, const BdfScheme& scheme);
/// One tau-BDM update with effective prox step alpha = alpha_bar * xi_bar.
Vector bdm_step(const Objective& f, const History& hist, const BdfScheme& scheme,
                double alpha_bar, const InnerSolveSpec& spec);

inline constexpr double kDefaultNormalizeEps = 1e-12;

/// g / (|g| + eps); zero maps to zero.
Vector normalize_gradient(const Vector& g, double eps = kDefaultNormalizeEps);

/// Gradient-norm flow view of an objective: same value, gradient replaced by
/// normalize_gradient(grad f). Every stepper applied to it follows the
/// normalized dynamics.
class NormalizedObjective final : public Objective {
 public:
  explicit NormalizedObjective(const Objective& base, double eps = kDefaultNormalizeEps)
      : base_(base), eps_(eps) {}

  std::size_t dimension() const override { return base_.dimension(); }
  double value(const Vector& x) const override { return base_.value(x); }
  Vector gradient(const Vector& x) const override {
    return normalize_gradient(base_.gradient(x), eps_);
  }
  std::optional<double> smoothness() const override { return base_.smoothness(); }
  std::optional<double> convexity() const override { return base_.convexity(); }

 private:
  const Objective& base_;
  double eps_;
};

/// Empirical contraction |prox(anchor) - x~| / |prox(anchor) - anchor| of the
/// solver described by spec; 0 when the denominator is below 1e-14.
double measure_gamma(const Objective& f, const Vector& anchor, double alpha,
                     const InnerSolveSpec& spec);
/// Contraction measured against the previous iterate instead of the anchor:
/// |x~ - prox(anchor)| / |x~ - previous|.
double measure_gamma_displacement(const Objective& f, const Vector& anchor, const Vector& previous,
                                  double alpha, const InnerSolveSpec& spec);

enum class MethodKind { Gd, Rk4, Ppm, Bdm };

std::string_view to_string(MethodKind kind);
MethodKind parse_method_kind(std::string_view name);

struct MethodSpec {
  MethodKind kind = MethodKind::Gd;
  int tau = 1;
  double alpha_bar = 0.1;
  InnerSolveSpec inner{};
  bool normalized = false;

  /// Step used by the update: alpha_bar for GD/RK4/PPM, alpha_bar * xi_bar for BDM.
  double effective_alpha() const;
  /// Gradient calls per outer iteration.
  long gradient_cost() const;
  /// Short name such as "GD", "RK44", "PPM", "BDM2".
  std::string label() const;
};

void to_json(nlohmann::json& j, const MethodSpec& spec);
void from_json(const nlohmann::json& j, MethodSpec& spec);

enum class Termination { BudgetExhausted, IterationCap, Diverged, NumericalFailure };
std::string_view to_string(Termination t);

// How x^1 ... x^{tau-1} are produced before the first multistep update.
enum class Warmup { ApproxPpm, RepeatInitial };

struct RunOptions {
  long budget = 0;                      // gradient calls
  std::optional<long> max_iterations;   // required when a step costs no gradient calls
  Warmup warmup = Warmup::ApproxPpm;
  bool keep_iterates = false;
  int record_every = 1;                 // metrics thinning; the final iterate is always recorded
  bool measure_gamma = false;           // per-step contraction against reference_prox
  double divergence_norm = 1e12;
  double normalize_eps = kDefaultNormalizeEps;
};

struct RunTrace {
  std::vector<long> recorded_at;        // iteration index of each recorded metric
  std::vector<Vector> iterates;         // filled when keep_iterates
  std::vector<double> objective;
  std::vector<double> gradient_norm;
  std::vector<double> gamma_anchor;     // one entry per prox step when measure_gamma
  std::vector<double> gamma_displacement;
  long gradient_calls = 0;
  long iterations = 0;
  Termination reason = Termination::BudgetExhausted;
  std::string message;
  double wall_seconds = 0.0;
  Vector final_iterate;

  double initial_objective() const { return objective.front(); }
  /// +inf when the run diverged or failed.
  double final_objective() const;
};

/// Drives the method until the gradient-call budget (or iteration cap) is
/// exhausted. Multistep methods fill their history during warm-up; warm-up
/// steps are outer iterations and cost gradient calls like any other step.
RunTrace run(const MethodSpec& method, const Objective& f, const Vector& x0, const RunOptions& options);

}  // namespace bdflow
