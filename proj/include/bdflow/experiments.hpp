#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "bdflow/integrators.hpp"
#include "bdflow/neural.hpp"
#include "bdflow/numcore.hpp"
#include "bdflow/stability.hpp"
#include "bdflow/theorems.hpp"

namespace bdflow {

// ---- stability tables -------------------------------------------------------

struct TableCell {
  std::string table;         // "sensitivity" or "optimal"
  std::string row;           // e.g. "BDM2(20,10)"
  RhoMethod method;
  double alpha = 0.0;        // implicit step in the row label; alpha_bar = alpha / xi_bar
  double L = 0.0;
  std::string metric;        // "stability_limit" or "optimal_rho"
  double value = 0.0;
  double step = 0.0;         // argmin for optimal_rho cells
  double published = 0.0;
  double tolerance = 0.0;
  std::string error;         // numerical failure message, if any

  double abs_dev() const;
  bool ok() const;
};

struct TableSearch {
  double lo = 1e-6;
  double hi = 10.0;
};

/// Every cell of the stability-limit table (m = 4) and the optimal-rho table, mu = 1, L in {2, 10, 100}.
std::vector<TableCell> compute_tables(const TableSearch& search = {});
std::vector<TableCell> compute_table_sensitivity(const TableSearch& search = {});
std::vector<TableCell> compute_table_optimal(const TableSearch& search = {});
/// Columns method,tau,m,alpha_bar,L,metric,value,paper_value,abs_dev (plus table,row,alpha,step,tolerance,ok).
std::string tables_csv(const std::vector<TableCell>& cells);
nlohmann::json tables_json(const std::vector<TableCell>& cells);

// ---- worker pool ------------------------------------------------------------

/// Runs job(i) for i in [0, count) on `workers` threads; job results must be
/// written to per-index slots by the caller.
void parallel_for(std::size_t count, int workers, const std::function<void(std::size_t)>& job);

// ---- sweeps -----------------------------------------------------------------

/// Parses "gd", "rk4"/"rk44", "ppm", "bdm1".."bdm6".
MethodSpec method_from_name(std::string_view name, int inner_m);
std::string method_token(const MethodSpec& spec);
std::vector<double> log_grid(double lo, double hi, int count);

struct QuadSweepConfig {
  std::vector<std::string> methods{"gd", "rk4", "ppm", "bdm2", "bdm3"};
  double step_min = 1e-3;
  double step_max = 1e3;
  int step_count = 61;
  std::vector<long> budgets{24, 500};
  int inner_m = 8;
  std::vector<SpectrumKind> spectra{SpectrumKind::Uniform12, SpectrumKind::Squared, SpectrumKind::Exponential};
  int n = 100;
  int trials = 1;
  std::uint64_t seed = 1;
  int workers = 1;
  std::string output = "out/quad";

  void validate() const;
};

struct DnnSweepConfig {
  std::vector<std::string> methods{"gd", "ppm", "bdm2", "bdm3"};
  double step_min = 1e-3;
  double step_max = 10.0;
  int step_count = 9;
  long iterations = 5000;
  int inner_m = 5;
  double inner_beta_ratio = 0.1;  // beta = ratio * alpha_bar * xi_bar
  DatasetKind dataset = DatasetKind::Rings;
  int points = 200;
  int depth = 7;
  int width = 10;
  int trials = 3;
  std::uint64_t seed = 1;
  int workers = 1;
  std::string output = "out/dnn";
  bool full = false;              // 100k iterations, 10 trials

  void validate() const;
};

void from_json(const nlohmann::json& j, QuadSweepConfig& c);
void to_json(nlohmann::json& j, const QuadSweepConfig& c);
void from_json(const nlohmann::json& j, DnnSweepConfig& c);
void to_json(nlohmann::json& j, const DnnSweepConfig& c);

/// FNV-1a of the canonical JSON dump, as 16 hex digits.
std::string config_hash(const nlohmann::json& config);

struct SweepRow {
  std::string method;
  std::string method_spec;
  std::string problem;       // spectrum kind or dataset generator
  long budget = 0;           // gradient calls (quadratic) or outer iterations (dnn)
  int tau = 1;
  int inner_m = 0;
  double step = 0.0;         // alpha_bar
  double alpha = 0.0;        // effective prox or explicit step
  int trial = 0;
  std::uint64_t seed = 0;
  double initial_loss = 0.0;
  double final_loss = 0.0;   // +inf when diverged
  double accuracy = -1.0;    // dnn only
  long iterations = 0;
  long gradient_calls = 0;
  std::string reason;
  double wall_seconds = 0.0;
};

struct Aggregate {
  std::string method;
  std::string problem;
  long budget = 0;
  double step = 0.0;
  std::size_t count = 0;
  double min = 0.0, mean = 0.0, max = 0.0;
};

struct SweepResult {
  std::string kind;          // "quadratic" or "dnn"
  std::string hash;
  std::vector<SweepRow> rows;
  std::vector<Aggregate> aggregates;

  std::string rows_csv() const;
  std::string aggregates_csv() const;
};

SweepResult quadratic_sweep(const QuadSweepConfig& config);
SweepResult dnn_sweep(const DnnSweepConfig& config);
/// Aggregates of final_loss (quadratic) or accuracy (dnn) over trials, sorted.
std::vector<Aggregate> aggregate(const std::vector<SweepRow>& rows, bool use_accuracy);
std::string sweep_svg(const SweepResult& result, const std::string& problem, long budget, bool use_accuracy);

/// Smallest and largest grid step whose aggregate satisfies pred; nullopt when none does.
std::optional<std::pair<double, double>> step_hull(const std::vector<Aggregate>& aggs, const std::string& method,
                                                   const std::string& problem, long budget,
                                                   const std::function<bool(const Aggregate&)>& pred);

// ---- theorem verification ---------------------------------------------------

struct VerifyConfig {
  int cases = 1000;
  std::uint64_t seed = 7;
  std::vector<int> taus{1, 2, 3};
  std::vector<int> inner_m{0, 1, 5, 20};  // 0 means exact solves
  int iterations = 80;
  int max_dimension = 20;
  double max_condition = 1e4;
  int workers = 1;
  bool nonconvex = true;
  bool expect_fail = false;
  std::string output = "out/verify";

  void validate() const;
};

void from_json(const nlohmann::json& j, VerifyConfig& c);
void to_json(nlohmann::json& j, const VerifyConfig& c);

struct VerifyCase {
  std::string suite;
  std::uint64_t seed = 0;
  std::string description;
  RateCheckReport report;
};

struct VerifySummary {
  std::vector<VerifyCase> cases;
  long asserted = 0;
  long unmet = 0;
  long violations = 0;
  double seconds = 0.0;

  nlohmann::json to_json(bool include_passing = false) const;
};

/// Strongly convex fuzz cases: random quadratics (n <= max_dimension,
/// kappa <= max_condition), random tau and inner solve, random admissible alpha.
VerifySummary strong_convexity_fuzz(const VerifyConfig& config);
/// Gradient-norm bound on convex quadratics (alpha in {1, 10, 100}) and on cos (alpha in {0.5, 1.5}).
VerifySummary nonconvex_suite(const VerifyConfig& config);
/// A case checked against the exact-solve rate with an inner solve far above
/// the admissible step window; it must register a violation.
VerifyCase injected_violation();
VerifySummary run_verify(const VerifyConfig& config);

}  // namespace bdflow
