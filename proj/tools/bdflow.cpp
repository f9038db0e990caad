#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "bdflow/errors.hpp"
#include "bdflow/experiments.hpp"
#include "bdflow/report_io.hpp"
#include "bdflow/stability.hpp"

namespace fs = std::filesystem;
using namespace bdflow;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitNumerical = 2;
constexpr int kExitViolation = 3;

nlohmann::json load_config(const std::string& path) {
  if (path.empty()) return nlohmann::json::object();
  try {
    return nlohmann::json::parse(read_text(path));
  } catch (const nlohmann::json::parse_error& e) {
    throw InvalidArgument("config '" + path + "' is not valid JSON: " + e.what());
  }
}

std::vector<double> parse_numbers(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    try {
      out.push_back(std::stod(item));
    } catch (const std::exception&) {
      throw InvalidArgument("not a number: '" + item + "'");
    }
  }
  return out;
}

void write_json(const fs::path& path, const nlohmann::json& j) { write_text(path, j.dump(2) + "\n"); }

struct TablesArgs {
  std::string config;
  std::string out;
};

int cmd_tables(const TablesArgs& a) {
  nlohmann::json cfg = load_config(a.config);
  for (const auto& [key, _] : cfg.items()) {
    if (key != "output" && key != "step_min" && key != "step_max") throw InvalidArgument("unknown config key '" + key + "'");
  }
  TableSearch search;
  search.lo = cfg.value("step_min", search.lo);
  search.hi = cfg.value("step_max", search.hi);
  const fs::path out = !a.out.empty() ? fs::path(a.out) : fs::path(cfg.value("output", std::string("out/tables")));
  const auto cells = compute_tables(search);
  write_text(out / "tables.csv", tables_csv(cells));
  write_json(out / "tables.json", tables_json(cells));
  std::size_t ok = 0;
  for (const auto& c : cells) {
    if (c.ok()) ++ok;
    std::printf("%-12s %-16s L=%-4g %-16s value=%-10.5g published=%-8g dev=%.4f %s\n", c.table.c_str(), c.row.c_str(), c.L,
                c.metric.c_str(), c.value, c.published, c.abs_dev(), c.ok() ? "ok" : "OFF");
  }
  std::printf("%zu/%zu cells within tolerance; written to %s\n", ok, cells.size(), out.string().c_str());
  return kExitOk;
}

struct SweepArgs {
  std::string config;
  std::string out;
  std::vector<std::string> methods;
  std::string steps;
  std::vector<long> budgets;
  std::vector<std::string> spectra;
  std::optional<int> trials, workers, n, inner_m, step_count, points, depth, width;
  std::optional<long> iterations;
  std::optional<std::uint64_t> seed;
  std::optional<double> beta_ratio;
  std::string dataset;
  bool full = false;
  bool svg = false;
};

void apply_steps(const std::string& text, double& lo, double& hi, int& count) {
  if (text.empty()) return;
  const auto v = parse_numbers(text);
  if (v.size() != 3) throw InvalidArgument("--steps expects lo,hi,count");
  lo = v[0];
  hi = v[1];
  count = static_cast<int>(v[2]);
}

void write_sweep(const SweepResult& r, const fs::path& out, const nlohmann::json& config, bool svg,
                 const std::vector<std::string>& problems, const std::vector<long>& budgets) {
  write_text(out / "rows.csv", r.rows_csv());
  write_text(out / "aggregates.csv", r.aggregates_csv());
  nlohmann::json meta{{"config", config}, {"config_hash", r.hash}, {"rows", r.rows.size()}};
  write_json(out / "config.json", meta);
  if (!svg) return;
  for (const auto& p : problems)
    for (long k : budgets)
      write_text(out / (p + "_" + std::to_string(k) + ".svg"), sweep_svg(r, p, k, r.kind == "dnn"));
}

int cmd_quad(const SweepArgs& a) {
  QuadSweepConfig c = load_config(a.config).get<QuadSweepConfig>();
  if (!a.methods.empty()) c.methods = a.methods;
  apply_steps(a.steps, c.step_min, c.step_max, c.step_count);
  if (!a.budgets.empty()) c.budgets = a.budgets;
  if (!a.spectra.empty()) {
    c.spectra.clear();
    for (const auto& s : a.spectra) c.spectra.push_back(parse_spectrum_kind(s));
  }
  if (a.trials) c.trials = *a.trials;
  if (a.workers) c.workers = *a.workers;
  if (a.n) c.n = *a.n;
  if (a.inner_m) c.inner_m = *a.inner_m;
  if (a.seed) c.seed = *a.seed;
  if (!a.out.empty()) c.output = a.out;
  const SweepResult r = quadratic_sweep(c);
  std::vector<std::string> problems;
  for (auto s : c.spectra) problems.emplace_back(to_string(s));
  write_sweep(r, c.output, nlohmann::json(c), a.svg, problems, c.budgets);
  std::size_t diverged = 0;
  for (const auto& row : r.rows) diverged += row.reason == "diverged";
  std::printf("%zu runs (%zu diverged), config %s, written to %s\n", r.rows.size(), diverged, r.hash.c_str(),
              c.output.c_str());
  return kExitOk;
}

int cmd_dnn(const SweepArgs& a) {
  DnnSweepConfig c = load_config(a.config).get<DnnSweepConfig>();
  if (!a.methods.empty()) c.methods = a.methods;
  apply_steps(a.steps, c.step_min, c.step_max, c.step_count);
  if (a.trials) c.trials = *a.trials;
  if (a.workers) c.workers = *a.workers;
  if (a.inner_m) c.inner_m = *a.inner_m;
  if (a.iterations) c.iterations = *a.iterations;
  if (a.points) c.points = *a.points;
  if (a.depth) c.depth = *a.depth;
  if (a.width) c.width = *a.width;
  if (a.beta_ratio) c.inner_beta_ratio = *a.beta_ratio;
  if (a.seed) c.seed = *a.seed;
  if (!a.dataset.empty()) c.dataset = parse_dataset_kind(a.dataset);
  if (a.full) c.full = true;
  if (!a.out.empty()) c.output = a.out;
  const SweepResult r = dnn_sweep(c);
  write_sweep(r, c.output, nlohmann::json(c), a.svg, {std::string(to_string(c.dataset))},
              {c.full ? 100000L : c.iterations});
  const Dataset2D data = gen_dataset(c.dataset, static_cast<std::size_t>(c.points), c.seed);
  write_text(fs::path(c.output) / "dataset.csv", data.to_csv());
  for (const auto& agg : r.aggregates)
    std::printf("%-6s step=%-10.4g accuracy mean=%.3f min=%.3f max=%.3f\n", agg.method.c_str(), agg.step, agg.mean,
                agg.min, agg.max);
  std::printf("config %s, written to %s\n", r.hash.c_str(), c.output.c_str());
  return kExitOk;
}

struct VerifyArgs {
  std::string config;
  std::string out;
  std::optional<int> cases, workers, iterations;
  std::optional<std::uint64_t> seed;
  std::optional<std::vector<int>> taus;
  std::optional<std::vector<int>> inner_m;
  bool expect_fail = false;
  bool skip_nonconvex = false;
  bool all_reports = false;
};

int cmd_verify(const VerifyArgs& a) {
  VerifyConfig c = load_config(a.config).get<VerifyConfig>();
  if (a.cases) c.cases = *a.cases;
  if (a.workers) c.workers = *a.workers;
  if (a.iterations) c.iterations = *a.iterations;
  if (a.seed) c.seed = *a.seed;
  if (a.taus) c.taus = *a.taus;
  if (a.inner_m) c.inner_m = *a.inner_m;
  if (a.expect_fail) c.expect_fail = true;
  if (a.skip_nonconvex) c.nonconvex = false;
  if (!a.out.empty()) c.output = a.out;
  const VerifySummary s = run_verify(c);
  nlohmann::json report = s.to_json(a.all_reports);
  report["config"] = c;
  report["config_hash"] = config_hash(nlohmann::json(c));
  write_json(fs::path(c.output) / "verify.json", report);
  std::printf("%zu cases: %ld asserted, %ld conditions unmet, %ld violations (%.1fs)\n", s.cases.size(), s.asserted,
              s.unmet, s.violations, s.seconds);
  if (s.violations > 0) {
    for (const auto& vc : s.cases) {
      if (vc.report.asserted && vc.report.violations > 0)
        std::printf("  VIOLATION [%s] %s: %ld points, max ratio %.6g\n", vc.suite.c_str(), vc.description.c_str(),
                    vc.report.violations, vc.report.max_violation_ratio);
    }
    return kExitViolation;
  }
  return kExitOk;
}

struct StabilityArgs {
  std::string method = "gd";
  int tau = 2;
  int m = 4;
  double alpha_bar = 1.0;
  std::string spectrum = "1,10";
  std::string grid = "1e-4,10,200";
  std::string out;
};

int cmd_stability(const StabilityArgs& a) {
  RhoMethod method;
  method.kind = parse_rho_kind(a.method);
  method.tau = method.kind == RhoKind::Bdm ? a.tau : 1;
  if (method.kind == RhoKind::Bdm) (void)bdf_scheme(method.tau);
  method.m = a.m;
  method.alpha_bar = a.alpha_bar;
  const Spectrum s(parse_numbers(a.spectrum));
  const auto g = parse_numbers(a.grid);
  if (g.size() != 3) throw InvalidArgument("--grid expects lo,hi,count");
  const StabilityReport report = stability_report(method, s, g[0], g[1], static_cast<int>(g[2]));
  const nlohmann::json summary = report;
  if (a.out.empty()) {
    std::cout << to_csv(report);
  } else {
    write_text(fs::path(a.out) / "stability.csv", to_csv(report));
    write_json(fs::path(a.out) / "stability.json", summary);
  }
  std::cerr << summary.dump() << "\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Approximate backwards-differentiation discretizations of gradient flow"};
  app.require_subcommand(1);

  TablesArgs ta;
  auto* tables = app.add_subcommand("tables", "Stability-limit and optimal-rho tables for mu = 1, L in {2, 10, 100}");
  tables->add_option("--config", ta.config, "JSON config (keys: output, step_min, step_max)");
  tables->add_option("--out", ta.out, "Output directory");

  SweepArgs qa;
  auto* quad = app.add_subcommand("quad-sweep", "Final loss after K gradient calls over a step grid");
  quad->add_option("--config", qa.config, "JSON config file");
  quad->add_option("--out", qa.out, "Output directory");
  quad->add_option("--methods", qa.methods, "gd rk4 ppm bdm2 bdm3 ...");
  quad->add_option("--steps", qa.steps, "lo,hi,count of the log-spaced alpha_bar grid");
  quad->add_option("--budgets", qa.budgets, "Gradient-call budgets K");
  quad->add_option("--spectra", qa.spectra, "uniform12 squared exponential");
  quad->add_option("--trials", qa.trials);
  quad->add_option("--workers", qa.workers);
  quad->add_option("--n", qa.n, "Problem dimension");
  quad->add_option("--inner-m", qa.inner_m, "Inner gradient steps per prox");
  quad->add_option("--seed", qa.seed);
  quad->add_flag("--svg", qa.svg, "Also write SVG line plots");

  SweepArgs da;
  auto* dnn = app.add_subcommand("dnn-sweep", "Accuracy of normalized-flow training over a step grid");
  dnn->add_option("--config", da.config, "JSON config file");
  dnn->add_option("--out", da.out, "Output directory");
  dnn->add_option("--methods", da.methods, "gd ppm bdm2 bdm3 ...");
  dnn->add_option("--steps", da.steps, "lo,hi,count of the log-spaced alpha_bar grid");
  dnn->add_option("--iterations", da.iterations, "Outer iterations per run");
  dnn->add_option("--trials", da.trials);
  dnn->add_option("--workers", da.workers);
  dnn->add_option("--inner-m", da.inner_m, "Inner gradient steps per prox");
  dnn->add_option("--beta-ratio", da.beta_ratio, "Inner step as a fraction of alpha");
  dnn->add_option("--dataset", da.dataset, "rings or xor_blobs");
  dnn->add_option("--points", da.points);
  dnn->add_option("--depth", da.depth, "Number of weight layers");
  dnn->add_option("--width", da.width);
  dnn->add_option("--seed", da.seed);
  dnn->add_flag("--full", da.full, "100,000 iterations and 10 trials");
  dnn->add_flag("--svg", da.svg, "Also write an SVG line plot");

  VerifyArgs va;
  auto* verify = app.add_subcommand("verify", "Run the convergence-bound fuzz suites");
  verify->add_option("--config", va.config, "JSON config file");
  verify->add_option("--out", va.out, "Output directory");
  verify->add_option("--cases", va.cases, "Number of strongly convex fuzz cases");
  verify->add_option("--workers", va.workers);
  verify->add_option("--iterations", va.iterations);
  verify->add_option("--seed", va.seed);
  auto* taus_opt = verify->add_option("--taus", va.taus, "Multistep orders to draw from")->expected(0, -1);
  verify->add_option("--inner-m", va.inner_m, "Inner solves to draw from (0 = exact)")->expected(0, -1);
  verify->add_flag("--expect-fail", va.expect_fail, "Add a case with a step outside the admissible window");
  verify->add_flag("--skip-nonconvex", va.skip_nonconvex);
  verify->add_flag("--all-reports", va.all_reports, "Include passing reports in verify.json");

  StabilityArgs sa;
  auto* stab = app.add_subcommand("stability", "Radius of convergence over a step grid");
  stab->add_option("--method", sa.method, "gd rk4 ppm_exact ppm bdm")->capture_default_str();
  stab->add_option("--tau", sa.tau, "BDF order for bdm")->capture_default_str();
  stab->add_option("--m", sa.m, "Inner gradient steps")->capture_default_str();
  stab->add_option("--alpha-bar", sa.alpha_bar, "Implicit step alpha_bar (alpha = alpha_bar xi_bar)")->capture_default_str();
  stab->add_option("--spectrum", sa.spectrum, "Comma-separated eigenvalues")->capture_default_str();
  stab->add_option("--grid", sa.grid, "lo,hi,count of the log-spaced step grid")->capture_default_str();
  stab->add_option("--out", sa.out, "Output directory (CSV to stdout when omitted)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*tables) return cmd_tables(ta);
    if (*quad) return cmd_quad(qa);
    if (*dnn) return cmd_dnn(da);
    if (*verify) {
      if (taus_opt->count() > 0 && (!va.taus || va.taus->empty())) throw InvalidArgument("method list is empty (no tau values)");
      return cmd_verify(va);
    }
    if (*stab) return cmd_stability(sa);
  } catch (const InvalidArgument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const NumericalFailure& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitNumerical;
  }
  return kExitUsage;
}
