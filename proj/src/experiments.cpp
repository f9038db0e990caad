#include "bdflow/experiments.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <exception>
#include <limits>
#include <map>
#include <memory>
#include <mutex>
#include <sstream>
#include <thread>
#include <tuple>

#include "bdflow/errors.hpp"
#include "bdflow/report_io.hpp"
#include "bdflow/rng.hpp"

namespace bdflow {

namespace {

constexpr std::uint64_t kStartStream = 5;
constexpr std::uint64_t kFuzzStream = 9;
constexpr double kInf = std::numeric_limits<double>::infinity();

Spectrum two_point(double L) { return Spectrum({1.0, L}); }

}  // namespace

// ---- stability tables -------------------------------------------------------

double TableCell::abs_dev() const { return std::abs(value - published); }

bool TableCell::ok() const { return error.empty() && abs_dev() <= tolerance; }

namespace {

struct PublishedRow {
  const char* row;
  RhoKind kind;
  int tau;
  int m;
  double alpha;
  double values[3];
};

constexpr double kLs[3] = {2.0, 10.0, 100.0};

// Stability limits with m = 4; explicit methods report alpha, the others beta.
const PublishedRow kSensitivity[] = {
    {"GD", RhoKind::Gd, 1, 0, 0.0, {1.0, 0.2, 0.02}},
    {"RK44", RhoKind::Rk4, 1, 0, 0.0, {1.3925, 0.2785, 0.02785}},
    {"PPM(1)", RhoKind::Appm, 1, 4, 1.0, {0.667, 0.182, 0.0198}},
    {"PPM(10)", RhoKind::Appm, 1, 4, 10.0, {0.952, 0.198, 0.0200}},
    {"BDM2(1)", RhoKind::Bdm, 2, 4, 1.0, {0.665, 0.181, 0.0200}},
    {"BDM2(10)", RhoKind::Bdm, 2, 4, 10.0, {0.940, 0.197, 0.0200}},
    {"BDM3(1)", RhoKind::Bdm, 3, 4, 1.0, {0.608, 0.178, 0.0200}},
    {"BDM3(10)", RhoKind::Bdm, 3, 4, 10.0, {0.940, 0.197, 0.0200}},
};

const PublishedRow kOptimal[] = {
    {"GD", RhoKind::Gd, 1, 0, 0.0, {0.333, 0.818, 0.980}},
    {"RK44", RhoKind::Rk4, 1, 0, 0.0, {0.362, 0.771, 0.973}},
    {"PPM(4,1)", RhoKind::Appm, 1, 4, 1.0, {0.500, 0.596, 0.926}},
    {"PPM(20,1)", RhoKind::Appm, 1, 20, 1.0, {0.500, 0.500, 0.724}},
    {"PPM(4,10)", RhoKind::Appm, 1, 4, 10.0, {0.0935, 0.466, 0.923}},
    {"PPM(20,10)", RhoKind::Appm, 1, 20, 10.0, {0.0909, 0.100, 0.676}},
    {"BDM2(4,1)", RhoKind::Bdm, 2, 4, 1.0, {0.326, 0.282, 0.905}},
    {"BDM2(20,1)", RhoKind::Bdm, 2, 20, 1.0, {0.303, 0.211, 0.457}},
    {"BDM2(4,10)", RhoKind::Bdm, 2, 4, 10.0, {0.059, 0.423, 0.941}},
    {"BDM2(20,10)", RhoKind::Bdm, 2, 20, 10.0, {0.024, 0.024, 0.737}},
    {"BDM3(4,1)", RhoKind::Bdm, 3, 4, 1.0, {0.377, 0.451, 0.923}},
    {"BDM3(20,1)", RhoKind::Bdm, 3, 20, 1.0, {0.377, 0.306, 0.470}},
    {"BDM3(4,10)", RhoKind::Bdm, 3, 4, 10.0, {0.197, 0.459, 0.943}},
    {"BDM3(20,10)", RhoKind::Bdm, 3, 20, 10.0, {0.197, 0.165, 0.739}},
};

RhoMethod method_for(const PublishedRow& r) {
  RhoMethod m;
  m.kind = r.kind;
  m.tau = r.tau;
  m.m = r.m;
  if (r.kind == RhoKind::Appm || r.kind == RhoKind::Bdm) m.alpha_bar = r.alpha / bdf_scheme(r.tau).xi_bar_value;
  return m;
}

template <std::size_t N>
std::vector<TableCell> compute_rows(const PublishedRow (&rows)[N], bool optimal, const TableSearch& search) {
  std::vector<TableCell> cells;
  for (const auto& r : rows) {
    for (int li = 0; li < 3; ++li) {
      TableCell c;
      c.table = optimal ? "optimal" : "sensitivity";
      c.row = r.row;
      c.method = method_for(r);
      c.alpha = r.alpha;
      c.L = kLs[li];
      c.metric = optimal ? "optimal_rho" : "stability_limit";
      c.published = r.values[li];
      c.tolerance = optimal ? 0.01 : 0.005;
      try {
        const auto f = c.method.bind(two_point(c.L));
        if (optimal) {
          const Optimum o = optimal_step(f, search.lo, search.hi);
          c.value = o.rho;
          c.step = o.step;
        } else {
          const StabilityLimit lim = stability_limit(f, search.lo, search.hi);
          c.value = lim.step;
          c.step = lim.step;
          if (!lim.found) c.error = "rho > 1 on the whole search range";
        }
      } catch (const NumericalFailure& e) {
        c.error = e.what();
        c.value = std::numeric_limits<double>::quiet_NaN();
      }
      cells.push_back(std::move(c));
    }
  }
  return cells;
}

}  // namespace

std::vector<TableCell> compute_table_sensitivity(const TableSearch& search) {
  return compute_rows(kSensitivity, false, search);
}

std::vector<TableCell> compute_table_optimal(const TableSearch& search) {
  return compute_rows(kOptimal, true, search);
}

std::vector<TableCell> compute_tables(const TableSearch& search) {
  auto cells = compute_table_sensitivity(search);
  auto more = compute_table_optimal(search);
  cells.insert(cells.end(), more.begin(), more.end());
  return cells;
}

std::string tables_csv(const std::vector<TableCell>& cells) {
  std::ostringstream o;
  o << "method,tau,m,alpha_bar,L,metric,value,paper_value,abs_dev,table,row,alpha,step,tolerance,ok\n";
  for (const auto& c : cells) {
    const bool implicit = c.method.steps_beta();
    o << c.method.label() << ',' << c.method.tau << ',' << (implicit ? std::to_string(c.method.m) : "") << ','
      << (implicit ? format_double(c.method.alpha_bar) : "") << ',' << format_double(c.L) << ',' << c.metric << ','
      << format_double(c.value, 10) << ',' << format_double(c.published) << ',' << format_double(c.abs_dev(), 6)
      << ',' << c.table << ',' << c.row << ',' << (implicit ? format_double(c.alpha) : "") << ','
      << format_double(c.step, 10) << ',' << format_double(c.tolerance) << ',' << (c.ok() ? "true" : "false")
      << '\n';
  }
  return o.str();
}

nlohmann::json tables_json(const std::vector<TableCell>& cells) {
  nlohmann::json out = nlohmann::json::object();
  out["mu"] = 1.0;
  nlohmann::json list = nlohmann::json::array();
  std::size_t within = 0;
  for (const auto& c : cells) {
    nlohmann::json cell{{"table", c.table},         {"row", c.row},          {"method", c.method.label()},
                        {"tau", c.method.tau},      {"L", c.L},              {"metric", c.metric},
                        {"value", c.value},         {"step", c.step},        {"paper_value", c.published},
                        {"abs_dev", c.abs_dev()},   {"tolerance", c.tolerance}, {"ok", c.ok()}};
    if (c.method.steps_beta()) {
      cell["m"] = c.method.m;
      cell["alpha"] = c.alpha;
      cell["alpha_bar"] = c.method.alpha_bar;
    }
    if (!c.error.empty()) cell["error"] = c.error;
    if (c.ok()) ++within;
    list.push_back(std::move(cell));
  }
  out["cells"] = std::move(list);
  out["within_tolerance"] = within;
  out["total"] = cells.size();
  return out;
}

// ---- worker pool ------------------------------------------------------------

void parallel_for(std::size_t count, int workers, const std::function<void(std::size_t)>& job) {
  if (workers < 1) throw InvalidArgument("worker count must be positive");
  const std::size_t threads = std::min<std::size_t>(static_cast<std::size_t>(workers), count);
  if (threads <= 1) {
    for (std::size_t i = 0; i < count; ++i) job(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  std::vector<std::thread> pool;
  pool.reserve(threads);
  for (std::size_t t = 0; t < threads; ++t) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < count; i = next++) {
        try {
          job(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(failure_mutex);
          if (!failure) failure = std::current_exception();
        }
      }
    });
  }
  for (auto& th : pool) th.join();
  if (failure) std::rethrow_exception(failure);
}

// ---- sweeps -----------------------------------------------------------------

MethodSpec method_from_name(std::string_view name, int inner_m) {
  MethodSpec spec;
  spec.inner.m = inner_m;
  if (name.size() == 4 && name.substr(0, 3) == "bdm") {
    spec.kind = MethodKind::Bdm;
    spec.tau = name[3] - '0';
    (void)bdf_scheme(spec.tau);
    return spec;
  }
  spec.kind = parse_method_kind(name);
  if (spec.kind == MethodKind::Bdm) spec.tau = 2;
  return spec;
}

std::string method_token(const MethodSpec& spec) {
  std::string t(to_string(spec.kind));
  if (spec.kind == MethodKind::Bdm) t += ":tau=" + std::to_string(spec.tau);
  if (spec.kind == MethodKind::Ppm || spec.kind == MethodKind::Bdm) {
    t += ":m=" + std::to_string(spec.inner.m);
    t += ":beta=" + (spec.inner.beta ? format_double(*spec.inner.beta) : std::string("auto"));
  }
  if (spec.normalized) t += ":normalized";
  return t;
}

std::vector<double> log_grid(double lo, double hi, int count) {
  if (count < 2) throw InvalidArgument("grid count must be at least 2");
  if (!(lo > 0.0) || !(hi > lo)) throw InvalidArgument("grid bounds must satisfy 0 < lo < hi");
  std::vector<double> g(static_cast<std::size_t>(count));
  const double a = std::log10(lo), b = std::log10(hi);
  for (int i = 0; i < count; ++i) g[static_cast<std::size_t>(i)] = std::pow(10.0, a + (b - a) * i / (count - 1));
  return g;
}

namespace {

void reject_unknown(const nlohmann::json& j, std::initializer_list<const char*> keys) {
  if (!j.is_object()) throw InvalidArgument("config must be a JSON object");
  for (const auto& [key, _] : j.items()) {
    if (std::none_of(keys.begin(), keys.end(), [&](const char* k) { return key == k; }))
      throw InvalidArgument("unknown config key '" + key + "'");
  }
}

template <class T>
void take(const nlohmann::json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace

void QuadSweepConfig::validate() const {
  if (methods.empty()) throw InvalidArgument("method list is empty");
  for (const auto& m : methods) (void)method_from_name(m, inner_m);
  if (step_count < 2) throw InvalidArgument("step_count must be at least 2");
  if (!(step_min > 0.0) || !(step_max > step_min)) throw InvalidArgument("need 0 < step_min < step_max");
  if (budgets.empty()) throw InvalidArgument("budget list is empty");
  if (inner_m < 1) throw InvalidArgument("inner_m must be at least 1");
  for (long k : budgets) {
    for (const auto& m : methods) {
      if (k < method_from_name(m, inner_m).gradient_cost())
        throw InvalidArgument("budget " + std::to_string(k) + " is below the cost of one " + m + " step");
    }
  }
  if (spectra.empty()) throw InvalidArgument("spectrum list is empty");
  if (n < 1 || trials < 1 || workers < 1) throw InvalidArgument("n, trials and workers must be positive");
}

void from_json(const nlohmann::json& j, QuadSweepConfig& c) {
  reject_unknown(j, {"methods", "step_min", "step_max", "step_count", "budgets", "inner_m", "spectra", "n", "trials",
                     "seed", "workers", "output"});
  take(j, "methods", c.methods);
  take(j, "step_min", c.step_min);
  take(j, "step_max", c.step_max);
  take(j, "step_count", c.step_count);
  take(j, "budgets", c.budgets);
  take(j, "inner_m", c.inner_m);
  if (j.contains("spectra")) {
    c.spectra.clear();
    for (const auto& s : j.at("spectra")) c.spectra.push_back(parse_spectrum_kind(s.get<std::string>()));
  }
  take(j, "n", c.n);
  take(j, "trials", c.trials);
  take(j, "seed", c.seed);
  take(j, "workers", c.workers);
  take(j, "output", c.output);
}

void to_json(nlohmann::json& j, const QuadSweepConfig& c) {
  std::vector<std::string> spectra;
  for (auto s : c.spectra) spectra.emplace_back(to_string(s));
  j = nlohmann::json{{"methods", c.methods}, {"step_min", c.step_min}, {"step_max", c.step_max},
                     {"step_count", c.step_count}, {"budgets", c.budgets}, {"inner_m", c.inner_m},
                     {"spectra", spectra}, {"n", c.n}, {"trials", c.trials}, {"seed", c.seed},
                     {"workers", c.workers}, {"output", c.output}};
}

void DnnSweepConfig::validate() const {
  if (methods.empty()) throw InvalidArgument("method list is empty");
  for (const auto& m : methods) (void)method_from_name(m, inner_m);
  if (step_count < 2) throw InvalidArgument("step_count must be at least 2");
  if (!(step_min > 0.0) || !(step_max > step_min)) throw InvalidArgument("need 0 < step_min < step_max");
  if (iterations < 1 || inner_m < 1) throw InvalidArgument("iterations and inner_m must be positive");
  if (!(inner_beta_ratio > 0.0)) throw InvalidArgument("inner_beta_ratio must be positive");
  if (points < 4 || depth < 1 || width < 1 || trials < 1 || workers < 1)
    throw InvalidArgument("points >= 4 and positive depth, width, trials, workers required");
}

void from_json(const nlohmann::json& j, DnnSweepConfig& c) {
  reject_unknown(j, {"methods", "step_min", "step_max", "step_count", "iterations", "inner_m", "inner_beta_ratio",
                     "dataset", "points", "depth", "width", "trials", "seed", "workers", "output", "full"});
  take(j, "methods", c.methods);
  take(j, "step_min", c.step_min);
  take(j, "step_max", c.step_max);
  take(j, "step_count", c.step_count);
  take(j, "iterations", c.iterations);
  take(j, "inner_m", c.inner_m);
  take(j, "inner_beta_ratio", c.inner_beta_ratio);
  if (j.contains("dataset")) c.dataset = parse_dataset_kind(j.at("dataset").get<std::string>());
  take(j, "points", c.points);
  take(j, "depth", c.depth);
  take(j, "width", c.width);
  take(j, "trials", c.trials);
  take(j, "seed", c.seed);
  take(j, "workers", c.workers);
  take(j, "output", c.output);
  take(j, "full", c.full);
}

void to_json(nlohmann::json& j, const DnnSweepConfig& c) {
  j = nlohmann::json{{"methods", c.methods}, {"step_min", c.step_min}, {"step_max", c.step_max},
                     {"step_count", c.step_count}, {"iterations", c.iterations}, {"inner_m", c.inner_m},
                     {"inner_beta_ratio", c.inner_beta_ratio}, {"dataset", std::string(to_string(c.dataset))},
                     {"points", c.points}, {"depth", c.depth}, {"width", c.width}, {"trials", c.trials},
                     {"seed", c.seed}, {"workers", c.workers}, {"output", c.output}, {"full", c.full}};
}

std::string config_hash(const nlohmann::json& config) {
  nlohmann::json canonical = config;
  if (canonical.is_object()) {
    canonical.erase("workers");
    canonical.erase("output");
  }
  return hex64(fnv1a64(canonical.dump()));
}

namespace {

std::string csv_loss(double v) { return format_double(v); }

}  // namespace

std::string SweepResult::rows_csv() const {
  const bool dnn = kind == "dnn";
  std::ostringstream o;
  o << "method,step,trial,seed," << (dnn ? "accuracy" : "final_loss")
    << ",reason,problem,budget,tau,inner_m,alpha," << (dnn ? "final_loss" : "initial_loss")
    << ",iterations,gradient_calls,config_hash,method_spec\n";
  for (const auto& r : rows) {
    o << r.method << ',' << format_double(r.step) << ',' << r.trial << ',' << r.seed << ','
      << (dnn ? format_double(r.accuracy) : csv_loss(r.final_loss)) << ',' << r.reason << ',' << r.problem << ','
      << r.budget << ',' << r.tau << ',' << r.inner_m << ',' << format_double(r.alpha) << ','
      << csv_loss(dnn ? r.final_loss : r.initial_loss) << ',' << r.iterations << ',' << r.gradient_calls << ','
      << hash << ',' << r.method_spec << '\n';
  }
  return o.str();
}

std::string SweepResult::aggregates_csv() const {
  std::ostringstream o;
  o << "method,problem,budget,step,count,min,mean,max\n";
  for (const auto& a : aggregates) {
    o << a.method << ',' << a.problem << ',' << a.budget << ',' << format_double(a.step) << ',' << a.count << ','
      << format_double(a.min) << ',' << format_double(a.mean) << ',' << format_double(a.max) << '\n';
  }
  return o.str();
}

namespace {

void sort_rows(std::vector<SweepRow>& rows) {
  std::sort(rows.begin(), rows.end(), [](const SweepRow& a, const SweepRow& b) {
    return std::tie(a.problem, a.budget, a.method, a.step, a.trial) <
           std::tie(b.problem, b.budget, b.method, b.step, b.trial);
  });
}

void fill_from_trace(SweepRow& row, const RunTrace& trace) {
  row.initial_loss = trace.initial_objective();
  row.final_loss = trace.final_objective();
  row.iterations = trace.iterations;
  row.gradient_calls = trace.gradient_calls;
  row.reason = std::string(to_string(trace.reason));
  row.wall_seconds = trace.wall_seconds;
}

}  // namespace

std::vector<Aggregate> aggregate(const std::vector<SweepRow>& rows, bool use_accuracy) {
  std::map<std::tuple<std::string, std::string, long, double>, std::vector<double>> groups;
  for (const auto& r : rows)
    groups[{r.problem, r.method, r.budget, r.step}].push_back(use_accuracy ? r.accuracy : r.final_loss);
  std::vector<Aggregate> out;
  for (const auto& [key, values] : groups) {
    Aggregate a;
    a.problem = std::get<0>(key);
    a.method = std::get<1>(key);
    a.budget = std::get<2>(key);
    a.step = std::get<3>(key);
    a.count = values.size();
    a.min = *std::min_element(values.begin(), values.end());
    a.max = *std::max_element(values.begin(), values.end());
    double sum = 0.0;
    for (double v : values) sum += v;
    a.mean = sum / static_cast<double>(values.size());
    if (a.max == kInf) a.mean = kInf;
    a.mean = std::clamp(a.mean, a.min, a.max);
    out.push_back(a);
  }
  return out;
}

SweepResult quadratic_sweep(const QuadSweepConfig& config) {
  config.validate();
  nlohmann::json cj = config;
  SweepResult result;
  result.kind = "quadratic";
  result.hash = config_hash(cj);

  struct Problem {
    SpectrumKind kind;
    int trial;
    std::uint64_t seed;
    std::shared_ptr<QuadraticProblem> q;
    Vector x0;
  };
  std::vector<Problem> problems;
  for (auto kind : config.spectra) {
    for (int t = 0; t < config.trials; ++t) {
      const std::uint64_t s = derive_seed(config.seed, static_cast<std::uint64_t>(t));
      auto q = std::make_shared<QuadraticProblem>(make_quadratic(make_spectrum(kind, static_cast<std::size_t>(config.n), s), s));
      CounterRng rng(s, kStartStream);
      Vector x0(config.n);
      for (int i = 0; i < config.n; ++i) x0(i) = rng.normal();
      problems.push_back({kind, t, s, std::move(q), std::move(x0)});
    }
  }
  const auto steps = log_grid(config.step_min, config.step_max, config.step_count);

  struct Job {
    std::size_t problem;
    long budget;
    std::string method;
    double step;
  };
  std::vector<Job> jobs;
  for (std::size_t p = 0; p < problems.size(); ++p)
    for (long k : config.budgets)
      for (const auto& m : config.methods)
        for (double s : steps) jobs.push_back({p, k, m, s});

  result.rows.resize(jobs.size());
  parallel_for(jobs.size(), config.workers, [&](std::size_t i) {
    const Job& job = jobs[i];
    const Problem& pr = problems[job.problem];
    MethodSpec spec = method_from_name(job.method, config.inner_m);
    spec.alpha_bar = job.step;
    RunOptions opt;
    opt.budget = job.budget;
    opt.record_every = std::numeric_limits<int>::max();
    const RunTrace trace = run(spec, *pr.q, pr.x0, opt);
    SweepRow row;
    row.method = spec.label();
    row.method_spec = method_token(spec);
    row.problem = std::string(to_string(pr.kind));
    row.budget = job.budget;
    row.tau = spec.kind == MethodKind::Bdm ? spec.tau : 1;
    row.inner_m = (spec.kind == MethodKind::Ppm || spec.kind == MethodKind::Bdm) ? spec.inner.m : 0;
    row.step = job.step;
    row.alpha = spec.effective_alpha();
    row.trial = pr.trial;
    row.seed = pr.seed;
    fill_from_trace(row, trace);
    result.rows[i] = std::move(row);
  });
  sort_rows(result.rows);
  result.aggregates = aggregate(result.rows, false);
  return result;
}

SweepResult dnn_sweep(const DnnSweepConfig& input) {
  DnnSweepConfig config = input;
  if (config.full) {
    config.iterations = 100000;
    config.trials = 10;
  }
  config.validate();
  nlohmann::json cj = config;
  SweepResult result;
  result.kind = "dnn";
  result.hash = config_hash(cj);

  const Dataset2D data = gen_dataset(config.dataset, static_cast<std::size_t>(config.points), config.seed);
  MlpShape shape;
  shape.depth = config.depth;
  shape.width = config.width;
  const MlpObjective mlp(shape, data);
  const auto steps = log_grid(config.step_min, config.step_max, config.step_count);

  struct Job {
    int trial;
    std::string method;
    double step;
  };
  std::vector<Job> jobs;
  for (int t = 0; t < config.trials; ++t)
    for (const auto& m : config.methods)
      for (double s : steps) jobs.push_back({t, m, s});

  result.rows.resize(jobs.size());
  parallel_for(jobs.size(), config.workers, [&](std::size_t i) {
    const Job& job = jobs[i];
    const std::uint64_t s = derive_seed(config.seed, static_cast<std::uint64_t>(job.trial));
    MethodSpec spec = method_from_name(job.method, config.inner_m);
    spec.alpha_bar = job.step;
    spec.normalized = true;
    if (spec.kind == MethodKind::Ppm || spec.kind == MethodKind::Bdm)
      spec.inner.beta = config.inner_beta_ratio * spec.effective_alpha();
    RunOptions opt;
    opt.max_iterations = config.iterations;
    opt.budget = config.iterations * spec.gradient_cost();
    opt.record_every = std::numeric_limits<int>::max();
    const RunTrace trace = run(spec, mlp, mlp.initial_parameters(s), opt);
    SweepRow row;
    row.method = spec.label();
    row.method_spec = method_token(spec);
    row.problem = std::string(to_string(config.dataset));
    row.budget = config.iterations;
    row.tau = spec.kind == MethodKind::Bdm ? spec.tau : 1;
    row.inner_m = (spec.kind == MethodKind::Ppm || spec.kind == MethodKind::Bdm) ? spec.inner.m : 0;
    row.step = job.step;
    row.alpha = spec.effective_alpha();
    row.trial = job.trial;
    row.seed = s;
    fill_from_trace(row, trace);
    row.accuracy = trace.final_iterate.allFinite() ? accuracy(mlp, trace.final_iterate, data) : 0.0;
    result.rows[i] = std::move(row);
  });
  sort_rows(result.rows);
  result.aggregates = aggregate(result.rows, true);
  return result;
}

std::string sweep_svg(const SweepResult& result, const std::string& problem, long budget, bool use_accuracy) {
  SvgPlot plot;
  plot.title = problem + (use_accuracy ? " accuracy" : " final loss") + ", budget " + std::to_string(budget);
  plot.x_label = "step (alpha_bar)";
  plot.y_label = use_accuracy ? "mean accuracy" : "log10 mean final loss";
  plot.log_y = !use_accuracy;
  std::map<std::string, SvgSeries> series;
  for (const auto& a : result.aggregates) {
    if (a.problem != problem || a.budget != budget) continue;
    auto& s = series[a.method];
    s.name = a.method;
    s.x.push_back(a.step);
    s.y.push_back(use_accuracy ? a.mean : (a.mean > 0.0 ? a.mean : kInf));
  }
  for (auto& [_, s] : series) plot.series.push_back(std::move(s));
  return render_svg(plot);
}

std::optional<std::pair<double, double>> step_hull(const std::vector<Aggregate>& aggs, const std::string& method,
                                                   const std::string& problem, long budget,
                                                   const std::function<bool(const Aggregate&)>& pred) {
  std::optional<std::pair<double, double>> hull;
  for (const auto& a : aggs) {
    if (a.method != method || a.problem != problem || a.budget != budget || !pred(a)) continue;
    if (!hull) {
      hull = std::make_pair(a.step, a.step);
    } else {
      hull->first = std::min(hull->first, a.step);
      hull->second = std::max(hull->second, a.step);
    }
  }
  return hull;
}

// ---- theorem verification ---------------------------------------------------

void VerifyConfig::validate() const {
  if (taus.empty()) throw InvalidArgument("method list is empty (no tau values)");
  for (int t : taus) (void)bdf_scheme(t);
  if (inner_m.empty()) throw InvalidArgument("inner solve list is empty");
  for (int m : inner_m) {
    if (m < 0) throw InvalidArgument("inner_m entries must be >= 0");
  }
  if (cases < 0 || iterations < 2 || max_dimension < 1 || !(max_condition >= 1.0) || workers < 1)
    throw InvalidArgument("invalid verify sizes");
}

void from_json(const nlohmann::json& j, VerifyConfig& c) {
  reject_unknown(j, {"cases", "seed", "taus", "inner_m", "iterations", "max_dimension", "max_condition", "workers",
                     "nonconvex", "expect_fail", "output"});
  take(j, "cases", c.cases);
  take(j, "seed", c.seed);
  take(j, "taus", c.taus);
  take(j, "inner_m", c.inner_m);
  take(j, "iterations", c.iterations);
  take(j, "max_dimension", c.max_dimension);
  take(j, "max_condition", c.max_condition);
  take(j, "workers", c.workers);
  take(j, "nonconvex", c.nonconvex);
  take(j, "expect_fail", c.expect_fail);
  take(j, "output", c.output);
}

void to_json(nlohmann::json& j, const VerifyConfig& c) {
  j = nlohmann::json{{"cases", c.cases}, {"seed", c.seed}, {"taus", c.taus}, {"inner_m", c.inner_m},
                     {"iterations", c.iterations}, {"max_dimension", c.max_dimension},
                     {"max_condition", c.max_condition}, {"workers", c.workers}, {"nonconvex", c.nonconvex},
                     {"expect_fail", c.expect_fail}, {"output", c.output}};
}

nlohmann::json VerifySummary::to_json(bool include_passing) const {
  nlohmann::json out{{"cases", cases.size()}, {"asserted", asserted}, {"unmet", unmet},
                     {"violations", violations}, {"seconds", seconds}};
  nlohmann::json failures = nlohmann::json::array();
  nlohmann::json all = nlohmann::json::array();
  for (const auto& c : cases) {
    nlohmann::json entry{{"suite", c.suite}, {"seed", c.seed}, {"description", c.description}, {"report", c.report}};
    if (c.report.violations > 0 && c.report.asserted) failures.push_back(entry);
    if (include_passing) all.push_back(std::move(entry));
  }
  out["failures"] = std::move(failures);
  if (include_passing) out["reports"] = std::move(all);
  return out;
}

namespace {

void tally(VerifySummary& s) {
  s.asserted = s.unmet = s.violations = 0;
  for (const auto& c : s.cases) {
    if (c.report.asserted) {
      ++s.asserted;
      if (c.report.violations > 0) ++s.violations;
    } else {
      ++s.unmet;
    }
  }
}

bool strong_admissible(double alpha, double L, int m, double weight) {
  if (m == 0) return weight / (1.0 + alpha) <= 1.0;
  const double g = inner_gd_gamma(alpha, 1.0, L, m);
  return g < alpha / (2.0 + alpha) && weight * (g + (1.0 + g) / (1.0 + alpha)) <= 1.0;
}

MethodSpec multistep_spec(int tau, double alpha, int m) {
  MethodSpec spec;
  spec.kind = tau == 1 ? MethodKind::Ppm : MethodKind::Bdm;
  spec.tau = tau;
  spec.alpha_bar = alpha / bdf_scheme(tau).xi_bar_value;
  spec.inner.m = m;
  spec.inner.mode = m == 0 ? InnerMode::ExactQuadratic : InnerMode::InnerGd;
  return spec;
}

RunOptions check_options(int iterations, const MethodSpec& spec, bool gamma) {
  RunOptions opt;
  opt.max_iterations = iterations;
  opt.budget = static_cast<long>(iterations) * std::max<long>(1, spec.gradient_cost());
  opt.keep_iterates = true;
  opt.measure_gamma = gamma;
  return opt;
}

VerifyCase strong_case(const VerifyConfig& config, std::size_t index) {
  const std::uint64_t seed = derive_seed(config.seed, index);
  CounterRng rng(seed, kFuzzStream);
  std::vector<double> grid = log_grid(1e-3, 1e8, 221);

  for (int attempt = 0; attempt < 64; ++attempt) {
    const auto n = static_cast<std::size_t>(1 + rng.below(static_cast<std::uint64_t>(config.max_dimension)));
    const double kappa = n == 1 ? 1.0 : std::pow(10.0, rng.uniform(0.0, std::log10(config.max_condition)));
    std::vector<double> eig{1.0};
    if (n > 1) eig.push_back(kappa);
    while (eig.size() < n) eig.push_back(std::pow(kappa, rng.uniform()));
    const int tau = config.taus[rng.below(config.taus.size())];
    const int m = config.inner_m[rng.below(config.inner_m.size())];
    const BdfScheme scheme = bdf_scheme(tau);
    const double weight = scheme.abs_weight_sum();

    std::vector<double> admissible;
    for (double a : grid) {
      if (strong_admissible(a, kappa, m, weight)) admissible.push_back(a);
    }
    if (admissible.empty()) continue;
    double alpha = admissible[rng.below(admissible.size())] * rng.uniform(1.0, 1.05);
    if (!strong_admissible(alpha, kappa, m, weight)) alpha = admissible.front();

    const Spectrum spectrum(eig, SpectrumKind::Custom, seed);
    const QuadraticProblem q = make_quadratic(spectrum, seed);
    Vector x0(static_cast<Eigen::Index>(n));
    for (auto& v : x0) v = rng.normal();
    const MethodSpec spec = multistep_spec(tau, alpha, m);
    const RunTrace trace = run(spec, q, x0, check_options(config.iterations, spec, m > 0));
    const Vector x_star = Vector::Zero(static_cast<Eigen::Index>(n));

    VerifyCase vc;
    vc.suite = "strong_fuzz";
    vc.seed = seed;
    std::ostringstream d;
    d << "n=" << n << " kappa=" << format_double(kappa, 6) << " tau=" << tau << " inner="
      << (m == 0 ? std::string("exact") : "gd" + std::to_string(m)) << " alpha=" << format_double(alpha, 8);
    vc.description = d.str();
    if (m == 0) {
      vc.report = check_strong_exact(trace, 1.0, alpha, scheme, x_star);
    } else {
      double gamma = 0.0;
      for (double g : trace.gamma_anchor) gamma = std::max(gamma, g);
      gamma = std::min(gamma, std::nextafter(1.0, 0.0));
      vc.report = check_strong_approx(trace, 1.0, alpha, scheme, gamma, x_star);
      vc.report.notes.push_back("gamma measured against the anchor; formula bound " +
                                format_double(inner_gd_gamma(alpha, 1.0, kappa, m), 6));
    }
    return vc;
  }
  VerifyCase vc;
  vc.suite = "strong_fuzz";
  vc.seed = seed;
  vc.description = "no admissible step found";
  vc.report.theorem = "strong_approx";
  vc.report.asserted = false;
  vc.report.unmet.push_back("no admissible step for the drawn problems");
  return vc;
}

}  // namespace

VerifySummary strong_convexity_fuzz(const VerifyConfig& config) {
  config.validate();
  const auto start = std::chrono::steady_clock::now();
  VerifySummary s;
  s.cases.resize(static_cast<std::size_t>(config.cases));
  parallel_for(s.cases.size(), config.workers, [&](std::size_t i) { s.cases[i] = strong_case(config, i); });
  tally(s);
  s.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return s;
}

VerifySummary nonconvex_suite(const VerifyConfig& config) {
  config.validate();
  const auto start = std::chrono::steady_clock::now();
  VerifySummary s;

  const std::uint64_t seed = derive_seed(config.seed, 1u << 20);
  CounterRng rng(seed, kFuzzStream);
  std::vector<double> eig{0.0, 1.0};
  while (eig.size() < 10) eig.push_back(rng.uniform());
  const QuadraticProblem q = make_quadratic(Spectrum(eig, SpectrumKind::Custom, seed), seed);
  Vector x0(10);
  for (auto& v : x0) v = rng.normal();

  const int iters = std::max(config.iterations, 200);
  for (double alpha : {1.0, 10.0, 100.0}) {
    for (int tau : {1, 2, 3}) {
      const MethodSpec spec = multistep_spec(tau, alpha, 0);
      const RunTrace trace = run(spec, q, x0, check_options(iters, spec, false));
      VerifyCase vc;
      vc.suite = "nonconvex";
      vc.seed = seed;
      vc.description = "convex quadratic, exact, tau=" + std::to_string(tau) + " alpha=" + format_double(alpha);
      vc.report = check_nonconvex_exact(trace, 0.0, alpha, bdf_scheme(tau), 0.0);
      s.cases.push_back(std::move(vc));
    }
    for (int tau : {1, 2}) {
      const MethodSpec spec = multistep_spec(tau, alpha, 8);
      const RunTrace trace = run(spec, q, x0, check_options(iters, spec, true));
      double gamma = 0.0;
      for (double g : trace.gamma_displacement) gamma = std::max(gamma, g);
      VerifyCase vc;
      vc.suite = "nonconvex";
      vc.seed = seed;
      vc.description = "convex quadratic, inner gd8, tau=" + std::to_string(tau) + " alpha=" + format_double(alpha);
      if (gamma >= 1.0) {
        vc.report.theorem = "nonconvex_approx";
        vc.report.asserted = false;
        vc.report.gamma = gamma;
        vc.report.unmet.push_back("measured gamma >= 1");
      } else {
        vc.report = check_nonconvex_approx(trace, 0.0, alpha, bdf_scheme(tau), gamma, 0.0);
      }
      s.cases.push_back(std::move(vc));
    }
  }

  const FunctionObjective cosine = cosine_objective();
  for (double alpha : {0.5, 1.5}) {
    MethodSpec spec;
    spec.kind = MethodKind::Ppm;
    spec.alpha_bar = alpha;
    spec.inner.mode = InnerMode::Reference;
    const RunTrace trace = run(spec, cosine, Vector::Constant(1, 1.0), check_options(iters, spec, false));
    VerifyCase vc;
    vc.suite = "nonconvex";
    vc.seed = 0;
    vc.description = "cos, reference prox, alpha=" + format_double(alpha);
    vc.report = check_nonconvex_exact(trace, -1.0, alpha, bdf_scheme(1), -1.0);
    s.cases.push_back(std::move(vc));
  }
  tally(s);
  s.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return s;
}

VerifyCase injected_violation() {
  const QuadraticProblem q = make_quadratic(Spectrum({1.0, 100.0}), 11);
  const double alpha = 100.0;
  const MethodSpec spec = multistep_spec(1, alpha, 1);
  const RunTrace trace = run(spec, q, Vector::Ones(2), check_options(30, spec, false));
  VerifyCase vc;
  vc.suite = "injected";
  vc.seed = 11;
  vc.description = "inner gd1 at alpha=100, far above the admissible window, checked against the exact-solve rate";
  vc.report = check_strong_exact(trace, 1.0, alpha, bdf_scheme(1), Vector::Zero(2));
  vc.report.notes.push_back("deliberate violation");
  return vc;
}

VerifySummary run_verify(const VerifyConfig& config) {
  config.validate();
  const auto start = std::chrono::steady_clock::now();
  VerifySummary all = strong_convexity_fuzz(config);
  if (config.nonconvex) {
    VerifySummary nc = nonconvex_suite(config);
    for (auto& c : nc.cases) all.cases.push_back(std::move(c));
  }
  if (config.expect_fail) all.cases.push_back(injected_violation());
  tally(all);
  all.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return all;
}

}  // namespace bdflow
