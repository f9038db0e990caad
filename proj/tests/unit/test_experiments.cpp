#include <doctest.h>

#include <atomic>
#include <cmath>

#include "bdflow/errors.hpp"
#include "bdflow/experiments.hpp"

using namespace bdflow;

namespace {

QuadSweepConfig small_quad() {
  QuadSweepConfig c;
  c.methods = {"gd", "rk4", "bdm3"};
  c.step_min = 1e-2;
  c.step_max = 10.0;
  c.step_count = 5;
  c.budgets = {24, 96};
  c.spectra = {SpectrumKind::Uniform12, SpectrumKind::Exponential};
  c.n = 12;
  c.trials = 2;
  return c;
}

const TableCell* find_cell(const std::vector<TableCell>& cells, const std::string& label, double L,
                           const std::string& metric) {
  for (const auto& c : cells)
    if (c.row == label && c.L == L && c.metric == metric) return &c;
  return nullptr;
}

}  // namespace

TEST_SUITE("experiments") {
  TEST_CASE("grids and names") {
    const auto g = log_grid(1e-3, 1e3, 7);
    REQUIRE(g.size() == 7);
    CHECK(g.front() == doctest::Approx(1e-3));
    CHECK(g[3] == doctest::Approx(1.0));
    CHECK(g.back() == doctest::Approx(1e3));
    CHECK_THROWS_AS(log_grid(1.0, 2.0, 1), InvalidArgument);
    CHECK_THROWS_AS(log_grid(0.0, 2.0, 3), InvalidArgument);

    const auto b = method_from_name("bdm3", 8);
    CHECK(b.kind == MethodKind::Bdm);
    CHECK(b.tau == 3);
    CHECK(b.gradient_cost() == 8);
    CHECK(method_from_name("rk44", 8).kind == MethodKind::Rk4);
    CHECK_THROWS_AS(method_from_name("bdm9", 8), InvalidArgument);
    CHECK(method_token(b) == "bdm:tau=3:m=8:beta=auto");
  }

  TEST_CASE("worker pool") {
    std::vector<std::atomic<int>> hits(100);
    parallel_for(100, 4, [&](std::size_t i) { hits[i]++; });
    for (auto& h : hits) CHECK(h.load() == 1);
    CHECK_THROWS_AS(parallel_for(10, 3, [](std::size_t i) {
                      if (i == 7) throw NumericalFailure("boom");
                    }),
                    NumericalFailure);
    CHECK_THROWS_AS(parallel_for(1, 0, [](std::size_t) {}), InvalidArgument);
  }

  TEST_CASE("config parsing") {
    const auto j = nlohmann::json::parse(R"({"methods":["gd"],"budgets":[30],"spectra":["squared"],"n":5})");
    const auto c = j.get<QuadSweepConfig>();
    CHECK(c.methods == std::vector<std::string>{"gd"});
    CHECK(c.spectra.front() == SpectrumKind::Squared);
    CHECK(c.step_count == 61);
    CHECK_THROWS_AS(nlohmann::json::parse(R"({"method":["gd"]})").get<QuadSweepConfig>(), InvalidArgument);
    CHECK_THROWS_AS(nlohmann::json::parse(R"({"iteration":5})").get<DnnSweepConfig>(), InvalidArgument);
    CHECK_THROWS_AS(nlohmann::json::parse(R"({"case":5})").get<VerifyConfig>(), InvalidArgument);

    QuadSweepConfig bad = small_quad();
    bad.methods.clear();
    CHECK_THROWS_AS(bad.validate(), InvalidArgument);
    bad = small_quad();
    bad.budgets = {4};
    CHECK_THROWS_AS(bad.validate(), InvalidArgument);
    VerifyConfig v;
    v.taus.clear();
    CHECK_THROWS_AS(v.validate(), InvalidArgument);

    QuadSweepConfig a = small_quad(), b = small_quad();
    b.workers = 7;
    b.output = "elsewhere";
    CHECK(config_hash(nlohmann::json(a)) == config_hash(nlohmann::json(b)));
    b.seed = 2;
    CHECK(config_hash(nlohmann::json(a)) != config_hash(nlohmann::json(b)));
    CHECK(config_hash(nlohmann::json(a)).size() == 16);
  }

  TEST_CASE("quadratic sweep") {
    auto c = small_quad();
    const auto one = quadratic_sweep(c);
    c.workers = 4;
    const auto four = quadratic_sweep(c);
    CHECK(one.rows_csv() == four.rows_csv());
    CHECK(one.aggregates_csv() == four.aggregates_csv());
    CHECK(one.rows.size() == 3 * 5 * 2 * 2 * 2);
    for (const auto& r : one.rows) {
      if (r.method == "BDM3" && r.budget == 24) CHECK(r.iterations == 3);
      if (r.method == "RK44" && r.budget == 24 && r.reason == "budget") CHECK(r.iterations == 6);
      CHECK(r.gradient_calls <= r.budget);
    }
    for (const auto& a : one.aggregates) {
      CHECK(a.count == 2);
      if (std::isfinite(a.max)) {
        CHECK(a.min <= a.mean);
        CHECK(a.mean <= a.max);
      }
    }
    const std::string header = one.rows_csv().substr(0, one.rows_csv().find('\n'));
    CHECK(header.rfind("method,step,trial,seed,final_loss,reason", 0) == 0);
    CHECK(header.find("config_hash") != std::string::npos);
  }

  TEST_CASE("unstable gradient descent diverges") {
    QuadSweepConfig c;
    c.methods = {"gd"};
    c.spectra = {SpectrumKind::Uniform12};
    c.budgets = {500};
    c.n = 20;
    c.step_min = 1.2;
    c.step_max = 1.5;
    c.step_count = 2;
    const auto r = quadratic_sweep(c);
    for (const auto& row : r.rows) {
      CHECK(std::isinf(row.final_loss));
      CHECK(row.reason == "diverged");
    }
  }

  TEST_CASE("aggregation and hull") {
    std::vector<SweepRow> rows;
    for (int t = 0; t < 3; ++t) {
      for (double s : {0.1, 1.0, 10.0}) {
        SweepRow r;
        r.method = "GD";
        r.problem = "p";
        r.budget = 5;
        r.step = s;
        r.trial = t;
        r.final_loss = s < 5 ? 1.0 + t : INFINITY;
        rows.push_back(r);
      }
    }
    const auto aggs = aggregate(rows, false);
    REQUIRE(aggs.size() == 3);
    CHECK(aggs[0].min == 1.0);
    CHECK(aggs[0].mean == doctest::Approx(2.0));
    CHECK(aggs[0].max == 3.0);
    CHECK(std::isinf(aggs[2].mean));
    const auto hull = step_hull(aggs, "GD", "p", 5, [](const Aggregate& a) { return std::isfinite(a.max); });
    REQUIRE(hull);
    CHECK(hull->first == 0.1);
    CHECK(hull->second == 1.0);
    CHECK_FALSE(step_hull(aggs, "PPM", "p", 5, [](const Aggregate&) { return true; }));
  }

  TEST_CASE("dnn sweep") {
    DnnSweepConfig c;
    c.methods = {"gd", "ppm"};
    c.step_min = 1e-2;
    c.step_max = 1e3;
    c.step_count = 3;
    c.iterations = 30;
    c.points = 40;
    c.depth = 3;
    c.width = 6;
    c.trials = 2;
    const auto a = dnn_sweep(c);
    c.workers = 3;
    const auto b = dnn_sweep(c);
    CHECK(a.rows_csv() == b.rows_csv());
    CHECK(a.rows.size() == 2 * 3 * 2);
    for (const auto& r : a.rows) {
      CHECK(r.accuracy >= 0.0);
      CHECK(r.accuracy <= 1.0);
      CHECK(r.iterations == 30);
    }
    for (const auto& g : a.aggregates) {
      CHECK(g.min <= g.mean);
      CHECK(g.mean <= g.max);
    }
    const auto svg = sweep_svg(a, "rings", 30, true);
    CHECK(svg.rfind("<svg", 0) == 0);
  }

  TEST_CASE("absurd normalized step stays near chance") {
    DnnSweepConfig c;
    c.methods = {"gd"};
    c.step_min = 1e3;
    c.step_max = 2e3;
    c.step_count = 2;
    c.iterations = 200;
    c.trials = 1;
    const auto r = dnn_sweep(c);
    for (const auto& row : r.rows) CHECK(row.accuracy <= 0.65);
  }

  TEST_CASE("tables") {
    const auto cells = compute_tables();
    const auto* gd2 = find_cell(cells, "GD", 2, "stability_limit");
    const auto* gd10 = find_cell(cells, "GD", 10, "stability_limit");
    const auto* gd100 = find_cell(cells, "GD", 100, "stability_limit");
    REQUIRE(gd2);
    REQUIRE(gd10);
    REQUIRE(gd100);
    CHECK(gd2->value == doctest::Approx(1.0).epsilon(1e-6));
    CHECK(gd10->value == doctest::Approx(0.2).epsilon(1e-6));
    CHECK(gd100->value == doctest::Approx(0.02).epsilon(1e-6));
    const auto* ppm = find_cell(cells, "PPM(4,10)", 2, "optimal_rho");
    REQUIRE(ppm);
    CHECK(std::abs(ppm->value - 0.0935) <= 0.005);
    const auto csv = tables_csv(cells);
    CHECK(csv.rfind("method,tau,m,alpha_bar,L,metric,value,paper_value,abs_dev", 0) == 0);
  }

  TEST_CASE("verification suites") {
    VerifyConfig c;
    c.cases = 40;
    c.iterations = 40;
    const auto s = strong_convexity_fuzz(c);
    CHECK(s.cases.size() == 40);
    CHECK(s.violations == 0);
    CHECK(s.asserted > 0);
    const auto n = nonconvex_suite(c);
    CHECK(n.violations == 0);
    CHECK(n.asserted > 0);
    const auto bad = injected_violation();
    CHECK(bad.report.asserted);
    CHECK(bad.report.violations > 0);
    const auto j = s.to_json();
    CHECK(j.at("violations") == 0);
  }
}
