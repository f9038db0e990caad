#include <doctest.h>

#include <cmath>

#include "bdflow/errors.hpp"
#include "bdflow/integrators.hpp"
#include "bdflow/rng.hpp"

using namespace bdflow;

namespace {

Vector random_vector(std::size_t n, std::uint64_t seed) {
  CounterRng rng(seed, 77);
  Vector v(static_cast<Eigen::Index>(n));
  for (auto& x : v) x = rng.normal();
  return v;
}

Vector scalar(double v) { return Vector::Constant(1, v); }

InnerSolveSpec exact_spec() { return InnerSolveSpec{0, std::nullopt, InnerMode::ExactQuadratic}; }

}  // namespace

TEST_SUITE("integrators") {
  TEST_CASE("gradient descent step") {
    const auto f = half_square();
    CHECK(gd_step(f, scalar(1.0), 1.0)(0) == doctest::Approx(0.0));
    const auto q = make_quadratic(Spectrum({1.0, 10.0}), 3);
    const Vector x = random_vector(2, 1);
    CHECK(gd_step(q, x, 0.0) == x);
    const Matrix I = Matrix::Identity(2, 2);
    CHECK((gd_step(q, x, 0.13) - (I - 0.13 * q.dense()) * x).norm() < 1e-12);

    const FunctionObjective bad(1, [](const Vector&) { return 0.0; },
                                [](const Vector&) { return scalar(std::nan("")); });
    CHECK_THROWS_AS(gd_step(bad, scalar(1.0), 0.1), NumericalFailure);
  }

  TEST_CASE("runge kutta step") {
    const auto f = half_square();
    CHECK(rk4_step(f, scalar(1.0), 1.0)(0) == doctest::Approx(0.375).epsilon(1e-14));
    const auto q = make_quadratic(Spectrum({1.0, 10.0}), 3);
    const Vector x = random_vector(2, 2);
    CHECK(rk4_step(q, x, 0.0) == x);
    const double a = 0.2;
    const Matrix Z = a * q.dense();
    const Matrix I = Matrix::Identity(2, 2);
    const Matrix P = I - Z + Z * Z / 2.0 - Z * Z * Z / 6.0 + Z * Z * Z * Z / 24.0;
    CHECK((rk4_step(q, x, a) - P * x).norm() < 1e-10);
  }

  TEST_CASE("exact proximal step") {
    const auto q1 = make_quadratic(Spectrum({1.0}), 1);
    CHECK(exact_prox_quadratic(q1, scalar(1.0), 1.0)(0) == doctest::Approx(0.5));
    const auto q = make_quadratic(Spectrum({1.0, 10.0}), 4);
    CHECK(exact_prox_quadratic(q, Vector::Zero(2), 2.0).norm() == 0.0);
    const Vector v = random_vector(2, 3);
    const Vector p = exact_prox_quadratic(q, v, 0.7);
    CHECK((p + 0.7 * q.dense() * p - v).norm() < 1e-10 * v.norm());
  }

  TEST_CASE("inner gradient prox") {
    const auto f = half_square();
    InnerSolveSpec one{1, 1.0 / 3.0, InnerMode::InnerGd};
    CHECK(inner_gd_prox(f, scalar(1.0), 1.0, one, scalar(1.0))(0) == doctest::Approx(2.0 / 3.0));
    InnerSolveSpec none{0, std::nullopt, InnerMode::InnerGd};
    CHECK(inner_gd_prox(f, scalar(1.0), 1.0, none, scalar(5.0))(0) == 5.0);

    const auto q = make_quadratic(make_spectrum(SpectrumKind::Uniform12, 8, 2), 2);
    const Vector v = random_vector(8, 5);
    const Vector exact = exact_prox_quadratic(q, v, 1.3);
    InnerSolveSpec many{10000, std::nullopt, InnerMode::InnerGd};
    CHECK((inner_gd_prox(q, v, 1.3, many, v) - exact).norm() < 1e-8);

    double previous = (v - exact).norm();
    for (int m = 1; m <= 40; ++m) {
      InnerSolveSpec s{m, std::nullopt, InnerMode::InnerGd};
      const double d = (inner_gd_prox(q, v, 1.3, s, v) - exact).norm();
      CHECK(d <= previous * (1 + 1e-12) + 1e-14 * v.norm());
      previous = d;
    }

    const FunctionObjective no_l(1, [](const Vector& x) { return x.squaredNorm(); },
                                 [](const Vector& x) { Vector g = 2 * x; return g; });
    InnerSolveSpec autob{3, std::nullopt, InnerMode::InnerGd};
    CHECK_THROWS_AS(inner_gd_prox(no_l, scalar(1.0), 1.0, autob, scalar(1.0)), InvalidArgument);
    CHECK(autob.resolve_beta(q, 2.0) == doctest::Approx(2.0 / (2.0 * q.spectrum().L() + 1.0)));
  }

  TEST_CASE("history ring buffer") {
    History h(3);
    CHECK_FALSE(h.full());
    const std::vector<double> w{0.2, 0.3, 0.5};
    h.push(scalar(1));
    h.push(scalar(2));
    CHECK_THROWS_AS(h.combine(w), StateError);
    h.push(scalar(3));
    h.push(scalar(4));
    CHECK(h.full());
    CHECK(h[0](0) == 2);
    CHECK(h.newest()(0) == 4);
    CHECK(h.combine(w)(0) == doctest::Approx(0.2 * 2 + 0.3 * 3 + 0.5 * 4));
  }

  TEST_CASE("multistep step") {
    const auto q = make_quadratic(Spectrum({1.0, 10.0}), 6);
    const Vector x = random_vector(2, 6);
    History h1(1);
    h1.push(x);
    CHECK((bdm_step(q, h1, bdf_scheme(1), 0.8, exact_spec()) - exact_prox_quadratic(q, x, 0.8)).cwiseAbs().maxCoeff() <
          1e-12);

    History fixed(3);
    for (int i = 0; i < 3; ++i) fixed.push(Vector::Zero(2));
    CHECK(bdm_step(q, fixed, bdf_scheme(3), 2.0, exact_spec()).norm() < 1e-15);

    const auto s = make_quadratic(Spectrum({1.0}), 1);
    History h2(2);
    h2.push(scalar(1.0));
    h2.push(scalar(0.5));
    const auto scheme = bdf_scheme(2);
    CHECK(bdm_anchor(h2, scheme)(0) == doctest::Approx(1.0 / 3.0));
    const double alpha_bar = 1.0 / scheme.xi_bar_value;
    CHECK(bdm_step(s, h2, scheme, alpha_bar, exact_spec())(0) == doctest::Approx(1.0 / 6.0));
    InnerSolveSpec longgd{10000, std::nullopt, InnerMode::InnerGd};
    CHECK(bdm_step(half_square(), h2, scheme, alpha_bar, longgd)(0) == doctest::Approx(1.0 / 6.0).epsilon(1e-10));

    History partial(2);
    partial.push(scalar(1.0));
    CHECK_THROWS_AS(bdm_step(s, partial, scheme, 1.0, exact_spec()), StateError);
    CHECK_THROWS_AS(prox(half_square(), scalar(1.0), 1.0, exact_spec()), InvalidArgument);
  }

  TEST_CASE("gradient normalization") {
    Vector g(2);
    g << 3, 4;
    const Vector n = normalize_gradient(g, 0.0);
    CHECK(n(0) == doctest::Approx(0.6));
    CHECK(n(1) == doctest::Approx(0.8));
    CHECK(normalize_gradient(Vector::Zero(3), 0.0).norm() == 0.0);
    for (std::uint64_t s = 0; s < 10; ++s) CHECK(normalize_gradient(random_vector(5, s), 0.0).norm() == doctest::Approx(1.0));
  }

  TEST_CASE("small steps barely move") {
    const auto q = make_quadratic(Spectrum({1.0, 10.0}), 2);
    const Vector x = random_vector(2, 9);
    const double a = 1e-12;
    CHECK((gd_step(q, x, a) - x).norm() < 1e-8);
    CHECK((rk4_step(q, x, a) - x).norm() < 1e-8);
    CHECK((exact_prox_quadratic(q, x, a) - x).norm() < 1e-8);
    History h(2);
    h.push(x);
    h.push(x);
    CHECK((bdm_step(q, h, bdf_scheme(2), a, exact_spec()) - x).norm() < 1e-8);
  }

  TEST_CASE("contraction measurement") {
    const auto q = make_quadratic(Spectrum({1.0, 2.0}), 8);
    const Vector along_mu = q.basis().col(0);
    InnerSolveSpec m1{1, std::nullopt, InnerMode::InnerGd};
    CHECK(measure_gamma(q, along_mu, 1.0, m1) == doctest::Approx(1.0 / 3.0));
    InnerSolveSpec m0{0, std::nullopt, InnerMode::InnerGd};
    CHECK(measure_gamma(q, random_vector(2, 1), 1.0, m0) == doctest::Approx(1.0));
    InnerSolveSpec big{2000, std::nullopt, InnerMode::InnerGd};
    CHECK(measure_gamma(q, random_vector(2, 1), 1.0, big) < 1e-12);
    CHECK(measure_gamma(q, Vector::Zero(2), 1.0, m1) == 0.0);

    const auto wide = make_quadratic(make_spectrum(SpectrumKind::Squared, 10), 3);
    const double mu = wide.spectrum().mu(), L = wide.spectrum().L();
    for (double alpha : {0.1, 1.0, 10.0, 100.0}) {
      for (int m : {1, 2, 5, 20}) {
        InnerSolveSpec s{m, std::nullopt, InnerMode::InnerGd};
        const double bound = std::pow(1.0 - (alpha * mu + 1.0) / (alpha * L + 1.0), m);
        for (std::uint64_t seed = 0; seed < 5; ++seed)
          CHECK(measure_gamma(wide, random_vector(10, seed), alpha, s) <= bound * (1 + 1e-9) + 1e-12);
      }
    }
  }

  TEST_CASE("budgeted runs") {
    const auto q = make_quadratic(make_spectrum(SpectrumKind::Uniform12, 6, 1), 1);
    const Vector x0 = random_vector(6, 3);
    RunOptions opt;
    opt.budget = 24;

    MethodSpec bdm;
    bdm.kind = MethodKind::Bdm;
    bdm.tau = 3;
    bdm.inner.m = 8;
    auto t = run(bdm, q, x0, opt);
    CHECK(t.iterations == 3);
    CHECK(t.gradient_calls == 24);

    MethodSpec rk;
    rk.kind = MethodKind::Rk4;
    t = run(rk, q, x0, opt);
    CHECK(t.iterations == 6);
    CHECK(t.gradient_calls == 24);

    MethodSpec gd;
    gd.alpha_bar = 0.1;
    opt.budget = 25;
    t = run(gd, q, x0, opt);
    CHECK(t.iterations == 25);
    CHECK(t.gradient_calls == 25);
    CHECK(t.reason == Termination::BudgetExhausted);

    opt.budget = 7;
    CHECK_THROWS_AS(run(bdm, q, x0, opt), InvalidArgument);
    MethodSpec exact = bdm;
    exact.inner.mode = InnerMode::ExactQuadratic;
    opt.budget = 100;
    CHECK_THROWS_AS(run(exact, q, x0, opt), InvalidArgument);
    opt.max_iterations = 12;
    t = run(exact, q, x0, opt);
    CHECK(t.iterations == 12);
    CHECK(t.gradient_calls == 0);
    CHECK(t.reason == Termination::IterationCap);
  }

  TEST_CASE("monotone descent in the stable regime") {
    const auto q = make_quadratic(Spectrum({1.0, 10.0}), 12);
    MethodSpec gd;
    gd.alpha_bar = 2.0 / 11.0;
    RunOptions opt;
    opt.budget = 50;
    const auto t = run(gd, q, random_vector(2, 4), opt);
    REQUIRE(t.objective.size() == 51);
    for (std::size_t i = 1; i < t.objective.size(); ++i) CHECK(t.objective[i] < t.objective[i - 1]);
  }

  TEST_CASE("divergence is recorded") {
    const auto q = make_quadratic(Spectrum({1.0, 100.0}), 12);
    MethodSpec gd;
    gd.alpha_bar = 1.0;
    RunOptions opt;
    opt.budget = 100000;
    const auto t = run(gd, q, random_vector(2, 4), opt);
    CHECK(t.reason == Termination::Diverged);
    CHECK(std::isinf(t.final_objective()));
    CHECK(t.iterations < 100000);
  }

  TEST_CASE("normalized flow moves by exactly alpha") {
    const auto q = make_quadratic(make_spectrum(SpectrumKind::Squared, 5), 2);
    MethodSpec gd;
    gd.alpha_bar = 0.01;
    gd.normalized = true;
    RunOptions opt;
    opt.budget = 20;
    opt.keep_iterates = true;
    const auto t = run(gd, q, random_vector(5, 8), opt);
    for (std::size_t i = 1; i < t.iterates.size(); ++i)
      CHECK((t.iterates[i] - t.iterates[i - 1]).norm() == doctest::Approx(0.01).epsilon(1e-9));
  }

  TEST_CASE("gamma traces and warm-up") {
    const auto q = make_quadratic(make_spectrum(SpectrumKind::Uniform12, 4, 5), 5);
    MethodSpec bdm;
    bdm.kind = MethodKind::Bdm;
    bdm.tau = 2;
    bdm.inner.m = 3;
    RunOptions opt;
    opt.budget = 30;
    opt.measure_gamma = true;
    opt.keep_iterates = true;
    const auto t = run(bdm, q, random_vector(4, 1), opt);
    CHECK(t.gamma_anchor.size() == 10);
    CHECK(t.gamma_displacement.size() == 10);
    // warm-up step is plain approximate PPM from x0 with alpha = alpha_bar * xi_bar
    const Vector w = prox(q, t.iterates[0], bdm.effective_alpha(), bdm.inner);
    CHECK((t.iterates[1] - w).norm() < 1e-14);
  }

  TEST_CASE("method spec json") {
    MethodSpec s;
    s.kind = MethodKind::Bdm;
    s.tau = 3;
    s.alpha_bar = 2.5;
    s.inner.m = 5;
    s.inner.beta = 0.1;
    s.normalized = true;
    const nlohmann::json j = s;
    CHECK(j.at("method") == "bdm");
    CHECK(j.at("inner_beta") == 0.1);
    const auto back = j.get<MethodSpec>();
    CHECK(back.kind == MethodKind::Bdm);
    CHECK(back.tau == 3);
    CHECK(back.alpha_bar == 2.5);
    CHECK(back.inner.m == 5);
    CHECK(*back.inner.beta == 0.1);
    CHECK(back.normalized);

    const auto autob = nlohmann::json::parse(R"({"method":"ppm","alpha_bar":1,"inner_m":8,"inner_beta":"auto"})")
                           .get<MethodSpec>();
    CHECK_FALSE(autob.inner.beta.has_value());
    CHECK_THROWS_AS(nlohmann::json::parse(R"({"method":"gd","alpha":1})").get<MethodSpec>(), InvalidArgument);
    CHECK_THROWS_AS(nlohmann::json::parse(R"({"method":"newton"})").get<MethodSpec>(), InvalidArgument);
  }
}
