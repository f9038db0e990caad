#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "bdflow/errors.hpp"
#include "bdflow/integrators.hpp"
#include "bdflow/neural.hpp"
#include "bdflow/rng.hpp"

using namespace bdflow;

namespace {

// He-scaled weights plus noise on every entry, biases included, so no unit sits exactly on a ReLU kink.
Vector random_theta(const MlpObjective& mlp, std::uint64_t seed) {
  Vector theta = mlp.initial_parameters(seed);
  CounterRng rng(seed, 55);
  for (auto& v : theta) v += 0.1 * rng.normal();
  return theta;
}

bool same_relu_pattern(const MlpObjective& mlp, const Vector& a, const Vector& b) {
  for (Eigen::Index k = 0; k < mlp.data().x.cols(); ++k) {
    const auto pa = mlp.forward(a, mlp.data().x.col(k)).pre, pb = mlp.forward(b, mlp.data().x.col(k)).pre;
    for (std::size_t l = 0; l + 1 < pa.size(); ++l)
      if (((pa[l].array() > 0.0) != (pb[l].array() > 0.0)).any()) return false;
  }
  return true;
}

// Stencils straddling a ReLU kink are redrawn.
double relative_fd_error(const MlpObjective& mlp, const Vector& theta, std::uint64_t seed) {
  const Vector g = mlp.gradient(theta);
  CounterRng rng(seed, 99);
  double worst = 0.0;
  const double h = 1e-5;
  int used = 0;
  for (int draw = 0; used < 20 && draw < 1000; ++draw) {
    const auto i = static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(theta.size())));
    Vector plus = theta, minus = theta;
    plus(i) += h;
    minus(i) -= h;
    if (!same_relu_pattern(mlp, plus, minus)) continue;
    ++used;
    const double fd = (mlp.value(plus) - mlp.value(minus)) / (2 * h);
    const double scale = std::max({std::abs(fd), std::abs(g(i)), 1e-3});
    worst = std::max(worst, std::abs(fd - g(i)) / scale);
  }
  return used == 20 ? worst : INFINITY;
}

}  // namespace

TEST_SUITE("neural") {
  TEST_CASE("datasets") {
    for (auto kind : {DatasetKind::Rings, DatasetKind::XorBlobs}) {
      const auto a = gen_dataset(kind, 200, 11);
      const auto b = gen_dataset(kind, 200, 11);
      CHECK(a.x == b.x);
      CHECK(a.y == b.y);
      CHECK(a.size() == 200);
      int positive = 0;
      for (double y : a.y) {
        CHECK((y == 1.0 || y == -1.0));
        positive += y > 0;
      }
      CHECK(positive == 100);
      CHECK(gen_dataset(kind, 200, 12).x != a.x);
    }
    const auto r = gen_dataset(DatasetKind::Rings, 101, 1);
    for (Eigen::Index k = 0; k < r.x.cols(); ++k) {
      const double radius = r.x.col(k).norm();
      if (r.y(k) > 0) CHECK(radius <= 0.5);
      else CHECK((radius >= 0.9 - 1e-12 && radius <= 1.3 + 1e-12));
    }
    CHECK(r.to_csv().rfind("x1,x2,y\n", 0) == 0);
    CHECK(parse_dataset_kind("xor") == DatasetKind::XorBlobs);
    CHECK_THROWS_AS(gen_dataset(DatasetKind::Rings, 3, 1), InvalidArgument);
  }

  TEST_CASE("shape layout") {
    const MlpShape s;
    CHECK(s.parameter_count() == (2 * 10 + 10) + 5 * (10 * 10 + 10) + (10 + 1));
    CHECK(s.offset(0) == 0);
    CHECK(s.offset(1) == 30);
    const nlohmann::json j = s;
    const auto back = j.get<MlpShape>();
    CHECK(back.depth == 7);
    CHECK(back.width == 10);
  }

  TEST_CASE("forward pass") {
    const auto data = gen_dataset(DatasetKind::Rings, 40, 2);
    const MlpObjective deep(MlpShape{}, data);
    const Vector zero = Vector::Zero(static_cast<Eigen::Index>(deep.dimension()));
    CHECK(deep.forward(zero, data.x.col(0)).score == 0.0);
    CHECK(deep.value(zero) == doctest::Approx(40 * std::log(2.0)));
    CHECK(accuracy(deep, zero, data) == 0.0);

    const MlpObjective linear(MlpShape{1, 10, true}, data);
    Vector theta(3);
    theta << 1.0, 0.0, 0.0;
    Vector x(2);
    x << 3.0, -7.0;
    CHECK(linear.forward(theta, x).score == doctest::Approx(3.0));
    CHECK_THROWS_AS(linear.forward(theta, Vector::Zero(3)), InvalidArgument);
    CHECK_THROWS_AS(linear.value(Vector::Zero(4)), InvalidArgument);

    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      const double v = deep.value(random_theta(deep, seed));
      CHECK(std::isfinite(v));
      CHECK(v > 0.0);
    }
    const Matrix xs = data.x;
    const Vector theta0 = random_theta(deep, 3);
    const Vector sc = deep.scores(theta0, xs);
    CHECK(sc(5) == doctest::Approx(deep.forward(theta0, data.x.col(5)).score));
  }

  TEST_CASE("gradient against finite differences") {
    const auto data = gen_dataset(DatasetKind::Rings, 60, 4);
    const MlpObjective mlp(MlpShape{}, data);
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      const Vector theta = random_theta(mlp, 100 + seed);
      CHECK(relative_fd_error(mlp, theta, seed) < 1e-4);
      CHECK((mlp.backward(theta) - mlp.gradient(theta)).norm() == 0.0);
    }
    const MlpObjective xo(MlpShape{3, 6, true}, gen_dataset(DatasetKind::XorBlobs, 50, 5));
    CHECK(relative_fd_error(xo, random_theta(xo, 8), 1) < 1e-4);
  }

  TEST_CASE("zero parameters") {
    const auto data = gen_dataset(DatasetKind::Rings, 30, 4);
    const MlpShape shape{3, 5, true};
    const MlpObjective mlp(shape, data);
    const Vector g = mlp.gradient(Vector::Zero(static_cast<Eigen::Index>(mlp.dimension())));
    // only the output bias sees a nonzero activation
    const auto last = static_cast<Eigen::Index>(shape.offset(2));
    CHECK(g.head(last).norm() == 0.0);
    CHECK(g.segment(last, 5).norm() == 0.0);
    CHECK(g(g.size() - 1) == doctest::Approx(-0.5 * data.y.sum()));
  }

  TEST_CASE("sample weights scale the gradient") {
    const auto data = gen_dataset(DatasetKind::XorBlobs, 40, 6);
    const MlpObjective one(MlpShape{3, 6, true}, data);
    const MlpObjective two(MlpShape{3, 6, true}, data, Vector::Constant(40, 2.0));
    const Vector theta = one.initial_parameters(2);
    CHECK((two.gradient(theta) - 2.0 * one.gradient(theta)).norm() <= 1e-12 * one.gradient(theta).norm());
    CHECK(two.value(theta) == doctest::Approx(2.0 * one.value(theta)));
  }

  TEST_CASE("accuracy conventions") {
    auto data = gen_dataset(DatasetKind::XorBlobs, 64, 3);
    const MlpObjective mlp(MlpShape{3, 8, true}, data);
    const Vector theta = mlp.initial_parameters(1);
    const double a = accuracy(mlp, theta, data);
    auto flipped = data;
    flipped.y = -data.y;
    CHECK(accuracy(mlp, theta, flipped) == doctest::Approx(1.0 - a));
  }

  TEST_CASE("rings are learnable") {
    const auto data = gen_dataset(DatasetKind::Rings, 200, 1);
    const MlpObjective mlp(MlpShape{2, 10, true}, data, Vector::Constant(200, 1.0 / 200.0));
    MethodSpec gd;
    gd.alpha_bar = 0.5;
    RunOptions o;
    o.budget = 20000;
    o.record_every = 20000;
    const auto t = run(gd, mlp, mlp.initial_parameters(4), o);
    CHECK(t.reason == Termination::BudgetExhausted);
    CHECK(accuracy(mlp, t.final_iterate, data) > 0.95);
  }

  TEST_CASE("normalized flow on the network") {
    const auto data = gen_dataset(DatasetKind::Rings, 50, 2);
    const MlpObjective mlp(MlpShape{}, data);
    MethodSpec gd;
    gd.alpha_bar = 0.05;
    gd.normalized = true;
    RunOptions o;
    o.budget = 10;
    o.keep_iterates = true;
    const auto t = run(gd, mlp, mlp.initial_parameters(3), o);
    for (std::size_t i = 1; i < t.iterates.size(); ++i)
      CHECK((t.iterates[i] - t.iterates[i - 1]).norm() == doctest::Approx(0.05).epsilon(1e-6));
  }

  TEST_CASE("checkpoint round trip") {
    const MlpShape shape{4, 6, true};
    const MlpObjective mlp(shape, gen_dataset(DatasetKind::Rings, 20, 1));
    const Vector theta = mlp.initial_parameters(9);
    const auto dir = std::filesystem::temp_directory_path() / "bdflow_ckpt_test";
    std::filesystem::remove_all(dir);
    const auto path = dir / "theta.bin";
    save_checkpoint(path, theta, shape);
    CHECK(std::filesystem::file_size(path) == static_cast<std::uintmax_t>(theta.size() * 8));
    MlpShape read;
    const Vector back = load_checkpoint(path, &read);
    CHECK(back == theta);
    CHECK(read.depth == 4);
    CHECK(read.width == 6);
    std::filesystem::remove_all(dir);
  }
}
