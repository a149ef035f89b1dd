#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "mmfloor/gauge.hpp"
#include "mmfloor/geometry.hpp"
#include "mmfloor/linear_program.hpp"
#include "support/random_models.hpp"

using namespace mmfloor;

namespace {

Matrix rows(std::initializer_list<std::initializer_list<double>> data) {
  const Index m = static_cast<Index>(data.size());
  const Index n = static_cast<Index>(data.begin()->size());
  Matrix out(m, n);
  Index i = 0;
  for (const auto& row : data) {
    Index j = 0;
    for (double v : row) out(i, j++) = v;
    ++i;
  }
  return out;
}

Vector vec(std::initializer_list<double> data) {
  Vector out(static_cast<Index>(data.size()));
  Index i = 0;
  for (double v : data) out(i++) = v;
  return out;
}

DiscreteDistribution two_point(double x1, double x2, double q1) {
  DiscreteDistribution d;
  d.points = Matrix(2, 1);
  d.points << x1, x2;
  d.weights = Vector(2);
  d.weights << q1, 1.0 - q1;
  return d;
}

// Independent polar oracle: max (y, lambda) s.t. (x_i, lambda) <= 1.
double polar_support_lp(const Vector& y, const Matrix& points) {
  optim::LinearProgram lp;
  lp.sense = optim::Sense::Maximize;
  lp.cost = y;
  lp.ineq_matrix = points;
  lp.ineq_rhs = Vector::Ones(points.rows());
  lp.lower_bounds = Vector::Constant(points.cols(), -kInf);
  auto sol = optim::solve(lp);
  REQUIRE(sol.status == optim::LpStatus::Optimal);
  return sol.objective;
}

}  // namespace

TEST_CASE("span rank detection") {
  CHECK(linear_span(Matrix::Zero(1, 1)).rank() == 0);
  CHECK(linear_span(rows({{1, 0}, {-1, 0}})).rank() == 1);
  CHECK(linear_span(rows({{1, 0}, {0, 1}, {-1, -1}})).rank() == 2);
  auto basis = linear_span(rows({{2, 0}, {-3, 0}})).basis;
  REQUIRE(basis.cols() == 1);
  CHECK(std::abs(std::abs(basis(0, 0)) - 1.0) < 1e-12);
  CHECK(std::abs(basis(1, 0)) < 1e-12);
}

TEST_CASE("interior test on crafted sets") {
  auto sym = origin_in_relative_interior(rows({{1}, {-1}}));
  CHECK(sym.holds);
  CHECK(sym.margin == doctest::Approx(0.5).epsilon(1e-9));
  CHECK(sym.witness.sum() == doctest::Approx(1.0).epsilon(1e-9));

  auto onesided = origin_in_relative_interior(rows({{1}, {2}}));
  CHECK_FALSE(onesided.holds);
  REQUIRE(onesided.separator.size() == 1);
  Vector prods = rows({{1}, {2}}) * onesided.separator;
  CHECK(prods.minCoeff() >= -1e-12);
  CHECK(prods.maxCoeff() > 1e-9);

  // 0 is on the relative boundary: representable, but only with zero mass on
  // the third point.
  Matrix tri = rows({{1, 0}, {-1, 0}, {0, 1}});
  auto boundary = origin_in_relative_interior(tri);
  CHECK_FALSE(boundary.holds);
  CHECK(std::abs(boundary.margin) <= 1e-9);
  REQUIRE(boundary.separator.size() == 2);
  CHECK(boundary.separator(0) == doctest::Approx(0.0).epsilon(1e-9));
  CHECK(boundary.separator(1) == doctest::Approx(1.0).epsilon(1e-9));

  auto singleton = origin_in_relative_interior(Matrix::Zero(1, 2));
  CHECK(singleton.holds);
  CHECK(singleton.margin == doctest::Approx(1.0));
}

TEST_CASE("interior witness on random centered sets") {
  std::mt19937 rng(99u);
  for (int trial = 0; trial < 40; ++trial) {
    auto dist = testing::centered_distribution(rng, 2 + trial % 2, 4 + trial % 3);
    auto rep = origin_in_relative_interior(dist.points);
    REQUIRE(rep.holds);
    CHECK(rep.margin > 1e-9);
    Vector recon = dist.points.transpose() * rep.witness;
    CHECK(recon.cwiseAbs().maxCoeff() <= 1e-9);
    CHECK(rep.witness.minCoeff() >= rep.margin - 1e-9);
  }
}

TEST_CASE("support function basics") {
  Matrix pm = rows({{1}, {-1}});
  CHECK(support_function(vec({0.0}), pm).value == 0.0);
  CHECK(support_function(vec({1.0}), pm).value == 1.0);
  auto diag = support_function(vec({1.0, 1.0}), rows({{1, 0}, {0, 1}}));
  CHECK(diag.value == 1.0);
}

TEST_CASE("one-dimensional gauge matches interval geometry") {
  Matrix pts = rows({{-0.5}, {2.0}});  // conv = [-0.5, 2]
  auto neg = minkowski_gauge(vec({-0.3}), pts);
  CHECK(neg.value == doctest::Approx(0.6).epsilon(1e-12));
  auto pos = minkowski_gauge(vec({1.0}), pts);
  CHECK(pos.value == doctest::Approx(0.5).epsilon(1e-12));

  auto zero = minkowski_gauge(vec({0.0}), pts);
  CHECK(zero.value == 0.0);
  CHECK(zero.witness.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("gauge witness and polar certificates on random sets") {
  std::mt19937 rng(2024u);
  std::uniform_real_distribution<double> coord(-1.0, 1.0);
  for (int trial = 0; trial < 80; ++trial) {
    auto dist = testing::centered_distribution(rng, 2, 5);
    Vector y(2);
    y << coord(rng), coord(rng);
    auto g = minkowski_gauge(y, dist.points);
    const double oracle = polar_support_lp(y, dist.points);
    CHECK(std::abs(g.value - oracle) <= 1e-9 * (1.0 + std::abs(oracle)));
    // witness reconstructs y and its mass equals the value
    Vector recon = dist.points.transpose() * g.witness;
    CHECK((recon - y).cwiseAbs().maxCoeff() <= 1e-9);
    CHECK(std::abs(g.witness.sum() - g.value) <= 1e-9 * (1.0 + g.value));
    CHECK(g.witness.minCoeff() >= -1e-12);
    // polar point feasibility and tightness
    CHECK((dist.points * g.polar_point).maxCoeff() <= 1.0 + 1e-9);
    CHECK(std::abs(y.dot(g.polar_point) - g.value) <= 1e-9 * (1.0 + g.value));
  }
}

TEST_CASE("gauge error channels") {
  Matrix line = rows({{1, 0}, {-1, 0}});
  CHECK_THROWS_AS(minkowski_gauge(vec({0.0, 1.0}), line), InputError);
  Matrix onesided = rows({{1}, {2}});
  CHECK_THROWS_AS(minkowski_gauge(vec({-1.0}), onesided), NaViolation);
}

TEST_CASE("downside norm evaluation") {
  auto dist = two_point(1.0, -1.0, 0.5);
  CHECK(downside_norm(1.0, vec({0.0}), dist) == 0.0);
  CHECK(downside_norm(kInf, vec({0.0}), dist) == 0.0);
  CHECK(downside_norm(1.0, vec({1.0}), dist) == doctest::Approx(0.5));
  auto skew = two_point(1.0, -std::pow(2.0, -3), 0.5);
  CHECK(downside_norm(kInf, vec({1.0}), skew) == doctest::Approx(std::pow(2.0, -3)));
  // raw support-side value may be negative when the hull misses the origin
  DiscreteDistribution pos = two_point(1.0, 2.0, 0.5);
  CHECK(downside_norm(kInf, vec({1.0}), pos) == doctest::Approx(-1.0));
}

TEST_CASE("downside support closed forms in dimension one") {
  auto dist = two_point(1.0, -1.0, 0.5);
  CHECK(downside_support(kInf, vec({0.0}), dist).value == 0.0);
  CHECK(downside_support(kInf, vec({0.2}), dist).value == doctest::Approx(0.2).epsilon(1e-12));

  // doubling-block shape: kappa = {1, -2^-j}, conditional weights (2/3, 1/3)
  const int j = 1;
  auto block = two_point(1.0, -std::pow(2.0, -j), 2.0 / 3.0);
  const double a0 = (std::pow(2.0, j - 0.5) + 0.5 - std::pow(2.0, -j - 1)) / 3.0;
  auto sup = downside_support(kInf, vec({a0}), block);
  CHECK(a0 == doctest::Approx(0.5547378).epsilon(1e-6));
  CHECK(sup.value == doctest::Approx(1.1094757).epsilon(1e-6));
  CHECK(sup.value == doctest::Approx(std::pow(2.0, j) * a0).epsilon(1e-12));
  // maximizer is feasible and attaining
  CHECK(downside_norm(kInf, sup.maximizer, block) <= 1.0 + 1e-9);
  CHECK(sup.maximizer.dot(vec({a0})) == doctest::Approx(sup.value).epsilon(1e-12));
}

TEST_CASE("univariate closed form agrees with the optimization path") {
  std::mt19937 rng(555u);
  std::uniform_real_distribution<double> mag(0.1, 2.0);
  std::uniform_int_distribution<int> nn(2, 5);
  for (int trial = 0; trial < 60; ++trial) {
    auto dist = testing::centered_distribution(rng, 1, nn(rng));
    const double a = (trial % 2 ? -1 : 1) * mag(rng);
    for (double p : {1.0, 2.0, kInf}) {
      const double closed = downside_support_univariate(p, a, dist);
      optim::GaugeProgram prog;
      prog.p = p;
      prog.points = dist.points;
      prog.weights = dist.weights;
      prog.span_basis = linear_span(dist.points).basis;
      prog.target = vec({a});
      auto mini = optim::minimize_gauge(prog);
      REQUIRE(mini.value > 0.0);
      CHECK(std::abs(closed - 1.0 / mini.value) <= 1e-9 * (1.0 + closed));
      auto sup = downside_support(p, vec({a}), dist);
      CHECK(std::abs(closed - sup.value) <= 1e-9 * (1.0 + closed));
      CHECK(downside_norm(p, sup.maximizer, dist) <= 1.0 + 1e-9);
      CHECK(sup.maximizer(0) * a == doctest::Approx(sup.value).epsilon(1e-9));
    }
  }
}

TEST_CASE("gauge minimization homogeneity") {
  std::mt19937 rng(31u);
  for (int trial = 0; trial < 20; ++trial) {
    auto dist = testing::centered_distribution(rng, 2, 5);
    optim::GaugeProgram prog;
    prog.points = dist.points;
    prog.weights = dist.weights;
    prog.span_basis = linear_span(dist.points).basis;
    prog.target = vec({0.4, -0.3});
    for (double p : {1.0, 2.0, kInf}) {
      prog.p = p;
      const double base = optim::minimize_gauge(prog).value;
      optim::GaugeProgram scaled = prog;
      scaled.target = 3.0 * prog.target;
      CHECK(optim::minimize_gauge(scaled).value ==
            doctest::Approx(base / 3.0).epsilon(1e-9));
    }
  }
}

TEST_CASE("planar p=2 support agrees with a dense direction grid") {
  std::mt19937 rng(777u);
  std::uniform_real_distribution<double> coord(-1.0, 1.0);
  for (int trial = 0; trial < 12; ++trial) {
    auto dist = testing::centered_distribution(rng, 2, 5);
    Vector a(2);
    a << coord(rng), coord(rng);
    if (a.cwiseAbs().maxCoeff() < 0.1) a << 0.5, -0.2;
    auto sup = downside_support(2.0, a, dist);

    const int steps = 200000;
    double best = kInf;
    for (int k = 0; k < steps; ++k) {
      const double phi = 2.0 * M_PI * k / steps;
      Vector h(2);
      h << std::cos(phi), std::sin(phi);
      const double along = a.dot(h);
      if (along <= 1e-9) continue;
      best = std::min(best, downside_norm(2.0, h, dist) / along);
    }
    const double grid_value = 1.0 / best;
    CHECK(std::abs(sup.value - grid_value) <= 1e-4 * (1.0 + grid_value));
    CHECK(downside_norm(2.0, sup.maximizer, dist) <= 1.0 + 1e-9);
    CHECK(a.dot(sup.maximizer) == doctest::Approx(sup.value).epsilon(1e-9));
  }
}

TEST_CASE("downside gauge positivity under the interior condition") {
  std::mt19937 rng(4242u);
  std::uniform_real_distribution<double> coord(-1.0, 1.0);
  for (int trial = 0; trial < 30; ++trial) {
    auto dist = testing::centered_distribution(rng, 2, 4);
    Vector h(2);
    h << coord(rng), coord(rng);
    if (h.cwiseAbs().maxCoeff() == 0.0) continue;
    Matrix basis = linear_span(dist.points).basis;
    Vector hs = basis * (basis.transpose() * h);  // restrict to the span
    if (hs.cwiseAbs().maxCoeff() < 1e-9) continue;
    for (double p : {1.0, 2.0, kInf}) CHECK(downside_norm(p, hs, dist) > 0.0);
  }
}

TEST_CASE("multidimensional support delegation for p = inf") {
  std::mt19937 rng(808u);
  for (int trial = 0; trial < 40; ++trial) {
    auto dist = testing::centered_distribution(rng, 3, 6);
    Vector f = Vector::Ones(dist.size());
    Vector a = dist.points.transpose() * dist.weights.cwiseProduct(f);  // zero here
    a = dist.points.row(0).transpose() * 0.3;  // any span vector works
    auto sup = downside_support(kInf, a, dist);
    auto gauge = minkowski_gauge(-a, dist.points);
    CHECK(sup.value == doctest::Approx(gauge.value).epsilon(1e-12));
    CHECK(downside_norm(kInf, sup.maximizer, dist) <= 1.0 + 1e-9);
    CHECK(a.dot(sup.maximizer) == doctest::Approx(sup.value).epsilon(1e-9));
  }
}

TEST_CASE("support target outside the span is rejected") {
  DiscreteDistribution dist;
  dist.points = rows({{1, 0}, {-1, 0}});
  dist.weights = vec({0.5, 0.5});
  CHECK_THROWS_AS(downside_support(kInf, vec({0.0, 1.0}), dist), InputError);
}

TEST_CASE("arbitrage geometry raises through the support computation") {
  DiscreteDistribution dist = two_point(1.0, 2.0, 0.5);
  CHECK_THROWS_AS(downside_support(kInf, vec({0.5}), dist), NaViolation);
  try {
    downside_support(kInf, vec({0.5}), dist);
  } catch (const NaViolation& e) {
    REQUIRE(e.separator().size() == 1);
    Vector prods = dist.points * e.separator();
    CHECK(prods.minCoeff() >= -1e-12);
    CHECK(prods.maxCoeff() > 1e-9);
  }
}

TEST_CASE("distribution validation lists problems") {
  DiscreteDistribution bad;
  bad.points = rows({{1.0}, {1.0}});
  bad.weights = vec({0.5, 0.7});
  CHECK_THROWS_AS(validate_distribution(bad), ValidationError);
  try {
    validate_distribution(bad);
  } catch (const ValidationError& e) {
    CHECK(e.violations().size() >= 2);  // coincident points and mass sum
  }
}
