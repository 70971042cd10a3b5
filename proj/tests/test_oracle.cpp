#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <stdexcept>

#include <Eigen/Eigenvalues>

#include "emopt/emopt.hpp"
#include "support.hpp"

using namespace emopt;

TEST_CASE("rotation sweep eigenvalues on a known matrix") {
  Matrix a(2, 2);
  a << 2, 1, 1, 2;
  const Vector ev = oracle::jacobi_eigenvalues(a);
  REQUIRE(ev[0] == Catch::Approx(1.0));
  REQUIRE(ev[1] == Catch::Approx(3.0));
}

TEST_CASE("rotation sweep eigenvalues match the library solver") {
  auto gen = test::seeded(101);
  for (int trial = 0; trial < 20; ++trial) {
    const Index p = 1 + trial % 6;
    Matrix a = test::random_spd(gen, p, 0.2, 5.0);
    a -= 2.0 * Matrix::Identity(p, p);  // allow indefinite input
    const Vector mine = oracle::jacobi_eigenvalues(a);
    Eigen::SelfAdjointEigenSolver<Matrix> es(a);
    REQUIRE((mine - es.eigenvalues()).cwiseAbs().maxCoeff() < 1e-10);
  }
}

TEST_CASE("central differences recover a polynomial gradient") {
  const auto f = [](const Vector& x) {
    return x[0] * x[0] * x[0] * x[1] + 2.0 * x[1] * x[1];
  };
  Vector x(2);
  x << 0.7, -0.4;
  const Vector g = oracle::finite_diff_grad(f, x);
  REQUIRE(g[0] == Catch::Approx(3.0 * 0.49 * -0.4).epsilon(1e-7));
  REQUIRE(g[1] == Catch::Approx(0.343 - 1.6).epsilon(1e-7));
}

TEST_CASE("box grid search hits an on-lattice minimizer") {
  const auto f = [](const Vector& x) {
    return (x[0] - 0.3) * (x[0] - 0.3) + (x[1] - 0.7) * (x[1] - 0.7);
  };
  const oracle::GridResult best =
      oracle::grid_search_box(f, Vector::Zero(2), Vector::Ones(2), 11);
  REQUIRE(best.value == Catch::Approx(0.0).margin(1e-15));
  REQUIRE(best.point[0] == Catch::Approx(0.3));
  REQUIRE(best.point[1] == Catch::Approx(0.7));
}

TEST_CASE("box grid search enforces its evaluation budget") {
  const auto f = [](const Vector& x) { return x.squaredNorm(); };
  REQUIRE_THROWS_AS(oracle::grid_search_box(f, Vector::Zero(5), Vector::Ones(5), 50),
                    std::invalid_argument);
  REQUIRE_THROWS_AS(oracle::grid_search_box(f, Vector::Zero(1), Vector::Ones(1), 1),
                    std::invalid_argument);
}

TEST_CASE("simplex lattice search finds the centroid") {
  const auto f = [](const Vector& x) { return x.squaredNorm(); };
  const oracle::GridResult best = oracle::grid_search_simplex(f, 3, 9);
  REQUIRE(best.value == Catch::Approx(1.0 / 3.0));
  REQUIRE(best.point.sum() == Catch::Approx(1.0));
  for (int j = 0; j < 3; ++j) REQUIRE(best.point[j] == Catch::Approx(1.0 / 3.0));
}

TEST_CASE("projected gradient solves box and halfspace quadratics") {
  // 0.5 x^2 - 2x on [0, 1] has its constrained minimum at the upper bound.
  QuadraticObjective q1{Matrix::Identity(1, 1), -2.0 * Vector::Ones(1)};
  Vector x0 = Vector::Zero(1);
  const Vector xb = oracle::projected_gradient(
      q1, oracle::BoxProjection{Vector::Zero(1), Vector::Ones(1)}, x0, 0.5, 1e-13);
  REQUIRE(xb[0] == Catch::Approx(1.0).margin(1e-10));

  // 0.5||x||^2 - 2 x_0 subject to x_0 + x_1 <= 1: projection of (2, 0).
  Vector b(2);
  b << -2, 0;
  QuadraticObjective q2{Matrix::Identity(2, 2), b};
  Vector a(2);
  a << 1, 1;
  const Vector xh = oracle::projected_gradient(
      q2, oracle::HalfspaceProjection{a, 1.0}, Vector::Zero(2), 0.5, 1e-13);
  REQUIRE(xh[0] == Catch::Approx(1.5).margin(1e-9));
  REQUIRE(xh[1] == Catch::Approx(-0.5).margin(1e-9));

  const Vector xu = oracle::projected_gradient(q2, oracle::UnconstrainedProjection{},
                                               Vector::Zero(2), 0.5, 1e-13);
  REQUIRE(xu[0] == Catch::Approx(2.0).margin(1e-9));
  REQUIRE(xu[1] == Catch::Approx(0.0).margin(1e-9));
}

TEST_CASE("vertex enumeration maximizes over a bounded polygon") {
  // max 2x + y over x + y <= 3, x <= 2, x >= 0, y >= 0: optimum (2, 1).
  Matrix a(2, 4);
  a << 1, 1, -1, 0,
       1, 0, 0, -1;
  Vector c(4), obj(2);
  c << 3, 2, 0, 0;
  obj << 2, 1;
  const oracle::VertexResult best = oracle::lp_vertex_enum(a, c, obj);
  REQUIRE(best.value == Catch::Approx(5.0));
  REQUIRE(best.point[0] == Catch::Approx(2.0));
  REQUIRE(best.point[1] == Catch::Approx(1.0));
}

TEST_CASE("vertex enumeration rejects unbounded or vertex-free programs") {
  // max y with only y <= 1: bounded, but the optimal face has no vertex.
  Matrix a1(2, 1);
  a1 << 0, 1;
  Vector c1(1), obj1(2);
  c1 << 1;
  obj1 << 0, 1;
  REQUIRE_THROWS_AS(oracle::lp_vertex_enum(a1, c1, obj1), std::runtime_error);

  // max x + y with x + y >= 0 written as -(x + y) <= 0: unbounded above.
  Matrix a2(2, 2);
  a2 << -1, 0,
        -1, -1;
  Vector c2(2), obj2(2);
  c2 << 0, 0;
  obj2 << 1, 1;
  REQUIRE_THROWS_AS(oracle::lp_vertex_enum(a2, c2, obj2), std::runtime_error);
}

TEST_CASE("stationarity report at interior and boundary points") {
  Vector grad(2), g_vals(1);
  Matrix g_grads(1, 2);

  // Inactive constraint: the multiplier stays zero and the full gradient
  // norm is reported.
  grad << 1, 2;
  g_vals << -1;
  g_grads << 1, 0;
  oracle::KktReport rep = oracle::kkt_residual_at(grad, g_vals, g_grads);
  REQUIRE(rep.stationarity == Catch::Approx(std::sqrt(5.0)));
  REQUIRE(rep.max_violation == 0.0);
  REQUIRE(rep.multipliers[0] == 0.0);

  // 0.5||x||^2 - 2 x_0 at (1, 0) with x_0 <= 1 active: multiplier 1 makes
  // the Lagrangian gradient vanish.
  grad << -1, 0;
  g_vals << 0;
  rep = oracle::kkt_residual_at(grad, g_vals, g_grads);
  REQUIRE(rep.stationarity == Catch::Approx(0.0).margin(1e-10));
  REQUIRE(rep.multipliers[0] == Catch::Approx(1.0));
  REQUIRE(rep.max_residual() < 1e-10);

  // Violated constraint shows up in the violation channel.
  g_vals << 0.5;
  rep = oracle::kkt_residual_at(grad, g_vals, g_grads);
  REQUIRE(rep.max_violation == Catch::Approx(0.5));
}

TEST_CASE("surrogate probe accepts a true majorizer and flags a broken one") {
  auto gen = test::seeded(113);
  const auto f = [](const Vector& x) { return std::pow(x[0], 4); };
  const auto sampler = [&]() {
    Vector t(1), a(1);
    t << test::uniform(gen, -1.0, 1.0);
    a << test::uniform(gen, -1.0, 1.0);
    return std::make_pair(t, a);
  };

  const auto good = [&](const Vector& x, const Vector& a) {
    return f(a) + 4.0 * std::pow(a[0], 3) * (x[0] - a[0]) + 8.0 * (x[0] - a[0]) * (x[0] - a[0]);
  };
  oracle::MajorizationReport rep = oracle::majorization_probe(good, f, sampler, 500);
  REQUIRE(rep.min_gap >= -1e-12);
  REQUIRE(rep.max_anchor_gap < 1e-12);

  const auto broken = [&](const Vector& x, const Vector& a) { return good(x, a) - 0.05; };
  rep = oracle::majorization_probe(broken, f, sampler, 500);
  REQUIRE(rep.min_gap < -0.04);
  REQUIRE(rep.max_anchor_gap == Catch::Approx(0.05));
}
