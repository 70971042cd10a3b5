#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <stdexcept>
#include <vector>

#include "emopt/emopt.hpp"
#include "support.hpp"

using namespace emopt;

namespace {

std::vector<double> objective_column(const IterateTrace& trace) {
  std::vector<double> out;
  out.reserve(trace.rows.size());
  for (const auto& r : trace.rows) out.push_back(r.objective_original);
  return out;
}

}  // namespace

TEST_CASE("fixed-metric descent reaches the unconstrained minimum") {
  Matrix q(2, 2);
  q << 2, 0.5, 0.5, 1;
  Vector b(2);
  b << 1, -1;
  QuadraticObjective obj{q, b};
  SolverConfig cfg;
  cfg.grad_tol = 1e-12;
  const SolveResult res = solve_unconstrained_qp(obj, std::nullopt, Vector::Ones(2), cfg);
  REQUIRE(res.status == Status::Converged);
  const Vector star = q.ldlt().solve(-b);
  REQUIRE((res.theta_star - star).norm() < 1e-9);
  REQUIRE(res.objective_star == Catch::Approx(obj.eval(star)));
  REQUIRE(test::nonincreasing(objective_column(res.trace), 1e-12));
}

TEST_CASE("fixed-metric descent contracts at the predicted geometric rate") {
  Matrix q(2, 2);
  q << 2, 0.5, 0.5, 1;
  Vector b(2);
  b << 1, -1;
  QuadraticObjective obj{q, b};
  const Vector s = diagonal_sigma_from_q(q, 0.9);
  const double rho = 1.0 - oracle::jacobi_eigenvalues(q)[0] * s.minCoeff();
  REQUIRE(rho > 0.0);
  REQUIRE(rho < 1.0);

  Vector theta0(2);
  theta0 << 1, 1;
  const double fstar = obj.eval(Vector(q.ldlt().solve(-b)));
  const double f0 = obj.eval(theta0);
  SolverConfig cfg;
  cfg.max_iter = 120;
  cfg.grad_tol = 0.0;
  const SolveResult res = solve_unconstrained_qp(obj, std::nullopt, theta0, cfg);
  for (const auto& row : res.trace.rows)
    REQUIRE(row.objective_original - fstar <=
            std::pow(rho, row.iter) * (f0 - fstar) + 1e-12);
}

TEST_CASE("fixed-metric descent validates an explicit metric") {
  QuadraticObjective obj{Matrix::Identity(1, 1), Vector::Constant(1, -1.0)};
  REQUIRE_THROWS_AS(
      solve_unconstrained_qp(obj, Matrix::Constant(1, 1, 3.0), Vector::Zero(1)),
      std::invalid_argument);
  const SolveResult res =
      solve_unconstrained_qp(obj, Matrix::Constant(1, 1, 0.5), Vector::Zero(1));
  REQUIRE(res.status == Status::Converged);
  REQUIRE(res.theta_star[0] == Catch::Approx(1.0).margin(1e-7));
}

TEST_CASE("soft-threshold sweep matches the analytic penalized solutions") {
  // 0.5 t^2 - 3t + |t| is minimized at t = 2; with -0.5t the penalty wins
  // and the minimum sits at zero.
  SolverConfig cfg;
  cfg.grad_tol = 1e-12;
  QuadraticObjective obj1{Matrix::Identity(1, 1), Vector::Constant(1, -3.0)};
  SolveResult res = solve_l1_qp(obj1, Vector::Constant(1, 0.5), Vector::Ones(1), cfg);
  REQUIRE(res.status == Status::Converged);
  REQUIRE(res.theta_star[0] == Catch::Approx(2.0).margin(1e-10));
  REQUIRE(res.objective_star == Catch::Approx(-2.0).margin(1e-10));

  QuadraticObjective obj2{Matrix::Identity(1, 1), Vector::Constant(1, -0.5)};
  res = solve_l1_qp(obj2, Vector::Constant(1, 0.5), Vector::Ones(1), cfg);
  REQUIRE(res.status == Status::Converged);
  REQUIRE(res.theta_star[0] == Catch::Approx(0.0).margin(1e-12));
  REQUIRE(res.objective_star == Catch::Approx(0.0).margin(1e-12));
}

TEST_CASE("soft-threshold sweep agrees with a split-variable reference") {
  auto gen = test::seeded(131);
  for (int trial = 0; trial < 5; ++trial) {
    const Matrix q = test::random_spd(gen, 3, 0.5, 3.0);
    const Vector b = test::random_vector(gen, 3, -2.0, 2.0);
    QuadraticObjective obj{q, b};
    SolverConfig cfg;
    cfg.grad_tol = 1e-13;
    cfg.max_iter = 500000;
    const SolveResult res =
        solve_l1_qp(obj, diagonal_sigma_from_q(q, 0.9), Vector::Zero(3), cfg);
    REQUIRE(res.status == Status::Converged);
    const Vector ref = test::l1_reference(obj);
    REQUIRE((res.theta_star - ref).cwiseAbs().maxCoeff() < 1e-6);
    REQUIRE(test::nonincreasing(objective_column(res.trace), 1e-12));
  }
}

TEST_CASE("soft-threshold sweep validates its step sizes") {
  QuadraticObjective obj{Matrix::Identity(1, 1), Vector::Zero(1)};
  REQUIRE_THROWS_AS(solve_l1_qp(obj, Vector::Constant(1, -1.0), Vector::Zero(1)),
                    std::invalid_argument);
  REQUIRE_THROWS_AS(solve_l1_qp(obj, Vector::Constant(1, 2.0), Vector::Zero(1)),
                    std::invalid_argument);
}

TEST_CASE("box polynomial solver takes the documented first step") {
  // F(t) = (t - 0.5)^2 on [0, 1] from t = 0.25: one update lands exactly on
  // 11/38 when the bound slack is negligible.
  PolynomialObjective p({{1.0, {2}}, {-1.0, {1}}, {0.25, {0}}}, 1);
  SolverConfig cfg;
  cfg.delta = 1e-18;
  cfg.max_iter = 1;
  cfg.grad_tol = 0.0;
  const SolveResult res = solve_poly_rect(p, Vector::Zero(1), Vector::Ones(1),
                                          Vector::Constant(1, 0.25), cfg);
  REQUIRE(res.status == Status::MaxIter);
  REQUIRE(res.iterations == 1);
  REQUIRE(res.theta_star[0] == Catch::Approx(11.0 / 38.0).margin(1e-9));
  REQUIRE(res.trace.rows.size() == 1);
  REQUIRE(res.trace.rows[0].interior_margin > 0.0);
}

TEST_CASE("box polynomial solver stays at an interior stationary point") {
  PolynomialObjective p({{1.0, {2}}, {-1.0, {1}}, {0.25, {0}}}, 1);
  const SolveResult res =
      solve_poly_rect(p, Vector::Zero(1), Vector::Ones(1), Vector::Constant(1, 0.5));
  REQUIRE(res.status == Status::Converged);
  REQUIRE(res.iterations == 0);
  REQUIRE(res.theta_star[0] == Catch::Approx(0.5));
}

TEST_CASE("box polynomial solver matches the analytic cubic minimum") {
  // F(x) = x^3 - x on [-1, 1] has its minimum at 1/sqrt(3).
  PolynomialObjective p({{1.0, {3}}, {-1.0, {1}}}, 1);
  Vector l(1), u(1);
  l << -1;
  u << 1;
  SolverConfig cfg;
  cfg.grad_tol = 1e-12;
  const SolveResult res = solve_poly_rect(p, l, u, Vector::Constant(1, 0.5), cfg);
  REQUIRE(res.status == Status::Converged);
  REQUIRE(res.theta_star[0] == Catch::Approx(1.0 / std::sqrt(3.0)).margin(1e-6));
  REQUIRE(res.objective_star == Catch::Approx(-2.0 / (3.0 * std::sqrt(3.0))).margin(1e-9));
  REQUIRE(test::nonincreasing(objective_column(res.trace), 1e-12));
  for (const auto& row : res.trace.rows) REQUIRE(row.interior_margin > 0.0);
}

TEST_CASE("box polynomial solver reports bound violations") {
  PolynomialObjective p({{1.0, {2}}, {-1.0, {1}}, {0.25, {0}}}, 1);
  SolverConfig cfg;
  cfg.k_override = 0.1;  // below F(0.1) = 0.16
  const SolveResult res = solve_poly_rect(p, Vector::Zero(1), Vector::Ones(1),
                                          Vector::Constant(1, 0.1), cfg);
  REQUIRE(res.status == Status::NumericalFailure);
}

TEST_CASE("box polynomial solver validates its start") {
  PolynomialObjective p({{1.0, {2}}}, 1);
  REQUIRE_THROWS_AS(solve_poly_rect(p, Vector::Zero(1), Vector::Ones(1), Vector::Zero(1)),
                    std::invalid_argument);
  REQUIRE_THROWS_AS(solve_poly_rect(p, Vector::Zero(1), Vector::Ones(1), Vector::Ones(2)),
                    std::invalid_argument);
}

TEST_CASE("simplex solver takes the documented first step") {
  // F = l1^2 + l2^2 from the reduced point 0.25: one update lands on 7/22.
  PolynomialObjective p({{1.0, {2, 0}}, {1.0, {0, 2}}}, 2);
  SolverConfig cfg;
  cfg.delta = 1e-18;
  cfg.max_iter = 1;
  cfg.grad_tol = 0.0;
  const SolveResult res = solve_poly_simplex(p, Vector::Constant(1, 0.25), cfg);
  REQUIRE(res.status == Status::MaxIter);
  REQUIRE(res.iterations == 1);
  REQUIRE(res.theta_star.size() == 2);
  REQUIRE(res.theta_star[0] == Catch::Approx(7.0 / 22.0).margin(1e-9));
  REQUIRE(res.theta_star.sum() == Catch::Approx(1.0));
}

TEST_CASE("simplex solver finds the balanced minimum") {
  PolynomialObjective p({{1.0, {2, 0}}, {1.0, {0, 2}}}, 2);
  SolverConfig cfg;
  cfg.grad_tol = 1e-12;
  const SolveResult res = solve_poly_simplex(p, Vector::Constant(1, 0.25), cfg);
  REQUIRE(res.status == Status::Converged);
  REQUIRE(res.theta_star[0] == Catch::Approx(0.5).margin(1e-8));
  REQUIRE(res.theta_star[1] == Catch::Approx(0.5).margin(1e-8));
  REQUIRE(res.objective_star == Catch::Approx(0.5).margin(1e-10));
  REQUIRE(test::nonincreasing(objective_column(res.trace), 1e-12));
  for (const auto& row : res.trace.rows) {
    REQUIRE(row.interior_margin > 0.0);
  }
}

TEST_CASE("simplex solver accepts a constant objective") {
  PolynomialObjective p({{2.5, {0, 0}}}, 2);
  const SolveResult res = solve_poly_simplex(p, Vector::Constant(1, 0.3));
  REQUIRE(res.status == Status::Converged);
  REQUIRE(res.iterations == 0);
  REQUIRE(res.objective_star == Catch::Approx(2.5));
  REQUIRE(res.theta_star[1] == Catch::Approx(0.7));
}

TEST_CASE("simplex solver validates its start") {
  PolynomialObjective p({{1.0, {2, 0}}, {1.0, {0, 2}}}, 2);
  REQUIRE_THROWS_AS(solve_poly_simplex(p, Vector::Constant(1, 1.0)), std::invalid_argument);
  REQUIRE_THROWS_AS(solve_poly_simplex(p, Vector::Constant(1, -0.1)), std::invalid_argument);
}

TEST_CASE("coordinate-wise rational updates solve a box quadratic") {
  // Interior optimum.
  QuadraticObjective obj1{Matrix::Constant(1, 1, 4.0), Vector::Constant(1, -1.0)};
  SolverConfig cfg;
  cfg.grad_tol = 1e-12;
  SolveResult res = solve_box_qp_cubic(obj1, Vector::Zero(1), Vector::Ones(1),
                                       diagonal_sigma_from_q(obj1.Q, 0.9),
                                       Vector::Constant(1, 0.5), cfg);
  REQUIRE(res.status == Status::Converged);
  REQUIRE(res.theta_star[0] == Catch::Approx(0.25).margin(1e-8));

  // Boundary optimum is approached through the interior.
  QuadraticObjective obj2{Matrix::Identity(1, 1), Vector::Constant(1, -2.0)};
  res = solve_box_qp_cubic(obj2, Vector::Zero(1), Vector::Ones(1),
                           diagonal_sigma_from_q(obj2.Q, 0.9), Vector::Constant(1, 0.5),
                           cfg);
  REQUIRE(res.status == Status::Converged);
  REQUIRE(res.theta_star[0] == Catch::Approx(1.0).margin(1e-6));
  for (const auto& row : res.trace.rows) {
    REQUIRE(row.interior_margin > 0.0);
  }
}

TEST_CASE("coordinate-wise rational updates agree with projected gradient") {
  Matrix q(2, 2);
  q << 2, 0.5, 0.5, 1;
  Vector b(2);
  b << -3, 1;
  QuadraticObjective obj{q, b};
  SolverConfig cfg;
  cfg.grad_tol = 1e-11;
  cfg.max_iter = 200000;
  const SolveResult res =
      solve_box_qp_cubic(obj, Vector::Zero(2), Vector::Ones(2),
                         diagonal_sigma_from_q(q, 0.9), Vector::Constant(2, 0.5), cfg);
  REQUIRE(res.status == Status::Converged);
  const Vector ref = oracle::projected_gradient(
      obj, oracle::BoxProjection{Vector::Zero(2), Vector::Ones(2)}, Vector::Constant(2, 0.5),
      0.35, 1e-13);
  REQUIRE((res.theta_star - ref).cwiseAbs().maxCoeff() < 1e-6);
  REQUIRE(test::nonincreasing(objective_column(res.trace), 1e-12));
}

TEST_CASE("coordinate-wise rational updates validate their inputs") {
  QuadraticObjective obj{Matrix::Identity(1, 1), Vector::Zero(1)};
  REQUIRE_THROWS_AS(solve_box_qp_cubic(obj, Vector::Zero(1), Vector::Ones(1),
                                       Vector::Constant(1, 0.5), Vector::Zero(1)),
                    std::invalid_argument);
  REQUIRE_THROWS_AS(solve_box_qp_cubic(obj, Vector::Zero(1), Vector::Ones(1),
                                       Vector::Constant(1, 2.0), Vector::Constant(1, 0.5)),
                    std::invalid_argument);
}
