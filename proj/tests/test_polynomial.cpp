#include <catch2/catch_amalgamated.hpp>

#include "emopt/emopt.hpp"

using namespace emopt;

TEST_CASE("polynomial evaluation and gradient on the running example") {
  // F(x) = x^2 - x + 0.25 = (x - 0.5)^2
  PolynomialObjective p({{1.0, {2}}, {-1.0, {1}}, {0.25, {0}}}, 1);
  REQUIRE(p.degree() == 2);
  Vector x(1);
  x << 0.25;
  REQUIRE(eval_polynomial(p, x) == Catch::Approx(0.0625));
  REQUIRE(grad_polynomial(p, x)[0] == Catch::Approx(-0.5));
}

TEST_CASE("like terms merge and zero terms vanish") {
  PolynomialObjective p({{1.0, {1, 1}}, {2.0, {1, 1}}, {0.0, {2, 0}}, {-3.0, {1, 1}}}, 2);
  REQUIRE(p.terms().size() == 1);
  REQUIRE(p.terms()[0].coef == Catch::Approx(0.0).margin(0));
}
