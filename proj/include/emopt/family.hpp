#pragma once

// Surrogate families. Each descriptor packages, for one sampling family, the
// objective f it drives, the exact surrogate u(theta | anchor) whose gap to f
// is a KL divergence, the tilted-expectation map used by the E-step, and the
// inverse-information step metric where one exists in closed form.

#include <cmath>
#include <functional>
#include <limits>
#include <memory>
#include <stdexcept>
#include <utility>

#include "emopt/numerics.hpp"
#include "emopt/quadratic.hpp"
#include "emopt/rebase.hpp"
#include "emopt/types.hpp"

namespace emopt {

struct FamilyDescriptor {
  std::string name;
  std::function<double(const Vector&)> objective;
  std::function<Vector(const Vector&)> objective_grad;
  // u(theta | anchor); equals objective at theta == anchor.
  std::function<double(const Vector&, const Vector&)> surrogate;
  // Expectation of the sufficient statistic under the tilted distribution at
  // the anchor.
  std::function<Vector(const Vector&)> q_expectation;
  // Applies the inverse information matrix at theta to a gradient; empty for
  // families whose solvers work through explicit M-steps instead.
  std::function<Vector(const Vector&, const Vector&)> natural_step;
  std::function<bool(const Vector&)> strictly_interior;
};

// Gaussian family with mean theta and fixed covariance sigma, driving the
// unconstrained quadratic objective.
inline FamilyDescriptor make_normal_family(const QuadraticObjective& obj, const Matrix& sigma) {
  auto factor = SpdFactor::factorize(sigma);
  if (!factor) throw std::invalid_argument("make_normal_family: sigma must be positive definite");
  const Matrix sigma_inv = factor->inverse();
  if (!is_spd_dominated(sigma_inv, obj.Q))
    throw std::invalid_argument("make_normal_family: sigma^-1 must dominate Q");

  FamilyDescriptor d;
  d.name = "normal";
  d.objective = [obj](const Vector& x) { return obj.eval(x); };
  d.objective_grad = [obj](const Vector& x) { return obj.grad(x); };
  d.q_expectation = [obj, sigma](const Vector& anchor) -> Vector {
    return anchor - sigma * obj.grad(anchor);
  };
  d.surrogate = [obj, sigma, sigma_inv](const Vector& x, const Vector& anchor) {
    const Vector eq = anchor - sigma * obj.grad(anchor);
    return -eq.dot(sigma_inv * (x - anchor)) + 0.5 * x.dot(sigma_inv * x) -
           0.5 * anchor.dot(sigma_inv * anchor) + obj.eval(anchor);
  };
  d.natural_step = [sigma](const Vector&, const Vector& g) -> Vector { return sigma * g; };
  d.strictly_interior = [](const Vector&) { return true; };
  return d;
}

// Independent binomial counts on the unit cube, driving f = -ln(K - F) for a
// rebased polynomial. Coordinates with degree zero carry no randomness and
// contribute nothing.
inline FamilyDescriptor make_binomial_family(RebasedProblem r) {
  FamilyDescriptor d;
  d.name = "binomial";
  auto shared = std::make_shared<RebasedProblem>(std::move(r));
  d.objective = [shared](const Vector& x) { return barrier_objective(*shared, x).transformed; };
  d.objective_grad = [shared](const Vector& x) { return barrier_objective(*shared, x).grad; };
  auto q_exp = [shared](const Vector& anchor) -> Vector {
    const Vector g = barrier_objective(*shared, anchor).grad;
    Vector e(shared->dim);
    for (int j = 0; j < shared->dim; ++j)
      e[j] = shared->degrees[j] == 0
                 ? 0.0
                 : anchor[j] * (shared->degrees[j] - (1.0 - anchor[j]) * g[j]);
    return e;
  };
  d.q_expectation = q_exp;
  d.surrogate = [shared, q_exp](const Vector& x, const Vector& anchor) {
    const Vector e = q_exp(anchor);
    double u = barrier_objective(*shared, anchor).transformed;
    for (int j = 0; j < shared->dim; ++j) {
      const int m = shared->degrees[j];
      if (m == 0) continue;
      u -= e[j] * std::log(x[j] / anchor[j]) +
           (m - e[j]) * std::log((1.0 - x[j]) / (1.0 - anchor[j]));
    }
    return u;
  };
  d.natural_step = [shared](const Vector& x, const Vector& g) -> Vector {
    Vector s(shared->dim);
    for (int j = 0; j < shared->dim; ++j)
      s[j] = shared->degrees[j] == 0 ? 0.0
                                     : x[j] * (1.0 - x[j]) / shared->degrees[j] * g[j];
    return s;
  };
  d.strictly_interior = [](const Vector& x) {
    return (x.array() > 0.0).all() && (x.array() < 1.0).all();
  };
  return d;
}

// Multinomial counts on the probability simplex (last coordinate eliminated),
// driving f = -ln(K - F) for the reduced polynomial.
inline FamilyDescriptor make_multinomial_family(const PolynomialObjective& p, double k_value) {
  auto red = std::make_shared<SimplexReduced>(simplex_reduce(p));
  const int m = p.degree();
  if (m < 1) throw std::invalid_argument("make_multinomial_family: constant objective");

  FamilyDescriptor d;
  d.name = "multinomial";
  auto f_pair = [red, k_value](const Vector& x) -> std::pair<double, Vector> {
    const double val = red->eval(x);
    const double gap = k_value - val;
    if (!(gap > 0.0)) throw KBoundViolation("objective reached or exceeded its bound K");
    return {-std::log(gap), red->grad(x) / gap};
  };
  d.objective = [f_pair](const Vector& x) { return f_pair(x).first; };
  d.objective_grad = [f_pair](const Vector& x) { return f_pair(x).second; };
  auto q_exp = [f_pair, m](const Vector& anchor) -> Vector {
    const Vector g = f_pair(anchor).second;
    const Matrix cov =
        Matrix(anchor.asDiagonal()) - anchor * anchor.transpose();
    return double(m) * anchor - cov * g;
  };
  d.q_expectation = q_exp;
  d.surrogate = [f_pair, q_exp, m](const Vector& x, const Vector& anchor) {
    const Vector e = q_exp(anchor);
    double u = f_pair(anchor).first;
    for (Index j = 0; j < x.size(); ++j) u -= e[j] * std::log(x[j] / anchor[j]);
    u -= (m - e.sum()) * std::log((1.0 - x.sum()) / (1.0 - anchor.sum()));
    return u;
  };
  d.natural_step = [m](const Vector& x, const Vector& g) -> Vector {
    const double mix = x.dot(g);
    return x.cwiseProduct(g - Vector::Constant(x.size(), mix)) / double(m);
  };
  d.strictly_interior = [](const Vector& x) {
    return (x.array() > 0.0).all() && x.sum() < 1.0;
  };
  return d;
}

// Independent Poisson slacks (one per inequality row of A theta <= c) plus a
// Gaussian block, driving the quadratic objective directly.
inline FamilyDescriptor make_poisson_normal_family(const QuadraticObjective& obj, const Matrix& a_rows,
                                                   const Vector& c, const Matrix& sigma) {
  if (a_rows.cols() != obj.dim() || c.size() != a_rows.rows())
    throw std::invalid_argument("make_poisson_normal_family: constraint shape mismatch");
  auto factor = SpdFactor::factorize(sigma);
  if (!factor)
    throw std::invalid_argument("make_poisson_normal_family: sigma must be positive definite");
  const Matrix sigma_inv = factor->inverse();
  if (!is_spd_dominated(sigma_inv, obj.Q))
    throw std::invalid_argument("make_poisson_normal_family: sigma^-1 must dominate Q");

  FamilyDescriptor d;
  d.name = "poisson_normal";
  d.objective = [obj](const Vector& x) { return obj.eval(x); };
  d.objective_grad = [obj](const Vector& x) { return obj.grad(x); };
  d.q_expectation = [obj, a_rows, c, sigma](const Vector& anchor) -> Vector {
    Vector e(a_rows.rows() + obj.dim());
    e.head(a_rows.rows()) = c - a_rows * anchor;
    e.tail(obj.dim()) = anchor - sigma * obj.grad(anchor);
    return e;
  };
  d.surrogate = [obj, a_rows, c, sigma_inv](const Vector& x, const Vector& anchor) {
    const Vector slack = c - a_rows * x;
    const Vector slack_anchor = c - a_rows * anchor;
    if ((slack.array() <= 0.0).any())
      return std::numeric_limits<double>::infinity();
    double u = obj.eval(anchor) + 0.5 * x.dot(sigma_inv * x) -
               0.5 * anchor.dot(sigma_inv * anchor);
    const Vector shift = (sigma_inv - obj.Q) * anchor - obj.b;
    u -= shift.dot(x - anchor);
    for (Index j = 0; j < slack.size(); ++j) {
      u -= slack_anchor[j] * std::log(slack[j] / slack_anchor[j]);
      u -= a_rows.row(j).dot(x - anchor);
    }
    return u;
  };
  d.strictly_interior = [a_rows, c](const Vector& x) {
    return ((c - a_rows * x).array() > 0.0).all();
  };
  return d;
}

}  // namespace emopt
