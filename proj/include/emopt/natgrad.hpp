#pragma once

// Constant-step solvers. Each update is a closed-form natural-gradient step
// for its sampling family and therefore also the exact minimizer of that
// family's surrogate, which is what guarantees monotone descent.

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <stdexcept>

#include "emopt/numerics.hpp"
#include "emopt/oracle.hpp"
#include "emopt/polynomial.hpp"
#include "emopt/quadratic.hpp"
#include "emopt/rebase.hpp"
#include "emopt/solve.hpp"

namespace emopt {

namespace detail {

constexpr double kInf = std::numeric_limits<double>::infinity();

// First-order residual for min F over a box: at active bounds only the
// infeasible-pointing gradient component counts. Identical to the
// non-negative least-squares fit because box constraints are separable.
inline double box_kkt_residual(const Vector& g, const Vector& theta, const Vector& l,
                               const Vector& u, double activation_tol = 1e-6) {
  double r2 = 0.0;
  for (Index j = 0; j < theta.size(); ++j) {
    const bool at_lower = theta[j] - l[j] <= activation_tol;
    const bool at_upper = u[j] - theta[j] <= activation_tol;
    double rj = g[j];
    if (at_lower && at_upper)
      rj = 0.0;
    else if (at_lower)
      rj = std::min(g[j], 0.0);
    else if (at_upper)
      rj = std::max(g[j], 0.0);
    r2 += rj * rj;
  }
  return std::sqrt(r2);
}

inline void require_unit_interior(const Vector& theta) {
  if (!((theta.array() > 0.0).all() && (theta.array() < 1.0).all()))
    throw std::invalid_argument("start must lie strictly inside the unit box");
}

}  // namespace detail

// Fixed-metric descent theta <- theta - Sigma (Q theta + b) for a quadratic
// with Sigma^-1 - Q positive definite. Sigma defaults to the diagonal
// row-sum rule when not supplied.
inline SolveResult solve_unconstrained_qp(const QuadraticObjective& obj,
                                          const std::optional<Matrix>& sigma, Vector theta0,
                                          const SolverConfig& cfg = {}) {
  const Index p = obj.dim();
  if (theta0.size() != p) throw std::invalid_argument("solve_unconstrained_qp: start dimension");
  Matrix sigma_full;
  Matrix sigma_inv;
  if (sigma) {
    auto f = SpdFactor::factorize(*sigma);
    if (!f) throw std::invalid_argument("solve_unconstrained_qp: sigma must be positive definite");
    sigma_full = *sigma;
    sigma_inv = f->inverse();
  } else {
    const Vector s = diagonal_sigma_from_q(obj.Q, cfg.shrink);
    sigma_full = s.asDiagonal();
    sigma_inv = Matrix(s.cwiseInverse().asDiagonal());
  }
  if (!is_spd_dominated(sigma_inv, obj.Q))
    throw std::invalid_argument("solve_unconstrained_qp: sigma^-1 must dominate Q");

  SolveResult res;
  detail::TraceSink sink(cfg, &res.trace);
  Vector theta = std::move(theta0);
  res.status = Status::MaxIter;
  for (int t = 1; t <= cfg.max_iter; ++t) {
    const Vector g = obj.grad(theta);
    const Vector step = sigma_full * g;
    const double sn = step.norm();
    if (!std::isfinite(sn)) {
      res.status = Status::NumericalFailure;
      break;
    }
    if (detail::step_small(sn, theta.norm(), cfg.grad_tol)) {
      res.status = Status::Converged;
      break;
    }
    theta -= step;
    res.iterations = t;
    const double fv = obj.eval(theta);
    if (!std::isfinite(fv)) {
      res.status = Status::NumericalFailure;
      break;
    }
    const double gn = obj.grad(theta).norm();
    sink.record({t, fv, fv, sn, gn, gn, detail::kInf}, t == cfg.max_iter);
  }
  sink.finalize();
  res.theta_star = theta;
  res.objective_star = obj.eval(theta);
  return res;
}

// Proximal-gradient iteration for 0.5 x'Qx + b'x + |x|_1 with per-coordinate
// step sizes sigma; every sweep updates all coordinates simultaneously.
inline SolveResult solve_l1_qp(const QuadraticObjective& obj, const Vector& sigma, Vector theta0,
                               const SolverConfig& cfg = {}) {
  const Index p = obj.dim();
  if (theta0.size() != p || sigma.size() != p)
    throw std::invalid_argument("solve_l1_qp: dimension mismatch");
  if ((sigma.array() <= 0.0).any())
    throw std::invalid_argument("solve_l1_qp: sigma must be positive");
  if (!is_spd_dominated(Matrix(sigma.cwiseInverse().asDiagonal()), obj.Q))
    throw std::invalid_argument("solve_l1_qp: sigma^-1 must dominate Q");

  const auto composite = [&](const Vector& x) { return obj.eval(x) + x.lpNorm<1>(); };
  const auto composite_residual = [&](const Vector& x) {
    const Vector g = obj.grad(x);
    double r2 = 0.0;
    for (Index j = 0; j < x.size(); ++j) {
      const double rj = x[j] != 0.0 ? g[j] + (x[j] > 0.0 ? 1.0 : -1.0)
                                    : std::max(std::abs(g[j]) - 1.0, 0.0);
      r2 += rj * rj;
    }
    return std::sqrt(r2);
  };

  SolveResult res;
  detail::TraceSink sink(cfg, &res.trace);
  Vector theta = std::move(theta0);
  res.status = Status::MaxIter;
  for (int t = 1; t <= cfg.max_iter; ++t) {
    const Vector g = obj.grad(theta);
    Vector next(p);
    for (Index j = 0; j < p; ++j)
      next[j] = soft_threshold(sigma[j], theta[j] - sigma[j] * g[j]);
    const double sn = (next - theta).norm();
    if (!std::isfinite(sn)) {
      res.status = Status::NumericalFailure;
      break;
    }
    if (detail::step_small(sn, theta.norm(), cfg.grad_tol)) {
      res.status = Status::Converged;
      break;
    }
    theta = next;
    res.iterations = t;
    const double fv = composite(theta);
    if (!std::isfinite(fv)) {
      res.status = Status::NumericalFailure;
      break;
    }
    sink.record({t, fv, fv, sn, obj.grad(theta).norm(), composite_residual(theta), detail::kInf},
                t == cfg.max_iter);
  }
  sink.finalize();
  res.theta_star = theta;
  res.objective_star = composite(theta);
  return res;
}

// Polynomial minimization over a box via the unit-cube rewrite and
// f = -ln(K - F); the step multiplier per coordinate is
// theta_j (1 - theta_j) / degree_j. Returns the point in original
// coordinates.
inline SolveResult solve_poly_rect(const PolynomialObjective& p, const Vector& l, const Vector& u,
                                   Vector theta0, const SolverConfig& cfg = {}) {
  RebasedProblem r = rebase_to_unit_box_auto(p, l, u, cfg.delta);
  if (cfg.k_override) r.K = *cfg.k_override;
  if (theta0.size() != p.dim()) throw std::invalid_argument("solve_poly_rect: start dimension");
  detail::require_unit_interior(theta0);

  SolveResult res;
  detail::TraceSink sink(cfg, &res.trace);
  Vector theta = std::move(theta0);
  const auto map_back = [&](const Vector& th) -> Vector { return l + (u - l).cwiseProduct(th); };
  res.status = Status::MaxIter;
  try {
    BarrierValue bar = barrier_objective(r, theta);
    for (int t = 1; t <= cfg.max_iter; ++t) {
      Vector step(r.dim);
      for (int j = 0; j < r.dim; ++j)
        step[j] = r.degrees[j] == 0
                      ? 0.0
                      : theta[j] * (1.0 - theta[j]) / r.degrees[j] * bar.grad[j];
      const double sn = step.norm();
      if (!std::isfinite(sn)) {
        res.status = Status::NumericalFailure;
        break;
      }
      if (detail::step_small(sn, theta.norm(), cfg.grad_tol)) {
        res.status = Status::Converged;
        break;
      }
      theta -= step;
      // The exact update keeps every coordinate strictly inside (0,1); only
      // rounding or underflow can land on the boundary, so snap back to the
      // nearest representable interior point.
      for (int j = 0; j < r.dim; ++j)
        theta[j] = std::clamp(theta[j], std::numeric_limits<double>::min(),
                              1.0 - std::numeric_limits<double>::epsilon() / 2.0);
      res.iterations = t;
      double margin = 1.0;
      for (int j = 0; j < r.dim; ++j) margin = std::min({margin, theta[j], 1.0 - theta[j]});
      if (!(margin > 0.0)) {
        res.status = Status::NumericalFailure;
        break;
      }
      bar = barrier_objective(r, theta);
      const double kkt = detail::box_kkt_residual(bar.grad, theta, Vector::Zero(r.dim),
                                                  Vector::Ones(r.dim));
      sink.record({t, bar.objective_value, bar.transformed, sn, bar.grad.norm(), kkt, margin},
                  t == cfg.max_iter);
    }
  } catch (const KBoundViolation&) {
    res.status = Status::NumericalFailure;
  }
  sink.finalize();
  res.theta_star = map_back(theta);
  res.objective_star = r.eval(theta);
  return res;
}

// Polynomial minimization over the probability simplex through the reduced
// coordinates; the step couples coordinates through the weighted gradient
// mean. Returns the lifted p-dimensional point.
inline SolveResult solve_poly_simplex(const PolynomialObjective& p, Vector theta0,
                                      const SolverConfig& cfg = {}) {
  SimplexReduced red = simplex_reduce(p);
  if (theta0.size() != red.reduced_dim())
    throw std::invalid_argument("solve_poly_simplex: start dimension");
  if (!((theta0.array() > 0.0).all() && theta0.sum() < 1.0))
    throw std::invalid_argument("solve_poly_simplex: start must be strictly interior");

  double bound = 0.0;
  for (const auto& t : p.terms()) bound += std::max(t.coef, 0.0);
  const double delta = cfg.delta ? *cfg.delta : default_k_slack(bound);
  double K = cfg.k_override ? *cfg.k_override : bound + delta;
  const int m = p.degree();

  SolveResult res;
  detail::TraceSink sink(cfg, &res.trace);
  Vector theta = std::move(theta0);
  res.status = Status::MaxIter;

  const Index d = red.reduced_dim();
  // Constraint system for the first-order residual: -theta_j <= 0, sum - 1 <= 0.
  Matrix cons_grads(d + 1, d);
  cons_grads.topRows(d) = -Matrix::Identity(d, d);
  cons_grads.bottomRows(1) = Matrix::Ones(1, d);

  const auto eval_barrier = [&](const Vector& th) -> std::pair<double, Vector> {
    const double val = red.eval(th);
    const double gap = K - val;
    if (!(gap > 0.0) || !std::isfinite(gap))
      throw KBoundViolation("objective reached or exceeded its bound K");
    return {val, red.grad(th) / gap};
  };

  if (m == 0) {
    res.status = Status::Converged;
    res.theta_star = red.lift(theta);
    res.objective_star = red.eval(theta);
    return res;
  }

  try {
    auto [fval, grad] = eval_barrier(theta);
    for (int t = 1; t <= cfg.max_iter; ++t) {
      const double mix = theta.dot(grad);
      Vector step(d);
      for (Index j = 0; j < d; ++j) step[j] = theta[j] / m * (grad[j] - mix);
      const double sn = step.norm();
      if (!std::isfinite(sn)) {
        res.status = Status::NumericalFailure;
        break;
      }
      if (detail::step_small(sn, theta.norm(), cfg.grad_tol)) {
        res.status = Status::Converged;
        break;
      }
      theta -= step;
      // As in the box solver, the exact update stays strictly inside the
      // simplex; snap floating-point boundary landings back inside.
      for (Index j = 0; j < d; ++j)
        theta[j] = std::max(theta[j], std::numeric_limits<double>::min());
      const double coord_sum = theta.sum();
      if (coord_sum >= 1.0)
        theta *= (1.0 - std::numeric_limits<double>::epsilon() / 2.0) / coord_sum;
      res.iterations = t;
      double margin = 1.0 - theta.sum();
      for (Index j = 0; j < d; ++j) margin = std::min(margin, theta[j]);
      if (!(margin > 0.0)) {
        res.status = Status::NumericalFailure;
        break;
      }
      std::tie(fval, grad) = eval_barrier(theta);
      Vector g_vals(d + 1);
      g_vals.head(d) = -theta;
      g_vals[d] = theta.sum() - 1.0;
      const auto kkt = oracle::kkt_residual_at(grad, g_vals, cons_grads);
      sink.record({t, fval, -std::log(K - fval), sn, grad.norm(), kkt.max_residual(), margin},
                  t == cfg.max_iter);
    }
  } catch (const KBoundViolation&) {
    res.status = Status::NumericalFailure;
  }
  sink.finalize();
  res.theta_star = red.lift(theta);
  res.objective_star = red.eval(theta);
  return res;
}

// Box-constrained quadratic via per-coordinate exact surrogate minimization:
// each coordinate update solves a strictly increasing rational equation on
// (l_j, u_j) by safeguarded Newton-bisection. Iterates stay strictly inside
// the box; boundary optima are approached in the limit.
inline SolveResult solve_box_qp_cubic(const QuadraticObjective& obj, const Vector& l,
                                      const Vector& u, const Vector& sigma, Vector theta0,
                                      const SolverConfig& cfg = {}) {
  const Index p = obj.dim();
  detail::check_box(l, u);
  if (l.size() != p || theta0.size() != p || sigma.size() != p)
    throw std::invalid_argument("solve_box_qp_cubic: dimension mismatch");
  if ((sigma.array() <= 0.0).any())
    throw std::invalid_argument("solve_box_qp_cubic: sigma must be positive");
  for (Index j = 0; j < p; ++j)
    if (!(theta0[j] > l[j] && theta0[j] < u[j]))
      throw std::invalid_argument("solve_box_qp_cubic: start must be strictly interior");
  if (!is_spd_dominated(Matrix(sigma.cwiseInverse().asDiagonal()), obj.Q))
    throw std::invalid_argument("solve_box_qp_cubic: sigma^-1 must dominate Q");

  SolveResult res;
  detail::TraceSink sink(cfg, &res.trace);
  Vector theta = std::move(theta0);
  res.status = Status::MaxIter;
  for (int t = 1; t <= cfg.max_iter; ++t) {
    const Vector kap = theta.cwiseQuotient(sigma) - (obj.Q * theta) - obj.b;
    Vector next(p);
    bool failed = false;
    for (Index j = 0; j < p; ++j) {
      const double lo = l[j], hi = u[j];
      const double tl = theta[j] - lo, tu = hi - theta[j];
      const double kj = kap[j], sj = sigma[j];
      const auto phi = [&](double x) {
        return -tl / (x - lo) + tu / (hi - x) - kj + x / sj;
      };
      const auto dphi = [&](double x) {
        const double dl = x - lo, du = hi - x;
        return tl / (dl * dl) + tu / (du * du) + 1.0 / sj;
      };
      try {
        next[j] = monotone_root(phi, lo, hi, 1e-13 * std::max(1.0, hi - lo), dphi);
      } catch (const std::runtime_error&) {
        failed = true;
        break;
      }
    }
    if (failed) {
      res.status = Status::NumericalFailure;
      break;
    }
    const double sn = (next - theta).norm();
    if (detail::step_small(sn, theta.norm(), cfg.grad_tol)) {
      res.status = Status::Converged;
      break;
    }
    theta = next;
    res.iterations = t;
    const double fv = obj.eval(theta);
    if (!std::isfinite(fv)) {
      res.status = Status::NumericalFailure;
      break;
    }
    const Vector g = obj.grad(theta);
    double margin = detail::kInf;
    for (Index j = 0; j < p; ++j) margin = std::min({margin, theta[j] - l[j], u[j] - theta[j]});
    sink.record({t, fv, fv, sn, g.norm(), detail::box_kkt_residual(g, theta, l, u), margin},
                t == cfg.max_iter);
  }
  sink.finalize();
  res.theta_star = theta;
  res.objective_star = obj.eval(theta);
  return res;
}

}  // namespace emopt
