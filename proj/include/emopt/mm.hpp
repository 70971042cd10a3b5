#pragma once

// Majorize-minimize solvers whose M-step has no closed form: the surrogate is
// minimized by a damped Newton loop that only accepts candidates keeping the
// surrogate and the objective from increasing, so every outer iteration
// descends even when the inner loop stops early.

#include <cmath>
#include <functional>
#include <limits>
#include <memory>
#include <optional>
#include <stdexcept>
#include <utility>
#include <vector>

#include "emopt/family.hpp"
#include "emopt/natgrad.hpp"

namespace emopt {

struct GemConfig {
  double beta = 0.5;
  int max_backtracks = 60;
  double inner_tol = 1e-10;
  int max_inner = 200;
  // One damped Newton step per outer iteration instead of a full M-step.
  bool single_step = false;
  bool use_dense_newton = false;
  bool check_smw_against_dense = false;
  SolverConfig outer;
};

// Per-outer-iteration quantities frozen from the anchor point.
struct MStepState {
  Vector mu;
  Vector nu;
};

struct SurrogateModel {
  std::function<double(const Vector&)> value;
  std::function<Vector(const Vector&)> grad;
  // Solves H d = grad(x) with the surrogate Hessian at x.
  std::function<Vector(const Vector&)> newton_direction;
};

struct GemStepResult {
  Vector theta;
  double alpha = 0.0;
  double step_norm = 0.0;
  bool accepted = false;
};

// Backtracked Newton step on the surrogate. A candidate is accepted only if
// it is strictly feasible, does not increase the surrogate, and does not
// increase the objective past the outer anchor value.
inline GemStepResult em_gradient_step(const SurrogateModel& model, const Vector& current,
                                      const std::function<bool(const Vector&)>& strictly_feasible,
                                      const std::function<double(const Vector&)>& objective,
                                      double objective_bound, const GemConfig& gem) {
  const Vector d = model.newton_direction(current);
  const double u_cur = model.value(current);
  double alpha = 1.0;
  for (int k = 0; k <= gem.max_backtracks; ++k) {
    const Vector cand = current - alpha * d;
    if (strictly_feasible(cand)) {
      const double u_cand = model.value(cand);
      if (std::isfinite(u_cand) && u_cand <= u_cur && objective(cand) <= objective_bound)
        return {cand, alpha, alpha * d.norm(), true};
    }
    alpha *= gem.beta;
  }
  return {current, 0.0, 0.0, false};
}

namespace detail {

struct InnerResult {
  Vector theta;
  bool ok = false;
  // True when the step computation itself broke; false means the loop merely
  // ran out of acceptable candidates, which leaves theta valid but stalled.
  bool threw = false;
};

inline InnerResult minimize_surrogate(const SurrogateModel& model, Vector start,
                                      const std::function<bool(const Vector&)>& strictly_feasible,
                                      const std::function<double(const Vector&)>& objective,
                                      double objective_bound, const GemConfig& gem) {
  Vector x = std::move(start);
  for (int k = 0; k < gem.max_inner; ++k) {
    GemStepResult s;
    try {
      s = em_gradient_step(model, x, strictly_feasible, objective, objective_bound, gem);
    } catch (const std::runtime_error&) {
      return {x, false, true};
    }
    if (!s.accepted) return {x, false, false};
    x = s.theta;
    if (gem.single_step || s.step_norm <= gem.inner_tol * (1.0 + x.norm())) break;
  }
  return {x, true, false};
}

inline Matrix resolve_sigma_inv(const std::optional<Matrix>& sigma, const Matrix& q,
                                double shrink, const char* who) {
  Matrix sigma_inv;
  if (sigma) {
    auto f = SpdFactor::factorize(*sigma);
    if (!f) throw std::invalid_argument(std::string(who) + ": sigma must be positive definite");
    sigma_inv = f->inverse();
  } else {
    sigma_inv = Matrix(diagonal_sigma_from_q(q, shrink).cwiseInverse().asDiagonal());
  }
  if (!is_spd_dominated(sigma_inv, q))
    throw std::invalid_argument(std::string(who) + ": sigma^-1 must dominate the curvature");
  return sigma_inv;
}

}  // namespace detail

// Mean of the tilted binomial count for each coordinate given the gradient of
// the transformed objective at the anchor.
inline Vector expectation_q_binomial(const Vector& lambda_bar, const std::vector<int>& m,
                                     const Vector& grad_phi) {
  Vector e(lambda_bar.size());
  for (Index j = 0; j < lambda_bar.size(); ++j)
    e[j] = lambda_bar[j] * (static_cast<double>(m[j]) - (1.0 - lambda_bar[j]) * grad_phi[j]);
  return e;
}

// Quadratic minimization under A theta <= c (one row per constraint). Each
// outer iteration freezes Poisson means mu = c - A theta_bar and the normal
// shift nu, then Newton-solves the resulting smooth barrier-like M-step.
inline SolveResult solve_qp_inequality(const QuadraticObjective& obj, const Matrix& A,
                                       const Vector& c, const std::optional<Matrix>& sigma,
                                       Vector theta0, const GemConfig& gem = {}) {
  const Index p = obj.dim();
  const Index n_con = A.rows();
  if (A.cols() != p || c.size() != n_con || theta0.size() != p)
    throw std::invalid_argument("solve_qp_inequality: dimension mismatch");
  if (n_con < 1) throw std::invalid_argument("solve_qp_inequality: needs at least one constraint");
  const double feas_margin = 1e-12 * (1.0 + c.cwiseAbs().maxCoeff());
  if (((c - A * theta0).array() <= feas_margin).any())
    throw std::invalid_argument("solve_qp_inequality: start must be strictly feasible");
  const Matrix sigma_inv =
      detail::resolve_sigma_inv(sigma, obj.Q, gem.outer.shrink, "solve_qp_inequality");

  const SolverConfig& cfg = gem.outer;
  SolveResult res;
  detail::TraceSink sink(cfg, &res.trace);
  Vector theta = std::move(theta0);

  const auto slack = [&](const Vector& x) -> Vector { return c - A * x; };
  const auto feasible = [&](const Vector& x) {
    return (slack(x).array() > feas_margin).all();
  };
  const auto objective = [&](const Vector& x) { return obj.eval(x); };
  const auto kkt_at = [&](const Vector& x) {
    return oracle::kkt_residual_at(obj.grad(x), Vector(A * x - c), A).max_residual();
  };

  if (kkt_at(theta) <= cfg.grad_tol) {
    res.status = Status::Converged;
    sink.finalize();
    res.theta_star = theta;
    res.objective_star = obj.eval(theta);
    return res;
  }

  res.status = Status::MaxIter;
  for (int t = 1; t <= cfg.max_iter; ++t) {
    const Vector L_bar = slack(theta);
    MStepState state{L_bar, obj.b - (sigma_inv * theta - obj.Q * theta)};
    SurrogateModel model;
    model.value = [&, state](const Vector& x) {
      const Vector L = slack(x);
      if ((L.array() <= 0.0).any()) return detail::kInf;
      double v = 0.5 * x.dot(sigma_inv * x) + state.nu.dot(x);
      for (Index j = 0; j < n_con; ++j) v -= (c[j] - L[j]) + state.mu[j] * std::log(L[j]);
      return v;
    };
    model.grad = [&, state](const Vector& x) -> Vector {
      const Vector L = slack(x);
      const Vector w = (state.mu.array() / L.array() - 1.0).matrix();
      return sigma_inv * x + state.nu + A.transpose() * w;
    };
    model.newton_direction = [&, state](const Vector& x) -> Vector {
      const Vector L = slack(x);
      const Vector d = ((state.mu.array() / L.array()) / L.array()).min(1e300).matrix();
      Matrix h = sigma_inv + A.transpose() * d.asDiagonal() * A;
      auto f = SpdFactor::factorize(h);
      if (!f) throw std::runtime_error("m-step hessian not positive definite");
      Vector g = sigma_inv * x + state.nu + A.transpose() * ((state.mu.array() / L.array() - 1.0).matrix());
      return f->solve(g);
    };

    auto inner = detail::minimize_surrogate(model, theta, feasible, objective, obj.eval(theta), gem);
    if (!inner.ok) {
      res.status = Status::NumericalFailure;
      break;
    }
    const double sn = (inner.theta - theta).norm();
    theta = inner.theta;
    res.iterations = t;
    const double fv = obj.eval(theta);
    if (!std::isfinite(fv)) {
      res.status = Status::NumericalFailure;
      break;
    }
    const double kkt = kkt_at(theta);
    const bool done = kkt <= cfg.grad_tol;
    sink.record({t, fv, fv, sn, obj.grad(theta).norm(), kkt, slack(theta).minCoeff()},
                done || t == cfg.max_iter);
    if (done) {
      res.status = Status::Converged;
      break;
    }
    if (sn <= 1e-14 * (1.0 + theta.norm())) break;
  }
  sink.finalize();
  res.theta_star = theta;
  res.objective_star = obj.eval(theta);
  return res;
}

// Polynomial minimization over {B lambda = c, l <= lambda <= u}. The box is
// normalized to the unit cube, equality constraints are eliminated through an
// affine parametrization of the first n coordinates, and each outer iteration
// minimizes the separable binomial surrogate in the reduced variables. The
// reduced Newton systems are solved through the low-rank identity by default;
// theta_star holds the full point in original coordinates.
inline SolveResult solve_poly_polytope(const PolynomialObjective& poly, const Matrix& B,
                                       const Vector& c, const Vector& l, const Vector& u,
                                       Vector theta0, const GemConfig& gem = {}) {
  const Index p = poly.dim();
  const Index k = B.rows();
  const Index n = p - k;
  if (B.cols() != p || c.size() != k || theta0.size() != n || n < 1)
    throw std::invalid_argument("solve_poly_polytope: dimension mismatch");
  const SolverConfig& cfg = gem.outer;
  RebasedProblem r = rebase_to_unit_box_auto(poly, l, u, cfg.delta);
  if (cfg.k_override) r.K = *cfg.k_override;
  const AffineMap map = polytope_affine_map(B, c, l, u);

  std::vector<int> degrees(r.degrees.begin(), r.degrees.end());
  for (auto& d : degrees) d = std::max(d, 1);

  const Matrix M = Matrix(Matrix((u - l).tail(k).asDiagonal()) * map.H.bottomRows(k)) * -1.0;
  const Vector span2 = (u - l).array().square().matrix();

  const auto lam_hat = [&](const Vector& th) -> Vector { return map.H * th + map.w; };
  const auto interior = [&](const Vector& th) {
    const Vector lh = lam_hat(th);
    return (lh.array() > 0.0).all() && (lh.array() < 1.0).all();
  };
  {
    const Vector lh0 = lam_hat(theta0);
    if (!((lh0.array() > 0.0).all() && (lh0.array() < 1.0).all()))
      throw std::invalid_argument("solve_poly_polytope: start must be strictly interior");
  }
  const auto transformed_f = [&](const Vector& th) -> double {
    if (!interior(th)) return detail::kInf;
    try {
      return barrier_objective(r, lam_hat(th)).transformed;
    } catch (const KBoundViolation&) {
      return detail::kInf;
    }
  };

  Matrix cons_grads(2 * p, n);
  cons_grads.topRows(p) = -map.H;
  cons_grads.bottomRows(p) = map.H;

  SolveResult res;
  detail::TraceSink sink(cfg, &res.trace);
  Vector theta = std::move(theta0);
  double smw_diff = 0.0;
  bool used_smw_check = false;

  const auto kkt_at = [&](const Vector& th, const Vector& lh, const Vector& grad_lh) {
    Vector g_vals(2 * p);
    g_vals.head(p) = -lh;
    g_vals.tail(p) = lh - Vector::Ones(p);
    return oracle::kkt_residual_at(Vector(map.H.transpose() * grad_lh), g_vals, cons_grads)
        .max_residual();
  };
  const auto finish = [&](const Vector& th) {
    sink.finalize();
    const Vector lh = lam_hat(th);
    res.theta_star = l + (u - l).cwiseProduct(lh);
    res.objective_star = r.eval(lh);
    if (used_smw_check) res.smw_check_max_diff = smw_diff;
  };

  try {
    BarrierValue bar = barrier_objective(r, lam_hat(theta));
    if (kkt_at(theta, lam_hat(theta), bar.grad) <= cfg.grad_tol) {
      res.status = Status::Converged;
      finish(theta);
      return res;
    }
    res.status = Status::MaxIter;
    for (int t = 1; t <= cfg.max_iter; ++t) {
      const Vector lh_bar = lam_hat(theta);
      Vector e_bar = expectation_q_binomial(lh_bar, degrees, bar.grad);
      for (Index j = 0; j < p; ++j) {
        const double mj = static_cast<double>(degrees[static_cast<size_t>(j)]);
        const double tilt = mj - (1.0 - lh_bar[j]) * bar.grad[j];
        if (!(tilt > 0.0 && e_bar[j] < mj))
          throw std::runtime_error("tilted expectation left its admissible range");
        // A coordinate the objective pins against a box face keeps shrinking
        // geometrically; once it sinks below the rounding noise of the affine
        // map, feasibility and descent checks turn into coin flips and block
        // tangential progress. Clamping the per-coordinate target a hair
        // inside the face stops that descent a negligible distance short
        // (well inside the activation tolerance used by the KKT check) and
        // keeps the step system well conditioned.
        constexpr double face_floor = 1e-9;
        e_bar[j] = std::clamp(e_bar[j], mj * face_floor, mj * (1.0 - face_floor));
      }

      SurrogateModel model;
      model.value = [&, e_bar](const Vector& x) {
        const Vector lh = lam_hat(x);
        if (!((lh.array() > 0.0).all() && (lh.array() < 1.0).all())) return detail::kInf;
        double v = 0.0;
        for (Index j = 0; j < p; ++j)
          v -= e_bar[j] * std::log(lh[j]) +
               (degrees[static_cast<size_t>(j)] - e_bar[j]) * std::log(1.0 - lh[j]);
        return v;
      };
      const auto slope = [&, e_bar](const Vector& lh) -> Vector {
        Vector s(p);
        for (Index j = 0; j < p; ++j)
          s[j] = e_bar[j] / lh[j] - (degrees[static_cast<size_t>(j)] - e_bar[j]) / (1.0 - lh[j]);
        return s;
      };
      model.grad = [&, slope](const Vector& x) -> Vector {
        return -map.H.transpose() * slope(lam_hat(x));
      };
      model.newton_direction = [&, e_bar, slope](const Vector& x) -> Vector {
        const Vector lh = lam_hat(x);
        Vector dvec(p);
        for (Index j = 0; j < p; ++j) {
          const double a = lh[j], b1 = 1.0 - lh[j];
          const double mj = static_cast<double>(degrees[static_cast<size_t>(j)]);
          // Nested divisions dodge squaring underflow; the cap keeps a collapsed
          // coordinate's curvature finite (it merely freezes that coordinate).
          dvec[j] = std::min((e_bar[j] / a) / a + ((mj - e_bar[j]) / b1) / b1, 1e300);
        }
        const Vector s_lh = slope(lh);
        const Vector g = -map.H.transpose() * s_lh;
        Vector via_dense;
        const bool want_dense = gem.use_dense_newton || gem.check_smw_against_dense;
        if (want_dense) {
          // Least-squares form of the normal equations: QR on the weighted rows
          // keeps the tangential block accurate when a collapsed coordinate
          // would make the assembled hessian numerically rank deficient.
          const Vector sd = dvec.cwiseSqrt();
          const Matrix design = sd.asDiagonal() * map.H;
          const Vector rhs = -s_lh.cwiseQuotient(sd);
          via_dense = Eigen::ColPivHouseholderQR<Matrix>(design).solve(rhs);
        }
        if (gem.use_dense_newton && !gem.check_smw_against_dense) return via_dense;
        const Vector dhat = dvec.cwiseQuotient(span2);
        const Vector r1 = dhat.head(n).cwiseInverse();
        const Vector r2 = dhat.tail(k).cwiseInverse();
        const Vector via_smw = smw_apply(r1, r2, M, g);
        if (gem.check_smw_against_dense) {
          used_smw_check = true;
          smw_diff = std::max(smw_diff, (via_smw - via_dense).cwiseAbs().maxCoeff());
        }
        return gem.use_dense_newton ? via_dense : via_smw;
      };

      auto inner = detail::minimize_surrogate(model, theta, interior, transformed_f,
                                              transformed_f(theta), gem);
      if (!inner.ok && inner.threw) {
        res.status = Status::NumericalFailure;
        break;
      }
      const bool stalled = !inner.ok;
      const double sn = (inner.theta - theta).norm();
      theta = inner.theta;
      if (sn > 0.0) res.iterations = t;
      const Vector lh = lam_hat(theta);
      bar = barrier_objective(r, lh);
      const double kkt = kkt_at(theta, lh, bar.grad);
      const bool done = kkt <= cfg.grad_tol;
      const double margin = std::min(lh.minCoeff(), (1.0 - lh.array()).minCoeff());
      if (sn > 0.0 || done)
        sink.record({t, bar.objective_value, bar.transformed, sn,
                     (map.H.transpose() * bar.grad).norm(), kkt, margin},
                    done || stalled || t == cfg.max_iter);
      if (done) {
        res.status = Status::Converged;
        break;
      }
      // A stall means every inner candidate failed the descent gates at this
      // precision. The iterate in hand is feasible and fully gated, so stop
      // and report the budget outcome rather than a breakdown.
      if (stalled) break;
      if (sn <= 1e-14 * (1.0 + theta.norm())) break;
    }
  } catch (const KBoundViolation&) {
    res.status = Status::NumericalFailure;
  } catch (const std::runtime_error&) {
    res.status = Status::NumericalFailure;
  }
  finish(theta);
  return res;
}

// Data for the dual barrier solver: A is column convention (n x p, full row
// rank), xi is the minimum-norm solution of A xi = b, S rescales it below 1.
struct DualQpSetup {
  Matrix A;
  Vector b;
  Vector c;
  Matrix Q;
  Vector xi;
  Vector xi_hat;
  double S = 1.0;
  Matrix Q_hat;
  bool lp_mode = false;
};

inline DualQpSetup setup_dual_qp(const Matrix& A, const Vector& b, const Vector& c,
                                 const Matrix& Q) {
  const Index n = A.rows();
  const Index p = A.cols();
  if (n < 1 || p < n || b.size() != n || c.size() != p)
    throw std::invalid_argument("setup_dual_qp: dimension mismatch");
  if (Q.rows() != p || Q.cols() != p) throw std::invalid_argument("setup_dual_qp: Q shape");
  const double qs = Q.cwiseAbs().maxCoeff();
  if ((Q - Q.transpose()).cwiseAbs().maxCoeff() > 1e-12 * std::max(1.0, qs))
    throw std::invalid_argument("setup_dual_qp: Q must be symmetric");
  {
    const double eps = 1e-10 * std::max(1.0, qs);
    Matrix shifted = Q + eps * Matrix::Identity(p, p);
    if (!SpdFactor::factorize(shifted))
      throw std::invalid_argument("setup_dual_qp: Q must be positive semidefinite");
  }
  auto gram = SpdFactor::factorize(Matrix(A * A.transpose()));
  if (!gram) throw std::invalid_argument("setup_dual_qp: A must have full row rank");
  DualQpSetup s;
  s.A = A;
  s.b = b;
  s.c = c;
  s.Q = Q;
  s.xi = A.transpose() * gram->solve(b);
  s.S = std::max(s.xi.maxCoeff(), 0.0) + 1.0;
  s.xi_hat = s.xi / s.S;
  s.Q_hat = Q / s.S;
  s.lp_mode = qs == 0.0;
  return s;
}

// Interior-point solve of the barrier form of the dual: variables are the
// equality multipliers theta1 (and theta2 for the quadratic term), feasible
// set L = c - A' theta1 + Q theta2 > 0. Reports the dual objective
// b' theta1 - 0.5 theta2' Q theta2 and returns theta1.
inline SolveResult solve_dual_qp(const DualQpSetup& s, const std::optional<Matrix>& sigma,
                                 std::optional<Vector> theta1_0, std::optional<Vector> theta2_0,
                                 const GemConfig& gem = {}) {
  const Index n = s.A.rows();
  const Index p = s.A.cols();
  const bool lp = s.lp_mode;
  Vector t1 = theta1_0 ? *theta1_0 : Vector(Vector::Zero(n));
  Vector t2 = theta2_0 ? *theta2_0 : Vector(Vector::Zero(p));
  if (t1.size() != n || t2.size() != p)
    throw std::invalid_argument("solve_dual_qp: start dimension");
  Matrix sigma_inv;
  if (!lp) sigma_inv = detail::resolve_sigma_inv(sigma, s.Q_hat, gem.outer.shrink, "solve_dual_qp");

  const Index dim = lp ? n : n + p;
  Vector x(dim);
  x.head(n) = t1;
  if (!lp) x.tail(p) = t2;

  const auto slack = [&](const Vector& z) -> Vector {
    Vector L = s.c - s.A.transpose() * z.head(n);
    if (!lp) L += s.Q * z.tail(p);
    return L;
  };
  const double feas_margin = 1e-12 * (1.0 + s.c.cwiseAbs().maxCoeff());
  if ((slack(x).array() <= feas_margin).any())
    throw std::invalid_argument("solve_dual_qp: start must be strictly feasible");
  const auto feasible = [&](const Vector& z) { return (slack(z).array() > 0.0).all(); };

  const auto fval = [&](const Vector& z) {
    double v = s.xi_hat.dot(Vector(s.c - s.A.transpose() * z.head(n)));
    if (!lp) v += 0.5 * z.tail(p).dot(s.Q_hat * z.tail(p));
    return v;
  };
  const auto fgrad = [&](const Vector& z) -> Vector {
    Vector g(dim);
    g.head(n) = -s.A * s.xi_hat;
    if (!lp) g.tail(p) = s.Q_hat * z.tail(p);
    return g;
  };
  const auto dual_value = [&](const Vector& z) {
    double v = s.b.dot(z.head(n));
    if (!lp) v -= 0.5 * z.tail(p).dot(s.Q * z.tail(p));
    return v;
  };
  // Stationarity and feasibility of max b' t1 - 0.5 t2' Q t2 subject to
  // A' t1 - Q t2 <= c, measured on the minimized objective f.
  Matrix cons_grads(p, dim);
  cons_grads.leftCols(n) = s.A.transpose();
  if (!lp) cons_grads.rightCols(p) = -s.Q;
  const auto kkt_at = [&](const Vector& z) {
    return oracle::kkt_residual_at(fgrad(z), Vector(-slack(z)), cons_grads).max_residual();
  };

  const SolverConfig& cfg = gem.outer;
  SolveResult res;
  detail::TraceSink sink(cfg, &res.trace);
  const auto finish = [&](const Vector& z) {
    sink.finalize();
    res.theta_star = z;
    res.objective_star = dual_value(z);
  };

  if (kkt_at(x) <= cfg.grad_tol) {
    res.status = Status::Converged;
    finish(x);
    return res;
  }

  res.status = Status::MaxIter;
  for (int t = 1; t <= cfg.max_iter; ++t) {
    const Vector L_bar = slack(x);
    const Vector mu = ((Vector::Ones(p) - s.xi_hat).array() * L_bar.array()).matrix();
    Vector nu;
    if (!lp) nu = -s.Q * s.xi_hat - (sigma_inv * x.tail(p) - s.Q_hat * x.tail(p));

    SurrogateModel model;
    model.value = [&, mu, nu](const Vector& z) {
      const Vector L = slack(z);
      if ((L.array() <= 0.0).any()) return detail::kInf;
      double v = 0.0;
      for (Index j = 0; j < p; ++j) v += L[j] - mu[j] * std::log(L[j]);
      if (!lp) v += 0.5 * z.tail(p).dot(sigma_inv * z.tail(p)) + nu.dot(z.tail(p));
      return v;
    };
    model.grad = [&, mu, nu](const Vector& z) -> Vector {
      const Vector L = slack(z);
      const Vector w = (mu.array() / L.array() - 1.0).matrix();
      Vector g(dim);
      g.head(n) = s.A * w;
      if (!lp) g.tail(p) = -(s.Q * w) + sigma_inv * z.tail(p) + nu;
      return g;
    };
    model.newton_direction = [&, mu, nu](const Vector& z) -> Vector {
      const Vector L = slack(z);
      const Vector d = ((mu.array() / L.array()) / L.array()).min(1e300).matrix();
      const Vector w = (mu.array() / L.array() - 1.0).matrix();
      if (lp) {
        // Least-squares form of the normal equations: QR on the weighted rows
        // stays accurate in the directions tangent to a collapsing slack,
        // where assembling A D A' would square the conditioning. A row whose
        // tilted weight underflowed to zero carries no usable information and
        // is dropped.
        const Vector sd = d.cwiseSqrt();
        const Matrix design = sd.asDiagonal() * s.A.transpose();
        Vector rhs(p);
        for (Index j = 0; j < p; ++j) rhs[j] = sd[j] > 0.0 ? w[j] / sd[j] : 0.0;
        return Vector(Eigen::ColPivHouseholderQR<Matrix>(design).solve(rhs));
      }
      Matrix h(dim, dim);
      const Matrix AD = s.A * d.asDiagonal();
      h.topLeftCorner(n, n) = AD * s.A.transpose();
      const Matrix ADQ = AD * s.Q;
      h.topRightCorner(n, p) = -ADQ;
      h.bottomLeftCorner(p, n) = -ADQ.transpose();
      h.bottomRightCorner(p, p) = s.Q * d.asDiagonal() * s.Q + sigma_inv;
      auto f = SpdFactor::factorize(h);
      if (!f) throw std::runtime_error("m-step hessian not positive definite");
      Vector g(dim);
      g.head(n) = s.A * w;
      g.tail(p) = -(s.Q * w) + sigma_inv * z.tail(p) + nu;
      return f->solve(g);
    };

    auto inner = detail::minimize_surrogate(model, x, feasible, fval, fval(x), gem);
    if (!inner.ok && inner.threw) {
      res.status = Status::NumericalFailure;
      break;
    }
    const bool stalled = !inner.ok;
    const double sn = (inner.theta - x).norm();
    x = inner.theta;
    if (sn > 0.0) res.iterations = t;
    const double fv = fval(x);
    if (!std::isfinite(fv)) {
      res.status = Status::NumericalFailure;
      break;
    }
    const double kkt = kkt_at(x);
    const bool done = kkt <= cfg.grad_tol;
    if (sn > 0.0 || done)
      sink.record({t, dual_value(x), fv, sn, fgrad(x).norm(), kkt, slack(x).minCoeff()},
                  done || stalled || t == cfg.max_iter);
    if (done) {
      res.status = Status::Converged;
      break;
    }
    // A stall means every inner candidate failed the descent gates at this
    // precision; keep the gated iterate and report the budget outcome
    // rather than a breakdown.
    if (stalled) break;
    if (sn <= 1e-14 * (1.0 + x.norm())) break;
  }
  finish(x);
  return res;
}

// Family view of the polytope surrogate for property checks.
inline FamilyDescriptor make_polytope_family(std::shared_ptr<const RebasedProblem> r,
                                             const AffineMap& map,
                                             const std::vector<int>& degrees) {
  const Index p = r->dim;
  FamilyDescriptor d;
  d.name = "binomial_polytope";
  const auto lam_hat = [map](const Vector& th) -> Vector { return map.H * th + map.w; };
  d.objective = [r, lam_hat](const Vector& th) {
    return barrier_objective(*r, lam_hat(th)).transformed;
  };
  d.objective_grad = [r, map, lam_hat](const Vector& th) -> Vector {
    return map.H.transpose() * barrier_objective(*r, lam_hat(th)).grad;
  };
  d.q_expectation = [r, degrees, lam_hat](const Vector& anchor) -> Vector {
    const Vector lh = lam_hat(anchor);
    return expectation_q_binomial(lh, degrees, barrier_objective(*r, lh).grad);
  };
  d.surrogate = [r, degrees, lam_hat, p, d](const Vector& x, const Vector& anchor) {
    const Vector e = d.q_expectation(anchor);
    const auto raw = [&](const Vector& th) {
      const Vector lh = lam_hat(th);
      double v = 0.0;
      for (Index j = 0; j < p; ++j)
        v -= e[j] * std::log(lh[j]) +
             (degrees[static_cast<size_t>(j)] - e[j]) * std::log(1.0 - lh[j]);
      return v;
    };
    return d.objective(anchor) + raw(x) - raw(anchor);
  };
  d.strictly_interior = [lam_hat](const Vector& th) {
    const Vector lh = lam_hat(th);
    return (lh.array() > 0.0).all() && (lh.array() < 1.0).all();
  };
  return d;
}

// Family view of the dual barrier surrogate for property checks; state is
// theta1 for linear setups and (theta1; theta2) otherwise.
inline FamilyDescriptor make_dual_family(const DualQpSetup& s, const Matrix& sigma_inv) {
  const Index n = s.A.rows();
  const Index p = s.A.cols();
  const bool lp = s.lp_mode;
  FamilyDescriptor d;
  d.name = lp ? "poisson_dual_linear" : "poisson_normal_dual";
  const auto slack = [s, lp](const Vector& z) -> Vector {
    Vector L = s.c - s.A.transpose() * z.head(s.A.rows());
    if (!lp) L += s.Q * z.tail(s.A.cols());
    return L;
  };
  d.objective = [s, lp, slack](const Vector& z) {
    double v = s.xi_hat.dot(slack(z));
    if (!lp)
      v += 0.5 * z.tail(s.A.cols()).dot(s.Q_hat * z.tail(s.A.cols())) -
           s.xi_hat.dot(s.Q * z.tail(s.A.cols()));
    return v;
  };
  d.objective_grad = [s, lp, n, p](const Vector& z) -> Vector {
    Vector g(z.size());
    g.head(n) = -s.A * s.xi_hat;
    if (!lp) g.tail(p) = s.Q_hat * z.tail(p);
    return g;
  };
  d.q_expectation = [s, lp, n, p, sigma_inv, slack](const Vector& anchor) -> Vector {
    const Vector mu = ((Vector::Ones(p) - s.xi_hat).array() * slack(anchor).array()).matrix();
    if (lp) return mu;
    Vector e(p + p);
    e.head(p) = mu;
    auto f = SpdFactor::factorize(sigma_inv);
    e.tail(p) = f->solve(Vector((sigma_inv - s.Q_hat) * anchor.tail(p) + s.Q * s.xi_hat));
    return e;
  };
  d.surrogate = [s, lp, n, p, sigma_inv, slack, d](const Vector& x, const Vector& anchor) {
    const Vector L_bar = slack(anchor);
    const Vector mu = ((Vector::Ones(p) - s.xi_hat).array() * L_bar.array()).matrix();
    Vector nu;
    if (!lp)
      nu = -s.Q * s.xi_hat - (sigma_inv * anchor.tail(p) - s.Q_hat * anchor.tail(p));
    const auto raw = [&](const Vector& z) {
      const Vector L = slack(z);
      double v = 0.0;
      for (Index j = 0; j < p; ++j) v += L[j] - mu[j] * std::log(L[j]);
      if (!lp) v += 0.5 * z.tail(p).dot(sigma_inv * z.tail(p)) + nu.dot(z.tail(p));
      return v;
    };
    return d.objective(anchor) + raw(x) - raw(anchor);
  };
  d.strictly_interior = [slack](const Vector& z) { return (slack(z).array() > 0.0).all(); };
  return d;
}

}  // namespace emopt
