#pragma once

// Domain transforms: box problems are rewritten on the unit cube, equality
// constrained boxes are reduced through an affine map, and the simplex case
// is reduced by eliminating the last coordinate. All polynomial problems are
// then minimized through f = -ln(K - F) with K strictly above the box/simplex
// maximum of F.

#include <cmath>
#include <map>
#include <optional>
#include <stdexcept>
#include <vector>

#include <Eigen/SVD>

#include "emopt/polynomial.hpp"
#include "emopt/types.hpp"

namespace emopt {

// Raised when an iterate reaches a point where K - F <= 0; solvers convert
// this into a NumericalFailure status.
struct KBoundViolation : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline double default_k_slack(double bound) { return 1e-6 * std::max(1.0, std::abs(bound)); }

// Polynomial rewritten on [0,1]^p: original F(l + diag(u-l) theta) equals
// eval(theta) = sum of terms plus tilde_const. K = Sigma max(coef,0) +
// tilde_const + slack upper-bounds F on the cube with margin slack.
struct RebasedProblem {
  std::vector<MonomialTerm> terms;  // non-constant terms, canonical order
  double tilde_const = 0.0;
  std::vector<int> degrees;  // per-coordinate max exponent
  int total_degree = 0;
  double K = 0.0;
  double slack = 0.0;
  int dim = 0;

  double eval(const Vector& theta) const {
    double v = tilde_const;
    for (const auto& t : terms) {
      double m = t.coef;
      for (int j = 0; j < dim; ++j) m *= detail::ipow(theta[j], t.exps[j]);
      v += m;
    }
    return v;
  }

  Vector grad(const Vector& theta) const {
    Vector g = Vector::Zero(dim);
    for (const auto& t : terms) {
      for (int j = 0; j < dim; ++j) {
        if (t.exps[j] == 0) continue;
        double m = t.coef * t.exps[j];
        for (int h = 0; h < dim; ++h)
          m *= detail::ipow(theta[h], h == j ? t.exps[h] - 1 : t.exps[h]);
        g[j] += m;
      }
    }
    return g;
  }
};

namespace detail {

inline void check_box(const Vector& l, const Vector& u) {
  if (l.size() != u.size()) throw std::invalid_argument("box bounds length mismatch");
  for (Index j = 0; j < l.size(); ++j)
    if (!(l[j] < u[j])) throw std::invalid_argument("degenerate box: need l < u per coordinate");
}

// Expansion of F(l + diag(u-l) theta) into monomials of theta; the constant
// mass is split off separately.
inline RebasedProblem rebase_expand(const PolynomialObjective& p, const Vector& l, const Vector& u) {
  check_box(l, u);
  if (l.size() != p.dim()) throw std::invalid_argument("box dimension mismatch");
  const int dim = p.dim();
  std::map<std::vector<int>, double> acc;
  for (const auto& term : p.terms()) {
    std::vector<std::pair<double, std::vector<int>>> partial = {
        {term.coef, std::vector<int>(dim, 0)}};
    for (int j = 0; j < dim; ++j) {
      const int nj = term.exps[j];
      const double s = u[j] - l[j];
      std::vector<double> w(nj + 1);
      for (int k = 0; k <= nj; ++k)
        w[k] = binomial_coefficient(nj, k) * ipow(s, k) * ipow(l[j], nj - k);
      std::vector<std::pair<double, std::vector<int>>> next;
      next.reserve(partial.size() * (nj + 1));
      for (const auto& [c, e] : partial) {
        for (int k = 0; k <= nj; ++k) {
          if (w[k] == 0.0) continue;
          auto e2 = e;
          e2[j] = k;
          next.emplace_back(c * w[k], e2);
        }
      }
      partial = std::move(next);
    }
    for (const auto& [c, e] : partial) acc[e] += c;
  }

  RebasedProblem r;
  r.dim = dim;
  r.degrees.assign(dim, 0);
  const std::vector<int> zero(dim, 0);
  for (const auto& [e, c] : acc) {
    if (e == zero) {
      r.tilde_const += c;
      continue;
    }
    if (c == 0.0) continue;
    r.terms.push_back({c, e});
    int s = 0;
    for (int j = 0; j < dim; ++j) {
      if (e[j] > r.degrees[j]) r.degrees[j] = e[j];
      s += e[j];
    }
    if (s > r.total_degree) r.total_degree = s;
  }
  return r;
}

}  // namespace detail

inline RebasedProblem rebase_to_unit_box(const PolynomialObjective& p, const Vector& l,
                                         const Vector& u, double delta) {
  if (!(delta > 0.0)) throw std::invalid_argument("rebase_to_unit_box: slack must be positive");
  RebasedProblem r = detail::rebase_expand(p, l, u);
  double bound = r.tilde_const;
  for (const auto& t : r.terms) bound += std::max(t.coef, 0.0);
  r.slack = delta;
  r.K = bound + delta;
  return r;
}

// As above but with the slack resolved from the bound when not given.
inline RebasedProblem rebase_to_unit_box_auto(const PolynomialObjective& p, const Vector& l,
                                              const Vector& u,
                                              std::optional<double> delta = std::nullopt) {
  RebasedProblem r = detail::rebase_expand(p, l, u);
  double bound = r.tilde_const;
  for (const auto& t : r.terms) bound += std::max(t.coef, 0.0);
  double d = delta ? *delta : default_k_slack(bound);
  if (!(d > 0.0)) throw std::invalid_argument("rebase_to_unit_box: slack must be positive");
  r.slack = d;
  r.K = bound + d;
  return r;
}

// Upper bound for F over the probability simplex: every monomial is at most
// max(coef, 0) there, so sum of positive parts plus slack dominates F.
inline double k_bound_simplex(const PolynomialObjective& p, double delta) {
  if (!(delta > 0.0)) throw std::invalid_argument("k_bound_simplex: slack must be positive");
  double bound = 0.0;
  for (const auto& t : p.terms()) bound += std::max(t.coef, 0.0);
  return bound + delta;
}

struct BarrierValue {
  double objective_value = 0.0;   // F at theta
  double transformed = 0.0;       // -ln(K - F)
  Vector grad;                    // gradient of the transformed objective
};

inline BarrierValue barrier_objective(const RebasedProblem& r, const Vector& theta) {
  BarrierValue out;
  out.objective_value = r.eval(theta);
  const double gap = r.K - out.objective_value;
  if (!(gap > 0.0) || !std::isfinite(gap))
    throw KBoundViolation("objective reached or exceeded its bound K");
  out.transformed = -std::log(gap);
  out.grad = r.grad(theta) / gap;
  return out;
}

// F restricted to the simplex via lambda = (theta, 1 - sum theta); gradients
// are reduced by the chain rule d/d theta_j = d/d lambda_j - d/d lambda_p.
class SimplexReduced {
 public:
  explicit SimplexReduced(PolynomialObjective p) : poly_(std::move(p)) {
    if (poly_.dim() < 2) throw std::invalid_argument("simplex reduction needs dim >= 2");
  }

  int reduced_dim() const { return poly_.dim() - 1; }
  const PolynomialObjective& polynomial() const { return poly_; }

  Vector lift(const Vector& theta) const {
    Vector lambda(poly_.dim());
    lambda.head(theta.size()) = theta;
    lambda[poly_.dim() - 1] = 1.0 - theta.sum();
    return lambda;
  }

  double eval(const Vector& theta) const { return eval_polynomial(poly_, lift(theta)); }

  Vector grad(const Vector& theta) const {
    Vector full = grad_polynomial(poly_, lift(theta));
    const double last = full[poly_.dim() - 1];
    Vector g(reduced_dim());
    for (int j = 0; j < reduced_dim(); ++j) g[j] = full[j] - last;
    return g;
  }

 private:
  PolynomialObjective poly_;
};

inline SimplexReduced simplex_reduce(const PolynomialObjective& p) { return SimplexReduced(p); }

// Affine parametrization of {lambda in [0,1]^p : B lambda_orig = c} by the
// leading n = p - rows(B) unit-box coordinates: lambda_unit = H theta + w,
// where lambda_orig = l + diag(u-l) lambda_unit.
struct AffineMap {
  Matrix H;
  Vector w;
};

inline AffineMap polytope_affine_map(const Matrix& b_mat, const Vector& c, const Vector& l,
                                     const Vector& u) {
  detail::check_box(l, u);
  const Index p = b_mat.cols();
  const Index rows = b_mat.rows();
  if (p != l.size()) throw std::invalid_argument("polytope_affine_map: dimension mismatch");
  if (c.size() != rows) throw std::invalid_argument("polytope_affine_map: c length mismatch");
  const Index n = p - rows;
  if (n < 1 || rows < 1)
    throw std::invalid_argument("polytope_affine_map: need 1 <= rows(B) < cols(B)");

  const Matrix b1 = b_mat.leftCols(n);
  const Matrix b2 = b_mat.rightCols(rows);
  Eigen::JacobiSVD<Matrix> svd(b2, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const double smin = svd.singularValues().minCoeff();
  const double smax = svd.singularValues().maxCoeff();
  if (!(smin > 0.0) || smax / smin >= 1e12)
    throw std::invalid_argument("polytope_affine_map: trailing square block is singular");

  const Matrix b2inv_b1 = svd.solve(b1);
  const Vector b2inv_c = svd.solve(c);
  const Vector inv_span = (u - l).cwiseInverse();

  AffineMap map;
  map.H = Matrix::Zero(p, n);
  map.H.topRows(n) = Matrix::Identity(n, n);
  map.H.bottomRows(rows) = -b2inv_b1;
  map.H = inv_span.asDiagonal() * map.H;
  Vector stack = Vector::Zero(p);
  stack.tail(rows) = b2inv_c;
  map.w = inv_span.asDiagonal() * (stack - l);
  return map;
}

}  // namespace emopt
