#pragma once

// Reference implementations used to cross-check the solvers. Everything here
// is deliberately independent of the solver update rules: plain grid
// enumeration, projected gradient with exact projections, exhaustive vertex
// enumeration, a cyclic Jacobi eigensolver, and a small non-negative
// least-squares fit for KKT residuals.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <stdexcept>
#include <variant>
#include <vector>

#include "emopt/polynomial.hpp"
#include "emopt/quadratic.hpp"
#include "emopt/types.hpp"

namespace emopt::oracle {

// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations, ascending.
inline Vector jacobi_eigenvalues(Matrix a, int max_sweeps = 64) {
  if (a.rows() != a.cols()) throw std::invalid_argument("jacobi_eigenvalues: square input required");
  const Index n = a.rows();
  const double scale = std::max(1.0, a.cwiseAbs().maxCoeff());
  for (int sweep = 0; sweep < max_sweeps; ++sweep) {
    double off = 0.0;
    for (Index i = 0; i < n; ++i)
      for (Index j = i + 1; j < n; ++j) off = std::max(off, std::abs(a(i, j)));
    if (off <= 1e-14 * scale) break;
    for (Index p = 0; p < n; ++p) {
      for (Index q = p + 1; q < n; ++q) {
        if (std::abs(a(p, q)) <= 1e-300) continue;
        const double tau = (a(q, q) - a(p, p)) / (2.0 * a(p, q));
        const double t = (tau >= 0.0 ? 1.0 : -1.0) / (std::abs(tau) + std::sqrt(1.0 + tau * tau));
        const double c = 1.0 / std::sqrt(1.0 + t * t);
        const double s = t * c;
        for (Index k = 0; k < n; ++k) {
          const double akp = a(k, p), akq = a(k, q);
          a(k, p) = c * akp - s * akq;
          a(k, q) = s * akp + c * akq;
        }
        for (Index k = 0; k < n; ++k) {
          const double apk = a(p, k), aqk = a(q, k);
          a(p, k) = c * apk - s * aqk;
          a(q, k) = s * apk + c * aqk;
        }
      }
    }
  }
  Vector ev = a.diagonal();
  std::sort(ev.data(), ev.data() + n);
  return ev;
}

// Central differences with per-coordinate widths h_j = h * (1 + |x_j|). A
// non-positive h selects the default width 1e-5.
inline Vector finite_diff_grad(const std::function<double(const Vector&)>& f, const Vector& x,
                               double h = 0.0) {
  const double base = h > 0.0 ? h : 1e-5;
  Vector g(x.size());
  Vector xp = x, xm = x;
  for (Index j = 0; j < x.size(); ++j) {
    const double hj = base * (1.0 + std::abs(x[j]));
    xp[j] = x[j] + hj;
    xm[j] = x[j] - hj;
    g[j] = (f(xp) - f(xm)) / (2.0 * hj);
    xp[j] = x[j];
    xm[j] = x[j];
  }
  return g;
}

struct GridResult {
  Vector point;
  double value = std::numeric_limits<double>::infinity();
};

// Exhaustive minimum over the inclusive lattice with points_per_axis nodes
// per coordinate. Refuses budgets above 1e8 evaluations.
inline GridResult grid_search_box(const std::function<double(const Vector&)>& f, const Vector& l,
                                  const Vector& u, int points_per_axis) {
  const Index p = l.size();
  if (u.size() != p) throw std::invalid_argument("grid_search_box: bounds mismatch");
  if (points_per_axis < 2) throw std::invalid_argument("grid_search_box: need >= 2 points per axis");
  double budget = 1.0;
  for (Index j = 0; j < p; ++j) budget *= points_per_axis;
  if (budget > 1e8) throw std::invalid_argument("grid_search_box: evaluation budget exceeded");

  std::vector<int> idx(p, 0);
  Vector x(p);
  GridResult best;
  while (true) {
    for (Index j = 0; j < p; ++j)
      x[j] = l[j] + (u[j] - l[j]) * idx[j] / double(points_per_axis - 1);
    const double v = f(x);
    if (v < best.value) {
      best.value = v;
      best.point = x;
    }
    Index j = 0;
    while (j < p && ++idx[j] == points_per_axis) idx[j++] = 0;
    if (j == p) break;
  }
  return best;
}

// Exhaustive minimum over the rational simplex lattice {x/m : x integer
// composition of m into p parts}; f receives full p-dimensional points.
inline GridResult grid_search_simplex(const std::function<double(const Vector&)>& f, int p,
                                      int m_lattice) {
  if (p < 2) throw std::invalid_argument("grid_search_simplex: need p >= 2");
  if (m_lattice < 1) throw std::invalid_argument("grid_search_simplex: need m >= 1");
  GridResult best;
  std::vector<int> comp(p, 0);
  Vector x(p);
  const std::function<void(int, int)> rec = [&](int j, int remaining) {
    if (j == p - 1) {
      comp[j] = remaining;
      for (int h = 0; h < p; ++h) x[h] = double(comp[h]) / m_lattice;
      const double v = f(x);
      if (v < best.value) {
        best.value = v;
        best.point = x;
      }
      return;
    }
    for (int k = 0; k <= remaining; ++k) {
      comp[j] = k;
      rec(j + 1, remaining - k);
    }
  };
  rec(0, m_lattice);
  return best;
}

struct UnconstrainedProjection {};
struct BoxProjection {
  Vector l, u;
};
struct HalfspaceProjection {
  Vector a;
  double c = 0.0;
};
using ProjectionDomain = std::variant<UnconstrainedProjection, BoxProjection, HalfspaceProjection>;

inline Vector project(const ProjectionDomain& dom, Vector x) {
  if (std::holds_alternative<BoxProjection>(dom)) {
    const auto& b = std::get<BoxProjection>(dom);
    for (Index j = 0; j < x.size(); ++j) x[j] = std::min(std::max(x[j], b.l[j]), b.u[j]);
  } else if (std::holds_alternative<HalfspaceProjection>(dom)) {
    const auto& h = std::get<HalfspaceProjection>(dom);
    const double excess = h.a.dot(x) - h.c;
    if (excess > 0.0) x -= (excess / h.a.squaredNorm()) * h.a;
  }
  return x;
}

// Fixed-step projected gradient on a quadratic; step should be at most
// 1/lambda_max(Q). Stops when the fixed-point residual falls below tol.
inline Vector projected_gradient(const QuadraticObjective& obj, const ProjectionDomain& dom,
                                 Vector x, double step, double tol, long max_iter = 5000000) {
  x = project(dom, x);
  for (long it = 0; it < max_iter; ++it) {
    Vector next = project(dom, x - step * obj.grad(x));
    const double res = (next - x).norm();
    x = next;
    if (res <= tol) break;
  }
  return x;
}

struct VertexResult {
  Vector point;
  double value = -std::numeric_limits<double>::infinity();
};

// Maximizes obj'theta over {theta : A' theta <= c} (columns of A are the
// constraint normals) by enumerating all n x n active subsystems, n <= 3.
// Throws when an improving recession direction exists or no vertex is found.
inline VertexResult lp_vertex_enum(const Matrix& a_cols, const Vector& c, const Vector& obj) {
  const Index n = a_cols.rows();
  const Index m = a_cols.cols();
  if (c.size() != m) throw std::invalid_argument("lp_vertex_enum: c length mismatch");
  if (obj.size() != n) throw std::invalid_argument("lp_vertex_enum: objective length mismatch");
  if (n > 3) throw std::invalid_argument("lp_vertex_enum: supports n <= 3 only");
  const double scale = std::max(1.0, c.cwiseAbs().maxCoeff());
  const double feas_tol = 1e-9 * scale;

  // Improving recession direction test over null spaces of (n-1)-subsets.
  std::vector<Vector> test_dirs;
  if (n == 1) {
    test_dirs.push_back(Vector::Constant(1, 1.0));
    test_dirs.push_back(Vector::Constant(1, -1.0));
  } else {
    std::vector<Index> pick(n - 1);
    const std::function<void(Index, Index)> rec = [&](Index start, Index k) {
      if (k == static_cast<Index>(pick.size())) {
        Matrix rows(n - 1, n);
        for (Index i = 0; i < n - 1; ++i) rows.row(i) = a_cols.col(pick[i]).transpose();
        Eigen::FullPivLU<Matrix> lu(rows);
        const Matrix null = lu.kernel();
        for (Index j = 0; j < null.cols(); ++j) {
          Vector d = null.col(j);
          if (d.norm() > 1e-12) {
            d.normalize();
            test_dirs.push_back(d);
            test_dirs.push_back(-d);
          }
        }
        return;
      }
      for (Index i = start; i < m; ++i) {
        pick[k] = i;
        rec(i + 1, k + 1);
      }
    };
    rec(0, 0);
  }
  for (const auto& d : test_dirs) {
    if (obj.dot(d) <= 1e-9) continue;
    bool recession = true;
    for (Index j = 0; j < m; ++j)
      if (a_cols.col(j).dot(d) > 1e-12) {
        recession = false;
        break;
      }
    if (recession) throw std::runtime_error("lp_vertex_enum: objective unbounded over the domain");
  }

  VertexResult best;
  bool found = false;
  std::vector<Index> pick(n);
  const std::function<void(Index, Index)> rec = [&](Index start, Index k) {
    if (k == n) {
      Matrix sys(n, n);
      Vector rhs(n);
      for (Index i = 0; i < n; ++i) {
        sys.row(i) = a_cols.col(pick[i]).transpose();
        rhs[i] = c[pick[i]];
      }
      Eigen::FullPivLU<Matrix> lu(sys);
      if (!lu.isInvertible()) return;
      Vector v = lu.solve(rhs);
      for (Index j = 0; j < m; ++j)
        if (a_cols.col(j).dot(v) > c[j] + feas_tol) return;
      const double val = obj.dot(v);
      if (!found || val > best.value) {
        best.value = val;
        best.point = v;
        found = true;
      }
      return;
    }
    for (Index i = start; i < m; ++i) {
      pick[k] = i;
      rec(i + 1, k + 1);
    }
  };
  rec(0, 0);
  if (!found) throw std::runtime_error("lp_vertex_enum: no feasible vertex");
  return best;
}

struct KktReport {
  double stationarity = 0.0;        // norm of grad f + sum nu_i grad g_i, nu >= 0
  double max_violation = 0.0;       // max(0, max_i g_i)
  double max_complementarity = 0.0; // max_i |nu_i g_i|
  Vector multipliers;               // one entry per constraint, zero when inactive
  double max_residual() const {
    return std::max({stationarity, max_violation, max_complementarity});
  }
};

// Residual of the first-order conditions for min f s.t. g_i <= 0 at theta.
// Constraints within activation_tol of zero are treated as active and their
// multipliers fitted by non-negative least squares (projected coordinate
// descent on the normal equations).
inline KktReport kkt_residual_at(const Vector& grad_f, const Vector& g_vals, const Matrix& g_grads,
                                 double activation_tol = 1e-6) {
  const Index m = g_vals.size();
  if (g_grads.rows() != m || (m > 0 && g_grads.cols() != grad_f.size()))
    throw std::invalid_argument("kkt_residual: constraint gradient shape mismatch");
  KktReport rep;
  rep.multipliers = Vector::Zero(m);
  for (Index i = 0; i < m; ++i) rep.max_violation = std::max(rep.max_violation, g_vals[i]);
  rep.max_violation = std::max(rep.max_violation, 0.0);

  std::vector<Index> active;
  for (Index i = 0; i < m; ++i)
    if (g_vals[i] >= -activation_tol) active.push_back(i);

  Vector res = grad_f;
  if (!active.empty()) {
    Vector nu = Vector::Zero(static_cast<Index>(active.size()));
    for (int sweep = 0; sweep < 2000; ++sweep) {
      double change = 0.0;
      for (size_t k = 0; k < active.size(); ++k) {
        const Vector gk = g_grads.row(active[k]).transpose();
        const double nk = gk.squaredNorm();
        if (nk <= 1e-300) continue;
        const double cand = std::max(0.0, nu[k] - gk.dot(res) / nk);
        const double d = cand - nu[k];
        if (d != 0.0) {
          res += d * gk;
          nu[k] = cand;
          change = std::max(change, std::abs(d));
        }
      }
      if (change <= 1e-15 * (1.0 + nu.cwiseAbs().maxCoeff())) break;
    }
    for (size_t k = 0; k < active.size(); ++k) {
      rep.multipliers[active[k]] = nu[k];
      rep.max_complementarity =
          std::max(rep.max_complementarity, std::abs(nu[k] * g_vals[active[k]]));
    }
  }
  rep.stationarity = res.norm();
  return rep;
}

inline KktReport kkt_residual(const std::function<Vector(const Vector&)>& grad_f,
                              const std::vector<std::function<double(const Vector&)>>& g,
                              const std::vector<std::function<Vector(const Vector&)>>& g_grad,
                              const Vector& theta, double activation_tol = 1e-6) {
  if (g.size() != g_grad.size())
    throw std::invalid_argument("kkt_residual: constraint evaluator count mismatch");
  const Index m = static_cast<Index>(g.size());
  Vector g_vals(m);
  Matrix g_grads(m, theta.size());
  for (Index i = 0; i < m; ++i) {
    g_vals[i] = g[i](theta);
    g_grads.row(i) = g_grad[i](theta).transpose();
  }
  return kkt_residual_at(grad_f(theta), g_vals, g_grads, activation_tol);
}

struct MajorizationReport {
  double min_gap = std::numeric_limits<double>::infinity();  // min over pairs of u - f
  double max_anchor_gap = 0.0;                               // max over anchors of |u(a|a)-f(a)|
};

// Samples (theta, anchor) pairs from the provided generator and probes the
// surrogate: u(theta|anchor) must dominate f(theta) and touch it at anchor.
inline MajorizationReport majorization_probe(
    const std::function<double(const Vector&, const Vector&)>& u,
    const std::function<double(const Vector&)>& f,
    const std::function<std::pair<Vector, Vector>()>& sampler, int trials) {
  MajorizationReport rep;
  for (int t = 0; t < trials; ++t) {
    const auto [theta, anchor] = sampler();
    rep.min_gap = std::min(rep.min_gap, u(theta, anchor) - f(theta));
    rep.max_anchor_gap =
        std::max(rep.max_anchor_gap, std::abs(u(anchor, anchor) - f(anchor)));
  }
  return rep;
}

}  // namespace emopt::oracle
