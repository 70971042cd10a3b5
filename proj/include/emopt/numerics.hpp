#pragma once

// Small dense numerical kernels shared by the solvers.

#include <cmath>
#include <functional>
#include <optional>
#include <stdexcept>

#include "emopt/types.hpp"

namespace emopt {

// Cholesky factorization M = LL' with an explicit pivot threshold. A matrix
// whose pivots fall at or below pivot_tol (relative to the diagonal scale) is
// classified as not positive definite instead of being factored with noise.
class SpdFactor {
 public:
  static std::optional<SpdFactor> factorize(const Matrix& m, double pivot_tol = 1e-12) {
    if (m.rows() != m.cols()) throw std::invalid_argument("SpdFactor needs a square matrix");
    const Index n = m.rows();
    const double scale = std::max(1.0, m.diagonal().cwiseAbs().maxCoeff());
    Matrix l = Matrix::Zero(n, n);
    for (Index j = 0; j < n; ++j) {
      double d = m(j, j) - l.row(j).head(j).squaredNorm();
      if (!(d > pivot_tol * scale)) return std::nullopt;
      l(j, j) = std::sqrt(d);
      for (Index i = j + 1; i < n; ++i) {
        double s = m(i, j) - l.row(i).head(j).dot(l.row(j).head(j));
        l(i, j) = s / l(j, j);
      }
    }
    SpdFactor f;
    f.l_ = std::move(l);
    return f;
  }

  Index dim() const { return l_.rows(); }
  const Matrix& lower() const { return l_; }

  Vector solve(const Vector& rhs) const {
    Vector y = l_.triangularView<Eigen::Lower>().solve(rhs);
    return l_.transpose().triangularView<Eigen::Upper>().solve(y);
  }

  Matrix solve(const Matrix& rhs) const {
    Matrix y = l_.triangularView<Eigen::Lower>().solve(rhs);
    return l_.transpose().triangularView<Eigen::Upper>().solve(y);
  }

  Matrix inverse() const { return solve(Matrix(Matrix::Identity(dim(), dim()))); }

 private:
  SpdFactor() = default;
  Matrix l_;
};

// True when sigma_inv - Q is positive definite (Cholesky with the default
// pivot threshold succeeds). Both arguments must be symmetric and same size.
inline bool is_spd_dominated(const Matrix& sigma_inv, const Matrix& q) {
  if (sigma_inv.rows() != sigma_inv.cols() || q.rows() != q.cols() ||
      sigma_inv.rows() != q.rows())
    throw std::invalid_argument("is_spd_dominated: dimension mismatch");
  const auto check_sym = [](const Matrix& m) {
    const double scale = std::max(1.0, m.cwiseAbs().maxCoeff());
    return (m - m.transpose()).cwiseAbs().maxCoeff() <= 1e-12 * scale;
  };
  if (!check_sym(sigma_inv) || !check_sym(q))
    throw std::invalid_argument("is_spd_dominated: arguments must be symmetric");
  return SpdFactor::factorize(sigma_inv - q).has_value();
}

// Diagonal step sizes sigma_j = shrink / (q_jj + sum_{h!=j} |q_jh|), falling
// back to shrink when that denominator is not positive. The resulting
// diag(sigma)^-1 - Q is strictly diagonally dominant with positive diagonal,
// hence positive definite, for any symmetric Q.
inline Vector diagonal_sigma_from_q(const Matrix& q, double shrink = 0.9) {
  if (q.rows() != q.cols()) throw std::invalid_argument("diagonal_sigma_from_q: Q must be square");
  if (!(shrink > 0.0 && shrink < 1.0))
    throw std::invalid_argument("diagonal_sigma_from_q: shrink must be in (0,1)");
  const Index p = q.rows();
  Vector sigma(p);
  for (Index j = 0; j < p; ++j) {
    double denom = q(j, j);
    for (Index h = 0; h < p; ++h)
      if (h != j) denom += std::abs(q(j, h));
    sigma[j] = denom > 0.0 ? shrink / denom : shrink;
  }
  return sigma;
}

// Applies (R1^-1 + M' R2^-1 M)^-1 to g without forming the p x p matrix:
// (R1^-1 + M' R2^-1 M)^-1 = R1 - R1 M' (R2 + M R1 M')^-1 M R1.
// r1 (length n) and r2 (length k) are the diagonals of R1 and R2; M is k x n.
inline Vector smw_apply(const Vector& r1, const Vector& r2, const Matrix& m, const Vector& g) {
  const Index n = r1.size(), k = r2.size();
  if (m.rows() != k || m.cols() != n || g.size() != n)
    throw std::invalid_argument("smw_apply: dimension mismatch");
  if ((r1.array() <= 0.0).any() || (r2.array() <= 0.0).any())
    throw std::runtime_error("smw_apply: diagonals must be positive");
  Vector r1g = r1.cwiseProduct(g);
  Matrix inner = m * r1.asDiagonal() * m.transpose();
  inner.diagonal() += r2;
  auto f = SpdFactor::factorize(inner);
  if (!f) throw std::runtime_error("smw_apply: inner system not positive definite");
  Vector t = f->solve(Vector(m * r1g));
  return r1g - r1.cwiseProduct(m.transpose() * t);
}

// Root of a strictly increasing phi on (lo, hi) where phi -> -inf at lo+ and
// +inf at hi-. Never evaluates phi at the endpoints. Newton steps (when dphi
// is supplied) are safeguarded by a maintained sign-change bracket; steps
// leaving the bracket fall back to bisection. Throws when no bracket is found
// within 200 halvings.
inline double monotone_root(const std::function<double(double)>& phi, double lo, double hi,
                            double tol,
                            const std::function<double(double)>& dphi = nullptr) {
  if (!(lo < hi)) throw std::invalid_argument("monotone_root: empty interval");
  if (!(tol > 0.0)) throw std::invalid_argument("monotone_root: tol must be positive");

  double x = 0.5 * (lo + hi);
  double fx = phi(x);
  if (fx == 0.0) return x;
  double a, b;  // interior bracket with phi(a) < 0 < phi(b)
  if (fx < 0.0) {
    a = x;
    b = hi;
    bool found = false;
    double gap = hi - x;
    for (int k = 0; k < 200; ++k) {
      gap *= 0.5;
      double t = hi - gap;
      if (phi(t) > 0.0) {
        b = t;
        found = true;
        break;
      }
      a = t;
    }
    if (!found) throw std::runtime_error("monotone_root: no bracket after 200 bisections");
  } else {
    b = x;
    a = lo;
    bool found = false;
    double gap = x - lo;
    for (int k = 0; k < 200; ++k) {
      gap *= 0.5;
      double t = lo + gap;
      if (phi(t) < 0.0) {
        a = t;
        found = true;
        break;
      }
      b = t;
    }
    if (!found) throw std::runtime_error("monotone_root: no bracket after 200 bisections");
  }

  x = 0.5 * (a + b);
  for (int it = 0; it < 300; ++it) {
    fx = phi(x);
    if (std::abs(fx) <= tol || (b - a) <= tol) return x;
    if (fx < 0.0)
      a = x;
    else
      b = x;
    double next = 0.5 * (a + b);
    if (dphi) {
      double d = dphi(x);
      if (d > 0.0 && std::isfinite(d)) {
        double cand = x - fx / d;
        if (cand > a && cand < b) next = cand;
      }
    }
    x = next;
  }
  return x;
}

// argmin_t { a|t| + (t - z)^2 / 2 } = sign(z) * max(|z| - a, 0).
inline double soft_threshold(double a, double z) {
  if (a < 0.0) throw std::invalid_argument("soft_threshold: threshold must be non-negative");
  if (z > a) return z - a;
  if (z < -a) return z + a;
  return 0.0;
}

}  // namespace emopt
