#pragma once

// Shared test helpers: seeded generators, random instance builders, and slow
// reference computations kept independent of the solver code they check.

#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include "emopt/oracle.hpp"
#include "emopt/polynomial.hpp"
#include "emopt/quadratic.hpp"
#include "emopt/types.hpp"

namespace emopt::test {

inline std::mt19937_64 seeded(std::uint64_t seed) { return std::mt19937_64(seed); }

inline double uniform(std::mt19937_64& gen, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(gen);
}

inline int uniform_int(std::mt19937_64& gen, int lo, int hi) {
  return std::uniform_int_distribution<int>(lo, hi)(gen);
}

inline Vector random_vector(std::mt19937_64& gen, Index p, double lo, double hi) {
  Vector v(p);
  for (Index j = 0; j < p; ++j) v[j] = uniform(gen, lo, hi);
  return v;
}

// Symmetric positive definite matrix with eigenvalues drawn from
// [ev_lo, ev_hi], built on a random orthogonal basis.
inline Matrix random_spd(std::mt19937_64& gen, Index p, double ev_lo, double ev_hi) {
  std::normal_distribution<double> nd(0.0, 1.0);
  Matrix g(p, p);
  for (Index i = 0; i < p; ++i)
    for (Index j = 0; j < p; ++j) g(i, j) = nd(gen);
  const Matrix q = Eigen::HouseholderQR<Matrix>(g).householderQ();
  const Vector ev = random_vector(gen, p, ev_lo, ev_hi);
  Matrix m = q * ev.asDiagonal() * q.transpose();
  return 0.5 * (m + m.transpose());
}

// Random polynomial with per-term total degree <= max_degree and at least one
// non-constant term.
inline PolynomialObjective random_polynomial(std::mt19937_64& gen, int dim, int max_degree,
                                             double coef_lo, double coef_hi, int max_terms) {
  std::vector<MonomialTerm> terms;
  const int n_terms = uniform_int(gen, 2, max_terms);
  for (int t = 0; t < n_terms; ++t) {
    std::vector<int> exps(static_cast<size_t>(dim), 0);
    int budget = uniform_int(gen, t == 0 ? 1 : 0, max_degree);
    while (budget > 0) {
      exps[static_cast<size_t>(uniform_int(gen, 0, dim - 1))] += 1;
      --budget;
    }
    terms.push_back({uniform(gen, coef_lo, coef_hi), exps});
  }
  return PolynomialObjective(terms, dim);
}

struct Quadrature {
  Vector nodes;
  Vector weights;
};

// Gauss-Hermite rule for integrals against exp(-t^2), from the eigenvalue
// decomposition of the Jacobi matrix of the Hermite recurrence.
inline Quadrature gauss_hermite(int n) {
  if (n < 1) throw std::invalid_argument("gauss_hermite: need n >= 1");
  Vector diag = Vector::Zero(n);
  Vector sub(std::max(n - 1, 1));
  for (int k = 1; k < n; ++k) sub[k - 1] = std::sqrt(k / 2.0);
  Eigen::SelfAdjointEigenSolver<Matrix> es;
  es.computeFromTridiagonal(diag, sub.head(n - 1), Eigen::ComputeEigenvectors);
  Quadrature q;
  q.nodes = es.eigenvalues();
  q.weights.resize(n);
  const double mu0 = std::sqrt(M_PI);
  for (int i = 0; i < n; ++i) {
    const double v = es.eigenvectors()(0, i);
    q.weights[i] = mu0 * v * v;
  }
  return q;
}

// E[f(X)] for X ~ N(mean, sd^2).
inline double normal_expectation(const std::function<double(double)>& f, double mean, double sd,
                                 int n = 64) {
  const Quadrature q = gauss_hermite(n);
  double acc = 0.0;
  for (int i = 0; i < n; ++i) acc += q.weights[i] * f(mean + std::sqrt(2.0) * sd * q.nodes[i]);
  return acc / std::sqrt(M_PI);
}

inline double binomial_pmf(int m, int x, double theta) {
  if (x < 0 || x > m) return 0.0;
  const double log_choose =
      std::lgamma(m + 1.0) - std::lgamma(x + 1.0) - std::lgamma(m - x + 1.0);
  double log_p = log_choose;
  if (x > 0) log_p += x * std::log(theta);
  if (m - x > 0) log_p += (m - x) * std::log(1.0 - theta);
  return std::exp(log_p);
}

// E[f(X)] for X ~ Poisson(lambda), summed until the accumulated mass reaches
// 1 - 1e-12.
inline double poisson_expectation(double lambda, const std::function<double(int)>& f) {
  double pmf = std::exp(-lambda);
  double mass = 0.0;
  double acc = 0.0;
  for (int x = 0; x < 100000; ++x) {
    acc += pmf * f(x);
    mass += pmf;
    if (mass >= 1.0 - 1e-12) break;
    pmf *= lambda / (x + 1);
  }
  return acc;
}

// Reference minimizer of 0.5 x'Qx + b'x + |x|_1 through the split x = xp - xm
// with xp, xm >= 0, run as projected gradient on the doubled quadratic. Kept
// free of soft-thresholding on purpose.
inline Vector l1_reference(const QuadraticObjective& obj, double tol = 1e-12) {
  const Index p = obj.dim();
  Matrix q2(2 * p, 2 * p);
  q2.topLeftCorner(p, p) = obj.Q;
  q2.topRightCorner(p, p) = -obj.Q;
  q2.bottomLeftCorner(p, p) = -obj.Q;
  q2.bottomRightCorner(p, p) = obj.Q;
  Vector b2(2 * p);
  b2.head(p) = obj.b.array() + 1.0;
  b2.tail(p) = -obj.b.array() + 1.0;
  const double lam_max = oracle::jacobi_eigenvalues(obj.Q).maxCoeff();
  const double step = 1.0 / (2.0 * std::max(lam_max, 0.0) + 1.0);
  const oracle::ProjectionDomain dom = oracle::BoxProjection{
      Vector(Vector::Zero(2 * p)), Vector(Vector::Constant(2 * p, 1e3))};
  const Vector z = oracle::projected_gradient(QuadraticObjective(q2, b2), dom,
                                              Vector(Vector::Zero(2 * p)), step, tol);
  return z.head(p) - z.tail(p);
}

inline bool nonincreasing(const std::vector<double>& v, double slack) {
  for (size_t i = 1; i < v.size(); ++i)
    if (v[i] > v[i - 1] + slack) return false;
  return true;
}

}  // namespace emopt::test
