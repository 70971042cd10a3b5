#pragma once

// Multivariate polynomials in sparse monomial form. Terms are kept canonical:
// exponent rows sorted lexicographically, like terms merged, zero coefficients
// dropped (a single zero constant term survives if everything cancels).

#include <map>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "emopt/types.hpp"

namespace emopt {

namespace detail {

// x^n for small non-negative integer n, with 0^0 == 1.
inline double ipow(double x, int n) {
  double r = 1.0;
  for (int k = 0; k < n; ++k) r *= x;
  return r;
}

inline double binomial_coefficient(int n, int k) {
  double r = 1.0;
  for (int i = 1; i <= k; ++i) r *= static_cast<double>(n - k + i) / static_cast<double>(i);
  return r;
}

}  // namespace detail

struct MonomialTerm {
  double coef = 0.0;
  std::vector<int> exps;
};

class PolynomialObjective {
 public:
  PolynomialObjective(std::vector<MonomialTerm> terms, int dim) : dim_(dim) {
    if (dim <= 0) throw std::invalid_argument("polynomial dimension must be positive");
    if (terms.empty()) throw std::invalid_argument("polynomial needs at least one term");
    for (const auto& t : terms) {
      if (static_cast<int>(t.exps.size()) != dim)
        throw std::invalid_argument("term exponent row length does not match dimension");
      for (int e : t.exps)
        if (e < 0) throw std::invalid_argument("negative exponent");
    }
    canonicalize(std::move(terms));
  }

  const std::vector<MonomialTerm>& terms() const { return terms_; }
  int dim() const { return dim_; }

  // Largest total degree over all terms.
  int degree() const {
    int m = 0;
    for (const auto& t : terms_) {
      int s = 0;
      for (int e : t.exps) s += e;
      if (s > m) m = s;
    }
    return m;
  }

  // Largest per-coordinate exponent over all terms.
  std::vector<int> coordinate_degrees() const {
    std::vector<int> m(dim_, 0);
    for (const auto& t : terms_)
      for (int j = 0; j < dim_; ++j)
        if (t.exps[j] > m[j]) m[j] = t.exps[j];
    return m;
  }

 private:
  void canonicalize(std::vector<MonomialTerm> raw) {
    std::map<std::vector<int>, double> merged;
    for (auto& t : raw) merged[t.exps] += t.coef;
    terms_.clear();
    for (auto& [e, c] : merged)
      if (c != 0.0) terms_.push_back({c, e});
    if (terms_.empty()) terms_.push_back({0.0, std::vector<int>(dim_, 0)});
  }

  std::vector<MonomialTerm> terms_;
  int dim_;
};

inline double eval_polynomial(const PolynomialObjective& p, const Vector& x) {
  if (x.size() != p.dim()) throw std::invalid_argument("point dimension mismatch");
  double v = 0.0;
  for (const auto& t : p.terms()) {
    double m = t.coef;
    for (int j = 0; j < p.dim(); ++j) m *= detail::ipow(x[j], t.exps[j]);
    v += m;
  }
  return v;
}

inline Vector grad_polynomial(const PolynomialObjective& p, const Vector& x) {
  if (x.size() != p.dim()) throw std::invalid_argument("point dimension mismatch");
  Vector g = Vector::Zero(p.dim());
  for (const auto& t : p.terms()) {
    for (int j = 0; j < p.dim(); ++j) {
      if (t.exps[j] == 0) continue;
      double m = t.coef * t.exps[j];
      for (int h = 0; h < p.dim(); ++h)
        m *= detail::ipow(x[h], h == j ? t.exps[h] - 1 : t.exps[h]);
      g[j] += m;
    }
  }
  return g;
}

}  // namespace emopt
