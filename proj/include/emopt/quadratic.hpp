#pragma once

#include <stdexcept>

#include "emopt/types.hpp"

namespace emopt {

// f(x) = 0.5 x'Qx + b'x with Q symmetric (possibly indefinite).
struct QuadraticObjective {
  Matrix Q;
  Vector b;

  QuadraticObjective(Matrix q, Vector lin) : Q(std::move(q)), b(std::move(lin)) {
    if (Q.rows() != Q.cols()) throw std::invalid_argument("Q must be square");
    if (b.size() != Q.rows()) throw std::invalid_argument("b length must match Q");
    const double scale = std::max(1.0, Q.cwiseAbs().maxCoeff());
    if ((Q - Q.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale)
      throw std::invalid_argument("Q must be symmetric");
  }

  Index dim() const { return Q.rows(); }
  double eval(const Vector& x) const { return 0.5 * x.dot(Q * x) + b.dot(x); }
  Vector grad(const Vector& x) const { return Q * x + b; }
};

}  // namespace emopt
