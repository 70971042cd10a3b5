#pragma once

#include <Eigen/Dense>

namespace emopt {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using Index = Eigen::Index;

}  // namespace emopt
