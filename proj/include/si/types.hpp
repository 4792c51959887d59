#pragma once

#include <Eigen/Dense>

namespace si {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

}  // namespace si
