#pragma once

#include <Eigen/Core>

namespace asd {

// Row-major so that one row is one feature vector / frame.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;
using RowVector = Eigen::RowVectorXd;

}  // namespace asd
