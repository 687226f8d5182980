#pragma once

#include <Eigen/Core>

namespace servtime {

using Scalar = double;
using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

// Matrices that live flattened inside parameter tensors are row-major.
using RowMat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowMatMap = Eigen::Map<RowMat>;
using RowMatCMap = Eigen::Map<const RowMat>;

}  // namespace servtime
