#pragma once

#include <Eigen/Dense>

namespace qsd {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

// A contiguous block of feature rows (one row per frame).
using RowsView = Eigen::Ref<const RowMatrix>;

}  // namespace qsd
