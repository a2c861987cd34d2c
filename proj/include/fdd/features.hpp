#pragma once

#include <Eigen/Core>

namespace fdd {

/// N x D matrix of latent vectors, one row per encoded image.
using FeatureSet =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

}  // namespace fdd
