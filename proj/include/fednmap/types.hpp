#pragma once

#include <Eigen/Dense>

namespace fednmap {

// All model-space quantities (iterates, gradients, corrections) are dense
// float64 vectors of a fixed dimension p.
using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;
using IntVec = Eigen::VectorXi;

}  // namespace fednmap
