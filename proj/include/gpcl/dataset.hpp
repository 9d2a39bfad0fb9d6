#pragma once

#include <Eigen/Dense>

namespace gpcl {

/// Training data for the constraint model: robustly-identified boundary
/// states (value zero there), their unit surface normals, and every
/// demonstrated constraint state for the feasibility hinge.
struct ConstraintDataset {
  Eigen::MatrixXd kappa;        // N_robust x n_c
  Eigen::VectorXd values;       // N_robust, identically zero
  Eigen::MatrixXd gradients;    // N_robust x n_c, unit rows
  Eigen::MatrixXd feas_states;  // R x n_c

  int size() const { return static_cast<int>(kappa.rows()); }
  int input_dim() const { return static_cast<int>(kappa.cols()); }
};

}  // namespace gpcl
