#pragma once

#include <Eigen/Core>

namespace rst {

// One sample Z = (X, W, Y): exposure, adjustment covariates (p = 0 for the
// nonparametric model), and outcome. All columns share the same n.
struct Dataset {
  Eigen::VectorXd x;
  Eigen::MatrixXd w;  // n x p, p >= 0
  Eigen::VectorXd y;

  Eigen::Index n() const { return x.size(); }
  Eigen::Index p() const { return w.cols(); }

  // Throws InvalidArgument on mismatched sizes, n = 0, or non-finite entries.
  void validate() const;
};

}  // namespace rst
