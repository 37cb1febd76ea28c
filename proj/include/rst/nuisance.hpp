#pragma once

#include <cstdint>

#include <Eigen/Core>

#include "rst/basis.hpp"
#include "rst/dataset.hpp"

namespace rst {

// Settings for the additive penalized-basis conditional-mean learner. The
// ridge weight lambda is chosen per regression target by K-fold
// cross-validation over a log-spaced grid.
struct LearnerConfig {
  int d_w = 10;             // per-coordinate basis truncation
  int folds = 5;
  int lambda_grid_size = 20;
  double lambda_min = 1e-6;
  double lambda_max = 1e2;
  std::uint64_t seed = 0x5eedULL;  // fold-shuffle seed
};

// Fitted conditional means of Y and of each eigenfunction eta_j(X) given W,
// evaluated at the observed W_i. Immutable once built; safe to share across
// bootstrap workers.
struct NuisanceFit {
  Eigen::VectorXd mu_y;     // length n
  Eigen::MatrixXd mu_eta;   // n x d, column j = fitted E[eta_j(X)|W=W_i]
  LearnerConfig config;
  double lambda_y = 0.0;            // CV choice for the outcome regression
  Eigen::VectorXd lambda_eta;       // CV choices, one per eigenfunction
};

// Requires p >= 1 (partially additive model only); throws ModelMisuse
// otherwise. Deterministic given (data, basis, config).
NuisanceFit fit_nuisance(const Dataset& data, const SobolevBasis& basis,
                         const LearnerConfig& config = {});

// mu for an expansion h = Sum_j a_j eta_j is the matching linear combination
// Sum_j a_j mu_eta[:, j].
Eigen::VectorXd project_expansion(const NuisanceFit& fit, const Eigen::VectorXd& coeffs);

}  // namespace rst
