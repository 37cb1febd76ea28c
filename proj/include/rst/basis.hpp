#pragma once

#include <Eigen/Core>

namespace rst {

// Truncated eigensystem of the second-order Sobolev RKHS on [0,1]:
//   eta_{2j-1}(z) = sqrt(2) cos(2 pi j z),  eta_{2j}(z) = sqrt(2) sin(2 pi j z),
//   kappa_{2j-1} = kappa_{2j} = (2 pi j)^{-4}.
// Raw covariate values are mapped affinely from [domain_lo, domain_hi] onto
// [0,1] so the closed-form system stays valid for any bounded covariate.
struct SobolevBasis {
  int d = 0;                // truncation level (even)
  Eigen::VectorXd kappa;    // d eigenvalues
  double domain_lo = 0.0;
  double domain_hi = 1.0;

  // Affine map onto [0,1]; throws OutOfDomain outside [domain_lo, domain_hi].
  double rescale(double x) const;

  // eta_j at rescaled z, 0-based j in [0, d).
  double eigenfunction(int j, double z) const;

  // Row vector (eta_1(z), ..., eta_d(z)) at raw input x.
  Eigen::VectorXd evaluate_all(double x) const;

  // n x d matrix of eigenfunction values at raw inputs.
  Eigen::MatrixXd evaluate_matrix(const Eigen::VectorXd& x) const;

  bool same_as(const SobolevBasis& other) const {
    return d == other.d && domain_lo == other.domain_lo && domain_hi == other.domain_hi;
  }
};

// Coefficient vector representing a function Sum_j a_j eta_j in a basis.
struct FunctionExpansion {
  Eigen::VectorXd coeffs;
  SobolevBasis basis;
};

// Odd d is rounded up to the next even value (the cos/sin pairing needs it);
// a note is emitted on stderr when that happens.
SobolevBasis build_basis(int d, double domain_lo, double domain_hi);

FunctionExpansion make_expansion(const SobolevBasis& basis, Eigen::VectorXd coeffs);

// Zero function in the given basis.
FunctionExpansion zero_expansion(const SobolevBasis& basis);

double evaluate_expansion(const FunctionExpansion& f, double x);

// RKHS smoothness functional J(f) = Sum_j a_j^2 / kappa_j.
double rkhs_norm(const FunctionExpansion& f);
double rkhs_norm(const SobolevBasis& basis, const Eigen::VectorXd& coeffs);

}  // namespace rst
