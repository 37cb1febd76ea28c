#pragma once

#include <Eigen/Core>

#include "rst/basis.hpp"
#include "rst/dataset.hpp"
#include "rst/nuisance.hpp"

namespace rst {

// Quadratic-form building blocks of the derivative estimate:
//   s_i     = S(theta*)_i = r_i - (Gamma a*)_i,
//   Gamma_ij = eta_j(X_i) - mu_eta_j(W_i)   (minus column means for the PAM),
//   v       = n^{-1} Gamma' diag(S(theta_n))^2 Gamma.
// For the nonparametric model all mu terms vanish: r = y, Gamma_ij = eta_j(X_i).
struct ScoreComponents {
  Eigen::VectorXd s;              // residual at the null theta*
  Eigen::VectorXd s_center;       // residual at theta_n (variance/bootstrap weights)
  Eigen::MatrixXd gamma;          // n x d
  Eigen::MatrixXd v;              // d x d, symmetric PSD
  Eigen::Index n = 0;
  Eigen::VectorXd residual_base;  // r, the theta-independent part of S
  Eigen::VectorXd kappa;          // eigenvalues of the basis used
  Eigen::VectorXd eta_colsum;     // column sums of raw eta(X_i) (PAM band constraint)
  bool centered = false;          // PAM column centering applied
  bool v_ridged = false;          // eigenvalue ridge guard applied to v
};

namespace detail {
// Gamma and r for a model; shared by component assembly and the penalized fit.
struct Design {
  Eigen::MatrixXd gamma;
  Eigen::VectorXd r;
  Eigen::VectorXd eta_colsum;
};
Design build_design(const Dataset& data, const SobolevBasis& basis, const NuisanceFit* fit,
                    bool center_gamma);
}  // namespace detail

// s is built from theta_star, v from residuals at theta_n. `fit` must be
// present iff p >= 1. `center_gamma` applies the PAM identifiability
// centering (ignored for the nonparametric model).
ScoreComponents assemble_components(const Dataset& data, const SobolevBasis& basis,
                                    const NuisanceFit* fit, const FunctionExpansion& theta_star,
                                    const FunctionExpansion& theta_n, bool center_gamma = true);

// Same Gamma/v, s rebuilt at a different null. Cheap compared to reassembly.
ScoreComponents with_null(ScoreComponents c, const Eigen::VectorXd& theta_star_coeffs);

// n^{-1} s' Gamma h.
double gateaux_derivative(const ScoreComponents& c, const Eigen::VectorXd& h_coeffs);

// h' v h, the estimated variance of the influence function along h.
double influence_variance(const ScoreComponents& c, const Eigen::VectorXd& h_coeffs);

}  // namespace rst
