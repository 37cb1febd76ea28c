#include "rst/score.hpp"

#include <Eigen/Eigenvalues>

#include "rst/errors.hpp"

namespace rst {

namespace detail {

Design build_design(const Dataset& data, const SobolevBasis& basis, const NuisanceFit* fit,
                    bool center_gamma) {
  data.validate();
  Design out;
  const Eigen::MatrixXd eta = basis.evaluate_matrix(data.x);
  out.eta_colsum = eta.colwise().sum();
  if (data.p() >= 1) {
    if (fit == nullptr) {
      throw InvalidArgument("build_design: nuisance fit required when p >= 1");
    }
    if (fit->mu_eta.rows() != data.n() || fit->mu_eta.cols() != basis.d) {
      throw InvalidArgument("build_design: nuisance fit dimensions do not match");
    }
    out.gamma = eta - fit->mu_eta;
    if (center_gamma) {
      out.gamma.rowwise() -= out.gamma.colwise().mean();
    }
    out.r = data.y - fit->mu_y;
  } else {
    if (fit != nullptr) {
      throw InvalidArgument("build_design: nuisance fit supplied but p = 0");
    }
    out.gamma = eta;
    out.r = data.y;
  }
  return out;
}

}  // namespace detail

ScoreComponents assemble_components(const Dataset& data, const SobolevBasis& basis,
                                    const NuisanceFit* fit, const FunctionExpansion& theta_star,
                                    const FunctionExpansion& theta_n, bool center_gamma) {
  if (!theta_star.basis.same_as(basis) || !theta_n.basis.same_as(basis)) {
    throw InvalidArgument("assemble_components: expansions must share the basis");
  }
  detail::Design design =
      detail::build_design(data, basis, fit, center_gamma && data.p() >= 1);

  ScoreComponents c;
  c.n = data.n();
  c.kappa = basis.kappa;
  c.gamma = std::move(design.gamma);
  c.residual_base = std::move(design.r);
  c.eta_colsum = std::move(design.eta_colsum);
  c.centered = center_gamma && data.p() >= 1;
  c.s = c.residual_base - c.gamma * theta_star.coeffs;
  c.s_center = c.residual_base - c.gamma * theta_n.coeffs;

  // v = n^{-1} Gamma' diag(S(theta_n))^2 Gamma
  const Eigen::VectorXd w2 = c.s_center.array().square();
  c.v = (c.gamma.transpose() * w2.asDiagonal() * c.gamma) / static_cast<double>(c.n);
  c.v = ((c.v + c.v.transpose()) / 2.0).eval();

  // Ridge guard for collinear Gamma columns ahead of downstream inversions.
  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(c.v, Eigen::EigenvaluesOnly);
  const double floor = 1e-10 * c.v.trace() / static_cast<double>(c.v.rows());
  if (floor > 0.0 && eig.eigenvalues().minCoeff() < floor) {
    c.v.diagonal().array() += floor;
    c.v_ridged = true;
  }
  return c;
}

ScoreComponents with_null(ScoreComponents c, const Eigen::VectorXd& theta_star_coeffs) {
  if (theta_star_coeffs.size() != c.gamma.cols()) {
    throw InvalidArgument("with_null: coefficient length does not match components");
  }
  c.s = c.residual_base - c.gamma * theta_star_coeffs;
  return c;
}

double gateaux_derivative(const ScoreComponents& c, const Eigen::VectorXd& h_coeffs) {
  if (h_coeffs.size() != c.gamma.cols()) {
    throw InvalidArgument("gateaux_derivative: coefficient length does not match");
  }
  // Sequential accumulation: the plug-in value must equal the mean of the
  // uncentered influence values bit-for-bit in the nonparametric model.
  double acc = 0.0;
  for (Eigen::Index i = 0; i < c.n; ++i) {
    double gi = 0.0;
    for (Eigen::Index j = 0; j < c.gamma.cols(); ++j) gi += c.gamma(i, j) * h_coeffs[j];
    acc += c.s[i] * gi;
  }
  return acc / static_cast<double>(c.n);
}

double influence_variance(const ScoreComponents& c, const Eigen::VectorXd& h_coeffs) {
  if (h_coeffs.size() != c.v.rows()) {
    throw InvalidArgument("influence_variance: coefficient length does not match");
  }
  return h_coeffs.dot(c.v * h_coeffs);
}

}  // namespace rst
