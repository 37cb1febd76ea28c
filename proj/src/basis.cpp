#include "rst/basis.hpp"

#include <cmath>
#include <iostream>
#include <numbers>
#include <sstream>
#include <utility>

#include "rst/errors.hpp"

namespace rst {

namespace {
constexpr double kSqrt2 = std::numbers::sqrt2;
constexpr double kTwoPi = 2.0 * std::numbers::pi;
}  // namespace

SobolevBasis build_basis(int d, double domain_lo, double domain_hi) {
  if (d < 1) {
    throw InvalidArgument("build_basis: truncation level must be positive");
  }
  if (!(domain_lo < domain_hi)) {
    throw InvalidArgument("build_basis: empty domain, need domain_lo < domain_hi");
  }
  if (d % 2 != 0) {
    std::cerr << "build_basis: odd d=" << d << " rounded up to " << d + 1
              << " to keep the cos/sin eigenvalue pairing\n";
    ++d;
  }
  SobolevBasis basis;
  basis.d = d;
  basis.domain_lo = domain_lo;
  basis.domain_hi = domain_hi;
  basis.kappa.resize(d);
  for (int j = 1; 2 * j <= d; ++j) {
    const double k = std::pow(kTwoPi * j, -4.0);
    basis.kappa[2 * j - 2] = k;
    basis.kappa[2 * j - 1] = k;
  }
  return basis;
}

double SobolevBasis::rescale(double x) const {
  if (x < domain_lo || x > domain_hi) {
    std::ostringstream msg;
    msg << "evaluation point " << x << " outside basis domain [" << domain_lo << ", "
        << domain_hi << "]";
    throw OutOfDomain(msg.str());
  }
  return (x - domain_lo) / (domain_hi - domain_lo);
}

double SobolevBasis::eigenfunction(int j, double z) const {
  // 1-based index k = j+1: odd k -> cos with frequency (k+1)/2, even k -> sin.
  const int k = j + 1;
  const int freq = (k + 1) / 2;
  const double arg = kTwoPi * freq * z;
  return (k % 2 == 1) ? kSqrt2 * std::cos(arg) : kSqrt2 * std::sin(arg);
}

Eigen::VectorXd SobolevBasis::evaluate_all(double x) const {
  const double z = rescale(x);
  Eigen::VectorXd out(d);
  for (int j = 0; j < d; ++j) out[j] = eigenfunction(j, z);
  return out;
}

Eigen::MatrixXd SobolevBasis::evaluate_matrix(const Eigen::VectorXd& x) const {
  Eigen::MatrixXd out(x.size(), d);
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double z = rescale(x[i]);
    for (int j = 0; j < d; ++j) out(i, j) = eigenfunction(j, z);
  }
  return out;
}

FunctionExpansion make_expansion(const SobolevBasis& basis, Eigen::VectorXd coeffs) {
  if (coeffs.size() != basis.d) {
    throw InvalidArgument("make_expansion: coefficient length does not match basis");
  }
  return FunctionExpansion{std::move(coeffs), basis};
}

FunctionExpansion zero_expansion(const SobolevBasis& basis) {
  return FunctionExpansion{Eigen::VectorXd::Zero(basis.d), basis};
}

double evaluate_expansion(const FunctionExpansion& f, double x) {
  if (f.coeffs.size() != f.basis.d) {
    throw InvalidArgument("evaluate_expansion: coefficient length does not match basis");
  }
  const double z = f.basis.rescale(x);
  double acc = 0.0;
  for (int j = 0; j < f.basis.d; ++j) acc += f.coeffs[j] * f.basis.eigenfunction(j, z);
  return acc;
}

double rkhs_norm(const SobolevBasis& basis, const Eigen::VectorXd& coeffs) {
  if (coeffs.size() != basis.d) {
    throw InvalidArgument("rkhs_norm: coefficient length does not match basis");
  }
  double acc = 0.0;
  for (int j = 0; j < basis.d; ++j) acc += coeffs[j] * coeffs[j] / basis.kappa[j];
  return acc;
}

double rkhs_norm(const FunctionExpansion& f) { return rkhs_norm(f.basis, f.coeffs); }

}  // namespace rst
