#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <numbers>

#include "rst/basis.hpp"
#include "rst/errors.hpp"
#include "rst/rng.hpp"
#include "test_util.hpp"

using namespace rst;

namespace {
constexpr double kTwoPi = 2.0 * std::numbers::pi;
}

TEST_CASE("eigenvalues follow the cos/sin pairing") {
  const SobolevBasis basis = build_basis(2, 0.0, 1.0);
  const double expected = std::pow(kTwoPi, -4.0);
  REQUIRE(basis.kappa[0] == Catch::Approx(expected).epsilon(1e-15));
  REQUIRE(basis.kappa[1] == basis.kappa[0]);

  const SobolevBasis wide = build_basis(6, 0.0, 1.0);
  REQUIRE(wide.kappa[2] == wide.kappa[3]);
  REQUIRE(wide.kappa[2] == Catch::Approx(std::pow(2.0 * kTwoPi, -4.0)).epsilon(1e-15));
  REQUIRE((wide.kappa.array() > 0.0).all());
}

TEST_CASE("eigenfunction values at rescaled points") {
  const SobolevBasis basis = build_basis(2, 0.0, 1.0);
  // eta_1(0.25) = sqrt(2) cos(pi/2) = 0, eta_2(0.25) = sqrt(2) sin(pi/2)
  REQUIRE(std::abs(basis.eigenfunction(0, 0.25)) < 1e-15);
  REQUIRE(basis.eigenfunction(1, 0.25) == Catch::Approx(std::numbers::sqrt2).epsilon(1e-15));
}

TEST_CASE("build_basis rejects bad arguments and rounds odd d up") {
  REQUIRE_THROWS_AS(build_basis(0, 0.0, 1.0), InvalidArgument);
  REQUIRE_THROWS_AS(build_basis(-4, 0.0, 1.0), InvalidArgument);
  REQUIRE_THROWS_AS(build_basis(2, 1.0, 1.0), InvalidArgument);
  REQUIRE_THROWS_AS(build_basis(2, 2.0, -1.0), InvalidArgument);
  REQUIRE(build_basis(5, 0.0, 1.0).d == 6);
}

TEST_CASE("expansion evaluation") {
  const SobolevBasis basis = build_basis(2, 0.0, 1.0);

  const FunctionExpansion zero = zero_expansion(basis);
  REQUIRE(evaluate_expansion(zero, 0.3) == 0.0);

  FunctionExpansion e1 = make_expansion(basis, Eigen::Vector2d(1.0, 0.0));
  REQUIRE(evaluate_expansion(e1, 0.0) == Catch::Approx(std::numbers::sqrt2).epsilon(1e-15));

  // (1,1) at z = 0.25: 0 + sqrt(2)
  FunctionExpansion both = make_expansion(basis, Eigen::Vector2d(1.0, 1.0));
  REQUIRE(evaluate_expansion(both, 0.25) ==
          Catch::Approx(std::numbers::sqrt2).epsilon(1e-12));

  REQUIRE_THROWS_AS(evaluate_expansion(both, -0.1), OutOfDomain);
  REQUIRE_THROWS_AS(evaluate_expansion(both, 1.1), OutOfDomain);
}

TEST_CASE("domain rescaling maps raw covariates onto [0,1]") {
  const SobolevBasis basis = build_basis(4, -1.0, 1.0);
  REQUIRE(basis.rescale(-1.0) == 0.0);
  REQUIRE(basis.rescale(1.0) == 1.0);
  REQUIRE(basis.rescale(0.0) == 0.5);
  // eta_1 at raw 0 equals eta_1 at z = 0.5
  REQUIRE(basis.evaluate_all(0.0)[0] ==
          Catch::Approx(std::numbers::sqrt2 * std::cos(std::numbers::pi)).epsilon(1e-15));
}

TEST_CASE("rkhs norm identities") {
  const SobolevBasis basis = build_basis(2, 0.0, 1.0);
  REQUIRE(rkhs_norm(zero_expansion(basis)) == 0.0);

  // J(eta_j) = 1/kappa_j, exactly
  for (int j = 0; j < basis.d; ++j) {
    Eigen::VectorXd e = Eigen::VectorXd::Zero(basis.d);
    e[j] = 1.0;
    REQUIRE(rkhs_norm(basis, e) == 1.0 / basis.kappa[j]);
  }

  // coeffs (1,2): 1/k1 + 4/k2 = 5 (2 pi)^4
  FunctionExpansion f = make_expansion(basis, Eigen::Vector2d(1.0, 2.0));
  REQUIRE(rkhs_norm(f) == Catch::Approx(5.0 * std::pow(kTwoPi, 4.0)).epsilon(1e-12));
}

TEST_CASE("J scales quadratically") {
  const SobolevBasis basis = build_basis(8, 0.0, 1.0);
  rst::rng::Stream stream(17);
  Eigen::VectorXd a(basis.d);
  for (int j = 0; j < basis.d; ++j) a[j] = stream.next_normal();
  const double j1 = rkhs_norm(basis, a);

  // power-of-two scalings are exact in floating point
  REQUIRE(rkhs_norm(basis, (2.0 * a).eval()) == 4.0 * j1);
  REQUIRE(rkhs_norm(basis, (0.25 * a).eval()) == 0.0625 * j1);
  // generic scaling up to rounding
  const double c = 1.7;
  REQUIRE(test_util::rel_err(rkhs_norm(basis, (c * a).eval()), c * c * j1) < 1e-12);
}

TEST_CASE("evaluation is linear in the coefficients") {
  const SobolevBasis basis = build_basis(6, -2.0, 3.0);
  rst::rng::Stream stream(3);
  Eigen::VectorXd a(basis.d), b(basis.d);
  for (int j = 0; j < basis.d; ++j) {
    a[j] = stream.next_normal();
    b[j] = stream.next_normal();
  }
  for (double x : {-2.0, -0.5, 0.0, 1.25, 3.0}) {
    const double lhs = evaluate_expansion(make_expansion(basis, a + b), x);
    const double rhs = evaluate_expansion(make_expansion(basis, a), x) +
                       evaluate_expansion(make_expansion(basis, b), x);
    REQUIRE(std::abs(lhs - rhs) < 1e-12);
  }
}

TEST_CASE("eigenfunctions are orthonormal under quadrature") {
  const SobolevBasis basis = build_basis(8, 0.0, 1.0);
  for (int i = 0; i < basis.d; ++i) {
    for (int j = i; j < basis.d; ++j) {
      const double integral = test_util::adaptive_simpson(
          [&](double z) { return basis.eigenfunction(i, z) * basis.eigenfunction(j, z); }, 0.0,
          1.0);
      const double expected = (i == j) ? 1.0 : 0.0;
      INFO("pair (" << i << "," << j << ")");
      REQUIRE(std::abs(integral - expected) < 1e-8);
    }
  }
}
