#pragma once

#include <cstdint>
#include <limits>
#include <vector>

#include <Eigen/Core>

#include "rst/basis.hpp"
#include "rst/bootstrap.hpp"
#include "rst/score.hpp"
#include "rst/stats.hpp"

namespace rst {

enum class Sense { lower, upper };

// Everything needed to invert the test over Theta_zeta at evaluation points.
// S(Sum a_j eta_j) = residual_base - Gamma a is linear in the coefficients,
// so each limit is a quadratically constrained quadratic program.
struct BandRequest {
  Eigen::VectorXd grid;       // strictly increasing, inside [x_lo, x_hi]
  double zeta = 0.0;          // roughness bound of Theta_zeta (J(theta) <= zeta)
  double alpha = 0.05;
  StatisticKernel kernel;
  ScoreComponents c;
  Eigen::VectorXd residual_base;
  SobolevBasis basis;
  double x_lo = 0.0, x_hi = 0.0;  // observed exposure range; no extrapolation
  bool mean_zero = false;         // PAM identifiability: Sum_i theta(X_i) = 0
  Eigen::VectorXd mean_zero_dir;
  double t_star = std::numeric_limits<double>::quiet_NaN();
};

struct ConfidenceBand {
  Eigen::VectorXd grid;
  Eigen::VectorXd lower;
  Eigen::VectorXd upper;
  std::vector<bool> feasible;
  double t_star = 0.0;
  double zeta = 0.0;
};

BandRequest make_band_request(const ScoreComponents& c, const StatisticKernel& kernel,
                              const SobolevBasis& basis, Eigen::VectorXd grid, double zeta,
                              double alpha, double x_lo, double x_hi, bool mean_zero);

// Diagnostics for one limit solve (duals and KKT residuals at the optimum).
struct BandLimitInfo {
  double value = 0.0;
  Eigen::VectorXd a;
  double dual_smoothness = 0.0;  // multiplier of J(a) <= zeta
  double dual_statistic = 0.0;   // multiplier of the statistic constraint
  double dual_mean_zero = 0.0;
  double kkt_stationarity = 0.0;
  double kkt_comp_slack = 0.0;
  double slack_smoothness = 0.0;  // zeta - J(a) at the optimum
  double slack_statistic = 0.0;   // t_rel - T(a)
  int outer_iterations = 0;
};

// Extreme of Sum_j a_j eta_j(x0) over {J(a) <= zeta, statistic(a) < t*}.
// req.t_star must be set. Throws InfeasibleBand when the constraint set is
// empty and NumericalFailure (duals attached) when the solver stalls.
double band_limit(const BandRequest& req, double x0, Sense sense);
BandLimitInfo band_limit_info(const BandRequest& req, double x0, Sense sense);

// t* = critical_value(boot, alpha), then both limits at every grid point.
// Per-point failures are recorded in `feasible` rather than thrown.
ConfidenceBand build_band(const BandRequest& req, const BootstrapResult& boot,
                          int workers = 0);

namespace ref {
// Serial band construction (grid loop without OpenMP); bit-identical.
ConfidenceBand build_band(const BandRequest& req, const BootstrapResult& boot);
}  // namespace ref

}  // namespace rst
