#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "rst/band.hpp"
#include "rst/basis.hpp"
#include "rst/bootstrap.hpp"
#include "rst/errors.hpp"
#include "rst/rng.hpp"
#include "rst/score.hpp"
#include "rst/stats.hpp"
#include "test_util.hpp"

using namespace rst;

namespace {

struct Instance {
  SobolevBasis basis;
  Dataset data;
  ScoreComponents c;
  StatisticKernel kernel;
  BootstrapResult boot;
  FunctionExpansion theta_n;
};

Instance make_instance(int n, int d, std::uint64_t seed, double signal = 1.0) {
  Instance inst;
  inst.basis = build_basis(d, 0.0, 1.0);
  inst.data.x.resize(n);
  inst.data.y.resize(n);
  inst.data.w.resize(n, 0);
  rng::Stream stream(seed);
  for (int i = 0; i < n; ++i) inst.data.x[i] = stream.next_uniform(0.0, 1.0);
  for (int i = 0; i < n; ++i) {
    inst.data.y[i] =
        signal * std::sin(2.0 * std::numbers::pi * inst.data.x[i]) + stream.next_normal();
  }
  Eigen::VectorXd grid(8);
  for (int i = 0; i < 8; ++i) grid[i] = std::pow(10.0, -8.0 + i);
  inst.theta_n = fit_theta_penalized(inst.data, inst.basis, nullptr, grid, 5, seed);
  inst.c = assemble_components(inst.data, inst.basis, nullptr, inst.theta_n, inst.theta_n);
  SupNormConfig cfg;
  // a ratio evaluated on the bracket is attainable by construction
  cfg.gamma = detail::constraint_ratio(
      inst.c, 0.3 * inst.c.v.trace() / inst.c.kappa.cwiseInverse().sum());
  inst.kernel = sup_norm_statistic(inst.c, cfg).second;
  inst.boot = bootstrap_distribution(inst.c, inst.kernel, 300, seed + 1);
  return inst;
}

BandRequest request_for(const Instance& inst, double zeta, double alpha = 0.1,
                        int grid_points = 9) {
  return make_band_request(inst.c, inst.kernel, inst.basis,
                           test_util::linspace(inst.data.x.minCoeff(),
                                               inst.data.x.maxCoeff(), grid_points),
                           zeta, alpha, inst.data.x.minCoeff(), inst.data.x.maxCoeff(),
                           /*mean_zero=*/false);
}

}  // namespace

TEST_CASE("zeta = 0 collapses the band to the zero function") {
  Instance inst = make_instance(60, 4, 101, /*signal=*/0.0);
  BandRequest req = request_for(inst, 0.0);
  req.t_star = 1e6;  // zero function comfortably accepted
  REQUIRE(band_limit(req, 0.5, Sense::upper) == 0.0);
  REQUIRE(band_limit(req, 0.5, Sense::lower) == 0.0);

  req.t_star = 1e-300;  // statistic at zero exceeds t*
  REQUIRE_THROWS_AS(band_limit(req, 0.5, Sense::upper), InfeasibleBand);
}

TEST_CASE("limits match a coefficient grid scan (d = 2)") {
  for (std::uint64_t seed : {201ull, 202ull}) {
    Instance inst = make_instance(50, 2, seed);
    const double zeta = 2.0 * rkhs_norm(inst.theta_n) + 1e-8;
    BandRequest req = request_for(inst, zeta);
    req.t_star = critical_value(inst.boot, req.alpha);

    const double x0 = 0.37;
    const Eigen::VectorXd eta = inst.basis.evaluate_all(x0);
    const double up = band_limit(req, x0, Sense::upper);
    const double lo = band_limit(req, x0, Sense::lower);

    // brute force over the coefficient box of the smoothness ellipse
    const double r1 = std::sqrt(zeta * inst.c.kappa[0]);
    const double r2 = std::sqrt(zeta * inst.c.kappa[1]);
    const Eigen::VectorXd g0 = inst.c.gamma.transpose() * inst.c.residual_base;
    const Eigen::MatrixXd q = inst.c.gamma.transpose() * inst.c.gamma;
    double best_up = std::numeric_limits<double>::lowest();
    double best_lo = std::numeric_limits<double>::max();
    const int steps = 400;
    for (int i = 0; i <= steps; ++i) {
      for (int j = 0; j <= steps; ++j) {
        Eigen::Vector2d a(-r1 + 2.0 * r1 * i / steps, -r2 + 2.0 * r2 * j / steps);
        if (a[0] * a[0] / inst.c.kappa[0] + a[1] * a[1] / inst.c.kappa[1] > zeta) continue;
        const Eigen::Vector2d u = g0 - q * a;
        const double stat = u.dot(inst.kernel.pi * u) / inst.data.n();
        if (stat >= req.t_star) continue;
        const double value = eta.dot(a);
        best_up = std::max(best_up, value);
        best_lo = std::min(best_lo, value);
      }
    }
    INFO("seed " << seed);
    REQUIRE(best_up > std::numeric_limits<double>::lowest());
    REQUIRE(std::abs(up - best_up) < 1e-2);
    REQUIRE(std::abs(lo - best_lo) < 1e-2);
  }
}

TEST_CASE("limits are monotone in zeta and t*") {
  Instance inst = make_instance(70, 4, 301);
  const double zeta0 = rkhs_norm(inst.theta_n);
  const double t0 = critical_value(inst.boot, 0.1);
  const double x0 = 0.42;
  double prev_up[3] = {};
  double prev_lo[3] = {};
  for (int zi = 0; zi < 3; ++zi) {
    for (int ti = 0; ti < 3; ++ti) {
      BandRequest req = request_for(inst, zeta0 * std::pow(2.0, zi));
      req.t_star = t0 * std::pow(2.0, ti);
      const double up = band_limit(req, x0, Sense::upper);
      const double lo = band_limit(req, x0, Sense::lower);
      REQUIRE(lo <= up);
      if (ti > 0) {
        REQUIRE(up >= prev_up[zi] - 1e-7);
        REQUIRE(lo <= prev_lo[zi] + 1e-7);
      }
      prev_up[zi] = up;
      prev_lo[zi] = lo;
    }
  }
  // compare across zeta at fixed t*
  BandRequest small = request_for(inst, zeta0);
  BandRequest big = request_for(inst, 2.0 * zeta0);
  small.t_star = big.t_star = t0;
  REQUIRE(band_limit(big, x0, Sense::upper) >= band_limit(small, x0, Sense::upper) - 1e-7);
  REQUIRE(band_limit(big, x0, Sense::lower) <= band_limit(small, x0, Sense::lower) + 1e-7);
}

TEST_CASE("solver optimality: small KKT residuals and duals") {
  Instance inst = make_instance(80, 6, 401);
  BandRequest req = request_for(inst, 2.0 * rkhs_norm(inst.theta_n));
  req.t_star = critical_value(inst.boot, 0.1);
  for (double x0 : {0.2, 0.5, 0.8}) {
    for (Sense sense : {Sense::upper, Sense::lower}) {
      const BandLimitInfo info = band_limit_info(req, x0, sense);
      INFO("x0 " << x0);
      REQUIRE(info.kkt_stationarity <= 1e-6);
      REQUIRE(info.kkt_comp_slack <= 1e-6);
      REQUIRE(info.slack_smoothness >= 0.0);
      REQUIRE(info.slack_statistic >= 0.0);
      REQUIRE(info.dual_smoothness >= 0.0);
      REQUIRE(info.dual_statistic >= 0.0);
    }
  }
}

TEST_CASE("the fitted expansion lies inside its own band") {
  Instance inst = make_instance(90, 4, 501);
  const double stat_n = kernel_statistic(inst.c, inst.kernel);
  const double t_star = critical_value(inst.boot, 0.1);
  REQUIRE(stat_n < t_star);  // the bootstrap quantile dominates the fitted statistic
  BandRequest req = request_for(inst, 2.0 * rkhs_norm(inst.theta_n) + 1e-6);
  const ConfidenceBand band = build_band(req, inst.boot);
  for (Eigen::Index i = 0; i < band.grid.size(); ++i) {
    REQUIRE(band.feasible[static_cast<std::size_t>(i)]);
    const double fitted = evaluate_expansion(inst.theta_n, band.grid[i]);
    REQUIRE(band.lower[i] <= fitted + 1e-9);
    REQUIRE(band.upper[i] >= fitted - 1e-9);
    REQUIRE(band.lower[i] <= band.upper[i]);
  }
}

TEST_CASE("build_band is deterministic and matches the serial reference") {
  Instance inst = make_instance(60, 4, 601);
  BandRequest req = request_for(inst, 2.0 * rkhs_norm(inst.theta_n), 0.1, 7);
  const ConfidenceBand b1 = build_band(req, inst.boot, 1);
  const ConfidenceBand b2 = build_band(req, inst.boot, 2);
  const ConfidenceBand b3 = ref::build_band(req, inst.boot);
  const auto same = [](const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
    if (a.size() != b.size()) return false;
    for (Eigen::Index i = 0; i < a.size(); ++i) {
      const bool both_nan = std::isnan(a[i]) && std::isnan(b[i]);
      if (!both_nan && a[i] != b[i]) return false;
    }
    return true;
  };
  REQUIRE(same(b1.lower, b2.lower));
  REQUIRE(same(b1.upper, b2.upper));
  REQUIRE(same(b1.lower, b3.lower));
  REQUIRE(same(b1.upper, b3.upper));
  REQUIRE(b1.feasible == b2.feasible);
  REQUIRE(b1.feasible == b3.feasible);
  REQUIRE(b1.t_star == b3.t_star);
}

TEST_CASE("band requests are validated") {
  Instance inst = make_instance(40, 4, 701);
  REQUIRE_THROWS_AS(request_for(inst, -1.0), InvalidArgument);

  BandRequest req = request_for(inst, 1.0);
  req.t_star = 1.0;
  REQUIRE_THROWS_AS(band_limit(req, 2.0, Sense::upper), OutOfDomain);

  BandRequest unsorted = request_for(inst, 1.0);
  std::swap(unsorted.grid[0], unsorted.grid[1]);
  REQUIRE_THROWS_AS(build_band(unsorted, inst.boot), InvalidArgument);
}

TEST_CASE("per-point infeasibility is recorded, not thrown") {
  Instance inst = make_instance(50, 4, 801, /*signal=*/3.0);
  BandRequest req = request_for(inst, 1e-12);  // tiny smoothness budget
  BootstrapResult tiny = inst.boot;
  tiny.replicates.setZero();  // forces t* = 0: nothing is accepted
  const ConfidenceBand band = build_band(req, tiny);
  for (bool f : band.feasible) REQUIRE_FALSE(f);
  REQUIRE(std::isnan(band.lower[0]));
}
