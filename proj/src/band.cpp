#include "rst/band.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <vector>

#include <omp.h>

#include <Eigen/Cholesky>

#include "rst/errors.hpp"

namespace rst {

namespace {

constexpr double kStrictMargin = 1e-12;  // closure of the open constraint "< t*"

// Shared constraint data for all grid points of one request. The solver
// works in the scaled variable x = diag(1/sqrt(kappa)) a, which turns the
// smoothness ellipsoid into a sphere and keeps the Newton systems well
// conditioned across eight decades of penalty weights.
struct Solver {
  Eigen::VectorXd scale;    // sqrt(kappa); a = scale .* x
  Eigen::MatrixXd q_s;      // (Gamma' Gamma) diag(scale)
  Eigen::VectorXd g0;       // Gamma' r
  Eigen::MatrixXd pi;
  Eigen::MatrixXd h2;       // Hessian of T in x: diag(scale) H2a diag(scale)
  Eigen::VectorXd h2_lin;
  double inv_n = 0.0;
  double zeta = 0.0;
  double t_rel = 0.0;
  bool has_eq = false;
  Eigen::VectorXd m_eq;     // scaled equality direction
  Eigen::VectorXd x_start;  // strictly feasible point from phase I
  bool feasible = false;

  explicit Solver(const BandRequest& req) {
    const Eigen::Index d = req.c.gamma.cols();
    scale = req.c.kappa.cwiseSqrt();
    Eigen::MatrixXd q = req.c.gamma.transpose() * req.c.gamma;
    q = ((q + q.transpose()) / 2.0).eval();
    g0 = req.c.gamma.transpose() * req.residual_base;
    pi = req.kernel.pi;
    inv_n = 1.0 / static_cast<double>(req.c.n);
    q_s = q * scale.asDiagonal();
    Eigen::MatrixXd h2_a = (2.0 * inv_n) * (q * pi * q);
    h2 = scale.asDiagonal() * h2_a * scale.asDiagonal();
    h2 = ((h2 + h2.transpose()) / 2.0).eval();
    h2_lin = scale.asDiagonal() * ((2.0 * inv_n) * (q * (pi * g0))).eval();
    zeta = req.zeta;
    t_rel = req.t_star * (1.0 - kStrictMargin);
    has_eq = req.mean_zero && req.mean_zero_dir.size() == d &&
             req.mean_zero_dir.cwiseAbs().maxCoeff() > 1e-14;
    if (has_eq) m_eq = scale.cwiseProduct(req.mean_zero_dir);
  }

  double statistic(const Eigen::VectorXd& x) const {
    const Eigen::VectorXd u = g0 - q_s * x;
    return inv_n * u.dot(pi * u);
  }

  double smoothness(const Eigen::VectorXd& x) const { return x.squaredNorm(); }

  // Solve (H)x = b, optionally subject to m_eq' x = rhs_eq, H positive definite.
  Eigen::VectorXd constrained_solve(const Eigen::LDLT<Eigen::MatrixXd>& ldlt,
                                    const Eigen::VectorXd& b, double rhs_eq,
                                    double* multiplier) const {
    const Eigen::VectorXd y1 = ldlt.solve(b);
    if (!has_eq) {
      if (multiplier != nullptr) *multiplier = 0.0;
      return y1;
    }
    const Eigen::VectorXd y2 = ldlt.solve(m_eq);
    const double denom = m_eq.dot(y2);
    if (denom <= 0.0) {
      if (multiplier != nullptr) *multiplier = 0.0;
      return y1;
    }
    const double w = (m_eq.dot(y1) - rhs_eq) / denom;
    if (multiplier != nullptr) *multiplier = w;
    return y1 - w * y2;
  }

  // Ridge path argmin T(x) + nu |x|^2; traces the Pareto frontier of the two
  // constraint functionals.
  Eigen::VectorXd ridge_point(double nu) const {
    Eigen::MatrixXd h = h2 / 2.0;
    h.diagonal().array() += nu;
    Eigen::LDLT<Eigen::MatrixXd> ldlt(h);
    return constrained_solve(ldlt, h2_lin / 2.0, 0.0, nullptr);
  }

  double violation(const Eigen::VectorXd& x) const {
    const double s1 = smoothness(x) / std::max(zeta, 1e-300);
    const double s2 = statistic(x) / std::max(t_rel, 1e-300);
    return std::max(s1, s2);
  }

  // Finds a strictly feasible interior point or marks the set empty.
  void phase_one() {
    const Eigen::Index d = scale.size();
    const double nu_scale = std::max(1e-300, h2.trace() / (2.0 * d));
    double best_v = violation(Eigen::VectorXd::Zero(d));
    Eigen::VectorXd best_x = Eigen::VectorXd::Zero(d);
    double best_log_nu = std::log(nu_scale);
    const int grid_n = 41;
    for (int i = 0; i < grid_n; ++i) {
      const double log_nu =
          std::log(nu_scale) + (-10.0 + 20.0 * i / (grid_n - 1)) * std::log(10.0);
      const Eigen::VectorXd x = ridge_point(std::exp(log_nu));
      const double v = violation(x);
      if (v < best_v) {
        best_v = v;
        best_x = x;
        best_log_nu = log_nu;
      }
    }
    // local refinement around the best grid value
    double lo = best_log_nu - 0.5 * std::log(10.0);
    double hi = best_log_nu + 0.5 * std::log(10.0);
    for (int it = 0; it < 24; ++it) {
      const double m1 = lo + (hi - lo) / 3.0;
      const double m2 = hi - (hi - lo) / 3.0;
      const Eigen::VectorXd x1 = ridge_point(std::exp(m1));
      const Eigen::VectorXd x2 = ridge_point(std::exp(m2));
      const double v1 = violation(x1), v2 = violation(x2);
      if (v1 < best_v) {
        best_v = v1;
        best_x = x1;
      }
      if (v2 < best_v) {
        best_v = v2;
        best_x = x2;
      }
      if (v1 < v2) {
        hi = m2;
      } else {
        lo = m1;
      }
    }
    feasible = best_v < 1.0 - 1e-12;
    x_start = best_x;
  }

  // objective_a is the linear objective in the original coefficients.
  // Primal-dual interior point: damped Newton on the perturbed KKT system
  // with the complementarity target cut by 10x per step.
  BandLimitInfo solve(const Eigen::VectorXd& objective_a, double x0) const {
    if (!feasible) {
      std::ostringstream msg;
      msg << "empty confidence region at x0 = " << x0 << " (zeta = " << zeta
          << ", t* margin exhausted)";
      throw InfeasibleBand(msg.str(), x0);
    }
    const Eigen::VectorXd c_x = scale.cwiseProduct(objective_a);
    const double c_scale = std::max(1.0, objective_a.cwiseAbs().maxCoeff());
    const double obj_tol = std::max(1.0, c_x.norm());

    Eigen::VectorXd x = x_start;
    double s1 = zeta - smoothness(x);
    double s2 = t_rel - statistic(x);
    double lam1 = 1.0 / s1;
    double lam2 = 1.0 / s2;
    double nu = 0.0;
    int iters = 0;
    double stationarity = std::numeric_limits<double>::infinity();

    for (; iters < 300; ++iters) {
      const Eigen::VectorXd g1 = 2.0 * x;
      const Eigen::VectorXd g2 = h2 * x - h2_lin;
      Eigen::VectorXd r_dual = -c_x + lam1 * g1 + lam2 * g2;
      if (has_eq) r_dual += nu * m_eq;
      const double gap = lam1 * s1 + lam2 * s2;
      const double r_eq = has_eq ? m_eq.dot(x) : 0.0;
      stationarity = r_dual.cwiseQuotient(scale).cwiseAbs().maxCoeff() / c_scale;
      if (stationarity <= 1e-9 && gap <= 1e-9 * obj_tol &&
          std::abs(r_eq) <= 1e-10 * (1.0 + x.norm())) {
        break;
      }
      const double mu = 0.1 * gap / 2.0;

      Eigen::MatrixXd m = lam2 * h2 + (lam1 / s1) * g1 * g1.transpose() +
                          (lam2 / s2) * g2 * g2.transpose();
      m.diagonal().array() += 2.0 * lam1;
      const double rc1 = lam1 * s1 - mu;
      const double rc2 = lam2 * s2 - mu;
      const Eigen::VectorXd rhs = -r_dual + g1 * (rc1 / s1) + g2 * (rc2 / s2);
      Eigen::LDLT<Eigen::MatrixXd> ldlt(m);
      double dnu = 0.0;
      const Eigen::VectorXd dx = constrained_solve(ldlt, rhs, -r_eq, &dnu);
      if (!dx.allFinite()) break;
      const double dlam1 = (lam1 * g1.dot(dx) - rc1) / s1;
      const double dlam2 = (lam2 * g2.dot(dx) - rc2) / s2;

      // fraction-to-boundary on the multipliers, backtracking on the slacks
      double alpha = 1.0;
      if (dlam1 < 0.0) alpha = std::min(alpha, -0.99 * lam1 / dlam1);
      if (dlam2 < 0.0) alpha = std::min(alpha, -0.99 * lam2 / dlam2);
      bool moved = false;
      for (int ls = 0; ls < 70; ++ls) {
        const Eigen::VectorXd cand = x + alpha * dx;
        const double c_s1 = zeta - smoothness(cand);
        const double c_s2 = t_rel - statistic(cand);
        if (c_s1 > 0.0 && c_s2 > 0.0) {
          x = cand;
          s1 = c_s1;
          s2 = c_s2;
          lam1 += alpha * dlam1;
          lam2 += alpha * dlam2;
          nu += alpha * dnu;
          moved = true;
          break;
        }
        alpha *= 0.5;
      }
      if (!moved) break;
    }

    BandLimitInfo info;
    info.value = c_x.dot(x);
    info.a = scale.cwiseProduct(x);
    info.dual_smoothness = lam1;
    info.dual_statistic = lam2;
    info.dual_mean_zero = nu;
    info.slack_smoothness = s1;
    info.slack_statistic = s2;
    info.outer_iterations = iters;
    info.kkt_stationarity = stationarity;
    info.kkt_comp_slack = std::max(lam1 * s1, lam2 * s2);
    if (info.kkt_stationarity > 1e-7 || info.kkt_comp_slack > 1e-7 * obj_tol ||
        !(s1 > 0.0) || !(s2 > 0.0)) {
      std::ostringstream msg;
      msg << "interior-point solve did not converge at x0 = " << x0
          << " (stationarity " << info.kkt_stationarity << ", duals " << lam1 << ", "
          << lam2 << ")";
      throw NumericalFailure(msg.str());
    }
    return info;
  }
};

BandLimitInfo limit_with_solver(const Solver& solver, const BandRequest& req, double x0,
                                Sense sense) {
  if (x0 < req.x_lo || x0 > req.x_hi) {
    throw OutOfDomain("band_limit: evaluation point outside the observed exposure range");
  }
  if (req.zeta < 0.0) throw InvalidArgument("band_limit: zeta must be nonnegative");
  if (!(req.t_star == req.t_star)) throw InvalidArgument("band_limit: t_star unset");

  const Eigen::VectorXd eta_x0 = req.basis.evaluate_all(x0);
  if (req.zeta == 0.0) {
    // J(a) <= 0 forces a = 0: singleton feasible set.
    Eigen::VectorXd zero = Eigen::VectorXd::Zero(eta_x0.size());
    const double t0 = solver.statistic(zero);
    if (t0 > solver.t_rel) {
      throw InfeasibleBand("band_limit: zeta = 0 and the zero function is rejected", x0);
    }
    BandLimitInfo info;
    info.value = 0.0;
    info.a = zero;
    return info;
  }
  const Eigen::VectorXd objective = (sense == Sense::upper) ? eta_x0 : (-eta_x0).eval();
  BandLimitInfo info = solver.solve(objective, x0);
  if (sense == Sense::lower) info.value = -info.value;
  return info;
}

ConfidenceBand build_band_impl(const BandRequest& req, const BootstrapResult& boot,
                               int workers, bool parallel) {
  for (Eigen::Index i = 0; i + 1 < req.grid.size(); ++i) {
    if (!(req.grid[i] < req.grid[i + 1])) {
      throw InvalidArgument("build_band: grid must be strictly increasing");
    }
  }
  if (req.grid.size() == 0) throw InvalidArgument("build_band: empty grid");
  if (req.grid[0] < req.x_lo || req.grid[req.grid.size() - 1] > req.x_hi) {
    throw InvalidArgument("build_band: grid outside the observed exposure range");
  }

  BandRequest local = req;
  local.t_star = critical_value(boot, req.alpha);

  Solver solver(local);
  solver.phase_one();

  const Eigen::Index g = local.grid.size();
  ConfidenceBand band;
  band.grid = local.grid;
  band.lower.setConstant(g, std::numeric_limits<double>::quiet_NaN());
  band.upper.setConstant(g, std::numeric_limits<double>::quiet_NaN());
  band.feasible.assign(static_cast<std::size_t>(g), false);
  band.t_star = local.t_star;
  band.zeta = local.zeta;

  const int nw = parallel ? (workers > 0 ? workers : omp_get_max_threads()) : 1;
#pragma omp parallel for schedule(dynamic) num_threads(nw) if (parallel)
  for (Eigen::Index i = 0; i < g; ++i) {
    try {
      const BandLimitInfo up = limit_with_solver(solver, local, local.grid[i], Sense::upper);
      const BandLimitInfo lo = limit_with_solver(solver, local, local.grid[i], Sense::lower);
      band.upper[i] = up.value;
      band.lower[i] = lo.value;
      band.feasible[static_cast<std::size_t>(i)] = true;
    } catch (const Error&) {
      // recorded as infeasible at this point
    }
  }
  return band;
}

}  // namespace

BandRequest make_band_request(const ScoreComponents& c, const StatisticKernel& kernel,
                              const SobolevBasis& basis, Eigen::VectorXd grid, double zeta,
                              double alpha, double x_lo, double x_hi, bool mean_zero) {
  if (zeta < 0.0) throw InvalidArgument("make_band_request: zeta must be nonnegative");
  if (!(alpha > 0.0 && alpha < 1.0)) {
    throw InvalidArgument("make_band_request: alpha must lie in (0,1)");
  }
  BandRequest req;
  req.grid = std::move(grid);
  req.zeta = zeta;
  req.alpha = alpha;
  req.kernel = kernel;
  req.c = c;
  req.residual_base = c.residual_base;
  req.basis = basis;
  req.x_lo = x_lo;
  req.x_hi = x_hi;
  req.mean_zero = mean_zero;
  if (mean_zero) req.mean_zero_dir = c.eta_colsum;
  return req;
}

double band_limit(const BandRequest& req, double x0, Sense sense) {
  return band_limit_info(req, x0, sense).value;
}

BandLimitInfo band_limit_info(const BandRequest& req, double x0, Sense sense) {
  Solver solver(req);
  solver.phase_one();
  return limit_with_solver(solver, req, x0, sense);
}

ConfidenceBand build_band(const BandRequest& req, const BootstrapResult& boot, int workers) {
  return build_band_impl(req, boot, workers, /*parallel=*/true);
}

namespace ref {
ConfidenceBand build_band(const BandRequest& req, const BootstrapResult& boot) {
  return build_band_impl(req, boot, /*workers=*/1, /*parallel=*/false);
}
}  // namespace ref

}  // namespace rst
