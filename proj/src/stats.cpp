#include "rst/stats.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <numbers>
#include <vector>

#include <omp.h>

#include <Eigen/Cholesky>

#include "rst/errors.hpp"
#include "rst/rng.hpp"

namespace rst {

namespace {

constexpr double kGammaFloor = 1e-6;

int resolve_workers(int workers) {
  return workers > 0 ? workers : omp_get_max_threads();
}

void fnv_bytes(std::uint64_t& h, const void* data, std::size_t bytes) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < bytes; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ull;
  }
}

// Solve M u = g with one step of iterative refinement.
Eigen::VectorXd refined_solve(const Eigen::LDLT<Eigen::MatrixXd>& ldlt,
                              const Eigen::MatrixXd& m, const Eigen::VectorXd& g) {
  Eigen::VectorXd u = ldlt.solve(g);
  u += ldlt.solve(g - m * u);
  return u;
}

Eigen::MatrixXd refined_inverse(const Eigen::LDLT<Eigen::MatrixXd>& ldlt,
                                const Eigen::MatrixXd& m) {
  const Eigen::Index d = m.rows();
  Eigen::MatrixXd inv = ldlt.solve(Eigen::MatrixXd::Identity(d, d));
  inv += ldlt.solve(Eigen::MatrixXd::Identity(d, d) - m * inv);
  return ((inv + inv.transpose()) / 2.0).eval();
}

struct RatioParts {
  Eigen::VectorXd u;
  double roughness;  // u' diag(1/kappa) u
  double variance;   // u' V u
};

RatioParts ratio_parts(const ScoreComponents& c, const Eigen::VectorXd& g, double lambda1) {
  Eigen::MatrixXd m = c.v;
  m.diagonal() += lambda1 * c.kappa.cwiseInverse();
  Eigen::LDLT<Eigen::MatrixXd> ldlt(m);
  if (ldlt.info() != Eigen::Success) {
    throw NumericalFailure("sup_norm_statistic: singular penalized system");
  }
  RatioParts parts;
  parts.u = refined_solve(ldlt, m, g);
  parts.roughness = parts.u.cwiseAbs2().dot(c.kappa.cwiseInverse());
  parts.variance = parts.u.dot(c.v * parts.u);
  return parts;
}

}  // namespace

namespace detail {

double gamma_floor() { return kGammaFloor; }

double constraint_ratio(const ScoreComponents& c, double lambda1) {
  const Eigen::VectorXd g = c.gamma.transpose() * c.s;
  const RatioParts parts = ratio_parts(c, g, lambda1);
  if (parts.variance <= 0.0) {
    throw NumericalFailure("constraint_ratio: zero variance at the penalized direction");
  }
  return parts.roughness / parts.variance;
}

Eigen::VectorXd penalized_direction(const ScoreComponents& c, double lambda1, double lambda2) {
  const Eigen::VectorXd g = c.gamma.transpose() * c.s;
  Eigen::MatrixXd m = c.v;
  m.diagonal() += lambda1 * c.kappa.cwiseInverse();
  Eigen::LDLT<Eigen::MatrixXd> ldlt(m);
  if (ldlt.info() != Eigen::Success) {
    throw NumericalFailure("penalized_direction: singular penalized system");
  }
  return refined_solve(ldlt, m, g) / (std::sqrt(static_cast<double>(c.n)) * lambda2);
}

}  // namespace detail

std::uint64_t StatisticKernel::fingerprint() const {
  std::uint64_t h = 0xcbf29ce484222325ull;
  const int k = static_cast<int>(kind);
  fnv_bytes(h, &k, sizeof(k));
  fnv_bytes(h, &gamma, sizeof(gamma));
  fnv_bytes(h, &lambda1, sizeof(lambda1));
  fnv_bytes(h, &lambda2, sizeof(lambda2));
  fnv_bytes(h, &lambda3, sizeof(lambda3));
  fnv_bytes(h, &retained, sizeof(retained));
  fnv_bytes(h, pi.data(), sizeof(double) * static_cast<std::size_t>(pi.size()));
  return h;
}

FunctionExpansion fit_theta_penalized(const Dataset& data, const SobolevBasis& basis,
                                      const NuisanceFit* fit,
                                      const Eigen::VectorXd& lambda_grid, int folds,
                                      std::uint64_t seed, bool center_gamma,
                                      ThetaFitInfo* info) {
  if (lambda_grid.size() == 0) throw InvalidArgument("fit_theta_penalized: empty grid");
  if (folds < 2) throw InvalidArgument("fit_theta_penalized: need at least 2 folds");
  if ((lambda_grid.array() <= 0.0).any()) {
    throw InvalidArgument("fit_theta_penalized: penalty weights must be positive");
  }

  const detail::Design design =
      detail::build_design(data, basis, fit, center_gamma && data.p() >= 1);
  const Eigen::Index n = data.n();
  const int d = basis.d;
  const Eigen::VectorXd inv_kappa = basis.kappa.cwiseInverse();

  const Eigen::MatrixXd gram = design.gamma.transpose() * design.gamma;
  const Eigen::VectorXd moment = design.gamma.transpose() * design.r;

  // Fold assignment by seeded shuffle; contiguous labels modulo fold count.
  std::vector<int> fold(static_cast<std::size_t>(n));
  {
    std::vector<Eigen::Index> perm(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i) perm[i] = i;
    rng::Stream stream(seed, /*id=*/0x7e7aull);
    for (Eigen::Index i = n - 1; i > 0; --i) {
      const auto j =
          static_cast<Eigen::Index>(stream.next_u64() % static_cast<std::uint64_t>(i + 1));
      std::swap(perm[i], perm[j]);
    }
    for (Eigen::Index i = 0; i < n; ++i) fold[perm[i]] = static_cast<int>(i % folds);
  }

  Eigen::VectorXd cv_sse = Eigen::VectorXd::Zero(lambda_grid.size());
  for (int f = 0; f < folds; ++f) {
    std::vector<Eigen::Index> test_rows;
    for (Eigen::Index i = 0; i < n; ++i) {
      if (fold[i] == f) test_rows.push_back(i);
    }
    if (test_rows.empty()) continue;
    const Eigen::Index nt = static_cast<Eigen::Index>(test_rows.size());
    Eigen::MatrixXd g_test(nt, d);
    Eigen::VectorXd r_test(nt);
    for (Eigen::Index r = 0; r < nt; ++r) {
      g_test.row(r) = design.gamma.row(test_rows[r]);
      r_test[r] = design.r[test_rows[r]];
    }
    const Eigen::MatrixXd gram_f = gram - g_test.transpose() * g_test;
    const Eigen::VectorXd moment_f = moment - g_test.transpose() * r_test;
    const double n_train = static_cast<double>(n - nt);
    for (Eigen::Index g = 0; g < lambda_grid.size(); ++g) {
      Eigen::MatrixXd m = gram_f;
      m.diagonal() += n_train * lambda_grid[g] * inv_kappa;
      Eigen::LDLT<Eigen::MatrixXd> ldlt(m);
      if (ldlt.info() != Eigen::Success) {
        throw NumericalFailure("fit_theta_penalized: singular CV normal equations");
      }
      const Eigen::VectorXd a = ldlt.solve(moment_f);
      cv_sse[g] += (r_test - g_test * a).squaredNorm();
    }
  }

  Eigen::Index best = 0;
  cv_sse.minCoeff(&best);
  Eigen::MatrixXd m = gram;
  m.diagonal() += static_cast<double>(n) * lambda_grid[best] * inv_kappa;
  Eigen::LDLT<Eigen::MatrixXd> ldlt(m);
  if (ldlt.info() != Eigen::Success) {
    throw NumericalFailure("fit_theta_penalized: singular normal equations");
  }
  Eigen::VectorXd coeffs = refined_solve(ldlt, m, moment);
  if (!coeffs.allFinite()) {
    throw NumericalFailure("fit_theta_penalized: non-finite solution");
  }
  if (info != nullptr) {
    info->lambda = lambda_grid[best];
    info->cv_sse = cv_sse;
  }
  return FunctionExpansion{std::move(coeffs), basis};
}

double select_gamma(const FunctionExpansion& theta_n, const FunctionExpansion& theta_star,
                    const ScoreComponents& c) {
  const Eigen::VectorXd h = theta_n.coeffs - theta_star.coeffs;
  const double scale = std::max({1.0, theta_n.coeffs.cwiseAbs().maxCoeff(),
                                 theta_star.coeffs.cwiseAbs().maxCoeff()});
  if (h.cwiseAbs().maxCoeff() <= 1e-12 * scale) return kGammaFloor;
  const double var = influence_variance(c, h);
  if (var <= 0.0) return kGammaFloor;
  return rkhs_norm(theta_n.basis, h) / var;
}

double select_gamma(const FunctionExpansion& theta_n, const ScoreComponents& c) {
  const Eigen::VectorXd& h = theta_n.coeffs;
  if (h.size() == 0 || h.cwiseAbs().maxCoeff() <= 1e-12) return kGammaFloor;
  const double var = influence_variance(c, h);
  if (var <= 0.0) return kGammaFloor;
  return rkhs_norm(theta_n.basis, h) / var;
}

std::pair<double, StatisticKernel> sup_norm_statistic(const ScoreComponents& c,
                                                      const SupNormConfig& cfg) {
  if (cfg.gamma <= 0.0) throw InvalidArgument("sup_norm_statistic: gamma must be positive");
  if (cfg.lambda2 <= 0.0) throw InvalidArgument("sup_norm_statistic: lambda2 must be positive");
  const Eigen::VectorXd g = c.gamma.transpose() * c.s;
  const double scale = c.v.trace() / c.kappa.cwiseInverse().sum();
  const double lo = 1e-8 * scale;
  const double hi = 1e8 * scale;

  double lambda1;
  if (cfg.fixed_lambda1 > 0.0) {
    lambda1 = cfg.fixed_lambda1;
  } else if (g.cwiseAbs().maxCoeff() == 0.0) {
    // Degenerate null residual: the statistic is zero for any lambda1; use
    // the geometric bracket midpoint so the kernel stays well conditioned.
    lambda1 = std::sqrt(lo * hi);
  } else {
    auto ratio_at = [&](double lam) {
      const RatioParts parts = ratio_parts(c, g, lam);
      if (parts.variance <= 0.0) {
        throw NumericalFailure("sup_norm_statistic: zero variance in bisection");
      }
      return parts.roughness / parts.variance;
    };
    const double r_lo = ratio_at(lo);
    const double r_hi = ratio_at(hi);
    if (cfg.gamma > r_lo) {
      // a boundary already inside the tolerance counts as the root
      if (std::abs(r_lo - cfg.gamma) / cfg.gamma > cfg.tol) {
        throw BracketExhausted(
            "sup_norm_statistic: target gamma above the achievable ratio at the lower "
            "bracket",
            lo, r_lo);
      }
      lambda1 = lo;
    } else if (cfg.gamma < r_hi) {
      if (std::abs(r_hi - cfg.gamma) / cfg.gamma > cfg.tol) {
        throw BracketExhausted(
            "sup_norm_statistic: target gamma below the achievable ratio at the upper "
            "bracket",
            hi, r_hi);
      }
      lambda1 = hi;
    } else {
      double llo = std::log(lo), lhi = std::log(hi);
      lambda1 = std::exp((llo + lhi) / 2.0);
      for (int iter = 0; iter < 200; ++iter) {
        const double mid = std::exp((llo + lhi) / 2.0);
        const double r = ratio_at(mid);
        lambda1 = mid;
        if (std::abs(r - cfg.gamma) / cfg.gamma <= cfg.tol) break;
        if (r > cfg.gamma) {
          llo = std::log(mid);  // ratio nonincreasing in lambda1
        } else {
          lhi = std::log(mid);
        }
      }
    }
  }

  Eigen::MatrixXd m = c.v;
  m.diagonal() += lambda1 * c.kappa.cwiseInverse();
  Eigen::LDLT<Eigen::MatrixXd> ldlt(m);
  if (ldlt.info() != Eigen::Success) {
    throw NumericalFailure("sup_norm_statistic: singular penalized system");
  }
  StatisticKernel kernel;
  kernel.pi = refined_inverse(ldlt, m) / cfg.lambda2;
  kernel.kind = NormKind::sup;
  kernel.gamma = cfg.gamma;
  kernel.lambda1 = lambda1;
  kernel.lambda2 = cfg.lambda2;
  const double statistic = kernel_statistic(c, kernel);
  return {statistic, kernel};
}

double kernel_statistic(const ScoreComponents& c, const StatisticKernel& kernel) {
  if (kernel.pi.rows() != c.gamma.cols()) {
    throw InvalidArgument("kernel_statistic: kernel dimension does not match components");
  }
  const Eigen::VectorXd g = c.gamma.transpose() * c.s;
  return g.dot(kernel.pi * g) / static_cast<double>(c.n);
}

namespace {

// Shared L2 implementation; `parallel` switches the OpenMP loops, nothing
// else, so the reference path is bit-identical.
std::pair<double, StatisticKernel> l2_norm_impl(const ScoreComponents& c,
                                                const L2NormConfig& cfg, bool parallel) {
  if (cfg.b < 100) throw InvalidArgument("l2_norm_statistic: need at least 100 draws");
  if (cfg.gamma <= 0.0) throw InvalidArgument("l2_norm_statistic: gamma must be positive");
  if (cfg.lambda2 <= 0.0) throw InvalidArgument("l2_norm_statistic: lambda2 must be positive");

  const int d = static_cast<int>(c.v.rows());
  const int b = cfg.b;
  const int nw = parallel ? resolve_workers(cfg.workers) : 1;

  // Underlying standard-normal draws are fixed across the bisection so the
  // retained fraction is a deterministic function of lambda3.
  Eigen::MatrixXd z(d, b);
#pragma omp parallel for schedule(static) num_threads(nw) if (parallel)
  for (int col = 0; col < b; ++col) {
    rng::Stream stream(cfg.seed, 0xd1f5ull, static_cast<std::uint64_t>(col));
    for (int row = 0; row < d; ++row) z(row, col) = stream.next_normal();
  }

  const Eigen::VectorXd inv_kappa = c.kappa.cwiseInverse();
  Eigen::MatrixXd a(d, b);          // columns are the direction draws
  Eigen::VectorXd ratio(b);         // J(a_b) / Var(a_b)
  Eigen::VectorXd quad_v(b);        // a_b' V a_b
  double gamma = cfg.gamma;         // may be raised by the reachability clamp

  auto transform_at = [&](double lambda3) -> int {
    Eigen::MatrixXd m = c.v;
    m.diagonal() += lambda3 * inv_kappa;
    Eigen::LLT<Eigen::MatrixXd> llt(m);
    if (llt.info() != Eigen::Success) {
      throw NumericalFailure("l2_norm_statistic: direction covariance not positive definite");
    }
    const Eigen::MatrixXd u = llt.matrixU();
    int retained = 0;
#pragma omp parallel for schedule(static) num_threads(nw) reduction(+ : retained) if (parallel)
    for (int col = 0; col < b; ++col) {
      const Eigen::VectorXd ab = u.triangularView<Eigen::Upper>().solve(z.col(col));
      a.col(col) = ab;
      const double rough = ab.cwiseAbs2().dot(inv_kappa);
      const double var = ab.dot(c.v * ab);
      quad_v[col] = var;
      ratio[col] = (var > 0.0) ? rough / var : std::numeric_limits<double>::infinity();
      if (ratio[col] <= gamma) ++retained;
    }
    return retained;
  };

  const double scale = c.v.trace() / inv_kappa.sum();
  const double bracket_hi = 1e8 * scale;
  double lambda3;
  int retained;
  if (cfg.fixed_lambda3 > 0.0) {
    lambda3 = cfg.fixed_lambda3;
    retained = transform_at(lambda3);
  } else {
    // The retained fraction is nondecreasing in lambda3 (larger lambda3
    // concentrates the sampler on smooth directions). Bisect into the window.
    double llo = std::log(1e-8 * scale), lhi = std::log(bracket_hi);
    lambda3 = std::exp((llo + lhi) / 2.0);
    retained = transform_at(lambda3);
    double best_lambda3 = lambda3;
    int best_retained = retained;
    for (int iter = 0; iter < 60 && lhi - llo > 1e-3; ++iter) {
      const double frac = static_cast<double>(retained) / b;
      if (frac >= cfg.retain_lo && frac <= cfg.retain_hi) break;
      if (frac < cfg.retain_lo) {
        llo = std::log(lambda3);
      } else {
        lhi = std::log(lambda3);
      }
      lambda3 = std::exp((llo + lhi) / 2.0);
      retained = transform_at(lambda3);
      if (std::abs(retained - b / 2) < std::abs(best_retained - b / 2)) {
        best_lambda3 = lambda3;
        best_retained = retained;
      }
    }
    const double frac = static_cast<double>(retained) / b;
    if (frac < cfg.retain_lo || frac > cfg.retain_hi) {
      // Window not attainable (e.g. a flat ratio distribution); fall back to
      // the closest achieved configuration.
      lambda3 = best_lambda3;
      retained = transform_at(lambda3);
    }
  }
  if (retained == 0 && cfg.clamp_gamma_to_reachable) {
    // gamma sits below every achievable ratio; use the most concentrated
    // sampler and retain its smoothest half. A fixed kernel of any
    // direction class keeps the test calibrated.
    lambda3 = (cfg.fixed_lambda3 > 0.0) ? cfg.fixed_lambda3 : bracket_hi;
    transform_at(lambda3);
    std::vector<double> sorted(ratio.data(), ratio.data() + b);
    std::nth_element(sorted.begin(), sorted.begin() + b / 2, sorted.end());
    gamma = sorted[static_cast<std::size_t>(b / 2)];
    retained = transform_at(lambda3);  // recount against the raised gamma
  }
  if (retained == 0) {
    throw DegenerateSampler("l2_norm_statistic: no directions retained in A_gamma");
  }

  // Importance weights: Gaussian KDE of the ratio over all B draws,
  // Silverman bandwidth, floored to cap the weights.
  Eigen::VectorXd pi_vals(b);
  {
    const double mean = ratio.mean();
    const double sd = std::sqrt((ratio.array() - mean).square().sum() / (b - 1));
    std::vector<double> sorted(ratio.data(), ratio.data() + b);
    std::sort(sorted.begin(), sorted.end());
    const double q1 = sorted[static_cast<std::size_t>(0.25 * (b - 1))];
    const double q3 = sorted[static_cast<std::size_t>(0.75 * (b - 1))];
    const double spread = std::min(sd, (q3 - q1) / 1.34);
    double bw = 0.9 * spread * std::pow(static_cast<double>(b), -0.2);
    if (!(bw > 0.0)) bw = std::max(1e-12, 1e-9 * (1.0 + std::abs(mean)));
    const double norm = 1.0 / (b * bw * std::sqrt(2.0 * std::numbers::pi));
#pragma omp parallel for schedule(static) num_threads(nw) if (parallel)
    for (int i = 0; i < b; ++i) {
      double acc = 0.0;
      for (int j = 0; j < b; ++j) {
        const double t = (ratio[i] - ratio[j]) / bw;
        acc += std::exp(-0.5 * t * t);
      }
      pi_vals[i] = acc * norm;
    }
    const double floor = 1e-12 * pi_vals.maxCoeff();
    pi_vals = pi_vals.cwiseMax(floor);
  }

  StatisticKernel kernel;
  kernel.kind = NormKind::l2;
  kernel.gamma = gamma;
  kernel.lambda2 = cfg.lambda2;
  kernel.lambda3 = lambda3;
  kernel.retained = retained;
  kernel.retained_frac = static_cast<double>(retained) / b;

  // Pi = A' U^{-1} A over retained rows, U_b = pi_b a_b' V a_b. Fixed-size
  // blocks keep the reduction order independent of the worker count.
  constexpr int kBlock = 64;
  const int nblocks = (b + kBlock - 1) / kBlock;
  std::vector<Eigen::MatrixXd> partials(static_cast<std::size_t>(nblocks));
#pragma omp parallel for schedule(static) num_threads(nw) if (parallel)
  for (int blk = 0; blk < nblocks; ++blk) {
    Eigen::MatrixXd acc = Eigen::MatrixXd::Zero(d, d);
    const int end = std::min(b, (blk + 1) * kBlock);
    for (int col = blk * kBlock; col < end; ++col) {
      if (ratio[col] > gamma) continue;
      const double u_b = pi_vals[col] * quad_v[col];
      if (u_b <= 0.0) continue;
      acc.selfadjointView<Eigen::Lower>().rankUpdate(a.col(col), 1.0 / u_b);
    }
    partials[static_cast<std::size_t>(blk)] = acc;
  }
  Eigen::MatrixXd pi_mat = Eigen::MatrixXd::Zero(d, d);
  for (const auto& part : partials) pi_mat += part;
  pi_mat = pi_mat.selfadjointView<Eigen::Lower>();
  kernel.pi = pi_mat / cfg.lambda2;

  const double statistic = kernel_statistic(c, kernel);
  return {statistic, kernel};
}

}  // namespace

std::pair<double, StatisticKernel> l2_norm_statistic(const ScoreComponents& c,
                                                     const L2NormConfig& cfg) {
  return l2_norm_impl(c, cfg, /*parallel=*/true);
}

namespace ref {
std::pair<double, StatisticKernel> l2_norm_statistic(const ScoreComponents& c,
                                                     const L2NormConfig& cfg) {
  return l2_norm_impl(c, cfg, /*parallel=*/false);
}
}  // namespace ref

namespace detail {

StatisticKernel l2_kernel_from_draws(const ScoreComponents& c, const Eigen::MatrixXd& draws,
                                     double gamma, double lambda2, double lambda3) {
  const Eigen::Index b = draws.rows();
  const Eigen::Index d = draws.cols();
  if (d != c.v.rows()) throw InvalidArgument("l2_kernel_from_draws: dimension mismatch");
  const Eigen::VectorXd inv_kappa = c.kappa.cwiseInverse();
  Eigen::VectorXd ratio(b), quad_v(b);
  for (Eigen::Index i = 0; i < b; ++i) {
    const Eigen::VectorXd ab = draws.row(i).transpose();
    quad_v[i] = ab.dot(c.v * ab);
    ratio[i] = ab.cwiseAbs2().dot(inv_kappa) / quad_v[i];
  }
  const double mean = ratio.mean();
  double sd = 0.0;
  if (b > 1) sd = std::sqrt((ratio.array() - mean).square().sum() / (b - 1));
  double bw = 0.9 * sd * std::pow(static_cast<double>(b), -0.2);
  if (!(bw > 0.0)) bw = std::max(1e-12, 1e-9 * (1.0 + std::abs(mean)));
  Eigen::VectorXd pi_vals(b);
  const double norm = 1.0 / (b * bw * std::sqrt(2.0 * std::numbers::pi));
  for (Eigen::Index i = 0; i < b; ++i) {
    double acc = 0.0;
    for (Eigen::Index j = 0; j < b; ++j) {
      const double t = (ratio[i] - ratio[j]) / bw;
      acc += std::exp(-0.5 * t * t);
    }
    pi_vals[i] = acc * norm;
  }
  pi_vals = pi_vals.cwiseMax(1e-12 * pi_vals.maxCoeff());

  StatisticKernel kernel;
  kernel.kind = NormKind::l2;
  kernel.gamma = gamma;
  kernel.lambda2 = lambda2;
  kernel.lambda3 = lambda3;
  Eigen::MatrixXd pi_mat = Eigen::MatrixXd::Zero(d, d);
  int retained = 0;
  for (Eigen::Index i = 0; i < b; ++i) {
    if (ratio[i] > gamma) continue;
    ++retained;
    pi_mat += draws.row(i).transpose() * draws.row(i) / (pi_vals[i] * quad_v[i]);
  }
  if (retained == 0) throw DegenerateSampler("l2_kernel_from_draws: nothing retained");
  kernel.retained = retained;
  kernel.retained_frac = static_cast<double>(retained) / static_cast<double>(b);
  kernel.pi = pi_mat / lambda2;
  return kernel;
}

}  // namespace detail

}  // namespace rst
