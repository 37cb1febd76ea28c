#pragma once

#include <cstdint>

#include <Eigen/Core>

#include "rst/score.hpp"
#include "rst/stats.hpp"

namespace rst {

enum class MultiplierKind { normal, rademacher };

struct BootstrapResult {
  Eigen::VectorXd replicates;  // m bootstrap statistics, all >= 0
  int m = 0;
  std::uint64_t seed = 0;
  MultiplierKind multiplier_kind = MultiplierKind::normal;
  std::uint64_t kernel_fingerprint = 0;
};

// Multiplier bootstrap of the quadratic-form statistic. Each replicate draws
// iid mean-zero unit-variance multipliers xi, forms
// s~ = diag(xi - xi_bar) S(theta_n), and evaluates n^{-1}(G's~)' Pi (G's~)
// with the same Pi as the observed statistic. `components` must be assembled
// at theta_n (its s field is S(theta_n)). Replicate m derives its multiplier
// stream from (seed, m), so the result is worker-count invariant.
BootstrapResult bootstrap_distribution(const ScoreComponents& components,
                                       const StatisticKernel& kernel, int m,
                                       std::uint64_t seed,
                                       MultiplierKind kind = MultiplierKind::normal,
                                       int workers = 0);

// One replicate with externally supplied multipliers (test seam).
double replicate_from_multipliers(const ScoreComponents& components,
                                  const StatisticKernel& kernel, const Eigen::VectorXd& xi);

// rho(t) = M^{-1} Sum I(T_m > t).
double p_value(double t_observed, const BootstrapResult& boot);

// Finite-sample-valid variant (1 + #{T_m >= t}) / (M + 1).
double p_value_finite_sample(double t_observed, const BootstrapResult& boot);

// Empirical (1-alpha)-quantile, higher order statistic: index
// floor((1-alpha) M) + 1 (1-based), clamped to M.
double critical_value(const BootstrapResult& boot, double alpha);

namespace ref {
// Serial reference implementation, bit-identical to the OpenMP path.
BootstrapResult bootstrap_distribution(const ScoreComponents& components,
                                       const StatisticKernel& kernel, int m,
                                       std::uint64_t seed,
                                       MultiplierKind kind = MultiplierKind::normal);
}  // namespace ref

}  // namespace rst
