#pragma once

#include <cstdint>
#include <utility>

#include <Eigen/Core>

#include "rst/basis.hpp"
#include "rst/dataset.hpp"
#include "rst/nuisance.hpp"
#include "rst/score.hpp"

namespace rst {

enum class NormKind { sup, l2 };

// Matrix Pi of the quadratic-form statistic n^{-1} (Gamma' S)' Pi (Gamma' S),
// together with the tuning values that produced it. The identical Pi is
// reused for the observed statistic and every bootstrap replicate.
struct StatisticKernel {
  Eigen::MatrixXd pi;  // d x d symmetric PSD
  NormKind kind = NormKind::sup;
  double gamma = 0.0;
  double lambda1 = 0.0;
  double lambda2 = 1.0;
  double lambda3 = 0.0;
  int retained = 0;          // l2 only: directions kept in A_gamma
  double retained_frac = 0.0;

  std::uint64_t fingerprint() const;
};

struct SupNormConfig {
  double gamma = 1.0;          // smoothness bound for H_gamma
  double lambda2 = 1.0;        // pure scale; threaded through observed and bootstrap
  double tol = 1e-4;           // relative tolerance of the ratio bisection
  double fixed_lambda1 = 0.0;  // > 0 skips the bisection (oracle tests)
};

struct L2NormConfig {
  double gamma = 1.0;
  int b = 2000;                // Monte Carlo direction count, >= 100
  double lambda2 = 1.0;
  std::uint64_t seed = 1;
  double retain_lo = 0.45;     // target window for the retained fraction
  double retain_hi = 0.55;
  double fixed_lambda3 = 0.0;  // > 0 skips the bisection
  int workers = 0;             // 0: library default
  // When gamma lies below every sampled ratio (so nothing would be
  // retained), raise it to the reachable range instead of throwing.
  bool clamp_gamma_to_reachable = false;
};

struct ThetaFitInfo {
  double lambda = 0.0;           // CV choice
  Eigen::VectorXd cv_sse;        // per-grid-value CV error
};

// Penalized estimate of theta_0: minimizes the empirical risk plus
// lambda * Sum_j a_j^2 / kappa_j, lambda chosen by K-fold cross-validation.
// For the PAM the empirical risk uses the nuisance-projected residuals.
FunctionExpansion fit_theta_penalized(const Dataset& data, const SobolevBasis& basis,
                                      const NuisanceFit* fit,
                                      const Eigen::VectorXd& lambda_grid, int folds,
                                      std::uint64_t seed, bool center_gamma = true,
                                      ThetaFitInfo* info = nullptr);

// Data-adaptive smoothness bound for testing: gamma_n = J(h_n) / Var_n(h_n)
// with h_n = theta_n - theta_star. Falls back to the floor 1e-6 when h_n is
// numerically zero.
double select_gamma(const FunctionExpansion& theta_n, const FunctionExpansion& theta_star,
                    const ScoreComponents& c);

// Band-construction variant: gamma_n = J(theta_n) / Var_n(theta_n).
double select_gamma(const FunctionExpansion& theta_n, const ScoreComponents& c);

// Penalized supremum-norm statistic. lambda1 is bisected so that
// J(a~)/Var(a~) = gamma; throws BracketExhausted when the target is not
// attainable on the bracket.
std::pair<double, StatisticKernel> sup_norm_statistic(const ScoreComponents& c,
                                                      const SupNormConfig& cfg);

// Monte Carlo L2-norm statistic over directions drawn from
// N(0, {V + lambda3 diag(1/kappa)}^{-1}), importance-weighted by a kernel
// density estimate of the smoothness ratio.
std::pair<double, StatisticKernel> l2_norm_statistic(const ScoreComponents& c,
                                                     const L2NormConfig& cfg);

// n^{-1} (Gamma' s)' Pi (Gamma' s) for the components' current null.
double kernel_statistic(const ScoreComponents& c, const StatisticKernel& kernel);

namespace ref {
// Serial reference for the Monte Carlo L2 path; bit-identical to the
// OpenMP implementation by construction.
std::pair<double, StatisticKernel> l2_norm_statistic(const ScoreComponents& c,
                                                     const L2NormConfig& cfg);
}  // namespace ref

namespace detail {
// Closed-form maximizer a~ of the penalized sup-norm objective at fixed
// lambda1, lambda2.
Eigen::VectorXd penalized_direction(const ScoreComponents& c, double lambda1, double lambda2);

// J(u)/Var(u) at u = {V + lambda1 diag(1/kappa)}^{-1} Gamma' S.
double constraint_ratio(const ScoreComponents& c, double lambda1);

// Builds the L2 kernel from externally supplied direction draws (tests).
StatisticKernel l2_kernel_from_draws(const ScoreComponents& c, const Eigen::MatrixXd& draws,
                                     double gamma, double lambda2, double lambda3);

double gamma_floor();
}  // namespace detail

}  // namespace rst
