#include "rst/nuisance.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include <Eigen/Cholesky>

#include "rst/errors.hpp"
#include "rst/rng.hpp"

namespace rst {

namespace {

Eigen::VectorXd log_grid(double lo, double hi, int count) {
  Eigen::VectorXd g(count);
  if (count == 1) {
    g[0] = lo;
    return g;
  }
  const double llo = std::log(lo), lhi = std::log(hi);
  for (int i = 0; i < count; ++i) {
    g[i] = std::exp(llo + (lhi - llo) * i / (count - 1));
  }
  g[0] = lo;
  g[count - 1] = hi;
  return g;
}

std::vector<int> fold_assignment(Eigen::Index n, int folds, std::uint64_t seed) {
  std::vector<int> perm(static_cast<std::size_t>(n));
  std::iota(perm.begin(), perm.end(), 0);
  rng::Stream stream(seed, /*id=*/0x0f01d5);
  for (Eigen::Index i = n - 1; i > 0; --i) {
    const auto j = static_cast<Eigen::Index>(stream.next_u64() % static_cast<std::uint64_t>(i + 1));
    std::swap(perm[i], perm[j]);
  }
  std::vector<int> fold(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) fold[perm[i]] = static_cast<int>(i % folds);
  return fold;
}

}  // namespace

NuisanceFit fit_nuisance(const Dataset& data, const SobolevBasis& basis,
                         const LearnerConfig& config) {
  data.validate();
  if (data.p() < 1) {
    throw ModelMisuse("fit_nuisance: no adjustment covariates (p = 0); the nonparametric "
                      "model has no nuisance to fit");
  }
  if (config.folds < 2) throw InvalidArgument("fit_nuisance: need at least 2 CV folds");
  if (config.lambda_grid_size < 1) throw InvalidArgument("fit_nuisance: empty lambda grid");

  const Eigen::Index n = data.n();
  const Eigen::Index p = data.p();
  const int d = basis.d;
  const int dw = (config.d_w % 2 == 0) ? config.d_w : config.d_w + 1;

  // Design: intercept plus, per W coordinate, an unpenalized linear column
  // (the null space of the second-derivative penalty) and a Sobolev block,
  // each coordinate rescaled by its empirical range.
  const Eigen::Index block = 1 + dw;
  const Eigen::Index cols = 1 + p * block;
  Eigen::MatrixXd design(n, cols);
  design.col(0).setOnes();
  Eigen::VectorXd penalty(cols);
  penalty[0] = 0.0;
  for (Eigen::Index c = 0; c < p; ++c) {
    double lo = data.w.col(c).minCoeff();
    double hi = data.w.col(c).maxCoeff();
    if (!(lo < hi)) {  // constant covariate; widen so the affine map exists
      lo -= 0.5;
      hi += 0.5;
    }
    const SobolevBasis wb = build_basis(dw, lo, hi);
    const Eigen::Index base = 1 + c * block;
    for (Eigen::Index i = 0; i < n; ++i) design(i, base) = wb.rescale(data.w(i, c)) - 0.5;
    // weight the linear column like the smoothest eigenfunction so flat
    // targets shrink it away while near-linear targets keep it cheap
    penalty[base] = 1.0 / wb.kappa[0];
    design.block(0, base + 1, n, dw) = wb.evaluate_matrix(data.w.col(c));
    for (int k = 0; k < dw; ++k) penalty[base + 1 + k] = 1.0 / wb.kappa[k];
  }

  // Regression targets: Y and the d eigenfunctions of X.
  Eigen::MatrixXd targets(n, d + 1);
  targets.col(0) = data.y;
  targets.rightCols(d) = basis.evaluate_matrix(data.x);

  const Eigen::VectorXd grid =
      log_grid(config.lambda_min, config.lambda_max, config.lambda_grid_size);
  const std::vector<int> fold = fold_assignment(n, config.folds, config.seed);

  const Eigen::MatrixXd gram = design.transpose() * design;
  const Eigen::MatrixXd xty = design.transpose() * targets;

  // One factorization per (fold, lambda); the d+1 regressions share it.
  Eigen::MatrixXd cv_sse = Eigen::MatrixXd::Zero(grid.size(), d + 1);
  for (int f = 0; f < config.folds; ++f) {
    std::vector<Eigen::Index> test_rows;
    for (Eigen::Index i = 0; i < n; ++i) {
      if (fold[i] == f) test_rows.push_back(i);
    }
    if (test_rows.empty()) continue;
    const Eigen::Index nt = static_cast<Eigen::Index>(test_rows.size());
    Eigen::MatrixXd z_test(nt, cols);
    Eigen::MatrixXd t_test(nt, d + 1);
    for (Eigen::Index r = 0; r < nt; ++r) {
      z_test.row(r) = design.row(test_rows[r]);
      t_test.row(r) = targets.row(test_rows[r]);
    }
    const Eigen::MatrixXd gram_f = gram - z_test.transpose() * z_test;
    const Eigen::MatrixXd xty_f = xty - z_test.transpose() * t_test;
    const double n_train = static_cast<double>(n - nt);
    for (Eigen::Index g = 0; g < grid.size(); ++g) {
      Eigen::MatrixXd m = gram_f;
      m.diagonal() += n_train * grid[g] * penalty;
      Eigen::LDLT<Eigen::MatrixXd> ldlt(m);
      if (ldlt.info() != Eigen::Success) {
        throw NumericalFailure("fit_nuisance: singular CV normal equations");
      }
      const Eigen::MatrixXd beta = ldlt.solve(xty_f);
      const Eigen::MatrixXd resid = t_test - z_test * beta;
      cv_sse.row(g) += resid.colwise().squaredNorm();
    }
  }

  // Per-target lambda, then refit on the full data grouped by grid index.
  std::vector<Eigen::Index> best(d + 1);
  for (int t = 0; t <= d; ++t) {
    Eigen::Index arg = 0;
    cv_sse.col(t).minCoeff(&arg);
    best[t] = arg;
  }
  Eigen::MatrixXd fitted(n, d + 1);
  for (Eigen::Index g = 0; g < grid.size(); ++g) {
    bool used = false;
    for (int t = 0; t <= d; ++t) used = used || (best[t] == g);
    if (!used) continue;
    Eigen::MatrixXd m = gram;
    m.diagonal() += static_cast<double>(n) * grid[g] * penalty;
    Eigen::LDLT<Eigen::MatrixXd> ldlt(m);
    if (ldlt.info() != Eigen::Success) {
      throw NumericalFailure("fit_nuisance: singular normal equations");
    }
    for (int t = 0; t <= d; ++t) {
      if (best[t] != g) continue;
      fitted.col(t) = design * ldlt.solve(xty.col(t)).eval();
    }
  }

  NuisanceFit fit;
  fit.mu_y = fitted.col(0);
  fit.mu_eta = fitted.rightCols(d);
  fit.config = config;
  fit.config.d_w = dw;
  fit.lambda_y = grid[best[0]];
  fit.lambda_eta.resize(d);
  for (int j = 0; j < d; ++j) fit.lambda_eta[j] = grid[best[j + 1]];
  return fit;
}

Eigen::VectorXd project_expansion(const NuisanceFit& fit, const Eigen::VectorXd& coeffs) {
  if (coeffs.size() != fit.mu_eta.cols()) {
    throw InvalidArgument("project_expansion: coefficient length does not match fit");
  }
  // Plain sequential accumulation keeps the result reproducible bit-for-bit.
  Eigen::VectorXd out = Eigen::VectorXd::Zero(fit.mu_eta.rows());
  for (Eigen::Index i = 0; i < fit.mu_eta.rows(); ++i) {
    double acc = 0.0;
    for (Eigen::Index j = 0; j < fit.mu_eta.cols(); ++j) acc += coeffs[j] * fit.mu_eta(i, j);
    out[i] = acc;
  }
  return out;
}

}  // namespace rst
