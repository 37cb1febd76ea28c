#include "rst/bootstrap.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include <omp.h>

#include "rst/errors.hpp"
#include "rst/rng.hpp"

namespace rst {

namespace {

double one_replicate(const ScoreComponents& c, const StatisticKernel& kernel,
                     std::uint64_t seed, std::uint64_t index, MultiplierKind kind) {
  rng::Stream stream(seed, 0xb007ull, index);
  const Eigen::Index n = c.n;
  Eigen::VectorXd xi(n);
  if (kind == MultiplierKind::normal) {
    for (Eigen::Index i = 0; i < n; ++i) xi[i] = stream.next_normal();
  } else {
    for (Eigen::Index i = 0; i < n; ++i) xi[i] = stream.next_rademacher();
  }
  const double xi_bar = xi.mean();
  const Eigen::VectorXd s_tilde = (xi.array() - xi_bar) * c.s.array();
  const Eigen::VectorXd g = c.gamma.transpose() * s_tilde;
  return g.dot(kernel.pi * g) / static_cast<double>(n);
}

BootstrapResult bootstrap_impl(const ScoreComponents& c, const StatisticKernel& kernel, int m,
                               std::uint64_t seed, MultiplierKind kind, int workers,
                               bool parallel) {
  if (m < 100) throw InvalidArgument("bootstrap_distribution: need at least 100 replicates");
  if (kernel.pi.rows() != c.gamma.cols()) {
    throw InvalidArgument("bootstrap_distribution: kernel/components dimension mismatch");
  }
  BootstrapResult out;
  out.replicates.resize(m);
  out.m = m;
  out.seed = seed;
  out.multiplier_kind = kind;
  out.kernel_fingerprint = kernel.fingerprint();
  const int nw = parallel ? (workers > 0 ? workers : omp_get_max_threads()) : 1;
#pragma omp parallel for schedule(static) num_threads(nw) if (parallel)
  for (int rep = 0; rep < m; ++rep) {
    out.replicates[rep] = one_replicate(c, kernel, seed, static_cast<std::uint64_t>(rep), kind);
  }
  return out;
}

}  // namespace

BootstrapResult bootstrap_distribution(const ScoreComponents& components,
                                       const StatisticKernel& kernel, int m,
                                       std::uint64_t seed, MultiplierKind kind, int workers) {
  return bootstrap_impl(components, kernel, m, seed, kind, workers, /*parallel=*/true);
}

namespace ref {
BootstrapResult bootstrap_distribution(const ScoreComponents& components,
                                       const StatisticKernel& kernel, int m,
                                       std::uint64_t seed, MultiplierKind kind) {
  return bootstrap_impl(components, kernel, m, seed, kind, /*workers=*/1, /*parallel=*/false);
}
}  // namespace ref

double replicate_from_multipliers(const ScoreComponents& components,
                                  const StatisticKernel& kernel, const Eigen::VectorXd& xi) {
  if (xi.size() != components.n) {
    throw InvalidArgument("replicate_from_multipliers: multiplier length mismatch");
  }
  const double xi_bar = xi.mean();
  const Eigen::VectorXd s_tilde = (xi.array() - xi_bar) * components.s.array();
  const Eigen::VectorXd g = components.gamma.transpose() * s_tilde;
  return g.dot(kernel.pi * g) / static_cast<double>(components.n);
}

double p_value(double t_observed, const BootstrapResult& boot) {
  Eigen::Index count = 0;
  for (Eigen::Index i = 0; i < boot.replicates.size(); ++i) {
    if (boot.replicates[i] > t_observed) ++count;
  }
  return static_cast<double>(count) / static_cast<double>(boot.m);
}

double p_value_finite_sample(double t_observed, const BootstrapResult& boot) {
  Eigen::Index count = 0;
  for (Eigen::Index i = 0; i < boot.replicates.size(); ++i) {
    if (boot.replicates[i] >= t_observed) ++count;
  }
  return static_cast<double>(1 + count) / static_cast<double>(boot.m + 1);
}

double critical_value(const BootstrapResult& boot, double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) {
    throw InvalidArgument("critical_value: alpha must lie in (0, 1)");
  }
  std::vector<double> sorted(boot.replicates.data(),
                             boot.replicates.data() + boot.replicates.size());
  std::sort(sorted.begin(), sorted.end());
  const auto m = static_cast<double>(boot.m);
  auto k = static_cast<std::size_t>(std::floor((1.0 - alpha) * m)) + 1;
  k = std::min<std::size_t>(k, sorted.size());
  return sorted[k - 1];
}

}  // namespace rst
