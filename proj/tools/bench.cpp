// Compares the OpenMP kernels against their serial reference
// implementations: multiplier bootstrap, L2 direction sampling, and band
// construction over a grid.

#include <chrono>
#include <cstdio>
#include <functional>

#include <omp.h>

#include "rst/band.hpp"
#include "rst/basis.hpp"
#include "rst/bootstrap.hpp"
#include "rst/errors.hpp"
#include "rst/harness.hpp"
#include "rst/rng.hpp"
#include "rst/score.hpp"
#include "rst/stats.hpp"

using namespace rst;

namespace {

double time_best_of(int repeats, const std::function<void()>& fn) {
  double best = 1e300;
  for (int r = 0; r < repeats; ++r) {
    const auto start = std::chrono::steady_clock::now();
    fn();
    const double sec =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (sec < best) best = sec;
  }
  return best;
}

void report(const char* name, double serial, double parallel, int threads) {
  std::printf("%-28s %10.1f ms %10.1f ms %8.2fx  (%d threads)\n", name, serial * 1e3,
              parallel * 1e3, serial / parallel, threads);
}

}  // namespace

int main() {
  const int threads = omp_get_max_threads();
  std::printf("%-28s %13s %13s %9s\n", "kernel", "serial", "openmp", "speedup");

  SimDesign design;
  design.kind = ExampleKind::example1;
  design.n = 2000;
  design.seed = 7;
  const Dataset data = gen_example1(design);
  const SobolevBasis basis = build_basis(50, -1.0, 1.0);
  Eigen::VectorXd grid(10);
  for (int i = 0; i < 10; ++i) grid[i] = std::pow(10.0, -10.0 + i);
  const FunctionExpansion theta_n = fit_theta_penalized(data, basis, nullptr, grid, 5, 1);
  const ScoreComponents c = assemble_components(data, basis, nullptr, theta_n, theta_n);

  SupNormConfig sup_cfg;
  sup_cfg.gamma = select_gamma(theta_n, c);
  StatisticKernel kernel;
  try {
    kernel = sup_norm_statistic(c, sup_cfg).second;
  } catch (const BracketExhausted& e) {
    sup_cfg.fixed_lambda1 = e.boundary_lambda;
    kernel = sup_norm_statistic(c, sup_cfg).second;
  }

  {
    const int m = 4000;
    const double serial =
        time_best_of(3, [&] { ref::bootstrap_distribution(c, kernel, m, 11); });
    const double parallel =
        time_best_of(3, [&] { bootstrap_distribution(c, kernel, m, 11); });
    report("bootstrap replicates", serial, parallel, threads);
  }

  {
    L2NormConfig cfg;
    cfg.gamma = sup_cfg.gamma;
    cfg.b = 4000;
    cfg.seed = 3;
    cfg.clamp_gamma_to_reachable = true;
    const double serial = time_best_of(3, [&] { ref::l2_norm_statistic(c, cfg); });
    const double parallel = time_best_of(3, [&] { l2_norm_statistic(c, cfg); });
    report("l2 direction sampling", serial, parallel, threads);
  }

  {
    const BootstrapResult boot = bootstrap_distribution(c, kernel, 500, 13);
    BandRequest req = make_band_request(
        c, kernel, basis,
        Eigen::VectorXd::LinSpaced(24, data.x.minCoeff(), data.x.maxCoeff()),
        2.0 * rkhs_norm(theta_n), 0.05, data.x.minCoeff(), data.x.maxCoeff(), false);
    const double serial = time_best_of(2, [&] { ref::build_band(req, boot); });
    const double parallel = time_best_of(2, [&] { build_band(req, boot); });
    report("band grid inversion", serial, parallel, threads);
  }

  {
    StudyConfig cfg;
    SimDesign d1;
    d1.n = 150;
    cfg.designs = {d1};
    cfg.reps = 16;
    cfg.norms = {NormKind::sup};
    cfg.verbose = false;
    cfg.grid_points = 10;
    cfg.base.d = 10;
    cfg.base.boot_m = 200;
    const double serial = time_best_of(2, [&] {
      StudyConfig one = cfg;
      one.workers = 1;
      run_study(one);
    });
    const double parallel = time_best_of(2, [&] { run_study(cfg); });
    report("monte carlo study", serial, parallel, threads);
  }

  return 0;
}
