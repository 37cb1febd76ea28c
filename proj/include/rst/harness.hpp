#pragma once

#include <cstdint>
#include <iosfwd>
#include <limits>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "rst/band.hpp"
#include "rst/basis.hpp"
#include "rst/bootstrap.hpp"
#include "rst/csv.hpp"
#include "rst/dataset.hpp"
#include "rst/nuisance.hpp"
#include "rst/score.hpp"
#include "rst/stats.hpp"

namespace rst {

enum class ExampleKind { example1, example2 };
enum class ModelKind { nonparametric, pam };
enum class ZetaMode { plugin, oracle };

struct SimDesign {
  ExampleKind kind = ExampleKind::example1;
  int n = 500;
  double noise_sd = 3.0;
  std::uint64_t seed = 1;
};

// theta_0(x) = sin(pi x^2 sign(x)); shared by both simulation designs.
double theta0_truth(double x);

// Adjustment surface of the partially additive design.
double f0_truth(double w1, double w2);

// X ~ U(-1,1), Y = theta_0(X) + eps, eps ~ N(0, noise_sd^2), no adjusters.
Dataset gen_example1(const SimDesign& design);

// W1, W2 ~ U(-1,1), X = W1/3 + sin(pi W2)/3 + Delta with Delta ~ U(-1/3,1/3)
// (support exactly (-1,1)), Y = f0(W) + theta_0(X) + eps.
Dataset gen_example2(const SimDesign& design);

// L2[0,1] projection of theta_0 onto the truncated eigenbasis by composite
// Simpson quadrature; the oracle smoothness is J of this projection.
Eigen::VectorXd project_theta0(const SobolevBasis& basis, int panels = 1 << 14);
double oracle_zeta(const SobolevBasis& basis);

struct TestConfig {
  ModelKind model = ModelKind::nonparametric;
  NormKind norm = NormKind::sup;
  int d = 50;
  int boot_m = 1000;
  double alpha = 0.05;
  std::uint64_t seed = 1;
  int workers = 0;
  int l2_draws = 2000;
  int cv_folds = 5;
  Eigen::VectorXd theta_lambda_grid;  // empty: 25 log points on [1e-10, 1]
  bool center_gamma = true;
  MultiplierKind multipliers = MultiplierKind::normal;
  bool finite_sample_p = false;
  double lambda2 = 1.0;
  double sup_tol = 1e-4;
  LearnerConfig learner;
  // Basis domain; NaN means the empirical exposure range.
  double domain_lo = std::numeric_limits<double>::quiet_NaN();
  double domain_hi = std::numeric_limits<double>::quiet_NaN();
};

struct TestResult {
  double statistic = 0.0;
  double p_value = 1.0;
  bool rejected = false;  // p < alpha
  Eigen::VectorXd replicates;
  NormKind norm = NormKind::sup;
  double gamma = 0.0;       // resolved direction-class bound
  double lambda1 = 0.0;     // sup-norm penalty (0 for l2)
  double lambda3 = 0.0;     // l2 sampler concentration (0 for sup)
  double lambda2 = 1.0;
  double theta_lambda = 0.0;  // CV penalty of the theta_n fit
  FunctionExpansion theta_n;
  std::uint64_t kernel_fingerprint = 0;
  std::uint64_t bootstrap_fingerprint = 0;
  int boot_m = 0;
  std::uint64_t seed = 0;
};

// Full restricted-score-test pipeline on one dataset against one null:
// nuisances (PAM) -> penalized theta_n -> components -> gamma_n -> statistic
// -> multiplier bootstrap at theta_n -> p-value. Errors from inner modules
// are rethrown with a stage label prefix.
TestResult run_test(const Dataset& data, ModelKind model, const FunctionExpansion& theta_star,
                    const TestConfig& config);

struct BandConfig {
  TestConfig base;
  int grid_points = 50;
  ZetaMode zeta_mode = ZetaMode::plugin;
  double zeta_value = 0.0;  // used when zeta_mode == oracle
};

struct BandOutcome {
  ConfidenceBand band;
  FunctionExpansion theta_n;
  double gamma = 0.0;
  double zeta = 0.0;
  StatisticKernel kernel;
};

// Test inversion over a grid spanning the observed exposure range.
BandOutcome run_band(const Dataset& data, ModelKind model, const BandConfig& config);

struct StudyConfig {
  std::vector<SimDesign> designs;
  int reps = 200;
  std::vector<NormKind> norms = {NormKind::sup, NormKind::l2};
  std::vector<ZetaMode> modes = {ZetaMode::plugin};
  std::uint64_t seed = 20240801;
  int workers = 0;
  int grid_points = 50;
  bool run_tests = true;   // type-I and power columns
  bool run_bands = true;   // coverage and width columns
  bool verbose = true;     // per-cell progress on stderr
  TestConfig base;         // base.d == 0 picks the per-design default (50 / 10)
};

struct StudyCell {
  std::string design;
  int n = 0;
  NormKind norm = NormKind::sup;
  ZetaMode mode = ZetaMode::plugin;
  int reps = 0;
  double type1 = 0.0, type1_se = 0.0;
  double power = 0.0, power_se = 0.0;
  double coverage = 0.0, coverage_se = 0.0;
  double mean_width = 0.0;
  int failures = 0;
  double seconds = 0.0;
};

struct StudyReport {
  std::vector<StudyCell> cells;
};

// Monte Carlo study over designs x norms x smoothness modes. Every number is
// a deterministic function of (seed, config) regardless of worker count
// (wall-time excepted). Per-replicate failures are excluded and counted.
StudyReport run_study(const StudyConfig& config);

void write_report_csv(std::ostream& out, const StudyReport& report);

struct AnalyzeConfig {
  TestConfig base;          // d = 10, boot_m = 10000 by default (see CLI)
  CsvColumns columns;
  int grid_points = 50;
  ZetaMode zeta_mode = ZetaMode::plugin;
  double zeta_value = 0.0;
  bool model_auto = true;   // pick pam iff adjuster columns are present
};

struct AnalyzeResult {
  TestResult test;
  ConfidenceBand band;
  FunctionExpansion theta_n;
  std::vector<std::size_t> dropped_rows;
  Eigen::Index n_used = 0;
  ModelKind model = ModelKind::pam;
};

// CSV ingestion path: reads the file, drops non-finite rows (reported),
// tests H0: theta_0 = 0 and builds the band. Requires at least d+1 complete
// rows. The model is partially additive when adjuster columns are present.
AnalyzeResult analyze_csv(const std::string& path, const AnalyzeConfig& config);

// The basis run_test will use for this dataset/config (needed to express
// null expansions before calling run_test).
SobolevBasis test_basis(const Dataset& data, const TestConfig& config);

std::string to_string(NormKind k);
std::string to_string(ExampleKind k);
std::string to_string(ZetaMode m);

}  // namespace rst
