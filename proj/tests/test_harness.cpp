#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

#include "rst/errors.hpp"
#include "rst/harness.hpp"
#include "rst/rng.hpp"
#include "test_util.hpp"

using namespace rst;

TEST_CASE("true regression function values") {
  REQUIRE(theta0_truth(0.0) == 0.0);
  REQUIRE(std::abs(theta0_truth(1.0)) < 1e-15);
  REQUIRE(theta0_truth(0.5) == Catch::Approx(std::numbers::sqrt2 / 2.0).epsilon(1e-12));
  REQUIRE(theta0_truth(-0.5) == Catch::Approx(-std::numbers::sqrt2 / 2.0).epsilon(1e-12));
}

TEST_CASE("adjustment surface values") {
  REQUIRE(f0_truth(0.0, 0.0) == 0.0);
  REQUIRE(f0_truth(10.0, 0.0) == Catch::Approx(-2.0).epsilon(1e-12));
  REQUIRE(f0_truth(0.0, -1.0) == Catch::Approx(2.0).epsilon(1e-15));
  REQUIRE(f0_truth(0.0, 1.0) == Catch::Approx(-2.0).epsilon(1e-15));
}

TEST_CASE("example 1 generator moments") {
  SimDesign design;
  design.n = 10000;
  design.seed = 77;
  const Dataset data = gen_example1(design);
  REQUIRE(data.p() == 0);
  REQUIRE(std::abs(data.x.mean()) <= 4.0 / std::sqrt(12.0 * design.n));
  Eigen::VectorXd eps(data.n());
  for (Eigen::Index i = 0; i < data.n(); ++i) eps[i] = data.y[i] - theta0_truth(data.x[i]);
  const double var = (eps.array() - eps.mean()).square().sum() / (data.n() - 1);
  REQUIRE(std::abs(var - 9.0) <= 0.9);
}

TEST_CASE("example 2 support is exactly (-1,1)") {
  SimDesign design;
  design.kind = ExampleKind::example2;
  design.n = 20000;
  design.seed = 5;
  const Dataset data = gen_example2(design);
  REQUIRE(data.p() == 2);
  REQUIRE((data.x.array() > -1.0).all());
  REQUIRE((data.x.array() < 1.0).all());
  REQUIRE((data.w.array() > -1.0).all());
  REQUIRE((data.w.array() < 1.0).all());
}

TEST_CASE("generators are deterministic in the seed") {
  SimDesign design;
  design.n = 50;
  design.seed = 9;
  const Dataset a = gen_example1(design);
  const Dataset b = gen_example1(design);
  REQUIRE(a.x == b.x);
  REQUIRE(a.y == b.y);
  design.seed = 10;
  const Dataset c = gen_example1(design);
  REQUIRE(a.x != c.x);
}

TEST_CASE("theta0 projection reconstructs the truth") {
  const SobolevBasis basis = build_basis(50, -1.0, 1.0);
  const Eigen::VectorXd coeffs = project_theta0(basis);
  const FunctionExpansion proj = make_expansion(basis, coeffs);
  double sse = 0.0;
  const Eigen::VectorXd grid = test_util::linspace(-0.99, 0.99, 200);
  for (Eigen::Index i = 0; i < grid.size(); ++i) {
    sse += std::pow(evaluate_expansion(proj, grid[i]) - theta0_truth(grid[i]), 2.0);
  }
  REQUIRE(sse / grid.size() < 1e-3);
  REQUIRE(oracle_zeta(basis) > 0.0);
  REQUIRE(std::isfinite(oracle_zeta(basis)));
}

TEST_CASE("csv round trip is lossless") {
  SimDesign design;
  design.kind = ExampleKind::example2;
  design.n = 40;
  design.seed = 31;
  const Dataset data = gen_example2(design);
  std::stringstream buffer;
  write_dataset_csv(buffer, data);
  const CsvReadResult read = read_dataset_csv(buffer);
  REQUIRE(read.data.x == data.x);
  REQUIRE(read.data.y == data.y);
  REQUIRE(read.data.w == data.w);
  REQUIRE(read.dropped_rows.empty());
}

TEST_CASE("csv errors carry context") {
  {
    std::stringstream in("a,b\n1,2\n");
    REQUIRE_THROWS_WITH(read_dataset_csv(in), Catch::Matchers::ContainsSubstring("'x'"));
  }
  {
    std::stringstream in("x,y\n1,2\n3,oops\n");
    try {
      read_dataset_csv(in);
      FAIL("expected ParseError");
    } catch (const ParseError& e) {
      REQUIRE(e.line == 3);
    }
  }
  {
    std::stringstream in("x,y\n1,2,3\n");
    REQUIRE_THROWS_AS(read_dataset_csv(in), ParseError);
  }
  {
    // non-finite rows are dropped and reported
    std::stringstream in("x,y,w1\n0.1,1,0.5\nnan,2,0.1\n0.3,inf,0.2\n0.4,4,0.9\n");
    const CsvReadResult read = read_dataset_csv(in);
    REQUIRE(read.data.n() == 2);
    REQUIRE(read.dropped_rows == std::vector<std::size_t>{2, 3});
  }
}

TEST_CASE("run_test: interpolating null gives statistic 0 and p-value 1") {
  TestConfig cfg;
  cfg.d = 4;
  cfg.boot_m = 200;
  cfg.domain_lo = 0.0;
  cfg.domain_hi = 1.0;
  Dataset data;
  const int n = 60;
  data.x.resize(n);
  data.y.resize(n);
  data.w.resize(n, 0);
  rng::Stream stream(3);
  for (int i = 0; i < n; ++i) data.x[i] = stream.next_u01();
  const SobolevBasis basis = test_basis(data, cfg);
  Eigen::VectorXd a(4);
  a << 0.5, -0.3, 0.2, 0.1;
  data.y = basis.evaluate_matrix(data.x) * a;

  const TestResult res = run_test(data, ModelKind::nonparametric, make_expansion(basis, a), cfg);
  REQUIRE(res.statistic == 0.0);
  REQUIRE(res.p_value == 1.0);
  REQUIRE_FALSE(res.rejected);
  REQUIRE(res.kernel_fingerprint == res.bootstrap_fingerprint);
}

TEST_CASE("run_test validates the model against the data") {
  SimDesign design;
  design.n = 40;
  const Dataset np = gen_example1(design);
  design.kind = ExampleKind::example2;
  const Dataset pam = gen_example2(design);
  TestConfig cfg;
  cfg.d = 4;
  const SobolevBasis basis = build_basis(4, -1.0, 1.0);
  REQUIRE_THROWS_AS(run_test(pam, ModelKind::nonparametric, zero_expansion(basis), cfg),
                    InvalidArgument);
  Dataset no_w = pam;
  no_w.w.resize(no_w.n(), 0);
  REQUIRE_THROWS_AS(run_test(no_w, ModelKind::pam, zero_expansion(basis), cfg), ModelMisuse);
}

TEST_CASE("run_test is deterministic and worker-count invariant") {
  SimDesign design;
  design.n = 120;
  design.seed = 88;
  const Dataset data = gen_example1(design);
  TestConfig cfg;
  cfg.d = 6;
  cfg.boot_m = 150;
  cfg.seed = 17;
  cfg.domain_lo = -1.0;
  cfg.domain_hi = 1.0;
  const SobolevBasis basis = build_basis(6, -1.0, 1.0);
  const FunctionExpansion null0 = zero_expansion(basis);

  cfg.workers = 1;
  const TestResult r1 = run_test(data, ModelKind::nonparametric, null0, cfg);
  cfg.workers = 2;
  const TestResult r2 = run_test(data, ModelKind::nonparametric, null0, cfg);
  REQUIRE(r1.statistic == r2.statistic);
  REQUIRE(r1.p_value == r2.p_value);
  REQUIRE(r1.replicates == r2.replicates);
  REQUIRE(r1.gamma == r2.gamma);
  REQUIRE(r1.lambda1 == r2.lambda1);

  cfg.norm = NormKind::l2;
  cfg.l2_draws = 200;
  cfg.workers = 1;
  const TestResult l1 = run_test(data, ModelKind::nonparametric, null0, cfg);
  cfg.workers = 2;
  const TestResult l2 = run_test(data, ModelKind::nonparametric, null0, cfg);
  REQUIRE(l1.statistic == l2.statistic);
  REQUIRE(l1.p_value == l2.p_value);
  REQUIRE(l1.replicates == l2.replicates);
  REQUIRE(l1.lambda3 == l2.lambda3);
}

TEST_CASE("run_band covers the fitted expansion") {
  SimDesign design;
  design.n = 150;
  design.seed = 23;
  const Dataset data = gen_example1(design);
  BandConfig cfg;
  cfg.base.d = 6;
  cfg.base.boot_m = 200;
  cfg.base.domain_lo = -1.0;
  cfg.base.domain_hi = 1.0;
  cfg.grid_points = 11;
  const BandOutcome out = run_band(data, ModelKind::nonparametric, cfg);
  REQUIRE(out.band.grid.size() == 11);
  REQUIRE(out.zeta == rkhs_norm(out.theta_n));
  int feasible_points = 0;
  for (Eigen::Index i = 0; i < out.band.grid.size(); ++i) {
    if (!out.band.feasible[static_cast<std::size_t>(i)]) continue;
    ++feasible_points;
    REQUIRE(out.band.lower[i] <= out.band.upper[i]);
  }
  REQUIRE(feasible_points > 0);
}

TEST_CASE("study report is deterministic across worker counts") {
  StudyConfig cfg;
  SimDesign design;
  design.n = 80;
  cfg.designs = {design};
  cfg.reps = 4;
  cfg.norms = {NormKind::sup};
  cfg.modes = {ZetaMode::plugin};
  cfg.seed = 404;
  cfg.grid_points = 8;
  cfg.verbose = false;
  cfg.base.d = 6;
  cfg.base.boot_m = 120;
  cfg.base.l2_draws = 120;

  cfg.workers = 1;
  const StudyReport r1 = run_study(cfg);
  cfg.workers = 2;
  const StudyReport r2 = run_study(cfg);
  REQUIRE(r1.cells.size() == r2.cells.size());
  for (std::size_t i = 0; i < r1.cells.size(); ++i) {
    REQUIRE(r1.cells[i].type1 == r2.cells[i].type1);
    REQUIRE(r1.cells[i].power == r2.cells[i].power);
    REQUIRE(r1.cells[i].coverage == r2.cells[i].coverage);
    REQUIRE(r1.cells[i].mean_width == r2.cells[i].mean_width);
    REQUIRE(r1.cells[i].failures == r2.cells[i].failures);
  }

  std::stringstream csv;
  write_report_csv(csv, r1);
  const std::string header = csv.str().substr(0, csv.str().find('\n'));
  REQUIRE(header ==
          "design,n,norm,smoothness_mode,reps,type1,type1_se,power,power_se,coverage,"
          "coverage_se,mean_width,failures,seconds");
}

TEST_CASE("analyze_csv runs the pipeline end to end") {
  SimDesign design;
  design.kind = ExampleKind::example2;
  design.n = 150;
  design.seed = 61;
  const Dataset data = gen_example2(design);
  const std::string path = "analyze_test_data.csv";
  write_dataset_csv_file(path, data);

  AnalyzeConfig cfg;
  cfg.base.d = 6;
  cfg.base.boot_m = 150;
  cfg.base.l2_draws = 150;
  cfg.grid_points = 9;
  const AnalyzeResult res = analyze_csv(path, cfg);
  REQUIRE(res.model == ModelKind::pam);
  REQUIRE(res.n_used == 150);
  REQUIRE(res.test.p_value >= 0.0);
  REQUIRE(res.test.p_value <= 1.0);
  REQUIRE(res.band.grid.size() == 9);
  std::remove(path.c_str());
}

TEST_CASE("analyze_csv: outcome identically zero gives statistic 0") {
  const std::string path = "analyze_zero_outcome.csv";
  {
    std::ofstream out(path);
    out << "x,y,w1\n";
    rng::Stream stream(7);
    for (int i = 0; i < 80; ++i) {
      out << format_double(stream.next_uniform(-1.0, 1.0)) << ",0,"
          << format_double(stream.next_uniform(-1.0, 1.0)) << "\n";
    }
  }
  AnalyzeConfig cfg;
  cfg.base.d = 4;
  cfg.base.boot_m = 120;
  const AnalyzeResult res = analyze_csv(path, cfg);
  REQUIRE(res.test.statistic == 0.0);
  std::remove(path.c_str());
}

TEST_CASE("analyze_csv rejects too-small inputs") {
  const std::string path = "analyze_small.csv";
  {
    std::ofstream out(path);
    out << "x,y\n0.1,1\n0.2,2\n0.3,3\n";
  }
  AnalyzeConfig cfg;
  cfg.base.d = 4;
  REQUIRE_THROWS_AS(analyze_csv(path, cfg), InsufficientData);
  std::remove(path.c_str());
}
