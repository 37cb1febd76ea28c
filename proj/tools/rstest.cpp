// Command-line front end: test / band / simulate / analyze.

#include <cstdint>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "rst/errors.hpp"
#include "rst/harness.hpp"
#include "svg.hpp"

using namespace rst;

namespace {

struct CommonOpts {
  std::string data_path;
  std::string model = "auto";  // auto | nonparametric | pam
  std::string norm = "sup";
  int d = 50;
  int boot_m = 1000;
  double alpha = 0.05;
  std::uint64_t seed = 1;
  int workers = 0;
  int l2_draws = 2000;
  std::string multipliers = "normal";
  bool finite_sample_p = false;
  std::string out_path;
};

void add_common(CLI::App* cmd, CommonOpts& opts, bool with_data, bool single_norm = true) {
  if (with_data) {
    cmd->add_option("--data", opts.data_path, "Input CSV (columns x, y, w1..wp)")
        ->required();
    cmd->add_option("--model", opts.model, "Model: auto, nonparametric, or pam")
        ->check(CLI::IsMember({"auto", "nonparametric", "pam"}));
  }
  if (single_norm) {
    cmd->add_option("--norm", opts.norm, "Test statistic norm")
        ->check(CLI::IsMember({"sup", "l2"}));
  }
  cmd->add_option("--d", opts.d, "Basis truncation level");
  cmd->add_option("--boot", opts.boot_m, "Bootstrap replicates M");
  cmd->add_option("--alpha", opts.alpha, "Test level");
  cmd->add_option("--seed", opts.seed, "Master RNG seed");
  cmd->add_option("--workers", opts.workers, "Worker threads (0 = all cores)");
  cmd->add_option("--l2-draws", opts.l2_draws, "Monte Carlo directions for the L2 norm");
  cmd->add_option("--multipliers", opts.multipliers, "Bootstrap multiplier distribution")
      ->check(CLI::IsMember({"normal", "rademacher"}));
  cmd->add_flag("--finite-sample-p", opts.finite_sample_p,
                "Use the (1+#{T>=t})/(M+1) p-value variant");
  cmd->add_option("--out", opts.out_path, "Output file");
}

TestConfig to_test_config(const CommonOpts& opts) {
  TestConfig cfg;
  cfg.norm = opts.norm == "sup" ? NormKind::sup : NormKind::l2;
  cfg.d = opts.d;
  cfg.boot_m = opts.boot_m;
  cfg.alpha = opts.alpha;
  cfg.seed = opts.seed;
  cfg.workers = opts.workers;
  cfg.l2_draws = opts.l2_draws;
  cfg.multipliers = opts.multipliers == "normal" ? MultiplierKind::normal
                                                 : MultiplierKind::rademacher;
  cfg.finite_sample_p = opts.finite_sample_p;
  return cfg;
}

struct LoadedData {
  Dataset data;
  ModelKind model;
  std::vector<std::size_t> dropped;
};

LoadedData load_data(const CommonOpts& opts) {
  CsvReadResult read = read_dataset_csv_file(opts.data_path);
  LoadedData out;
  out.dropped = read.dropped_rows;
  if (opts.model == "nonparametric") {
    read.data.w.resize(read.data.n(), 0);
    out.model = ModelKind::nonparametric;
  } else if (opts.model == "pam") {
    out.model = ModelKind::pam;
  } else {
    out.model = read.data.p() >= 1 ? ModelKind::pam : ModelKind::nonparametric;
  }
  out.data = std::move(read.data);
  if (!out.dropped.empty()) {
    std::cerr << "dropped " << out.dropped.size() << " rows with non-finite values (rows";
    for (std::size_t i = 0; i < out.dropped.size() && i < 10; ++i) {
      std::cerr << ' ' << out.dropped[i];
    }
    if (out.dropped.size() > 10) std::cerr << " ...";
    std::cerr << ")\n";
  }
  return out;
}

std::string model_name(ModelKind m) {
  return m == ModelKind::pam ? "pam" : "nonparametric";
}

void print_test_result(const TestResult& res, double alpha, ModelKind model) {
  std::cout << "model:           " << model_name(model) << "\n"
            << "norm:            " << to_string(res.norm) << "\n"
            << "statistic:       " << format_double(res.statistic) << "\n"
            << "p-value:         " << format_double(res.p_value) << "\n"
            << "decision:        " << (res.rejected ? "reject" : "fail to reject")
            << " at alpha = " << alpha << "\n"
            << "gamma_n:         " << format_double(res.gamma) << "\n";
  if (res.norm == NormKind::sup) {
    std::cout << "lambda1:         " << format_double(res.lambda1) << "\n";
  } else {
    std::cout << "lambda3:         " << format_double(res.lambda3) << "\n";
  }
  std::cout << "theta_n lambda:  " << format_double(res.theta_lambda) << "\n"
            << "bootstrap M:     " << res.boot_m << "\n";
}

void write_test_csv(const std::string& path, const TestResult& res) {
  std::ofstream out(path);
  if (!out) throw InvalidArgument("cannot open '" + path + "' for writing");
  out << "norm,statistic,p_value,rejected,gamma,lambda1,lambda3,theta_lambda,boot_m,seed\n"
      << to_string(res.norm) << ',' << format_double(res.statistic) << ','
      << format_double(res.p_value) << ',' << (res.rejected ? 1 : 0) << ','
      << format_double(res.gamma) << ',' << format_double(res.lambda1) << ','
      << format_double(res.lambda3) << ',' << format_double(res.theta_lambda) << ','
      << res.boot_m << ',' << res.seed << "\n";
}

void write_band_csv(std::ostream& out, const ConfidenceBand& band,
                    const FunctionExpansion& theta_n) {
  out << "x,lower,upper,feasible,theta_n\n";
  for (Eigen::Index i = 0; i < band.grid.size(); ++i) {
    out << format_double(band.grid[i]) << ',' << format_double(band.lower[i]) << ','
        << format_double(band.upper[i]) << ','
        << (band.feasible[static_cast<std::size_t>(i)] ? 1 : 0) << ','
        << format_double(evaluate_expansion(theta_n, band.grid[i])) << "\n";
  }
}

void plot_band(const std::string& path, const ConfidenceBand& band,
               const FunctionExpansion& theta_n) {
  rstcli::Series lower, upper, fit;
  for (Eigen::Index i = 0; i < band.grid.size(); ++i) {
    const double x = band.grid[i];
    if (band.feasible[static_cast<std::size_t>(i)]) {
      lower.x.push_back(x);
      lower.y.push_back(band.lower[i]);
      upper.x.push_back(x);
      upper.y.push_back(band.upper[i]);
    }
    fit.x.push_back(x);
    fit.y.push_back(evaluate_expansion(theta_n, x));
  }
  lower.color = upper.color = "#d62728";
  lower.dashed = upper.dashed = true;
  fit.color = "#1f77b4";
  fit.width = 2.0;
  rstcli::write_svg_chart(path, {lower, upper, fit}, "confidence band and point estimate");
}

// Flat key=value config file; every key is a long option of the subcommand.
// Values from the file act as defaults: explicit flags win.
std::vector<std::string> config_tokens(const std::string& path,
                                       const std::vector<std::string>& given_args) {
  std::ifstream in(path);
  if (!in) throw InvalidArgument("cannot open config file '" + path + "'");
  std::vector<std::string> tokens;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    const std::size_t b = line.find_first_not_of(" \t\r");
    if (b == std::string::npos) continue;
    const std::size_t e = line.find_last_not_of(" \t\r");
    line = line.substr(b, e - b + 1);
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos) {
      throw ParseError("config line " + std::to_string(line_no) + ": expected key=value",
                       line_no);
    }
    std::string key = line.substr(0, eq);
    std::string value = line.substr(eq + 1);
    const auto strip = [](std::string s) {
      const std::size_t sb = s.find_first_not_of(" \t");
      const std::size_t se = s.find_last_not_of(" \t");
      return sb == std::string::npos ? std::string() : s.substr(sb, se - sb + 1);
    };
    key = strip(key);
    value = strip(value);
    const std::string flag = "--" + key;
    bool overridden = false;
    for (const auto& arg : given_args) {
      if (arg == flag || arg.rfind(flag + "=", 0) == 0) {
        overridden = true;
        break;
      }
    }
    if (!overridden) tokens.push_back(flag + "=" + value);
  }
  return tokens;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Restricted score tests and simultaneous confidence bands for "
               "function-valued risk minimizers"};
  app.require_subcommand(1);

  CommonOpts test_opts, band_opts, sim_opts, analyze_opts;
  std::string test_null = "zero";
  std::string zeta_spec = "plugin";
  int grid_points = 50;
  std::string plot_path;

  // simulate-specific
  std::vector<std::string> sim_designs = {"example1"};
  std::vector<int> sim_ns = {500};
  std::string sim_norms = "sup,l2";
  std::string sim_zetas = "plugin";
  int sim_reps = 200;
  double noise_sd = 3.0;
  bool no_tests = false, no_bands = false;

  // analyze-specific
  std::string exposure_col = "x", outcome_col = "y", adjuster_cols;

  std::string config_path;

  CLI::App* test_cmd = app.add_subcommand("test", "Run one restricted score test");
  add_common(test_cmd, test_opts, true);
  test_cmd->add_option("--null", test_null,
                       "Null function: 'zero' or a file of d coefficients");
  test_cmd->add_option("--config", config_path, "Flat key=value config file");

  CLI::App* band_cmd = app.add_subcommand("band", "Invert the test into a confidence band");
  add_common(band_cmd, band_opts, true);
  band_cmd->add_option("--zeta", zeta_spec, "Smoothness bound: plugin or oracle:<value>");
  band_cmd->add_option("--grid-points", grid_points, "Evaluation grid size");
  band_cmd->add_option("--plot", plot_path, "Write an SVG plot of the band");
  band_cmd->add_option("--config", config_path, "Flat key=value config file");

  CLI::App* sim_cmd = app.add_subcommand("simulate", "Monte Carlo study runner");
  add_common(sim_cmd, sim_opts, false, /*single_norm=*/false);
  sim_cmd->add_option("--design", sim_designs, "example1 and/or example2");
  sim_cmd->add_option("--n", sim_ns, "Sample sizes (repeatable)");
  sim_cmd->add_option("--norm", sim_norms, "Comma list of norms to study");
  sim_cmd->add_option("--zeta", sim_zetas, "Comma list of smoothness modes (plugin,oracle)");
  sim_cmd->add_option("--reps", sim_reps, "Monte Carlo replicates per cell");
  sim_cmd->add_option("--noise-sd", noise_sd, "Residual standard deviation");
  sim_cmd->add_option("--grid-points", grid_points, "Coverage grid size");
  sim_cmd->add_flag("--no-tests", no_tests, "Skip type-I/power columns");
  sim_cmd->add_flag("--no-bands", no_bands, "Skip coverage/width columns");
  sim_cmd->add_option("--plot", plot_path, "Write an SVG of rejection rates vs n");
  sim_cmd->add_option("--config", config_path, "Flat key=value config file");
  sim_cmd->get_option("--d")->default_val(0);  // 0 = per-design default

  CLI::App* analyze_cmd =
      app.add_subcommand("analyze", "Test H0: theta = 0 and band a CSV dataset");
  add_common(analyze_cmd, analyze_opts, true);
  analyze_cmd->get_option("--d")->default_val(10);
  analyze_cmd->get_option("--boot")->default_val(10000);
  analyze_cmd->add_option("--exposure", exposure_col, "Exposure column name");
  analyze_cmd->add_option("--outcome", outcome_col, "Outcome column name");
  analyze_cmd->add_option("--adjusters", adjuster_cols,
                          "Comma list of adjuster columns (default w1..wp)");
  analyze_cmd->add_option("--zeta", zeta_spec, "Smoothness bound: plugin or oracle:<value>");
  analyze_cmd->add_option("--grid-points", grid_points, "Band grid size");
  analyze_cmd->add_option("--plot", plot_path, "Write an SVG plot of the band");
  analyze_cmd->add_option("--config", config_path, "Flat key=value config file");

  // apply config-file defaults, then reparse
  std::vector<std::string> args(argv + 1, argv + argc);
  for (std::size_t i = 0; i < args.size(); ++i) {
    std::string value;
    if (args[i] == "--config" && i + 1 < args.size()) {
      value = args[i + 1];
    } else if (args[i].rfind("--config=", 0) == 0) {
      value = args[i].substr(9);
    } else {
      continue;
    }
    try {
      for (const auto& tok : config_tokens(value, args)) args.push_back(tok);
    } catch (const Error& e) {
      std::cerr << "error: " << e.what() << "\n";
      return 2;
    }
    break;
  }

  try {
    std::vector<const char*> cargs;
    cargs.push_back(argv[0]);
    for (const auto& a : args) cargs.push_back(a.c_str());
    app.parse(static_cast<int>(cargs.size()), cargs.data());
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (test_cmd->parsed()) {
      const LoadedData loaded = load_data(test_opts);
      TestConfig cfg = to_test_config(test_opts);
      cfg.model = loaded.model;
      const SobolevBasis basis = test_basis(loaded.data, cfg);
      FunctionExpansion null_fn = zero_expansion(basis);
      if (test_null != "zero") {
        std::ifstream nf(test_null);
        if (!nf) throw InvalidArgument("cannot open null-coefficient file '" + test_null + "'");
        Eigen::VectorXd coeffs(basis.d);
        for (int j = 0; j < basis.d; ++j) {
          if (!(nf >> coeffs[j])) {
            throw InvalidArgument("null-coefficient file must hold d = " +
                                  std::to_string(basis.d) + " values");
          }
        }
        null_fn = make_expansion(basis, coeffs);
      }
      const TestResult res = run_test(loaded.data, loaded.model, null_fn, cfg);
      print_test_result(res, cfg.alpha, loaded.model);
      if (!test_opts.out_path.empty()) write_test_csv(test_opts.out_path, res);
      return 0;
    }

    if (band_cmd->parsed()) {
      const LoadedData loaded = load_data(band_opts);
      BandConfig cfg;
      cfg.base = to_test_config(band_opts);
      cfg.base.model = loaded.model;
      cfg.grid_points = grid_points;
      if (zeta_spec == "plugin") {
        cfg.zeta_mode = ZetaMode::plugin;
      } else if (zeta_spec.rfind("oracle:", 0) == 0) {
        cfg.zeta_mode = ZetaMode::oracle;
        cfg.zeta_value = std::stod(zeta_spec.substr(7));
      } else {
        throw InvalidArgument("--zeta must be 'plugin' or 'oracle:<value>'");
      }
      const BandOutcome out = run_band(loaded.data, loaded.model, cfg);
      std::cerr << "t* = " << out.band.t_star << ", zeta = " << out.zeta
                << ", gamma_n = " << out.gamma << "\n";
      if (!band_opts.out_path.empty()) {
        std::ofstream file(band_opts.out_path);
        if (!file) throw InvalidArgument("cannot open '" + band_opts.out_path + "'");
        write_band_csv(file, out.band, out.theta_n);
      } else {
        write_band_csv(std::cout, out.band, out.theta_n);
      }
      if (!plot_path.empty()) plot_band(plot_path, out.band, out.theta_n);
      return 0;
    }

    if (sim_cmd->parsed()) {
      StudyConfig cfg;
      cfg.base = to_test_config(sim_opts);
      cfg.base.d = sim_opts.d;
      for (const auto& name : sim_designs) {
        for (int n : sim_ns) {
          SimDesign design;
          if (name == "example1") {
            design.kind = ExampleKind::example1;
          } else if (name == "example2") {
            design.kind = ExampleKind::example2;
          } else {
            throw InvalidArgument("unknown design '" + name + "'");
          }
          design.n = n;
          design.noise_sd = noise_sd;
          cfg.designs.push_back(design);
        }
      }
      cfg.reps = sim_reps;
      cfg.seed = sim_opts.seed;
      cfg.workers = sim_opts.workers;
      cfg.grid_points = grid_points;
      cfg.run_tests = !no_tests;
      cfg.run_bands = !no_bands;
      cfg.norms.clear();
      std::stringstream norm_stream(sim_norms);
      std::string item;
      while (std::getline(norm_stream, item, ',')) {
        if (item == "sup") {
          cfg.norms.push_back(NormKind::sup);
        } else if (item == "l2") {
          cfg.norms.push_back(NormKind::l2);
        } else {
          throw InvalidArgument("unknown norm '" + item + "'");
        }
      }
      cfg.modes.clear();
      std::stringstream zeta_stream(sim_zetas);
      while (std::getline(zeta_stream, item, ',')) {
        if (item == "plugin") {
          cfg.modes.push_back(ZetaMode::plugin);
        } else if (item == "oracle") {
          cfg.modes.push_back(ZetaMode::oracle);
        } else {
          throw InvalidArgument("unknown smoothness mode '" + item + "'");
        }
      }
      const StudyReport report = run_study(cfg);
      if (!sim_opts.out_path.empty()) {
        std::ofstream file(sim_opts.out_path);
        if (!file) throw InvalidArgument("cannot open '" + sim_opts.out_path + "'");
        write_report_csv(file, report);
      } else {
        write_report_csv(std::cout, report);
      }
      if (!plot_path.empty()) {
        std::vector<rstcli::Series> series;
        const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd"};
        int color_idx = 0;
        for (const auto& design : {"example1", "example2"}) {
          for (NormKind norm : {NormKind::sup, NormKind::l2}) {
            rstcli::Series type1, power;
            for (const auto& cell : report.cells) {
              if (cell.design != design || cell.norm != norm) continue;
              type1.x.push_back(cell.n);
              type1.y.push_back(cell.type1);
              power.x.push_back(cell.n);
              power.y.push_back(cell.power);
            }
            if (type1.x.empty()) continue;
            type1.color = power.color = colors[color_idx++ % 4];
            type1.dashed = true;
            series.push_back(type1);
            series.push_back(power);
          }
        }
        rstcli::write_svg_chart(plot_path, series,
                                "rejection rates vs n (dashed: at truth, solid: at zero)");
      }
      return 0;
    }

    if (analyze_cmd->parsed()) {
      AnalyzeConfig cfg;
      cfg.base = to_test_config(analyze_opts);
      cfg.grid_points = grid_points;
      cfg.columns.exposure = exposure_col;
      cfg.columns.outcome = outcome_col;
      if (!adjuster_cols.empty()) {
        std::stringstream cols(adjuster_cols);
        std::string col;
        while (std::getline(cols, col, ',')) cfg.columns.adjusters.push_back(col);
      }
      if (analyze_opts.model != "auto") {
        cfg.model_auto = false;
        cfg.base.model =
            analyze_opts.model == "pam" ? ModelKind::pam : ModelKind::nonparametric;
      }
      if (zeta_spec == "plugin") {
        cfg.zeta_mode = ZetaMode::plugin;
      } else if (zeta_spec.rfind("oracle:", 0) == 0) {
        cfg.zeta_mode = ZetaMode::oracle;
        cfg.zeta_value = std::stod(zeta_spec.substr(7));
      } else {
        throw InvalidArgument("--zeta must be 'plugin' or 'oracle:<value>'");
      }
      const AnalyzeResult res = analyze_csv(analyze_opts.data_path, cfg);
      if (!res.dropped_rows.empty()) {
        std::cerr << "dropped " << res.dropped_rows.size()
                  << " rows with non-finite values\n";
      }
      print_test_result(res.test, cfg.base.alpha, res.model);
      std::cout << "band t*:         " << format_double(res.band.t_star) << "\n"
                << "band zeta:       " << format_double(res.band.zeta) << "\n";
      if (!analyze_opts.out_path.empty()) {
        std::ofstream file(analyze_opts.out_path);
        if (!file) throw InvalidArgument("cannot open '" + analyze_opts.out_path + "'");
        write_band_csv(file, res.band, res.theta_n);
      }
      if (!plot_path.empty()) plot_band(plot_path, res.band, res.theta_n);
      return 0;
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
