/*
 Copyright 2026 The qfreg Authors

 Licensed under the Apache License, Version 2.0 (the "License");
 you may not use this file except in compliance with the License.
 You may obtain a copy of the License at

 http://www.apache.org/licenses/LICENSE-2.0

 Unless required by applicable law or agreed to in writing, software
 distributed under the License is distributed on an "AS IS" BASIS,
 WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 See the License for the specific language governing permissions and
 limitations under the License.
*/

#include "qfreg/cli.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <filesystem>
#include <iostream>
#include <sstream>

#include "qfreg/bootstrap.hpp"
#include "qfreg/csv.hpp"
#include "qfreg/error.hpp"
#include "qfreg/fui.hpp"
#include "qfreg/io.hpp"
#include "qfreg/simulation.hpp"

namespace qfreg {

namespace fs = std::filesystem;

namespace {

/// Files are written under temporary names and renamed once every output of
/// the command exists, so a failed run leaves nothing behind.
class OutputSet {
 public:
  explicit OutputSet(fs::path dir) : dir_(std::move(dir)) {}
  OutputSet(const OutputSet&) = delete;
  OutputSet& operator=(const OutputSet&) = delete;
  ~OutputSet() {
    std::error_code ec;
    for (const auto& name : names_) fs::remove(staged(name), ec);
    if (!committed_) {
      for (const auto& name : renamed_) fs::remove(dir_ / name, ec);
    }
  }

  fs::path add(const std::string& name) {
    names_.push_back(name);
    return staged(name);
  }

  std::vector<std::string> commit() {
    for (const auto& name : names_) {
      fs::rename(staged(name), dir_ / name);
      renamed_.push_back(name);
    }
    committed_ = true;
    std::vector<std::string> out;
    for (const auto& name : names_) out.push_back((dir_ / name).string());
    return out;
  }

 private:
  fs::path staged(const std::string& name) const { return dir_ / ("." + name + ".partial"); }

  fs::path dir_;
  std::vector<std::string> names_;
  std::vector<std::string> renamed_;
  bool committed_ = false;
};

const char* random_name(RandomEffects r) { return r == RandomEffects::Intercept ? "intercept" : "intercept-slope"; }

void report_warnings(const std::vector<std::string>& warnings, std::ostream& log) {
  for (const auto& w : warnings) log << "warning: " << w << '\n';
}

nlohmann::ordered_json config_json(const RunConfig& c) {
  nlohmann::ordered_json j;
  j["command"] = c.command;
  j["grid_size"] = c.grid_size;
  j["seed"] = c.seed;
  j["random"] = random_name(c.random);
  j["smoother"] = describe(c.smoother);
  if (c.command == "quantiles" || c.command == "fit") {
    j["cgm"] = c.cgm_path;
    j["period_days"] = c.period_days ? nlohmann::ordered_json(*c.period_days) : nlohmann::ordered_json();
  }
  if (c.command == "fit") {
    j["covariates"] = c.covariates_path;
    j["formula"] = c.formula;
    j["response"] = c.response;
  }
  if (c.command == "fit" || c.command == "coverage") {
    j["boot"] = c.boot;
    j["alpha"] = c.alpha;
    j["pve"] = c.pve;
    j["n_sim"] = c.n_sim;
  }
  if (c.command == "simulate" || c.command == "coverage") {
    j["scenario"] = c.scenario;
    j["n"] = c.n;
    j["J"] = c.J;
    j["rho"] = c.rho;
    j["L"] = c.L;
    j["reps"] = c.reps;
    j["per_point_noise"] = c.per_point_noise;
  }
  return j;
}

nlohmann::ordered_json meta_json(const RunConfig& c) {
  nlohmann::ordered_json j;
  j["format_version"] = kFormatVersion;
  j["versions"] = {{"qfreg", kVersion},
                   {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                                 std::to_string(EIGEN_MINOR_VERSION)}};
  j["seed"] = c.seed;
  j["config"] = config_json(c);
  return j;
}

AssembledData load_inputs(const RunConfig& c, ResponseKind response, std::ostream& log) {
  const CgmData cgm = load_cgm_csv(c.cgm_path, c.period_days);
  const CovariateDesign design =
      c.covariates_path.empty() ? intercept_design() : load_covariates_csv(c.covariates_path, parse_formula(c.formula));
  if (c.covariates_path.empty() && !parse_formula(c.formula).terms.empty()) {
    throw Error(ErrorKind::Config, "formula names covariates but no covariate file was given");
  }
  AssembledData data = assemble_dataset(cgm, design, build_grid(c.grid_size), response);
  report_warnings(data.warnings, log);
  return data;
}

std::vector<std::string> run_quantiles(const RunConfig& c, std::ostream& log) {
  const AssembledData data = load_inputs(c, ResponseKind::Quantile, log);
  OutputSet out(c.out_dir);
  write_quantiles_csv(out.add("quantiles.csv"), data);
  nlohmann::ordered_json meta = meta_json(c);
  meta["n_subjects"] = data.data.n_subjects();
  meta["n_records"] = data.data.n_records();
  meta["warnings"] = data.warnings;
  write_json(out.add("meta.json"), meta);
  log << "quantile functions: " << data.data.n_records() << " records from " << data.data.n_subjects()
      << " subjects\n";
  return out.commit();
}

std::vector<std::string> run_fit(const RunConfig& c, std::ostream& log) {
  const bool scalar = c.response == "mean";
  const AssembledData data = load_inputs(c, scalar ? ResponseKind::Mean : ResponseKind::Quantile, log);
  nlohmann::ordered_json meta = meta_json(c);
  meta["n_subjects"] = data.data.n_subjects();
  meta["n_records"] = data.data.n_records();
  meta["covariates"] = data.data.covariate_names;
  std::vector<std::string> warnings = data.warnings;
  OutputSet out(c.out_dir);

  if (scalar) {
    const ScalarFit fit = fit_scalar_multilevel(data.data, c.random);
    write_scalar_fit_csv(out.add("scalar_fit.csv"), data, fit);
    meta["converged"] = fit.fit.converged;
    meta["r2_marginal"] = fit.r_squared.marginal;
    meta["r2_conditional"] = fit.r_squared.conditional;
    meta["warnings"] = warnings;
    write_json(out.add("meta.json"), meta);
    log << "scalar model: marginal R2 " << format_real(fit.r_squared.marginal) << ", conditional R2 "
        << format_real(fit.r_squared.conditional) << '\n';
    return out.commit();
  }

  PointwiseOptions pointwise;
  pointwise.random = c.random;
  pointwise.workers = c.workers;
  const FUIFit fit = smooth_coefficients(fit_pointwise(data.data, pointwise), c.smoother);
  std::optional<BootstrapBands> bands;
  if (c.boot > 0) {
    BootstrapOptions boot;
    boot.replicates = c.boot;
    boot.alpha = c.alpha;
    boot.selection.pve = c.pve;
    boot.n_sim = c.n_sim;
    boot.seed = c.seed;
    boot.workers = c.workers;
    bands = bootstrap_bands(data.data, fit, boot);
    report_warnings(bands->warnings, log);
    warnings.insert(warnings.end(), bands->warnings.begin(), bands->warnings.end());
    meta["bootstrap_redraws"] = bands->redraws;
  }
  const std::vector<QuantileFunction> predictions = predict_subject_quantiles(data.data, fit, true);

  write_coefficients_csv(out.add("coefficients.csv"), fit, bands ? &*bands : nullptr);
  write_varcomps_csv(out.add("varcomps.csv"), fit);
  write_predictions_csv(out.add("predictions.csv"), data, predictions);
  Eigen::Index nonconverged = 0;
  for (const auto& p : fit.points) nonconverged += p.converged ? 0 : 1;
  meta["nonconverged_points"] = nonconverged;
  meta["warnings"] = warnings;
  write_json(out.add("meta.json"), meta);
  log << "fitted " << fit.beta_raw.rows() << " coefficient functions on " << fit.grid.size() << " grid points ("
      << data.data.n_subjects() << " subjects, " << data.data.n_records() << " records)\n";
  return out.commit();
}

std::vector<std::string> run_study(const RunConfig& c, std::ostream& log) {
  ScenarioConfig sc;
  sc.scenario = c.scenario;
  sc.n = c.n;
  sc.J = c.J;
  sc.rho = c.rho;
  sc.L = c.L;
  sc.grid_size = c.grid_size;
  sc.replicates = c.reps;
  sc.seed = c.seed;
  sc.random = c.random;
  sc.smoother = c.smoother;
  sc.per_point_noise = c.per_point_noise;
  sc.workers = c.workers;
  sc.bootstrap.replicates = c.boot;
  sc.bootstrap.alpha = c.alpha;
  sc.bootstrap.selection.pve = c.pve;
  sc.bootstrap.n_sim = c.n_sim;
  const bool coverage = c.command == "coverage";
  if (coverage && c.boot < 2) throw Error(ErrorKind::Config, "coverage needs --boot of at least 2");

  const SimulationReport report = coverage ? coverage_study(sc) : mse_study(sc);
  OutputSet out(c.out_dir);
  nlohmann::ordered_json json = simulation_report_json(report);
  json["versions"] = meta_json(c)["versions"];
  write_json(out.add("report.json"), json);
  if (report.mse_curves.size() > 0) write_curves_csv(out.add("curves.csv"), report);
  write_json(out.add("runtime.json"), nlohmann::ordered_json{{"seconds", report.seconds}, {"workers", c.workers}});
  log << "mu " << format_real(report.summary.median) << ", sigma " << format_real(report.summary.sd) << ", bias2 "
      << format_real(report.bias2);
  if (report.has_coverage) {
    log << ", joint coverage " << format_real(report.coverage_joint[report.target]) << ", pointwise coverage "
        << format_real(report.coverage_pointwise[report.target]);
  }
  log << '\n';
  return out.commit();
}

}  // namespace

void RunConfig::validate() const {
  auto fail = [](const std::string& what) { throw Error(ErrorKind::Config, what); };
  if (grid_size < 2) fail("--grid-size must be at least 2");
  if (boot < 0) fail("--boot must be nonnegative");
  if (!(alpha > 0.0 && alpha < 1.0)) fail("--alpha must lie in (0, 1)");
  if (!(pve > 0.0 && pve <= 1.0)) fail("--pve must lie in (0, 1]");
  if (n_sim < 1) fail("--ns must be positive");
  if (workers < 1) fail("--workers must be positive");
  if (smoother.df && smoother.kind != SmootherKind::Spline) fail("--df needs --smoother spline");
  if (smoother.df && !(*smoother.df > 0.0 && *smoother.df < static_cast<double>(grid_size))) {
    fail("--df must lie in (0, grid size)");
  }
  if (period_days && !(*period_days > 0.0)) fail("--period-days must be positive");
  if (command == "quantiles" || command == "fit") {
    if (cgm_path.empty()) fail("--cgm is required");
    if (response != "quantile" && response != "mean") fail("--response must be quantile or mean");
  }
  if (command == "simulate" || command == "coverage") {
    if (scenario != 1 && scenario != 2) fail("--scenario must be 1 or 2");
    if (n < 2) fail("--n must be at least 2");
    if (J < 1) fail("--J must be positive");
    if (!(rho >= 0.0 && rho < 1.0)) fail("--rho must lie in [0, 1)");
    if (L < 1) fail("--L must be positive");
    if (reps < 1) fail("--reps must be positive");
  }
  if (out_dir.empty()) fail("--out must name a directory");
}

std::vector<std::string> run_command(const RunConfig& config, std::ostream& log) {
  config.validate();
  std::error_code ec;
  fs::create_directories(config.out_dir, ec);
  if (!fs::is_directory(config.out_dir)) throw Error(ErrorKind::Io, "cannot create output directory " + config.out_dir);
  if (config.command == "quantiles") return run_quantiles(config, log);
  if (config.command == "fit") return run_fit(config, log);
  if (config.command == "simulate" || config.command == "coverage") return run_study(config, log);
  throw Error(ErrorKind::Config, "unknown command '" + config.command + "'");
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Quantile function-on-scalar regression for longitudinal distributional data", "qfreg"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);

  RunConfig c;
  std::string smoother = "identity";
  std::string random = "intercept";
  std::optional<double> df;

  auto common = [&](CLI::App* sub) {
    sub->add_option("--grid-size", c.grid_size, "Probability grid size")->capture_default_str();
    sub->add_option("--seed", c.seed, "Master random seed")->capture_default_str();
    sub->add_option("--workers", c.workers, "Worker threads")->capture_default_str();
    sub->add_option("--out", c.out_dir, "Output directory")->capture_default_str();
  };
  auto model = [&](CLI::App* sub) {
    sub->add_option("--smoother", smoother, "Coefficient smoother")
        ->check(CLI::IsMember({"identity", "spline"}))
        ->capture_default_str();
    sub->add_option("--df", df, "Spline degrees of freedom (GCV when omitted)");
    sub->add_option("--random", random, "Random-effect structure")
        ->check(CLI::IsMember({"intercept", "intercept-slope"}))
        ->capture_default_str();
  };
  auto bands = [&](CLI::App* sub) {
    sub->add_option("--boot", c.boot, "Bootstrap replicates (0 skips bands)")->capture_default_str();
    sub->add_option("--alpha", c.alpha, "Band level is 1 - alpha")->capture_default_str();
    sub->add_option("--pve", c.pve, "Variance share kept by the FPCA")->capture_default_str();
    sub->add_option("--ns", c.n_sim, "Simulated draws for the joint quantile")->capture_default_str();
  };
  auto inputs = [&](CLI::App* sub) {
    sub->add_option("--cgm", c.cgm_path, "CSV with subject_id, period, glucose")->required();
    sub->add_option("--period-days", c.period_days, "Derive periods from a numeric timestamp column (days)");
  };
  auto study = [&](CLI::App* sub) {
    sub->add_option("--scenario", c.scenario, "Simulation scenario (1 or 2)")->capture_default_str();
    sub->add_option("--n", c.n, "Subjects")->capture_default_str();
    sub->add_option("--J", c.J, "Visits per subject")->capture_default_str();
    sub->add_option("--rho", c.rho, "Visit correlation (scenario 1)")->capture_default_str();
    sub->add_option("--L", c.L, "Covariates (scenario 2)")->capture_default_str();
    sub->add_option("--reps", c.reps, "Simulation replicates")->capture_default_str();
    sub->add_flag("--per-point-noise", c.per_point_noise, "Independent noise at every grid point");
  };

  CLI::App* quantiles = app.add_subcommand("quantiles", "Empirical quantile functions per subject and period");
  inputs(quantiles);
  common(quantiles);

  CLI::App* fit = app.add_subcommand("fit", "Fit the functional mixed model and its bands");
  inputs(fit);
  fit->add_option("--covariates", c.covariates_path, "CSV with subject_id[, period] and covariate columns");
  fit->add_option("--formula", c.formula, "Fixed effects, e.g. '~ group + age'")->capture_default_str();
  fit->add_option("--response", c.response, "quantile or mean (scalar multilevel model)")
      ->check(CLI::IsMember({"quantile", "mean"}))
      ->capture_default_str();
  common(fit);
  model(fit);
  bands(fit);

  CLI::App* simulate = app.add_subcommand("simulate", "Estimation-error simulation study");
  study(simulate);
  common(simulate);
  model(simulate);

  CLI::App* coverage = app.add_subcommand("coverage", "Band-coverage simulation study");
  study(coverage);
  common(coverage);
  model(coverage);
  bands(coverage);

  std::vector<const char*> argv;
  argv.push_back("qfreg");
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err);
  }

  c.command = app.get_subcommands().front()->get_name();
  c.random = random == "intercept" ? RandomEffects::Intercept : RandomEffects::InterceptSlope;
  c.smoother.kind = smoother == "spline" ? SmootherKind::Spline : SmootherKind::Identity;
  c.smoother.df = df;
  try {
    const std::vector<std::string> written = run_command(c, err);
    for (const auto& path : written) out << path << '\n';
    return 0;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
}

int run_cli(int argc, const char* const* argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return run_cli(args, std::cout, std::cerr);
}

}  // namespace qfreg
