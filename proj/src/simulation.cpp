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

#include "qfreg/simulation.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <random>
#include <string>

#include "qfreg/parallel.hpp"
#include "qfreg/random.hpp"

namespace qfreg {

namespace {

constexpr std::uint64_t kDataStream = 0xda7aULL;
constexpr std::uint64_t kBootStream = 0xb007ULL;

struct ReplicateResult {
  Eigen::MatrixXd beta;
  Eigen::VectorXd joint;
  Eigen::VectorXd pointwise;
  Eigen::Index nonconverged = 0;
};

SimulationReport run_study(const ScenarioConfig& config, bool with_bands) {
  config.validate();
  const auto started = std::chrono::steady_clock::now();
  const ProbabilityGrid grid = build_grid(config.grid_size);
  const Eigen::MatrixXd truth = true_coefficients(config, grid);
  const Eigen::Index R = config.replicates;
  const Eigen::Index L = truth.rows();
  const Eigen::Index m = grid.size();

  PointwiseOptions pointwise;
  pointwise.random = config.random;
  pointwise.warm_start = config.warm_start;
  pointwise.workers = 1;

  std::vector<ReplicateResult> results(static_cast<std::size_t>(R));
  parallel_for(static_cast<std::size_t>(R), config.workers, [&](std::size_t r) {
    try {
      const LongitudinalDataset data =
          simulate_scenario(config, derive_seed(config.seed, {kDataStream, static_cast<std::uint64_t>(r)}));
      const FUIFit fit = smooth_coefficients(fit_pointwise(data, pointwise), config.smoother);
      ReplicateResult& out = results[r];
      out.beta = fit.beta_smooth;
      for (const PointFit& p : fit.points) out.nonconverged += p.converged ? 0 : 1;
      if (with_bands) {
        BootstrapOptions boot = config.bootstrap;
        boot.seed = derive_seed(config.seed, {kBootStream, static_cast<std::uint64_t>(r)});
        boot.workers = 1;
        const BootstrapBands bands = bootstrap_bands(data, fit, boot);
        const CoverageHits hits = band_coverage(bands, truth, grid);
        out.joint = hits.joint;
        out.pointwise = hits.pointwise;
      }
    } catch (const Error& e) {
      throw Error(e.kind(), "replicate " + std::to_string(r) + ": " + e.what());
    }
  });

  SimulationReport report;
  report.config = config;
  report.grid = grid;
  report.target = config.scenario == 1 ? 0 : 1;
  report.mean_beta = Eigen::MatrixXd::Zero(L, m);
  for (const auto& r : results) {
    report.mean_beta += r.beta;
    report.nonconverged_points += r.nonconverged;
  }
  report.mean_beta /= static_cast<double>(R);

  const Eigen::Index t = report.target;
  if (config.scenario == 1) {
    report.mse.resize(R);
    const CoefficientTruth f = [&](Eigen::Index l, double p) {
      (void)l;
      return baseline_quantile(p);
    };
    for (Eigen::Index r = 0; r < R; ++r) {
      report.mse[r] = mse_functional(results[static_cast<std::size_t>(r)].beta, f, grid);
    }
    report.summary = summarize_mse(std::span<const double>(report.mse.data(), static_cast<std::size_t>(R)));
  } else {
    report.mse_curves.resize(R, m);
    report.mse.resize(R);
    for (Eigen::Index r = 0; r < R; ++r) {
      report.mse_curves.row(r) =
          pointwise_mse_curve(results[static_cast<std::size_t>(r)].beta.row(t).transpose(), grid).transpose();
      report.mse[r] = integrate_grid(report.mse_curves.row(r).transpose(), grid);
    }
    report.curve_summary = summarize_mse_curves(report.mse_curves);
    report.summary = summarize_mse(std::span<const double>(report.mse.data(), static_cast<std::size_t>(R)));
  }
  report.bias2 = squared_bias(report.mean_beta.row(t).transpose(), truth.row(t).transpose(), grid);

  if (with_bands) {
    report.has_coverage = true;
    report.joint_hits.resize(R, L);
    report.pointwise_hits.resize(R, L);
    for (Eigen::Index r = 0; r < R; ++r) {
      report.joint_hits.row(r) = results[static_cast<std::size_t>(r)].joint.transpose();
      report.pointwise_hits.row(r) = results[static_cast<std::size_t>(r)].pointwise.transpose();
    }
    report.coverage_joint = report.joint_hits.colwise().mean().transpose();
    report.coverage_pointwise = report.pointwise_hits.colwise().mean().transpose();
  }
  report.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return report;
}

}  // namespace

void ScenarioConfig::validate() const {
  if (scenario != 1 && scenario != 2) throw Error(ErrorKind::Config, "scenario must be 1 or 2");
  if (n < 2) throw Error(ErrorKind::Config, "need at least 2 subjects");
  if (J < 1) throw Error(ErrorKind::Config, "need at least 1 visit per subject");
  if (scenario == 1 && !(rho >= 0.0 && rho < 1.0)) throw Error(ErrorKind::Config, "rho must lie in [0, 1)");
  if (scenario == 2 && L < 1) throw Error(ErrorKind::Config, "scenario 2 needs at least one covariate");
  if (grid_size < 2) throw Error(ErrorKind::InvalidGrid, "grid size must be >= 2");
  if (replicates < 1) throw Error(ErrorKind::Config, "need at least one replicate");
}

double baseline_quantile(double p) { return 100.0 + 20.0 * (p + p * p + p * p * p); }

LongitudinalDataset simulate_scenario1(const ScenarioConfig& config, std::uint64_t seed) {
  config.validate();
  if (config.scenario != 1) throw Error(ErrorKind::Config, "simulate_scenario1 needs scenario = 1");
  const ProbabilityGrid grid = build_grid(config.grid_size);
  const Eigen::Index m = grid.size();
  const Eigen::Index records = config.n * config.J;
  Rng rng(seed);
  std::normal_distribution<double> normal;

  LongitudinalDataset data;
  data.grid = grid;
  data.covariate_names = {"(Intercept)"};
  data.X = Eigen::MatrixXd::Ones(records, 1);
  data.Y.resize(records, m);
  data.subject.reserve(static_cast<std::size_t>(records));
  data.visit.reserve(static_cast<std::size_t>(records));
  const double shared = std::sqrt(config.rho);
  const double own = std::sqrt(1.0 - config.rho);
  const double J = static_cast<double>(config.J);
  Eigen::VectorXd base(m);
  for (Eigen::Index k = 0; k < m; ++k) base[k] = baseline_quantile(grid[k]);

  Eigen::Index row = 0;
  for (Eigen::Index i = 0; i < config.n; ++i) {
    const double u = 30.0 * normal(rng);
    // Exchangeable W_i: common factor plus independent parts.
    const double common = normal(rng);
    for (Eigen::Index j = 1; j <= config.J; ++j, ++row) {
      const double w = shared * common + own * normal(rng);
      const double eps = normal(rng);
      for (Eigen::Index k = 0; k < m; ++k) {
        const double e = config.per_point_noise ? normal(rng) : eps;
        data.Y(row, k) = base[k] + u + 10.0 * grid[k] * static_cast<double>(j) * w / J + e;
      }
      data.subject.push_back(static_cast<long>(i));
      data.visit.push_back(static_cast<double>(j));
    }
  }
  return data;
}

LongitudinalDataset simulate_scenario2(const ScenarioConfig& config, std::uint64_t seed) {
  config.validate();
  if (config.scenario != 2) throw Error(ErrorKind::Config, "simulate_scenario2 needs scenario = 2");
  const ProbabilityGrid grid = build_grid(config.grid_size);
  const Eigen::Index m = grid.size();
  const Eigen::Index records = config.n * config.J;
  const Eigen::Index L = config.L;
  Rng rng(seed);
  std::normal_distribution<double> normal;
  std::uniform_real_distribution<double> uniform(0.0, 3.0);

  LongitudinalDataset data;
  data.grid = grid;
  data.covariate_names = {"(Intercept)"};
  for (Eigen::Index l = 1; l <= L; ++l) data.covariate_names.push_back("x" + std::to_string(l));
  data.X.resize(records, L + 1);
  data.Y.resize(records, m);
  const double J = static_cast<double>(config.J);
  Eigen::VectorXd base(m);
  for (Eigen::Index k = 0; k < m; ++k) base[k] = baseline_quantile(grid[k]);

  Eigen::Index row = 0;
  Eigen::VectorXd x(L);
  for (Eigen::Index i = 0; i < config.n; ++i) {
    for (Eigen::Index l = 0; l < L; ++l) x[l] = uniform(rng);
    const double xsum = x.sum();
    const double u = 3.0 * normal(rng);
    for (Eigen::Index j = 1; j <= config.J; ++j, ++row) {
      const double w = normal(rng);
      const double eps = normal(rng);
      data.X(row, 0) = 1.0;
      data.X.row(row).tail(L) = x.transpose();
      for (Eigen::Index k = 0; k < m; ++k) {
        const double e = config.per_point_noise ? normal(rng) : eps;
        const double p = grid[k];
        data.Y(row, k) = base[k] + 3.0 * p * xsum + u + 10.0 * p * static_cast<double>(j) * w / J + e;
      }
      data.subject.push_back(static_cast<long>(i));
      data.visit.push_back(static_cast<double>(j));
    }
  }
  return data;
}

LongitudinalDataset simulate_scenario(const ScenarioConfig& config, std::uint64_t seed) {
  return config.scenario == 1 ? simulate_scenario1(config, seed) : simulate_scenario2(config, seed);
}

Eigen::MatrixXd true_coefficients(const ScenarioConfig& config, const ProbabilityGrid& grid) {
  const Eigen::Index L = config.scenario == 1 ? 1 : config.L + 1;
  Eigen::MatrixXd truth(L, grid.size());
  for (Eigen::Index k = 0; k < grid.size(); ++k) {
    truth(0, k) = baseline_quantile(grid[k]);
    for (Eigen::Index l = 1; l < L; ++l) truth(l, k) = 3.0 * grid[k];
  }
  return truth;
}

double mse_functional(const Eigen::MatrixXd& beta_hat, const CoefficientTruth& truth, const ProbabilityGrid& grid) {
  if (beta_hat.cols() != grid.size()) {
    throw Error(ErrorKind::Shape, "coefficient matrix has " + std::to_string(beta_hat.cols()) +
                                      " columns on a grid of " + std::to_string(grid.size()));
  }
  Eigen::VectorXd sq(grid.size());
  for (Eigen::Index k = 0; k < grid.size(); ++k) {
    double diff = 0.0;
    for (Eigen::Index l = 0; l < beta_hat.rows(); ++l) diff += truth(l, grid[k]) - beta_hat(l, k);
    sq[k] = diff * diff;
  }
  return integrate_grid(sq, grid);
}

Eigen::VectorXd pointwise_mse_curve(const Eigen::VectorXd& beta_hat_1, const ProbabilityGrid& grid) {
  if (beta_hat_1.size() != grid.size()) throw Error(ErrorKind::Shape, "curve length does not match the grid");
  return (3.0 * grid.points() - beta_hat_1).array().square().matrix();
}

MseSummary summarize_mse(std::span<const double> values) {
  if (values.empty()) throw Error(ErrorKind::EmptyInput, "no replicate errors to summarise");
  std::vector<double> sorted(values.begin(), values.end());
  std::sort(sorted.begin(), sorted.end());
  // inf{t : F(t) >= 1/2} is the ceil(B / 2)-th order statistic.
  const std::size_t k = (sorted.size() + 1) / 2;
  MseSummary s;
  s.median = sorted[k - 1];
  double ss = 0.0;
  for (const double v : values) ss += (v - s.median) * (v - s.median);
  s.sd = std::sqrt(ss / static_cast<double>(values.size()));
  return s;
}

MseCurveSummary summarize_mse_curves(const Eigen::MatrixXd& curves) {
  if (curves.rows() == 0) throw Error(ErrorKind::EmptyInput, "no replicate curves to summarise");
  MseCurveSummary out;
  out.median.resize(curves.cols());
  out.sd.resize(curves.cols());
  for (Eigen::Index p = 0; p < curves.cols(); ++p) {
    const Eigen::VectorXd col = curves.col(p);
    const MseSummary s = summarize_mse(std::span<const double>(col.data(), static_cast<std::size_t>(col.size())));
    out.median[p] = s.median;
    out.sd[p] = s.sd;
  }
  return out;
}

double squared_bias(const Eigen::VectorXd& mean_estimate, const Eigen::VectorXd& truth, const ProbabilityGrid& grid) {
  if (mean_estimate.size() != truth.size()) throw Error(ErrorKind::Shape, "estimate and truth differ in length");
  const double b = integrate_grid(truth - mean_estimate, grid);
  return b * b;
}

CoverageHits band_coverage(const BootstrapBands& bands, const Eigen::MatrixXd& truth, const ProbabilityGrid& grid) {
  const auto L = static_cast<Eigen::Index>(bands.coefficients.size());
  if (truth.rows() != L || truth.cols() != grid.size()) {
    throw Error(ErrorKind::Shape, "truth does not match the bands");
  }
  CoverageHits hits;
  hits.joint.resize(L);
  hits.pointwise.resize(L);
  for (Eigen::Index l = 0; l < L; ++l) {
    const CoefficientBands& c = bands.coefficients[static_cast<std::size_t>(l)];
    const Eigen::ArrayXd t = truth.row(l).transpose().array();
    hits.joint[l] = ((t >= c.joint_lower.array()) && (t <= c.joint_upper.array())).all() ? 1.0 : 0.0;
    const Eigen::VectorXd inside =
        ((t >= c.pointwise_lower.array()) && (t <= c.pointwise_upper.array())).cast<double>().matrix();
    hits.pointwise[l] = integrate_grid(inside, grid);
  }
  return hits;
}

SimulationReport mse_study(const ScenarioConfig& config) { return run_study(config, false); }

SimulationReport coverage_study(const ScenarioConfig& config) { return run_study(config, true); }

}  // namespace qfreg
