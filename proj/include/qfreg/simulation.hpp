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

#ifndef QFREG_SIMULATION_HPP
#define QFREG_SIMULATION_HPP

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <span>

#include "qfreg/bootstrap.hpp"
#include "qfreg/dataset.hpp"
#include "qfreg/fui.hpp"
#include "qfreg/smoothing.hpp"

namespace qfreg {

/// Monte Carlo study settings.
///
/// Scenario 1: Q_ij(p) = 100 + 20(p + p^2 + p^3) + U_i + 10 p j W_ij / J + e_ij
/// with U_i ~ N(0, 30^2), W_i ~ N(0, exchangeable(rho)), e_ij ~ N(0, 1).
/// Scenario 2 adds 3p * sum_l X_il with X_il ~ U(0, 3) fixed per subject,
/// and uses U_i ~ N(0, 3^2) and independent W_ij ~ N(0, 1).
struct ScenarioConfig {
  int scenario = 1;
  Eigen::Index n = 300;
  Eigen::Index J = 5;
  double rho = 0.0;
  Eigen::Index L = 1;  // covariates in scenario 2 (intercept not counted)
  Eigen::Index grid_size = 100;
  Eigen::Index replicates = 200;
  std::uint64_t seed = 1;
  RandomEffects random = RandomEffects::Intercept;
  SmootherOptions smoother;
  bool warm_start = true;
  /// Draw e_ij independently at every grid point instead of once per record.
  bool per_point_noise = false;
  BootstrapOptions bootstrap;
  unsigned workers = 1;

  void validate() const;
};

/// 100 + 20 (p + p^2 + p^3): the intercept function of both scenarios.
double baseline_quantile(double p);

LongitudinalDataset simulate_scenario1(const ScenarioConfig& config, std::uint64_t seed);
LongitudinalDataset simulate_scenario2(const ScenarioConfig& config, std::uint64_t seed);
LongitudinalDataset simulate_scenario(const ScenarioConfig& config, std::uint64_t seed);

/// L x m matrix of the generating coefficient functions on `grid`.
Eigen::MatrixXd true_coefficients(const ScenarioConfig& config, const ProbabilityGrid& grid);

/// truth(l, p): value of coefficient l at probability p.
using CoefficientTruth = std::function<double(Eigen::Index, double)>;

/// Integral over [0, 1] of (sum_l beta_l(p) - sum_l beta_hat_l(p))^2.
double mse_functional(const Eigen::MatrixXd& beta_hat, const CoefficientTruth& truth, const ProbabilityGrid& grid);

/// (3p - beta_hat_1(p))^2 at every grid point.
Eigen::VectorXd pointwise_mse_curve(const Eigen::VectorXd& beta_hat_1, const ProbabilityGrid& grid);

/// Median (smallest t with F(t) >= 1/2) and the root mean square deviation
/// about that median.
struct MseSummary {
  double median = 0.0;
  double sd = 0.0;
};
MseSummary summarize_mse(std::span<const double> values);

struct MseCurveSummary {
  Eigen::VectorXd median;
  Eigen::VectorXd sd;
};
/// Column-wise summary of a replicates x m matrix of pointwise errors.
MseCurveSummary summarize_mse_curves(const Eigen::MatrixXd& curves);

/// [integral of (truth - mean_estimate)]^2.
double squared_bias(const Eigen::VectorXd& mean_estimate, const Eigen::VectorXd& truth, const ProbabilityGrid& grid);

struct CoverageHits {
  Eigen::VectorXd joint;      // 1 when the truth is inside the joint band at every p
  Eigen::VectorXd pointwise;  // grid measure of points inside the pointwise band
};
CoverageHits band_coverage(const BootstrapBands& bands, const Eigen::MatrixXd& truth, const ProbabilityGrid& grid);

struct SimulationReport {
  ScenarioConfig config;
  ProbabilityGrid grid;
  /// Coefficient the headline error and coverage refer to: the intercept in
  /// scenario 1 and the first covariate in scenario 2.
  Eigen::Index target = 0;
  Eigen::VectorXd mse;          // scenario 1: functional MSE per replicate
  Eigen::MatrixXd mse_curves;   // scenario 2: replicates x m pointwise MSE of beta_1
  MseSummary summary;           // of mse (scenario 1) or of the integrated curves (scenario 2)
  MseCurveSummary curve_summary;
  double bias2 = 0.0;
  Eigen::MatrixXd mean_beta;    // L x m average estimate across replicates
  bool has_coverage = false;
  Eigen::VectorXd coverage_joint;      // per coefficient
  Eigen::VectorXd coverage_pointwise;  // per coefficient
  Eigen::MatrixXd joint_hits;          // replicates x L
  Eigen::MatrixXd pointwise_hits;      // replicates x L
  Eigen::Index nonconverged_points = 0;
  double seconds = 0.0;
};

/// Estimation-error study: simulate, fit, smooth, and summarise every replicate.
SimulationReport mse_study(const ScenarioConfig& config);

/// Adds the cluster bootstrap to every replicate and records band coverage of
/// the true coefficient functions.
SimulationReport coverage_study(const ScenarioConfig& config);

}  // namespace qfreg

#endif  // QFREG_SIMULATION_HPP
