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

#ifndef QFREG_FUI_HPP
#define QFREG_FUI_HPP

#include <Eigen/Dense>

#include <string>
#include <vector>

#include "qfreg/dataset.hpp"
#include "qfreg/lmm.hpp"
#include "qfreg/quantile.hpp"
#include "qfreg/smoothing.hpp"

namespace qfreg {

/// Mixed-model output kept for one grid point.
struct PointFit {
  VarianceComponents components;
  Eigen::MatrixXd blups;  // n_subjects x K, rows in increasing subject label order
  double reml_deviance = 0.0;
  bool converged = false;
};

/// Coefficient functions estimated over the grid.
struct FUIFit {
  ProbabilityGrid grid;
  RandomEffects random = RandomEffects::Intercept;
  std::vector<std::string> covariate_names;
  Eigen::MatrixXd beta_raw;     // L x m pointwise estimates
  Eigen::MatrixXd beta_smooth;  // L x m smoothed estimates
  SmootherOptions smoother;
  /// One m x m operator per coefficient; empty until smoothing is applied.
  std::vector<Eigen::MatrixXd> smoother_matrices;
  std::vector<PointFit> points;
  std::vector<long> subject_labels;

  /// beta_raw-shaped input smoothed row by row with the stored operators.
  Eigen::MatrixXd apply_smoother(const Eigen::MatrixXd& raw) const;
};

struct PointwiseOptions {
  RandomEffects random = RandomEffects::Intercept;
  /// Start each grid point from the previous point's theta.
  bool warm_start = true;
  unsigned workers = 1;
  RemlOptions reml;
};

/// Independent mixed-model fits at every grid point; beta_smooth = beta_raw.
FUIFit fit_pointwise(const LongitudinalDataset& data, const PointwiseOptions& options = {});

/// Applies S_l to each coefficient row and records the operators.
FUIFit smooth_coefficients(FUIFit fit, const SmootherOptions& smoother);

/// Fitted quantile function of every record, projected onto nondecreasing
/// functions: sum_l X_l beta_l(p) plus, when requested, Z u(p) from the
/// pointwise BLUPs.
std::vector<QuantileFunction> predict_subject_quantiles(const LongitudinalDataset& data, const FUIFit& fit,
                                                        bool include_random);

struct ScalarFit {
  LMMFit fit;
  RSquared r_squared;
};

/// Scalar multilevel model (one response per subject-period) with R-squared.
ScalarFit fit_scalar_multilevel(const LongitudinalDataset& data, RandomEffects random,
                                const RemlOptions& reml = {});

}  // namespace qfreg

#endif  // QFREG_FUI_HPP
