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

#ifndef QFREG_BOOTSTRAP_HPP
#define QFREG_BOOTSTRAP_HPP

#include <Eigen/Dense>

#include <cstdint>
#include <string>
#include <vector>

#include "qfreg/dataset.hpp"
#include "qfreg/fpca.hpp"
#include "qfreg/fui.hpp"

namespace qfreg {

struct BootstrapOptions {
  Eigen::Index replicates = 500;
  double alpha = 0.05;
  ComponentSelection selection;
  Eigen::Index n_sim = 10000;
  std::uint64_t seed = 1;
  unsigned workers = 1;
  bool warm_start = true;
};

/// Cluster-bootstrap summary of one coefficient function.
struct CoefficientBands {
  Eigen::MatrixXd replicates;  // B x m smoothed bootstrap estimates
  Eigen::VectorXd mean;        // column means
  Eigen::VectorXd variance;    // column variances (denominator B - 1)
  FpcaResult fpca;
  double q_joint = 0.0;
  Eigen::VectorXd pointwise_lower;  // mean -/+ 2 sqrt(v)
  Eigen::VectorXd pointwise_upper;
  Eigen::VectorXd joint_lower;      // original estimate -/+ q sqrt(v)
  Eigen::VectorXd joint_upper;
};

struct BootstrapBands {
  Eigen::Index replicates = 0;
  double alpha = 0.05;
  Eigen::Index n_sim = 0;
  std::vector<CoefficientBands> coefficients;
  Eigen::Index redraws = 0;
  std::vector<std::string> warnings;
};

/// Resamples subjects with replacement, refits every replicate with the
/// same random-effect structure and smoothing operators as `fit`, and builds
/// pointwise and joint bands per coefficient. Replicate b draws from the
/// stream derive_seed(seed, {b, attempt}); a replicate whose design is rank
/// deficient is redrawn up to 10 times.
BootstrapBands bootstrap_bands(const LongitudinalDataset& data, const FUIFit& fit, const BootstrapOptions& options);

/// Bands from given bootstrap matrices (one B x m matrix per coefficient).
BootstrapBands summarize_bootstrap(const FUIFit& fit, std::vector<Eigen::MatrixXd> replicates,
                                   const BootstrapOptions& options);

}  // namespace qfreg

#endif  // QFREG_BOOTSTRAP_HPP
