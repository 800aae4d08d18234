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

#ifndef QFREG_DATASET_HPP
#define QFREG_DATASET_HPP

#include <Eigen/Dense>

#include <string>
#include <vector>

#include "qfreg/quantile.hpp"

namespace qfreg {

/// Subject-visit records with fixed covariates and one functional response
/// per record, all on the same grid. A scalar response is a one-column Y.
struct LongitudinalDataset {
  ProbabilityGrid grid;
  std::vector<long> subject;                  // subject label per record
  std::vector<double> visit;                  // visit index j per record
  Eigen::MatrixXd X;                          // records x L, intercept included
  std::vector<std::string> covariate_names;   // L names
  Eigen::MatrixXd Y;                          // records x m

  Eigen::Index n_records() const noexcept { return X.rows(); }
  Eigen::Index n_covariates() const noexcept { return X.cols(); }
  Eigen::Index n_subjects() const;

  /// Throws Shape / InvalidData when the fields disagree.
  void validate() const;
};

/// Grid used for scalar responses: the single point p = 1.
ProbabilityGrid scalar_grid();

/// Copies of the records of `draws[k]` relabelled as subject k.
LongitudinalDataset resample_subjects(const LongitudinalDataset& data, const std::vector<long>& draws);

}  // namespace qfreg

#endif  // QFREG_DATASET_HPP
