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

#ifndef QFREG_FPCA_HPP
#define QFREG_FPCA_HPP

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <vector>

#include "qfreg/error.hpp"

namespace qfreg {

/// Number of principal components to keep: the smallest count whose
/// cumulative share of variance reaches `pve`, or exactly `count` when set.
struct ComponentSelection {
  double pve = 0.95;
  std::optional<Eigen::Index> count;
};

struct FpcaResult {
  Eigen::VectorXd mean;          // column means
  Eigen::VectorXd eigenvalues;   // Q values, nonincreasing, clipped at zero
  Eigen::MatrixXd eigenvectors;  // m x Q, orthonormal columns
  Eigen::Index n_components = 0;
};

/// Eigendecomposition of the m x m sample covariance (denominator B - 1) of
/// the rows of a B x m matrix.
FpcaResult fpca_decompose(const Eigen::MatrixXd& replicates, const ComponentSelection& selection = {});

/// (1 - alpha) empirical quantile of the max statistic
///   u_n = max_p |sum_q xi_nq gamma_q(p)| / sqrt(v(p)),  xi_nq ~ N(0, lambda_q),
/// over n_sim draws. Points with v(p) <= 0 are left out of the max. Returns 0
/// when all eigenvalues are zero or no point has positive variance.
double joint_band_quantile(const Eigen::VectorXd& mean, const Eigen::VectorXd& variance,
                           const Eigen::VectorXd& eigenvalues, const Eigen::MatrixXd& eigenvectors,
                           Eigen::Index n_sim, double alpha, std::uint64_t seed);

/// Linear-interpolation (type 7) quantile of a sample.
double sample_quantile(std::vector<double> values, double prob);

}  // namespace qfreg

#endif  // QFREG_FPCA_HPP
