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

#ifndef QFREG_SMOOTHING_HPP
#define QFREG_SMOOTHING_HPP

#include <Eigen/Dense>

#include <optional>
#include <string>

#include "qfreg/quantile.hpp"

namespace qfreg {

enum class SmootherKind { Identity, Spline };

/// How coefficient curves are smoothed across the grid. The spline is a
/// cubic smoothing spline with knots at every grid point; its penalty
/// parameter comes from `df` (trace of the smoother matrix) when given and
/// from generalized cross-validation otherwise.
struct SmootherOptions {
  SmootherKind kind = SmootherKind::Identity;
  std::optional<double> df;
};

std::string describe(const SmootherOptions& options);

/// Penalized cubic spline on a fixed grid, diagonalised once so that any
/// penalty can be applied in O(m^2).
class CubicSmoothingSpline {
 public:
  explicit CubicSmoothingSpline(const ProbabilityGrid& grid);

  /// m x m smoother matrix for penalty `lambda`.
  Eigen::MatrixXd matrix(double lambda) const;
  /// Effective degrees of freedom tr S(lambda).
  double degrees_of_freedom(double lambda) const;
  /// Penalty whose smoother has trace `df`; df must lie in (2, m).
  double lambda_for_df(double df) const;
  /// Penalty minimising m * RSS / (m - tr S)^2 for the data y.
  double lambda_by_gcv(const Eigen::VectorXd& y) const;
  double gcv_score(const Eigen::VectorXd& y, double lambda) const;

 private:
  Eigen::Index m_;
  Eigen::MatrixXd basis_;     // eigenvectors of the penalty matrix
  Eigen::VectorXd penalty_;   // its eigenvalues (two are zero: constants and lines)
  double log_lambda_lo_ = 0.0;
  double log_lambda_hi_ = 0.0;
};

/// Smoother matrix chosen for one coefficient curve.
Eigen::MatrixXd smoother_matrix(const SmootherOptions& options, const ProbabilityGrid& grid,
                                const Eigen::VectorXd& curve);

}  // namespace qfreg

#endif  // QFREG_SMOOTHING_HPP
