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

#ifndef QFREG_LMM_HPP
#define QFREG_LMM_HPP

#include <Eigen/Dense>

#include <optional>
#include <span>
#include <vector>

#include "qfreg/error.hpp"

namespace qfreg {

/// Subject-level random-effect structure. The slope column is the visit index.
enum class RandomEffects { Intercept, InterceptSlope };

inline Eigen::Index random_effect_count(RandomEffects r) {
  return r == RandomEffects::Intercept ? 1 : 2;
}

/// Design of a Gaussian linear mixed model with one grouping factor:
///   y = X beta + Z_g u_g + e,   u_g ~ N(0, G),   e ~ N(0, sigma2 I).
///
/// Group labels are re-indexed to 0..n_groups-1 in increasing label order.
/// Construction checks shapes and the column rank of X (pivoted Cholesky of
/// X'X, relative tolerance 1e-10) and throws RankDeficient on failure.
class MixedModelSpec {
 public:
  MixedModelSpec(Eigen::MatrixXd X, Eigen::MatrixXd Z, std::span<const long> group_labels);

  /// Z built from the visit index: intercept column, plus `visit` as slope.
  static MixedModelSpec with_visits(Eigen::MatrixXd X, std::span<const double> visit,
                                    std::span<const long> group_labels, RandomEffects random);

  Eigen::Index n_obs() const noexcept { return X_.rows(); }
  Eigen::Index n_fixed() const noexcept { return X_.cols(); }
  Eigen::Index n_random() const noexcept { return Z_.cols(); }
  Eigen::Index n_groups() const noexcept { return static_cast<Eigen::Index>(labels_.size()); }

  const Eigen::MatrixXd& X() const noexcept { return X_; }
  const Eigen::MatrixXd& Z() const noexcept { return Z_; }
  /// Contiguous group index of every observation.
  const std::vector<Eigen::Index>& group() const noexcept { return group_; }
  /// Original label of each contiguous group index.
  const std::vector<long>& labels() const noexcept { return labels_; }

 private:
  Eigen::MatrixXd X_;
  Eigen::MatrixXd Z_;
  std::vector<Eigen::Index> group_;
  std::vector<long> labels_;
};

/// Random-effect covariance G and residual variance sigma2, together with
/// the log-Cholesky vector theta of G / sigma2.
///
/// theta stores the lower Cholesky factor of G / sigma2 row by row with the
/// diagonal on the log scale: (log l00) for K = 1 and (log l00, l10, log l11)
/// for K = 2. A diagonal entry of -infinity is the variance boundary.
struct VarianceComponents {
  Eigen::MatrixXd G;
  double sigma2 = 0.0;
  Eigen::VectorXd theta;
};

/// Lower-triangular relative covariance factor Lambda with Lambda Lambda' = G / sigma2.
Eigen::MatrixXd relative_factor(const Eigen::VectorXd& theta);

VarianceComponents components_from_theta(const Eigen::VectorXd& theta, double sigma2);

/// Inverse of components_from_theta. G must be symmetric positive semidefinite.
Eigen::VectorXd theta_from_components(const Eigen::MatrixXd& G, double sigma2);

/// One fitted model.
struct LMMFit {
  Eigen::VectorXd beta;
  Eigen::MatrixXd vcov_beta;
  VarianceComponents components;
  /// n_groups x K conditional modes of the random effects.
  Eigen::MatrixXd blups;
  double reml_deviance = 0.0;
  bool converged = false;
  int n_iterations = 0;
};

struct RemlOptions {
  /// Starting theta; a method-of-moments start is used when absent.
  std::optional<Eigen::VectorXd> init;
  /// Relative change of the deviance across the simplex that ends a run.
  double tol = 1e-8;
  int max_iterations = 500;
  int restarts = 2;
};

/// -2 x restricted log-likelihood profiled over beta and sigma2.
///
/// Uses the error-contrast normalisation, so the value does not depend on the
/// parameterisation of the column space of X. At G = 0 it reduces to
/// (n - L)(1 + log(2 pi RSS / (n - L))).
double profiled_reml_deviance(const MixedModelSpec& spec, const Eigen::VectorXd& y,
                              const Eigen::VectorXd& theta);

/// REML fit: Nelder-Mead over theta with restarts, a variance-boundary check,
/// and a Newton polish on the interior coordinates.
LMMFit fit_reml(const MixedModelSpec& spec, const Eigen::VectorXd& y, const RemlOptions& options = {});

/// Fit quantities (GLS beta, profiled sigma2, BLUPs) at a fixed theta.
LMMFit fit_at_theta(const MixedModelSpec& spec, const Eigen::VectorXd& y, const Eigen::VectorXd& theta);

/// X beta + Z u per observation.
Eigen::VectorXd predict_blup(const LMMFit& fit, const MixedModelSpec& spec);

struct RSquared {
  double marginal = 0.0;
  double conditional = 0.0;
};

/// Marginal and conditional R-squared with a random-slope extension: the
/// random-effect variance is the mean of z'Gz over observations.
RSquared r_squared_components(const LMMFit& fit, const MixedModelSpec& spec);

}  // namespace qfreg

#endif  // QFREG_LMM_HPP
