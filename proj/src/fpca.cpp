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

#include "qfreg/fpca.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "qfreg/random.hpp"

namespace qfreg {

FpcaResult fpca_decompose(const Eigen::MatrixXd& replicates, const ComponentSelection& selection) {
  const Eigen::Index B = replicates.rows();
  const Eigen::Index m = replicates.cols();
  if (B < 2) {
    throw Error(ErrorKind::InsufficientReplicates, "FPCA needs at least 2 rows, got " + std::to_string(B));
  }
  if (m < 1) throw Error(ErrorKind::Shape, "FPCA input has no columns");
  if (selection.count && (*selection.count < 1 || *selection.count > m)) {
    throw Error(ErrorKind::Config, "component count must lie in [1, m]");
  }
  if (!selection.count && !(selection.pve > 0.0 && selection.pve <= 1.0)) {
    throw Error(ErrorKind::Config, "pve must lie in (0, 1]");
  }

  FpcaResult out;
  out.mean = replicates.colwise().mean().transpose();
  const Eigen::MatrixXd centered = replicates.rowwise() - out.mean.transpose();
  const Eigen::MatrixXd cov = (centered.transpose() * centered) / static_cast<double>(B - 1);
  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
  // SelfAdjointEigenSolver sorts ascending.
  const Eigen::VectorXd values = eig.eigenvalues().reverse().cwiseMax(0.0);
  const Eigen::MatrixXd vectors = eig.eigenvectors().rowwise().reverse();

  Eigen::Index q = 1;
  if (selection.count) {
    q = *selection.count;
  } else {
    const double total = values.sum();
    if (total > 0.0) {
      double cumulative = 0.0;
      for (q = 1; q <= m; ++q) {
        cumulative += values[q - 1];
        if (cumulative >= selection.pve * total) break;
      }
      q = std::min(q, m);
    }
  }
  out.n_components = q;
  out.eigenvalues = values.head(q);
  out.eigenvectors = vectors.leftCols(q);
  return out;
}

double sample_quantile(std::vector<double> values, double prob) {
  if (values.empty()) throw Error(ErrorKind::EmptyInput, "quantile of an empty sample");
  std::sort(values.begin(), values.end());
  const double h = static_cast<double>(values.size() - 1) * prob;
  const auto lo = std::min(static_cast<std::size_t>(std::floor(h)), values.size() - 1);
  const double frac = h - static_cast<double>(lo);
  return lo + 1 < values.size() ? values[lo] + frac * (values[lo + 1] - values[lo]) : values[lo];
}

double joint_band_quantile(const Eigen::VectorXd& mean, const Eigen::VectorXd& variance,
                           const Eigen::VectorXd& eigenvalues, const Eigen::MatrixXd& eigenvectors,
                           Eigen::Index n_sim, double alpha, std::uint64_t seed) {
  const Eigen::Index m = variance.size();
  if (mean.size() != m || eigenvectors.rows() != m || eigenvectors.cols() != eigenvalues.size()) {
    throw Error(ErrorKind::Shape, "joint_band_quantile: inconsistent dimensions");
  }
  if (!(alpha > 0.0 && alpha < 1.0)) throw Error(ErrorKind::Config, "alpha must lie in (0, 1)");
  if (n_sim < 1) throw Error(ErrorKind::Config, "number of simulations must be positive");

  std::vector<Eigen::Index> active;
  for (Eigen::Index p = 0; p < m; ++p)
    if (variance[p] > 0.0) active.push_back(p);
  const Eigen::VectorXd sd_lambda = eigenvalues.cwiseMax(0.0).cwiseSqrt();
  if (active.empty() || sd_lambda.isZero(0.0)) return 0.0;

  Eigen::VectorXd inv_sd(static_cast<Eigen::Index>(active.size()));
  Eigen::MatrixXd basis(static_cast<Eigen::Index>(active.size()), eigenvalues.size());
  for (std::size_t a = 0; a < active.size(); ++a) {
    inv_sd[static_cast<Eigen::Index>(a)] = 1.0 / std::sqrt(variance[active[a]]);
    basis.row(static_cast<Eigen::Index>(a)) = eigenvectors.row(active[a]);
  }
  basis = inv_sd.asDiagonal() * basis * sd_lambda.asDiagonal();

  Rng rng(seed);
  std::normal_distribution<double> normal;
  Eigen::VectorXd z(eigenvalues.size());
  std::vector<double> u(static_cast<std::size_t>(n_sim));
  for (Eigen::Index n = 0; n < n_sim; ++n) {
    for (Eigen::Index q = 0; q < z.size(); ++q) z[q] = normal(rng);
    u[static_cast<std::size_t>(n)] = (basis * z).cwiseAbs().maxCoeff();
  }
  return sample_quantile(std::move(u), 1.0 - alpha);
}

}  // namespace qfreg
