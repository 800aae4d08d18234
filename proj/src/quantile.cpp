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

#include "qfreg/quantile.hpp"

#include <algorithm>
#include <string>

namespace qfreg {

ProbabilityGrid::ProbabilityGrid() : ProbabilityGrid(build_grid(100)) {}

ProbabilityGrid::ProbabilityGrid(Eigen::VectorXd points) : points_(std::move(points)) {
  if (points_.size() == 0) throw Error(ErrorKind::InvalidGrid, "grid has no points");
  for (Eigen::Index i = 0; i < points_.size(); ++i) {
    const double p = points_[i];
    if (!(p > 0.0 && p <= 1.0)) {
      throw Error(ErrorKind::InvalidGrid, "grid point " + std::to_string(p) + " outside (0, 1]");
    }
    if (i > 0 && !(p > points_[i - 1])) {
      throw Error(ErrorKind::InvalidGrid, "grid points must be strictly increasing");
    }
  }
}

ProbabilityGrid build_grid(Eigen::Index m) {
  if (m < 2) throw Error(ErrorKind::InvalidGrid, "grid size must be >= 2, got " + std::to_string(m));
  Eigen::VectorXd p(m);
  for (Eigen::Index k = 0; k < m; ++k) p[k] = static_cast<double>(k + 1) / static_cast<double>(m);
  return ProbabilityGrid(std::move(p));
}

QuantileFunction::QuantileFunction(ProbabilityGrid grid, Eigen::VectorXd values)
    : grid_(std::move(grid)), values_(std::move(values)) {
  if (values_.size() != grid_.size()) {
    throw Error(ErrorKind::Shape, "quantile function has " + std::to_string(values_.size()) +
                                      " values on a grid of " + std::to_string(grid_.size()));
  }
  detail::check_finite(values_);
  for (Eigen::Index i = 1; i < values_.size(); ++i) {
    if (values_[i] < values_[i - 1]) {
      throw Error(ErrorKind::InvalidData,
                  "quantile function decreases at grid index " + std::to_string(i));
    }
  }
}

QuantileFunction QuantileFunction::project(ProbabilityGrid grid, const Eigen::VectorXd& values) {
  Eigen::VectorXd projected = pava_project(values);
  return QuantileFunction(std::move(grid), std::move(projected));
}

QuantileFunction empirical_quantile(std::span<const double> samples, const ProbabilityGrid& grid,
                                    QuantileRule rule) {
  if (samples.empty()) throw Error(ErrorKind::EmptyInput, "empirical_quantile: no samples");
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (!std::isfinite(samples[i])) {
      throw Error(ErrorKind::InvalidData,
                  "empirical_quantile: non-finite sample at index " + std::to_string(i));
    }
  }
  std::vector<double> x(samples.begin(), samples.end());
  std::sort(x.begin(), x.end());
  const auto n = static_cast<Eigen::Index>(x.size());

  Eigen::VectorXd q(grid.size());
  switch (rule) {
    case QuantileRule::Type7:
      for (Eigen::Index k = 0; k < grid.size(); ++k) {
        // 0-based position (n - 1) p of the 1-based h = (n - 1) p + 1.
        const double h = static_cast<double>(n - 1) * grid[k];
        const auto lo = std::min(static_cast<Eigen::Index>(std::floor(h)), n - 1);
        const double frac = h - static_cast<double>(lo);
        q[k] = (lo + 1 < n) ? x[lo] + frac * (x[lo + 1] - x[lo]) : x[lo];
      }
      break;
  }
  // Rounding in the interpolation can leave a last-bit decrease.
  for (Eigen::Index k = 0; k < q.size(); ++k) {
    q[k] = std::clamp(q[k], x.front(), x.back());
    if (k > 0) q[k] = std::max(q[k], q[k - 1]);
  }
  return QuantileFunction(grid, std::move(q));
}

}  // namespace qfreg
