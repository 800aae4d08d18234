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

#ifndef QFREG_QUANTILE_HPP
#define QFREG_QUANTILE_HPP

#include <Eigen/Dense>

#include <cmath>
#include <span>
#include <vector>

#include "qfreg/error.hpp"

namespace qfreg {

/// Strictly increasing probabilities in (0, 1] shared by every functional
/// response and coefficient curve.
class ProbabilityGrid {
 public:
  /// The 100-point grid {0.01, 0.02, ..., 1.00}.
  ProbabilityGrid();
  explicit ProbabilityGrid(Eigen::VectorXd points);

  Eigen::Index size() const noexcept { return points_.size(); }
  double operator[](Eigen::Index i) const { return points_[i]; }
  const Eigen::VectorXd& points() const noexcept { return points_; }

  friend bool operator==(const ProbabilityGrid& a, const ProbabilityGrid& b) {
    return a.points_.size() == b.points_.size() && a.points_ == b.points_;
  }

 private:
  Eigen::VectorXd points_;
};

/// {k/m : k = 1..m}; m must be at least 2.
ProbabilityGrid build_grid(Eigen::Index m);

/// Interpolation rules for empirical quantiles. Only the continuous
/// type-7 rule (linear interpolation between order statistics) exists today.
enum class QuantileRule { Type7 };

inline constexpr QuantileRule kDefaultQuantileRule = QuantileRule::Type7;

/// A nondecreasing, finite function on a probability grid.
class QuantileFunction {
 public:
  /// Throws InvalidData if values are non-finite or decreasing.
  QuantileFunction(ProbabilityGrid grid, Eigen::VectorXd values);

  /// Builds a valid quantile function from arbitrary grid values by
  /// projecting onto the nondecreasing cone.
  static QuantileFunction project(ProbabilityGrid grid, const Eigen::VectorXd& values);

  const ProbabilityGrid& grid() const noexcept { return grid_; }
  const Eigen::VectorXd& values() const noexcept { return values_; }
  double operator[](Eigen::Index i) const { return values_[i]; }

 private:
  ProbabilityGrid grid_;
  Eigen::VectorXd values_;
};

/// Empirical quantile of `samples` at every grid point.
QuantileFunction empirical_quantile(std::span<const double> samples, const ProbabilityGrid& grid,
                                    QuantileRule rule = kDefaultQuantileRule);

namespace detail {

template <typename Scalar, typename Weight>
Eigen::Matrix<Scalar, Eigen::Dynamic, 1> pava(const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>& y,
                                              const Weight& weight) {
  const Eigen::Index n = y.size();
  // Stack of pooled blocks: weighted mean, total weight, length.
  std::vector<Scalar> mean;
  std::vector<Scalar> total;
  std::vector<Eigen::Index> length;
  mean.reserve(n);
  total.reserve(n);
  length.reserve(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    Scalar m = y[i];
    Scalar w = weight(i);
    Eigen::Index len = 1;
    // Pool only on a strict decrease; ties already satisfy the constraint.
    while (!mean.empty() && mean.back() > m) {
      const Scalar wsum = total.back() + w;
      m = (total.back() * mean.back() + w * m) / wsum;
      w = wsum;
      len += length.back();
      mean.pop_back();
      total.pop_back();
      length.pop_back();
    }
    mean.push_back(m);
    total.push_back(w);
    length.push_back(len);
  }
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> out(n);
  Eigen::Index pos = 0;
  for (std::size_t b = 0; b < mean.size(); ++b) {
    out.segment(pos, length[b]).setConstant(mean[b]);
    pos += length[b];
  }
  return out;
}

template <typename Derived>
void check_finite(const Eigen::MatrixBase<Derived>& values) {
  for (Eigen::Index i = 0; i < values.size(); ++i) {
    if (!std::isfinite(static_cast<double>(values(i)))) {
      throw Error(ErrorKind::InvalidData, "non-finite value at index " + std::to_string(i));
    }
  }
}

}  // namespace detail

/// Least-squares projection onto nondecreasing vectors (pool adjacent
/// violators) with unit weights.
template <typename Derived>
Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, 1> pava_project(
    const Eigen::MatrixBase<Derived>& values) {
  using Scalar = typename Derived::Scalar;
  detail::check_finite(values);
  const Eigen::Matrix<Scalar, Eigen::Dynamic, 1> y = values.reshaped();
  return detail::pava(y, [](Eigen::Index) { return Scalar(1); });
}

/// Weighted projection; weights must be positive and match `values` in length.
template <typename Derived, typename WeightDerived>
Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, 1> pava_project(
    const Eigen::MatrixBase<Derived>& values, const Eigen::MatrixBase<WeightDerived>& weights) {
  using Scalar = typename Derived::Scalar;
  if (values.size() != weights.size()) {
    throw Error(ErrorKind::Shape, "pava_project: " + std::to_string(values.size()) + " values but " +
                                      std::to_string(weights.size()) + " weights");
  }
  detail::check_finite(values);
  for (Eigen::Index i = 0; i < weights.size(); ++i) {
    if (!(weights(i) > 0) || !std::isfinite(static_cast<double>(weights(i)))) {
      throw Error(ErrorKind::InvalidWeight, "pava_project: weight at index " + std::to_string(i) +
                                                " is not positive");
    }
  }
  const Eigen::Matrix<Scalar, Eigen::Dynamic, 1> y = values.reshaped();
  const Eigen::Matrix<Scalar, Eigen::Dynamic, 1> w = weights.reshaped().template cast<Scalar>();
  return detail::pava(y, [&w](Eigen::Index i) { return w[i]; });
}

/// Trapezoid rule over [p_1, p_m] plus a left rectangle on [0, p_1] using
/// the first value, so that the default grid integrates over [0, 1].
template <typename Derived>
typename Derived::Scalar integrate_grid(const Eigen::MatrixBase<Derived>& values,
                                        const ProbabilityGrid& grid) {
  using Scalar = typename Derived::Scalar;
  if (values.size() != grid.size()) {
    throw Error(ErrorKind::Shape, "integrate_grid: " + std::to_string(values.size()) +
                                      " values on a grid of " + std::to_string(grid.size()));
  }
  if (values.size() == 0) return Scalar(0);
  Scalar total = Scalar(grid[0]) * values(0);
  for (Eigen::Index i = 1; i < values.size(); ++i) {
    total += Scalar(0.5 * (grid[i] - grid[i - 1])) * (values(i) + values(i - 1));
  }
  return total;
}

}  // namespace qfreg

#endif  // QFREG_QUANTILE_HPP
