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

#include "qfreg/smoothing.hpp"

#include <cmath>
#include <sstream>

namespace qfreg {

std::string describe(const SmootherOptions& options) {
  if (options.kind == SmootherKind::Identity) return "identity";
  std::ostringstream os;
  os << "spline(";
  if (options.df) {
    os << "df=" << *options.df;
  } else {
    os << "gcv";
  }
  os << ")";
  return os.str();
}

CubicSmoothingSpline::CubicSmoothingSpline(const ProbabilityGrid& grid) : m_(grid.size()) {
  if (m_ < 3) {
    basis_ = Eigen::MatrixXd::Identity(m_, m_);
    penalty_ = Eigen::VectorXd::Zero(m_);
    return;
  }
  // Reinsch form: penalty K = Q R^{-1} Q' of the integrated squared second
  // derivative of the natural cubic spline interpolating the grid values.
  const Eigen::Index k = m_ - 2;
  Eigen::VectorXd h(m_ - 1);
  for (Eigen::Index i = 0; i + 1 < m_; ++i) h[i] = grid[i + 1] - grid[i];
  Eigen::MatrixXd Q = Eigen::MatrixXd::Zero(m_, k);
  Eigen::MatrixXd R = Eigen::MatrixXd::Zero(k, k);
  for (Eigen::Index j = 0; j < k; ++j) {
    Q(j, j) = 1.0 / h[j];
    Q(j + 1, j) = -1.0 / h[j] - 1.0 / h[j + 1];
    Q(j + 2, j) = 1.0 / h[j + 1];
    R(j, j) = (h[j] + h[j + 1]) / 3.0;
    if (j + 1 < k) {
      R(j, j + 1) = h[j + 1] / 6.0;
      R(j + 1, j) = h[j + 1] / 6.0;
    }
  }
  const Eigen::MatrixXd K = Q * R.llt().solve(Q.transpose());

  // The null space {1, p} is set up exactly and K is diagonalised on its
  // orthogonal complement, so constants and lines pass through unchanged.
  Eigen::MatrixXd N(m_, 2);
  N.col(0).setOnes();
  N.col(1) = grid.points();
  const Eigen::HouseholderQR<Eigen::MatrixXd> qr(N);
  const Eigen::MatrixXd full = qr.householderQ() * Eigen::MatrixXd::Identity(m_, m_);
  const Eigen::MatrixXd complement = full.rightCols(k);
  const Eigen::MatrixXd Kc = complement.transpose() * K * complement;
  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(0.5 * (Kc + Kc.transpose()));
  basis_.resize(m_, m_);
  basis_.leftCols(2) = full.leftCols(2);
  basis_.rightCols(k) = complement * eig.eigenvectors();
  penalty_.resize(m_);
  penalty_.head(2).setZero();
  penalty_.tail(k) = eig.eigenvalues().cwiseMax(0.0);
  const double top = penalty_.maxCoeff();
  const double smallest = std::max(penalty_.tail(k).minCoeff(), 1e-12 * top);
  log_lambda_lo_ = std::log(1e-3 / top);
  log_lambda_hi_ = std::log(1e4 / smallest);
}

Eigen::MatrixXd CubicSmoothingSpline::matrix(double lambda) const {
  const Eigen::VectorXd w = (1.0 + lambda * penalty_.array()).inverse();
  return basis_ * w.asDiagonal() * basis_.transpose();
}

double CubicSmoothingSpline::degrees_of_freedom(double lambda) const {
  return (1.0 + lambda * penalty_.array()).inverse().sum();
}

double CubicSmoothingSpline::lambda_for_df(double df) const {
  const double m = static_cast<double>(m_);
  if (!(df > 2.0 && df < m) || m_ < 3) {
    throw Error(ErrorKind::InvalidSmoother,
                "spline degrees of freedom must lie in (2, " + std::to_string(m_) + "), got " + std::to_string(df));
  }
  // tr S is decreasing in log lambda.
  double lo = log_lambda_lo_ - 20.0;
  double hi = log_lambda_hi_ + 20.0;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (degrees_of_freedom(std::exp(mid)) > df) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return std::exp(0.5 * (lo + hi));
}

double CubicSmoothingSpline::gcv_score(const Eigen::VectorXd& y, double lambda) const {
  const Eigen::ArrayXd w = (1.0 + lambda * penalty_.array()).inverse();
  const Eigen::ArrayXd c = (basis_.transpose() * y).array();
  const double rss = ((1.0 - w) * c).square().sum();
  const double m = static_cast<double>(m_);
  const double denom = m - w.sum();
  return m * rss / (denom * denom);
}

double CubicSmoothingSpline::lambda_by_gcv(const Eigen::VectorXd& y) const {
  if (y.size() != m_) throw Error(ErrorKind::Shape, "curve length does not match the grid");
  constexpr int kGrid = 80;
  const double step = (log_lambda_hi_ - log_lambda_lo_) / (kGrid - 1);
  int best = 0;
  double best_score = gcv_score(y, std::exp(log_lambda_lo_));
  for (int i = 1; i < kGrid; ++i) {
    const double s = gcv_score(y, std::exp(log_lambda_lo_ + i * step));
    if (s < best_score) {
      best_score = s;
      best = i;
    }
  }
  // Golden-section refinement inside the neighbouring grid cells.
  double a = log_lambda_lo_ + std::max(best - 1, 0) * step;
  double b = log_lambda_lo_ + std::min(best + 1, kGrid - 1) * step;
  const double ratio = 0.5 * (std::sqrt(5.0) - 1.0);
  double c = b - ratio * (b - a);
  double d = a + ratio * (b - a);
  double fc = gcv_score(y, std::exp(c));
  double fd = gcv_score(y, std::exp(d));
  for (int it = 0; it < 60; ++it) {
    if (fc < fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - ratio * (b - a);
      fc = gcv_score(y, std::exp(c));
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + ratio * (b - a);
      fd = gcv_score(y, std::exp(d));
    }
  }
  const double refined = 0.5 * (a + b);
  return gcv_score(y, std::exp(refined)) <= best_score ? std::exp(refined)
                                                       : std::exp(log_lambda_lo_ + best * step);
}

Eigen::MatrixXd smoother_matrix(const SmootherOptions& options, const ProbabilityGrid& grid,
                                const Eigen::VectorXd& curve) {
  const Eigen::Index m = grid.size();
  if (options.kind == SmootherKind::Identity) return Eigen::MatrixXd::Identity(m, m);
  if (options.df && (!(*options.df > 0.0) || *options.df >= static_cast<double>(m))) {
    throw Error(ErrorKind::InvalidSmoother, "degrees of freedom must lie in (0, m)");
  }
  if (m < 3) return Eigen::MatrixXd::Identity(m, m);
  const CubicSmoothingSpline spline(grid);
  const double lambda = options.df ? spline.lambda_for_df(*options.df) : spline.lambda_by_gcv(curve);
  return spline.matrix(lambda);
}

}  // namespace qfreg
