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

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <vector>

#include "qfreg/error.hpp"
#include "qfreg/quantile.hpp"

using namespace qfreg;

namespace {

// Least-squares projection onto the monotone cone by projected gradient on
// the increment parameterisation x = A z, z = (x_1, d_2, ..., d_n), d >= 0.
Eigen::VectorXd projected_gradient_oracle(const Eigen::VectorXd& y) {
  const Eigen::Index n = y.size();
  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i) A.row(i).head(i + 1).setOnes();
  const Eigen::MatrixXd H = A.transpose() * A;
  const Eigen::VectorXd g0 = A.transpose() * y;
  const double step = 1.0 / H.eigenvalues().real().maxCoeff();
  Eigen::VectorXd z = Eigen::VectorXd::Zero(n);
  Eigen::VectorXd w = z;
  double t = 1.0;
  for (int it = 0; it < 20000; ++it) {
    Eigen::VectorXd next = w - step * (H * w - g0);
    for (Eigen::Index i = 1; i < n; ++i) next[i] = std::max(next[i], 0.0);
    const double t_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
    w = next + ((t - 1.0) / t_next) * (next - z);
    z = next;
    t = t_next;
  }
  return A * z;
}

std::vector<double> type7_by_hand(std::vector<double> x, double p) {
  std::sort(x.begin(), x.end());
  const double h = (static_cast<double>(x.size()) - 1.0) * p + 1.0;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const double frac = h - std::floor(h);
  const double hi = lo < x.size() ? x[lo] : x.back();
  return {x[lo - 1] + frac * (hi - x[lo - 1])};
}

}  // namespace

TEST(ProbabilityGrid, DefaultIsHundredPoints) {
  const ProbabilityGrid g;
  ASSERT_EQ(g.size(), 100);
  for (Eigen::Index k = 0; k < 100; ++k) EXPECT_DOUBLE_EQ(g[k], static_cast<double>(k + 1) / 100.0);
  EXPECT_TRUE(g == build_grid(100));
}

TEST(ProbabilityGrid, SmallGrids) {
  const ProbabilityGrid two = build_grid(2);
  EXPECT_DOUBLE_EQ(two[0], 0.5);
  EXPECT_DOUBLE_EQ(two[1], 1.0);
  const ProbabilityGrid four = build_grid(4);
  EXPECT_DOUBLE_EQ(four[0], 0.25);
  EXPECT_DOUBLE_EQ(four[2], 0.75);
  EXPECT_DOUBLE_EQ(four[3], 1.0);
}

TEST(ProbabilityGrid, RejectsBadPoints) {
  EXPECT_THROW(build_grid(1), Error);
  EXPECT_THROW(build_grid(0), Error);
  EXPECT_THROW(ProbabilityGrid(Eigen::Vector2d(0.5, 0.5)), Error);
  EXPECT_THROW(ProbabilityGrid(Eigen::Vector2d(0.0, 0.5)), Error);
  EXPECT_THROW(ProbabilityGrid(Eigen::Vector2d(0.5, 1.5)), Error);
  try {
    build_grid(1);
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::InvalidGrid);
  }
}

TEST(EmpiricalQuantile, ConstantSample) {
  const std::vector<double> x = {100, 100, 100};
  const QuantileFunction q = empirical_quantile(x, ProbabilityGrid());
  EXPECT_TRUE((q.values().array() == 100.0).all());
}

TEST(EmpiricalQuantile, TwoPointInterpolation) {
  const std::vector<double> x = {600, 40};
  const QuantileFunction q = empirical_quantile(x, ProbabilityGrid());
  EXPECT_DOUBLE_EQ(q[99], 600.0);
  EXPECT_NEAR(q[0], 45.6, 1e-12);
}

TEST(EmpiricalQuantile, MedianOfPermutation) {
  std::vector<double> x(100);
  std::iota(x.begin(), x.end(), 1.0);
  std::mt19937_64 rng(3);
  std::shuffle(x.begin(), x.end(), rng);
  const QuantileFunction q = empirical_quantile(x, ProbabilityGrid());
  EXPECT_NEAR(q[49], 50.5, 1e-12);
  for (Eigen::Index k = 0; k < 100; ++k) {
    EXPECT_NEAR(q[k], type7_by_hand(x, ProbabilityGrid()[k])[0], 1e-10);
  }
}

TEST(EmpiricalQuantile, SingleSample) {
  const std::vector<double> x = {7.5};
  const QuantileFunction q = empirical_quantile(x, build_grid(10));
  EXPECT_TRUE((q.values().array() == 7.5).all());
}

TEST(EmpiricalQuantile, RejectsEmptyAndNonFinite) {
  EXPECT_THROW(empirical_quantile(std::vector<double>{}, ProbabilityGrid()), Error);
  EXPECT_THROW(empirical_quantile(std::vector<double>{1.0, NAN}, ProbabilityGrid()), Error);
}

TEST(EmpiricalQuantile, MonotoneAndEquivariant) {
  std::mt19937_64 rng(11);
  std::lognormal_distribution<double> draw(4.0, 0.6);
  std::uniform_int_distribution<int> size(1, 400);
  const ProbabilityGrid grid;
  for (int rep = 0; rep < 200; ++rep) {
    std::vector<double> x(static_cast<std::size_t>(size(rng)));
    for (auto& v : x) v = draw(rng);
    const QuantileFunction q = empirical_quantile(x, grid);
    for (Eigen::Index k = 1; k < grid.size(); ++k) ASSERT_LE(q[k - 1], q[k]);
    const double a = 2.5;
    const double b = -7.0;
    std::vector<double> y(x.size());
    std::transform(x.begin(), x.end(), y.begin(), [&](double v) { return a * v + b; });
    const QuantileFunction qy = empirical_quantile(y, grid);
    for (Eigen::Index k = 0; k < grid.size(); ++k) ASSERT_NEAR(qy[k], a * q[k] + b, 1e-9 * (1.0 + std::abs(qy[k])));
  }
}

TEST(QuantileFunction, ValidatesValues) {
  const ProbabilityGrid g = build_grid(3);
  EXPECT_NO_THROW(QuantileFunction(g, Eigen::Vector3d(1, 1, 2)));
  EXPECT_THROW(QuantileFunction(g, Eigen::Vector3d(1, 3, 2)), Error);
  EXPECT_THROW(QuantileFunction(g, Eigen::Vector3d(1, INFINITY, 2)), Error);
  EXPECT_THROW(QuantileFunction(g, Eigen::Vector2d(1, 2)), Error);
  const QuantileFunction p = QuantileFunction::project(g, Eigen::Vector3d(1, 3, 2));
  EXPECT_DOUBLE_EQ(p[1], 2.5);
  EXPECT_DOUBLE_EQ(p[2], 2.5);
}

TEST(Pava, HandExamples) {
  const Eigen::Vector3d a = pava_project(Eigen::Vector3d(1, 2, 3));
  EXPECT_EQ(a, Eigen::Vector3d(1, 2, 3));
  const Eigen::Vector2d b = pava_project(Eigen::Vector2d(2, 1));
  EXPECT_EQ(b, Eigen::Vector2d(1.5, 1.5));
  const Eigen::Vector4d c = pava_project(Eigen::Vector4d(1, 3, 2, 4));
  EXPECT_EQ(c, Eigen::Vector4d(1, 2.5, 2.5, 4));
}

TEST(Pava, Weighted) {
  // Pooling (3, 1) with weights (1, 3) gives the weighted mean 1.5.
  const Eigen::Vector2d v = pava_project(Eigen::Vector2d(3, 1), Eigen::Vector2d(1, 3));
  EXPECT_DOUBLE_EQ(v[0], 1.5);
  EXPECT_DOUBLE_EQ(v[1], 1.5);
  EXPECT_THROW(pava_project(Eigen::Vector2d(3, 1), Eigen::Vector2d(1, 0)), Error);
  EXPECT_THROW(pava_project(Eigen::Vector2d(3, 1), Eigen::Vector3d(1, 1, 1)), Error);
}

TEST(Pava, TiesUntouched) {
  const Eigen::VectorXd v = (Eigen::VectorXd(4) << 1, 1, 1, 2).finished();
  EXPECT_EQ(pava_project(v), v);
}

TEST(Pava, MatchesProjectedGradientOracle) {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> normal;
  for (int n = 1; n <= 6; ++n) {
    for (int rep = 0; rep < 40; ++rep) {
      Eigen::VectorXd y(n);
      for (auto& v : y) v = normal(rng);
      const Eigen::VectorXd got = pava_project(y);
      const Eigen::VectorXd want = projected_gradient_oracle(y);
      for (int i = 0; i < n; ++i) ASSERT_NEAR(got[i], want[i], 1e-8);
    }
  }
}

TEST(Pava, IdempotentAndMeanPreserving) {
  std::mt19937_64 rng(8);
  std::normal_distribution<double> normal;
  for (int rep = 0; rep < 300; ++rep) {
    Eigen::VectorXd y(1 + rep % 60);
    for (auto& v : y) v = normal(rng) * 10.0;
    const Eigen::VectorXd once = pava_project(y);
    const Eigen::VectorXd twice = pava_project(once);
    ASSERT_EQ(once, twice);
    ASSERT_NEAR(once.mean(), y.mean(), 1e-12 * (1.0 + y.cwiseAbs().maxCoeff()));
    for (Eigen::Index i = 1; i < once.size(); ++i) ASSERT_LE(once[i - 1], once[i]);
  }
}

TEST(Pava, AcceptsExpressions) {
  const Eigen::Vector3d a(3, 2, 1);
  const Eigen::VectorXd out = pava_project(2.0 * a);
  EXPECT_TRUE((out.array() == 4.0).all());
  const Eigen::RowVector3f f(1.0f, 0.0f, 2.0f);
  const Eigen::VectorXf outf = pava_project(f);
  EXPECT_FLOAT_EQ(outf[0], 0.5f);
}

TEST(IntegrateGrid, ClosedForms) {
  const ProbabilityGrid g;
  EXPECT_NEAR(integrate_grid(Eigen::VectorXd::Ones(100), g), 1.0, 1e-14);
  EXPECT_NEAR(integrate_grid(g.points(), g), 0.50005, 1e-14);
  EXPECT_EQ(integrate_grid(Eigen::VectorXd::Zero(100), g), 0.0);
  EXPECT_THROW(integrate_grid(Eigen::VectorXd::Ones(5), g), Error);
}

TEST(IntegrateGrid, LinearAndPositive) {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const ProbabilityGrid g = build_grid(37);
  for (int rep = 0; rep < 100; ++rep) {
    Eigen::VectorXd a(37);
    Eigen::VectorXd b(37);
    for (Eigen::Index i = 0; i < 37; ++i) {
      a[i] = u(rng);
      b[i] = u(rng) - 0.5;
    }
    EXPECT_GE(integrate_grid(a, g), 0.0);
    EXPECT_NEAR(integrate_grid(2.0 * a - 3.0 * b, g), 2.0 * integrate_grid(a, g) - 3.0 * integrate_grid(b, g), 1e-13);
  }
}
