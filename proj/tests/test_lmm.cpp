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
#include "qfreg/lmm.hpp"

using namespace qfreg;

namespace {

constexpr double kTwoPi = 6.283185307179586;

struct Data {
  Eigen::MatrixXd X;
  Eigen::MatrixXd Z;
  std::vector<long> group;
  std::vector<double> visit;
  Eigen::VectorXd y;
};

// Balanced one-way layout: y_ij = mu + a_i + e_ij.
Data one_way(std::mt19937_64& rng, int groups, int per_group, double tau, double sigma) {
  std::normal_distribution<double> normal;
  Data d;
  const int n = groups * per_group;
  d.X = Eigen::MatrixXd::Ones(n, 1);
  d.Z = Eigen::MatrixXd::Ones(n, 1);
  d.y.resize(n);
  for (int i = 0; i < groups; ++i) {
    const double a = tau * normal(rng);
    for (int j = 0; j < per_group; ++j) {
      d.y[i * per_group + j] = 3.0 + a + sigma * normal(rng);
      d.group.push_back(i);
      d.visit.push_back(j + 1.0);
    }
  }
  return d;
}

// Unbalanced random intercept and slope data with one covariate.
Data slopes(std::mt19937_64& rng, int groups) {
  std::normal_distribution<double> normal;
  std::uniform_int_distribution<int> visits(2, 7);
  Data d;
  std::vector<double> x;
  std::vector<double> y;
  for (int i = 0; i < groups; ++i) {
    const double x_i = normal(rng);
    const double u0 = 2.0 * normal(rng);
    const double u1 = 0.5 * normal(rng) + 0.2 * u0;
    const int J = visits(rng);
    for (int j = 1; j <= J; ++j) {
      d.group.push_back(100 - 3 * i);
      d.visit.push_back(j);
      x.push_back(x_i);
      y.push_back(1.0 + 0.5 * x_i + 0.3 * j + u0 + u1 * j + normal(rng));
    }
  }
  const auto n = static_cast<Eigen::Index>(y.size());
  d.X.resize(n, 3);
  d.Z.resize(n, 2);
  d.y = Eigen::Map<Eigen::VectorXd>(y.data(), n);
  for (Eigen::Index r = 0; r < n; ++r) {
    d.X.row(r) << 1.0, x[static_cast<std::size_t>(r)], d.visit[static_cast<std::size_t>(r)];
    d.Z.row(r) << 1.0, d.visit[static_cast<std::size_t>(r)];
  }
  return d;
}

MixedModelSpec spec_of(const Data& d) { return MixedModelSpec(d.X, d.Z, d.group); }

// Dense covariance of all observations for given G and sigma2.
Eigen::MatrixXd dense_v(const Data& d, const Eigen::MatrixXd& G, double sigma2) {
  const Eigen::Index n = d.X.rows();
  Eigen::MatrixXd V = sigma2 * Eigen::MatrixXd::Identity(n, n);
  for (Eigen::Index a = 0; a < n; ++a) {
    for (Eigen::Index b = 0; b < n; ++b) {
      if (d.group[static_cast<std::size_t>(a)] == d.group[static_cast<std::size_t>(b)]) {
        V(a, b) += d.Z.row(a) * G * d.Z.row(b).transpose();
      }
    }
  }
  return V;
}

// Profiled REML deviance straight from the dense marginal covariance.
double dense_deviance(const Data& d, const Eigen::VectorXd& theta) {
  const Eigen::MatrixXd Lambda = relative_factor(theta);
  const Eigen::MatrixXd H = dense_v(d, Lambda * Lambda.transpose(), 1.0);
  const Eigen::LLT<Eigen::MatrixXd> llt(H);
  const Eigen::MatrixXd HiX = llt.solve(d.X);
  const Eigen::MatrixXd XtHiX = d.X.transpose() * HiX;
  const Eigen::VectorXd beta = XtHiX.ldlt().solve(HiX.transpose() * d.y);
  const Eigen::VectorXd r = d.y - d.X * beta;
  const double nl = static_cast<double>(d.X.rows() - d.X.cols());
  const double quad = r.dot(llt.solve(r));
  const double logdet_h = 2.0 * llt.matrixLLT().diagonal().array().log().sum();
  const double logdet_a = std::log(XtHiX.determinant());
  const double logdet_x = std::log((d.X.transpose() * d.X).determinant());
  return logdet_h + logdet_a - logdet_x + nl * (1.0 + std::log(kTwoPi * quad / nl));
}

Eigen::VectorXd gls_beta(const Data& d, const VarianceComponents& vc) {
  const Eigen::MatrixXd V = dense_v(d, vc.G, vc.sigma2);
  const Eigen::LLT<Eigen::MatrixXd> llt(V);
  const Eigen::MatrixXd ViX = llt.solve(d.X);
  return (d.X.transpose() * ViX).ldlt().solve(ViX.transpose() * d.y);
}

struct Anova {
  double msb;
  double msw;
  double sst;
};

Anova anova(const Data& d, int groups, int per_group) {
  const double grand = d.y.mean();
  double ssb = 0.0;
  double ssw = 0.0;
  for (int i = 0; i < groups; ++i) {
    const double m = d.y.segment(i * per_group, per_group).mean();
    ssb += per_group * (m - grand) * (m - grand);
    ssw += (d.y.segment(i * per_group, per_group).array() - m).square().sum();
  }
  return {ssb / (groups - 1), ssw / (groups * (per_group - 1)), ssb + ssw};
}

}  // namespace

TEST(MixedModelSpec, Validation) {
  const Eigen::MatrixXd X = Eigen::MatrixXd::Ones(4, 2);
  const Eigen::MatrixXd Z = Eigen::MatrixXd::Ones(4, 1);
  const std::vector<long> g = {1, 1, 2, 2};
  try {
    MixedModelSpec s(X, Z, g);
    FAIL() << "rank deficient design accepted";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::RankDeficient);
  }
  Eigen::MatrixXd X2(4, 2);
  X2 << 1, 0, 1, 1, 1, 2, 1, 3;
  EXPECT_THROW(MixedModelSpec(X2, Z, std::vector<long>{1, 2}), Error);
  EXPECT_THROW(MixedModelSpec(X2, Eigen::MatrixXd::Zero(4, 1), g), Error);
  const MixedModelSpec s(X2, Z, std::vector<long>{9, 9, 4, 4});
  EXPECT_EQ(s.n_groups(), 2);
  EXPECT_EQ(s.labels(), (std::vector<long>{4, 9}));
  EXPECT_EQ(s.group()[0], 1);
}

TEST(VarianceComponents, ThetaRoundTrip) {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> normal;
  for (int rep = 0; rep < 200; ++rep) {
    const Eigen::Vector3d theta(normal(rng), normal(rng), normal(rng));
    const double sigma2 = std::exp(normal(rng));
    const VarianceComponents vc = components_from_theta(theta, sigma2);
    const Eigen::VectorXd back = theta_from_components(vc.G, sigma2);
    for (int i = 0; i < 3; ++i) ASSERT_NEAR(back[i], theta[i], 1e-12 * (1.0 + std::abs(theta[i])));
    const Eigen::VectorXd t1 = Eigen::VectorXd::Constant(1, normal(rng));
    ASSERT_NEAR(theta_from_components(components_from_theta(t1, sigma2).G, sigma2)[0], t1[0], 1e-12);
  }
  const Eigen::VectorXd zero = theta_from_components(Eigen::MatrixXd::Zero(1, 1), 1.0);
  EXPECT_TRUE(std::isinf(zero[0]) && zero[0] < 0);
  EXPECT_EQ(relative_factor(zero)(0, 0), 0.0);
}

TEST(RemlDeviance, OlsLimit) {
  std::mt19937_64 rng(2);
  Data d = one_way(rng, 12, 4, 0.0, 1.5);
  d.Z = Eigen::MatrixXd(d.X.rows(), 2);
  d.Z.col(0).setOnes();
  d.Z.col(1) = Eigen::Map<Eigen::VectorXd>(d.visit.data(), static_cast<Eigen::Index>(d.visit.size()));
  const double n = static_cast<double>(d.y.size());
  const double rss = (d.y.array() - d.y.mean()).square().sum();
  const double closed = (n - 1.0) * (1.0 + std::log(kTwoPi * rss / (n - 1.0)));
  EXPECT_NEAR(profiled_reml_deviance(spec_of(d), d.y, Eigen::Vector3d(-30, 0, -30)), closed, 1e-9);
  const double inf = -std::numeric_limits<double>::infinity();
  EXPECT_NEAR(profiled_reml_deviance(spec_of(d), d.y, Eigen::Vector3d(inf, 0, inf)), closed, 1e-9);
}

TEST(RemlDeviance, MatchesDenseComputation) {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> normal;
  const Data d = slopes(rng, 25);
  const MixedModelSpec s = spec_of(d);
  for (int rep = 0; rep < 30; ++rep) {
    const Eigen::Vector3d theta(normal(rng), normal(rng), normal(rng) - 1.0);
    const double want = dense_deviance(d, theta);
    ASSERT_NEAR(profiled_reml_deviance(s, d.y, theta), want, 1e-9 * std::abs(want));
  }
}

TEST(RemlDeviance, AnovaPointIsMinimum) {
  std::mt19937_64 rng(4);
  std::normal_distribution<double> normal;
  const Data d = one_way(rng, 20, 5, 1.2, 1.0);
  const Anova a = anova(d, 20, 5);
  ASSERT_GT(a.msb, a.msw);
  const double tau2 = (a.msb - a.msw) / 5.0;
  const Eigen::VectorXd theta = Eigen::VectorXd::Constant(1, 0.5 * std::log(tau2 / a.msw));
  const MixedModelSpec s = spec_of(d);
  const double at = profiled_reml_deviance(s, d.y, theta);
  for (int rep = 0; rep < 100; ++rep) {
    const Eigen::VectorXd t = theta + Eigen::VectorXd::Constant(1, 0.5 * normal(rng));
    ASSERT_LE(at, profiled_reml_deviance(s, d.y, t) + 1e-12);
  }
}

TEST(RemlDeviance, ScaleOffset) {
  std::mt19937_64 rng(5);
  const Data d = slopes(rng, 30);
  const MixedModelSpec s = spec_of(d);
  const Eigen::Vector3d theta(0.2, 0.1, -1.0);
  const double nl = static_cast<double>(d.X.rows() - d.X.cols());
  const double offset = 2.0 * nl * std::log(2.0);
  EXPECT_NEAR(profiled_reml_deviance(s, 2.0 * d.y, theta) - profiled_reml_deviance(s, d.y, theta), offset, 1e-8);
  const LMMFit a = fit_reml(s, d.y);
  const LMMFit b = fit_reml(s, 2.0 * d.y);
  for (int i = 0; i < 3; ++i) EXPECT_NEAR(a.components.theta[i], b.components.theta[i], 1e-5);
}

TEST(FitReml, BalancedOneWayMatchesAnova) {
  std::mt19937_64 rng(6);
  std::uniform_int_distribution<int> groups(4, 30);
  std::uniform_int_distribution<int> per(2, 8);
  std::uniform_real_distribution<double> tau(0.0, 2.0);
  int boundary = 0;
  for (int rep = 0; rep < 60; ++rep) {
    const int a = groups(rng);
    const int J = per(rng);
    const Data d = one_way(rng, a, J, tau(rng), 1.0);
    const Anova an = anova(d, a, J);
    double g_want = (an.msb - an.msw) / J;
    double s_want = an.msw;
    if (g_want <= 0.0) {
      g_want = 0.0;
      s_want = an.sst / (a * J - 1);
      ++boundary;
    }
    const LMMFit fit = fit_reml(spec_of(d), d.y);
    EXPECT_NEAR(fit.components.sigma2, s_want, 1e-6 * s_want) << "rep " << rep;
    EXPECT_NEAR(fit.components.G(0, 0), g_want, 1e-6 * g_want) << "rep " << rep;
    EXPECT_NEAR(fit.beta[0], d.y.mean(), 1e-10 * std::abs(d.y.mean()));
  }
  EXPECT_GT(boundary, 0);
}

TEST(FitReml, NoiselessData) {
  Eigen::MatrixXd X(24, 2);
  std::vector<long> g;
  for (int r = 0; r < 24; ++r) {
    X(r, 0) = 1.0;
    X(r, 1) = 0.25 * r - 1.0;
    g.push_back(r / 4);
  }
  const Eigen::VectorXd y = X * Eigen::Vector2d(1, 2);
  const MixedModelSpec s(X, Eigen::MatrixXd::Ones(24, 1), g);
  const LMMFit fit = fit_reml(s, y);
  EXPECT_NEAR(fit.beta[0], 1.0, 1e-8);
  EXPECT_NEAR(fit.beta[1], 2.0, 1e-8);
  EXPECT_LT(fit.components.sigma2, 1e-10);
  EXPECT_LT(fit.components.G(0, 0), 1e-10);
}

TEST(FitReml, BetaIsGlsAtEstimate) {
  std::mt19937_64 rng(7);
  for (int rep = 0; rep < 5; ++rep) {
    const Data d = slopes(rng, 40);
    const LMMFit fit = fit_reml(spec_of(d), d.y);
    const Eigen::VectorXd want = gls_beta(d, fit.components);
    for (int i = 0; i < 3; ++i) EXPECT_NEAR(fit.beta[i], want[i], 1e-8 * (1.0 + std::abs(want[i])));
    EXPECT_TRUE(fit.vcov_beta.isApprox(fit.vcov_beta.transpose(), 1e-12));
    EXPECT_GE(Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(fit.vcov_beta).eigenvalues().minCoeff(), 0.0);
    EXPECT_GE(Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(fit.components.G).eigenvalues().minCoeff(), -1e-10);
    EXPECT_GT(fit.components.sigma2, 0.0);
  }
}

TEST(FitReml, LocalOptimality) {
  std::mt19937_64 rng(8);
  std::normal_distribution<double> normal;
  for (int rep = 0; rep < 5; ++rep) {
    const Data d = slopes(rng, 50);
    const MixedModelSpec s = spec_of(d);
    const LMMFit fit = fit_reml(s, d.y);
    const double at = profiled_reml_deviance(s, d.y, fit.components.theta);
    EXPECT_NEAR(at, fit.reml_deviance, 1e-9 * std::abs(at));
    const double start = profiled_reml_deviance(s, d.y, Eigen::Vector3d::Zero());
    EXPECT_LE(fit.reml_deviance, start);
    for (int k = 0; k < 50; ++k) {
      Eigen::Vector3d delta(normal(rng), normal(rng), normal(rng));
      delta *= 0.1 / delta.norm();
      ASSERT_LE(at, profiled_reml_deviance(s, d.y, fit.components.theta + delta) + 1e-9);
    }
  }
}

TEST(FitReml, LocationScaleEquivariance) {
  std::mt19937_64 rng(9);
  const Data d = slopes(rng, 40);
  const MixedModelSpec s = spec_of(d);
  const double a = 3.0;
  const double b = -20.0;
  const LMMFit f = fit_reml(s, d.y);
  const LMMFit g = fit_reml(s, (a * d.y.array() + b).matrix());
  EXPECT_NEAR(g.beta[0], a * f.beta[0] + b, 1e-6 * std::abs(g.beta[0]));
  EXPECT_NEAR(g.beta[1], a * f.beta[1], 1e-6 * std::abs(g.beta[1]));
  EXPECT_NEAR(g.beta[2], a * f.beta[2], 1e-6 * std::abs(g.beta[2]));
  EXPECT_NEAR(g.components.sigma2, a * a * f.components.sigma2, 1e-6 * g.components.sigma2);
  EXPECT_TRUE(g.components.G.isApprox(a * a * f.components.G, 1e-6));
}

TEST(FitReml, PermutationInvariance) {
  std::mt19937_64 rng(10);
  const Data d = slopes(rng, 35);
  std::vector<Eigen::Index> order(static_cast<std::size_t>(d.y.size()));
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  Data p = d;
  for (std::size_t r = 0; r < order.size(); ++r) {
    const auto src = static_cast<std::size_t>(order[r]);
    p.X.row(static_cast<Eigen::Index>(r)) = d.X.row(order[r]);
    p.Z.row(static_cast<Eigen::Index>(r)) = d.Z.row(order[r]);
    p.y[static_cast<Eigen::Index>(r)] = d.y[order[r]];
    p.group[r] = d.group[src];
  }
  const LMMFit a = fit_reml(spec_of(d), d.y);
  const LMMFit b = fit_reml(spec_of(p), p.y);
  EXPECT_LE((a.beta - b.beta).cwiseAbs().maxCoeff(), 1e-10);
  EXPECT_LE((a.components.G - b.components.G).cwiseAbs().maxCoeff(), 1e-10);
  EXPECT_NEAR(a.components.sigma2, b.components.sigma2, 1e-10);
  EXPECT_LE((a.blups - b.blups).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(FitReml, TwoComponentGridOracle) {
  // Coarse grid search over theta using the dense deviance never beats the fit.
  std::mt19937_64 rng(11);
  const Data d = slopes(rng, 20);
  const LMMFit fit = fit_reml(spec_of(d), d.y);
  const double best = dense_deviance(d, fit.components.theta);
  for (double t0 = -3.0; t0 <= 2.0; t0 += 0.5) {
    for (double t1 = -1.0; t1 <= 1.0; t1 += 0.25) {
      for (double t2 = -4.0; t2 <= 1.0; t2 += 0.5) {
        ASSERT_LE(best, dense_deviance(d, Eigen::Vector3d(t0, t1, t2)) + 1e-9);
      }
    }
  }
}

TEST(PredictBlup, ZeroVarianceGivesOls) {
  std::mt19937_64 rng(12);
  const Data d = slopes(rng, 20);
  const MixedModelSpec s = spec_of(d);
  const double inf = -std::numeric_limits<double>::infinity();
  const LMMFit fit = fit_at_theta(s, d.y, Eigen::Vector3d(inf, 0.0, inf));
  const Eigen::VectorXd ols = d.X * d.X.colPivHouseholderQr().solve(d.y);
  EXPECT_LE((predict_blup(fit, s) - ols).cwiseAbs().maxCoeff(), 1e-9);
  const RSquared r2 = r_squared_components(fit, s);
  EXPECT_DOUBLE_EQ(r2.marginal, r2.conditional);
}

TEST(PredictBlup, GlsNormalEquations) {
  std::mt19937_64 rng(13);
  const Data d = slopes(rng, 30);
  const MixedModelSpec s = spec_of(d);
  const LMMFit fit = fit_reml(s, d.y);
  const Eigen::MatrixXd V = dense_v(d, fit.components.G, fit.components.sigma2);
  const Eigen::VectorXd r = d.y - d.X * fit.beta;
  const Eigen::VectorXd score = d.X.transpose() * V.llt().solve(r);
  EXPECT_LE(score.cwiseAbs().maxCoeff(), 1e-6);
}

TEST(PredictBlup, ShrinkageFactor) {
  std::mt19937_64 rng(14);
  std::normal_distribution<double> normal;
  std::uniform_int_distribution<int> per(1, 9);
  std::vector<long> g;
  std::vector<double> y;
  for (int i = 0; i < 15; ++i) {
    const double u = 2.0 * normal(rng);
    const int J = per(rng);
    for (int j = 0; j < J; ++j) {
      g.push_back(i);
      y.push_back(5.0 + u + normal(rng));
    }
  }
  const auto n = static_cast<Eigen::Index>(y.size());
  const Eigen::VectorXd yv = Eigen::Map<Eigen::VectorXd>(y.data(), n);
  const MixedModelSpec s(Eigen::MatrixXd::Ones(n, 1), Eigen::MatrixXd::Ones(n, 1), g);
  const LMMFit fit = fit_at_theta(s, yv, Eigen::VectorXd::Constant(1, 0.4));
  const double G = fit.components.G(0, 0);
  const double s2 = fit.components.sigma2;
  for (int i = 0; i < 15; ++i) {
    double sum = 0.0;
    int J = 0;
    for (Eigen::Index r = 0; r < n; ++r) {
      if (g[static_cast<std::size_t>(r)] == i) {
        sum += yv[r];
        ++J;
      }
    }
    const double shrink = J * G / (J * G + s2);
    EXPECT_NEAR(fit.blups(i, 0), shrink * (sum / J - fit.beta[0]), 1e-10);
  }
  // Huge relative variance leaves the group mean almost unshrunk.
  const LMMFit wide = fit_at_theta(s, yv, Eigen::VectorXd::Constant(1, 12.0));
  const Eigen::VectorXd fitted = predict_blup(wide, s);
  for (Eigen::Index r = 0; r < n; ++r) {
    double sum = 0.0;
    int J = 0;
    for (Eigen::Index q = 0; q < n; ++q) {
      if (g[static_cast<std::size_t>(q)] == g[static_cast<std::size_t>(r)]) {
        sum += yv[q];
        ++J;
      }
    }
    EXPECT_NEAR(fitted[r], sum / J, 1e-6);
  }
}

TEST(RSquared, PureNoiseAndBounds) {
  std::mt19937_64 rng(15);
  std::normal_distribution<double> normal;
  const int n = 5000;
  Eigen::MatrixXd X(n, 2);
  Eigen::VectorXd y(n);
  std::vector<long> g;
  for (int r = 0; r < n; ++r) {
    X(r, 0) = 1.0;
    X(r, 1) = normal(rng);
    y[r] = normal(rng);
    g.push_back(r / 5);
  }
  const MixedModelSpec s(X, Eigen::MatrixXd::Ones(n, 1), g);
  const RSquared r2 = r_squared_components(fit_reml(s, y), s);
  EXPECT_LT(r2.marginal, 0.003);
  EXPECT_GE(r2.marginal, 0.0);
  EXPECT_GE(r2.conditional, r2.marginal);
  EXPECT_LE(r2.conditional, 1.0);
}

TEST(RSquared, UndefinedForConstantResponse) {
  const Eigen::VectorXd y = Eigen::VectorXd::Constant(8, 2.0);
  const std::vector<long> g = {0, 0, 1, 1, 2, 2, 3, 3};
  const MixedModelSpec s(Eigen::MatrixXd::Ones(8, 1), Eigen::MatrixXd::Ones(8, 1), g);
  try {
    r_squared_components(fit_reml(s, y), s);
    FAIL() << "expected an undefined R-squared error";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::UndefinedRSquared);
  }
}
